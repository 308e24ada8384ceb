//! Deterministic artifact writing: fixed float formatting, CSV and JSON
//! emission, and the per-run manifest with content hashes.

use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::CliError;

/// 17 significant digits, '.' decimal separator; round-trips every f64.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn io_err(context: &str, e: std::io::Error) -> CliError {
    CliError::Io(format!("{context}: {e}"))
}

pub struct OutputWriter {
    dir: PathBuf,
    written: Vec<(String, String)>, // (file name, sha256 hex)
}

impl OutputWriter {
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir)
            .map_err(|e| io_err(&format!("cannot create output dir {}", dir.display()), e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn write_text(&mut self, name: &str, content: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        std::fs::write(&path, content)
            .map_err(|e| io_err(&format!("cannot write {}", path.display()), e))?;
        let mut h = Sha256::new();
        h.update(content.as_bytes());
        self.written.push((name.to_string(), hex_string(&h.finalize())));
        Ok(())
    }

    /// CSV with '\n' line endings; every cell already formatted by the caller.
    pub fn write_csv(
        &mut self,
        name: &str,
        header: &str,
        rows: &[Vec<String>],
    ) -> Result<(), CliError> {
        let mut out = String::with_capacity(rows.len() * 64 + header.len() + 1);
        out.push_str(header);
        out.push('\n');
        for row in rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        self.write_text(name, &out)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| CliError::Io(format!("cannot serialize {name}: {e}")))?;
        text.push('\n');
        self.write_text(name, &text)
    }

    /// The manifest is written last and hashes every data file of the run.
    /// It carries timestamps, so it is the one file excluded from the
    /// byte-identical determinism contract.
    pub fn write_manifest(
        &mut self,
        config: &ExperimentConfig,
        seed: u64,
        command: &str,
    ) -> Result<(), CliError> {
        #[derive(Serialize)]
        struct FileEntry {
            name: String,
            sha256: String,
        }
        #[derive(Serialize)]
        struct Manifest<'a> {
            version: &'static str,
            command: &'a str,
            seed: u64,
            timestamp_unix_ms: u128,
            config: &'a ExperimentConfig,
            files: Vec<FileEntry>,
        }
        let files = self
            .written
            .iter()
            .map(|(name, sha256)| FileEntry {
                name: name.clone(),
                sha256: sha256.clone(),
            })
            .collect();
        let manifest = Manifest {
            version: env!("CARGO_PKG_VERSION"),
            command,
            seed,
            timestamp_unix_ms: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_millis())
                .unwrap_or(0),
            config,
            files,
        };
        self.write_json("manifest.json", &manifest)
    }
}

fn hex_string(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}
