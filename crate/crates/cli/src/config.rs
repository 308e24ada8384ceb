//! Experiment configuration: parsing (TOML or JSON), validation with
//! field-path error messages, and conversion into core types.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use drcontrol::{CostSpec, DistributionModel, LinearSystem, MomentAmbiguitySet};

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: String,
    pub alpha: f64,
    #[serde(default = "default_percentiles")]
    pub percentiles: Vec<f64>,
    pub system: SystemBlock,
    pub moments: MomentsBlock,
    pub cost: CostBlock,
    pub sweep: SweepBlock,
    pub distributions: DistributionsBlock,
    #[serde(default)]
    pub validation: ValidationBlock,
}

fn default_percentiles() -> Vec<f64> {
    vec![5.0, 95.0]
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SystemBlock {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(rename = "D")]
    pub d: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MomentsBlock {
    pub mu_x0: Vec<f64>,
    #[serde(rename = "Sigma_x0")]
    pub sigma_x0: Vec<Vec<f64>>,
    #[serde(rename = "Sigma_w")]
    pub sigma_w: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CostBlock {
    #[serde(rename = "Q")]
    pub q: Vec<Vec<f64>>,
    #[serde(rename = "R")]
    pub r: Vec<Vec<f64>>,
    #[serde(rename = "Q_f")]
    pub q_f: Vec<Vec<f64>>,
    #[serde(rename = "T")]
    pub horizon: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SweepBlock {
    pub alphas: Vec<f64>,
    pub horizons: Vec<usize>,
    pub n_samples: usize,
    pub n_rollouts: usize,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum FamilyName {
    Gaussian,
    Laplacian,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DistributionsBlock {
    #[serde(rename = "true")]
    pub true_family: FamilyName,
    #[serde(rename = "worst")]
    pub worst_family: FamilyName,
}

/// Oracle tolerances used by the `validate` subcommand. Overridable so a
/// harness can demonstrate failure reporting.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ValidationBlock {
    pub trace_tol: f64,
    pub linear_tol: f64,
    pub w2_tol: f64,
    pub moment_tol: f64,
    pub pseudo_tol: f64,
}

impl Default for ValidationBlock {
    fn default() -> Self {
        Self {
            trace_tol: 1e-8,
            linear_tol: 1e-6,
            w2_tol: 1e-10,
            moment_tol: 0.07,
            pseudo_tol: 1e-10,
        }
    }
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

pub fn load(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
    let is_json = path
        .extension()
        .map(|e| e.eq_ignore_ascii_case("json"))
        .unwrap_or(false);
    let cfg: ExperimentConfig = if is_json {
        serde_json::from_str(&text).map_err(|e| config_err(format!("config parse error: {e}")))?
    } else {
        toml::from_str(&text).map_err(|e| config_err(format!("config parse error: {e}")))?
    };
    cfg.validate()?;
    Ok(cfg)
}

fn matrix(rows: &[Vec<f64>], field: &str) -> Result<DMatrix<f64>, CliError> {
    if rows.is_empty() {
        return Err(config_err(format!("{field}: matrix must be non-empty")));
    }
    let ncols = rows[0].len();
    if ncols == 0 {
        return Err(config_err(format!("{field}: rows must be non-empty")));
    }
    for (i, r) in rows.iter().enumerate() {
        if r.len() != ncols {
            return Err(config_err(format!(
                "{field}: row {i} has {} entries, expected {ncols}",
                r.len()
            )));
        }
        for (j, v) in r.iter().enumerate() {
            if !v.is_finite() {
                return Err(config_err(format!("{field}[{i}][{j}]: non-finite entry")));
            }
        }
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn vector(vals: &[f64], field: &str) -> Result<DVector<f64>, CliError> {
    if vals.is_empty() {
        return Err(config_err(format!("{field}: vector must be non-empty")));
    }
    for (i, v) in vals.iter().enumerate() {
        if !v.is_finite() {
            return Err(config_err(format!("{field}[{i}]: non-finite entry")));
        }
    }
    Ok(DVector::from_row_slice(vals))
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        // Building core types exercises all dimension/PSD/PD invariants;
        // failures are rewrapped with the offending field path.
        self.build_system()?;
        self.build_cost(self.cost.horizon)?;
        self.build_moment_sets()?;

        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(config_err(format!(
                "alpha: must lie in (0,1), got {}",
                self.alpha
            )));
        }
        for (i, a) in self.sweep.alphas.iter().enumerate() {
            if !(*a > 0.0 && *a < 1.0) {
                return Err(config_err(format!(
                    "sweep.alphas[{i}]: must lie in (0,1), got {a}"
                )));
            }
        }
        if self.sweep.alphas.is_empty() {
            return Err(config_err("sweep.alphas: must be non-empty"));
        }
        if self.sweep.horizons.is_empty() {
            return Err(config_err("sweep.horizons: must be non-empty"));
        }
        if self.sweep.n_samples < 1 {
            return Err(config_err("sweep.n_samples: must be >= 1"));
        }
        if self.sweep.n_rollouts < 1 {
            return Err(config_err("sweep.n_rollouts: must be >= 1"));
        }
        if self.percentiles.is_empty() {
            return Err(config_err("percentiles: must be non-empty"));
        }
        for (i, p) in self.percentiles.iter().enumerate() {
            if !(*p > 0.0 && *p < 100.0) {
                return Err(config_err(format!(
                    "percentiles[{i}]: must lie in (0,100), got {p}"
                )));
            }
        }
        if self.percentiles.windows(2).any(|w| w[0] >= w[1]) {
            return Err(config_err("percentiles: must be strictly ascending"));
        }
        Ok(())
    }

    pub fn build_system(&self) -> Result<LinearSystem, CliError> {
        let a = matrix(&self.system.a, "system.A")?;
        let b = matrix(&self.system.b, "system.B")?;
        let d = matrix(&self.system.d, "system.D")?;
        LinearSystem::new(a, b, d).map_err(|e| config_err(format!("system: {e}")))
    }

    pub fn build_cost(&self, horizon: usize) -> Result<CostSpec, CliError> {
        let q = matrix(&self.cost.q, "cost.Q")?;
        let r = matrix(&self.cost.r, "cost.R")?;
        let qf = matrix(&self.cost.q_f, "cost.Q_f")?;
        CostSpec::new(q.clone(), r, qf, horizon).map_err(|e| {
            let field = match &e {
                drcontrol::Error::NotPd { .. } => "cost.R",
                _ => "cost",
            };
            config_err(format!("{field}: {e}"))
        })
    }

    pub fn build_moment_sets(&self) -> Result<(MomentAmbiguitySet, MomentAmbiguitySet), CliError> {
        let mu0 = vector(&self.moments.mu_x0, "moments.mu_x0")?;
        let s0 = matrix(&self.moments.sigma_x0, "moments.Sigma_x0")?;
        let sw = matrix(&self.moments.sigma_w, "moments.Sigma_w")?;
        let x0 = MomentAmbiguitySet::new(mu0, s0)
            .map_err(|e| config_err(format!("moments.Sigma_x0: {e}")))?;
        let wdim = sw.nrows();
        let w = MomentAmbiguitySet::new(DVector::zeros(wdim), sw)
            .map_err(|e| config_err(format!("moments.Sigma_w: {e}")))?;
        Ok((x0, w))
    }

    pub fn model(&self, family: FamilyName, set: &MomentAmbiguitySet) -> DistributionModel {
        match family {
            FamilyName::Gaussian => DistributionModel::gaussian(set.clone()),
            FamilyName::Laplacian => DistributionModel::laplacian(set.clone()),
        }
    }
}
