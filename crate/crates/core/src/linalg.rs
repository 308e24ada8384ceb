//! Small dense linear-algebra helpers shared across the crate.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Numerical tolerances used when validating matrix-valued inputs.
#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    /// Allowed negative slack on the minimum eigenvalue of a PSD matrix.
    pub psd: f64,
    /// Allowed elementwise asymmetry of a symmetric matrix.
    pub sym: f64,
    /// Allowed dynamics residual when checking a trajectory against the plant.
    pub dynamics: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            psd: 1e-8,
            sym: 1e-9,
            dynamics: 1e-9,
        }
    }
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    (m - m.transpose()).amax()
}

pub fn check_finite(m: &DMatrix<f64>, context: &'static str) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { context })
    }
}

pub fn check_finite_vec(v: &DVector<f64>, context: &'static str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { context })
    }
}

pub fn check_square(m: &DMatrix<f64>, context: &'static str) -> Result<()> {
    if m.nrows() == m.ncols() {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected: "square matrix".into(),
            actual: format!("{}x{}", m.nrows(), m.ncols()),
        })
    }
}

pub fn check_symmetric(m: &DMatrix<f64>, tol: f64, context: &'static str) -> Result<()> {
    check_square(m, context)?;
    let residual = asymmetry(m);
    if residual > tol {
        return Err(Error::NotSymmetric {
            context,
            residual,
            tol,
        });
    }
    Ok(())
}

pub fn eigenvalues_symmetric(m: &DMatrix<f64>) -> DVector<f64> {
    symmetrize(m).symmetric_eigenvalues()
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    eigenvalues_symmetric(m).min()
}

pub fn check_psd(m: &DMatrix<f64>, tol: f64, context: &'static str) -> Result<()> {
    let min_eig = min_eigenvalue(m);
    if min_eig < -tol {
        return Err(Error::NotPsd { context, min_eig });
    }
    Ok(())
}

pub fn check_pd(m: &DMatrix<f64>, context: &'static str) -> Result<()> {
    let min_eig = min_eigenvalue(m);
    if min_eig <= 0.0 {
        return Err(Error::NotPd { context, min_eig });
    }
    Ok(())
}

/// A square factor `L` with `L L^T = m` for PSD `m`.
///
/// Cholesky is attempted first; semidefinite inputs fall back to a symmetric
/// eigendecomposition with negative eigenvalues clipped at zero.
pub fn psd_factor(m: &DMatrix<f64>, tol_psd: f64, context: &'static str) -> Result<DMatrix<f64>> {
    check_finite(m, context)?;
    check_square(m, context)?;
    if let Some(chol) = nalgebra::Cholesky::new(symmetrize(m)) {
        return Ok(chol.l());
    }
    let eig = symmetrize(m).symmetric_eigen();
    let min_eig = eig.eigenvalues.min();
    if min_eig < -tol_psd {
        return Err(Error::NotPsd { context, min_eig });
    }
    let sqrt_diag = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|&l| l.max(0.0).sqrt()),
    );
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&sqrt_diag))
}

/// Symmetric PSD square root via eigendecomposition with clipping.
pub fn sqrtm_psd(m: &DMatrix<f64>, tol_psd: f64, context: &'static str) -> Result<DMatrix<f64>> {
    check_finite(m, context)?;
    let eig = symmetrize(m).symmetric_eigen();
    let min_eig = eig.eigenvalues.min();
    if min_eig < -tol_psd {
        return Err(Error::NotPsd { context, min_eig });
    }
    let sqrt_diag = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|&l| l.max(0.0).sqrt()),
    );
    let v = &eig.eigenvectors;
    Ok(v * DMatrix::from_diagonal(&sqrt_diag) * v.transpose())
}

pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Sum of the positive eigenvalues of a symmetric matrix.
pub fn positive_eigenvalue_sum(m: &DMatrix<f64>) -> f64 {
    eigenvalues_symmetric(m)
        .iter()
        .filter(|&&l| l > 0.0)
        .sum()
}
