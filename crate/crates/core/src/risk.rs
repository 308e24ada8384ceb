//! Empirical VaR/CVaR estimators and worst-case CVaR over moment ambiguity
//! sets.
//!
//! The general worst-case CVaR of a quadratic loss is evaluated through a
//! one-dimensional convex dual: for fixed `s` the inner semidefinite program
//! `min { Tr(Omega M) : M >= H(s), M >= 0 }` collapses to the sum of positive
//! eigenvalues of `L^T H(s) L` with `Omega = L L^T`, and the outer problem is
//! minimized by bracket expansion plus ternary search. The matrix variable
//! never materializes.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{check_psd, positive_eigenvalue_sum, psd_factor, symmetrize, Tolerances};
use crate::uncertainty::SecondMomentMatrix;

/// Risk level `alpha` in `(0, 1]`; `alpha = 1` collapses CVaR to the mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskLevel(f64);

impl RiskLevel {
    pub fn new(alpha: f64) -> Result<Self> {
        if alpha > 0.0 && alpha <= 1.0 {
            Ok(Self(alpha))
        } else {
            Err(Error::InvalidRiskLevel { value: alpha })
        }
    }

    /// Worst-case CVaR formulas require `alpha` strictly inside `(0, 1)`.
    pub fn strict(alpha: f64) -> Result<Self> {
        if alpha > 0.0 && alpha < 1.0 {
            Ok(Self(alpha))
        } else {
            Err(Error::RiskLevelNotStrict { value: alpha })
        }
    }

    pub fn value(&self) -> f64 {
        self.0
    }

    fn require_strict(&self) -> Result<()> {
        if self.0 < 1.0 {
            Ok(())
        } else {
            Err(Error::RiskLevelNotStrict { value: self.0 })
        }
    }
}

/// Nonempty finite loss samples.
#[derive(Debug, Clone)]
pub struct SampleSet {
    values: Vec<f64>,
}

impl SampleSet {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptySampleSet);
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                context: "SampleSet",
            });
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

/// Order statistic at the empirical `(1 - alpha)`-quantile.
pub fn empirical_var(samples: &SampleSet, alpha: RiskLevel) -> f64 {
    let n = samples.len();
    let mut sorted = samples.values().to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    // the 1e-9 slack keeps exact products like 0.8 * 10 from ceiling to 9
    let pos = ((1.0 - alpha.value()) * n as f64 - 1e-9).ceil() as usize;
    sorted[pos.clamp(1, n) - 1]
}

/// Exact minimizer of the Rockafellar-Uryasev objective via order statistics:
/// `VaR + (1 / (alpha n)) * sum (z_i - VaR)^+`.
pub fn empirical_cvar(samples: &SampleSet, alpha: RiskLevel) -> f64 {
    let var = empirical_var(samples, alpha);
    let n = samples.len() as f64;
    let excess: f64 = samples
        .values()
        .iter()
        .map(|&z| (z - var).max(0.0))
        .sum();
    var + excess / (alpha.value() * n)
}

/// Closed form for zero-mean quadratic losses: `(1/alpha) Tr(Sigma P)`.
pub fn worst_case_cvar_quadratic(
    sigma: &DMatrix<f64>,
    p: &DMatrix<f64>,
    alpha: RiskLevel,
) -> Result<f64> {
    alpha.require_strict()?;
    let tol = Tolerances::default();
    check_psd(sigma, tol.psd, "worst_case_cvar_quadratic.Sigma")?;
    check_psd(p, tol.psd, "worst_case_cvar_quadratic.P")?;
    Ok((sigma * p).trace() / alpha.value())
}

/// Worst-case CVaR of `g(e) = e'Pe + 2q'e + r` over the moment set encoded by
/// `Omega`, via the eigenvalue dual described in the module docs.
pub fn worst_case_cvar_quadratic_general(
    omega: &SecondMomentMatrix,
    p: &DMatrix<f64>,
    q: &DVector<f64>,
    r: f64,
    alpha: RiskLevel,
) -> Result<f64> {
    alpha.require_strict()?;
    let d = omega.dim();
    if p.nrows() != d || p.ncols() != d || q.len() != d {
        return Err(Error::DimensionMismatch {
            context: "worst_case_cvar_quadratic_general",
            expected: format!("P {d}x{d}, q len {d}"),
            actual: format!("P {}x{}, q len {}", p.nrows(), p.ncols(), q.len()),
        });
    }
    let tol = Tolerances::default();
    check_psd(p, tol.psd, "worst_case_cvar_quadratic_general.P")?;
    let l = psd_factor(omega.omega(), tol.psd, "worst_case_cvar_quadratic_general.Omega")?;

    let a = alpha.value();
    let phi = |s: f64| -> f64 {
        let mut h = DMatrix::zeros(d + 1, d + 1);
        h.view_mut((0, 0), (d, d)).copy_from(p);
        for i in 0..d {
            h[(i, d)] = q[i];
            h[(d, i)] = q[i];
        }
        h[(d, d)] = r - s;
        let inner = symmetrize(&(l.transpose() * h * &l));
        s + positive_eigenvalue_sum(&inner) / a
    };

    let sigma = omega.cov_block();
    let q_sigma_q = (q.transpose() * &sigma * q)[(0, 0)].max(0.0);
    let b0 = 1.0
        + r.abs()
        + (&sigma * p).trace().abs()
        + 2.0 * q_sigma_q.sqrt() / a.min(1.0 - a + 1e-9);

    let (mut lo, mut hi) = (-b0, b0);
    // expand until the minimum of the convex dual is bracketed
    let mut expansions = 0;
    loop {
        let w = hi - lo;
        let m1 = lo + w / 3.0;
        let m2 = hi - w / 3.0;
        let grew_left = phi(lo) < phi(m1);
        let grew_right = phi(hi) < phi(m2);
        if !grew_left && !grew_right {
            break;
        }
        if grew_left {
            lo -= w;
        }
        if grew_right {
            hi += w;
        }
        expansions += 1;
        if expansions > 200 {
            return Err(Error::NoConvergence {
                context: "worst-case CVaR bracket expansion",
                max_iter: 200,
                residual: hi - lo,
            });
        }
    }

    let mut best = phi(0.5 * (lo + hi));
    for _ in 0..300 {
        let w = hi - lo;
        if w < 1e-9 * (1.0 + best.abs()) {
            break;
        }
        let m1 = lo + w / 3.0;
        let m2 = hi - w / 3.0;
        let f1 = phi(m1);
        let f2 = phi(m2);
        if f1 < f2 {
            hi = m2;
        } else {
            lo = m1;
        }
        best = best.min(f1.min(f2));
    }
    Ok(best)
}

/// Closed form for the pure linear loss `g(e) = 2 q' e` over a zero-mean
/// moment set: `2 sqrt(q' Sigma q) sqrt((1 - alpha) / alpha)`.
pub fn worst_case_cvar_linear(
    sigma: &DMatrix<f64>,
    q: &DVector<f64>,
    alpha: RiskLevel,
) -> Result<f64> {
    alpha.require_strict()?;
    check_psd(sigma, Tolerances::default().psd, "worst_case_cvar_linear.Sigma")?;
    if sigma.nrows() != q.len() {
        return Err(Error::DimensionMismatch {
            context: "worst_case_cvar_linear",
            expected: q.len().to_string(),
            actual: sigma.nrows().to_string(),
        });
    }
    let q_sigma_q = (q.transpose() * sigma * q)[(0, 0)].max(0.0);
    let a = alpha.value();
    Ok(2.0 * q_sigma_q.sqrt() * ((1.0 - a) / a).sqrt())
}
