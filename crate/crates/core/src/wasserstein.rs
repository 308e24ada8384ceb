//! Wasserstein ambiguity sets over empirical distributions and exact W2
//! distance between equal-size empirical measures.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{check_finite_vec, check_psd, sqrtm_psd, symmetrize, Tolerances};

/// A uniform mixture of Dirac measures at the stored atoms.
#[derive(Debug, Clone)]
pub struct EmpiricalDistribution {
    atoms: Vec<DVector<f64>>,
}

impl EmpiricalDistribution {
    pub fn new(atoms: Vec<DVector<f64>>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::EmptySampleSet);
        }
        let d = atoms[0].len();
        for a in &atoms {
            check_finite_vec(a, "EmpiricalDistribution.atoms")?;
            if a.len() != d {
                return Err(Error::DimensionMismatch {
                    context: "EmpiricalDistribution.atoms",
                    expected: d.to_string(),
                    actual: a.len().to_string(),
                });
            }
        }
        Ok(Self { atoms })
    }

    pub fn atoms(&self) -> &[DVector<f64>] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.atoms[0].len()
    }
}

/// All distributions within W2 distance `radius` of the empirical center.
#[derive(Debug, Clone)]
pub struct WassersteinAmbiguitySet {
    center: EmpiricalDistribution,
    radius: f64,
}

impl WassersteinAmbiguitySet {
    pub fn new(center: EmpiricalDistribution, radius: f64) -> Result<Self> {
        if !radius.is_finite() || radius < 0.0 {
            return Err(Error::NonFinite {
                context: "WassersteinAmbiguitySet.radius",
            });
        }
        Ok(Self { center, radius })
    }

    pub fn center(&self) -> &EmpiricalDistribution {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }
}

/// Exact W2 distance between two equal-size uniform empirical distributions,
/// via minimum-cost assignment on the squared-distance matrix.
pub fn w2_empirical(nu: &EmpiricalDistribution, mu: &EmpiricalDistribution) -> Result<f64> {
    if nu.len() != mu.len() {
        return Err(Error::LengthMismatch {
            context: "w2_empirical atom counts",
            expected: nu.len(),
            actual: mu.len(),
        });
    }
    if nu.dim() != mu.dim() {
        return Err(Error::DimensionMismatch {
            context: "w2_empirical",
            expected: nu.dim().to_string(),
            actual: mu.dim().to_string(),
        });
    }
    let m = nu.len();
    let mut cost = vec![vec![0.0; m]; m];
    for (i, x) in nu.atoms().iter().enumerate() {
        for (j, y) in mu.atoms().iter().enumerate() {
            cost[i][j] = (x - y).norm_squared();
        }
    }
    let total = assignment_min_cost(&cost);
    Ok((total / m as f64).max(0.0).sqrt())
}

/// Closed-form W2 between Gaussians; used as a validation oracle for the
/// empirical distance on sampled atom sets.
pub fn w2_gaussian(
    mu1: &DVector<f64>,
    sigma1: &DMatrix<f64>,
    mu2: &DVector<f64>,
    sigma2: &DMatrix<f64>,
) -> Result<f64> {
    let tol = Tolerances::default();
    check_psd(sigma1, tol.psd, "w2_gaussian.Sigma1")?;
    check_psd(sigma2, tol.psd, "w2_gaussian.Sigma2")?;
    if mu1.len() != mu2.len() || sigma1.nrows() != mu1.len() || sigma2.nrows() != mu2.len() {
        return Err(Error::DimensionMismatch {
            context: "w2_gaussian",
            expected: mu1.len().to_string(),
            actual: mu2.len().to_string(),
        });
    }
    let root2 = sqrtm_psd(sigma2, tol.psd, "w2_gaussian.Sigma2")?;
    let inner = symmetrize(&(&root2 * sigma1 * &root2));
    let cross = sqrtm_psd(&inner, 1e-6, "w2_gaussian.cross-term")?;
    let squared =
        (mu1 - mu2).norm_squared() + (sigma1 + sigma2 - 2.0 * cross).trace();
    Ok(squared.max(0.0).sqrt())
}

/// Boundary-inclusive membership: `W2(center, dist) <= radius`.
pub fn wasserstein_membership(
    dist: &EmpiricalDistribution,
    set: &WassersteinAmbiguitySet,
) -> Result<bool> {
    Ok(w2_empirical(set.center(), dist)? <= set.radius())
}

/// Minimum-cost perfect assignment on a square cost matrix (shortest
/// augmenting path with dual potentials, O(n^3)).
pub(crate) fn assignment_min_cost(cost: &[Vec<f64>]) -> f64 {
    let n = cost.len();
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut matched = vec![0usize; n + 1]; // matched[j] = row assigned to column j, 1-based
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        matched[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = matched[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[matched[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if matched[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            matched[j0] = matched[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    (1..=n).map(|j| cost[matched[j] - 1][j - 1]).sum()
}
