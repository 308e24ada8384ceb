//! Moment-based ambiguity sets, matched-moment samplers and exact closed-loop
//! moment propagation.
//!
//! The two member families used throughout are the multivariate Gaussian and a
//! multivariate Laplacian realized as a Gaussian scale mixture with unit-mean
//! exponential mixing variable, so both have exactly the declared first two
//! moments while the Laplacian carries heavier tails (marginal excess
//! kurtosis 3).

use nalgebra::{DMatrix, DVector};
use rand::RngExt;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Exp1, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{
    check_finite, check_finite_vec, check_psd, check_symmetric, psd_factor, symmetrize, Tolerances,
};
use crate::linsys::{LinearSystem, Policy};

/// All distributions with a prescribed mean and covariance.
#[derive(Debug, Clone)]
pub struct MomentAmbiguitySet {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl MomentAmbiguitySet {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        Self::with_tolerances(mean, cov, &Tolerances::default())
    }

    pub fn with_tolerances(mean: DVector<f64>, cov: DMatrix<f64>, tol: &Tolerances) -> Result<Self> {
        check_finite_vec(&mean, "MomentAmbiguitySet.mean")?;
        check_finite(&cov, "MomentAmbiguitySet.cov")?;
        check_symmetric(&cov, tol.sym, "MomentAmbiguitySet.cov")?;
        check_psd(&cov, tol.psd, "MomentAmbiguitySet.cov")?;
        if cov.nrows() != mean.len() {
            return Err(Error::DimensionMismatch {
                context: "MomentAmbiguitySet",
                expected: format!("cov {0}x{0}", mean.len()),
                actual: format!("cov {}x{}", cov.nrows(), cov.ncols()),
            });
        }
        Ok(Self { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistributionFamily {
    Gaussian,
    Laplacian,
}

/// A concrete member of a moment ambiguity set.
#[derive(Debug, Clone)]
pub struct DistributionModel {
    family: DistributionFamily,
    moments: MomentAmbiguitySet,
}

impl DistributionModel {
    pub fn gaussian(moments: MomentAmbiguitySet) -> Self {
        Self {
            family: DistributionFamily::Gaussian,
            moments,
        }
    }

    pub fn laplacian(moments: MomentAmbiguitySet) -> Self {
        Self {
            family: DistributionFamily::Laplacian,
            moments,
        }
    }

    pub fn family(&self) -> DistributionFamily {
        self.family
    }

    pub fn moments(&self) -> &MomentAmbiguitySet {
        &self.moments
    }

    pub fn dim(&self) -> usize {
        self.moments.dim()
    }

    /// Draw one sample using a live RNG. The factor `l` must satisfy
    /// `l l^T = cov`; callers hold it to avoid refactorizing per draw.
    pub(crate) fn draw(&self, l: &DMatrix<f64>, rng: &mut ChaCha12Rng) -> DVector<f64> {
        let d = self.dim();
        let z = DVector::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
        match self.family {
            DistributionFamily::Gaussian => self.moments.mean() + l * z,
            DistributionFamily::Laplacian => {
                let w: f64 = rng.sample(Exp1);
                self.moments.mean() + (l * z) * w.sqrt()
            }
        }
    }

    pub(crate) fn factor(&self) -> Result<DMatrix<f64>> {
        psd_factor(self.moments.cov(), Tolerances::default().psd, "DistributionModel.cov")
    }

    pub fn sample(&self, rng: &RngSpec, count: usize) -> Result<Vec<DVector<f64>>> {
        let l = self.factor()?;
        let mut r = rng.rng();
        Ok((0..count).map(|_| self.draw(&l, &mut r)).collect())
    }
}

/// Seed plus stream id for reproducible, parallel-safe random number streams.
///
/// Distinct stream ids select distinct ChaCha streams under the same master
/// seed, so workers never share a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngSpec {
    pub seed: u64,
    pub stream: u64,
}

impl RngSpec {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    pub fn with_stream(&self, stream: u64) -> Self {
        Self {
            seed: self.seed,
            stream,
        }
    }

    pub fn offset(&self, delta: u64) -> Self {
        Self {
            seed: self.seed,
            stream: self.stream.wrapping_add(delta),
        }
    }

    pub fn rng(&self) -> ChaCha12Rng {
        let mut rng = ChaCha12Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

/// Gaussian samples `mean + L z` with `L L^T = cov`.
pub fn sample_gaussian(
    set: &MomentAmbiguitySet,
    rng: &RngSpec,
    count: usize,
) -> Result<Vec<DVector<f64>>> {
    DistributionModel::gaussian(set.clone()).sample(rng, count)
}

/// Laplacian samples `mean + sqrt(W) L z` with `W ~ Exp(1)`, `E[W] = 1`.
pub fn sample_laplacian(
    set: &MomentAmbiguitySet,
    rng: &RngSpec,
    count: usize,
) -> Result<Vec<DVector<f64>>> {
    DistributionModel::laplacian(set.clone()).sample(rng, count)
}

/// True iff the model's declared moments equal the set's within `tol`.
pub fn membership_check(
    dist: &DistributionModel,
    set: &MomentAmbiguitySet,
    tol: f64,
) -> Result<bool> {
    if dist.dim() != set.dim() {
        return Err(Error::DimensionMismatch {
            context: "membership_check",
            expected: set.dim().to_string(),
            actual: dist.dim().to_string(),
        });
    }
    let mean_err = (dist.moments().mean() - set.mean()).amax();
    let cov_err = (dist.moments().cov() - set.cov()).amax();
    Ok(mean_err <= tol && cov_err <= tol)
}

/// Exact first two moments of the closed-loop state over the horizon.
#[derive(Debug, Clone)]
pub struct MomentTrajectory {
    means: Vec<DVector<f64>>,
    covs: Vec<DMatrix<f64>>,
}

impl MomentTrajectory {
    pub fn horizon(&self) -> usize {
        self.means.len() - 1
    }

    pub fn means(&self) -> &[DVector<f64>] {
        &self.means
    }

    pub fn covs(&self) -> &[DMatrix<f64>] {
        &self.covs
    }
}

/// Closed-loop propagation: `mu_{k+1} = (A + B K_k) mu_k`,
/// `Sigma_{k+1} = (A + B K_k) Sigma_k (A + B K_k)^T + D Sigma_w D^T`.
///
/// Distribution-free: only the first two moments of the uncertainty enter.
pub fn propagate_moments(
    sys: &LinearSystem,
    policy: &Policy,
    x0set: &MomentAmbiguitySet,
    wset: &MomentAmbiguitySet,
    horizon: usize,
) -> Result<MomentTrajectory> {
    if policy.horizon() < horizon {
        return Err(Error::LengthMismatch {
            context: "propagate_moments policy",
            expected: horizon,
            actual: policy.horizon(),
        });
    }
    if x0set.dim() != sys.state_dim() || wset.dim() != sys.disturbance_dim() {
        return Err(Error::DimensionMismatch {
            context: "propagate_moments",
            expected: format!("x0 dim {}, w dim {}", sys.state_dim(), sys.disturbance_dim()),
            actual: format!("x0 dim {}, w dim {}", x0set.dim(), wset.dim()),
        });
    }
    let w_mean_norm = wset.mean().amax();
    if w_mean_norm > 1e-12 {
        return Err(Error::NonzeroDisturbanceMean { norm: w_mean_norm });
    }

    let noise = sys.d() * wset.cov() * sys.d().transpose();
    let mut means = Vec::with_capacity(horizon + 1);
    let mut covs = Vec::with_capacity(horizon + 1);
    means.push(x0set.mean().clone());
    covs.push(symmetrize(x0set.cov()));
    for k in 0..horizon {
        let closed = sys.a() + sys.b() * policy.gain(k);
        means.push(&closed * &means[k]);
        covs.push(symmetrize(&(&closed * &covs[k] * closed.transpose() + &noise)));
    }
    Ok(MomentTrajectory { means, covs })
}

/// The `(d+1) x (d+1)` block matrix `[[Sigma, 0], [0, 1]]`.
#[derive(Debug, Clone)]
pub struct SecondMomentMatrix {
    omega: DMatrix<f64>,
}

impl SecondMomentMatrix {
    pub fn from_cov(cov: &DMatrix<f64>) -> Result<Self> {
        check_symmetric(cov, Tolerances::default().sym, "SecondMomentMatrix.cov")?;
        check_psd(cov, Tolerances::default().psd, "SecondMomentMatrix.cov")?;
        let d = cov.nrows();
        let mut omega = DMatrix::zeros(d + 1, d + 1);
        omega.view_mut((0, 0), (d, d)).copy_from(cov);
        omega[(d, d)] = 1.0;
        Ok(Self { omega })
    }

    /// Validates the exact block layout of a raw matrix.
    pub fn from_matrix(omega: DMatrix<f64>) -> Result<Self> {
        let n = omega.nrows();
        if n < 2 || omega.ncols() != n {
            return Err(Error::MalformedBlock {
                detail: format!("expected square matrix of size >= 2, got {}x{}", n, omega.ncols()),
            });
        }
        let d = n - 1;
        if omega[(d, d)] != 1.0 {
            return Err(Error::MalformedBlock {
                detail: format!("corner entry must be 1, got {}", omega[(d, d)]),
            });
        }
        for i in 0..d {
            if omega[(i, d)] != 0.0 || omega[(d, i)] != 0.0 {
                return Err(Error::MalformedBlock {
                    detail: "off-diagonal border must be zero".into(),
                });
            }
        }
        let cov = omega.view((0, 0), (d, d)).into_owned();
        check_psd(&cov, Tolerances::default().psd, "SecondMomentMatrix.cov")?;
        Ok(Self { omega })
    }

    pub fn dim(&self) -> usize {
        self.omega.nrows() - 1
    }

    pub fn omega(&self) -> &DMatrix<f64> {
        &self.omega
    }

    pub fn cov_block(&self) -> DMatrix<f64> {
        let d = self.dim();
        self.omega.view((0, 0), (d, d)).into_owned()
    }
}
