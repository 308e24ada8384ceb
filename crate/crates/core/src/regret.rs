//! Regret machinery for distributionally robust LQR: error process moments,
//! pseudo regret, empirical distributional regret and the per-step upper
//! bound on the distributional regret.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::symmetrize;
use crate::linsys::{CostSpec, LinearSystem, Policy};
use crate::risk::{empirical_cvar, worst_case_cvar_linear, RiskLevel, SampleSet};
use crate::uncertainty::{
    membership_check, DistributionModel, MomentTrajectory, RngSpec, SecondMomentMatrix,
};

/// Per-step effective state weights `Q*_k = Q + K_k' R K_k`, `Q*_T = Q_f`.
#[derive(Debug, Clone)]
pub struct EffectiveWeights {
    q_star: Vec<DMatrix<f64>>,
}

impl EffectiveWeights {
    pub fn horizon(&self) -> usize {
        self.q_star.len() - 1
    }

    pub fn q_star(&self) -> &[DMatrix<f64>] {
        &self.q_star
    }
}

pub fn effective_weights(cost: &CostSpec, policy: &Policy) -> Result<EffectiveWeights> {
    let t = cost.horizon();
    if policy.horizon() < t {
        return Err(Error::LengthMismatch {
            context: "effective_weights policy",
            expected: t,
            actual: policy.horizon(),
        });
    }
    if policy.gain(0).ncols() != cost.q().nrows() || policy.gain(0).nrows() != cost.r().nrows() {
        return Err(Error::DimensionMismatch {
            context: "effective_weights",
            expected: format!("K {}x{}", cost.r().nrows(), cost.q().nrows()),
            actual: format!("K {}x{}", policy.gain(0).nrows(), policy.gain(0).ncols()),
        });
    }
    let mut q_star = Vec::with_capacity(t + 1);
    for k in 0..t {
        let gain = policy.gain(k);
        q_star.push(symmetrize(&(cost.q() + gain.transpose() * cost.r() * gain)));
    }
    q_star.push(cost.qf().clone());
    Ok(EffectiveWeights { q_star })
}

/// `sum_k Tr(Q*_k Sigma_k) + mu_k' Q*_k mu_k`: the exact expected cost of a
/// linear policy under any member distribution with the given moments.
pub fn expected_cost_analytic(
    moments: &MomentTrajectory,
    weights: &EffectiveWeights,
) -> Result<f64> {
    if moments.horizon() != weights.horizon() {
        return Err(Error::LengthMismatch {
            context: "expected_cost_analytic",
            expected: weights.horizon(),
            actual: moments.horizon(),
        });
    }
    let mut total = 0.0;
    for k in 0..=moments.horizon() {
        let q = &weights.q_star()[k];
        let mu = &moments.means()[k];
        total += (q * &moments.covs()[k]).trace() + (mu.transpose() * q * mu)[(0, 0)];
    }
    Ok(total)
}

/// Second-order description of the error process `e_k` between independent
/// matched-moment rollouts: `Sigma_{e_k} = 2 Sigma_{x_k}`.
#[derive(Debug, Clone)]
pub struct ErrorModel {
    covariances: Vec<DMatrix<f64>>,
    second_moments: Vec<SecondMomentMatrix>,
}

impl ErrorModel {
    pub fn horizon(&self) -> usize {
        self.covariances.len() - 1
    }

    pub fn covariances(&self) -> &[DMatrix<f64>] {
        &self.covariances
    }

    pub fn second_moments(&self) -> &[SecondMomentMatrix] {
        &self.second_moments
    }
}

pub fn error_model(moments: &MomentTrajectory) -> Result<ErrorModel> {
    let covariances: Vec<DMatrix<f64>> = moments.covs().iter().map(|s| s * 2.0).collect();
    let second_moments = covariances
        .iter()
        .map(SecondMomentMatrix::from_cov)
        .collect::<Result<Vec<_>>>()?;
    Ok(ErrorModel {
        covariances,
        second_moments,
    })
}

/// Expected-cost difference between two moment trajectories. Identically zero
/// whenever the trajectories share means and covariances, which is exactly
/// why expectation fails to separate matched-moment distributions.
pub fn pseudo_regret(
    moments_true: &MomentTrajectory,
    moments_worst: &MomentTrajectory,
    weights: &EffectiveWeights,
) -> Result<f64> {
    if moments_true.horizon() != moments_worst.horizon() {
        return Err(Error::LengthMismatch {
            context: "pseudo_regret",
            expected: moments_worst.horizon(),
            actual: moments_true.horizon(),
        });
    }
    Ok(expected_cost_analytic(moments_true, weights)?
        - expected_cost_analytic(moments_worst, weights)?)
}

/// An (initial state, disturbance) distribution pair for closed-loop rollouts.
#[derive(Debug, Clone)]
pub struct UncertaintyModel {
    pub x0: DistributionModel,
    pub w: DistributionModel,
}

impl UncertaintyModel {
    pub fn new(x0: DistributionModel, w: DistributionModel) -> Self {
        Self { x0, w }
    }
}

fn rollout_one(
    sys: &LinearSystem,
    policy: &Policy,
    cost: &CostSpec,
    model: &UncertaintyModel,
    lx: &DMatrix<f64>,
    lw: &DMatrix<f64>,
    rng: &RngSpec,
) -> (Vec<DVector<f64>>, f64) {
    let t = cost.horizon();
    let mut r = rng.rng();
    let mut states = Vec::with_capacity(t + 1);
    states.push(model.x0.draw(lx, &mut r));
    let mut total = 0.0;
    for k in 0..t {
        let x = &states[k];
        let u = policy.gain(k) * x;
        total += (x.transpose() * cost.q() * x)[(0, 0)];
        total += (u.transpose() * cost.r() * &u)[(0, 0)];
        let w = model.w.draw(lw, &mut r);
        states.push(sys.a() * x + sys.b() * &u + sys.d() * &w);
    }
    total += (states[t].transpose() * cost.qf() * &states[t])[(0, 0)];
    (states, total)
}

/// `count` independent closed-loop rollouts; rollout `i` owns stream
/// `rng.stream + i`, so results are independent of worker scheduling.
pub fn rollout_batch(
    sys: &LinearSystem,
    policy: &Policy,
    cost: &CostSpec,
    model: &UncertaintyModel,
    count: usize,
    rng: &RngSpec,
) -> Result<Vec<(Vec<DVector<f64>>, f64)>> {
    if policy.horizon() < cost.horizon() {
        return Err(Error::LengthMismatch {
            context: "rollout_batch policy",
            expected: cost.horizon(),
            actual: policy.horizon(),
        });
    }
    let lx = model.x0.factor()?;
    let lw = model.w.factor()?;
    Ok((0..count)
        .into_par_iter()
        .map(|i| rollout_one(sys, policy, cost, model, &lx, &lw, &rng.offset(i as u64)))
        .collect())
}

/// Costs only; see [`rollout_batch`].
pub fn rollout_costs(
    sys: &LinearSystem,
    policy: &Policy,
    cost: &CostSpec,
    model: &UncertaintyModel,
    count: usize,
    rng: &RngSpec,
) -> Result<Vec<f64>> {
    if policy.horizon() < cost.horizon() {
        return Err(Error::LengthMismatch {
            context: "rollout_costs policy",
            expected: cost.horizon(),
            actual: policy.horizon(),
        });
    }
    let lx = model.x0.factor()?;
    let lw = model.w.factor()?;
    Ok((0..count)
        .into_par_iter()
        .map(|i| rollout_one(sys, policy, cost, model, &lx, &lw, &rng.offset(i as u64)).1)
        .collect())
}

/// Empirical CVaR difference between rollouts under the true and worst-case
/// member models, with an explicit stream per role slot. Swapping the
/// (model, stream) role pairs negates the value exactly.
#[allow(clippy::too_many_arguments)]
pub fn empirical_distributional_regret_with_streams(
    sys: &LinearSystem,
    policy: &Policy,
    cost: &CostSpec,
    true_model: &UncertaintyModel,
    rng_true: &RngSpec,
    worst_model: &UncertaintyModel,
    rng_worst: &RngSpec,
    alpha: RiskLevel,
    count: usize,
) -> Result<f64> {
    if !membership_check(&true_model.x0, worst_model.x0.moments(), 1e-9)?
        || !membership_check(&true_model.w, worst_model.w.moments(), 1e-9)?
    {
        return Err(Error::MembershipFailure {
            context: "true and worst models must share their first two moments",
        });
    }
    let required = (1.0 / alpha.value()).ceil() as usize;
    if count < required {
        return Err(Error::TooFewSamples {
            required,
            actual: count,
        });
    }
    let costs_true = rollout_costs(sys, policy, cost, true_model, count, rng_true)?;
    let costs_worst = rollout_costs(sys, policy, cost, worst_model, count, rng_worst)?;
    let cvar_true = empirical_cvar(&SampleSet::new(costs_true)?, alpha);
    let cvar_worst = empirical_cvar(&SampleSet::new(costs_worst)?, alpha);
    Ok(cvar_true - cvar_worst)
}

/// As above, with independent streams derived from one base spec: the true
/// role uses `rng` itself, the worst role uses the next disjoint stream block.
#[allow(clippy::too_many_arguments)]
pub fn empirical_distributional_regret(
    sys: &LinearSystem,
    policy: &Policy,
    cost: &CostSpec,
    true_model: &UncertaintyModel,
    worst_model: &UncertaintyModel,
    alpha: RiskLevel,
    count: usize,
    rng: &RngSpec,
) -> Result<f64> {
    empirical_distributional_regret_with_streams(
        sys,
        policy,
        cost,
        true_model,
        rng,
        worst_model,
        &rng.offset(count as u64),
        alpha,
        count,
    )
}

/// Per-step decomposition of the regret upper bound.
#[derive(Debug, Clone, Serialize)]
pub struct BoundTerms {
    /// `(1/alpha) Tr(Sigma_{e_k} Q*_k)` per step.
    pub trace_terms: Vec<f64>,
    /// Sample-averaged worst-case CVaR of the cross term `2 (Q*_k x*_k)' e_k`.
    pub g_terms: Vec<f64>,
    pub total: f64,
}

/// The regret upper bound: per-step quadratic trace terms plus the linear
/// cross terms `G_k`, the latter averaged over `N` sampled nominal state
/// trajectories.
pub fn regret_bound(
    errors: &ErrorModel,
    weights: &EffectiveWeights,
    alpha: RiskLevel,
    nominal_states: &[Vec<DVector<f64>>],
) -> Result<BoundTerms> {
    let t = errors.horizon();
    if weights.horizon() != t {
        return Err(Error::LengthMismatch {
            context: "regret_bound weights",
            expected: t,
            actual: weights.horizon(),
        });
    }
    if nominal_states.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    for traj in nominal_states {
        if traj.len() != t + 1 {
            return Err(Error::LengthMismatch {
                context: "regret_bound nominal trajectories",
                expected: t + 1,
                actual: traj.len(),
            });
        }
    }
    let n = nominal_states.len() as f64;
    let mut trace_terms = Vec::with_capacity(t + 1);
    let mut g_terms = Vec::with_capacity(t + 1);
    for k in 0..=t {
        let sigma_e = &errors.covariances()[k];
        let q_star = &weights.q_star()[k];
        trace_terms.push((sigma_e * q_star).trace() / alpha.value());
        let mut g = 0.0;
        for traj in nominal_states {
            let q = q_star * &traj[k];
            g += worst_case_cvar_linear(sigma_e, &q, alpha)?;
        }
        g_terms.push(g / n);
    }
    let total = trace_terms.iter().sum::<f64>() + g_terms.iter().sum::<f64>();
    Ok(BoundTerms {
        trace_terms,
        g_terms,
        total,
    })
}

/// A Monte Carlo scalar with its bootstrap standard error.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct McScalar {
    pub value: f64,
    pub std_error: f64,
}

/// Bootstrap standard error of the sample mean (fixed 200 resamples).
pub fn bootstrap_std_error_mean(samples: &[f64], rng: &RngSpec) -> f64 {
    bootstrap_std_error(samples, rng, |s| {
        s.iter().sum::<f64>() / s.len() as f64
    })
}

/// Bootstrap standard error of the empirical CVaR (fixed 200 resamples).
pub fn bootstrap_std_error_cvar(samples: &[f64], alpha: RiskLevel, rng: &RngSpec) -> f64 {
    bootstrap_std_error(samples, rng, |s| {
        empirical_cvar(&SampleSet::new(s.to_vec()).unwrap(), alpha)
    })
}

fn bootstrap_std_error(samples: &[f64], rng: &RngSpec, stat: impl Fn(&[f64]) -> f64) -> f64 {
    use rand::RngExt;
    const RESAMPLES: usize = 200;
    let n = samples.len();
    let mut r = rng.rng();
    let mut stats = Vec::with_capacity(RESAMPLES);
    let mut buf = vec![0.0; n];
    for _ in 0..RESAMPLES {
        for slot in buf.iter_mut() {
            *slot = samples[r.random_range(0..n)];
        }
        stats.push(stat(&buf));
    }
    let mean = stats.iter().sum::<f64>() / RESAMPLES as f64;
    let var = stats.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (RESAMPLES as f64 - 1.0);
    var.sqrt()
}

/// Full regret summary for one experiment configuration.
#[derive(Debug, Clone, Serialize)]
pub struct RegretReport {
    pub alpha: f64,
    pub horizon: usize,
    pub n_rollouts: usize,
    pub pseudo_regret_analytic: f64,
    pub pseudo_regret_mc: McScalar,
    pub empirical_distributional_regret: f64,
    pub bound_total: f64,
    pub bound_trace_terms: Vec<f64>,
    pub bound_g_terms: Vec<f64>,
}
