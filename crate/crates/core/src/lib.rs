//! Regret analysis for distributionally robust linear-quadratic control
//! under moment-based ambiguity sets.
//!
//! The crate provides:
//! - [`linsys`]: the discrete-time plant, finite-horizon and stationary LQR
//!   synthesis, simulation and quadratic cost evaluation;
//! - [`uncertainty`]: moment ambiguity sets, matched-moment Gaussian and
//!   heavy-tailed Laplacian samplers, and exact closed-loop moment
//!   propagation;
//! - [`risk`]: empirical VaR/CVaR and worst-case CVaR over moment sets,
//!   including the eigenvalue-dual evaluation of the general quadratic case;
//! - [`wasserstein`]: empirical distributions, exact W2 distance and
//!   Wasserstein ambiguity sets;
//! - [`regret`]: the error process, pseudo regret, empirical distributional
//!   regret and its per-step upper bound.

pub mod error;
pub mod linalg;
pub mod linsys;
pub mod regret;
pub mod risk;
pub mod uncertainty;
pub mod wasserstein;

pub use error::{Error, Result};
pub use linalg::Tolerances;
pub use linsys::{
    dare_stationary, riccati_finite_horizon, simulate, trajectory_cost, CostSpec, LinearSystem,
    Policy, Trajectory, ValueMatrices,
};
pub use regret::{
    bootstrap_std_error_cvar, bootstrap_std_error_mean, effective_weights,
    empirical_distributional_regret, empirical_distributional_regret_with_streams,
    error_model, expected_cost_analytic, pseudo_regret, regret_bound, rollout_batch,
    rollout_costs, BoundTerms, EffectiveWeights, ErrorModel, McScalar, RegretReport,
    UncertaintyModel,
};
pub use risk::{
    empirical_cvar, empirical_var, worst_case_cvar_linear, worst_case_cvar_quadratic,
    worst_case_cvar_quadratic_general, RiskLevel, SampleSet,
};
pub use uncertainty::{
    membership_check, propagate_moments, sample_gaussian, sample_laplacian, DistributionFamily,
    DistributionModel, MomentAmbiguitySet, MomentTrajectory, RngSpec, SecondMomentMatrix,
};
pub use wasserstein::{
    w2_empirical, w2_gaussian, wasserstein_membership, EmpiricalDistribution,
    WassersteinAmbiguitySet,
};
