//! The four experiment subcommands.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::RngExt;
use serde::Serialize;

use drcontrol::{
    bootstrap_std_error_mean, dare_stationary, effective_weights, empirical_cvar, error_model,
    propagate_moments, pseudo_regret, regret_bound, rollout_batch,
    rollout_costs, w2_empirical, worst_case_cvar_linear, worst_case_cvar_quadratic,
    worst_case_cvar_quadratic_general, CostSpec, DistributionModel, EmpiricalDistribution,
    LinearSystem, McScalar, MomentAmbiguitySet, Policy, RegretReport, RiskLevel, RngSpec,
    SampleSet, SecondMomentMatrix,
};

use crate::config::ExperimentConfig;
use crate::output::{fmt_f64, OutputWriter};
use crate::CliError;

/// Stream-id layout: rollout batches claim disjoint blocks of ChaCha streams
/// under the master seed so no two roles or commands overlap.
const STREAM_TRUE: u64 = 0;
const STREAM_NOMINAL: u64 = 1 << 32;
const STREAM_BOOTSTRAP: u64 = 1 << 33;
const STREAM_VALIDATE: u64 = 1 << 34;

struct Experiment {
    sys: LinearSystem,
    cost: CostSpec,
    policy: Policy,
    x0_set: MomentAmbiguitySet,
    w_set: MomentAmbiguitySet,
}

fn setup(cfg: &ExperimentConfig, horizon: usize) -> Result<Experiment, CliError> {
    let sys = cfg.build_system()?;
    let cost = cfg.build_cost(horizon)?;
    let (x0_set, w_set) = cfg.build_moment_sets()?;
    let (gain, _) = dare_stationary(&sys, &cost, 1e-12, 10_000)
        .map_err(|e| CliError::Config(format!("system: stationary synthesis failed: {e}")))?;
    let policy = Policy::stationary(gain, horizon)
        .map_err(|e| CliError::Config(format!("system: {e}")))?;
    Ok(Experiment {
        sys,
        cost,
        policy,
        x0_set,
        w_set,
    })
}

fn core_err(e: drcontrol::Error) -> CliError {
    CliError::Config(e.to_string())
}

/// Gaussian nominal rollouts used to sample the bound's cross-term states.
fn nominal_trajectories(
    exp: &Experiment,
    count: usize,
    rng: &RngSpec,
) -> Result<Vec<Vec<DVector<f64>>>, CliError> {
    let model = drcontrol::regret::UncertaintyModel::new(
        DistributionModel::gaussian(exp.x0_set.clone()),
        DistributionModel::gaussian(exp.w_set.clone()),
    );
    let batch =
        rollout_batch(&exp.sys, &exp.policy, &exp.cost, &model, count, rng).map_err(core_err)?;
    Ok(batch.into_iter().map(|(states, _)| states).collect())
}

pub fn bound_sweep(cfg: &ExperimentConfig, seed: u64, out: &Path) -> Result<(), CliError> {
    let mut horizons = cfg.sweep.horizons.clone();
    horizons.sort_unstable();
    horizons.dedup();
    let mut alphas = cfg.sweep.alphas.clone();
    alphas.sort_by(|a, b| a.partial_cmp(b).unwrap());
    alphas.dedup();

    let mut rows = Vec::new();
    for &t in &horizons {
        let exp = setup(cfg, t)?;
        let moments =
            propagate_moments(&exp.sys, &exp.policy, &exp.x0_set, &exp.w_set, t).map_err(core_err)?;
        let errors = error_model(&moments).map_err(core_err)?;
        let weights = effective_weights(&exp.cost, &exp.policy).map_err(core_err)?;
        let nominal =
            nominal_trajectories(&exp, cfg.sweep.n_samples, &RngSpec::new(seed, STREAM_NOMINAL))?;
        for &a in &alphas {
            let alpha = RiskLevel::strict(a)
                .map_err(|e| CliError::Config(format!("sweep.alphas: {e}")))?;
            let bound = regret_bound(&errors, &weights, alpha, &nominal).map_err(core_err)?;
            let trace_sum: f64 = bound.trace_terms.iter().sum();
            let g_sum: f64 = bound.g_terms.iter().sum();
            rows.push(vec![
                fmt_f64(a),
                t.to_string(),
                fmt_f64(bound.total),
                fmt_f64(trace_sum),
                fmt_f64(g_sum),
            ]);
        }
    }

    let mut writer = OutputWriter::new(out)?;
    writer.write_csv(
        "bound_sweep.csv",
        "alpha,horizon,bound_total,trace_sum,g_sum",
        &rows,
    )?;
    writer.write_manifest(cfg, seed, "bound-sweep")
}

fn percentile_label(p: f64) -> String {
    if p.fract() == 0.0 {
        format!("p{}", p as i64)
    } else {
        format!("p{p}")
    }
}

/// Nearest-rank sample percentile on a pre-sorted slice.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let rank = ((p / 100.0) * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

pub fn error_percentiles(cfg: &ExperimentConfig, seed: u64, out: &Path) -> Result<(), CliError> {
    let n = cfg.sweep.n_rollouts;
    if n < 10 {
        return Err(CliError::Config(format!(
            "sweep.n_rollouts: need at least 10 rollouts for percentile bands, got {n}"
        )));
    }
    let t = cfg.cost.horizon;
    let exp = setup(cfg, t)?;
    let true_model = drcontrol::regret::UncertaintyModel::new(
        cfg.model(cfg.distributions.true_family, &exp.x0_set),
        cfg.model(cfg.distributions.true_family, &exp.w_set),
    );
    let worst_model = drcontrol::regret::UncertaintyModel::new(
        cfg.model(cfg.distributions.worst_family, &exp.x0_set),
        cfg.model(cfg.distributions.worst_family, &exp.w_set),
    );
    let batch_true = rollout_batch(
        &exp.sys,
        &exp.policy,
        &exp.cost,
        &true_model,
        n,
        &RngSpec::new(seed, STREAM_TRUE),
    )
    .map_err(core_err)?;
    let batch_worst = rollout_batch(
        &exp.sys,
        &exp.policy,
        &exp.cost,
        &worst_model,
        n,
        &RngSpec::new(seed, STREAM_TRUE + n as u64),
    )
    .map_err(core_err)?;

    let d = exp.sys.state_dim();
    let mut header = String::from("k,component,mean");
    for p in &cfg.percentiles {
        header.push(',');
        header.push_str(&percentile_label(*p));
    }
    let mut rows = Vec::with_capacity((t + 1) * d);
    let mut errs = vec![0.0f64; n];
    for k in 0..=t {
        for c in 0..d {
            for i in 0..n {
                errs[i] = batch_true[i].0[k][c] - batch_worst[i].0[k][c];
            }
            let mean = errs.iter().sum::<f64>() / n as f64;
            let mut sorted = errs.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut row = vec![k.to_string(), c.to_string(), fmt_f64(mean)];
            for p in &cfg.percentiles {
                row.push(fmt_f64(percentile(&sorted, *p)));
            }
            rows.push(row);
        }
    }

    let mut writer = OutputWriter::new(out)?;
    writer.write_csv("error_percentiles.csv", &header, &rows)?;
    writer.write_manifest(cfg, seed, "error-percentiles")
}

pub fn simulate(cfg: &ExperimentConfig, seed: u64, out: &Path) -> Result<(), CliError> {
    let t = cfg.cost.horizon;
    let n = cfg.sweep.n_rollouts;
    let exp = setup(cfg, t)?;
    let alpha =
        RiskLevel::strict(cfg.alpha).map_err(|e| CliError::Config(format!("alpha: {e}")))?;
    let required = (1.0 / alpha.value()).ceil() as usize;
    if n < required {
        return Err(CliError::Config(format!(
            "sweep.n_rollouts: need at least {required} rollouts to resolve the alpha={} tail, got {n}",
            cfg.alpha
        )));
    }

    let true_model = drcontrol::regret::UncertaintyModel::new(
        cfg.model(cfg.distributions.true_family, &exp.x0_set),
        cfg.model(cfg.distributions.true_family, &exp.w_set),
    );
    let worst_model = drcontrol::regret::UncertaintyModel::new(
        cfg.model(cfg.distributions.worst_family, &exp.x0_set),
        cfg.model(cfg.distributions.worst_family, &exp.w_set),
    );
    let rng_true = RngSpec::new(seed, STREAM_TRUE);
    // Identical families replay the same stream per role slot so the regret
    // is exactly zero; distinct families use disjoint stream blocks so the
    // two rollouts are independent.
    let rng_worst = if cfg.distributions.true_family == cfg.distributions.worst_family {
        rng_true.clone()
    } else {
        RngSpec::new(seed, STREAM_TRUE + n as u64)
    };

    let costs_true =
        rollout_costs(&exp.sys, &exp.policy, &exp.cost, &true_model, n, &rng_true)
            .map_err(core_err)?;
    let costs_worst =
        rollout_costs(&exp.sys, &exp.policy, &exp.cost, &worst_model, n, &rng_worst)
            .map_err(core_err)?;

    let cvar_true = empirical_cvar(&SampleSet::new(costs_true.clone()).map_err(core_err)?, alpha);
    let cvar_worst =
        empirical_cvar(&SampleSet::new(costs_worst.clone()).map_err(core_err)?, alpha);
    let empirical_regret = cvar_true - cvar_worst;

    let moments = propagate_moments(&exp.sys, &exp.policy, &exp.x0_set, &exp.w_set, t)
        .map_err(core_err)?;
    let weights = effective_weights(&exp.cost, &exp.policy).map_err(core_err)?;
    let pseudo_analytic = pseudo_regret(&moments, &moments, &weights).map_err(core_err)?;

    let mean_true = costs_true.iter().sum::<f64>() / n as f64;
    let mean_worst = costs_worst.iter().sum::<f64>() / n as f64;
    let boot = RngSpec::new(seed, STREAM_BOOTSTRAP);
    let se_true = bootstrap_std_error_mean(&costs_true, &boot);
    let se_worst = bootstrap_std_error_mean(&costs_worst, &boot.offset(1));
    let pseudo_mc = McScalar {
        value: mean_true - mean_worst,
        std_error: (se_true * se_true + se_worst * se_worst).sqrt(),
    };

    let errors = error_model(&moments).map_err(core_err)?;
    let nominal =
        nominal_trajectories(&exp, cfg.sweep.n_samples, &RngSpec::new(seed, STREAM_NOMINAL))?;
    let bound = regret_bound(&errors, &weights, alpha, &nominal).map_err(core_err)?;

    let report = RegretReport {
        alpha: cfg.alpha,
        horizon: t,
        n_rollouts: n,
        pseudo_regret_analytic: pseudo_analytic,
        pseudo_regret_mc: pseudo_mc,
        empirical_distributional_regret: empirical_regret,
        bound_total: bound.total,
        bound_trace_terms: bound.trace_terms,
        bound_g_terms: bound.g_terms,
    };

    let mut writer = OutputWriter::new(out)?;
    let cost_rows = |costs: &[f64]| -> Vec<Vec<String>> {
        costs
            .iter()
            .enumerate()
            .map(|(i, c)| vec![i.to_string(), fmt_f64(*c)])
            .collect()
    };
    writer.write_csv("costs_true.csv", "rollout,cost", &cost_rows(&costs_true))?;
    writer.write_csv("costs_worst.csv", "rollout,cost", &cost_rows(&costs_worst))?;
    writer.write_json("regret.json", &report)?;
    writer.write_manifest(cfg, seed, "simulate")
}

#[derive(Serialize)]
struct Check {
    name: &'static str,
    pass: bool,
    measured_error: f64,
    tolerance: f64,
}

#[derive(Serialize)]
struct ValidateReport {
    pass: bool,
    checks: Vec<Check>,
}

fn random_psd(d: usize, rng: &mut rand_chacha::ChaCha12Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, d, |_, _| rng.random_range(-2.0..2.0));
    &g * g.transpose()
}

pub fn validate(cfg: &ExperimentConfig, seed: u64, out: &Path) -> Result<(), CliError> {
    let tols = &cfg.validation;
    let mut checks = Vec::new();
    let alphas = [0.05, 0.2, 0.5, 0.9];

    // Quadratic trace closed form against the eigenvalue dual.
    {
        let mut rng = RngSpec::new(seed, STREAM_VALIDATE).rng();
        let mut worst = 0.0f64;
        for i in 0..100 {
            let d = 1 + i % 5;
            let sigma = random_psd(d, &mut rng);
            let p = random_psd(d, &mut rng);
            let alpha = RiskLevel::strict(alphas[i % 4]).unwrap();
            let omega = SecondMomentMatrix::from_cov(&sigma).map_err(core_err)?;
            let dual =
                worst_case_cvar_quadratic_general(&omega, &p, &DVector::zeros(d), 0.0, alpha)
                    .map_err(core_err)?;
            let closed = worst_case_cvar_quadratic(&sigma, &p, alpha).map_err(core_err)?;
            worst = worst.max((dual - closed).abs() / (1.0 + closed.abs()));
        }
        checks.push(Check {
            name: "quadratic_trace_vs_dual",
            pass: worst <= tols.trace_tol,
            measured_error: worst,
            tolerance: tols.trace_tol,
        });
    }

    // Linear closed form against the dual at P = 0, r = 0.
    {
        let mut rng = RngSpec::new(seed, STREAM_VALIDATE + 1).rng();
        let mut worst = 0.0f64;
        for i in 0..100 {
            let d = 1 + i % 5;
            let sigma = random_psd(d, &mut rng);
            let q = DVector::from_fn(d, |_, _| rng.random_range(-3.0..3.0));
            let alpha = RiskLevel::strict(alphas[i % 4]).unwrap();
            let omega = SecondMomentMatrix::from_cov(&sigma).map_err(core_err)?;
            let dual =
                worst_case_cvar_quadratic_general(&omega, &DMatrix::zeros(d, d), &q, 0.0, alpha)
                    .map_err(core_err)?;
            let closed = worst_case_cvar_linear(&sigma, &q, alpha).map_err(core_err)?;
            worst = worst.max((dual - closed).abs() / (1.0 + closed.abs()));
        }
        checks.push(Check {
            name: "linear_closed_form_vs_dual",
            pass: worst <= tols.linear_tol,
            measured_error: worst,
            tolerance: tols.linear_tol,
        });
    }

    // Assignment-based W2 against the exhaustive-permutation minimum.
    {
        let mut rng = RngSpec::new(seed, STREAM_VALIDATE + 2).rng();
        let mut worst = 0.0f64;
        for _ in 0..20 {
            let m = rng.random_range(2..=5usize);
            let d = rng.random_range(1..=3usize);
            let draw = |rng: &mut rand_chacha::ChaCha12Rng| {
                EmpiricalDistribution::new(
                    (0..m)
                        .map(|_| DVector::from_fn(d, |_, _| rng.random_range(-5.0..5.0)))
                        .collect(),
                )
                .unwrap()
            };
            let a = draw(&mut rng);
            let b = draw(&mut rng);
            let fast = w2_empirical(&a, &b).map_err(core_err)?;
            let brute = brute_force_w2(&a, &b);
            worst = worst.max((fast - brute).abs());
        }
        checks.push(Check {
            name: "w2_assignment_vs_brute_force",
            pass: worst <= tols.w2_tol,
            measured_error: worst,
            tolerance: tols.w2_tol,
        });
    }

    // Closed-loop covariance propagation against Monte Carlo at k = 10.
    {
        let t = 10;
        let exp = setup(cfg, t)?;
        let moments = propagate_moments(&exp.sys, &exp.policy, &exp.x0_set, &exp.w_set, t)
            .map_err(core_err)?;
        let model = drcontrol::regret::UncertaintyModel::new(
            cfg.model(cfg.distributions.true_family, &exp.x0_set),
            cfg.model(cfg.distributions.true_family, &exp.w_set),
        );
        let count = 20_000;
        let batch = rollout_batch(
            &exp.sys,
            &exp.policy,
            &exp.cost,
            &model,
            count,
            &RngSpec::new(seed, STREAM_VALIDATE + 3),
        )
        .map_err(core_err)?;
        let d = exp.sys.state_dim();
        let mut mean = DVector::zeros(d);
        for (states, _) in &batch {
            mean += &states[t];
        }
        mean /= count as f64;
        let mut cov = DMatrix::zeros(d, d);
        for (states, _) in &batch {
            let c = &states[t] - &mean;
            cov += &c * c.transpose();
        }
        cov /= count as f64 - 1.0;
        let target = &moments.covs()[t];
        let rel = (&cov - target).norm() / target.norm();
        checks.push(Check {
            name: "moment_propagation_vs_monte_carlo",
            pass: rel <= tols.moment_tol,
            measured_error: rel,
            tolerance: tols.moment_tol,
        });
    }

    // Analytic pseudo regret at matched moments.
    {
        let t = cfg.cost.horizon;
        let exp = setup(cfg, t)?;
        let moments = propagate_moments(&exp.sys, &exp.policy, &exp.x0_set, &exp.w_set, t)
            .map_err(core_err)?;
        let weights = effective_weights(&exp.cost, &exp.policy).map_err(core_err)?;
        let r = pseudo_regret(&moments, &moments, &weights)
            .map_err(core_err)?
            .abs();
        checks.push(Check {
            name: "pseudo_regret_zero_at_matched_moments",
            pass: r <= tols.pseudo_tol,
            measured_error: r,
            tolerance: tols.pseudo_tol,
        });
    }

    let pass = checks.iter().all(|c| c.pass);
    let report = ValidateReport { pass, checks };
    let mut writer = OutputWriter::new(out)?;
    writer.write_json("validate.json", &report)?;
    writer.write_manifest(cfg, seed, "validate")?;
    if pass {
        Ok(())
    } else {
        let failed: Vec<&str> = report
            .checks
            .iter()
            .filter(|c| !c.pass)
            .map(|c| c.name)
            .collect();
        Err(CliError::Oracle(format!(
            "validation failed: {}",
            failed.join(", ")
        )))
    }
}

fn brute_force_w2(a: &EmpiricalDistribution, b: &EmpiricalDistribution) -> f64 {
    fn permutations(k: usize) -> Vec<Vec<usize>> {
        if k == 1 {
            return vec![vec![0]];
        }
        let mut out = Vec::new();
        for p in permutations(k - 1) {
            for pos in 0..k {
                let mut q = p.clone();
                q.insert(pos, k - 1);
                out.push(q);
            }
        }
        out
    }
    let m = a.len();
    let mut best = f64::INFINITY;
    for perm in permutations(m) {
        let total: f64 = (0..m)
            .map(|i| (&a.atoms()[i] - &b.atoms()[perm[i]]).norm_squared())
            .sum();
        best = best.min(total);
    }
    (best / m as f64).sqrt()
}
