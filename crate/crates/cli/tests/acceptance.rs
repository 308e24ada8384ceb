//! Acceptance suite: one test (and one printed pass/fail line) per criterion.
//! All tolerances are pinned constants; every randomized check runs at a
//! fixed seed.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::RngExt;
use rand_chacha::ChaCha12Rng;

use drcontrol::{
    bootstrap_std_error_cvar, dare_stationary, effective_weights, empirical_cvar, error_model,
    propagate_moments, pseudo_regret, regret_bound, riccati_finite_horizon, rollout_batch,
    rollout_costs, w2_empirical, worst_case_cvar_linear, worst_case_cvar_quadratic,
    worst_case_cvar_quadratic_general, CostSpec, DistributionModel, EmpiricalDistribution,
    LinearSystem, MomentAmbiguitySet, Policy, RiskLevel, RngSpec, SampleSet, SecondMomentMatrix,
};
use drcontrol::linsys::steering;
use drcontrol::regret::UncertaintyModel;

const SEED: u64 = 20240824;
const ALPHAS: [f64; 4] = [0.05, 0.2, 0.5, 0.9];

fn report(id: u32, name: &str, pass: bool, detail: &str, started: Instant, budget_s: f64) {
    let elapsed = started.elapsed().as_secs_f64();
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("[{verdict}] criterion {id} ({name}): {detail} [{elapsed:.2}s / budget {budget_s}s]");
    assert!(pass, "criterion {id} ({name}) failed: {detail}");
    assert!(
        elapsed < budget_s,
        "criterion {id} ({name}) exceeded its {budget_s}s budget ({elapsed:.2}s)"
    );
}

fn random_psd(d: usize, rng: &mut ChaCha12Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, d, |_, _| rng.random_range(-2.0..2.0));
    &g * g.transpose()
}

fn steering_setup(t: usize) -> (LinearSystem, CostSpec, Policy) {
    let sys = steering::system();
    let cost = steering::cost(t);
    let (gain, _) = dare_stationary(&sys, &cost, 1e-12, 10_000).unwrap();
    (sys, cost, Policy::stationary(gain, t).unwrap())
}

fn steering_sets() -> (MomentAmbiguitySet, MomentAmbiguitySet) {
    (
        MomentAmbiguitySet::new(steering::mu_x0(), steering::sigma_x0()).unwrap(),
        MomentAmbiguitySet::new(DVector::zeros(2), steering::sigma_w()).unwrap(),
    )
}

fn model(gaussian: bool, set: &MomentAmbiguitySet) -> DistributionModel {
    if gaussian {
        DistributionModel::gaussian(set.clone())
    } else {
        DistributionModel::laplacian(set.clone())
    }
}

#[test]
fn criterion_01_quadratic_trace_equivalence() {
    let t0 = Instant::now();
    let mut rng = RngSpec::new(SEED, 101).rng();
    let mut worst = 0.0f64;
    for i in 0..100 {
        let d = 1 + i % 5;
        let sigma = random_psd(d, &mut rng);
        let p = random_psd(d, &mut rng);
        let alpha = RiskLevel::strict(ALPHAS[i % 4]).unwrap();
        let omega = SecondMomentMatrix::from_cov(&sigma).unwrap();
        let dual =
            worst_case_cvar_quadratic_general(&omega, &p, &DVector::zeros(d), 0.0, alpha).unwrap();
        let closed = worst_case_cvar_quadratic(&sigma, &p, alpha).unwrap();
        worst = worst.max((dual - closed).abs() / (1.0 + closed.abs()));
    }
    report(
        1,
        "quadratic trace vs dual",
        worst <= 1e-8,
        &format!("max relative error {worst:.3e} <= 1e-8 over 100 instances"),
        t0,
        5.0,
    );
}

#[test]
fn criterion_02_linear_closed_form_equivalence() {
    let t0 = Instant::now();
    let mut rng = RngSpec::new(SEED, 102).rng();
    let mut worst = 0.0f64;
    for i in 0..100 {
        let d = 1 + i % 5;
        let sigma = random_psd(d, &mut rng);
        let q = DVector::from_fn(d, |_, _| rng.random_range(-3.0..3.0));
        let alpha = RiskLevel::strict(ALPHAS[i % 4]).unwrap();
        let omega = SecondMomentMatrix::from_cov(&sigma).unwrap();
        let dual =
            worst_case_cvar_quadratic_general(&omega, &DMatrix::zeros(d, d), &q, 0.0, alpha)
                .unwrap();
        let closed = worst_case_cvar_linear(&sigma, &q, alpha).unwrap();
        worst = worst.max((dual - closed).abs() / (1.0 + closed.abs()));
    }
    let pinned = worst_case_cvar_linear(
        &DMatrix::identity(2, 2),
        &DVector::from_row_slice(&[1.0, 0.0]),
        RiskLevel::strict(0.2).unwrap(),
    )
    .unwrap();
    let pinned_err = (pinned - 4.0).abs();
    report(
        2,
        "linear closed form vs dual",
        worst <= 1e-6 && pinned_err <= 1e-6,
        &format!("max relative error {worst:.3e} <= 1e-6; pinned-instance error {pinned_err:.3e}"),
        t0,
        5.0,
    );
}

#[test]
fn criterion_03_pseudo_regret_zero() {
    let t0 = Instant::now();
    let mut rng = RngSpec::new(SEED, 103).rng();
    let mut worst_analytic = 0.0f64;
    for _ in 0..20 {
        let sys = LinearSystem::new(
            DMatrix::from_fn(2, 2, |_, _| rng.random_range(-0.9..0.9)),
            DMatrix::from_fn(2, 1, |_, _| rng.random_range(-1.0..1.0)),
            DMatrix::identity(2, 2),
        )
        .unwrap();
        let t = rng.random_range(1..=20usize);
        let cost = CostSpec::new(
            DMatrix::identity(2, 2),
            DMatrix::identity(1, 1),
            DMatrix::identity(2, 2),
            t,
        )
        .unwrap();
        let (policy, _) = riccati_finite_horizon(&sys, &cost).unwrap();
        let x0 = MomentAmbiguitySet::new(
            DVector::from_fn(2, |_, _| rng.random_range(-3.0..3.0)),
            random_psd(2, &mut rng),
        )
        .unwrap();
        let w = MomentAmbiguitySet::new(DVector::zeros(2), random_psd(2, &mut rng)).unwrap();
        let m1 = propagate_moments(&sys, &policy, &x0, &w, t).unwrap();
        let m2 = propagate_moments(&sys, &policy, &x0, &w, t).unwrap();
        let weights = effective_weights(&cost, &policy).unwrap();
        worst_analytic = worst_analytic.max(pseudo_regret(&m1, &m2, &weights).unwrap().abs());
    }

    let n = 10_000;
    let (sys, cost, policy) = steering_setup(100);
    let (x0, w) = steering_sets();
    let true_model = UncertaintyModel::new(model(false, &x0), model(false, &w));
    let worst_model = UncertaintyModel::new(model(true, &x0), model(true, &w));
    let ct = rollout_costs(&sys, &policy, &cost, &true_model, n, &RngSpec::new(SEED, 0)).unwrap();
    let cw = rollout_costs(
        &sys,
        &policy,
        &cost,
        &worst_model,
        n,
        &RngSpec::new(SEED, n as u64),
    )
    .unwrap();
    let diff = ct.iter().sum::<f64>() / n as f64 - cw.iter().sum::<f64>() / n as f64;
    let boot = RngSpec::new(SEED, 3 * n as u64);
    let se_t = drcontrol::bootstrap_std_error_mean(&ct, &boot);
    let se_w = drcontrol::bootstrap_std_error_mean(&cw, &boot.offset(1));
    let se = (se_t * se_t + se_w * se_w).sqrt();
    report(
        3,
        "pseudo regret zero",
        worst_analytic <= 1e-10 && diff.abs() <= 3.0 * se,
        &format!(
            "max analytic |pseudo regret| {worst_analytic:.3e} <= 1e-10; MC mean gap {diff:.3} within 3 SE ({:.3})",
            3.0 * se
        ),
        t0,
        60.0,
    );
}

#[test]
fn criterion_04_bound_monotonicity() {
    let t0 = Instant::now();
    let (x0, w) = steering_sets();
    let bound_at = |t: usize, a: f64| {
        let (sys, cost, policy) = steering_setup(t);
        let moments = propagate_moments(&sys, &policy, &x0, &w, t).unwrap();
        let errors = error_model(&moments).unwrap();
        let weights = effective_weights(&cost, &policy).unwrap();
        let nominal_model = UncertaintyModel::new(model(true, &x0), model(true, &w));
        let nominal: Vec<_> =
            rollout_batch(&sys, &policy, &cost, &nominal_model, 100, &RngSpec::new(SEED, 104))
                .unwrap()
                .into_iter()
                .map(|(s, _)| s)
                .collect();
        regret_bound(&errors, &weights, RiskLevel::strict(a).unwrap(), &nominal)
            .unwrap()
            .total
    };
    let over_alpha: Vec<f64> = [0.05, 0.1, 0.2, 0.4, 0.8]
        .iter()
        .map(|&a| bound_at(100, a))
        .collect();
    let decreasing = over_alpha.windows(2).all(|w| w[0] > w[1]);
    let over_t: Vec<f64> = [10usize, 25, 50, 100]
        .iter()
        .map(|&t| bound_at(t, 0.2))
        .collect();
    let increasing = over_t.windows(2).all(|w| w[0] < w[1]);
    report(
        4,
        "bound monotonicity",
        decreasing && increasing,
        &format!("strictly decreasing in alpha {over_alpha:.1?}; strictly increasing in horizon {over_t:.1?}"),
        t0,
        30.0,
    );
}

#[test]
fn criterion_05_bound_dominance() {
    let t0 = Instant::now();
    let n = 10_000;
    let t = 100;
    let alpha = RiskLevel::strict(0.2).unwrap();
    let (sys, cost, policy) = steering_setup(t);
    let (x0, w) = steering_sets();
    let true_model = UncertaintyModel::new(model(false, &x0), model(false, &w));
    let worst_model = UncertaintyModel::new(model(true, &x0), model(true, &w));
    let ct = rollout_costs(&sys, &policy, &cost, &true_model, n, &RngSpec::new(SEED, 0)).unwrap();
    let cw = rollout_costs(
        &sys,
        &policy,
        &cost,
        &worst_model,
        n,
        &RngSpec::new(SEED, n as u64),
    )
    .unwrap();
    let regret = empirical_cvar(&SampleSet::new(ct.clone()).unwrap(), alpha)
        - empirical_cvar(&SampleSet::new(cw.clone()).unwrap(), alpha);
    let boot = RngSpec::new(SEED, 3 * n as u64);
    let se_t = bootstrap_std_error_cvar(&ct, alpha, &boot);
    let se_w = bootstrap_std_error_cvar(&cw, alpha, &boot.offset(1));
    let se = (se_t * se_t + se_w * se_w).sqrt();

    let moments = propagate_moments(&sys, &policy, &x0, &w, t).unwrap();
    let errors = error_model(&moments).unwrap();
    let weights = effective_weights(&cost, &policy).unwrap();
    let nominal: Vec<_> =
        rollout_batch(&sys, &policy, &cost, &worst_model, 100, &RngSpec::new(SEED, 105))
            .unwrap()
            .into_iter()
            .map(|(s, _)| s)
            .collect();
    let bound = regret_bound(&errors, &weights, alpha, &nominal).unwrap().total;
    let margin = bound - regret;
    report(
        5,
        "bound dominance",
        margin >= 3.0 * se,
        &format!("empirical regret {regret:.2} <= bound {bound:.2} with margin {margin:.2} >= 3 SE ({:.2})", 3.0 * se),
        t0,
        90.0,
    );
}

#[test]
fn criterion_06_error_process() {
    let t0 = Instant::now();
    let t = 100;
    let (sys, cost, policy) = steering_setup(t);
    let (x0, w) = steering_sets();
    let true_model = UncertaintyModel::new(model(false, &x0), model(false, &w));
    let worst_model = UncertaintyModel::new(model(true, &x0), model(true, &w));

    // Mean of e_k at every step: paired independent rollouts.
    let n = 4000;
    let bt = rollout_batch(&sys, &policy, &cost, &true_model, n, &RngSpec::new(SEED, 0)).unwrap();
    let bw = rollout_batch(
        &sys,
        &policy,
        &cost,
        &worst_model,
        n,
        &RngSpec::new(SEED, n as u64),
    )
    .unwrap();
    let mut worst_z = 0.0f64;
    for k in 0..=t {
        for c in 0..2 {
            let errs: Vec<f64> = (0..n).map(|i| bt[i].0[k][c] - bw[i].0[k][c]).collect();
            let mean = errs.iter().sum::<f64>() / n as f64;
            let var = errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
            let se = (var / n as f64).sqrt();
            worst_z = worst_z.max(mean.abs() / se);
        }
    }

    // Sample covariance of e_0 against 2 Sigma_{x0} at N = 1e5.
    let n0 = 100_000;
    let x0t = model(false, &x0).sample(&RngSpec::new(SEED, 106), n0).unwrap();
    let x0w = model(true, &x0).sample(&RngSpec::new(SEED, 107), n0).unwrap();
    let e0: Vec<DVector<f64>> = (0..n0).map(|i| &x0t[i] - &x0w[i]).collect();
    let mut mean0 = DVector::zeros(2);
    for e in &e0 {
        mean0 += e;
    }
    mean0 /= n0 as f64;
    let mut cov0 = DMatrix::zeros(2, 2);
    for e in &e0 {
        let c = e - &mean0;
        cov0 += &c * c.transpose();
    }
    cov0 /= n0 as f64 - 1.0;
    let target = steering::sigma_x0() * 2.0;
    let rel = (&cov0 - &target).norm() / target.norm();

    report(
        6,
        "error process",
        worst_z <= 3.0 && rel <= 0.07,
        &format!("max |mean|/SE over all (k, component) = {worst_z:.2} <= 3; e_0 covariance relative error {rel:.4} <= 0.07"),
        t0,
        60.0,
    );
}

#[test]
fn criterion_07_cvar_coherence() {
    let t0 = Instant::now();
    let mut rng = RngSpec::new(SEED, 108).rng();
    let mut max_trans = 0.0f64;
    let mut max_homog = 0.0f64;
    let mut max_subadd = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(2..=50usize);
        let xs: Vec<f64> = (0..n).map(|_| rng.random_range(-100.0..100.0)).collect();
        let ys: Vec<f64> = (0..n).map(|_| rng.random_range(-100.0..100.0)).collect();
        let a = RiskLevel::new(rng.random_range(0.05..1.0)).unwrap();
        let cx = empirical_cvar(&SampleSet::new(xs.clone()).unwrap(), a);
        let cy = empirical_cvar(&SampleSet::new(ys.clone()).unwrap(), a);

        let c = rng.random_range(-50.0..50.0);
        let shifted = empirical_cvar(
            &SampleSet::new(xs.iter().map(|v| v + c).collect()).unwrap(),
            a,
        );
        max_trans = max_trans.max((shifted - (cx + c)).abs() / (1.0 + cx.abs()));

        let lam = rng.random_range(0.0..10.0);
        let scaled = empirical_cvar(
            &SampleSet::new(xs.iter().map(|v| v * lam).collect()).unwrap(),
            a,
        );
        max_homog = max_homog.max((scaled - lam * cx).abs() / (1.0 + (lam * cx).abs()));

        let cs = empirical_cvar(
            &SampleSet::new((0..n).map(|i| xs[i] + ys[i]).collect()).unwrap(),
            a,
        );
        max_subadd = max_subadd.max((cs - cx - cy).max(0.0) / (1.0 + cx.abs() + cy.abs()));
    }
    report(
        7,
        "CVaR coherence axioms",
        max_trans <= 1e-12 && max_homog <= 1e-12 && max_subadd <= 1e-12,
        &format!(
            "translation {max_trans:.2e}, homogeneity {max_homog:.2e}, subadditivity violation {max_subadd:.2e}, all <= 1e-12 over 1000 sample sets"
        ),
        t0,
        5.0,
    );
}

#[test]
fn criterion_08_w2_oracle() {
    let t0 = Instant::now();
    let mut rng = RngSpec::new(SEED, 109).rng();
    let draw = |m: usize, d: usize, rng: &mut ChaCha12Rng| {
        EmpiricalDistribution::new(
            (0..m)
                .map(|_| DVector::from_fn(d, |_, _| rng.random_range(-5.0..5.0)))
                .collect(),
        )
        .unwrap()
    };
    let mut max_err = 0.0f64;
    let mut axioms = true;
    for _ in 0..50 {
        let m = rng.random_range(2..=6usize);
        let d = rng.random_range(1..=3usize);
        let a = draw(m, d, &mut rng);
        let b = draw(m, d, &mut rng);
        let c = draw(m, d, &mut rng);
        let fast = w2_empirical(&a, &b).unwrap();
        max_err = max_err.max((fast - brute_force_w2(&a, &b)).abs());
        let ba = w2_empirical(&b, &a).unwrap();
        let self_dist = w2_empirical(&a, &a).unwrap();
        let ac = w2_empirical(&a, &c).unwrap();
        let cb = w2_empirical(&c, &b).unwrap();
        axioms &= (fast - ba).abs() <= 1e-10 * (1.0 + fast)
            && self_dist <= 1e-12
            && fast <= ac + cb + 1e-9
            && fast >= 0.0;
    }
    report(
        8,
        "W2 assignment oracle",
        max_err <= 1e-10 && axioms,
        &format!("max gap to exhaustive-permutation minimum {max_err:.2e} <= 1e-10 over 50 instances; metric axioms hold"),
        t0,
        10.0,
    );
}

#[test]
fn criterion_09_moment_propagation() {
    let t0 = Instant::now();
    let t = 10;
    let n = 100_000;
    let (sys, cost, policy) = steering_setup(t);
    let (x0, w) = steering_sets();
    let moments = propagate_moments(&sys, &policy, &x0, &w, t).unwrap();
    let target = &moments.covs()[t];

    let rel_for = |gaussian: bool, stream: u64| {
        let m = UncertaintyModel::new(model(gaussian, &x0), model(gaussian, &w));
        let batch =
            rollout_batch(&sys, &policy, &cost, &m, n, &RngSpec::new(SEED, stream)).unwrap();
        let mut mean = DVector::zeros(2);
        for (s, _) in &batch {
            mean += &s[t];
        }
        mean /= n as f64;
        let mut cov = DMatrix::zeros(2, 2);
        for (s, _) in &batch {
            let c = &s[t] - &mean;
            cov += &c * c.transpose();
        }
        cov /= n as f64 - 1.0;
        (&cov - target).norm() / target.norm()
    };
    let rel_gauss = rel_for(true, 110);
    let rel_lap = rel_for(false, 111);
    report(
        9,
        "moment propagation oracle",
        rel_gauss <= 0.05 && rel_lap <= 0.07,
        &format!("k=10 covariance relative error: Gaussian {rel_gauss:.4} <= 0.05, Laplacian {rel_lap:.4} <= 0.07 at N = 1e5"),
        t0,
        60.0,
    );
}

#[test]
fn criterion_10_determinism() {
    let t0 = Instant::now();
    let bin = env!("CARGO_BIN_EXE_drcontrol");
    let root = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .parent()
        .unwrap()
        .parent()
        .unwrap()
        .to_path_buf();
    let config = root.join("profiles/vehicle_steering.toml");
    let base = std::env::temp_dir().join(format!("drcontrol-acceptance-{}", std::process::id()));
    let run = |cmd: &str, out: &std::path::Path| {
        let status = std::process::Command::new(bin)
            .args([
                cmd,
                "--config",
                config.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
            ])
            .status()
            .unwrap();
        assert!(status.success(), "{cmd} exited with {status}");
    };
    let mut identical = true;
    let mut detail = String::new();
    for (cmd, files) in [
        ("bound-sweep", vec!["bound_sweep.csv"]),
        (
            "simulate",
            vec!["costs_true.csv", "costs_worst.csv", "regret.json"],
        ),
    ] {
        let d1 = base.join(format!("{cmd}-1"));
        let d2 = base.join(format!("{cmd}-2"));
        run(cmd, &d1);
        run(cmd, &d2);
        for f in files {
            let a = std::fs::read(d1.join(f)).unwrap();
            let b = std::fs::read(d2.join(f)).unwrap();
            let same = a == b;
            identical &= same;
            if !same {
                detail.push_str(&format!("{f} differs across reruns; "));
            }
        }
    }
    let _ = std::fs::remove_dir_all(&base);
    if identical {
        detail = "bound-sweep and simulate reruns are byte-identical on all data files".into();
    }
    report(10, "determinism", identical, &detail, t0, 30.0);
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
