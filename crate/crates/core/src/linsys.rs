//! Discrete-time linear plant model, LQR synthesis and trajectory simulation.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{
    check_finite, check_finite_vec, check_pd, check_psd, check_symmetric, spectral_radius,
    symmetrize, Tolerances,
};

/// The plant `x_{k+1} = A x_k + B u_k + D w_k`.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    d: DMatrix<f64>,
}

impl LinearSystem {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, d: DMatrix<f64>) -> Result<Self> {
        check_finite(&a, "LinearSystem.A")?;
        check_finite(&b, "LinearSystem.B")?;
        check_finite(&d, "LinearSystem.D")?;
        let n = a.nrows();
        if n == 0 || b.ncols() == 0 || d.ncols() == 0 {
            return Err(Error::DimensionMismatch {
                context: "LinearSystem",
                expected: "n, m, r >= 1".into(),
                actual: format!("n={}, m={}, r={}", n, b.ncols(), d.ncols()),
            });
        }
        if a.ncols() != n || b.nrows() != n || d.nrows() != n {
            return Err(Error::DimensionMismatch {
                context: "LinearSystem",
                expected: format!("A {n}x{n}, B {n}xm, D {n}xr"),
                actual: format!(
                    "A {}x{}, B {}x{}, D {}x{}",
                    a.nrows(),
                    a.ncols(),
                    b.nrows(),
                    b.ncols(),
                    d.nrows(),
                    d.ncols()
                ),
            });
        }
        Ok(Self { a, b, d })
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn disturbance_dim(&self) -> usize {
        self.d.ncols()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn d(&self) -> &DMatrix<f64> {
        &self.d
    }
}

/// Quadratic cost weights and horizon: stage `Q`, input `R`, terminal `Q_f`.
#[derive(Debug, Clone)]
pub struct CostSpec {
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    qf: DMatrix<f64>,
    horizon: usize,
}

impl CostSpec {
    pub fn new(q: DMatrix<f64>, r: DMatrix<f64>, qf: DMatrix<f64>, horizon: usize) -> Result<Self> {
        Self::with_tolerances(q, r, qf, horizon, &Tolerances::default())
    }

    pub fn with_tolerances(
        q: DMatrix<f64>,
        r: DMatrix<f64>,
        qf: DMatrix<f64>,
        horizon: usize,
        tol: &Tolerances,
    ) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::LengthMismatch {
                context: "CostSpec.horizon",
                expected: 1,
                actual: 0,
            });
        }
        check_finite(&q, "CostSpec.Q")?;
        check_finite(&r, "CostSpec.R")?;
        check_finite(&qf, "CostSpec.Q_f")?;
        check_symmetric(&q, tol.sym, "CostSpec.Q")?;
        check_symmetric(&r, tol.sym, "CostSpec.R")?;
        check_symmetric(&qf, tol.sym, "CostSpec.Q_f")?;
        check_psd(&q, tol.psd, "CostSpec.Q")?;
        check_psd(&qf, tol.psd, "CostSpec.Q_f")?;
        check_pd(&r, "CostSpec.R")?;
        if qf.nrows() != q.nrows() {
            return Err(Error::DimensionMismatch {
                context: "CostSpec.Q_f",
                expected: format!("{0}x{0}", q.nrows()),
                actual: format!("{}x{}", qf.nrows(), qf.ncols()),
            });
        }
        Ok(Self { q, r, qf, horizon })
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn qf(&self) -> &DMatrix<f64> {
        &self.qf
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Same weights over a different horizon.
    pub fn with_horizon(&self, horizon: usize) -> Result<Self> {
        Self::new(self.q.clone(), self.r.clone(), self.qf.clone(), horizon)
    }
}

/// A time-varying linear state-feedback law `u_k = K_k x_k`.
#[derive(Debug, Clone)]
pub struct Policy {
    gains: Vec<DMatrix<f64>>,
}

impl Policy {
    pub fn new(gains: Vec<DMatrix<f64>>) -> Result<Self> {
        if gains.is_empty() {
            return Err(Error::LengthMismatch {
                context: "Policy.gains",
                expected: 1,
                actual: 0,
            });
        }
        let (m, n) = (gains[0].nrows(), gains[0].ncols());
        for k in &gains {
            check_finite(k, "Policy.gains")?;
            if k.nrows() != m || k.ncols() != n {
                return Err(Error::DimensionMismatch {
                    context: "Policy.gains",
                    expected: format!("{m}x{n}"),
                    actual: format!("{}x{}", k.nrows(), k.ncols()),
                });
            }
        }
        Ok(Self { gains })
    }

    /// A single gain replicated over the horizon.
    pub fn stationary(gain: DMatrix<f64>, horizon: usize) -> Result<Self> {
        Self::new(vec![gain; horizon])
    }

    pub fn horizon(&self) -> usize {
        self.gains.len()
    }

    pub fn gain(&self, k: usize) -> &DMatrix<f64> {
        &self.gains[k]
    }

    pub fn gains(&self) -> &[DMatrix<f64>] {
        &self.gains
    }
}

/// Backward cost-to-go matrices `P_0, ..., P_T` with `P_T = Q_f`.
#[derive(Debug, Clone)]
pub struct ValueMatrices {
    cost_to_go: Vec<DMatrix<f64>>,
}

impl ValueMatrices {
    pub fn cost_to_go(&self) -> &[DMatrix<f64>] {
        &self.cost_to_go
    }
}

/// A realized closed-loop run together with its cost.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub states: Vec<DVector<f64>>,
    pub inputs: Vec<DVector<f64>>,
    pub disturbances: Vec<DVector<f64>>,
    pub cost: f64,
}

/// Finite-horizon LQR gains via the backward Riccati recursion.
///
/// `K_k = -(R + B^T P_{k+1} B)^{-1} B^T P_{k+1} A`, with `P_T = Q_f`.
/// The inner matrix is inverted through its Cholesky factor; a failure there
/// signals an invalid `CostSpec` and is raised as an error.
pub fn riccati_finite_horizon(
    sys: &LinearSystem,
    cost: &CostSpec,
) -> Result<(Policy, ValueMatrices)> {
    check_cost_dims(sys, cost)?;
    let t = cost.horizon();
    let a = sys.a();
    let b = sys.b();

    let mut p_seq = vec![DMatrix::zeros(0, 0); t + 1];
    p_seq[t] = cost.qf().clone();
    let mut gains = vec![DMatrix::zeros(0, 0); t];

    for k in (0..t).rev() {
        let p_next = &p_seq[k + 1];
        let btp = b.transpose() * p_next;
        let inner = symmetrize(&(cost.r() + &btp * b));
        let chol = nalgebra::Cholesky::new(inner).ok_or(Error::NotPd {
            context: "riccati inner matrix R + B'PB",
            min_eig: f64::NAN,
        })?;
        let btpa = &btp * a;
        let gain = -chol.solve(&btpa);
        let p = cost.q() + a.transpose() * p_next * a + btpa.transpose() * &gain;
        // averaging with the transpose controls floating-point asymmetry drift
        p_seq[k] = symmetrize(&p);
        gains[k] = gain;
    }

    Ok((
        Policy::new(gains)?,
        ValueMatrices {
            cost_to_go: p_seq,
        },
    ))
}

/// Stationary LQR gain from the discrete algebraic Riccati equation, solved by
/// fixed-point iteration of the finite-horizon recursion.
///
/// Returns `(K, P)` with `||P - f(P)||_inf < tol` and a stable closed loop.
pub fn dare_stationary(
    sys: &LinearSystem,
    cost: &CostSpec,
    tol: f64,
    max_iter: usize,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    check_cost_dims(sys, cost)?;
    let a = sys.a();
    let b = sys.b();

    let step = |p: &DMatrix<f64>| -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let btp = b.transpose() * p;
        let inner = symmetrize(&(cost.r() + &btp * b));
        let chol = nalgebra::Cholesky::new(inner).ok_or(Error::NotPd {
            context: "DARE inner matrix R + B'PB",
            min_eig: f64::NAN,
        })?;
        let btpa = &btp * a;
        let gain = -chol.solve(&btpa);
        let next = symmetrize(&(cost.q() + a.transpose() * p * a + btpa.transpose() * &gain));
        Ok((next, gain))
    };

    let mut p = cost.qf().clone();
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        let (next, _) = step(&p)?;
        residual = (&next - &p).amax();
        p = next;
        if residual < tol {
            let (_, gain) = step(&p)?;
            let rho = spectral_radius(&(a + b * &gain));
            if rho >= 1.0 {
                return Err(Error::UnstableClosedLoop { rho });
            }
            return Ok((gain, p));
        }
    }
    Err(Error::NoConvergence {
        context: "DARE fixed-point iteration",
        max_iter,
        residual,
    })
}

/// Roll the plant forward under a policy and a fixed disturbance sequence.
pub fn simulate(
    sys: &LinearSystem,
    policy: &Policy,
    x0: &DVector<f64>,
    w_seq: &[DVector<f64>],
    cost: &CostSpec,
) -> Result<Trajectory> {
    let t = cost.horizon();
    if policy.horizon() < t {
        return Err(Error::LengthMismatch {
            context: "simulate policy",
            expected: t,
            actual: policy.horizon(),
        });
    }
    if w_seq.len() != t {
        return Err(Error::LengthMismatch {
            context: "simulate disturbances",
            expected: t,
            actual: w_seq.len(),
        });
    }
    if x0.len() != sys.state_dim() {
        return Err(Error::DimensionMismatch {
            context: "simulate x0",
            expected: sys.state_dim().to_string(),
            actual: x0.len().to_string(),
        });
    }
    check_finite_vec(x0, "simulate x0")?;

    let mut states = Vec::with_capacity(t + 1);
    let mut inputs = Vec::with_capacity(t);
    states.push(x0.clone());
    for k in 0..t {
        let u = policy.gain(k) * &states[k];
        let next = sys.a() * &states[k] + sys.b() * &u + sys.d() * &w_seq[k];
        inputs.push(u);
        states.push(next);
    }
    let cost_value = trajectory_cost(&states, &inputs, cost)?;
    Ok(Trajectory {
        states,
        inputs,
        disturbances: w_seq.to_vec(),
        cost: cost_value,
    })
}

/// `||x_T||^2_{Q_f} + sum_k (||x_k||^2_Q + ||u_k||^2_R)`.
pub fn trajectory_cost(
    states: &[DVector<f64>],
    inputs: &[DVector<f64>],
    cost: &CostSpec,
) -> Result<f64> {
    let t = cost.horizon();
    if states.len() != t + 1 {
        return Err(Error::LengthMismatch {
            context: "trajectory_cost states",
            expected: t + 1,
            actual: states.len(),
        });
    }
    if inputs.len() != t {
        return Err(Error::LengthMismatch {
            context: "trajectory_cost inputs",
            expected: t,
            actual: inputs.len(),
        });
    }
    let mut total = (states[t].transpose() * cost.qf() * &states[t])[(0, 0)];
    for k in 0..t {
        total += (states[k].transpose() * cost.q() * &states[k])[(0, 0)];
        total += (inputs[k].transpose() * cost.r() * &inputs[k])[(0, 0)];
    }
    Ok(total)
}

fn check_cost_dims(sys: &LinearSystem, cost: &CostSpec) -> Result<()> {
    let n = sys.state_dim();
    let m = sys.input_dim();
    if cost.q().nrows() != n || cost.r().nrows() != m {
        return Err(Error::DimensionMismatch {
            context: "CostSpec vs LinearSystem",
            expected: format!("Q {n}x{n}, R {m}x{m}"),
            actual: format!(
                "Q {}x{}, R {}x{}",
                cost.q().nrows(),
                cost.q().ncols(),
                cost.r().nrows(),
                cost.r().ncols()
            ),
        });
    }
    Ok(())
}

/// The vehicle-steering benchmark plant and weights used throughout the tests.
pub mod steering {
    use super::*;

    pub fn system() -> LinearSystem {
        LinearSystem::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.0, 1.0]),
            DMatrix::from_row_slice(2, 1, &[0.06, 0.20]),
            DMatrix::identity(2, 2),
        )
        .unwrap()
    }

    pub fn cost(horizon: usize) -> CostSpec {
        CostSpec::new(
            DMatrix::identity(2, 2) * 10.0,
            DMatrix::identity(1, 1),
            DMatrix::identity(2, 2) * 10.0,
            horizon,
        )
        .unwrap()
    }

    pub fn sigma_w() -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[0.10, 0.03, 0.03, 0.20])
    }

    pub fn mu_x0() -> DVector<f64> {
        DVector::from_row_slice(&[-4.0, 4.0])
    }

    pub fn sigma_x0() -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[0.20, 0.02, 0.02, 0.20])
    }
}
