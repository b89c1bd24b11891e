//! Relative-dynamics optimal control problem.
//!
//! Each edge `k` carries a relative position `x_k ∈ ℝ²` and velocity
//! `ẋ_k ∈ ℝ²`. The full state is laid out as
//! `x = [x_1, …, x_n, ẋ_1, …, ẋ_n]` with each entry a 2-vector, so entry
//! `axis` of block `b` (0 = position, 1 = velocity) of edge `k` sits at index
//! `(b·n + k)·2 + axis`. Every 4n-dimensional operator is the corresponding
//! 2n-dimensional one Kronecker-multiplied by `I_2`.

mod closed_form;
mod spectrum;

pub use closed_form::{
    closed_form_h, h_inverse, oracle_h, solvability_report, HBlocks, HInverse, SolvabilityReport,
};
pub use spectrum::{
    closed_form_eigenvectors, closed_form_lambdas, partner_lambda, relative_m, spectrum_check,
    varpi, SpectrumReport,
};

use nalgebra::DVector;

use crate::convoy_graph::ConvoyGraph;
use crate::coupled_game::SINGULAR_RCOND;
use crate::numerics::{
    asymmetry, integrate, kron, reciprocal_condition, symmetrize, Matrix, OdeOptions, OdeSolution,
};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct RelativeGameProblem {
    pub n: usize,
    pub mu: Vec<f64>,
    pub omega: Vec<f64>,
    pub r: Vec<f64>,
    pub t_f: f64,
    /// `𝒜 = [[0, I_n], [0, 0]]`.
    pub a: Matrix,
    /// `ℬ_i = [0; β_i]`, one column each.
    pub b: Vec<Matrix>,
    /// `𝒲_i = diag(0, …, μ_i, …, 0)`.
    pub w: Vec<Matrix>,
    /// `𝒲_if = diag(0, …, ω_i, …, 0)`.
    pub w_f: Vec<Matrix>,
    /// `𝒮_i = ℬ_iℬ_iᵀ / r_i`.
    pub s: Vec<Matrix>,
}

fn i2() -> Matrix {
    Matrix::identity(2, 2)
}

/// Deterministic test vector for the layout self-check.
fn probe(len: usize) -> DVector<f64> {
    let mut state: u64 = 0x9e37_79b9_7f4a_7c15;
    DVector::from_fn(len, |_, _| {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    })
}

impl RelativeGameProblem {
    /// Weights may be zero (giving a trivial edge); `r` must be positive.
    pub fn new(mu: Vec<f64>, omega: Vec<f64>, r: Vec<f64>, t_f: f64) -> Result<Self> {
        let n = mu.len();
        if n == 0 {
            return Err(Error::Domain("relative problem has no edges".into()));
        }
        if omega.len() != n || r.len() != n {
            return Err(Error::Dimension(format!(
                "{n} running weights, {} terminal weights, {} control weights",
                omega.len(),
                r.len()
            )));
        }
        for k in 0..n {
            if !(mu[k] >= 0.0 && mu[k].is_finite() && omega[k] >= 0.0 && omega[k].is_finite()) {
                return Err(Error::Domain(format!(
                    "edge {k}: weights must be finite and nonnegative"
                )));
            }
            if !(r[k] > 0.0 && r[k].is_finite()) {
                return Err(Error::Domain(format!(
                    "edge {k}: control weight must be positive, got {}",
                    r[k]
                )));
            }
        }
        if !(t_f >= 0.0 && t_f.is_finite()) {
            return Err(Error::Domain(format!(
                "horizon must be nonnegative, got {t_f}"
            )));
        }
        let mut a = Matrix::zeros(2 * n, 2 * n);
        a.view_mut((0, n), (n, n)).fill_with_identity();
        let mut b = Vec::with_capacity(n);
        let mut w = Vec::with_capacity(n);
        let mut w_f = Vec::with_capacity(n);
        let mut s = Vec::with_capacity(n);
        for k in 0..n {
            let mut bk = Matrix::zeros(2 * n, 1);
            bk[(n + k, 0)] = 1.0;
            s.push(&bk * bk.transpose() / r[k]);
            b.push(bk);
            let mut wk = Matrix::zeros(n, n);
            wk[(k, k)] = mu[k];
            w.push(wk);
            let mut wf = Matrix::zeros(n, n);
            wf[(k, k)] = omega[k];
            w_f.push(wf);
        }
        let problem = Self {
            n,
            mu,
            omega,
            r,
            t_f,
            a,
            b,
            w,
            w_f,
            s,
        };
        problem.check_layout()?;
        Ok(problem)
    }

    /// Verifies `xᵀ Q_k x = μ_k(‖x_k‖² + ‖ẋ_k‖²)` on a probe vector.
    fn check_layout(&self) -> Result<()> {
        let x = probe(4 * self.n);
        for k in 0..self.n {
            let quad = x.dot(&(self.q4(k) * &x));
            let (p, v) = (self.position(&x, k), self.velocity(&x, k));
            let direct = self.mu[k] * (p[0] * p[0] + p[1] * p[1] + v[0] * v[0] + v[1] * v[1]);
            if (quad - direct).abs() > 1e-12 * (1.0 + direct.abs()) {
                return Err(Error::StructureViolation(format!(
                    "edge {k}: weight quadratic form {quad} differs from direct sum {direct}"
                )));
            }
        }
        Ok(())
    }

    pub fn position(&self, x: &DVector<f64>, k: usize) -> [f64; 2] {
        [x[2 * k], x[2 * k + 1]]
    }

    pub fn velocity(&self, x: &DVector<f64>, k: usize) -> [f64; 2] {
        [x[2 * (self.n + k)], x[2 * (self.n + k) + 1]]
    }

    /// Packs per-edge positions and velocities into the 4n layout.
    pub fn pack(&self, pos: &[[f64; 2]], vel: &[[f64; 2]]) -> DVector<f64> {
        let n = self.n;
        let mut x = DVector::zeros(4 * n);
        for k in 0..n {
            x[2 * k] = pos[k][0];
            x[2 * k + 1] = pos[k][1];
            x[2 * (n + k)] = vel[k][0];
            x[2 * (n + k) + 1] = vel[k][1];
        }
        x
    }

    /// `𝒬_k = I_2 ⊗ 𝒲_k` (2n × 2n).
    pub fn q(&self, k: usize) -> Matrix {
        kron(&i2(), &self.w[k])
    }

    /// `I_2 ⊗ 𝒲_kf` (2n × 2n).
    pub fn q_f(&self, k: usize) -> Matrix {
        kron(&i2(), &self.w_f[k])
    }

    pub fn a4(&self) -> Matrix {
        kron(&self.a, &i2())
    }

    pub fn b4(&self, k: usize) -> Matrix {
        kron(&self.b[k], &i2())
    }

    pub fn s4(&self, k: usize) -> Matrix {
        kron(&self.s[k], &i2())
    }

    pub fn q4(&self, k: usize) -> Matrix {
        kron(&self.q(k), &i2())
    }

    pub fn q4_f(&self, k: usize) -> Matrix {
        kron(&self.q_f(k), &i2())
    }

    /// Same weights over a different horizon.
    pub fn with_horizon(&self, t_f: f64) -> Self {
        Self {
            t_f,
            ..self.clone()
        }
    }
}

pub fn build_relative_problem(
    graph: &ConvoyGraph,
    r: &[f64],
    t_f: f64,
) -> Result<RelativeGameProblem> {
    let edges = graph.edges();
    if r.len() != edges.len() {
        return Err(Error::Dimension(format!(
            "{} control weights for {} edges",
            r.len(),
            edges.len()
        )));
    }
    RelativeGameProblem::new(
        edges.iter().map(|e| e.mu).collect(),
        edges.iter().map(|e| e.omega).collect(),
        r.to_vec(),
        t_f,
    )
}

/// `𝒫_k(t)` over `[0, t_f]` for one edge.
#[derive(Debug, Clone)]
pub struct RiccatiSolution {
    pub edge: usize,
    pub sample_times: Vec<f64>,
    /// Symmetric 4n × 4n samples.
    pub p: Vec<Matrix>,
    ode: OdeSolution,
}

fn riccati_rhs(a4: &Matrix, s4: &Matrix, q4: &Matrix, p: &Matrix) -> Matrix {
    let f = -(p * a4 + a4.transpose() * p - p * s4 * p + q4);
    symmetrize(&f)
}

impl RiccatiSolution {
    pub fn at(&self, t: f64) -> Result<Matrix> {
        Ok(symmetrize(&self.ode.eval(t)?))
    }

    pub fn initial(&self) -> &Matrix {
        &self.p[0]
    }

    pub fn terminal(&self) -> &Matrix {
        self.p.last().unwrap()
    }

    /// `‖Ṗ + P𝒜 + 𝒜ᵀP − P𝒮P + 𝒬‖_max` at `t`, with `Ṗ` from the dense
    /// interpolant rather than the right-hand side.
    pub fn residual(&self, problem: &RelativeGameProblem, t: f64) -> Result<f64> {
        let p = self.at(t)?;
        let dp = self.ode.eval_derivative(t)?;
        let a4 = problem.a4();
        let k = self.edge;
        let r = dp + &p * &a4 + a4.transpose() * &p - &p * problem.s4(k) * &p + problem.q4(k);
        Ok(r.amax())
    }

    pub fn max_asymmetry(&self) -> f64 {
        self.p.iter().map(asymmetry).fold(0.0, f64::max)
    }
}

/// Integrator settings for Riccati solves: the step cap keeps the dense
/// interpolant's derivative accurate enough for residual checks.
pub fn riccati_options(t_f: f64) -> OdeOptions {
    OdeOptions {
        max_step: Some(t_f / 128.0),
        ..OdeOptions::default()
    }
}

/// Backward solve of the per-edge symmetric Riccati equations with terminal
/// value `I_2 ⊗ 𝒲_kf` (in the 4n layout). `samples` uniform intervals are
/// reported in addition to the endpoints.
pub fn solve_relative_riccati(
    problem: &RelativeGameProblem,
    samples: usize,
) -> Result<Vec<RiccatiSolution>> {
    if !(problem.t_f > 0.0) {
        return Err(Error::Domain(
            "Riccati solve needs a positive horizon".into(),
        ));
    }
    let rcond = reciprocal_condition(&oracle_h(problem)?);
    if rcond < SINGULAR_RCOND {
        return Err(Error::Unsolvable(format!(
            "solvability matrix is singular (rcond {rcond:.3e})"
        )));
    }
    let a4 = problem.a4();
    let grid: Vec<f64> = (0..=samples.max(1))
        .map(|j| problem.t_f * j as f64 / samples.max(1) as f64)
        .collect();
    (0..problem.n)
        .map(|k| {
            let s4 = problem.s4(k);
            let q4 = problem.q4(k);
            let ode = integrate(
                |_, p| riccati_rhs(&a4, &s4, &q4, p),
                &problem.q4_f(k),
                (problem.t_f, 0.0),
                &grid,
                &riccati_options(problem.t_f),
            )?;
            let p = ode.sample_states.iter().map(symmetrize).collect();
            Ok(RiccatiSolution {
                edge: k,
                sample_times: ode.sample_times.clone(),
                p,
                ode,
            })
        })
        .collect()
}

/// Stacked relative controls `e = [e_1, …, e_n]` for the time-`t` Riccati
/// values: `e_k = −(1/r_k)(ℬ_kᵀ ⊗ I_2)𝒫_k x`.
pub fn relative_controls(
    problem: &RelativeGameProblem,
    p: &[Matrix],
    x: &DVector<f64>,
) -> DVector<f64> {
    let mut e = DVector::zeros(2 * problem.n);
    for k in 0..problem.n {
        let ek = -(problem.b4(k).transpose() * &p[k] * x) / problem.r[k];
        e[2 * k] = ek[0];
        e[2 * k + 1] = ek[1];
    }
    e
}

/// `ẋ = (𝒜 ⊗ I_2)x + Σ (ℬ_k ⊗ I_2)e_k`.
pub fn relative_dynamics(
    problem: &RelativeGameProblem,
    x: &DVector<f64>,
    e: &DVector<f64>,
) -> DVector<f64> {
    let n = problem.n;
    let mut dx = DVector::zeros(4 * n);
    for j in 0..2 * n {
        dx[j] = x[2 * n + j];
        dx[2 * n + j] = e[j];
    }
    dx
}

#[derive(Debug, Clone)]
pub struct RelativeTrajectory {
    pub times: Vec<f64>,
    pub x: Vec<DVector<f64>>,
    pub e: Vec<DVector<f64>>,
}

/// Open-loop optimal trajectory over one horizon from `x0`.
pub fn open_loop_control(
    problem: &RelativeGameProblem,
    solutions: &[RiccatiSolution],
    x0: &DVector<f64>,
    samples: usize,
) -> Result<RelativeTrajectory> {
    let n = problem.n;
    if x0.len() != 4 * n || solutions.len() != n {
        return Err(Error::Dimension(format!(
            "expected a {}-vector and {n} Riccati solutions",
            4 * n
        )));
    }
    let p_at = |t: f64| -> Vec<Matrix> {
        solutions
            .iter()
            .map(|s| s.at(t).expect("time within horizon"))
            .collect()
    };
    let grid: Vec<f64> = (0..=samples.max(1))
        .map(|j| problem.t_f * j as f64 / samples.max(1) as f64)
        .collect();
    let ode = integrate(
        |t, x| {
            let xv = x.column(0).into_owned();
            let e = relative_controls(problem, &p_at(t), &xv);
            Matrix::from_column_slice(4 * n, 1, relative_dynamics(problem, &xv, &e).as_slice())
        },
        &Matrix::from_column_slice(4 * n, 1, x0.as_slice()),
        (0.0, problem.t_f),
        &grid,
        &OdeOptions::default(),
    )?;
    let x: Vec<DVector<f64>> = ode
        .sample_states
        .iter()
        .map(|s| s.column(0).into_owned())
        .collect();
    let e = ode
        .sample_times
        .iter()
        .zip(&x)
        .map(|(&t, xk)| relative_controls(problem, &p_at(t), xk))
        .collect();
    Ok(RelativeTrajectory {
        times: ode.sample_times,
        x,
        e,
    })
}

/// Finite-horizon cost of edge `k` under the feedback `control(t, x)`,
/// integrated together with the state from `x0`.
pub fn edge_cost<F>(
    problem: &RelativeGameProblem,
    k: usize,
    x0: &DVector<f64>,
    control: F,
) -> Result<f64>
where
    F: Fn(f64, &DVector<f64>) -> DVector<f64>,
{
    let n = problem.n;
    let q4 = problem.q4(k);
    let mut init = Matrix::zeros(4 * n + 1, 1);
    init.view_mut((0, 0), (4 * n, 1)).copy_from(x0);
    let ode = integrate(
        |t, y| {
            let x = y.view((0, 0), (4 * n, 1)).column(0).into_owned();
            let e = control(t, &x);
            let dx = relative_dynamics(problem, &x, &e);
            let ek = [e[2 * k], e[2 * k + 1]];
            let running = x.dot(&(&q4 * &x)) + problem.r[k] * (ek[0] * ek[0] + ek[1] * ek[1]);
            let mut out = Matrix::zeros(4 * n + 1, 1);
            out.view_mut((0, 0), (4 * n, 1)).copy_from(&dx);
            out[(4 * n, 0)] = running;
            out
        },
        &init,
        (0.0, problem.t_f),
        &[],
        &OdeOptions::default(),
    )?;
    let y = ode.terminal(true);
    let x = y.view((0, 0), (4 * n, 1)).column(0).into_owned();
    Ok(x.dot(&(problem.q4_f(k) * &x)) + y[(4 * n, 0)])
}
