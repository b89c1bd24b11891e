//! Receding-horizon state feedback built from the horizon-start Riccati
//! values, its closed-loop matrix and stability certificate.

use nalgebra::DVector;

use crate::numerics::{eig, kron, kron_sum, solve, symmetrize, Matrix, C64};
use crate::relative_game::{RelativeGameProblem, RiccatiSolution};
use crate::{Error, Result};

/// Ordered `(tail, head)` pairs identifying the edge set a gain was built for.
pub type EdgeSignature = Vec<(usize, usize)>;

#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackGain {
    /// Row `k` is `G_k = (1/r_k) ℬ_kᵀ p_k(0)` acting on the per-axis 2n state.
    pub rows: Matrix,
    pub t_f: f64,
    pub tau: f64,
    pub signature: EdgeSignature,
}

impl FeedbackGain {
    pub fn n(&self) -> usize {
        self.rows.nrows()
    }

    /// `(G ⊗ I_2)`, mapping the 4n state to the 2n stacked controls.
    pub fn lifted(&self) -> Matrix {
        kron(&self.rows, &Matrix::identity(2, 2))
    }

    /// `e = −(G ⊗ I_2) x`.
    pub fn controls(&self, x: &DVector<f64>) -> DVector<f64> {
        -(self.lifted() * x)
    }

    /// Sign-flipped gains, for exercising the instability path.
    pub fn negated(&self) -> Self {
        Self {
            rows: -&self.rows,
            ..self.clone()
        }
    }

    pub fn ensure_current(&self, active: &[(usize, usize)]) -> Result<()> {
        if self.signature.as_slice() == active {
            Ok(())
        } else {
            Err(Error::StaleGains(format!(
                "gains were synthesized for edges {:?} but the active edge set is {:?}; recompute P(0)",
                self.signature, active
            )))
        }
    }
}

/// Per-axis factor `p` of a 4n matrix `p ⊗ I_2`.
fn per_axis(p4: &Matrix) -> Result<Matrix> {
    let n2 = p4.nrows() / 2;
    let p = Matrix::from_fn(n2, n2, |a, b| p4[(2 * a, 2 * b)]);
    let rebuilt = kron(&p, &Matrix::identity(2, 2));
    if (&rebuilt - p4).amax() > 1e-12 * (1.0 + p4.amax()) {
        return Err(Error::StructureViolation(
            "Riccati solution is not of the form p ⊗ I_2".into(),
        ));
    }
    Ok(p)
}

pub fn synthesize_gains(
    problem: &RelativeGameProblem,
    solutions: &[RiccatiSolution],
    tau: f64,
    signature: EdgeSignature,
) -> Result<FeedbackGain> {
    let n = problem.n;
    if solutions.len() != n {
        return Err(Error::Domain(format!(
            "{} Riccati solutions supplied for {n} edges",
            solutions.len()
        )));
    }
    if !(tau > 0.0 && tau <= problem.t_f) {
        return Err(Error::Domain(format!(
            "update step must satisfy 0 < tau <= t_f, got tau = {tau}, t_f = {}",
            problem.t_f
        )));
    }
    if signature.len() != n {
        return Err(Error::Dimension(format!(
            "signature lists {} edges, problem has {n}",
            signature.len()
        )));
    }
    let mut rows = Matrix::zeros(n, 2 * n);
    for (k, sol) in solutions.iter().enumerate() {
        if sol.edge != k {
            return Err(Error::Domain(format!(
                "Riccati solution for edge {} supplied at slot {k}",
                sol.edge
            )));
        }
        let p = per_axis(sol.initial())?;
        let g = problem.b[k].transpose() * p / problem.r[k];
        rows.row_mut(k).copy_from(&g);
    }
    if !rows.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("feedback gain"));
    }
    Ok(FeedbackGain {
        rows,
        t_f: problem.t_f,
        tau,
        signature,
    })
}

#[derive(Debug, Clone)]
pub struct StabilityReport {
    pub a_cl: Matrix,
    pub spectrum: Vec<C64>,
    pub max_real_part: f64,
    pub hurwitz: bool,
    /// Solution of `P A_cl + A_clᵀ P + I = 0`.
    pub lyapunov_p: Matrix,
    pub lyapunov_residual: f64,
    pub min_p_eigenvalue: f64,
    pub pd_flag: bool,
}

/// Spectrum and `Q = I` Lyapunov certificate of an arbitrary square matrix.
pub fn stability_of(a_cl: &Matrix) -> Result<StabilityReport> {
    let n = a_cl.nrows();
    let decomposition = eig(a_cl)?;
    let max_real_part = decomposition
        .values
        .iter()
        .map(|v| v.re)
        .fold(f64::NEG_INFINITY, f64::max);
    let at = a_cl.transpose();
    let op = kron_sum(&at, &at)?;
    let rhs = Matrix::from_column_slice(n * n, 1, (-Matrix::identity(n, n)).as_slice());
    let vec_p = solve(&op, &rhs).map_err(|e| match e {
        Error::Singular { .. } => Error::MarginalStability,
        other => other,
    })?;
    let p = symmetrize(&Matrix::from_column_slice(n, n, vec_p.as_slice()));
    let lyapunov_residual = (&p * a_cl + &at * &p + Matrix::identity(n, n)).amax();
    let min_p_eigenvalue = p.clone().symmetric_eigen().eigenvalues.min();
    Ok(StabilityReport {
        a_cl: a_cl.clone(),
        hurwitz: max_real_part < 0.0,
        spectrum: decomposition.values,
        max_real_part,
        lyapunov_p: p,
        lyapunov_residual,
        pd_flag: min_p_eigenvalue > 0.0,
        min_p_eigenvalue,
    })
}

/// `𝒜_cl = 𝒜 − Σ_k 𝒮_k p_k(0) = 𝒜 − [0; I_n] G`.
pub fn closed_loop_matrix(problem: &RelativeGameProblem, gains: &FeedbackGain) -> Matrix {
    let n = problem.n;
    let mut a_cl = problem.a.clone();
    let mut lower = a_cl.view_mut((n, 0), (n, 2 * n));
    lower -= &gains.rows;
    a_cl
}

pub fn closed_loop(problem: &RelativeGameProblem, gains: &FeedbackGain) -> Result<StabilityReport> {
    if gains.n() != problem.n {
        return Err(Error::Dimension(format!(
            "gains for {} edges, problem has {}",
            gains.n(),
            problem.n
        )));
    }
    stability_of(&closed_loop_matrix(problem, gains))
}

#[derive(Debug, Clone)]
pub struct RhStep {
    /// Controls held over `[t, t + τ)`.
    pub e: DVector<f64>,
    /// Relative state at `t + τ` under the held controls.
    pub x_next: DVector<f64>,
}

/// One receding-horizon update from the measured relative state.
pub fn rh_step(
    x: &DVector<f64>,
    gains: &FeedbackGain,
    active: &[(usize, usize)],
) -> Result<RhStep> {
    gains.ensure_current(active)?;
    let n = gains.n();
    if x.len() != 4 * n {
        return Err(Error::Dimension(format!(
            "state has {} entries, expected {}",
            x.len(),
            4 * n
        )));
    }
    let e = gains.controls(x);
    let tau = gains.tau;
    let mut x_next = x.clone();
    for j in 0..2 * n {
        let v = x[2 * n + j];
        x_next[j] = x[j] + tau * v + 0.5 * tau * tau * e[j];
        x_next[2 * n + j] = v + tau * e[j];
    }
    Ok(RhStep { e, x_next })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relative_game::solve_relative_riccati;

    fn setup() -> (RelativeGameProblem, FeedbackGain) {
        let p = RelativeGameProblem::new(vec![1.0], vec![5.0], vec![1.0], 0.3).unwrap();
        let sols = solve_relative_riccati(&p, 10).unwrap();
        let g = synthesize_gains(&p, &sols, 0.1, vec![(0, 1)]).unwrap();
        (p, g)
    }

    #[test]
    fn reference_gain() {
        let (_, g) = setup();
        assert!((g.rows[(0, 0)] - 1.0443061).abs() < 1e-7);
        assert!((g.rows[(0, 1)] - 2.36794541).abs() < 1e-7);
    }

    #[test]
    fn zero_state_zero_control() {
        let (_, g) = setup();
        let s = rh_step(&DVector::zeros(4), &g, &[(0, 1)]).unwrap();
        assert_eq!(s.e.amax(), 0.0);
        assert_eq!(s.x_next.amax(), 0.0);
    }

    #[test]
    fn stale_gains_rejected() {
        let (_, g) = setup();
        assert!(matches!(
            rh_step(&DVector::zeros(4), &g, &[(1, 0)]),
            Err(Error::StaleGains(_))
        ));
    }

    #[test]
    fn double_integrator_without_gain_is_marginal() {
        let (p, g) = setup();
        let zero = FeedbackGain {
            rows: Matrix::zeros(1, 2),
            ..g
        };
        let a_cl = closed_loop_matrix(&p, &zero);
        assert_eq!(a_cl, p.a);
        assert!(matches!(
            closed_loop(&p, &zero),
            Err(Error::MarginalStability)
        ));
        assert!(!eig(&a_cl).unwrap().values.iter().any(|v| v.re < 0.0));
    }

    #[test]
    fn closed_loop_reference_spectrum() {
        let (p, g) = setup();
        let r = closed_loop(&p, &g).unwrap();
        assert!(r.hurwitz && r.pd_flag);
        assert!((r.spectrum[0].re + 0.586).abs() < 1e-3);
        assert!((r.spectrum[1].re + 1.782).abs() < 1e-3);
        assert!(!closed_loop(&p, &g.negated()).unwrap().hurwitz);
    }
}
