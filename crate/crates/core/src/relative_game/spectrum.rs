//! Eigenstructure of the relative solvability matrix 𝔐.

use nalgebra::DVector;

use super::RelativeGameProblem;
use crate::numerics::{eig, multiset_max_mismatch, rank, Matrix, C64, CLUSTER_RADIUS};
use crate::{Error, Result};

/// Relative size below which `μ/r − λ⁴` counts as zero.
const DEGENERATE_TOL: f64 = 1e-10;

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// `λ = √((μ + √(μ² − 4μr)) / 2r)`, principal branches.
pub fn lambda_for(mu: f64, r: f64) -> C64 {
    ((c(mu) + c(mu * mu - 4.0 * mu * r).sqrt()) / (2.0 * r)).sqrt()
}

/// The other root of `λ⁴ − (μ/r)λ² + μ/r = 0` in the right half plane:
/// `√((μ − √(μ² − 4μr)) / 2r)`. Equals `λ̄` whenever `μ < 4r`.
pub fn partner_lambda(mu: f64, r: f64) -> C64 {
    ((c(mu) - c(mu * mu - 4.0 * mu * r).sqrt()) / (2.0 * r)).sqrt()
}

fn check_edge(problem: &RelativeGameProblem, k: usize) -> Result<C64> {
    let (mu, r) = (problem.mu[k], problem.r[k]);
    if !(mu > 0.0) {
        return Err(Error::Degenerate {
            edge: k,
            reason: "running weight must be positive for the closed form".into(),
        });
    }
    let lam = lambda_for(mu, r);
    let b = mu / r;
    if (c(b) - lam.powi(4)).norm() <= DEGENERATE_TOL * b.max(1.0) {
        return Err(Error::Degenerate {
            edge: k,
            reason: format!("μ/r = λ⁴ (μ = {mu}, r = {r}); the closed form divides by zero"),
        });
    }
    Ok(lam)
}

pub fn closed_form_lambdas(problem: &RelativeGameProblem) -> Result<Vec<C64>> {
    (0..problem.n).map(|k| check_edge(problem, k)).collect()
}

/// `ϖ_k` with `ϖ_k² = ½λ_k³(μ_k/r_k − λ_k⁴)⁻¹`, principal branch.
pub fn varpi(problem: &RelativeGameProblem) -> Result<Vec<C64>> {
    (0..problem.n)
        .map(|k| {
            let lam = check_edge(problem, k)?;
            let b = problem.mu[k] / problem.r[k];
            Ok((lam.powi(3) * 0.5 / (c(b) - lam.powi(4))).sqrt())
        })
        .collect()
}

/// `𝔐 = [[−𝒜, 𝒮_1, …, 𝒮_n], [𝒬_1, 𝒜ᵀ, …], …, [𝒬_n, …, 𝒜ᵀ]]`, size 2n(n+1).
pub fn relative_m(problem: &RelativeGameProblem) -> Matrix {
    let n2 = 2 * problem.n;
    let size = n2 * (problem.n + 1);
    let mut m = Matrix::zeros(size, size);
    m.view_mut((0, 0), (n2, n2)).copy_from(&(-&problem.a));
    let at = problem.a.transpose();
    for k in 0..problem.n {
        let o = n2 * (k + 1);
        m.view_mut((0, o), (n2, n2)).copy_from(&problem.s[k]);
        m.view_mut((o, 0), (n2, n2)).copy_from(&problem.q(k));
        m.view_mut((o, o), (n2, n2)).copy_from(&at);
    }
    m
}

/// Right and left eigenvectors of 𝔐 for `λ_k`, normalized so `w·v = 1`.
pub fn closed_form_eigenvectors(
    problem: &RelativeGameProblem,
    k: usize,
) -> Result<(DVector<C64>, DVector<C64>)> {
    let n = problem.n;
    let lam = check_edge(problem, k)?;
    let vp = varpi(problem)?[k];
    let (mu, r) = (problem.mu[k], problem.r[k]);
    let size = 2 * n * (n + 1);
    let off = 2 * n * (k + 1);
    let mut v = DVector::from_element(size, c(0.0));
    let mut w = DVector::from_element(size, c(0.0));
    v[k] = vp;
    v[n + k] = -lam * vp;
    v[off + k] = vp * mu / lam;
    v[off + n + k] = vp * mu * (lam.powi(-2) - 1.0);
    w[k] = vp * (c(mu / r) / lam - lam);
    w[n + k] = vp;
    w[off + k] = vp / (lam * lam * r);
    w[off + n + k] = vp / (lam * r);
    Ok((v, w))
}

#[derive(Debug, Clone)]
pub struct SpectrumReport {
    pub computed: Vec<C64>,
    pub expected: Vec<C64>,
    pub mismatch: f64,
    pub zero_count: usize,
    pub expected_zeros: usize,
    pub nullity: usize,
    pub expected_nullity: usize,
    pub ok: bool,
}

/// Compares the numerical spectrum of 𝔐 with `{0 × 2n(n−1)} ∪ {±λ_k, ±λ'_k}`
/// and its null space dimension with `n(n−1)`.
pub fn spectrum_check(problem: &RelativeGameProblem) -> Result<SpectrumReport> {
    let n = problem.n;
    if n > 6 {
        return Err(Error::Domain(format!(
            "spectrum check limited to n ≤ 6, got {n}"
        )));
    }
    let lambdas = closed_form_lambdas(problem)?;
    let m = relative_m(problem);
    let decomposition = eig(&m)?;
    let expected_zeros = 2 * n * (n - 1);
    let mut expected = vec![c(0.0); expected_zeros];
    for (k, lam) in lambdas.iter().enumerate() {
        let other = partner_lambda(problem.mu[k], problem.r[k]);
        expected.extend([*lam, other, -*lam, -other]);
    }
    let mismatch = multiset_max_mismatch(&decomposition.values, &expected);
    let zero_count = decomposition.multiplicity(c(0.0), CLUSTER_RADIUS);
    let nullity = m.nrows() - rank(&m, 1e-10);
    let expected_nullity = n * (n - 1);
    Ok(SpectrumReport {
        ok: mismatch <= CLUSTER_RADIUS
            && zero_count == expected_zeros
            && nullity == expected_nullity,
        computed: decomposition.values,
        expected,
        mismatch,
        zero_count,
        expected_zeros,
        nullity,
        expected_nullity,
    })
}
