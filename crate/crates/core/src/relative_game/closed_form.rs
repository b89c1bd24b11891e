//! Closed-form solvability matrix 𝔥(t_f), its eigenstructure and inverse.

use nalgebra::DVector;

use super::spectrum::{closed_form_lambdas, partner_lambda, varpi};
use super::RelativeGameProblem;
use crate::coupled_game::SINGULAR_RCOND;
use crate::numerics::{det, expm, norm1, reciprocal_condition, CMatrix, Matrix, C64};
use crate::{Error, Result};

/// Per-edge entries of `𝔥 = [[diag(h), diag(h̃)], [diag(ȟ), diag(ĥ)]]`.
#[derive(Debug, Clone)]
pub struct HBlocks {
    pub h: Vec<f64>,
    pub h_tilde: Vec<f64>,
    pub h_check: Vec<f64>,
    pub h_hat: Vec<f64>,
    /// Largest imaginary part discarded when taking real parts.
    pub imag_residue: f64,
}

impl HBlocks {
    pub fn n(&self) -> usize {
        self.h.len()
    }

    pub fn to_matrix(&self) -> Matrix {
        let n = self.n();
        let mut m = Matrix::zeros(2 * n, 2 * n);
        for k in 0..n {
            m[(k, k)] = self.h[k];
            m[(k, n + k)] = self.h_tilde[k];
            m[(n + k, k)] = self.h_check[k];
            m[(n + k, n + k)] = self.h_hat[k];
        }
        m
    }
}

/// The four element expressions evaluated at one root.
fn elements(lam: C64, mu: f64, omega: f64, r: f64, t_f: f64) -> [C64; 4] {
    let a = omega / r;
    let b = mu / r;
    let scale = (C64::new(b, 0.0) - lam.powi(4)).inv();
    let ep = (lam * t_f).exp();
    let em = (-lam * t_f).exp();
    let (l, l2, l3, l4, l5) = (lam, lam.powi(2), lam.powi(3), lam.powi(4), lam.powi(5));
    [
        scale * (ep * (l * a + l2 * b - l4) - em * (l * a - l2 * b + l4)),
        scale * (ep * (l3 + l2 * a) - em * (l3 - l2 * a)),
        scale * (ep * (-l2 * a - l3 * b + l5) - em * (l2 * a - l3 * b + l5)),
        scale * (ep * (-l3 * a - l4) - em * (-l3 * a + l4)),
    ]
}

/// Closed-form 𝔥(t_f). Each entry averages the expression over the two
/// right-half-plane roots `λ` and `λ'`; for complex roots `λ' = λ̄` and this
/// is the real part of the single-root expression.
pub fn closed_form_h(problem: &RelativeGameProblem) -> Result<HBlocks> {
    let lambdas = closed_form_lambdas(problem)?;
    let n = problem.n;
    let mut out = HBlocks {
        h: vec![0.0; n],
        h_tilde: vec![0.0; n],
        h_check: vec![0.0; n],
        h_hat: vec![0.0; n],
        imag_residue: 0.0,
    };
    for k in 0..n {
        let (mu, om, r) = (problem.mu[k], problem.omega[k], problem.r[k]);
        let first = elements(lambdas[k], mu, om, r, problem.t_f);
        let second = elements(partner_lambda(mu, r), mu, om, r, problem.t_f);
        let vals: Vec<C64> = first
            .iter()
            .zip(&second)
            .map(|(x, y)| (x + y) * 0.5)
            .collect();
        for v in &vals {
            out.imag_residue = out.imag_residue.max(v.im.abs());
        }
        out.h[k] = vals[0].re;
        out.h_tilde[k] = vals[1].re;
        out.h_check[k] = vals[2].re;
        out.h_hat[k] = vals[3].re;
    }
    Ok(out)
}

/// `[I_{2n} 0]·e^{t_f𝔐}·[I; I_2⊗𝒲_1f; …; I_2⊗𝒲_nf]`.
pub fn oracle_h(problem: &RelativeGameProblem) -> Result<Matrix> {
    let n2 = 2 * problem.n;
    let e = expm(&(super::relative_m(problem) * problem.t_f))?;
    let mut h = e.view((0, 0), (n2, n2)).into_owned();
    for k in 0..problem.n {
        h += e.view((0, n2 * (k + 1)), (n2, n2)) * problem.q_f(k);
    }
    Ok(h)
}

/// Eigen-factored inverse `𝔥⁻¹ = φΛ⁻¹ψ`.
#[derive(Debug, Clone)]
pub struct HInverse {
    /// `δ_k` for k < n take the '+' root, `δ_{n+k}` the '−' root.
    pub deltas: Vec<C64>,
    /// Right eigenvectors `y_k` as columns.
    pub right: CMatrix,
    /// Left eigenvectors `ỹ_k` as rows, with `ỹ_k y_k = 1`.
    pub left: CMatrix,
    pub inverse: Matrix,
    /// `‖𝔥·𝔥⁻¹ − I‖_max`.
    pub residual: f64,
    pub det_product: f64,
}

/// Eigenpair of the 2×2 block `[[a, b], [c, d]]` for eigenvalue `delta`.
/// The '+' root prefers the `(a−δ)` parametrization and the '−' root the
/// `(d−δ)` one; the other form is the fallback when a denominator vanishes,
/// and an unscaled vector is used when the first component is zero.
fn block_vectors(
    a: f64,
    b: f64,
    c: f64,
    d: f64,
    delta: C64,
    plus: bool,
    tiny: f64,
) -> ([C64; 2], [C64; 2]) {
    let one = C64::new(1.0, 0.0);
    let zero = C64::new(0.0, 0.0);
    let ad = C64::new(a, 0.0) - delta;
    let dd = C64::new(d, 0.0) - delta;
    let (b, c) = (C64::new(b, 0.0), C64::new(c, 0.0));
    // Right: (1, −(a−δ)/b) or (1, −c/(d−δ)); left: (1, −(a−δ)/c) or (1, −b/(d−δ)).
    let right_first = [b, -ad];
    let right_second = [dd, -c];
    let left_first = [c, -ad];
    let left_second = [dd, -b];
    let pick = |first: [C64; 2], second: [C64; 2], first_den: C64, second_den: C64| {
        let (pref, pden, alt, aden) = if plus {
            (first, first_den, second, second_den)
        } else {
            (second, second_den, first, first_den)
        };
        let norm = |v: &[C64; 2]| (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
        if pden.norm() > tiny {
            [pref[0] / pden, pref[1] / pden]
        } else if aden.norm() > tiny {
            [alt[0] / aden, alt[1] / aden]
        } else if norm(&pref) > tiny {
            pref
        } else if norm(&alt) > tiny {
            alt
        } else if plus {
            [one, zero]
        } else {
            [zero, one]
        }
    };
    let right = pick(right_first, right_second, b, dd);
    let left = pick(left_first, left_second, c, dd);
    (right, left)
}

/// Builds `δ`, `y`, `ỹ` per edge and returns `φΛ⁻¹ψ`.
pub fn h_inverse(blocks: &HBlocks) -> Result<HInverse> {
    let n = blocks.n();
    let hm = blocks.to_matrix();
    let scale = norm1(&hm).max(f64::MIN_POSITIVE);
    let tiny = 1e-12 * scale;
    let zero = C64::new(0.0, 0.0);
    let mut deltas = vec![zero; 2 * n];
    let mut right = CMatrix::from_element(2 * n, 2 * n, zero);
    let mut left = CMatrix::from_element(2 * n, 2 * n, zero);
    for k in 0..n {
        let (a, b, c, d) = (
            blocks.h[k],
            blocks.h_tilde[k],
            blocks.h_check[k],
            blocks.h_hat[k],
        );
        let diagonal = b.abs() <= tiny && c.abs() <= tiny;
        let pair = if diagonal {
            [C64::new(a, 0.0), C64::new(d, 0.0)]
        } else {
            let tr = C64::new(a + d, 0.0);
            let disc = (tr * tr - 4.0 * (a * d - b * c)).sqrt();
            [(tr + disc) * 0.5, (tr - disc) * 0.5]
        };
        for (branch, &delta) in pair.iter().enumerate() {
            let idx = branch * n + k;
            if delta.norm() <= tiny {
                return Err(Error::Singular {
                    condition: f64::INFINITY,
                });
            }
            let (rv, lv) = if diagonal {
                let e = if branch == 0 {
                    [C64::new(1.0, 0.0), zero]
                } else {
                    [zero, C64::new(1.0, 0.0)]
                };
                (e, e)
            } else {
                block_vectors(a, b, c, d, delta, branch == 0, tiny)
            };
            // y ỹ = 1 / (1 + r₂ l₂) in the (1, ·) parametrization;
            // split evenly between the two factors.
            let dot = lv[0] * rv[0] + lv[1] * rv[1];
            if dot.norm() <= f64::EPSILON {
                return Err(Error::Degenerate {
                    edge: k,
                    reason: "defective 2×2 block of the solvability matrix".into(),
                });
            }
            let y = dot.inv().sqrt();
            right[(k, idx)] = rv[0] * y;
            right[(n + k, idx)] = rv[1] * y;
            left[(idx, k)] = lv[0] * y;
            left[(idx, n + k)] = lv[1] * y;
            deltas[idx] = delta;
        }
    }
    let lambda_inv = CMatrix::from_diagonal(&DVector::from_iterator(
        2 * n,
        deltas.iter().map(|d| d.inv()),
    ));
    let inv_c = &right * lambda_inv * &left;
    let inverse = inv_c.map(|v| v.re);
    let residual = (&hm * &inverse - Matrix::identity(2 * n, 2 * n)).amax();
    let det_product = deltas.iter().fold(C64::new(1.0, 0.0), |acc, d| acc * d).re;
    Ok(HInverse {
        deltas,
        right,
        left,
        inverse,
        residual,
        det_product,
    })
}

#[derive(Debug, Clone)]
pub struct SolvabilityReport {
    pub lambdas: Vec<C64>,
    pub partners: Vec<C64>,
    pub varpi: Vec<C64>,
    pub h_closed: Matrix,
    pub h_oracle: Matrix,
    pub imag_residue: f64,
    /// `‖𝔥_closed − 𝔥_oracle‖_max`.
    pub discrepancy: f64,
    pub deltas: Vec<C64>,
    pub y: CMatrix,
    pub y_tilde: CMatrix,
    pub h_inverse: Matrix,
    pub inverse_residual: f64,
    pub det_product: f64,
    pub det_lu: f64,
    pub rcond: f64,
    pub nonsingular: bool,
}

pub fn solvability_report(problem: &RelativeGameProblem) -> Result<SolvabilityReport> {
    let lambdas = closed_form_lambdas(problem)?;
    let partners = (0..problem.n)
        .map(|k| partner_lambda(problem.mu[k], problem.r[k]))
        .collect();
    let blocks = closed_form_h(problem)?;
    let h_closed = blocks.to_matrix();
    let h_oracle = oracle_h(problem)?;
    let inv = h_inverse(&blocks).map_err(|e| match e {
        Error::Singular { .. } => {
            Error::Unsolvable("solvability matrix has a zero eigenvalue".into())
        }
        other => other,
    })?;
    let rcond = reciprocal_condition(&h_closed);
    Ok(SolvabilityReport {
        lambdas,
        partners,
        varpi: varpi(problem)?,
        discrepancy: (&h_closed - &h_oracle).amax(),
        imag_residue: blocks.imag_residue,
        det_lu: det(&h_closed)?,
        h_closed,
        h_oracle,
        nonsingular: rcond >= SINGULAR_RCOND && inv.residual <= 1e-8,
        deltas: inv.deltas,
        y: inv.right,
        y_tilde: inv.left,
        h_inverse: inv.inverse,
        inverse_residual: inv.residual,
        det_product: inv.det_product,
        rcond,
    })
}
