use nalgebra::{ComplexField, DMatrix, DVector};

use super::{ensure_finite, ensure_square, norm1};
use crate::{Error, Result};

/// Pivots below this fraction of `‖A‖₁` count as zero.
const PIVOT_TOL: f64 = 1e-12;

fn min_pivot<T: ComplexField<RealField = f64>>(u: &DMatrix<T>) -> f64 {
    u.diagonal()
        .iter()
        .map(|p| p.clone().abs())
        .fold(f64::INFINITY, f64::min)
}

fn max_pivot<T: ComplexField<RealField = f64>>(u: &DMatrix<T>) -> f64 {
    u.diagonal()
        .iter()
        .map(|p| p.clone().abs())
        .fold(0.0, f64::max)
}

/// Solves `A X = B` by partially pivoted LU.
pub fn solve<T: ComplexField<RealField = f64>>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
) -> Result<DMatrix<T>> {
    ensure_square(a, "coefficient matrix")?;
    if a.nrows() != b.nrows() {
        return Err(Error::Dimension(format!(
            "right-hand side has {} rows, expected {}",
            b.nrows(),
            a.nrows()
        )));
    }
    ensure_finite(a, "coefficient matrix")?;
    ensure_finite(b, "right-hand side")?;
    let scale = norm1(a);
    let lu = a.clone().lu();
    let u = lu.u();
    let smallest = min_pivot(&u);
    if smallest <= PIVOT_TOL * scale || scale == 0.0 {
        let condition = if smallest == 0.0 {
            f64::INFINITY
        } else {
            max_pivot(&u) / smallest
        };
        return Err(Error::Singular { condition });
    }
    lu.solve(b).ok_or(Error::Singular {
        condition: f64::INFINITY,
    })
}

pub fn inverse<T: ComplexField<RealField = f64>>(a: &DMatrix<T>) -> Result<DMatrix<T>> {
    solve(a, &DMatrix::identity(a.nrows(), a.ncols()))
}

pub fn det<T: ComplexField<RealField = f64>>(a: &DMatrix<T>) -> Result<T> {
    ensure_square(a, "determinant argument")?;
    Ok(a.clone().lu().determinant())
}

/// `1 / (‖A‖₁ ‖A⁻¹‖₁)`, or zero when `A` is numerically singular.
pub fn reciprocal_condition<T: ComplexField<RealField = f64>>(a: &DMatrix<T>) -> f64 {
    match inverse(a) {
        Ok(inv) => {
            let c = norm1(a) * norm1(&inv);
            if c.is_finite() && c > 0.0 {
                1.0 / c
            } else {
                0.0
            }
        }
        Err(_) => 0.0,
    }
}

pub fn singular_values<T: ComplexField<RealField = f64>>(a: &DMatrix<T>) -> DVector<f64> {
    if a.is_empty() {
        return DVector::zeros(0);
    }
    a.clone().svd(false, false).singular_values
}

/// Numerical rank: singular values above `rel_tol · σ_max`.
pub fn rank<T: ComplexField<RealField = f64>>(a: &DMatrix<T>, rel_tol: f64) -> usize {
    let sv = singular_values(a);
    let top = sv.iter().cloned().fold(0.0, f64::max);
    if top == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * top).count()
}

/// Moore–Penrose pseudoinverse through the SVD.
pub fn pinv<T: ComplexField<RealField = f64>>(a: &DMatrix<T>) -> Result<DMatrix<T>> {
    ensure_finite(a, "pseudoinverse argument")?;
    let (r, c) = a.shape();
    if r == 0 || c == 0 {
        return Ok(DMatrix::zeros(c, r));
    }
    let svd = a.clone().svd(true, true);
    let top = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let eps = (r.max(c) as f64) * f64::EPSILON * top;
    svd.pseudo_inverse(eps)
        .map_err(|e| Error::Dimension(format!("pseudoinverse failed: {e}")))
}
