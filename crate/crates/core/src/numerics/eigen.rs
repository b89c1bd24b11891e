use nalgebra::linalg::Schur;

use super::{
    ensure_finite, ensure_square, norm1, rank, reciprocal_condition, to_complex, CMatrix, Matrix,
    C64, CLUSTER_RADIUS,
};
use crate::{Error, Result};

/// Accepted decompositions must satisfy `‖Xv − λv‖ ≤ RESIDUAL_CAP·‖X‖·‖v‖`.
pub const RESIDUAL_CAP: f64 = 1e-8;

/// Spectrum of a square matrix with right (and, when well conditioned,
/// left) eigenvectors.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    /// Sorted by real part descending, ties (within the cluster radius)
    /// broken by imaginary part descending.
    pub values: Vec<C64>,
    /// Unit-norm right eigenvectors, one per column.
    pub right_vectors: CMatrix,
    /// Rows `w_i` with `w_i v_j = δ_ij`; absent when the eigenvector matrix is
    /// numerically singular (defective or nearly so).
    pub left_vectors: Option<CMatrix>,
    /// Largest relative residual `‖Xv − λv‖ / (‖X‖ ‖v‖)`.
    pub convergence_residual: f64,
}

impl EigenDecomposition {
    pub fn right(&self, k: usize) -> nalgebra::DVector<C64> {
        self.right_vectors.column(k).into_owned()
    }

    /// Number of computed eigenvalues within `radius` of `target`.
    pub fn multiplicity(&self, target: C64, radius: f64) -> usize {
        self.values
            .iter()
            .filter(|v| (*v - target).norm() <= radius)
            .count()
    }
}

pub fn eig(x: &Matrix) -> Result<EigenDecomposition> {
    ensure_finite(x, "eigenproblem matrix")?;
    eig_complex(&to_complex(x))
}

pub fn eig_complex(x: &CMatrix) -> Result<EigenDecomposition> {
    ensure_square(x, "eigenproblem matrix")?;
    ensure_finite(x, "eigenproblem matrix")?;
    let n = x.nrows();
    if n == 0 {
        return Ok(EigenDecomposition {
            values: vec![],
            right_vectors: CMatrix::zeros(0, 0),
            left_vectors: Some(CMatrix::zeros(0, 0)),
            convergence_residual: 0.0,
        });
    }
    let scale = norm1(x);
    let schur =
        Schur::try_new(x.clone(), f64::EPSILON, 200 * n.max(10)).ok_or(Error::NoConvergence {
            residual: f64::INFINITY,
        })?;
    let (q, t) = schur.unpack();

    let tnorm = norm1(&t).max(f64::MIN_POSITIVE);
    let smin = (f64::EPSILON * tnorm).max(f64::MIN_POSITIVE);
    let mut vecs = CMatrix::zeros(n, n);
    let mut values = Vec::with_capacity(n);
    for k in 0..n {
        let lambda = t[(k, k)];
        values.push(lambda);
        let mut y = vec![C64::new(0.0, 0.0); k + 1];
        y[k] = C64::new(1.0, 0.0);
        for i in (0..k).rev() {
            let mut acc = C64::new(0.0, 0.0);
            for j in (i + 1)..=k {
                acc += t[(i, j)] * y[j];
            }
            let mut d = t[(i, i)] - lambda;
            if d.norm() < smin {
                d = C64::new(smin, 0.0);
            }
            y[i] = -acc / d;
            let big = y.iter().map(|v| v.norm()).fold(0.0, f64::max);
            if big > 1e100 {
                for v in y.iter_mut() {
                    *v /= big;
                }
            }
        }
        let mut v = q.columns(0, k + 1) * nalgebra::DVector::from_vec(y);
        let nv = v.norm();
        if nv > 0.0 {
            v /= C64::new(nv, 0.0);
        }
        vecs.set_column(k, &v);
    }

    let mut residual: f64 = 0.0;
    for k in 0..n {
        let v = vecs.column(k);
        let r = (x * v - v * values[k]).norm();
        let rel = if scale > 0.0 {
            r / (scale * v.norm())
        } else {
            r
        };
        residual = residual.max(rel);
    }
    if !(residual <= RESIDUAL_CAP) {
        return Err(Error::NoConvergence { residual });
    }

    let order = sorted_order(&values, scale);
    let values: Vec<C64> = order.iter().map(|&i| values[i]).collect();
    let right = CMatrix::from_fn(n, n, |i, j| vecs[(i, order[j])]);
    let left = if reciprocal_condition(&right) > 1e-12 {
        super::inverse(&right).ok()
    } else {
        None
    };
    Ok(EigenDecomposition {
        values,
        right_vectors: right,
        left_vectors: left,
        convergence_residual: residual,
    })
}

fn sorted_order(values: &[C64], scale: f64) -> Vec<usize> {
    let radius = CLUSTER_RADIUS * scale.max(1.0);
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].re.total_cmp(&values[a].re));
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && values[idx[end - 1]].re - values[idx[end]].re <= radius {
            end += 1;
        }
        idx[start..end].sort_by(|&a, &b| values[b].im.total_cmp(&values[a].im));
        start = end;
    }
    idx
}

/// `dim ker(X − λI)`, with rank decided at relative tolerance `tol`.
pub fn geometric_multiplicity(x: &CMatrix, lambda: C64, tol: f64) -> usize {
    let n = x.nrows();
    let shifted = x - CMatrix::identity(n, n) * lambda;
    n - rank(&shifted, tol)
}

/// Largest distance between greedily matched elements of two multisets;
/// infinite if the sizes differ.
pub fn multiset_max_mismatch(a: &[C64], b: &[C64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    let mut used = vec![false; b.len()];
    let mut worst: f64 = 0.0;
    for x in a {
        let mut best = None;
        let mut best_d = f64::INFINITY;
        for (j, y) in b.iter().enumerate() {
            if !used[j] && (x - y).norm() < best_d {
                best_d = (x - y).norm();
                best = Some(j);
            }
        }
        if let Some(j) = best {
            used[j] = true;
        }
        worst = worst.max(best_d);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn diagonal_sorted_descending() {
        let d = eig(&Matrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            3.0, 1.0, 2.0,
        ])))
        .unwrap();
        let re: Vec<f64> = d.values.iter().map(|v| v.re).collect();
        assert_eq!(re, vec![3.0, 2.0, 1.0]);
        assert!(d.left_vectors.is_some());
    }

    #[test]
    fn jordan_block_is_defective() {
        let x = Matrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let d = eig(&x).unwrap();
        assert!(d.values.iter().all(|v| v.norm() < 1e-12));
        assert_eq!(
            geometric_multiplicity(&to_complex(&x), c(0.0, 0.0), 1e-10),
            1
        );
        assert!(d.left_vectors.is_none());
    }

    #[test]
    fn rotation_has_conjugate_pair() {
        let x = Matrix::from_row_slice(2, 2, &[0.0, -2.0, 2.0, 0.0]);
        let d = eig(&x).unwrap();
        assert!((d.values[0] - c(0.0, 2.0)).norm() < 1e-12);
        assert!((d.values[1] - c(0.0, -2.0)).norm() < 1e-12);
        let w = d.left_vectors.unwrap();
        let p = &w * &d.right_vectors;
        assert!((p - CMatrix::identity(2, 2)).norm() < 1e-12);
    }

    #[test]
    fn mismatch_counts_sizes() {
        assert_eq!(multiset_max_mismatch(&[c(1.0, 0.0)], &[]), f64::INFINITY);
        let m = multiset_max_mismatch(&[c(1.0, 0.0), c(2.0, 0.0)], &[c(2.0, 1e-3), c(1.0, 0.0)]);
        assert!((m - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn rejects_nonfinite() {
        let x = Matrix::from_row_slice(1, 1, &[f64::NAN]);
        assert!(matches!(eig(&x), Err(Error::NonFinite(_))));
    }
}
