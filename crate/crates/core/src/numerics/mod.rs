//! Dense real/complex matrix kernel.
//!
//! Everything here works on small dynamically sized matrices (a few hundred
//! rows at most). Real matrices are [`Matrix`]; complex ones are
//! [`CMatrix`]. Routines that make sense for both are generic over
//! [`ComplexField`] with an `f64` real field.

mod eigen;
mod expm;
mod kron;
mod linsolve;
mod ode;

pub use eigen::{
    eig, eig_complex, geometric_multiplicity, multiset_max_mismatch, EigenDecomposition,
    RESIDUAL_CAP,
};
pub use expm::expm;
pub use kron::{kron, kron_sum};
pub use linsolve::{det, inverse, pinv, rank, reciprocal_condition, singular_values, solve};
pub use ode::{integrate, OdeOptions, OdeSolution, SolverStats};

use nalgebra::{ComplexField, DMatrix};

pub use nalgebra::Complex;

/// Real dense matrix.
pub type Matrix = DMatrix<f64>;
/// Complex dense matrix.
pub type CMatrix = DMatrix<C64>;
/// Complex scalar.
pub type C64 = Complex<f64>;

/// Radius used when comparing eigenvalue multisets.
pub const CLUSTER_RADIUS: f64 = 1e-6;

pub fn to_complex(m: &Matrix) -> CMatrix {
    m.map(|v| C64::new(v, 0.0))
}

/// Induced 1-norm (maximum absolute column sum).
pub fn norm1<T: ComplexField<RealField = f64>>(m: &DMatrix<T>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.clone().abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn is_finite<T: ComplexField<RealField = f64>>(m: &DMatrix<T>) -> bool {
    m.iter().all(|v| v.clone().is_finite())
}

pub(crate) fn ensure_finite<T: ComplexField<RealField = f64>>(
    m: &DMatrix<T>,
    what: &'static str,
) -> crate::Result<()> {
    if is_finite(m) {
        Ok(())
    } else {
        Err(crate::Error::NonFinite(what))
    }
}

pub(crate) fn ensure_square<T: ComplexField<RealField = f64>>(
    m: &DMatrix<T>,
    what: &str,
) -> crate::Result<()> {
    if m.is_square() {
        Ok(())
    } else {
        Err(crate::Error::Dimension(format!(
            "{what} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )))
    }
}

/// `(m + mᵀ) / 2`.
pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

/// Largest absolute entry of `m - mᵀ`.
pub fn asymmetry(m: &Matrix) -> f64 {
    (m - m.transpose()).amax()
}
