use nalgebra::{ComplexField, DMatrix};

use crate::{Error, Result};

/// Kronecker product `X ⊗ Y`: block `(u, v)` of the result is `x_uv · Y`.
pub fn kron<T: ComplexField>(x: &DMatrix<T>, y: &DMatrix<T>) -> DMatrix<T> {
    let (p, q) = y.shape();
    DMatrix::from_fn(x.nrows() * p, x.ncols() * q, |r, c| {
        x[(r / p, c / q)].clone() * y[(r % p, c % q)].clone()
    })
}

/// Kronecker sum `X ⊕ Y = (I_m ⊗ X) + (Y ⊗ I_n)` for `X` of order `n` and
/// `Y` of order `m`.
pub fn kron_sum<T: ComplexField>(x: &DMatrix<T>, y: &DMatrix<T>) -> Result<DMatrix<T>> {
    if !x.is_square() || !y.is_square() {
        return Err(Error::Dimension(format!(
            "Kronecker sum needs square operands, got {:?} and {:?}",
            x.shape(),
            y.shape()
        )));
    }
    let n = x.nrows();
    let m = y.nrows();
    Ok(kron(&DMatrix::identity(m, m), x) + kron(y, &DMatrix::identity(n, n)))
}
