use nalgebra::{ComplexField, DMatrix};

use super::{ensure_finite, ensure_square, is_finite, norm1};
use crate::{Error, Result};

/// Numerator coefficients of the degree-13 Padé approximant of `exp`.
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

/// Largest 1-norm for which the degree-13 approximant is accurate to unit
/// roundoff without scaling.
const THETA13: f64 = 5.371920351148152;

/// Matrix exponential by scaling and squaring with a degree-13 Padé kernel.
pub fn expm<T: ComplexField<RealField = f64>>(x: &DMatrix<T>) -> Result<DMatrix<T>> {
    ensure_square(x, "expm argument")?;
    ensure_finite(x, "expm argument")?;
    let n = x.nrows();
    if n == 0 {
        return Ok(x.clone());
    }

    let norm = norm1(x);
    let squarings = if norm > THETA13 {
        (norm / THETA13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let a = x * T::from_real(0.5f64.powi(squarings));

    let c = |k: usize| T::from_real(PADE13[k]);
    let ident = DMatrix::<T>::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;

    let u_inner = &a6 * (&a6 * c(13) + &a4 * c(11) + &a2 * c(9))
        + &a6 * c(7)
        + &a4 * c(5)
        + &a2 * c(3)
        + &ident * c(1);
    let u = &a * u_inner;
    let v = &a6 * (&a6 * c(12) + &a4 * c(10) + &a2 * c(8))
        + &a6 * c(6)
        + &a4 * c(4)
        + &a2 * c(2)
        + &ident * c(0);

    let denom = &v - &u;
    let numer = &v + &u;
    let mut r = denom.lu().solve(&numer).ok_or(Error::Overflow)?;
    for _ in 0..squarings {
        r = &r * &r;
        if !is_finite(&r) {
            return Err(Error::Overflow);
        }
    }
    if !is_finite(&r) {
        return Err(Error::Overflow);
    }
    Ok(r)
}
