//! Coefficient rings shared by the Clifford and exterior-algebra code.
//!
//! Two scalar types are supported: exact Gaussian rationals ([`Exact`]) for
//! identities that must hold without rounding, and [`Complex64`] for anything
//! touching sampled geometry.

use std::fmt::Debug;
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::{Complex, Complex64};
use num_rational::Ratio;
use num_traits::{One, Zero};

/// Gaussian rational `p/q + i r/s` with 128-bit numerators.
pub type Exact = Complex<Ratio<i128>>;

pub trait Scalar:
    Clone
    + Debug
    + PartialEq
    + Send
    + Sync
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
{
    /// `num / den`, exact where the type allows.
    fn ratio(num: i64, den: i64) -> Self;
    fn i() -> Self;
    fn conj(&self) -> Self;
    fn to_c64(&self) -> Complex64;
    /// Lossy for [`Exact`]; used only to inject sampled data.
    fn from_c64(z: Complex64) -> Self;

    fn from_int(v: i64) -> Self {
        Self::ratio(v, 1)
    }

    fn abs_f64(&self) -> f64 {
        self.to_c64().norm()
    }
}

impl Scalar for Complex64 {
    fn ratio(num: i64, den: i64) -> Self {
        Complex64::new(num as f64 / den as f64, 0.0)
    }
    fn i() -> Self {
        Complex64::i()
    }
    fn conj(&self) -> Self {
        Complex::conj(self)
    }
    fn to_c64(&self) -> Complex64 {
        *self
    }
    fn from_c64(z: Complex64) -> Self {
        z
    }
}

fn ratio_to_f64(r: &Ratio<i128>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

fn f64_to_ratio(x: f64) -> Ratio<i128> {
    Ratio::<i128>::approximate_float(x).unwrap_or_else(Ratio::zero)
}

impl Scalar for Exact {
    fn ratio(num: i64, den: i64) -> Self {
        Complex::new(Ratio::new(num as i128, den as i128), Ratio::zero())
    }
    fn i() -> Self {
        Complex::new(Ratio::zero(), Ratio::one())
    }
    fn conj(&self) -> Self {
        Complex::conj(self)
    }
    fn to_c64(&self) -> Complex64 {
        Complex64::new(ratio_to_f64(&self.re), ratio_to_f64(&self.im))
    }
    fn from_c64(z: Complex64) -> Self {
        Complex::new(f64_to_ratio(z.re), f64_to_ratio(z.im))
    }
}

/// `(-2i)^k`, the normalization of the top Clifford monomial under the supertrace.
pub fn minus_two_i_pow<T: Scalar>(k: usize) -> T {
    let base = T::from_int(-2) * T::i();
    (0..k).fold(T::one(), |acc, _| acc * base.clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_unit_squares_to_minus_one() {
        let i = Exact::i();
        assert_eq!(i.clone() * i, Exact::from_int(-1));
    }

    #[test]
    fn minus_two_i_powers() {
        assert_eq!(minus_two_i_pow::<Exact>(1), Exact::new(Ratio::zero(), Ratio::from_integer(-2)));
        assert_eq!(minus_two_i_pow::<Exact>(2), Exact::from_int(-4));
        assert_eq!(minus_two_i_pow::<Exact>(3), Exact::new(Ratio::zero(), Ratio::from_integer(8)));
    }
}
