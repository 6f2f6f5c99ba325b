//! Graded-commutative forms with scalar or matrix coefficients, and the
//! characteristic forms built from them: the Â-form of a curvature matrix
//! and the Chern character of a twisting curvature.
//!
//! All series are evaluated in nilpotent form variables, so they terminate at
//! the top degree and carry no truncation error.

use std::collections::BTreeMap;
use std::fmt::Debug;

use num_complex::Complex64;
use num_traits::{One, Zero};
use serde::Serialize;

use crate::blade::{self, Blade};
use crate::error::{Error, Result};
use crate::geometry::ModelGeometry;
use crate::matrix::SquareMatrix;
use crate::scalar::{Exact, Scalar};

/// Coefficient ring of a [`FormPolynomial`].
pub trait Coefficient: Clone + Debug + PartialEq + Send + Sync {
    type Scalar: Scalar;
    type Shape: Copy + Debug + PartialEq + Send + Sync;

    fn shape(&self) -> Self::Shape;
    fn zero_of(shape: Self::Shape) -> Self;
    fn one_of(shape: Self::Shape) -> Self;
    fn try_add(&self, other: &Self) -> Result<Self>;
    fn try_mul(&self, other: &Self) -> Result<Self>;
    fn scale(&self, s: &Self::Scalar) -> Self;
    fn is_zero(&self) -> bool;
    fn trace(&self) -> Self::Scalar;
    fn max_abs(&self) -> f64;
}

macro_rules! scalar_coefficient {
    ($t:ty) => {
        impl Coefficient for $t {
            type Scalar = $t;
            type Shape = ();

            fn shape(&self) {}
            fn zero_of(_: ()) -> Self {
                <$t>::zero()
            }
            fn one_of(_: ()) -> Self {
                <$t>::one()
            }
            fn try_add(&self, other: &Self) -> Result<Self> {
                Ok(self.clone() + other.clone())
            }
            fn try_mul(&self, other: &Self) -> Result<Self> {
                Ok(self.clone() * other.clone())
            }
            fn scale(&self, s: &Self) -> Self {
                self.clone() * s.clone()
            }
            fn is_zero(&self) -> bool {
                *self == <$t>::zero()
            }
            fn trace(&self) -> Self {
                self.clone()
            }
            fn max_abs(&self) -> f64 {
                self.abs_f64()
            }
        }
    };
}

scalar_coefficient!(Complex64);
scalar_coefficient!(Exact);

impl<T: Scalar> Coefficient for SquareMatrix<T> {
    type Scalar = T;
    type Shape = usize;

    fn shape(&self) -> usize {
        self.size()
    }
    fn zero_of(size: usize) -> Self {
        SquareMatrix::zeros(size)
    }
    fn one_of(size: usize) -> Self {
        SquareMatrix::identity(size)
    }
    fn try_add(&self, other: &Self) -> Result<Self> {
        SquareMatrix::try_add(self, other)
    }
    fn try_mul(&self, other: &Self) -> Result<Self> {
        SquareMatrix::try_mul(self, other)
    }
    fn scale(&self, s: &T) -> Self {
        SquareMatrix::scale(self, s)
    }
    fn is_zero(&self) -> bool {
        SquareMatrix::is_zero(self)
    }
    fn trace(&self) -> T {
        SquareMatrix::trace(self)
    }
    fn max_abs(&self) -> f64 {
        SquareMatrix::max_abs(self)
    }
}

/// Scalar usable both as form coefficient and as the coefficient's scalar ring.
pub trait FormScalar: Scalar + Coefficient<Scalar = Self, Shape = ()> {}

impl<T: Scalar + Coefficient<Scalar = T, Shape = ()>> FormScalar for T {}

/// Element of `Λ(ℝⁿ)* ⊗ C` in the monomial basis `dx^S`.
#[derive(Clone, Debug, PartialEq)]
pub struct FormPolynomial<C: Coefficient> {
    dim: usize,
    shape: C::Shape,
    terms: BTreeMap<Blade, C>,
}

impl<C: Coefficient> FormPolynomial<C> {
    pub fn zero(dim: usize, shape: C::Shape) -> Self {
        assert!(dim <= blade::MAX_DIM, "form dimension too large");
        Self {
            dim,
            shape,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(dim: usize, c: C) -> Self {
        let mut out = Self::zero(dim, c.shape());
        out.insert(0, c);
        out
    }

    pub fn one(dim: usize, shape: C::Shape) -> Self {
        Self::constant(dim, C::one_of(shape))
    }

    /// `c · dx^{i1} ∧ ⋯ ∧ dx^{ik}`; indices are 0-based and may come in any
    /// order (the sign of the sorting permutation is applied).
    pub fn monomial(dim: usize, indices: &[usize], c: C) -> Result<Self> {
        let mut out = Self::zero(dim, c.shape());
        let mut acc: Blade = 0;
        let mut sign = 1;
        for &i in indices {
            if i >= dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: i + 1,
                });
            }
            match blade::wedge_sign(acc, 1 << i) {
                Some(s) => {
                    sign *= s;
                    acc |= 1 << i;
                }
                None => return Ok(out),
            }
        }
        let c = if sign < 0 {
            c.scale(&-C::Scalar::one())
        } else {
            c
        };
        out.insert(acc, c);
        Ok(out)
    }

    fn insert(&mut self, b: Blade, c: C) {
        if c.is_zero() {
            self.terms.remove(&b);
        } else {
            self.terms.insert(b, c);
        }
    }

    fn accumulate(&mut self, b: Blade, c: C) -> Result<()> {
        let v = match self.terms.remove(&b) {
            Some(old) => old.try_add(&c)?,
            None => c,
        };
        self.insert(b, v);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn shape(&self) -> C::Shape {
        self.shape
    }

    pub fn terms(&self) -> impl Iterator<Item = (Blade, &C)> {
        self.terms.iter().map(|(b, c)| (*b, c))
    }

    pub fn coefficient(&self, b: Blade) -> C {
        self.terms.get(&b).cloned().unwrap_or_else(|| C::zero_of(self.shape))
    }

    /// Coefficient of `dx^1 ∧ ⋯ ∧ dx^n`.
    pub fn top_coefficient(&self) -> C {
        self.coefficient(blade::top(self.dim))
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Projection onto degree `k`.
    pub fn component(&self, k: usize) -> Self {
        let mut out = Self::zero(self.dim, self.shape);
        for (b, c) in &self.terms {
            if blade::grade(*b) == k {
                out.insert(*b, c.clone());
            }
        }
        out
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut d: Vec<usize> = self.terms.keys().map(|b| blade::grade(*b)).collect();
        d.sort_unstable();
        d.dedup();
        d
    }

    pub fn max_abs(&self) -> f64 {
        self.terms.values().map(|c| c.max_abs()).fold(0.0, f64::max)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check(other)?;
        let mut out = self.clone();
        for (b, c) in &other.terms {
            out.accumulate(*b, c.clone())?;
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(&-C::Scalar::one()))
    }

    pub fn scale(&self, s: &C::Scalar) -> Self {
        let mut out = Self::zero(self.dim, self.shape);
        for (b, c) in &self.terms {
            out.insert(*b, c.scale(s));
        }
        out
    }

    /// Graded-commutative product; terms above degree `n` vanish automatically.
    pub fn wedge(&self, other: &Self) -> Result<Self> {
        self.check(other)?;
        let mut out = Self::zero(self.dim, self.shape);
        for (sa, ca) in &self.terms {
            for (sb, cb) in &other.terms {
                if let Some(sign) = blade::wedge_sign(*sa, *sb) {
                    let mut c = ca.try_mul(cb)?;
                    if sign < 0 {
                        c = c.scale(&-C::Scalar::one());
                    }
                    out.accumulate(sa | sb, c)?;
                }
            }
        }
        Ok(out)
    }

    /// Pointwise coefficient trace.
    pub fn trace(&self) -> FormPolynomial<C::Scalar>
    where
        C::Scalar: FormScalar,
    {
        let mut out = FormPolynomial::<C::Scalar>::zero(self.dim, ());
        for (b, c) in &self.terms {
            out.insert(*b, c.trace());
        }
        out
    }

    /// `Σ_k x^k / k!` for a form without degree-0 part.
    pub fn exp_nilpotent(&self) -> Result<Self> {
        self.power_series(|k| {
            let fact: i64 = (1..=k as i64).product();
            C::Scalar::ratio(1, fact)
        })
    }

    /// `Σ_k coeff(k) x^k`, terminating by nilpotence.
    pub fn power_series(&self, coeff: impl Fn(usize) -> C::Scalar) -> Result<Self> {
        if self.terms.contains_key(&0) {
            return Err(Error::NotNilpotent);
        }
        let mut out = Self::one(self.dim, self.shape).scale(&coeff(0));
        let mut power = Self::one(self.dim, self.shape);
        for k in 1..=self.dim {
            power = power.wedge(self)?;
            if power.is_zero() {
                break;
            }
            out = out.add(&power.scale(&coeff(k)))?;
        }
        Ok(out)
    }

    fn check(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: other.dim,
            });
        }
        Ok(())
    }
}

impl<T> FormPolynomial<T>
where
    T: FormScalar,
{
    pub fn scalar_zero(dim: usize) -> Self {
        Self::zero(dim, ())
    }

    pub fn to_c64(&self) -> FormPolynomial<Complex64> {
        let mut out = FormPolynomial::<Complex64>::zero(self.dim, ());
        for (b, c) in &self.terms {
            out.insert(*b, c.to_c64());
        }
        out
    }
}

/// Antisymmetric matrix of 2-forms, stored as a 2-form with matrix coefficients:
/// `R = Σ_{k<l} R_{··kl} dx^k ∧ dx^l`.
#[derive(Clone, Debug, PartialEq)]
pub struct CurvatureMatrix<T: Scalar> {
    form: FormPolynomial<SquareMatrix<T>>,
}

impl<T> CurvatureMatrix<T>
where
    T: FormScalar,
{
    pub fn new(form: FormPolynomial<SquareMatrix<T>>) -> Result<Self> {
        if let Some(d) = form.degrees().into_iter().find(|d| *d != 2) {
            return Err(Error::InvalidParameter(format!(
                "curvature entries must be 2-forms, found degree {d}"
            )));
        }
        let mut residual: f64 = 0.0;
        for (_, c) in form.terms() {
            let sym = c.try_add(&c.transpose())?;
            residual = residual.max(sym.max_abs());
        }
        if residual > 1e-12 {
            return Err(Error::NotAntisymmetric(residual));
        }
        Ok(Self { form })
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            form: FormPolynomial::zero(dim, dim),
        }
    }

    /// Builds `R_{ij} = Σ_{k<l} comps(i, j, k, l) dx^k ∧ dx^l` from a frame tensor.
    pub fn from_tensor(dim: usize, comps: impl Fn(usize, usize, usize, usize) -> T) -> Result<Self> {
        let mut form = FormPolynomial::zero(dim, dim);
        for k in 0..dim {
            for l in (k + 1)..dim {
                let m = SquareMatrix::from_fn(dim, |i, j| comps(i, j, k, l));
                form.accumulate((1 << k) | (1 << l), m)?;
            }
        }
        Self::new(form)
    }

    /// Block-diagonal curvature `⊕_j [[0, ω_j], [−ω_j, 0]]` from scalar 2-forms `ω_j`.
    pub fn block_diagonal(blocks: &[FormPolynomial<T>]) -> Result<Self> {
        let dim = 2 * blocks.len();
        let mut form = FormPolynomial::zero(dim, dim);
        for (j, w) in blocks.iter().enumerate() {
            if w.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: w.dim(),
                });
            }
            for (b, c) in w.terms() {
                let m = SquareMatrix::from_fn(dim, |r, s| {
                    if r == 2 * j && s == 2 * j + 1 {
                        c.clone()
                    } else if r == 2 * j + 1 && s == 2 * j {
                        -c.clone()
                    } else {
                        T::zero()
                    }
                });
                form.accumulate(b, m)?;
            }
        }
        Self::new(form)
    }

    pub fn dim(&self) -> usize {
        self.form.dim()
    }

    pub fn as_form(&self) -> &FormPolynomial<SquareMatrix<T>> {
        &self.form
    }

    pub fn scale(&self, s: &T) -> Self {
        Self {
            form: self.form.scale(s),
        }
    }
}

/// Coefficients `c_k` of `(x/2)/sinh(x/2) = Σ c_k x^{2k}` for `k ≤ kmax`,
/// by inverting the series `sinh(y)/y = Σ y^{2k}/(2k+1)!`.
pub fn half_x_over_sinh_coefficients<T: Scalar>(kmax: usize) -> Vec<T> {
    let mut sinhc = Vec::with_capacity(kmax + 1);
    let mut fact: i128 = 1;
    for k in 0..=kmax {
        if k > 0 {
            fact *= ((2 * k) * (2 * k + 1)) as i128;
        }
        sinhc.push(T::ratio(1, fact as i64));
    }
    let mut inv: Vec<T> = Vec::with_capacity(kmax + 1);
    for k in 0..=kmax {
        let mut acc = if k == 0 { T::one() } else { T::zero() };
        for j in 1..=k {
            acc = acc - sinhc[j].clone() * inv[k - j].clone();
        }
        inv.push(acc);
    }
    // y = x/2
    let mut quarter = T::one();
    inv.into_iter()
        .map(|c| {
            let v = c * quarter.clone();
            quarter = quarter.clone() * T::ratio(1, 4);
            v
        })
        .collect()
}

/// Unnormalized `det((R/2)/sinh(R/2))^{1/2}` as an even scalar form.
///
/// Route: matrix Taylor series of `x/sinh x`, determinant via the trace of the
/// matrix logarithm series, square root via the binomial series.
pub fn a_hat<T>(r: &CurvatureMatrix<T>) -> Result<FormPolynomial<T>>
where
    T: FormScalar,
{
    let n = r.dim();
    let size = n;
    let rf = r.as_form();
    let kmax = n / 4 + 1;
    let coeffs = half_x_over_sinh_coefficients::<T>(kmax);
    let r2 = rf.wedge(rf)?;
    // X = f(R) − 1 = Σ_{k≥1} c_k R^{2k}
    let mut x = FormPolynomial::<SquareMatrix<T>>::zero(n, size);
    let mut power = FormPolynomial::<SquareMatrix<T>>::one(n, size);
    for c in coeffs.iter().skip(1) {
        power = power.wedge(&r2)?;
        if power.is_zero() {
            break;
        }
        x = x.add(&power.scale(c))?;
    }
    // tr log(1 + X) = Σ_j (−1)^{j+1} tr(X^j)/j
    let log_series = x.power_series(|j| {
        if j == 0 {
            T::zero()
        } else if j % 2 == 1 {
            T::ratio(1, j as i64)
        } else {
            T::ratio(-1, j as i64)
        }
    })?;
    let tr_log = log_series.trace();
    let det = tr_log.exp_nilpotent()?;
    let y = det.sub(&FormPolynomial::one(n, ()))?;
    y.power_series(binomial_half::<T>)
}

/// `binom(1/2, j)`.
fn binomial_half<T: Scalar>(j: usize) -> T {
    let mut acc = T::one();
    for i in 0..j {
        // (1/2 − i)/(i + 1)
        acc = acc * T::ratio(1 - 2 * i as i64, 2 * (i as i64 + 1));
    }
    acc
}

/// `tr exp(F)` for an even form without degree-0 part.
pub fn chern_character<C>(f: &FormPolynomial<C>) -> Result<FormPolynomial<C::Scalar>>
where
    C: Coefficient,
    C::Scalar: FormScalar,
{
    if let Some(d) = f.degrees().into_iter().find(|d| d % 2 == 1) {
        return Err(Error::OddDegree(d));
    }
    if f.degrees().first() == Some(&0) {
        return Err(Error::InvalidParameter(
            "twisting curvature must have degree at least 2".into(),
        ));
    }
    Ok(f.exp_nilpotent()?.trace())
}

/// Convention for integrating a characteristic form.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Normalization {
    /// Plain integral of the top coefficient.
    Raw,
    /// Multiply the top coefficient by `(i/2π)^{n/2}` (Â ∧ ch convention).
    Characteristic,
}

pub fn characteristic_factor(dim: usize) -> Complex64 {
    (Complex64::i() / (2.0 * std::f64::consts::PI)).powu((dim / 2) as u32)
}

/// Integral of the top-degree coefficient of a geometry-invariant form
/// (constant in the orthonormal coframe) against the Riemannian density.
/// On the b-cylinder the volume is the renormalized (finite-part) volume.
pub fn top_degree_integral<T>(
    omega: &FormPolynomial<T>,
    geom: &ModelGeometry,
    normalization: Normalization,
) -> Result<Complex64>
where
    T: FormScalar,
{
    top_degree_integral_field(|_| Ok(omega.clone()), omega.dim(), geom, normalization)
}

/// As [`top_degree_integral`] for a form field given pointwise in the model chart.
pub fn top_degree_integral_field<T, F>(
    field: F,
    dim: usize,
    geom: &ModelGeometry,
    normalization: Normalization,
) -> Result<Complex64>
where
    T: FormScalar,
    F: Fn(&[f64]) -> Result<FormPolynomial<T>> + Sync,
{
    if dim != geom.dim() {
        return Err(Error::DimensionMismatch {
            expected: geom.dim(),
            found: dim,
        });
    }
    let factor = match normalization {
        Normalization::Raw => Complex64::new(1.0, 0.0),
        Normalization::Characteristic => characteristic_factor(dim),
    };
    let integral = crate::renorm::integrate_over(geom, &|x: &[f64]| {
        let form = field(x)?;
        if form.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: form.dim(),
            });
        }
        Ok(form.top_coefficient().to_c64())
    })?;
    Ok(integral * factor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::GeometrySpec;
    use num_rational::Ratio;

    fn ex(n: i64, d: i64) -> Exact {
        Exact::ratio(n, d)
    }

    fn dx(dim: usize, idx: &[usize]) -> FormPolynomial<Exact> {
        FormPolynomial::monomial(dim, idx, Exact::one()).unwrap()
    }

    #[test]
    fn wedge_unit_and_nilpotence() {
        let a = dx(3, &[0]).add(&dx(3, &[1, 2]).scale(&ex(3, 2))).unwrap();
        let one = FormPolynomial::one(3, ());
        assert_eq!(a.wedge(&one).unwrap(), a);
        assert!(dx(3, &[0]).wedge(&dx(3, &[0])).unwrap().is_zero());
        let s = dx(2, &[0]).wedge(&dx(2, &[1])).unwrap().add(&dx(2, &[1]).wedge(&dx(2, &[0])).unwrap()).unwrap();
        assert!(s.is_zero());
    }

    #[test]
    fn monomial_sorts_with_sign() {
        assert_eq!(dx(3, &[2, 0]), dx(3, &[0, 2]).scale(&ex(-1, 1)));
        assert!(dx(3, &[1, 1]).is_zero());
    }

    #[test]
    fn matrix_shape_mismatch() {
        let a = FormPolynomial::constant(2, SquareMatrix::<Exact>::identity(2));
        let b = FormPolynomial::constant(2, SquareMatrix::<Exact>::identity(3));
        assert!(matches!(a.wedge(&b), Err(Error::ShapeMismatch(2, 3))));
    }

    #[test]
    fn half_x_over_sinh_series() {
        let c = half_x_over_sinh_coefficients::<Exact>(3);
        assert_eq!(c[0], ex(1, 1));
        assert_eq!(c[1], ex(-1, 24));
        assert_eq!(c[2], ex(7, 5760));
        assert_eq!(c[3], ex(-31, 967680));
    }

    #[test]
    fn a_hat_of_zero_is_one() {
        let r = CurvatureMatrix::<Exact>::zero(4);
        assert_eq!(a_hat(&r).unwrap(), FormPolynomial::one(4, ()));
    }

    #[test]
    fn a_hat_block_diagonal_n4() {
        // blocks [[0, −i x], [i x, 0]] have eigenvalue 2-forms ±x
        let x1 = dx(4, &[0, 1]).add(&dx(4, &[2, 3]).scale(&ex(2, 1))).unwrap();
        let x2 = dx(4, &[0, 2]).add(&dx(4, &[1, 3]).scale(&ex(-1, 3))).unwrap();
        let minus_i = -Exact::i();
        let r = CurvatureMatrix::block_diagonal(&[x1.scale(&minus_i), x2.scale(&minus_i)]).unwrap();
        let a = a_hat(&r).unwrap();
        let sq = x1.wedge(&x1).unwrap().add(&x2.wedge(&x2).unwrap()).unwrap();
        assert!(!sq.is_zero());
        let expected = FormPolynomial::one(4, ()).sub(&sq.scale(&ex(1, 24))).unwrap();
        assert_eq!(a, expected);
    }

    #[test]
    fn a_hat_rejects_symmetric_input() {
        let mut form = FormPolynomial::<SquareMatrix<Exact>>::zero(2, 2);
        form.accumulate(0b11, SquareMatrix::identity(2)).unwrap();
        assert!(matches!(CurvatureMatrix::new(form), Err(Error::NotAntisymmetric(_))));
    }

    #[test]
    fn chern_character_examples() {
        let zero = FormPolynomial::<Exact>::scalar_zero(2);
        assert_eq!(chern_character(&zero).unwrap(), FormPolynomial::one(2, ()));
        let f = dx(2, &[0, 1]).scale(&ex(5, 3));
        let ch = chern_character(&f).unwrap();
        assert_eq!(ch, FormPolynomial::one(2, ()).add(&f).unwrap());
        assert!(matches!(chern_character(&dx(2, &[0])), Err(Error::OddDegree(1))));
    }

    #[test]
    fn chern_character_is_additive_under_direct_sum() {
        let m1 = SquareMatrix::from_rows(vec![vec![ex(1, 2), ex(1, 3)], vec![ex(0, 1), ex(-2, 1)]]).unwrap();
        let m2 = SquareMatrix::from_rows(vec![vec![Exact::i()]]).unwrap();
        let f1 = FormPolynomial::monomial(4, &[0, 1], m1.clone())
            .unwrap()
            .add(&FormPolynomial::monomial(4, &[2, 3], m1.transpose()).unwrap())
            .unwrap();
        let f2 = FormPolynomial::monomial(4, &[0, 2], m2.clone())
            .unwrap()
            .add(&FormPolynomial::monomial(4, &[1, 3], m2.clone()).unwrap())
            .unwrap();
        let mut sum = FormPolynomial::<SquareMatrix<Exact>>::zero(4, 3);
        for (b, c) in f1.terms() {
            sum.accumulate(b, c.direct_sum(&SquareMatrix::zeros(1))).unwrap();
        }
        for (b, c) in f2.terms() {
            sum.accumulate(b, SquareMatrix::zeros(2).direct_sum(c)).unwrap();
        }
        let lhs = chern_character(&sum).unwrap();
        let rhs = chern_character(&f1).unwrap().add(&chern_character(&f2).unwrap()).unwrap();
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn top_degree_integral_on_flat_torus() {
        let geom = GeometrySpec::flat_torus(vec![2.0 * std::f64::consts::PI; 2], 8).build().unwrap();
        let omega = dx(2, &[0, 1]);
        let v = top_degree_integral(&omega, &geom, Normalization::Raw).unwrap();
        let four_pi2 = 4.0 * std::f64::consts::PI.powi(2);
        assert!((v.re - four_pi2).abs() < 1e-10 && v.im.abs() < 1e-12);
        let zero_top = FormPolynomial::<Exact>::one(2, ());
        assert_eq!(
            top_degree_integral(&zero_top, &geom, Normalization::Raw).unwrap(),
            Complex64::new(0.0, 0.0)
        );
        let wrong = FormPolynomial::<Exact>::one(3, ());
        assert!(top_degree_integral(&wrong, &geom, Normalization::Raw).is_err());
    }

    #[test]
    fn exact_coefficients_stay_exact() {
        let c = half_x_over_sinh_coefficients::<Exact>(1);
        assert_eq!(c[1].re, Ratio::new(-1, 24));
    }
}
