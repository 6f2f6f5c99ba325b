//! Complexified Clifford algebra on `n` generators.
//!
//! Elements are stored in the monomial basis `e_S = e_{s1} ⋯ e_{sk}` with
//! `s1 < ⋯ < sk`. Products are normalized by rewriting with the relation
//! `e_i e_j + e_j e_i = −2 g_ij`, so a general (not necessarily diagonal)
//! metric is supported. The supertrace and the spin representation are only
//! defined for an oriented orthonormal frame in even dimension.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use num_traits::{One, Zero};
use serde::Serialize;

use crate::blade::{self, Blade};
use crate::charclass::{FormPolynomial, FormScalar};
use crate::error::{Error, Result};
use crate::scalar::{minus_two_i_pow, Exact, Scalar};

/// Symmetric positive-definite bilinear form on the generators.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricForm<T> {
    dim: usize,
    entries: Vec<T>,
    inverse: Vec<f64>,
    orthonormal: bool,
}

impl<T: Scalar> MetricForm<T> {
    pub fn identity(dim: usize) -> Self {
        let entries = (0..dim * dim)
            .map(|k| if k / dim == k % dim { T::one() } else { T::zero() })
            .collect();
        let inverse = (0..dim * dim)
            .map(|k| if k / dim == k % dim { 1.0 } else { 0.0 })
            .collect();
        Self {
            dim,
            entries,
            inverse,
            orthonormal: true,
        }
    }

    /// Validates symmetry and positive definiteness (Cholesky) of `rows`.
    pub fn new(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        if dim == 0 || dim > blade::MAX_DIM {
            return Err(Error::InvalidMetric(format!("unsupported dimension {dim}")));
        }
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidMetric("matrix is not square".into()));
        }
        let m = DMatrix::from_fn(dim, dim, |i, j| rows[i][j]);
        let scale = m.amax().max(1.0);
        if (&m - m.transpose()).amax() > 1e-12 * scale {
            return Err(Error::InvalidMetric("matrix is not symmetric".into()));
        }
        let chol = m
            .clone()
            .cholesky()
            .ok_or_else(|| Error::InvalidMetric("matrix is not positive definite".into()))?;
        let inv = chol.inverse();
        let residual = (&m * &inv - DMatrix::identity(dim, dim)).amax();
        if residual > 1e-9 {
            return Err(Error::InvalidMetric(format!("inverse residual {residual:e}")));
        }
        let orthonormal = (&m - DMatrix::identity(dim, dim)).amax() == 0.0;
        Ok(Self {
            dim,
            entries: m.iter().map(|&x| T::from_c64(Complex64::new(x, 0.0))).collect(),
            inverse: inv.transpose().iter().copied().collect(),
            orthonormal,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `g(e_i, e_j)`, 0-based.
    pub fn get(&self, i: usize, j: usize) -> &T {
        &self.entries[j * self.dim + i]
    }

    /// `g^{ij}`, 0-based.
    pub fn inverse(&self, i: usize, j: usize) -> f64 {
        self.inverse[i * self.dim + j]
    }

    pub fn is_orthonormal(&self) -> bool {
        self.orthonormal
    }
}

/// The frame in which Clifford coefficients are expressed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Frame {
    OrthonormalOriented,
    Coordinate,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CliffordElement<T> {
    dim: usize,
    terms: BTreeMap<Blade, T>,
}

impl<T: Scalar> CliffordElement<T> {
    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            terms: BTreeMap::new(),
        }
    }

    pub fn scalar(dim: usize, c: T) -> Self {
        Self::zero(dim).with_term(0, c)
    }

    pub fn one(dim: usize) -> Self {
        Self::scalar(dim, T::one())
    }

    /// Generator `e_{index+1}` (0-based index).
    pub fn generator(dim: usize, index: usize) -> Result<Self> {
        Self::monomial(dim, &[index], T::one())
    }

    /// `c · e_S` for a strictly increasing 0-based index list.
    pub fn monomial(dim: usize, indices: &[usize], c: T) -> Result<Self> {
        let b = blade::from_indices(indices)
            .filter(|b| *b <= blade::top(dim))
            .ok_or_else(|| Error::InvalidParameter(format!("bad index set {indices:?} for n = {dim}")))?;
        Ok(Self::zero(dim).with_term(b, c))
    }

    pub fn from_blade(dim: usize, b: Blade, c: T) -> Self {
        assert!(b <= blade::top(dim), "blade outside dimension");
        Self::zero(dim).with_term(b, c)
    }

    fn with_term(mut self, b: Blade, c: T) -> Self {
        self.accumulate(b, c);
        self
    }

    fn accumulate(&mut self, b: Blade, c: T) {
        if c == T::zero() {
            return;
        }
        let entry = self.terms.entry(b).or_insert_with(T::zero);
        *entry = entry.clone() + c;
        if *entry == T::zero() {
            self.terms.remove(&b);
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> impl Iterator<Item = (Blade, &T)> {
        self.terms.iter().map(|(b, c)| (*b, c))
    }

    pub fn coefficient(&self, b: Blade) -> T {
        self.terms.get(&b).cloned().unwrap_or_else(T::zero)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_dim(other.dim)?;
        let mut out = self.clone();
        for (b, c) in &other.terms {
            out.accumulate(*b, c.clone());
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(&-T::one()))
    }

    pub fn scale(&self, s: &T) -> Self {
        let mut out = Self::zero(self.dim);
        for (b, c) in &self.terms {
            out.accumulate(*b, c.clone() * s.clone());
        }
        out
    }

    /// Clifford product under the metric `g`.
    pub fn mul(&self, other: &Self, g: &MetricForm<T>) -> Result<Self> {
        self.check_dim(other.dim)?;
        self.check_dim(g.dim())?;
        let mut out = Self::zero(self.dim);
        for (&bb, cb) in &other.terms {
            // right-multiply self by the generators of e_T in ascending order
            let mut partial: BTreeMap<Blade, T> = self.terms.clone();
            for j in blade::indices(bb) {
                let mut next = BTreeMap::new();
                for (s, c) in &partial {
                    for (t, w) in blade_times_generator(*s, j, g) {
                        let v = next.remove(&t).unwrap_or_else(T::zero) + c.clone() * w;
                        if v != T::zero() {
                            next.insert(t, v);
                        }
                    }
                }
                partial = next;
            }
            for (b, c) in partial {
                out.accumulate(b, c * cb.clone());
            }
        }
        Ok(out)
    }

    /// Smallest `k` with `self ∈ Cl_k`; 0 for the zero element.
    pub fn filtration_degree(&self) -> usize {
        self.terms.keys().map(|b| blade::grade(*b)).max().unwrap_or(0)
    }

    /// `Some(0)` / `Some(1)` for homogeneous even / odd elements.
    pub fn parity(&self) -> Option<usize> {
        let mut parities = self.terms.keys().map(|b| blade::grade(*b) % 2);
        let first = parities.next().unwrap_or(0);
        parities.all(|p| p == first).then_some(first)
    }

    /// Projection onto monomials of cardinality `k`.
    pub fn grade_part(&self, k: usize) -> Self {
        let mut out = Self::zero(self.dim);
        for (b, c) in &self.terms {
            if blade::grade(*b) == k {
                out.accumulate(*b, c.clone());
            }
        }
        out
    }

    /// Coefficient of `e_1⋯e_n` times `(−2i)^{n/2}`.
    pub fn supertrace(&self, frame: Frame) -> Result<T> {
        if self.dim % 2 == 1 {
            return Err(Error::OddDimension(self.dim));
        }
        if frame != Frame::OrthonormalOriented {
            return Err(Error::NonOrthonormalFrame);
        }
        Ok(self.coefficient(blade::top(self.dim)) * minus_two_i_pow::<T>(self.dim / 2))
    }

    /// Image in the irreducible spin representation (orthonormal frame).
    pub fn matrix_representation(&self) -> Result<DMatrix<Complex64>> {
        let reps = SpinRepresentation::new(self.dim)?;
        Ok(reps.represent(self))
    }

    fn check_dim(&self, dim: usize) -> Result<()> {
        if dim != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: dim,
            });
        }
        Ok(())
    }
}

/// `e_S · e_j` expanded in sorted monomials.
fn blade_times_generator<T: Scalar>(s: Blade, j: usize, g: &MetricForm<T>) -> Vec<(Blade, T)> {
    if s == 0 {
        return vec![(1 << j, T::one())];
    }
    let last = (31 - s.leading_zeros()) as usize;
    let rest = s & !(1 << last);
    if last < j {
        return vec![(s | (1 << j), T::one())];
    }
    if last == j {
        return vec![(rest, -g.get(j, j).clone())];
    }
    // e_rest e_last e_j = −(e_rest e_j) e_last − 2 g(e_last, e_j) e_rest
    let mut out: Vec<(Blade, T)> = blade_times_generator(rest, j, g)
        .into_iter()
        .map(|(b, c)| (b | (1 << last), -c))
        .collect();
    let gl = g.get(last, j).clone();
    if gl != T::zero() {
        out.push((rest, T::from_int(-2) * gl));
    }
    out
}

/// Exterior monomial `dx^S` ↦ Clifford monomial `e_S` (orthonormal coframe).
pub fn quantize<T: FormScalar>(omega: &FormPolynomial<T>) -> Result<CliffordElement<T>> {
    let n = omega.dim();
    if n > blade::MAX_DIM {
        return Err(Error::InvalidParameter(format!("{n} generators exceed the supported maximum")));
    }
    let mut out = CliffordElement::zero(n);
    for (b, c) in omega.terms() {
        out.accumulate(b, c.clone());
    }
    Ok(out)
}

/// The irreducible complex spin representation in even dimension `n = 2m`.
///
/// Built from Jordan–Wigner strings of Pauli matrices: `c(e_j) = i γ_j` with
/// Hermitian anticommuting `γ_j`. The grading is `Γ = i^m c(e_1)⋯c(e_n)`, which
/// makes `tr(Γ c(e_1)⋯c(e_n)) = (−2i)^m`. For `n = 2` this is
/// `c(e_1) = iσx`, `c(e_2) = iσy`, `Γ = σz`.
#[derive(Clone, Debug)]
pub struct SpinRepresentation {
    dim: usize,
    generators: Vec<DMatrix<Complex64>>,
    grading: DMatrix<Complex64>,
}

impl SpinRepresentation {
    pub fn new(dim: usize) -> Result<Self> {
        if dim % 2 == 1 || dim == 0 {
            return Err(Error::OddDimension(dim));
        }
        let m = dim / 2;
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        let i = Complex64::i();
        let id2 = DMatrix::from_row_slice(2, 2, &[one, zero, zero, one]);
        let x = DMatrix::from_row_slice(2, 2, &[zero, one, one, zero]);
        let y = DMatrix::from_row_slice(2, 2, &[zero, -i, i, zero]);
        let z = DMatrix::from_row_slice(2, 2, &[one, zero, zero, -one]);
        let string = |k: usize, p: &DMatrix<Complex64>| {
            let mut acc = DMatrix::from_element(1, 1, one);
            for site in 0..m {
                let f = match site.cmp(&k) {
                    std::cmp::Ordering::Less => &z,
                    std::cmp::Ordering::Equal => p,
                    std::cmp::Ordering::Greater => &id2,
                };
                acc = acc.kronecker(f);
            }
            acc
        };
        let mut generators = Vec::with_capacity(dim);
        for k in 0..m {
            generators.push(string(k, &x) * i);
            generators.push(string(k, &y) * i);
        }
        let size = 1 << m;
        let mut omega = DMatrix::identity(size, size);
        for g in &generators {
            omega *= g;
        }
        let grading = omega * i.powu(m as u32);
        Ok(Self {
            dim,
            generators,
            grading,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn size(&self) -> usize {
        1 << (self.dim / 2)
    }

    /// `c(e_{index+1})`.
    pub fn generator(&self, index: usize) -> &DMatrix<Complex64> {
        &self.generators[index]
    }

    pub fn grading(&self) -> &DMatrix<Complex64> {
        &self.grading
    }

    pub fn blade_matrix(&self, b: Blade) -> DMatrix<Complex64> {
        let size = self.size();
        let mut acc = DMatrix::identity(size, size);
        for k in blade::indices(b) {
            acc *= &self.generators[k];
        }
        acc
    }

    pub fn represent<T: Scalar>(&self, a: &CliffordElement<T>) -> DMatrix<Complex64> {
        let size = self.size();
        let mut out = DMatrix::zeros(size, size);
        for (b, c) in a.terms() {
            out += self.blade_matrix(b) * c.to_c64();
        }
        out
    }

    /// Inverse of [`represent`](Self::represent): every matrix is the image of a unique element.
    pub fn decompose(&self, m: &DMatrix<Complex64>) -> Result<CliffordElement<Complex64>> {
        let size = self.size();
        if m.nrows() != size || m.ncols() != size {
            return Err(Error::ShapeMismatch(size, m.nrows()));
        }
        let mut out = CliffordElement::zero(self.dim);
        for b in 0..=blade::top(self.dim) {
            // rep(e_S) is unitary
            let c = (self.blade_matrix(b).adjoint() * m).trace() / size as f64;
            if c.norm() > 0.0 {
                out.accumulate(b, c);
            }
        }
        Ok(out)
    }

    /// `tr(Γ M)`.
    pub fn supertrace(&self, m: &DMatrix<Complex64>) -> Complex64 {
        (&self.grading * m).trace()
    }
}

/// Exhaustive supertrace audit in dimension `n`: every basis monomial in the
/// standard frame, in a rotated oriented orthonormal frame, and in a
/// reflected (orientation-reversing) frame.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SupertraceAudit {
    pub dim: usize,
    /// Monomials checked per frame.
    pub monomials: usize,
    pub frames: Vec<String>,
    pub top_expected: Complex64,
    /// Top supertrace in each frame (the reflected frame must flip the sign).
    pub top_values: Vec<Complex64>,
    pub failures: Vec<String>,
    pub passed: bool,
}

/// Largest dimension for which the frame-change part of the audit runs.
pub const MAX_AUDIT_DIM: usize = 10;

pub fn supertrace_audit(n: usize) -> Result<SupertraceAudit> {
    if n == 0 || n % 2 == 1 {
        return Err(Error::OddDimension(n));
    }
    if n > MAX_AUDIT_DIM {
        return Err(Error::InvalidParameter(format!(
            "audit dimension {n} above {MAX_AUDIT_DIM}"
        )));
    }
    let g = MetricForm::<Exact>::identity(n);
    let top = minus_two_i_pow::<Exact>(n / 2);
    let rotation = cayley_rotation(n)?;
    let mut reflection = rotation.clone();
    for row in reflection.iter_mut() {
        row[0] = -row[0];
    }
    let frames = [
        ("standard", identity_rows(n), Exact::one()),
        ("rotated", rotation, Exact::one()),
        ("reflected", reflection, -Exact::one()),
    ];
    let mut failures = Vec::new();
    let mut top_values = Vec::new();
    for (name, o, orientation) in &frames {
        // f_j = Σ_i o_ij e_i
        let gens: Vec<CliffordElement<Exact>> = (0..n)
            .map(|j| {
                (0..n).fold(CliffordElement::zero(n), |acc, i| {
                    acc.add(&CliffordElement::from_blade(n, 1 << i, o[i][j].clone()))
                        .expect("same dimension")
                })
            })
            .collect();
        for b in 0..=blade::top(n) {
            let mut e = CliffordElement::one(n);
            for i in blade::indices(b) {
                e = e.mul(&gens[i], &g)?;
            }
            let s = e.supertrace(Frame::OrthonormalOriented)?;
            let want = if b == blade::top(n) {
                top.clone() * orientation.clone()
            } else {
                Exact::zero()
            };
            if b == blade::top(n) {
                top_values.push(s.to_c64());
            }
            if s != want {
                failures.push(format!("{name} frame, monomial {b:#b}: {s} (expected {want})"));
            }
        }
    }
    if n <= 8 {
        let spin = SpinRepresentation::new(n)?;
        for b in 0..=blade::top(n) {
            let want = if b == blade::top(n) { top.to_c64() } else { Complex64::new(0.0, 0.0) };
            let m = spin.supertrace(&spin.blade_matrix(b));
            if (m - want).norm() > 1e-12 {
                failures.push(format!("spin matrices, monomial {b:#b}: {m}"));
            }
        }
    }
    Ok(SupertraceAudit {
        dim: n,
        monomials: 1 << n,
        frames: frames.iter().map(|f| f.0.to_string()).collect(),
        top_expected: top.to_c64(),
        top_values,
        passed: failures.is_empty(),
        failures,
    })
}

fn identity_rows(n: usize) -> Vec<Vec<Exact>> {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { Exact::one() } else { Exact::zero() }).collect())
        .collect()
}

/// `(I − A)(I + A)⁻¹` for a fixed rational skew matrix `A`: an exact rotation.
fn cayley_rotation(n: usize) -> Result<Vec<Vec<Exact>>> {
    let a = |i: usize, j: usize| -> Exact {
        match i.cmp(&j) {
            std::cmp::Ordering::Less => Exact::ratio((i + j) as i64 % 3 + 1, (j - i + 1) as i64),
            std::cmp::Ordering::Greater => Exact::ratio(-(((i + j) as i64) % 3 + 1), (i - j + 1) as i64),
            std::cmp::Ordering::Equal => Exact::zero(),
        }
    };
    let id = identity_rows(n);
    let plus: Vec<Vec<Exact>> = (0..n).map(|i| (0..n).map(|j| id[i][j].clone() + a(i, j)).collect()).collect();
    let minus: Vec<Vec<Exact>> = (0..n).map(|i| (0..n).map(|j| id[i][j].clone() - a(i, j)).collect()).collect();
    let inv = exact_inverse(plus)?;
    Ok((0..n)
        .map(|i| {
            (0..n)
                .map(|j| (0..n).fold(Exact::zero(), |acc, k| acc + minus[i][k].clone() * inv[k][j].clone()))
                .collect()
        })
        .collect())
}

fn exact_inverse(mut m: Vec<Vec<Exact>>) -> Result<Vec<Vec<Exact>>> {
    let n = m.len();
    let mut inv = identity_rows(n);
    for col in 0..n {
        let pivot = (col..n)
            .find(|r| !m[*r][col].is_zero())
            .ok_or_else(|| Error::Precondition("singular matrix".into()))?;
        m.swap(col, pivot);
        inv.swap(col, pivot);
        let p = m[col][col].clone();
        for j in 0..n {
            m[col][j] = m[col][j].clone() / p.clone();
            inv[col][j] = inv[col][j].clone() / p.clone();
        }
        for r in 0..n {
            if r != col && !m[r][col].is_zero() {
                let f = m[r][col].clone();
                for j in 0..n {
                    m[r][j] = m[r][j].clone() - f.clone() * m[col][j].clone();
                    inv[r][j] = inv[r][j].clone() - f.clone() * inv[col][j].clone();
                }
            }
        }
    }
    Ok(inv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Exact;
    use num_traits::{One, Zero};

    fn ex(v: i64) -> Exact {
        Exact::from_int(v)
    }

    #[test]
    fn generator_squares_to_minus_one() {
        let g = MetricForm::<Exact>::identity(3);
        let e1 = CliffordElement::generator(3, 0).unwrap();
        assert_eq!(e1.mul(&e1, &g).unwrap(), CliffordElement::scalar(3, ex(-1)));
    }

    #[test]
    fn unit_is_neutral() {
        let g = MetricForm::<Exact>::identity(4);
        let a = CliffordElement::monomial(4, &[0, 2], ex(3))
            .unwrap()
            .add(&CliffordElement::monomial(4, &[1], ex(-2)).unwrap())
            .unwrap();
        let one = CliffordElement::one(4);
        assert_eq!(one.mul(&a, &g).unwrap(), a);
        assert_eq!(a.mul(&one, &g).unwrap(), a);
    }

    #[test]
    fn bivector_square() {
        let g = MetricForm::<Exact>::identity(2);
        let e12 = CliffordElement::monomial(2, &[0, 1], Exact::one()).unwrap();
        assert_eq!(e12.mul(&e12, &g).unwrap(), CliffordElement::scalar(2, ex(-1)));
    }

    #[test]
    fn general_metric_anticommutator() {
        let g = MetricForm::<Complex64>::new(&[vec![2.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let e1 = CliffordElement::<Complex64>::generator(2, 0).unwrap();
        let e2 = CliffordElement::<Complex64>::generator(2, 1).unwrap();
        let anti = e1.mul(&e2, &g).unwrap().add(&e2.mul(&e1, &g).unwrap()).unwrap();
        assert_eq!(anti, CliffordElement::scalar(2, Complex64::new(-1.0, 0.0)));
        assert_eq!(e1.mul(&e1, &g).unwrap(), CliffordElement::scalar(2, Complex64::new(-2.0, 0.0)));
    }

    #[test]
    fn metric_validation() {
        assert!(MetricForm::<Complex64>::new(&[vec![1.0, 2.0], vec![0.0, 1.0]]).is_err());
        assert!(MetricForm::<Complex64>::new(&[vec![1.0, 0.0], vec![0.0, -1.0]]).is_err());
        let g = MetricForm::<Complex64>::new(&[vec![4.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!((g.inverse(0, 0) - 0.25).abs() < 1e-15);
        assert!(!g.is_orthonormal());
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let g = MetricForm::<Exact>::identity(2);
        let a = CliffordElement::<Exact>::one(2);
        let b = CliffordElement::<Exact>::one(3);
        assert!(matches!(a.mul(&b, &g), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn supertrace_examples() {
        let e12 = CliffordElement::monomial(2, &[0, 1], Exact::one()).unwrap();
        let st = e12.supertrace(Frame::OrthonormalOriented).unwrap();
        assert_eq!(st, Exact::new(Zero::zero(), num_rational::Ratio::from_integer(-2)));
        let one = CliffordElement::<Exact>::one(4);
        assert_eq!(one.supertrace(Frame::OrthonormalOriented).unwrap(), Exact::zero());
        let top = CliffordElement::monomial(4, &[0, 1, 2, 3], Exact::one()).unwrap();
        assert_eq!(top.supertrace(Frame::OrthonormalOriented).unwrap(), ex(-4));
    }

    #[test]
    fn supertrace_rejects_odd_and_coordinate_frames() {
        let a = CliffordElement::<Exact>::one(3);
        assert_eq!(a.supertrace(Frame::OrthonormalOriented), Err(Error::OddDimension(3)));
        let b = CliffordElement::<Exact>::one(2);
        assert_eq!(b.supertrace(Frame::Coordinate), Err(Error::NonOrthonormalFrame));
    }

    #[test]
    fn filtration_degree_examples() {
        let g = MetricForm::<Exact>::identity(3);
        assert_eq!(CliffordElement::<Exact>::one(3).filtration_degree(), 0);
        assert_eq!(CliffordElement::<Exact>::zero(3).filtration_degree(), 0);
        let a = CliffordElement::monomial(3, &[0, 1], Exact::one())
            .unwrap()
            .add(&CliffordElement::generator(3, 2).unwrap())
            .unwrap();
        assert_eq!(a.filtration_degree(), 2);
        let e1 = CliffordElement::<Exact>::generator(3, 0).unwrap();
        assert_eq!(e1.mul(&e1, &g).unwrap().filtration_degree(), 0);
    }

    #[test]
    fn spin_representation_n2() {
        let rep = SpinRepresentation::new(2).unwrap();
        let id = DMatrix::<Complex64>::identity(2, 2);
        let e1 = rep.generator(0);
        assert!((e1 * e1 + &id).camax() < 1e-15);
        let grading = rep.grading();
        assert!((grading * grading - &id).camax() < 1e-15);
        let e12 = rep.blade_matrix(0b11);
        assert!((grading - e12 * Complex64::i()).camax() < 1e-15);
        // Γ = σz
        assert!((grading[(0, 0)] - 1.0).norm() < 1e-15 && (grading[(1, 1)] + 1.0).norm() < 1e-15);
        let st = rep.supertrace(&rep.blade_matrix(0b11));
        assert!((st - Complex64::new(0.0, -2.0)).norm() < 1e-14);
    }

    #[test]
    fn representation_rejects_odd() {
        assert!(matches!(SpinRepresentation::new(3), Err(Error::OddDimension(3))));
        assert!(CliffordElement::<Exact>::one(5).matrix_representation().is_err());
    }

    #[test]
    fn decompose_inverts_represent() {
        let rep = SpinRepresentation::new(4).unwrap();
        let a = CliffordElement::<Complex64>::monomial(4, &[0, 2], Complex64::new(0.5, -1.0))
            .unwrap()
            .add(&CliffordElement::scalar(4, Complex64::new(2.0, 0.0)))
            .unwrap();
        let back = rep.decompose(&rep.represent(&a)).unwrap();
        for b in 0..16 {
            assert!((back.coefficient(b) - a.coefficient(b)).norm() < 1e-14);
        }
    }

    #[test]
    fn audit_covers_rotated_and_reflected_frames() {
        for n in [2, 4, 6] {
            let a = supertrace_audit(n).unwrap();
            assert!(a.passed, "{:?}", a.failures);
            assert_eq!(a.top_values[2], -a.top_expected);
        }
        assert!(matches!(supertrace_audit(3), Err(Error::OddDimension(3))));
    }
}
