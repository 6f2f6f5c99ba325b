//! Getzler rescaling: the family `l_t = t^n k_{t²}` on the diagonal, its
//! Taylor filtration by Clifford degree, the harmonic-oscillator limit
//! operator and Mehler's formula.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::blade::{self, Blade};
use crate::charclass::{CurvatureMatrix, FormPolynomial, FormScalar};
use crate::clifford::{quantize, CliffordElement, Frame, SpinRepresentation};
use crate::error::{Error, Result};
use crate::geometry::ModelGeometry;
use crate::linalg::{self, CMatrix};
use crate::matrix::SquareMatrix;
use crate::operators::{spectrum, DiracAssembly, SpectralBasis, SpectralData, SpectrumOptions};
use crate::scalar::Scalar;

pub const DEFAULT_SCALE_RANGE: (f64, f64) = (0.1, 0.6);
pub const DEFAULT_SCALE_SAMPLES: usize = 24;
pub const TAYLOR_DEGREE: usize = 6;
pub const FILTRATION_TOLERANCE: f64 = 1e-6;

pub fn default_scales() -> Vec<f64> {
    let (a, b) = DEFAULT_SCALE_RANGE;
    let n = DEFAULT_SCALE_SAMPLES;
    (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect()
}

/// Diagonal values of `l_t = t^n k_{t²}` in the Clifford basis, with a
/// polynomial fit in `t`.
#[derive(Clone, Debug)]
pub struct RescaledFamily {
    pub dim: usize,
    pub scales: Vec<f64>,
    pub values: Vec<CliffordElement<Complex64>>,
    /// `taylor[m]` is the coefficient of `t^m`.
    pub taylor: Vec<CliffordElement<Complex64>>,
    pub fit_residual: f64,
}

pub fn scale_kernel(assembly: &DiracAssembly, scales: &[f64]) -> Result<RescaledFamily> {
    let spectral = spectrum(assembly, SpectrumOptions::default())?;
    scale_spectral(&spectral, assembly.geometry().dim(), scales)
}

/// As [`scale_kernel`] from precomputed Dirac spectral data of a homogeneous model.
pub fn scale_spectral(spectral: &SpectralData, dim: usize, scales: &[f64]) -> Result<RescaledFamily> {
    if spectral.basis != SpectralBasis::Homogeneous || !spectral.dirac {
        return Err(Error::Unsupported("rescaling needs Dirac data on a homogeneous model".into()));
    }
    if let Some(t) = scales.iter().find(|t| !(**t > 0.0 && **t <= 1.0)) {
        return Err(Error::InvalidParameter(format!("scale {t} outside (0, 1]")));
    }
    let spin = SpinRepresentation::new(dim)?;
    if spin.size() != 2 {
        return Err(Error::Unsupported(format!("rescaling in dimension {dim}")));
    }
    let values = scales
        .iter()
        .map(|t| {
            let (p, m) = spectral.chiral_traces(t * t);
            let tn = t.powi(dim as i32);
            let k = CMatrix::from_row_slice(
                2,
                2,
                &[
                    Complex64::new(tn * p / spectral.area, 0.0),
                    Complex64::new(0.0, 0.0),
                    Complex64::new(0.0, 0.0),
                    Complex64::new(tn * m / spectral.area, 0.0),
                ],
            );
            spin.decompose(&k)
        })
        .collect::<Result<Vec<_>>>()?;
    RescaledFamily::fit(dim, scales.to_vec(), values)
}

impl RescaledFamily {
    pub fn fit(dim: usize, scales: Vec<f64>, values: Vec<CliffordElement<Complex64>>) -> Result<Self> {
        if scales.len() < dim + 1 {
            return Err(Error::InsufficientSamples {
                needed: dim + 1,
                got: scales.len(),
            });
        }
        let degree = TAYLOR_DEGREE.min(scales.len() - 1);
        let mut taylor = vec![CliffordElement::zero(dim); degree + 1];
        let mut fit_residual: f64 = 0.0;
        for b in 0..=blade::top(dim) {
            let coeffs: Vec<Complex64> = values.iter().map(|v| v.coefficient(b)).collect();
            if coeffs.iter().all(|c| *c == Complex64::new(0.0, 0.0)) {
                continue;
            }
            let re: Vec<f64> = coeffs.iter().map(|c| c.re).collect();
            let im: Vec<f64> = coeffs.iter().map(|c| c.im).collect();
            let fr = linalg::polynomial_fit(&scales, &re, degree)?;
            let fi = linalg::polynomial_fit(&scales, &im, degree)?;
            fit_residual = fit_residual.max(fr.residual).max(fi.residual);
            for (m, slot) in taylor.iter_mut().enumerate() {
                let c = Complex64::new(fr.coefficients[m], fi.coefficients[m]);
                *slot = slot.add(&CliffordElement::from_blade(dim, b, c))?;
            }
        }
        Ok(Self {
            dim,
            scales,
            values,
            taylor,
            fit_residual,
        })
    }

    /// The family with the `t^n` factor removed (negative control).
    pub fn unnormalized(&self) -> Result<Self> {
        let values = self
            .values
            .iter()
            .zip(&self.scales)
            .map(|(v, t)| v.scale(&Complex64::new(t.powi(-(self.dim as i32)), 0.0)))
            .collect();
        Self::fit(self.dim, self.scales.clone(), values)
    }

    pub fn supertraces(&self) -> Result<Vec<Complex64>> {
        self.values
            .iter()
            .map(|v| v.supertrace(Frame::OrthonormalOriented))
            .collect()
    }

    /// Log-log slope of `|tr_s(l_t)|` against `t`.
    pub fn supertrace_slope(&self) -> Result<f64> {
        let s: Vec<f64> = self.supertraces()?.iter().map(|z| z.norm()).collect();
        linalg::loglog_slope(&self.scales, &s)
    }

    /// Fitted `lim_{t→0} t^{−n} tr_s(l_t)`, on the full window and on its lower half.
    pub fn limit_density(&self) -> Result<LimitReport> {
        let s = self.supertraces()?;
        let g: Vec<f64> = s
            .iter()
            .zip(&self.scales)
            .map(|(z, t)| z.re / t.powi(self.dim as i32))
            .collect();
        let imag = s.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
        let deg = 4.min(self.scales.len() / 2 - 1);
        let full = linalg::polynomial_fit(&self.scales, &g, deg)?;
        let half_n = self.scales.len() / 2;
        let half = linalg::polynomial_fit(&self.scales[..half_n], &g[..half_n], deg)?;
        Ok(LimitReport {
            value: full.coefficients[0],
            drift: (full.coefficients[0] - half.coefficients[0]).abs(),
            imaginary_part: imag,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LimitReport {
    pub value: f64,
    pub drift: f64,
    pub imaginary_part: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FiltrationReport {
    pub passed: bool,
    /// Largest norm of a component of grade `> m` in the `t^m` coefficient,
    /// relative to the largest sampled value.
    pub violation: f64,
    pub tolerance: f64,
    /// Highest grade present (above tolerance) in each Taylor coefficient.
    pub degrees: Vec<Option<usize>>,
}

pub fn taylor_filtration_check(family: &RescaledFamily) -> FiltrationReport {
    let lead = family
        .values
        .iter()
        .flat_map(|c| c.terms().map(|(_, v)| v.norm()).collect::<Vec<_>>())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let mut violation: f64 = 0.0;
    let mut degrees = Vec::with_capacity(family.taylor.len());
    for (m, c) in family.taylor.iter().enumerate() {
        let mut top = None;
        for (b, v) in c.terms() {
            let rel = v.norm() / lead;
            if rel > FILTRATION_TOLERANCE {
                top = top.max(Some(blade::grade(b)));
            }
            if m <= family.dim && blade::grade(b) > m {
                violation = violation.max(rel);
            }
        }
        degrees.push(top);
    }
    FiltrationReport {
        passed: violation <= FILTRATION_TOLERANCE,
        violation,
        tolerance: FILTRATION_TOLERANCE,
        degrees,
    }
}

// ---------------------------------------------------------------------------
// model operator

/// Constant curvature data at a point, in an oriented orthonormal frame.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelOperatorSpec {
    pub dim: usize,
    /// `R_{ijkl}` at `((i n + j) n + k) n + l`.
    pub riemann: Vec<f64>,
    /// `F(e_k, e_l)` at `k n + l` (rank-one twist).
    pub twist: Vec<Complex64>,
    pub center: Vec<f64>,
}

impl ModelOperatorSpec {
    pub fn flat(dim: usize) -> Self {
        Self {
            dim,
            riemann: vec![0.0; dim.pow(4)],
            twist: vec![Complex64::new(0.0, 0.0); dim * dim],
            center: vec![0.0; dim],
        }
    }

    /// Surface with `R_{1212} = r` and twist `F(e1, e2) = f`.
    pub fn surface(r: f64, f: Complex64) -> Self {
        let mut s = Self::flat(2);
        for (i, j, k, l, sign) in [(0, 1, 0, 1, 1.0), (1, 0, 1, 0, 1.0), (0, 1, 1, 0, -1.0), (1, 0, 0, 1, -1.0)] {
            s.riemann[((i * 2 + j) * 2 + k) * 2 + l] = sign * r;
        }
        s.twist[1] = f;
        s.twist[2] = -f;
        s
    }

    pub fn from_assembly(assembly: &DiracAssembly, x: &[f64]) -> Result<Self> {
        let geom = assembly.geometry();
        let n = geom.dim();
        let curv = geom.curvature(x);
        let mut riemann = vec![0.0; n.pow(4)];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        riemann[((i * n + j) * n + k) * n + l] = curv.riemann_frame(i, j, k, l);
                    }
                }
            }
        }
        let f = assembly.twist_field();
        let mut twist = vec![Complex64::new(0.0, 0.0); n * n];
        twist[1] = f;
        twist[n] = -f;
        let spec = Self {
            dim: n,
            riemann,
            twist,
            center: x.to_vec(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dim;
        if self.riemann.len() != n.pow(4) || self.twist.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: self.center.len(),
            });
        }
        let r = |i: usize, j: usize, k: usize, l: usize| self.riemann[((i * n + j) * n + k) * n + l];
        let mut res: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        res = res.max((r(i, j, k, l) + r(j, i, k, l)).abs());
                        res = res.max((r(i, j, k, l) + r(i, j, l, k)).abs());
                    }
                }
                let f = self.twist[i * n + j];
                res = res.max((f + self.twist[j * n + i]).norm()).max(f.re.abs());
            }
        }
        if res > 1e-12 {
            return Err(Error::NotAntisymmetric(res));
        }
        Ok(())
    }

    /// Curvature and twist as nilpotent 2-forms.
    pub fn nilpotent(&self) -> Result<NilpotentModel<Complex64>> {
        self.validate()?;
        let n = self.dim;
        let curvature = CurvatureMatrix::from_tensor(n, |i, j, k, l| {
            Complex64::new(self.riemann[((i * n + j) * n + k) * n + l], 0.0)
        })?;
        let mut twist = FormPolynomial::zero(n, 1);
        for k in 0..n {
            for l in (k + 1)..n {
                let f = self.twist[k * n + l];
                if f != Complex64::new(0.0, 0.0) {
                    twist = twist.add(&FormPolynomial::monomial(n, &[k, l], SquareMatrix::from_fn(1, |_, _| f))?)?;
                }
            }
        }
        Ok(NilpotentModel { curvature, twist })
    }
}

/// Truncated Hermite-basis realization of the scalar limit operator
/// `−Σ_i (∂_i + (i/4) Σ_j r_ij x_j)² + E`, where the 2-form-valued curvature
/// is replaced by the number `r_ij = R_{ij12}` times `i` (and likewise
/// `E = i F(e1, e2)`), which keeps the operator self-adjoint.
#[derive(Clone, Debug)]
pub struct ModelOperator {
    pub spec: ModelOperatorSpec,
    /// Hermite functions `ψ_k` of `−∂² + ω²x²`.
    pub omega: f64,
    /// Basis: `(n1, n2)` with `n1 + n2 < modes` (or `n < modes` in 1D).
    pub basis: Vec<(usize, usize)>,
    pub matrix: CMatrix,
    /// `x1 ∂2 − x2 ∂1` (times `−i`), zero in 1D.
    pub rotation: CMatrix,
}

pub const DEFAULT_HERMITE_MODES: usize = 32;

/// `(X, D)` on the first `m` Hermite functions of scale `ω`.
fn hermite_ops(m: usize, omega: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut x = DMatrix::zeros(m, m);
    let mut d = DMatrix::zeros(m, m);
    for k in 1..m {
        let s = (k as f64).sqrt();
        x[(k - 1, k)] = s / (2.0 * omega).sqrt();
        x[(k, k - 1)] = s / (2.0 * omega).sqrt();
        d[(k - 1, k)] = (0.5 * omega).sqrt() * s;
        d[(k, k - 1)] = -(0.5 * omega).sqrt() * s;
    }
    (x, d)
}

pub fn model_operator(spec: &ModelOperatorSpec, modes: usize) -> Result<ModelOperator> {
    spec.validate()?;
    if modes < 4 {
        return Err(Error::InvalidParameter(format!("need at least 4 Hermite modes, got {modes}")));
    }
    let n = spec.dim;
    let c = |re: f64, im: f64| Complex64::new(re, im);
    match n {
        1 => {
            let (_, d) = hermite_ops(modes + 2, 1.0);
            let d2 = &d * &d;
            let e = (c(0.0, 1.0) * spec.twist[0]).re;
            let matrix = CMatrix::from_fn(modes, modes, |a, b| {
                c(-d2[(a, b)] + if a == b { e } else { 0.0 }, 0.0)
            });
            Ok(ModelOperator {
                spec: spec.clone(),
                omega: 1.0,
                basis: (0..modes).map(|k| (k, 0)).collect(),
                matrix,
                rotation: CMatrix::zeros(modes, modes),
            })
        }
        2 => {
            let r12 = spec.riemann[((0 * 2 + 1) * 2 + 0) * 2 + 1];
            let r21 = spec.riemann[((1 * 2 + 0) * 2 + 0) * 2 + 1];
            let e = (c(0.0, 1.0) * spec.twist[1]).re;
            let omega = if r12 != 0.0 { 0.25 * r12.abs() } else { 1.0 };
            let (x, d) = hermite_ops(modes + 2, omega);
            let x2 = &x * &x;
            let d2 = &d * &d;
            let id = DMatrix::<f64>::identity(modes + 2, modes + 2);
            let basis: Vec<(usize, usize)> = (0..modes)
                .flat_map(|n1| (0..modes - n1).map(move |n2| (n1, n2)))
                .collect();
            // tensor terms (coefficient, axis-1 operator, axis-2 operator)
            let terms: Vec<(Complex64, &DMatrix<f64>, &DMatrix<f64>)> = vec![
                (c(-1.0, 0.0), &d2, &id),
                (c(-1.0, 0.0), &id, &d2),
                (c(0.0, -0.5 * r12), &d, &x),
                (c(0.0, -0.5 * r21), &x, &d),
                (c(r12 * r12 / 16.0, 0.0), &id, &x2),
                (c(r21 * r21 / 16.0, 0.0), &x2, &id),
                (c(e, 0.0), &id, &id),
            ];
            let rot_terms: Vec<(Complex64, &DMatrix<f64>, &DMatrix<f64>)> =
                vec![(c(0.0, -1.0), &x, &d), (c(0.0, 1.0), &d, &x)];
            let assemble = |terms: &[(Complex64, &DMatrix<f64>, &DMatrix<f64>)]| {
                CMatrix::from_fn(basis.len(), basis.len(), |a, b| {
                    let (a1, a2) = basis[a];
                    let (b1, b2) = basis[b];
                    terms
                        .iter()
                        .map(|(k, o1, o2)| *k * (o1[(a1, b1)] * o2[(a2, b2)]))
                        .sum()
                })
            };
            let matrix = assemble(&terms);
            let rotation = assemble(&rot_terms);
            Ok(ModelOperator {
                spec: spec.clone(),
                omega,
                basis,
                matrix,
                rotation,
            })
        }
        _ => Err(Error::Unsupported(format!("Hermite realization in dimension {n}"))),
    }
}

impl ModelOperator {
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        Ok(linalg::eigh(&self.matrix)?.0)
    }

    /// `‖[H, L]‖` (entrywise max).
    pub fn rotation_commutator(&self) -> f64 {
        linalg::max_abs(&(&self.matrix * &self.rotation - &self.rotation * &self.matrix))
    }
}

/// `(a / (2π sinh 2at))^{1/2}`: Mehler kernel of `−∂² + a²x²` at `(0, 0)`.
pub fn oscillator_mehler(a: f64, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::NonPositiveTime(t));
    }
    Ok((a / (2.0 * PI * (2.0 * a * t).sinh())).sqrt())
}

/// `Σ_k e^{−tλ_k} |φ_k(0)|²` from a diagonalization of `−∂² + a²x²` in the
/// Hermite basis of scale 1 (so the eigenvectors are not the basis vectors
/// unless `a = 1`); only eigenpairs with small residual enter.
pub fn oscillator_eigensum(a: f64, t: f64, modes: usize) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::NonPositiveTime(t));
    }
    let (x, d) = hermite_ops(modes + 2, 1.0);
    let h = &x * &x * (a * a) - &d * &d;
    let hm = CMatrix::from_fn(modes, modes, |r, c| Complex64::new(h[(r, c)], 0.0));
    let (vals, vecs) = linalg::eigh(&hm)?;
    // ψ_k(0) for the scale-1 Hermite functions
    let mut psi0 = vec![0.0; modes];
    psi0[0] = PI.powf(-0.25);
    for k in (2..modes).step_by(2) {
        psi0[k] = -psi0[k - 2] * ((k - 1) as f64 / k as f64).sqrt();
    }
    let mut acc = 0.0;
    for (k, lam) in vals.iter().enumerate() {
        let v = vecs.column(k);
        // eigenvectors reaching into the top of the basis are truncation artifacts
        let tail: f64 = v.iter().skip(modes * 3 / 4).map(|z| z.norm_sqr()).sum();
        if tail > 1e-20 {
            continue;
        }
        let phi0: Complex64 = v.iter().zip(&psi0).map(|(z, p)| z * p).sum();
        acc += (-t * lam).exp() * phi0.norm_sqr();
    }
    Ok(acc)
}

// ---------------------------------------------------------------------------
// Mehler with nilpotent curvature

/// Curvature `R` (n×n matrix of 2-forms) and twisting curvature `F`
/// (End(twist)-valued 2-form) of a model operator.
#[derive(Clone, Debug, PartialEq)]
pub struct NilpotentModel<T: Scalar> {
    pub curvature: CurvatureMatrix<T>,
    pub twist: FormPolynomial<SquareMatrix<T>>,
}

/// `(4πt)^{−n/2}` times a form with values in End(twist).
#[derive(Clone, Debug, PartialEq)]
pub struct MehlerValue<T: FormScalar> {
    pub dim: usize,
    pub prefactor: f64,
    pub form: FormPolynomial<SquareMatrix<T>>,
    /// `det^{1/2}((tR/2)/sinh(tR/2))`.
    pub curvature_part: FormPolynomial<T>,
    /// `exp(−tF)`.
    pub twist_part: FormPolynomial<SquareMatrix<T>>,
}

/// Mehler's kernel at the origin with the curvature treated as nilpotent
/// parameters, for rational `t = num/den`.
///
/// Route (independent of the characteristic-class code): power series of
/// `sinh(X)/X` for `X = tR/2`, Neumann-series inverse, Leibniz determinant,
/// Newton iteration for the square root.
pub fn mehler_nilpotent<T: FormScalar>(model: &NilpotentModel<T>, t_num: i64, t_den: i64) -> Result<MehlerValue<T>> {
    if t_num <= 0 || t_den <= 0 {
        return Err(Error::NonPositiveTime(t_num as f64 / t_den as f64));
    }
    let n = model.curvature.dim();
    let t = T::ratio(t_num, t_den);
    let x = model.curvature.as_form().scale(&(t.clone() * T::ratio(1, 2)));
    // sinh(X)/X = Σ X^{2k}/(2k+1)!
    let s = x.power_series(|j| {
        if j % 2 == 1 {
            T::zero()
        } else {
            (1..=j as i64 + 1).fold(T::one(), |acc, m| acc * T::ratio(1, m))
        }
    })?;
    let y = s.sub(&FormPolynomial::one(n, n))?;
    let inv = y.power_series(|m| if m % 2 == 0 { T::one() } else { -T::one() })?;
    let det = leibniz_det(&inv, n)?;
    let root = newton_sqrt(&det)?;
    let twist_part = model.twist.scale(&(-t)).exp_nilpotent()?;
    let size = model.twist.shape();
    let lifted = scalar_to_matrix_form(&root, size)?;
    let form = lifted.wedge(&twist_part)?;
    let tf = t_num as f64 / t_den as f64;
    Ok(MehlerValue {
        dim: n,
        prefactor: (4.0 * PI * tf).powf(-0.5 * n as f64),
        form,
        curvature_part: root,
        twist_part,
    })
}

fn entry<T: FormScalar>(m: &FormPolynomial<SquareMatrix<T>>, i: usize, j: usize) -> Result<FormPolynomial<T>> {
    let n = m.dim();
    let mut out = FormPolynomial::zero(n, ());
    for (b, c) in m.terms() {
        let v = c.get(i, j).clone();
        if v != T::zero() {
            out = out.add(&blade_form(n, b, v)?)?;
        }
    }
    Ok(out)
}

fn blade_form<T: FormScalar>(n: usize, b: Blade, v: T) -> Result<FormPolynomial<T>> {
    let idx: Vec<usize> = blade::indices(b).collect();
    FormPolynomial::monomial(n, &idx, v)
}

fn scalar_to_matrix_form<T: FormScalar>(f: &FormPolynomial<T>, size: usize) -> Result<FormPolynomial<SquareMatrix<T>>> {
    let n = f.dim();
    let mut out = FormPolynomial::zero(n, size);
    for (b, c) in f.terms() {
        let idx: Vec<usize> = blade::indices(b).collect();
        out = out.add(&FormPolynomial::monomial(n, &idx, SquareMatrix::identity(size).scale(c))?)?;
    }
    Ok(out)
}

/// Determinant of a matrix of commuting (even) forms by the Leibniz formula.
fn leibniz_det<T: FormScalar>(m: &FormPolynomial<SquareMatrix<T>>, size: usize) -> Result<FormPolynomial<T>> {
    let n = m.dim();
    let entries: Vec<Vec<FormPolynomial<T>>> = (0..size)
        .map(|i| (0..size).map(|j| entry(m, i, j)).collect::<Result<_>>())
        .collect::<Result<_>>()?;
    let mut perm: Vec<usize> = (0..size).collect();
    let mut out = FormPolynomial::zero(n, ());
    let mut sign = T::one();
    permute(&mut perm, 0, &mut sign, &mut |p, sgn| {
        let mut term = FormPolynomial::one(n, ()).scale(sgn);
        for (i, j) in p.iter().enumerate() {
            term = term.wedge(&entries[i][*j])?;
            if term.is_zero() {
                return Ok(());
            }
        }
        out = out.add(&term)?;
        Ok(())
    })?;
    Ok(out)
}

fn permute<T: Scalar>(
    p: &mut Vec<usize>,
    k: usize,
    sign: &mut T,
    visit: &mut dyn FnMut(&[usize], &T) -> Result<()>,
) -> Result<()> {
    if k == p.len() {
        return visit(p, sign);
    }
    for i in k..p.len() {
        p.swap(k, i);
        if i != k {
            *sign = -sign.clone();
        }
        permute(p, k + 1, sign, visit)?;
        p.swap(k, i);
        if i != k {
            *sign = -sign.clone();
        }
    }
    Ok(())
}

/// Square root of `1 + nilpotent` by Newton's iteration `y ← (y + D/y)/2`.
fn newton_sqrt<T: FormScalar>(d: &FormPolynomial<T>) -> Result<FormPolynomial<T>> {
    let n = d.dim();
    let one = FormPolynomial::one(n, ());
    if d.coefficient(0) != T::one() {
        return Err(Error::InvalidParameter("square root needs constant term 1".into()));
    }
    let mut y = one.clone();
    for _ in 0..=n {
        let z = y.sub(&one)?;
        let inv = z.power_series(|m| if m % 2 == 0 { T::one() } else { -T::one() })?;
        let next = y.add(&d.wedge(&inv)?)?.scale(&T::ratio(1, 2));
        if next == y {
            return Ok(y);
        }
        y = next;
    }
    Ok(y)
}

impl<T: FormScalar> MehlerValue<T> {
    /// Trace over the twisting bundle.
    pub fn twist_trace(&self) -> FormPolynomial<T> {
        self.form.trace()
    }

    /// Clifford symbol of the twist-traced value (without the prefactor).
    pub fn clifford(&self) -> Result<CliffordElement<T>> {
        quantize(&self.twist_trace())
    }

    /// `(4πt)^{−n/2} · str`: reads the top Clifford degree.
    pub fn supertrace(&self) -> Result<Complex64> {
        Ok(self.clifford()?.supertrace(Frame::OrthonormalOriented)?.to_c64() * self.prefactor)
    }
}

/// Mehler value for numeric curvature data (`t` given as a float).
pub fn mehler_heat_value(spec: &ModelOperatorSpec, t: f64) -> Result<MehlerValue<Complex64>> {
    if !(t > 0.0) {
        return Err(Error::NonPositiveTime(t));
    }
    let model = spec.nilpotent()?;
    // scale R and F by t and evaluate at unit time
    let scaled = NilpotentModel {
        curvature: model.curvature.scale(&Complex64::new(t, 0.0)),
        twist: model.twist.scale(&Complex64::new(t, 0.0)),
    };
    let mut v = mehler_nilpotent(&scaled, 1, 1)?;
    v.prefactor = (4.0 * PI * t).powf(-0.5 * spec.dim as f64);
    Ok(v)
}

/// Index density at `x`: supertrace of the unit-time Mehler value built from
/// the pointwise curvature and twist.
pub fn index_density(geom: &ModelGeometry, assembly: &DiracAssembly, x: &[f64]) -> Result<Complex64> {
    if geom != assembly.geometry() {
        return Err(Error::InvalidParameter("assembly was built on a different geometry".into()));
    }
    mehler_heat_value(&ModelOperatorSpec::from_assembly(assembly, x)?, 1.0)?.supertrace()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::charclass::{a_hat, chern_character};
    use crate::geometry::GeometrySpec;
    use crate::operators::build_dirac;
    use crate::scalar::Exact;

    fn torus() -> ModelGeometry {
        GeometrySpec::flat_torus(vec![2.0 * PI, 2.0 * PI], 128).build().unwrap()
    }

    #[test]
    fn flat_untwisted_family_is_scalar() {
        let a = build_dirac(&GeometrySpec::flat_torus(vec![2.0 * PI, 2.0 * PI], 64).build().unwrap(), 0).unwrap();
        let fam = scale_kernel(&a, &default_scales()).unwrap();
        assert!(fam.supertraces().unwrap().iter().all(|s| s.norm() < 1e-12));
        let rep = taylor_filtration_check(&fam);
        assert!(rep.passed);
        assert!(rep.degrees.iter().all(|d| d.unwrap_or(0) == 0));
    }

    #[test]
    fn twisted_family_filtration_and_limit() {
        let g = torus();
        let a = build_dirac(&g, 2).unwrap();
        let fam = scale_kernel(&a, &default_scales()).unwrap();
        let rep = taylor_filtration_check(&fam);
        assert!(rep.passed, "{rep:?}");
        assert_eq!(rep.degrees[0], Some(0));
        assert_eq!(rep.degrees[2], Some(2));
        assert!((fam.supertrace_slope().unwrap() - 2.0).abs() < 0.1);
        let lim = fam.limit_density().unwrap();
        assert!(lim.drift < 1e-4);
        let area = 4.0 * PI * PI;
        assert!((lim.value * area - 2.0).abs() < 1e-3);
        let dens = index_density(&g, &a, &[0.0, 0.0]).unwrap();
        assert!((dens.re - lim.value).abs() < 1e-3 && dens.im.abs() < 1e-12);
        assert!(!taylor_filtration_check(&fam.unnormalized().unwrap()).passed);
    }

    #[test]
    fn hermite_realization() {
        let r = 1.5;
        let op = model_operator(&ModelOperatorSpec::surface(r, Complex64::new(0.0, 0.0)), 16).unwrap();
        let ev = op.eigenvalues().unwrap();
        assert!(ev[0] > 0.5 * r - 1e-10);
        let count = |v: f64| ev.iter().filter(|e| (*e - v).abs() < 1e-9).count();
        assert_eq!(count(0.5 * r), 16);
        assert_eq!(count(1.5 * r), 15);
        assert!(op.rotation_commutator() < 1e-10);
        let flat = model_operator(&ModelOperatorSpec::flat(2), 8).unwrap();
        assert!((flat.matrix[(0, 0)].re - 1.0).abs() < 1e-14);
        assert!(flat.eigenvalues().unwrap()[0] > 0.0);
        assert!(model_operator(&ModelOperatorSpec::flat(2), 2).is_err());
    }

    #[test]
    fn oscillator_mehler_matches_eigensum() {
        for (a, t) in [(1.5, 0.7), (0.8, 1.2), (1.0, 0.5)] {
            let m = oscillator_mehler(a, t).unwrap();
            let s = oscillator_eigensum(a, t, 96).unwrap();
            assert!((m - s).abs() < 1e-8, "a={a} t={t}: {m} vs {s}");
        }
    }

    fn exact_model(n: usize) -> NilpotentModel<Exact> {
        let r = CurvatureMatrix::from_tensor(n, |i, j, k, l| {
            let v = ((i + 2 * j + 3 * k + 5 * l) % 7) as i64 - 3;
            let w = ((j + 2 * i + 3 * k + 5 * l) % 7) as i64 - 3;
            let u = ((i + 2 * j + 3 * l + 5 * k) % 7) as i64 - 3;
            let z = ((j + 2 * i + 3 * l + 5 * k) % 7) as i64 - 3;
            Exact::ratio(v - w - u + z, 4)
        })
        .unwrap();
        let mut f = FormPolynomial::zero(n, 2);
        for (k, l, a, b) in [(0usize, 1usize, 1i64, 2i64), (2, 3, -1, 3), (1, 2, 2, 5)] {
            if l < n {
                let m = SquareMatrix::from_fn(2, |i, j| match (i, j) {
                    (0, 0) => Exact::i() * Exact::ratio(a, b),
                    (1, 1) => Exact::i() * Exact::ratio(-a, 1),
                    (0, 1) => Exact::ratio(1, b),
                    _ => Exact::ratio(-1, b),
                });
                f = f.add(&FormPolynomial::monomial(n, &[k, l], m).unwrap()).unwrap();
            }
        }
        NilpotentModel { curvature: r, twist: f }
    }

    #[test]
    fn mehler_series_matches_characteristic_classes() {
        for n in [2usize, 4, 6] {
            let m = exact_model(n);
            let v = mehler_nilpotent(&m, 1, 1).unwrap();
            assert_eq!(v.curvature_part, a_hat(&m.curvature).unwrap());
            let ch = chern_character(&m.twist.scale(&Exact::from_int(-1))).unwrap();
            assert_eq!(v.twist_trace(), a_hat(&m.curvature).unwrap().wedge(&ch).unwrap());
            let v3 = mehler_nilpotent(&m, 1, 3).unwrap();
            assert_eq!(v3.curvature_part, a_hat(&m.curvature.scale(&Exact::ratio(1, 3))).unwrap());
        }
    }
}
