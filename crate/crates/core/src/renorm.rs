//! Finite-part integrals `⨍ f dμ = FP_{z=0} ∫ ρ^z f dμ`.
//!
//! `G(z)` is sampled on real `z` away from the poles, fitted by a rational
//! function (linearized least squares, smallest singular vector), and the
//! Laurent coefficients at `z = 0` are read off by a Cauchy integral of the fit
//! on a small circle. Near-cancelling pole/zero pairs of the fit are discarded.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{GeometryKind, ModelGeometry};
use crate::heat::{HeatKernelGrid, KernelSlice};
use crate::linalg::CMatrix;
use crate::operators::SpectralData;
use crate::quadrature::Rule;

/// Sampling and fit parameters for [`regularized_integral`].
#[derive(Clone, Debug, PartialEq)]
pub struct RenormConfig {
    pub z_min: f64,
    pub z_max: f64,
    pub samples: usize,
    pub max_pole_order: usize,
    pub max_degree: usize,
    pub tolerance: f64,
}

impl Default for RenormConfig {
    fn default() -> Self {
        Self {
            z_min: 0.25,
            z_max: 3.0,
            samples: 24,
            max_pole_order: 2,
            max_degree: 9,
            tolerance: 1e-8,
        }
    }
}

/// Laurent data of `G(z)` at `z = 0`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LaurentData {
    pub pole_order: usize,
    /// `c_{−p}, …, c_{−1}`.
    pub poles: Vec<f64>,
    pub finite_part: f64,
    pub z_samples: Vec<f64>,
    pub g_samples: Vec<f64>,
    /// Largest reconstruction error of the fit on the samples, relative to `max |G|`.
    pub residual: f64,
    /// Degrees `(numerator, denominator)` of the accepted rational fit.
    pub degrees: (usize, usize),
    /// Poles of the fit (after discarding cancelling pairs).
    pub fit_poles: Vec<Complex64>,
}

impl LaurentData {
    /// `c_{−1}`, the residue at 0.
    pub fn residue(&self) -> f64 {
        self.poles.last().copied().unwrap_or(0.0)
    }

    /// `Σ c_k z^k` at `z`.
    pub fn principal_plus_finite(&self, z: f64) -> f64 {
        let p = self.pole_order;
        let mut v = self.finite_part;
        for (k, c) in self.poles.iter().enumerate() {
            v += c * z.powi(-((p - k) as i32));
        }
        v
    }
}

/// A pole of `G` found in a window, with its multiplicity.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Pole {
    pub location: f64,
    pub order: usize,
}

/// Rational approximation `P/Q` in the monomial basis of `z`.
#[derive(Clone, Debug)]
struct RationalFit {
    num: Vec<f64>,
    den: Vec<f64>,
    residual: f64,
    poles: Vec<Complex64>,
}

impl RationalFit {
    fn eval(&self, z: Complex64) -> Complex64 {
        horner(&self.num, z) / horner(&self.den, z)
    }
}

fn horner(c: &[f64], z: Complex64) -> Complex64 {
    c.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, a| acc * z + a)
}

/// Monomial coefficients of the Chebyshev polynomials `T_0..T_deg` in
/// `w = (z − centre)/half`.
fn chebyshev_in_z(deg: usize, centre: f64, half: f64) -> Vec<Vec<f64>> {
    let w = vec![-centre / half, 1.0 / half];
    let mut out: Vec<Vec<f64>> = vec![vec![1.0]];
    if deg >= 1 {
        out.push(w.clone());
    }
    for j in 1..deg {
        let mut next = vec![0.0; j + 2];
        for (a, ca) in out[j].iter().enumerate() {
            for (b, cb) in w.iter().enumerate() {
                next[a + b] += 2.0 * ca * cb;
            }
        }
        for (a, ca) in out[j - 1].iter().enumerate() {
            next[a] -= ca;
        }
        out.push(next);
    }
    out
}

fn polynomial_roots(c: &[f64]) -> Vec<Complex64> {
    let mut c = c.to_vec();
    let scale = c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    while c.len() > 1 && c.last().map_or(false, |v| v.abs() <= 1e-13 * scale) {
        c.pop();
    }
    let deg = c.len() - 1;
    if deg == 0 {
        return vec![];
    }
    let lead = c[deg];
    let mut comp = DMatrix::<f64>::zeros(deg, deg);
    for i in 1..deg {
        comp[(i, i - 1)] = 1.0;
    }
    for i in 0..deg {
        comp[(i, deg - 1)] = -c[i] / lead;
    }
    comp.complex_eigenvalues().iter().cloned().collect()
}

fn fit_rational(z: &[f64], g: &[f64], m: usize, k: usize) -> Option<RationalFit> {
    let centre = 0.5 * (z[0] + z[z.len() - 1]);
    let half = 0.5 * (z[z.len() - 1] - z[0]);
    let cols = m + k + 2;
    if cols > z.len() {
        return None;
    }
    let mut a = DMatrix::<f64>::zeros(z.len(), cols);
    for (i, (zi, gi)) in z.iter().zip(g).enumerate() {
        let w = (zi - centre) / half;
        let t: Vec<f64> = cheb_values(w, m.max(k));
        let wt = 1.0 / (1.0 + gi.abs());
        for j in 0..=m {
            a[(i, j)] = wt * t[j];
        }
        for j in 0..=k {
            a[(i, m + 1 + j)] = -wt * gi * t[j];
        }
    }
    let svd = a.svd(false, true);
    let vt = svd.v_t?;
    let (imin, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.total_cmp(y.1))?;
    let v: DVector<f64> = vt.row(imin).transpose();
    let basis = chebyshev_in_z(m.max(k), centre, half);
    let to_monomial = |coef: &[f64]| {
        let mut out = vec![0.0; coef.len()];
        for (j, c) in coef.iter().enumerate() {
            for (p, b) in basis[j].iter().enumerate() {
                out[p] += c * b;
            }
        }
        out
    };
    let num = to_monomial(&v.as_slice()[..=m]);
    let den = to_monomial(&v.as_slice()[m + 1..]);
    let mut fit = RationalFit {
        num,
        den,
        residual: 0.0,
        poles: vec![],
    };
    let gmax = g.iter().fold(0.0f64, |a, b| a.max(b.abs())).max(1e-300);
    let mut res: f64 = 0.0;
    for (zi, gi) in z.iter().zip(g) {
        let v = fit.eval(Complex64::new(*zi, 0.0));
        if !v.re.is_finite() {
            return None;
        }
        res = res.max((v.re - gi).abs() / gmax);
    }
    fit.residual = res;
    // discard pole/zero pairs that cancel
    let zeros = polynomial_roots(&fit.num);
    let mut used = vec![false; zeros.len()];
    for p in polynomial_roots(&fit.den) {
        let partner = zeros
            .iter()
            .enumerate()
            .filter(|(i, _)| !used[*i])
            .map(|(i, r)| (i, (r - p).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        match partner {
            Some((i, d)) if d < 1e-5 * (1.0 + p.norm()) => used[i] = true,
            _ => fit.poles.push(p),
        }
    }
    // a pole inside the sampling window means the fit is not trustworthy
    if fit
        .poles
        .iter()
        .any(|p| p.im.abs() < 1e-3 && p.re > z[0] - 1e-3 && p.re < z[z.len() - 1] + 1e-3)
    {
        return None;
    }
    Some(fit)
}

fn cheb_values(w: f64, deg: usize) -> Vec<f64> {
    let mut t = vec![1.0, w];
    for j in 1..deg {
        let next = 2.0 * w * t[j] - t[j - 1];
        t.push(next);
    }
    t.truncate(deg + 1);
    t
}

fn best_fit(z: &[f64], g: &[f64], cfg: &RenormConfig) -> Result<RationalFit> {
    let mut best: Option<RationalFit> = None;
    for total in 0..=2 * cfg.max_degree {
        for k in 0..=total.min(cfg.max_degree) {
            let m = total - k;
            if m > cfg.max_degree {
                continue;
            }
            if let Some(fit) = fit_rational(z, g, m, k) {
                if fit.residual < 1e-13 {
                    return Ok(fit);
                }
                if best.as_ref().map_or(true, |b| fit.residual < b.residual) {
                    best = Some(fit);
                }
            }
        }
    }
    let best = best.ok_or(Error::FitResidual {
        residual: f64::INFINITY,
        tolerance: cfg.tolerance,
    })?;
    if best.residual > 0.1 * cfg.tolerance {
        return Err(Error::FitResidual {
            residual: best.residual,
            tolerance: cfg.tolerance,
        });
    }
    Ok(best)
}

fn laurent_from_samples(z: Vec<f64>, g: Vec<f64>, cfg: &RenormConfig) -> Result<LaurentData> {
    let fit = best_fit(&z, &g, cfg)?;
    let scale = cfg.z_max - cfg.z_min;
    let at_zero = fit.poles.iter().filter(|p| p.norm() < 1e-4 * scale).count();
    if at_zero > cfg.max_pole_order {
        return Err(Error::Precondition(format!(
            "pole of order {at_zero} at z = 0 exceeds the configured maximum {}",
            cfg.max_pole_order
        )));
    }
    let nearest_other = fit
        .poles
        .iter()
        .map(|p| p.norm())
        .filter(|r| *r >= 1e-4 * scale)
        .fold(1.0f64, f64::min);
    let radius = 0.5 * nearest_other;
    // Cauchy integral on |z| = radius for z^p G(z)
    let m = 128;
    let p = at_zero;
    let mut coeffs = vec![Complex64::new(0.0, 0.0); p + 1];
    for j in 0..m {
        let w = Complex64::from_polar(1.0, 2.0 * PI * j as f64 / m as f64);
        let zz = w * radius;
        let h = zz.powu(p as u32) * fit.eval(zz);
        for (k, c) in coeffs.iter_mut().enumerate() {
            *c += h * w.powi(-(k as i32)) / (m as f64 * radius.powi(k as i32));
        }
    }
    Ok(LaurentData {
        pole_order: p,
        poles: coeffs[..p].iter().map(|c| c.re).collect(),
        finite_part: coeffs[p].re,
        residual: fit.residual,
        degrees: (fit.num.len() - 1, fit.den.len() - 1),
        fit_poles: fit.poles,
        z_samples: z,
        g_samples: g,
    })
}

fn sample_grid(cfg: &RenormConfig) -> Vec<f64> {
    let n = cfg.samples;
    (0..n)
        .map(|i| cfg.z_min + (cfg.z_max - cfg.z_min) * i as f64 / (n - 1) as f64)
        .collect()
}

/// `G(z) = ∫_0^c x^z f(x) dx/x`, evaluated in `s = log x`.
pub fn b_mellin(f: &(dyn Fn(f64) -> f64 + Sync), collar: f64, z: f64) -> f64 {
    let top = collar.ln();
    let bottom = top - 40.0 / z;
    let near = (top - 8.0).max(bottom);
    let g = |s: f64| (z * s).exp() * f(s.exp());
    let mut total = Rule::composite(near, top, 64, 16).integrate(g);
    if near > bottom {
        total += Rule::composite(bottom, near, 32, 16).integrate(g);
    }
    total
}

/// Finite part at `z = 0` of `∫_0^c x^z f(x) dx/x`.
pub fn regularized_integral_1d(
    f: &(dyn Fn(f64) -> f64 + Sync),
    collar: f64,
    cfg: &RenormConfig,
) -> Result<LaurentData> {
    if cfg.samples < 2 * cfg.max_degree + 2 {
        return Err(Error::InsufficientSamples {
            needed: 2 * cfg.max_degree + 2,
            got: cfg.samples,
        });
    }
    if !(collar > 0.0) {
        return Err(Error::InvalidParameter(format!("collar must be positive, got {collar}")));
    }
    // G(z) = c^z H(z) with H the same integral of f(c·u) over (0, 1]; fitting H keeps
    // the entire factor c^z out of the rational fit
    let z = sample_grid(cfg);
    let h: Vec<f64> = z.par_iter().map(|z| b_mellin(&|u| f(collar * u), 1.0, *z)).collect();
    let mut data = laurent_from_samples(z, h, cfg)?;
    let lc = collar.ln();
    if lc != 0.0 {
        let p = data.pole_order;
        // H's coefficients h_{−p}, …, h_{−1}, h_0
        let mut hc = data.poles.clone();
        hc.push(data.finite_part);
        let mut fact = vec![1.0; p + 1];
        for k in 1..=p {
            fact[k] = fact[k - 1] * lc / k as f64;
        }
        let coeff = |j: usize| (0..=j).map(|k| fact[k] * hc[j - k]).sum::<f64>();
        let all: Vec<f64> = (0..=p).map(coeff).collect();
        data.finite_part = all[p];
        data.poles = all[..p].to_vec();
        for (z, g) in data.z_samples.iter().zip(data.g_samples.iter_mut()) {
            *g *= collar.powf(*z);
        }
    }
    Ok(data)
}

/// Regularized integral of `f` against `ρ^z dμ_g`. Closed models return the
/// ordinary integral with pole order 0.
pub fn regularized_integral(
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    geom: &ModelGeometry,
    cfg: &RenormConfig,
) -> Result<LaurentData> {
    match geom.kind() {
        GeometryKind::BCylinder {
            boundary_length,
            collar,
        } => {
            let n_theta = geom.resolution()[1];
            let h = boundary_length / n_theta as f64;
            let radial = |x: f64| (0..n_theta).map(|j| h * f(&[x, j as f64 * h])).sum::<f64>();
            regularized_integral_1d(&radial, *collar, cfg)
        }
        _ => {
            let v = geom.integrate(&|x| Ok(Complex64::new(f(x) * geom.density(x), 0.0)))?;
            Ok(LaurentData {
                pole_order: 0,
                poles: vec![],
                finite_part: v.re,
                z_samples: vec![],
                g_samples: vec![],
                residual: 0.0,
                degrees: (0, 0),
                fit_poles: vec![],
            })
        }
    }
}

/// Poles of `G` with real part in `window`, from the rational fit.
pub fn pole_structure(
    f: &(dyn Fn(f64) -> f64 + Sync),
    collar: f64,
    window: (f64, f64),
    cfg: &RenormConfig,
) -> Result<Vec<Pole>> {
    // poles of the rescaled fit: the factor c^z is entire and zero-free
    let data = regularized_integral_1d(f, collar, cfg)?;
    let mut found: Vec<Complex64> = data
        .fit_poles
        .iter()
        .filter(|p| p.re > window.0 && p.re < window.1)
        .cloned()
        .collect();
    if let Some(p) = found.iter().find(|p| p.im.abs() > 1e-3 * (1.0 + p.re.abs())) {
        return Err(Error::Precondition(format!("non-real pole {p} in window")));
    }
    found.sort_by(|a, b| a.re.total_cmp(&b.re));
    let mut poles: Vec<Pole> = Vec::new();
    for p in found {
        match poles.last_mut() {
            Some(last) if (last.location - p.re).abs() < 1e-3 => last.order += 1,
            _ => poles.push(Pole {
                location: p.re,
                order: 1,
            }),
        }
    }
    Ok(poles)
}

/// `⨍ f dμ` for a complex-valued integrand: ordinary integral on closed models,
/// finite part on the b-cylinder.
pub fn integrate_over(
    geom: &ModelGeometry,
    f: &(dyn Fn(&[f64]) -> Result<Complex64> + Sync),
) -> Result<Complex64> {
    if !geom.has_boundary() {
        return geom.integrate(&|x| Ok(f(x)? * geom.density(x)));
    }
    // evaluate once to surface errors before the fit swallows them
    let probe = geom.sample_points();
    for x in &probe {
        f(x)?;
    }
    let cfg = RenormConfig::default();
    let re = |x: &[f64]| f(x).map(|v| v.re).unwrap_or(f64::NAN);
    let im = |x: &[f64]| f(x).map(|v| v.im).unwrap_or(f64::NAN);
    let a = regularized_integral(&re, geom, &cfg)?.finite_part;
    let b = if probe.iter().any(|x| f(x).map_or(false, |v| v.im != 0.0)) {
        regularized_integral(&im, geom, &cfg)?.finite_part
    } else {
        0.0
    };
    Ok(Complex64::new(a, b))
}

/// `⨍ tr_s k_t(x, x) dμ` for each slice of a homogeneous kernel grid, with
/// `grading = [γ₊, γ₋]` weighting the two fibre traces.
pub fn renormalized_supertrace(
    kernel: &HeatKernelGrid,
    grading: [f64; 2],
    geom: &ModelGeometry,
) -> Result<Vec<Complex64>> {
    kernel
        .slices
        .iter()
        .map(|slice| match slice {
            KernelSlice::Homogeneous { fibre, .. } => {
                let v = grading[0] * fibre[0] + grading[1] * fibre[1];
                integrate_over(geom, &|_| Ok(Complex64::new(v, 0.0)))
            }
            KernelSlice::Fourier { .. } => {
                if geom.dim() != 1 {
                    return Err(Error::DimensionMismatch {
                        expected: 1,
                        found: geom.dim(),
                    });
                }
                integrate_over(geom, &|x| {
                    let d = slice.diagonal(x[0])?;
                    Ok(Complex64::new(grading[0] * d[0] + grading[1] * d[1], 0.0))
                })
            }
        })
        .collect()
}

/// `tr(Γ M)` for a diagonal grading.
pub fn matrix_supertrace(m: &CMatrix, grading: &[f64]) -> Complex64 {
    grading.iter().enumerate().map(|(i, g)| m[(i, i)] * g).sum()
}

/// `[A, B]_s = AB − (−1)^{|A||B|} BA` for operators of parity `pa`, `pb`.
pub fn supercommutator(a: &CMatrix, pa: usize, b: &CMatrix, pb: usize) -> CMatrix {
    let sign = if pa * pb % 2 == 1 { -1.0 } else { 1.0 };
    a * b - b * a * Complex64::new(sign, 0.0)
}

/// `θ_L(t) = L⁻¹ Σ_n e^{−t(2πn/L)²}`: diagonal of the circle heat kernel.
pub fn circle_theta(length: f64, t: f64) -> f64 {
    let w = 2.0 * PI / length;
    let mut sum = 1.0;
    for n in 1.. {
        let term = (-t * (w * n as f64).powi(2)).exp();
        sum += 2.0 * term;
        if term < 1e-18 * sum {
            break;
        }
    }
    sum / length
}

/// b-trace of the scalar heat semigroup on the model b-cylinder
/// `[0, c]_x × S¹` with metric `dx²/x² + dθ²`: the diagonal is the product
/// `(4πt)^{−1/2} θ_L(t)` and is integrated by the finite part.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BTraceReport {
    pub t: f64,
    pub diagonal: f64,
    pub laurent: LaurentData,
    pub value: f64,
    /// Finite part of the b-volume alone.
    pub b_volume: f64,
    /// Degeneracy index of the weighted directions.
    pub degeneracy: usize,
}

pub fn b_heat_trace(geom: &ModelGeometry, t: f64) -> Result<BTraceReport> {
    if !(t > 0.0) {
        return Err(Error::NonPositiveTime(t));
    }
    let GeometryKind::BCylinder { boundary_length, .. } = geom.kind() else {
        return Err(Error::Unsupported(format!("b-trace on {}", geom.label())));
    };
    let diagonal = (4.0 * PI * t).powf(-0.5) * circle_theta(*boundary_length, t) * boundary_length;
    let cfg = RenormConfig::default();
    // θ-average over the circle is already in `diagonal`; integrate per unit length
    let per_length = diagonal / boundary_length;
    let laurent = regularized_integral(&|_| per_length, geom, &cfg)?;
    let b_volume = regularized_integral(&|_| 1.0, geom, &cfg)?.finite_part;
    Ok(BTraceReport {
        t,
        diagonal: per_length,
        value: laurent.finite_part,
        laurent,
        b_volume,
        degeneracy: 1,
    })
}

/// Quadrature of `½ Tr_s [D, D e^{−tD²}]_s` over `(0, T]`, with a bound on
/// the remaining tail.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EtaReport {
    pub value: f64,
    pub t_max: f64,
    pub max_integrand: f64,
    pub tail_bound: f64,
    pub gap: f64,
    pub nodes: usize,
}

/// Diagonals of `V*ΓDV` and `V*DΓV` per block, so that
/// `½ Tr_s [D, D e^{−tD²}]_s = ½ Σ_k λ_k e^{−tλ_k²} (a_k + b_k)` with the
/// operator matrix itself entering (not only its eigenvalues).
#[derive(Clone, Debug)]
pub struct EtaIntegrand {
    terms: Vec<(f64, f64)>,
}

impl EtaIntegrand {
    pub fn new(spectral: &SpectralData) -> Self {
        let terms = spectral
            .blocks
            .par_iter()
            .flat_map_iter(|b| {
                let g = DMatrix::from_diagonal(&DVector::from_iterator(
                    b.grading.len(),
                    b.grading.iter().map(|x| Complex64::new(*x, 0.0)),
                ));
                let gd = &g * &b.operator;
                let dg = &b.operator * &g;
                let a = b.vectors.adjoint() * (gd + dg) * &b.vectors;
                let m = b.multiplicity as f64;
                b.values
                    .iter()
                    .enumerate()
                    .map(|(k, l)| (*l, m * a[(k, k)].re))
                    .collect::<Vec<_>>()
            })
            .collect();
        Self { terms }
    }

    pub fn eval(&self, t: f64) -> f64 {
        0.5 * self.terms.iter().map(|(l, w)| l * (-t * l * l).exp() * w).sum::<f64>()
    }
}

/// `½ Tr_s [D, D e^{−tD²}]_s` at one time.
pub fn eta_integrand(spectral: &SpectralData, t: f64) -> f64 {
    EtaIntegrand::new(spectral).eval(t)
}

pub fn eta_integral(spectral: &SpectralData, t_max: f64, panels: usize) -> Result<EtaReport> {
    if !spectral.dirac {
        return Err(Error::Precondition("eta integral needs Dirac spectral data".into()));
    }
    if !(t_max > 0.0) || panels == 0 {
        return Err(Error::InvalidParameter(format!("t_max {t_max}, panels {panels}")));
    }
    let rule = Rule::composite(0.0, t_max, panels, 8);
    let integrand = EtaIntegrand::new(spectral);
    let vals: Vec<f64> = rule.nodes.iter().map(|t| integrand.eval(*t)).collect();
    let value = vals.iter().zip(&rule.weights).map(|(v, w)| v * w).sum();
    let max_integrand = vals.iter().map(|v| v.abs()).fold(0.0, f64::max);
    // ∫_T^∞ λ² e^{−tλ²} dt = e^{−Tλ²}, weighted by the chirality of the mode
    let tail_bound = spectral
        .blocks
        .iter()
        .flat_map(|b| {
            let threshold = spectral.kernel_threshold;
            b.values
                .iter()
                .zip(&b.chirality)
                .filter(move |(l, _)| l.abs() >= threshold)
                .map(move |(l, ch)| b.multiplicity as f64 * ch.abs() * (-t_max * l * l).exp())
        })
        .sum();
    Ok(EtaReport {
        value,
        t_max,
        max_integrand,
        tail_bound,
        gap: spectral.gap().1,
        nodes: rule.nodes.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::GeometrySpec;

    fn cfg() -> RenormConfig {
        RenormConfig::default()
    }

    #[test]
    fn constant_has_simple_pole_and_zero_finite_part() {
        let d = regularized_integral_1d(&|_| 1.0, 1.0, &cfg()).unwrap();
        assert_eq!(d.pole_order, 1);
        assert!((d.residue() - 1.0).abs() < 1e-8);
        assert!(d.finite_part.abs() < 1e-8);
    }

    #[test]
    fn monomial_finite_parts() {
        for m in 1..=3 {
            let d = regularized_integral_1d(&|x| x.powi(m), 1.0, &cfg()).unwrap();
            assert_eq!(d.pole_order, 0);
            assert!((d.finite_part - 1.0 / m as f64).abs() < 1e-8, "m = {m}");
        }
    }

    #[test]
    fn collar_length_enters_as_log() {
        let d = regularized_integral_1d(&|_| 1.0, 2.0, &cfg()).unwrap();
        assert!((d.finite_part - 2f64.ln()).abs() < 1e-8);
    }

    #[test]
    fn support_away_from_boundary_gives_ordinary_integral() {
        // bump on [0.4, 0.8]
        let bump = |x: f64| {
            if x <= 0.4 || x >= 0.8 {
                0.0
            } else {
                let u = (x - 0.6) / 0.2;
                (-1.0 / (1.0 - u * u)).exp()
            }
        };
        let d = regularized_integral_1d(&bump, 1.0, &cfg()).unwrap();
        assert_eq!(d.pole_order, 0);
        let direct = Rule::composite(0.4, 0.8, 64, 16).integrate(|x| bump(x) / x);
        assert!((d.finite_part - direct).abs() < 1e-8);
    }

    #[test]
    fn pole_lattice() {
        let poles = pole_structure(&|_| 1.0, 1.0, (-0.5, 0.5), &cfg()).unwrap();
        assert_eq!(poles.len(), 1);
        assert!(poles[0].location.abs() < 1e-6 && poles[0].order == 1);
        for m in 1..=2 {
            let poles = pole_structure(&|x| x.powi(m), 1.0, (-3.5, 0.5), &cfg()).unwrap();
            assert_eq!(poles.len(), 1);
            assert!((poles[0].location + m as f64).abs() < 1e-6);
        }
        let poles = pole_structure(&|x| x * x * (-x).exp(), 1.0, (-1.9, 10.0), &cfg()).unwrap();
        assert!(poles.is_empty(), "{poles:?}");
    }

    #[test]
    fn finite_part_is_linear() {
        let a = regularized_integral_1d(&|x| 2.0 + 3.0 * x, 1.0, &cfg()).unwrap();
        // 2/z + 3/(z + 1)
        assert!((a.finite_part - 3.0).abs() < 1e-8);
        assert!((a.residue() - 2.0).abs() < 1e-8);
    }

    #[test]
    fn truncated_integral_slope_matches_residue() {
        let d = regularized_integral_1d(&|_| 1.0, 1.0, &cfg()).unwrap();
        let trunc = |eps: f64| Rule::composite(eps.ln(), 0.0, 8, 8).integrate(|_| 1.0);
        let slope = (trunc(1e-6) - trunc(1e-3)) / (1e3f64).ln();
        assert!((slope - d.residue()).abs() < 1e-8);
    }

    #[test]
    fn closed_models_use_ordinary_integral() {
        let g = GeometrySpec::round_sphere(1.0, 16).build().unwrap();
        let d = regularized_integral(&|_| 1.0, &g, &cfg()).unwrap();
        assert_eq!(d.pole_order, 0);
        assert!((d.finite_part - 4.0 * PI).abs() < 1e-10);
    }

    #[test]
    fn b_cylinder_renormalized_volume() {
        let g = GeometrySpec::b_cylinder(2.0 * PI, 1.0, 8).build().unwrap();
        let d = regularized_integral(&|_| 1.0, &g, &cfg()).unwrap();
        assert!(d.finite_part.abs() < 1e-8);
        assert!((d.residue() - 2.0 * PI).abs() < 1e-8);
    }

    #[test]
    fn b_heat_trace_product_formula() {
        let g = GeometrySpec::b_cylinder(2.0 * PI, 1.0, 8).build().unwrap();
        for t in [0.1, 0.5, 1.0] {
            let r = b_heat_trace(&g, t).unwrap();
            assert!(r.value.abs() < 1e-8, "{t}: {}", r.value);
            // residue is the un-renormalized boundary-length weight
            assert!((r.laurent.residue() - 2.0 * PI * r.diagonal).abs() < 1e-8 * r.diagonal.max(1.0));
        }
        let g2 = GeometrySpec::b_cylinder(2.0 * PI, 2.0, 8).build().unwrap();
        let r = b_heat_trace(&g2, 0.5).unwrap();
        assert!((r.value - 2.0 * PI * r.diagonal * 2f64.ln()).abs() < 1e-7);
        let torus = GeometrySpec::flat_torus(vec![1.0, 1.0], 8).build().unwrap();
        assert!(b_heat_trace(&torus, 0.5).is_err());
    }

    #[test]
    fn circle_theta_matches_poisson_dual() {
        // θ_L(t) = (4πt)^{-1/2} Σ_k e^{-(kL)²/4t}
        let (l, t) = (2.0 * PI, 0.3);
        let dual: f64 = (-20i32..=20)
            .map(|k| (-(k as f64 * l).powi(2) / (4.0 * t)).exp())
            .sum::<f64>()
            / (4.0 * PI * t).sqrt();
        assert!((circle_theta(l, t) - dual).abs() < 1e-14);
    }

    #[test]
    fn supertrace_kills_supercommutators() {
        let grading = [1.0, 1.0, -1.0, -1.0];
        let z = Complex64::new(0.0, 0.0);
        let m = |f: &dyn Fn(usize, usize) -> f64, odd: bool| {
            CMatrix::from_fn(4, 4, |i, j| {
                let same = (i < 2) == (j < 2);
                if same != odd {
                    Complex64::new(f(i, j), 0.3 * f(j, i))
                } else {
                    z
                }
            })
        };
        let a = m(&|i, j| (i * 3 + j) as f64 - 2.5, true);
        let b = m(&|i, j| (i as f64 - 1.0) * (j as f64 + 0.5), true);
        let c = m(&|i, j| (i + 2 * j) as f64 * 0.1, false);
        for (x, px, y, py) in [(&a, 1, &b, 1), (&a, 1, &c, 0), (&c, 0, &c, 0)] {
            assert!(matrix_supertrace(&supercommutator(x, px, y, py), &grading).norm() < 1e-12);
        }
    }
}
