//! Heat kernels of Laplace-type operators `P = Δ + V`.
//!
//! Two independent routes:
//! - the parametrix `G_N(t, x0, y) = χ q Σ_{i≤N} t^i Φ_i`, with the transport
//!   equations solved by quadrature along radial geodesics of a normal chart;
//! - exact kernels `Σ e^{−tμ} v v*` from [`SpectralData`].
//!
//! On the 2-dimensional models the parametrix only sees radial functions: the
//! expansion centre is arbitrary (the models are homogeneous) and twisted
//! operators are written in the radial (Fock–Schwinger) gauge, where the
//! magnetic potential contributes `|a|²` and parallel transport along rays is
//! trivial.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{GeometryKind, ModelGeometry, NormalChart};
use crate::linalg::{self, CMatrix, PolyFit};
use crate::operators::{DiracAssembly, SpectralBasis, SpectralData, SpectrumOptions};
use crate::quadrature::{gauss_legendre, Chebyshev};

pub type Profile = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Fibre weights for `[positive, negative]` chirality.
pub const CHIRAL: [f64; 2] = [1.0, -1.0];
pub const UNGRADED: [f64; 2] = [1.0, 1.0];

pub const MAX_PARAMETRIX_ORDER: usize = 4;
const CHART_INTERVALS: usize = 41;
const RECURSION_NODES: usize = 32;

fn check_time(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveTime(t))
    }
}

/// `(4πt)^{−n/2} e^{−d(x,y)²/4t}`.
pub fn gaussian_q(geom: &ModelGeometry, x: &[f64], y: &[f64], t: f64) -> Result<f64> {
    check_time(t)?;
    let d = geom.distance(x, y);
    if d >= geom.injectivity_radius() {
        return Err(Error::OutsideChart);
    }
    let n = geom.dim() as f64;
    Ok((4.0 * PI * t).powf(-0.5 * n) * (-d * d / (4.0 * t)).exp())
}

#[derive(Clone)]
pub enum Potential {
    /// Function of the base coordinate (circle only).
    Pointwise(Profile),
    /// Function of the geodesic distance to the expansion centre.
    Radial(Profile),
}

/// `P = Δ + V` acting diagonally on a few fibre components.
#[derive(Clone)]
pub struct LaplaceModel {
    geom: ModelGeometry,
    components: Vec<Potential>,
    grading: Vec<f64>,
}

impl fmt::Debug for LaplaceModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LaplaceModel")
            .field("geometry", &self.geom.label())
            .field("components", &self.components.len())
            .field("grading", &self.grading)
            .finish()
    }
}

impl LaplaceModel {
    pub fn scalar(geom: &ModelGeometry) -> Result<Self> {
        Self::with_potential(geom, Potential::Radial(Arc::new(|_| 0.0)))
    }

    pub fn with_potential(geom: &ModelGeometry, potential: Potential) -> Result<Self> {
        if geom.has_boundary() {
            return Err(Error::Unsupported("parametrix on the b-cylinder".into()));
        }
        if matches!(potential, Potential::Pointwise(_)) && geom.dim() != 1 {
            return Err(Error::Unsupported("pointwise potentials need a 1-dimensional model".into()));
        }
        Ok(Self {
            geom: geom.clone(),
            components: vec![potential],
            grading: vec![1.0],
        })
    }

    /// `D²` of a twisted Dirac operator, one component per chirality, in the
    /// radial gauge around the expansion centre.
    pub fn from_assembly(assembly: &DiracAssembly) -> Result<Self> {
        let geom = assembly.geometry().clone();
        let d = assembly.twist_degree() as f64;
        let components: Vec<Potential> = match geom.kind() {
            GeometryKind::FlatTorus { .. } if geom.dim() == 2 => {
                let b = 2.0 * PI * d / assembly.area();
                [-b, b]
                    .into_iter()
                    .map(|e| Potential::Radial(Arc::new(move |p: f64| 0.25 * b * b * p * p + e)))
                    .collect()
            }
            GeometryKind::RoundSphere { radius } => {
                // each chirality is a line bundle with constant field b_±
                let r = *radius;
                let q = 0.5 * d;
                [(q - 0.5, 0.5 - q), (q + 0.5, 0.5 + q)]
                    .into_iter()
                    .map(|(b, e)| {
                        Potential::Radial(Arc::new(move |p: f64| {
                            (b * b * (0.5 * p / r).tan().powi(2) + e) / (r * r)
                        }))
                    })
                    .collect()
            }
            _ => return Err(Error::Unsupported(format!("parametrix for {}", geom.label()))),
        };
        Ok(Self {
            geom,
            components,
            grading: vec![1.0, -1.0],
        })
    }

    pub fn geometry(&self) -> &ModelGeometry {
        &self.geom
    }

    pub fn components(&self) -> usize {
        self.components.len()
    }

    pub fn grading(&self) -> &[f64] {
        &self.grading
    }

    fn potential(&self, c: usize, center: &[f64], p: f64) -> f64 {
        match &self.components[c] {
            Potential::Pointwise(f) => f(center[0] + p),
            Potential::Radial(f) => f(p.abs()),
        }
    }
}

/// Parametrix coefficients `Φ_0..Φ_N` on a normal chart, plus an optional
/// small-time fit of the trace.
#[derive(Clone, Debug)]
pub struct HeatExpansion {
    pub order: usize,
    pub center: Vec<f64>,
    pub radius: f64,
    pub dim: usize,
    model: LaplaceModel,
    chart: NormalChart,
    cheb: Chebyshev,
    /// `[i][component][node]` values of `Φ_i`, `Φ_i'` and `Φ_i''`.
    phi: Vec<Vec<[Vec<f64>; 3]>>,
    pub trace_fit: Option<TraceFit>,
}

/// Parametrix of `D²` for a twisted Dirac operator, centred at `x0`.
pub fn parametrix_coefficients(assembly: &DiracAssembly, x0: &[f64], order: usize) -> Result<HeatExpansion> {
    parametrix_expansion(&LaplaceModel::from_assembly(assembly)?, x0, order, None)
}

/// Solves `Φ_0 = J^{−1/2}`, `Φ_i(p) = −J^{−1/2}(p) ∫₀¹ s^{i−1} (J^{1/2} P Φ_{i−1})(sp) ds`
/// on the chart of radius `radius` (default: half the injectivity radius).
pub fn parametrix_expansion(
    model: &LaplaceModel,
    x0: &[f64],
    order: usize,
    radius: Option<f64>,
) -> Result<HeatExpansion> {
    if order > MAX_PARAMETRIX_ORDER {
        return Err(Error::InvalidParameter(format!(
            "parametrix order {order} above {MAX_PARAMETRIX_ORDER}"
        )));
    }
    let geom = model.geometry();
    let radius = radius.unwrap_or(0.5 * geom.injectivity_radius());
    let chart = geom.normal_coordinates(x0, radius)?;
    let cheb = Chebyshev::new(-radius, radius, CHART_INTERVALS);
    let nodes = cheb.nodes().to_vec();
    let (gx, gw) = gauss_legendre(RECURSION_NODES);
    let s: Vec<f64> = gx.iter().map(|x| 0.5 * (x + 1.0)).collect();
    let w: Vec<f64> = gw.iter().map(|w| 0.5 * w).collect();
    let half_j = |p: f64| chart.jacobian(p).sqrt();
    let mut expansion = HeatExpansion {
        order,
        center: x0.to_vec(),
        radius,
        dim: geom.dim(),
        model: model.clone(),
        chart: chart.clone(),
        cheb: cheb.clone(),
        phi: Vec::new(),
        trace_fit: None,
    };
    let with_derivatives = |v: Vec<f64>| {
        let d1 = cheb.differentiate(&v);
        let d2 = cheb.differentiate(&d1);
        [v, d1, d2]
    };
    let phi0: Vec<[Vec<f64>; 3]> = (0..model.components())
        .map(|_| with_derivatives(nodes.iter().map(|p| 1.0 / half_j(*p)).collect()))
        .collect();
    expansion.phi.push(phi0);
    for i in 1..=order {
        let next: Vec<[Vec<f64>; 3]> = (0..model.components())
            .map(|c| {
                let prev = &expansion.phi[i - 1][c];
                let lp: Vec<f64> = (0..nodes.len()).map(|j| expansion.apply_at_node(c, prev, j)).collect();
                let vals = nodes
                    .iter()
                    .map(|p| {
                        let acc: f64 = s
                            .iter()
                            .zip(&w)
                            .map(|(sk, wk)| wk * sk.powi(i as i32 - 1) * half_j(sk * p) * cheb.eval(&lp, sk * p))
                            .sum();
                        -acc / half_j(*p)
                    })
                    .collect();
                with_derivatives(vals)
            })
            .collect();
        expansion.phi.push(next);
    }
    Ok(expansion)
}

impl HeatExpansion {
    pub fn nodes(&self) -> &[f64] {
        self.cheb.nodes()
    }

    pub fn components(&self) -> usize {
        self.model.components()
    }

    pub fn model(&self) -> &LaplaceModel {
        &self.model
    }

    /// `Φ_i` of one component at the chart nodes.
    pub fn values(&self, i: usize, component: usize) -> &[f64] {
        &self.phi[i][component][0]
    }

    /// `Φ_i(p)` for each component (signed chart coordinate in 1D, distance in 2D).
    pub fn phi(&self, i: usize, p: f64) -> Vec<f64> {
        (0..self.components()).map(|c| self.cheb.eval(&self.phi[i][c][0], p)).collect()
    }

    /// `Φ_i` at the centre.
    pub fn phi_at_center(&self, i: usize) -> Vec<f64> {
        // the chart grid avoids p = 0 and the functions are smooth there
        self.phi(i, 0.0)
    }

    pub fn with_trace_fit(mut self, fit: TraceFit) -> Self {
        self.trace_fit = Some(fit);
        self
    }

    /// `g(p)` in `P f = −f'' − g f' + V f`.
    fn drift(&self, p: f64) -> f64 {
        if self.dim == 1 {
            0.0
        } else {
            1.0 / p + self.chart.jacobian_derivative(p) / self.chart.jacobian(p)
        }
    }

    fn apply_at_node(&self, c: usize, f: &[Vec<f64>; 3], j: usize) -> f64 {
        let p = self.nodes()[j];
        -f[2][j] - self.drift(p) * f[1][j] + self.model.potential(c, &self.center, p) * f[0][j]
    }

    /// `(S, S', S'', ∂_t S)` for `S = Σ t^i Φ_i` at a point.
    fn series(&self, c: usize, t: f64, p: f64, at_node: Option<usize>) -> [f64; 4] {
        let mut out = [0.0; 4];
        for (i, f) in self.phi.iter().enumerate() {
            let ti = t.powi(i as i32);
            let dti = if i == 0 { 0.0 } else { i as f64 * t.powi(i as i32 - 1) };
            let v: [f64; 3] = match at_node {
                Some(j) => [f[c][0][j], f[c][1][j], f[c][2][j]],
                None => [
                    self.cheb.eval(&f[c][0], p),
                    self.cheb.eval(&f[c][1], p),
                    self.cheb.eval(&f[c][2], p),
                ],
            };
            out[0] += ti * v[0];
            out[1] += ti * v[1];
            out[2] += ti * v[2];
            out[3] += dti * v[0];
        }
        out
    }
}

/// Smooth cutoff equal to 1 on `|p| ≤ c/2` and 0 on `|p| ≥ c`.
fn cutoff(p: f64, c: f64) -> f64 {
    let a = 0.5 * c;
    let r = p.abs();
    if r <= a {
        return 1.0;
    }
    if r >= c {
        return 0.0;
    }
    let s = (r - a) / (c - a);
    let f = |x: f64| if x > 0.0 { (-1.0 / x).exp() } else { 0.0 };
    f(1.0 - s) / (f(1.0 - s) + f(s))
}

fn cutoff_derivatives(p: f64, c: f64) -> (f64, f64) {
    let h = 1e-3 * c;
    let v = |k: f64| cutoff(p + k * h, c);
    let d1 = (v(-2.0) - v(2.0) + 8.0 * (v(1.0) - v(-1.0))) / (12.0 * h);
    let d2 = (-v(-2.0) - v(2.0) + 16.0 * (v(1.0) + v(-1.0)) - 30.0 * v(0.0)) / (12.0 * h * h);
    (d1, d2)
}

/// `G_N(t, x0, y) = χ(d) q(t, d) Σ t^i Φ_i(y)`.
#[derive(Clone, Debug)]
pub struct ParametrixKernel {
    expansion: HeatExpansion,
    cutoff: f64,
}

pub fn parametrix_kernel(expansion: &HeatExpansion, cutoff_radius: f64) -> Result<ParametrixKernel> {
    if !(cutoff_radius > 0.0 && cutoff_radius <= expansion.radius) {
        return Err(Error::InvalidParameter(format!(
            "cutoff radius {cutoff_radius} must lie in (0, {}]",
            expansion.radius
        )));
    }
    Ok(ParametrixKernel {
        expansion: expansion.clone(),
        cutoff: cutoff_radius,
    })
}

impl ParametrixKernel {
    pub fn expansion(&self) -> &HeatExpansion {
        &self.expansion
    }

    pub fn cutoff_radius(&self) -> f64 {
        self.cutoff
    }

    fn q(&self, t: f64, p: f64) -> f64 {
        (4.0 * PI * t).powf(-0.5 * self.expansion.dim as f64) * (-p * p / (4.0 * t)).exp()
    }

    /// Value per component at chart coordinate `p`.
    pub fn eval_chart(&self, t: f64, p: f64) -> Result<Vec<f64>> {
        check_time(t)?;
        if p.abs() > self.expansion.radius {
            return Err(Error::OutsideChart);
        }
        let chi = cutoff(p, self.cutoff);
        let q = self.q(t, p);
        Ok((0..self.expansion.components())
            .map(|c| chi * q * self.expansion.series(c, t, p, None)[0])
            .collect())
    }

    /// Value per component at a model point `y`.
    pub fn eval(&self, t: f64, y: &[f64]) -> Result<Vec<f64>> {
        let geom = self.expansion.model.geometry();
        let p = match geom.kind() {
            GeometryKind::FlatTorus { periods } if periods.len() == 1 => {
                let d = y[0] - self.expansion.center[0];
                d - periods[0] * (d / periods[0]).round()
            }
            _ => geom.distance(&self.expansion.center, y),
        };
        self.eval_chart(t, p)
    }

    /// `(∂_t + P) G_N` per component at chart coordinate `p`, cutoff included.
    pub fn remainder(&self, t: f64, p: f64) -> Result<Vec<f64>> {
        check_time(t)?;
        if p.abs() > self.expansion.radius {
            return Err(Error::OutsideChart);
        }
        Ok((0..self.expansion.components())
            .map(|c| self.remainder_component(c, t, p, None))
            .collect())
    }

    fn remainder_component(&self, c: usize, t: f64, p: f64, node: Option<usize>) -> f64 {
        let e = &self.expansion;
        let n = e.dim as f64;
        let [s, s1, s2, st] = e.series(c, t, p, node);
        let g = e.drift(p);
        let v = e.model.potential(c, &e.center, p);
        let q = self.q(t, p);
        // (∂_t + P)(q S) with the derivatives of q taken in closed form
        let inner = st - s2 - g * s1 + v * s + (p / t) * s1 + (g * p - (n - 1.0)) / (2.0 * t) * s;
        let h = q * s;
        let h1 = q * (s1 - p * s / (2.0 * t));
        let chi = cutoff(p, self.cutoff);
        let (chi1, chi2) = cutoff_derivatives(p, self.cutoff);
        chi * q * inner - chi2 * h - 2.0 * chi1 * h1 - g * chi1 * h
    }

    /// `sup |(∂_t + P) G_N|` over the chart nodes where the cutoff is 1.
    pub fn remainder_norm(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        let e = &self.expansion;
        let mut worst: f64 = 0.0;
        for (j, p) in e.nodes().iter().enumerate() {
            if p.abs() > 0.5 * self.cutoff {
                continue;
            }
            for c in 0..e.components() {
                worst = worst.max(self.remainder_component(c, t, *p, Some(j)).abs());
            }
        }
        Ok(worst)
    }

    /// Measured log-log slope of [`Self::remainder_norm`] over `times`.
    pub fn remainder_order(&self, times: &[f64]) -> Result<f64> {
        let r: Vec<f64> = times.iter().map(|t| self.remainder_norm(*t)).collect::<Result<_>>()?;
        linalg::loglog_slope(times, &r)
    }
}

// ---------------------------------------------------------------------------
// exact spectral data for scalar models

/// `−d²/dx² + ε cos(2πx/L)` on a circle of length `L`, Fourier modes `|n| ≤ modes`.
pub fn circle_spectrum(length: f64, modes: usize, eps: f64) -> Result<SpectralData> {
    if !(length > 0.0) {
        return Err(Error::InvalidParameter(format!("length must be positive, got {length}")));
    }
    let ns: Vec<i64> = (-(modes as i64)..=modes as i64).collect();
    let k = ns.len();
    let h = CMatrix::from_fn(k, k, |r, c| {
        if r == c {
            let w = 2.0 * PI * ns[r] as f64 / length;
            Complex64::new(w * w, 0.0)
        } else if r.abs_diff(c) == 1 {
            Complex64::new(0.5 * eps, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    SpectralData::from_blocks(
        vec![("circle".into(), 1, h, vec![1.0; k])],
        false,
        length,
        SpectralBasis::Fourier1d { length, modes: ns },
        SpectrumOptions::default(),
    )
}

/// Potential matching [`circle_spectrum`] for the parametrix.
pub fn circle_potential(length: f64, eps: f64) -> Potential {
    Potential::Pointwise(Arc::new(move |x: f64| eps * (2.0 * PI * x / length).cos()))
}

/// Scalar Laplacian on the round sphere, `l ≤ lmax`.
pub fn sphere_scalar_spectrum(radius: f64, lmax: usize) -> Result<SpectralData> {
    let blocks = (0..=lmax)
        .map(|l| {
            let mu = (l * (l + 1)) as f64 / (radius * radius);
            (format!("l={l}"), 2 * l + 1, CMatrix::from_element(1, 1, Complex64::new(mu, 0.0)), vec![1.0])
        })
        .collect();
    SpectralData::from_blocks(
        blocks,
        false,
        4.0 * PI * radius * radius,
        SpectralBasis::Homogeneous,
        SpectrumOptions::default(),
    )
}

/// Scalar Laplacian on a flat 2-torus, momenta `|n_i| ≤ cutoff`.
pub fn torus_scalar_spectrum(periods: [f64; 2], cutoff: usize) -> Result<SpectralData> {
    let k = cutoff as i64;
    let mut blocks = Vec::new();
    for n1 in -k..=k {
        for n2 in -k..=k {
            let a = 2.0 * PI * n1 as f64 / periods[0];
            let b = 2.0 * PI * n2 as f64 / periods[1];
            blocks.push((
                format!("n=({n1},{n2})"),
                1,
                CMatrix::from_element(1, 1, Complex64::new(a * a + b * b, 0.0)),
                vec![1.0],
            ));
        }
    }
    SpectralData::from_blocks(
        blocks,
        false,
        periods[0] * periods[1],
        SpectralBasis::Homogeneous,
        SpectrumOptions::default(),
    )
}

// ---------------------------------------------------------------------------
// spectral kernels

#[derive(Clone, Debug)]
pub enum KernelSlice {
    /// Homogeneous model: fibre traces `[positive, negative]` of `k_t(x, x)`.
    Homogeneous { fibre: [f64; 2], area: f64 },
    /// Circle: `k_t(x, y) = L⁻¹ Σ C_ab e^{2πi(n_a x − n_b y)/L}`.
    Fourier {
        length: f64,
        modes: Vec<i64>,
        coefficients: CMatrix,
    },
}

/// Exact heat kernels at a list of times.
#[derive(Clone, Debug)]
pub struct HeatKernelGrid {
    pub times: Vec<f64>,
    pub slices: Vec<KernelSlice>,
}

fn heat_weight(spectral: &SpectralData, lambda: f64, t: f64) -> f64 {
    if spectral.dirac {
        (-t * lambda * lambda).exp()
    } else {
        (-t * lambda).exp()
    }
}

pub fn spectral_heat_kernel(spectral: &SpectralData, t: f64) -> Result<HeatKernelGrid> {
    spectral_heat_kernels(spectral, &[t])
}

pub fn spectral_heat_kernels(spectral: &SpectralData, times: &[f64]) -> Result<HeatKernelGrid> {
    for t in times {
        check_time(*t)?;
    }
    let slices = times
        .iter()
        .map(|t| match &spectral.basis {
            SpectralBasis::Homogeneous => {
                let (p, m) = spectral.chiral_traces(*t);
                Ok(KernelSlice::Homogeneous {
                    fibre: [p / spectral.area, m / spectral.area],
                    area: spectral.area,
                })
            }
            SpectralBasis::Fourier1d { length, modes } => {
                if spectral.blocks.len() != 1 {
                    return Err(Error::Unsupported("Fourier kernels need a single block".into()));
                }
                Ok(KernelSlice::Fourier {
                    length: *length,
                    modes: modes.clone(),
                    coefficients: block_kernel(spectral, 0, *t),
                })
            }
        })
        .collect::<Result<_>>()?;
    Ok(HeatKernelGrid {
        times: times.to_vec(),
        slices,
    })
}

/// `V e^{−tμ} V*` of one block.
fn block_kernel(spectral: &SpectralData, block: usize, t: f64) -> CMatrix {
    let b = &spectral.blocks[block];
    let w = DVector::from_iterator(
        b.values.len(),
        b.values.iter().map(|l| Complex64::new(heat_weight(spectral, *l, t), 0.0)),
    );
    &b.vectors * CMatrix::from_diagonal(&w) * b.vectors.adjoint()
}

impl KernelSlice {
    /// `∂_y^l k_t(x, y)` (Fourier slices only).
    pub fn value(&self, x: f64, y: f64, l: u32) -> Result<Complex64> {
        match self {
            KernelSlice::Fourier {
                length,
                modes,
                coefficients,
            } => {
                let w = 2.0 * PI / length;
                let mut acc = Complex64::new(0.0, 0.0);
                for (b, nb) in modes.iter().enumerate() {
                    let mut u = Complex64::new(0.0, 0.0);
                    for (a, na) in modes.iter().enumerate() {
                        u += coefficients[(a, b)] * Complex64::from_polar(1.0, w * *na as f64 * x);
                    }
                    let d = Complex64::new(0.0, -w * *nb as f64).powu(l);
                    acc += u * d * Complex64::from_polar(1.0, -w * *nb as f64 * y);
                }
                Ok(acc / length)
            }
            KernelSlice::Homogeneous { .. } => Err(Error::Unsupported(
                "off-diagonal values of a homogeneous kernel".into(),
            )),
        }
    }

    /// Row `y ↦ ∂_y^l k_t(x, y)` on a list of points.
    pub fn row(&self, x: f64, ys: &[f64], l: u32) -> Result<Vec<Complex64>> {
        match self {
            KernelSlice::Fourier {
                length,
                modes,
                coefficients,
            } => {
                let w = 2.0 * PI / length;
                let u: Vec<Complex64> = (0..modes.len())
                    .map(|b| {
                        modes
                            .iter()
                            .enumerate()
                            .map(|(a, na)| coefficients[(a, b)] * Complex64::from_polar(1.0, w * *na as f64 * x))
                            .sum::<Complex64>()
                            * Complex64::new(0.0, -w * modes[b] as f64).powu(l)
                    })
                    .collect();
                Ok(ys
                    .par_iter()
                    .map(|y| {
                        modes
                            .iter()
                            .zip(&u)
                            .map(|(nb, ub)| ub * Complex64::from_polar(1.0, -w * *nb as f64 * y))
                            .sum::<Complex64>()
                            / length
                    })
                    .collect())
            }
            KernelSlice::Homogeneous { .. } => Err(Error::Unsupported(
                "off-diagonal values of a homogeneous kernel".into(),
            )),
        }
    }

    /// Fibre traces `[positive, negative]` of `k_t(x, x)`; scalar kernels put
    /// everything in the first slot.
    pub fn diagonal(&self, x: f64) -> Result<[f64; 2]> {
        match self {
            KernelSlice::Homogeneous { fibre, .. } => Ok(*fibre),
            KernelSlice::Fourier { .. } => Ok([self.value(x, x, 0)?.re, 0.0]),
        }
    }

    pub fn trace(&self) -> f64 {
        match self {
            KernelSlice::Homogeneous { fibre, area } => (fibre[0] + fibre[1]) * area,
            KernelSlice::Fourier { coefficients, .. } => coefficients.trace().re,
        }
    }

    /// Largest `|k(x, y) − k(y, x)*|` relative to the largest entry.
    pub fn hermiticity_defect(&self) -> f64 {
        match self {
            KernelSlice::Homogeneous { .. } => 0.0,
            KernelSlice::Fourier { coefficients, .. } => linalg::hermitian_defect(coefficients),
        }
    }
}

impl HeatKernelGrid {
    pub fn trace(&self, j: usize) -> f64 {
        self.slices[j].trace()
    }
}

fn circle_grid(length: f64, points: usize) -> Vec<f64> {
    (0..points).map(|j| j as f64 * length / points as f64).collect()
}

fn kernel_matrix(slice: &KernelSlice, xs: &[f64]) -> Result<CMatrix> {
    let rows: Vec<Vec<Complex64>> = xs.iter().map(|x| slice.row(*x, xs, 0)).collect::<Result<_>>()?;
    Ok(CMatrix::from_fn(xs.len(), xs.len(), |r, c| rows[r][c]))
}

/// `‖k_t ∘ k_s − k_{t+s}‖ / ‖k_{t+s}‖` (entrywise max). On the circle the
/// composition is the trapezoid quadrature in the middle variable, which is
/// exact for the band-limited kernels.
pub fn semigroup_defect(spectral: &SpectralData, t: f64, s: f64) -> Result<f64> {
    check_time(t)?;
    check_time(s)?;
    match &spectral.basis {
        SpectralBasis::Fourier1d { length, modes } => {
            let kmax = modes.iter().map(|n| n.unsigned_abs()).max().unwrap_or(0) as usize;
            let xs = circle_grid(*length, 2 * kmax + 2);
            let grid = spectral_heat_kernels(spectral, &[t, s, t + s])?;
            let kt = kernel_matrix(&grid.slices[0], &xs)?;
            let ks = kernel_matrix(&grid.slices[1], &xs)?;
            let kts = kernel_matrix(&grid.slices[2], &xs)?;
            let composed = &kt * &ks * Complex64::new(length / xs.len() as f64, 0.0);
            Ok(linalg::max_abs(&(composed - &kts)) / linalg::max_abs(&kts).max(f64::MIN_POSITIVE))
        }
        SpectralBasis::Homogeneous => Ok((0..spectral.blocks.len())
            .map(|b| {
                let kt = block_kernel(spectral, b, t);
                let ks = block_kernel(spectral, b, s);
                let kts = block_kernel(spectral, b, t + s);
                linalg::max_abs(&(&kt * &ks - &kts)) / linalg::max_abs(&kts).max(f64::MIN_POSITIVE)
            })
            .fold(0.0, f64::max)),
    }
}

/// Largest Frobenius norm of `(∂_t + H) k_t` over blocks, with `H = A` for
/// Laplace-type data and `H = A²` for Dirac data; `∂_t k_t` is taken from the
/// eigen-expansion, so this measures how well the eigenpairs solve `H`.
pub fn heat_equation_residual(spectral: &SpectralData, t: f64) -> Result<f64> {
    check_time(t)?;
    Ok(spectral
        .blocks
        .par_iter()
        .map(|b| {
            let h = if spectral.dirac { &b.operator * &b.operator } else { b.operator.clone() };
            let mu: Vec<f64> = b.values.iter().map(|l| if spectral.dirac { l * l } else { *l }).collect();
            let w = DVector::from_iterator(mu.len(), mu.iter().map(|m| Complex64::new((-t * m).exp(), 0.0)));
            let lam = DVector::from_iterator(mu.len(), mu.iter().map(|m| Complex64::new(*m, 0.0)));
            let r = (&h * &b.vectors - &b.vectors * CMatrix::from_diagonal(&lam))
                * CMatrix::from_diagonal(&w)
                * b.vectors.adjoint();
            r.norm()
        })
        .reduce(|| 0.0, f64::max))
}

/// `max_x |∫ k_t(x, y) f(y) dy − f(x)|` on the circle.
pub fn initial_condition_error(spectral: &SpectralData, t: f64, f: &(dyn Fn(f64) -> f64 + Sync)) -> Result<f64> {
    let grid = spectral_heat_kernel(spectral, t)?;
    let (length, kmax) = match &spectral.basis {
        SpectralBasis::Fourier1d { length, modes } => (*length, modes.iter().map(|n| n.unsigned_abs()).max().unwrap_or(0)),
        SpectralBasis::Homogeneous => return Err(Error::Unsupported("initial-condition check needs a circle".into())),
    };
    let xs = circle_grid(length, (2 * kmax as usize + 2).max(64));
    let k = kernel_matrix(&grid.slices[0], &xs)?;
    let fv: Vec<f64> = xs.iter().map(|x| f(*x)).collect();
    let h = length / xs.len() as f64;
    Ok((0..xs.len())
        .map(|i| {
            let u: Complex64 = (0..xs.len()).map(|j| k[(i, j)] * fv[j]).sum::<Complex64>() * h;
            (u - fv[i]).norm()
        })
        .fold(0.0, f64::max))
}

// ---------------------------------------------------------------------------
// small-time fits

/// Fit of `(4πt)^{n/2} Tr e^{−tP} ≈ Σ a_i t^i`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceFit {
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub condition: f64,
    pub residual: f64,
    pub t_range: (f64, f64),
    /// Largest change of the coefficients (relative to `|a_0|`) when the fit
    /// window is halved.
    pub drift: f64,
    pub samples: Vec<(f64, f64)>,
}

pub const DEFAULT_FIT_RANGE: (f64, f64) = (1e-3, 1e-1);
pub const DEFAULT_FIT_SAMPLES: usize = 40;

pub fn log_spaced(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n)
        .map(|k| (a.ln() + (b.ln() - a.ln()) * k as f64 / (n - 1) as f64).exp())
        .collect()
}

pub fn heat_trace_expansion(spectral: &SpectralData, n: usize, k: usize, t_range: (f64, f64)) -> Result<TraceFit> {
    let (t0, t1) = t_range;
    check_time(t0)?;
    if !(t1 > t0) {
        return Err(Error::InvalidParameter(format!("empty fit range ({t0}, {t1})")));
    }
    let fit_on = |a: f64, b: f64| -> Result<(PolyFit, Vec<(f64, f64)>)> {
        let ts = log_spaced(a, b, DEFAULT_FIT_SAMPLES);
        let ys: Vec<f64> = ts
            .iter()
            .map(|t| spectral.heat_trace(*t) * (4.0 * PI * t).powf(0.5 * n as f64))
            .collect();
        let fit = linalg::polynomial_fit(&ts, &ys, k)?;
        Ok((fit, ts.into_iter().zip(ys).collect()))
    };
    let (full, samples) = fit_on(t0, t1)?;
    let (half, _) = fit_on(t0, 0.5 * t1)?;
    let scale = full.coefficients[0].abs().max(f64::MIN_POSITIVE);
    let drift = full
        .coefficients
        .iter()
        .zip(&half.coefficients)
        .take(2)
        .map(|(a, b)| (a - b).abs() / scale)
        .fold(0.0, f64::max);
    Ok(TraceFit {
        coefficients: full.coefficients,
        std_errors: full.std_errors,
        condition: full.condition,
        residual: full.residual,
        t_range,
        drift,
        samples,
    })
}

// ---------------------------------------------------------------------------
// off-diagonal decay

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayReport {
    pub t: f64,
    /// `seminorms[k][l] = sup_y (1 + d(x0, y))^k |∂_y^l k_t(x0, y)|`.
    pub seminorms: Vec<Vec<f64>>,
    pub all_finite: bool,
    /// `α` in `log k_t ≈ c − α d²/4t`.
    pub decay_exponent: f64,
    pub diagonal: f64,
}

/// Seminorms and Gaussian decay exponent of a circle kernel, base point 0.
pub fn schwartz_decay_check(kernel: &HeatKernelGrid, k: usize, l: usize) -> Result<DecayReport> {
    let slice = kernel.slices.first().ok_or(Error::InsufficientSamples { needed: 1, got: 0 })?;
    let t = kernel.times[0];
    let length = match slice {
        KernelSlice::Fourier { length, .. } => *length,
        KernelSlice::Homogeneous { .. } => {
            return Err(Error::Unsupported("decay check needs off-diagonal values".into()))
        }
    };
    let ys = circle_grid(length, 1024);
    let dist: Vec<f64> = ys.iter().map(|y| y.min(length - y)).collect();
    let mut seminorms = vec![vec![0.0; l + 1]; k + 1];
    let mut base = Vec::new();
    for li in 0..=l {
        let row = slice.row(0.0, &ys, li as u32)?;
        if li == 0 {
            base = row.iter().map(|z| z.re).collect();
        }
        for (ki, s) in seminorms.iter_mut().enumerate() {
            s[li] = row
                .iter()
                .zip(&dist)
                .map(|(z, d)| (1.0 + d).powi(ki as i32) * z.norm())
                .fold(0.0, f64::max);
        }
    }
    let diagonal = base[0];
    let (xs, lys): (Vec<f64>, Vec<f64>) = base
        .iter()
        .zip(&dist)
        .filter(|(v, _)| **v > 1e-8 * diagonal)
        .map(|(v, d)| (d * d / (4.0 * t), v.ln()))
        .unzip();
    let decay_exponent = -linalg::polynomial_fit(&xs, &lys, 1)?.coefficients[1];
    let all_finite = seminorms.iter().flatten().all(|v| v.is_finite());
    Ok(DecayReport {
        t,
        seminorms,
        all_finite,
        decay_exponent,
        diagonal,
    })
}

// ---------------------------------------------------------------------------
// Duhamel series on the circle

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DuhamelReport {
    pub t: f64,
    /// Sup norm of the k-th correction `G #R #…#R` (k factors of `R`).
    pub term_norms: Vec<f64>,
    /// Sup error against the exact kernel after including 0, 1, … corrections.
    pub partial_errors: Vec<f64>,
}

/// Builds `k_t = G_t − (G#R)_t + (G#R#R)_t − …` on a uniform circle grid,
/// where `R = (∂_t + P_x) G` and `(A#B)_t = ∫₀ᵗ A_{t−s} ∘ B_s ds`; the time
/// convolution uses the trapezoid rule with `A_0 = δ`.
pub fn duhamel_series(
    model: &LaplaceModel,
    exact: &SpectralData,
    order: usize,
    t: f64,
    points: usize,
    steps: usize,
    terms: usize,
) -> Result<DuhamelReport> {
    check_time(t)?;
    let length = match model.geometry().kind() {
        GeometryKind::FlatTorus { periods } if periods.len() == 1 => periods[0],
        _ => return Err(Error::Unsupported("Duhamel series is implemented on the circle".into())),
    };
    let xs = circle_grid(length, points);
    let hx = length / points as f64;
    let kernels: Vec<ParametrixKernel> = xs
        .par_iter()
        .map(|x| {
            let e = parametrix_expansion(model, &[*x], order, None)?;
            parametrix_kernel(&e, e.radius)
        })
        .collect::<Result<_>>()?;
    let signed = |x: f64, y: f64| {
        let d = x - y;
        d - length * (d / length).round()
    };
    let radius = kernels[0].expansion.radius;
    let build = |tau: f64, rem: bool| -> Result<CMatrix> {
        let mut m = CMatrix::zeros(points, points);
        for j in 0..points {
            for i in 0..points {
                let p = signed(xs[i], xs[j]);
                if p.abs() > radius {
                    continue;
                }
                let v = if rem {
                    kernels[j].remainder(tau, p)?[0]
                } else {
                    kernels[j].eval_chart(tau, p)?[0]
                };
                m[(i, j)] = Complex64::new(v, 0.0);
            }
        }
        Ok(m)
    };
    let dt = t / steps as f64;
    let times: Vec<f64> = (0..=steps).map(|k| k as f64 * dt).collect();
    let identity = CMatrix::identity(points, points) * Complex64::new(1.0 / hx, 0.0);
    let g: Vec<CMatrix> = times
        .par_iter()
        .map(|tau| if *tau == 0.0 { Ok(identity.clone()) } else { build(*tau, false) })
        .collect::<Result<_>>()?;
    let r: Vec<CMatrix> = times
        .par_iter()
        .map(|tau| if *tau == 0.0 { Ok(CMatrix::zeros(points, points)) } else { build(*tau, true) })
        .collect::<Result<_>>()?;
    let scale = Complex64::new(hx * dt, 0.0);
    let mut current = g.clone();
    let mut term_norms = Vec::new();
    let exact_k = kernel_matrix(&spectral_heat_kernel(exact, t)?.slices[0], &xs)?;
    let mut approx = g[steps].clone();
    let mut partial_errors = vec![linalg::max_abs(&(&approx - &exact_k))];
    for term in 1..=terms {
        let next: Vec<CMatrix> = (0..=steps)
            .into_par_iter()
            .map(|k| {
                let mut acc = CMatrix::zeros(points, points);
                for m in 0..=k {
                    let w = if m == 0 || m == k { 0.5 } else { 1.0 };
                    acc += &current[k - m] * &r[m] * Complex64::new(w, 0.0);
                }
                acc * scale
            })
            .collect();
        let sign = if term % 2 == 1 { -1.0 } else { 1.0 };
        term_norms.push(linalg::max_abs(&next[steps]));
        approx += &next[steps] * Complex64::new(sign, 0.0);
        partial_errors.push(linalg::max_abs(&(&approx - &exact_k)));
        current = next;
    }
    Ok(DuhamelReport {
        t,
        term_norms,
        partial_errors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::GeometrySpec;
    use crate::operators::build_dirac;

    fn circle() -> ModelGeometry {
        GeometrySpec::flat_torus(vec![2.0 * PI], 16).build().unwrap()
    }

    fn sphere() -> ModelGeometry {
        GeometrySpec::round_sphere(1.0, 8).build().unwrap()
    }

    #[test]
    fn gaussian_values() {
        let t2 = GeometrySpec::flat_torus(vec![2.0 * PI, 2.0 * PI], 8).build().unwrap();
        let q = gaussian_q(&t2, &[0.1, 0.2], &[0.1, 0.2], 0.3).unwrap();
        assert!((q - 1.0 / (4.0 * PI * 0.3)).abs() < 1e-15);
        let q = gaussian_q(&t2, &[0.0, 0.0], &[0.3, 0.4], 0.5).unwrap();
        assert!((q - (-0.25f64 / 2.0).exp() / (2.0 * PI)).abs() < 1e-15);
        assert!(matches!(gaussian_q(&t2, &[0.0, 0.0], &[0.0, 0.0], 0.0), Err(Error::NonPositiveTime(_))));
        let s = sphere();
        let q = gaussian_q(&s, &[PI / 2.0, 0.0], &[PI / 2.0, 1.0], 1.0).unwrap();
        assert!((q - (-0.25f64).exp() / (4.0 * PI)).abs() < 1e-15);
    }

    #[test]
    fn flat_parametrix_is_trivial() {
        let t2 = GeometrySpec::flat_torus(vec![2.0 * PI, 2.0 * PI], 8).build().unwrap();
        let e = parametrix_coefficients(&build_dirac(&t2, 0).unwrap(), &[0.0, 0.0], 3).unwrap();
        for i in 1..=3 {
            for c in 0..2 {
                assert!(e.values(i, c).iter().all(|v| *v == 0.0));
            }
        }
        assert!(e.values(0, 0).iter().all(|v| *v == 1.0));
        let g = parametrix_kernel(&e, e.radius).unwrap();
        let v = g.eval(0.2, &[0.3, 0.1]).unwrap();
        let q = gaussian_q(&t2, &[0.0, 0.0], &[0.3, 0.1], 0.2).unwrap();
        assert!((v[0] - q).abs() < 1e-15 && (v[1] - q).abs() < 1e-15);
    }

    #[test]
    fn sphere_scalar_coefficients() {
        let e = parametrix_expansion(&LaplaceModel::scalar(&sphere()).unwrap(), &[1.0, 0.5], 2, None).unwrap();
        assert!((e.phi_at_center(1)[0] - 1.0 / 3.0).abs() < 1e-10);
        // a_2 / a_0 = 1/15 for the round unit sphere
        assert!((e.phi_at_center(2)[0] - 1.0 / 15.0).abs() < 1e-8);
        for p in [0.3, 0.9, 1.4] {
            let want = (p / f64::sin(p)).sqrt();
            assert!((e.phi(0, p)[0] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn spinor_parametrix_matches_lichnerowicz() {
        // a_1 = κ/6 − κ/4 − c(F) on each chirality
        let a = build_dirac(&GeometrySpec::round_sphere(1.0, 8).build().unwrap(), 2).unwrap();
        let e = parametrix_coefficients(&a, &[1.0, 0.0], 1).unwrap();
        let phi1 = e.phi_at_center(1);
        assert!((phi1[0] - (1.0 / 3.0 - 0.5 + 1.0)).abs() < 1e-10);
        assert!((phi1[1] - (1.0 / 3.0 - 0.5 - 1.0)).abs() < 1e-10);
    }

    #[test]
    fn remainder_order_on_circle() {
        let model = LaplaceModel::with_potential(&circle(), circle_potential(2.0 * PI, 0.5)).unwrap();
        for n in [1usize, 2] {
            let e = parametrix_expansion(&model, &[0.0], n, None).unwrap();
            let g = parametrix_kernel(&e, e.radius).unwrap();
            let slope = g.remainder_order(&log_spaced(0.005, 0.05, 8)).unwrap();
            assert!((slope - (n as f64 - 0.5)).abs() < 0.2, "N = {n}: {slope}");
        }
    }

    #[test]
    fn circle_trace_matches_theta_sum() {
        let s = circle_spectrum(2.0 * PI, 220, 0.0).unwrap();
        let t = 1e-3;
        let want = (4.0 * PI * t).powf(-0.5) * 2.0 * PI;
        assert!((s.heat_trace(t) / want - 1.0).abs() < 1e-10);
        let k = spectral_heat_kernel(&s, t).unwrap();
        assert!((k.trace(0) / want - 1.0).abs() < 1e-10);
    }

    #[test]
    fn spectral_kernel_checks() {
        let s = circle_spectrum(2.0 * PI, 24, 0.7).unwrap();
        assert!(semigroup_defect(&s, 0.1, 0.25).unwrap() < 1e-10);
        assert!(heat_equation_residual(&s, 0.1).unwrap() < 1e-8);
        let k = spectral_heat_kernel(&s, 0.3).unwrap();
        assert!(k.slices[0].hermiticity_defect() < 1e-12);
        let row = k.slices[0].row(0.0, &circle_grid(2.0 * PI, 64), 0).unwrap();
        assert!(row.iter().all(|z| z.re > 0.0));
        let f = |x: f64| x.cos().exp();
        let e1 = initial_condition_error(&s, 1e-3, &f).unwrap();
        let e2 = initial_condition_error(&s, 1e-4, &f).unwrap();
        assert!(e2 < e1 && e2 < 1e-3);
        // long times: projection onto the ground state
        let free = circle_spectrum(2.0 * PI, 8, 0.0).unwrap();
        assert!((spectral_heat_kernel(&free, 60.0).unwrap().trace(0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sphere_and_torus_trace_fits() {
        let s = sphere_scalar_spectrum(1.0, 320).unwrap();
        let fit = heat_trace_expansion(&s, 2, 3, DEFAULT_FIT_RANGE).unwrap();
        let a = &fit.coefficients;
        assert!((a[0] - 4.0 * PI).abs() < 1e-3, "{a:?}");
        assert!((a[1] / a[0] - 1.0 / 3.0).abs() < 1e-3);
        assert!(fit.drift < 0.01);
        let t = torus_scalar_spectrum([2.0 * PI, 2.0 * PI], 160).unwrap();
        let fit = heat_trace_expansion(&t, 2, 2, (5e-3, 1e-1)).unwrap();
        assert!((fit.coefficients[0] - 4.0 * PI * PI).abs() < 1e-8);
        assert!(fit.coefficients[1].abs() < 1e-8 && fit.coefficients[2].abs() < 1e-8);
    }

    #[test]
    fn decay_on_circle() {
        let s = circle_spectrum(2.0 * PI, 96, 0.0).unwrap();
        for t in [0.01, 0.02] {
            let rep = schwartz_decay_check(&spectral_heat_kernel(&s, t).unwrap(), 4, 4).unwrap();
            assert!((rep.decay_exponent - 1.0).abs() < 0.05, "{}", rep.decay_exponent);
            assert!(rep.all_finite);
            assert!((rep.diagonal / (4.0 * PI * t).powf(-0.5) - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn parametrix_error_order_on_sphere() {
        let e = parametrix_expansion(&LaplaceModel::scalar(&sphere()).unwrap(), &[1.0, 0.0], 1, None).unwrap();
        let g = parametrix_kernel(&e, e.radius).unwrap();
        let exact = sphere_scalar_spectrum(1.0, 400).unwrap();
        let ts = log_spaced(0.005, 0.05, 6);
        let errs: Vec<f64> = ts
            .iter()
            .map(|t| {
                let k = spectral_heat_kernel(&exact, *t).unwrap().slices[0].diagonal(0.0).unwrap()[0];
                (g.eval(*t, &[1.0, 0.0]).unwrap()[0] - k).abs()
            })
            .collect();
        let slope = linalg::loglog_slope(&ts, &errs).unwrap();
        assert!((slope - 1.0).abs() < 0.2, "{slope}");
    }

    #[test]
    fn duhamel_corrections_shrink() {
        let eps = 1.0;
        let model = LaplaceModel::with_potential(&circle(), circle_potential(2.0 * PI, eps)).unwrap();
        let exact = circle_spectrum(2.0 * PI, 48, eps).unwrap();
        let rep = duhamel_series(&model, &exact, 1, 0.3, 96, 24, 3).unwrap();
        for w in rep.term_norms.windows(2) {
            assert!(w[1] < w[0], "{:?}", rep.term_norms);
        }
        assert!(rep.partial_errors[1] < rep.partial_errors[0], "{:?}", rep.partial_errors);
    }
}
