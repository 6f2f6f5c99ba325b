//! End-to-end index pipelines: spectral index, McKean–Singer supertrace,
//! the integrated `Â ∧ ch` form, the eta term, and the positive scalar
//! curvature obstruction.

use std::f64::consts::PI;

use num_complex::Complex64;
use num_rational::Ratio;
use num_traits::Zero;
use serde::Serialize;

use crate::charclass::{a_hat, chern_character, top_degree_integral_field, CurvatureMatrix, FormPolynomial, Normalization};
use crate::error::{Error, Result};
use crate::geometry::{GeometryKind, ModelGeometry};
use crate::heat::spectral_heat_kernels;
use crate::operators::{build_dirac_with, spectrum, DiracAssembly, Discretization, SpectralData, SpectrumOptions, TwistSpec};
use crate::renorm::{b_heat_trace, eta_integral, renormalized_supertrace};
use crate::scalar::{Exact, Scalar};

pub const SCHEMA_VERSION: u32 = 1;
/// Smallest accepted ratio between the magnitudes just above and just below
/// the kernel threshold.
pub const MIN_GAP_RATIO: f64 = 10.0;
pub const DEFAULT_TIMES: [f64; 3] = [0.1, 0.5, 1.0];
const ETA_T_MAX: f64 = 20.0;
const ETA_PANELS: usize = 64;

/// `dim ker D⁺ − dim ker D⁻`.
pub fn spectral_index(spectral: &SpectralData) -> Result<i64> {
    let (below, above) = spectral.gap();
    if below > 0.0 && above / below < MIN_GAP_RATIO {
        return Err(Error::AmbiguousGap { below, above });
    }
    Ok(spectral.ker_plus as i64 - spectral.ker_minus as i64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct IndexTolerances {
    pub geometric: f64,
    pub supertrace: f64,
    pub mckean_singer: f64,
    pub eta: f64,
}

impl Default for IndexTolerances {
    fn default() -> Self {
        Self {
            geometric: 1e-3,
            supertrace: 1e-6,
            mckean_singer: 1e-8,
            eta: 1e-10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    fn new(name: &str, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            passed: value.abs() <= tolerance,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Residuals {
    pub geometric_vs_spectral: f64,
    pub supertrace_vs_spectral: f64,
    pub supertrace_vs_geometric: f64,
    pub supertrace_drift: f64,
    pub supertrace_derivative: f64,
    pub eta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Closed,
    Diagnostic,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IndexReport {
    pub schema_version: u32,
    pub geometry: GeometryKind,
    pub resolution: Vec<usize>,
    pub twist_degree: i64,
    pub gauge_winding: [i64; 2],
    pub branch: Branch,
    pub spectral_index: Option<i64>,
    pub kernel: Option<[usize; 2]>,
    pub kernel_threshold: Option<f64>,
    pub times: Vec<f64>,
    pub supertraces: Vec<f64>,
    pub geometric: f64,
    /// `⨍ Â ∧ ch` evaluated in exact arithmetic from the quantized flux, as `"p/q"`.
    pub geometric_exact: Option<String>,
    pub eta: Option<f64>,
    pub eta_tail_bound: Option<f64>,
    pub residuals: Option<Residuals>,
    pub tolerances: IndexTolerances,
    pub checks: Vec<Check>,
    pub passed: bool,
}

/// `⨍ (i/2π)^{n/2} [Â(R) ∧ ch(F)]_top dμ` by quadrature of the pointwise form.
pub fn geometric_integral(assembly: &DiracAssembly) -> Result<f64> {
    let geom = assembly.geometry();
    let n = geom.dim();
    let twist = assembly.twist_curvature();
    let ch = if twist.is_zero() {
        FormPolynomial::one(n, ())
    } else {
        chern_character(&twist)?
    };
    let v = top_degree_integral_field(
        |x| {
            let c = geom.curvature(x);
            let r = CurvatureMatrix::from_tensor(n, |i, j, k, l| Complex64::new(c.riemann_frame(i, j, k, l), 0.0))?;
            a_hat(&r)?.wedge(&ch)
        },
        n,
        geom,
        Normalization::Characteristic,
    )?;
    if v.im.abs() > 1e-10 * (1.0 + v.re.abs()) {
        return Err(Error::Precondition(format!("index integral has imaginary part {}", v.im)));
    }
    Ok(v.re)
}

/// Exact `∫ Â ∧ ch` on a homogeneous surface: the twist curvature is
/// expressed in flux quanta `2πi/A`, which must be an integer multiple.
pub fn geometric_integral_exact(assembly: &DiracAssembly) -> Result<Exact> {
    let n = assembly.geometry().dim();
    let quanta = assembly.twist_field() * assembly.area() / Complex64::new(0.0, 2.0 * PI);
    let k = quanta.re.round();
    if (quanta - Complex64::new(k, 0.0)).norm() > 1e-9 {
        return Err(Error::Precondition(format!("flux {quanta} is not quantized")));
    }
    // F = k (2πi/A) e¹∧e²; the characteristic factor times 2πi/A times the area is −1
    let f = FormPolynomial::monomial(n, &[0, 1], Exact::from_int(k as i64))?;
    let ch = chern_character(&f)?;
    let a = if assembly.geometry().scalar_curvature() == 0.0 {
        FormPolynomial::one(n, ())
    } else {
        // on a surface Â has no part of degree 2, so the curvature scale drops out
        let r = CurvatureMatrix::<Exact>::from_tensor(n, |i, j, k, l| {
            let s = if (i, j, k, l) == (0, 1, 0, 1) || (i, j, k, l) == (1, 0, 1, 0) {
                1
            } else if (i, j, k, l) == (0, 1, 1, 0) || (i, j, k, l) == (1, 0, 0, 1) {
                -1
            } else {
                0
            };
            Exact::from_int(s)
        })?;
        a_hat(&r)?
    };
    Ok(a.wedge(&ch)?.top_coefficient() * Exact::from_int(-1))
}

fn format_exact(z: &Exact) -> String {
    let r: &Ratio<i128> = &z.re;
    if !z.im.is_zero() {
        return format!("{}+{}i", z.re, z.im);
    }
    format!("{r}")
}

/// Runs every side of the index formula on `geom` with twist `twist`.
pub fn verify_index_theorem(geom: &ModelGeometry, twist: TwistSpec, times: &[f64]) -> Result<IndexReport> {
    verify_index_theorem_with(geom, twist, times, IndexTolerances::default())
}

pub fn verify_index_theorem_with(
    geom: &ModelGeometry,
    twist: TwistSpec,
    times: &[f64],
    tol: IndexTolerances,
) -> Result<IndexReport> {
    if times.is_empty() {
        return Err(Error::InvalidParameter("empty time list".into()));
    }
    if let Some(t) = times.iter().find(|t| !(**t > 0.0)) {
        return Err(Error::NonPositiveTime(*t));
    }
    if geom.has_boundary() {
        return diagnostic_branch(geom, twist, times, tol);
    }
    let assembly = build_dirac_with(geom, twist).map_err(|e| e.context("assembling the Dirac operator"))?;
    let spectral = spectrum(&assembly, SpectrumOptions::default()).map_err(|e| e.context("diagonalizing"))?;
    let index = spectral_index(&spectral)?;
    let grid = spectral_heat_kernels(&spectral, times)?;
    let supertraces: Vec<f64> = renormalized_supertrace(&grid, [1.0, -1.0], geom)?
        .iter()
        .map(|z| z.re)
        .collect();
    let geometric = geometric_integral(&assembly).map_err(|e| e.context("integrating the index density"))?;
    let exact = geometric_integral_exact(&assembly).ok();
    let eta = eta_integral(&spectral, ETA_T_MAX, ETA_PANELS)?;

    let sweep: Vec<f64> = (0..=19).map(|k| 0.1 + 0.1 * k as f64).collect();
    let sweep_values: Vec<f64> = sweep.iter().map(|t| spectral.heat_supertrace(*t)).collect();
    let all: Vec<f64> = supertraces.iter().chain(&sweep_values).copied().collect();
    let drift = all.iter().fold(f64::NEG_INFINITY, |a, b| a.max(*b)) - all.iter().fold(f64::INFINITY, |a, b| a.min(*b));
    let derivative = sweep.iter().map(|t| supertrace_derivative(&spectral, *t).abs()).fold(0.0, f64::max);
    let residuals = Residuals {
        geometric_vs_spectral: geometric - index as f64,
        supertrace_vs_spectral: max_dev(&supertraces, index as f64),
        supertrace_vs_geometric: max_dev(&supertraces, geometric),
        supertrace_drift: drift,
        supertrace_derivative: derivative,
        eta: eta.value,
    };
    let mut checks = vec![
        Check::new("geometric_vs_spectral", residuals.geometric_vs_spectral, tol.geometric),
        Check::new("supertrace_vs_spectral", residuals.supertrace_vs_spectral, tol.supertrace),
        Check::new("mckean_singer_drift", residuals.supertrace_drift, tol.mckean_singer),
        Check::new("mckean_singer_derivative", residuals.supertrace_derivative, tol.mckean_singer),
        Check::new("eta", eta.value.abs() + eta.tail_bound, tol.eta),
    ];
    if let Some(e) = &exact {
        let dev = (e.to_c64() - Complex64::new(index as f64, 0.0)).norm();
        checks.push(Check::new("geometric_exact_vs_spectral", dev, 0.0));
    }
    let passed = checks.iter().all(|c| c.passed);
    Ok(IndexReport {
        schema_version: SCHEMA_VERSION,
        geometry: geom.kind().clone(),
        resolution: geom.resolution().to_vec(),
        twist_degree: twist.degree,
        gauge_winding: twist.gauge_winding,
        branch: Branch::Closed,
        spectral_index: Some(index),
        kernel: Some([spectral.ker_plus, spectral.ker_minus]),
        kernel_threshold: Some(spectral.kernel_threshold),
        times: times.to_vec(),
        supertraces,
        geometric,
        geometric_exact: exact.as_ref().map(format_exact),
        eta: Some(eta.value),
        eta_tail_bound: Some(eta.tail_bound),
        residuals: Some(residuals),
        tolerances: tol,
        checks,
        passed,
    })
}

fn max_dev(v: &[f64], target: f64) -> f64 {
    v.iter().map(|x| (x - target).abs()).fold(0.0, f64::max)
}

/// `d/dt Tr(Γ e^{−tD²}) = −Σ λ² e^{−tλ²} ⟨v, Γv⟩`.
pub fn supertrace_derivative(spectral: &SpectralData, t: f64) -> f64 {
    spectral
        .blocks
        .iter()
        .map(|b| {
            b.multiplicity as f64
                * b.values
                    .iter()
                    .zip(&b.chirality)
                    .map(|(l, ch)| -l * l * (-t * l * l).exp() * ch)
                    .sum::<f64>()
        })
        .sum()
}

/// Untwisted flat b-cylinder: `D² = Δ ⊗ 1` so the b-supertrace is the b-trace
/// of the scalar heat kernel times `tr Γ = 0`. Reported, not asserted.
fn diagnostic_branch(geom: &ModelGeometry, twist: TwistSpec, times: &[f64], tol: IndexTolerances) -> Result<IndexReport> {
    if twist.degree != 0 || twist.gauge_winding != [0, 0] {
        return Err(Error::Unsupported("twisted Dirac operators on the b-cylinder".into()));
    }
    let supertraces = times
        .iter()
        .map(|t| Ok(b_heat_trace(geom, *t)?.value * (1.0 - 1.0)))
        .collect::<Result<Vec<f64>>>()?;
    let geometric = top_degree_integral_field(
        |_| Ok(FormPolynomial::<Complex64>::one(2, ())),
        2,
        geom,
        Normalization::Characteristic,
    )?
    .re;
    Ok(IndexReport {
        schema_version: SCHEMA_VERSION,
        geometry: geom.kind().clone(),
        resolution: geom.resolution().to_vec(),
        twist_degree: 0,
        gauge_winding: [0, 0],
        branch: Branch::Diagnostic,
        spectral_index: None,
        kernel: None,
        kernel_threshold: None,
        times: times.to_vec(),
        supertraces,
        geometric,
        geometric_exact: None,
        eta: None,
        eta_tail_bound: None,
        residuals: None,
        tolerances: tol,
        checks: vec![],
        passed: true,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PscReport {
    pub schema_version: u32,
    pub geometry: GeometryKind,
    pub resolution: Vec<usize>,
    pub scalar_curvature_min: f64,
    /// `√(κ_min)/2`, from `D² ≥ κ/4`.
    pub lichnerowicz_bound: f64,
    /// `√(n κ_min / 4(n−1))`, the sharp bound on round spheres.
    pub sharp_bound: f64,
    /// `sharp_bound − 2h²/r` with `h` the polar grid step.
    pub window: f64,
    pub min_abs_eigenvalue: f64,
    pub kernel_dimension: usize,
    pub index: i64,
    pub a_hat_integral: f64,
    pub eta: f64,
    pub checks: Vec<Check>,
    pub passed: bool,
}

/// Spectral gap and vanishing index of the untwisted Dirac operator on a
/// closed model of positive scalar curvature.
pub fn psc_obstruction_check(geom: &ModelGeometry) -> Result<PscReport> {
    let kappa = geom.scalar_curvature();
    if !(kappa > 0.0) {
        return Err(Error::Precondition(format!(
            "{} has scalar curvature {kappa}, the obstruction needs κ > 0",
            geom.label()
        )));
    }
    let GeometryKind::RoundSphere { radius } = geom.kind() else {
        return Err(Error::Unsupported(format!("obstruction check on {}", geom.label())));
    };
    let n = geom.dim() as f64;
    let assembly = build_dirac_with(geom, TwistSpec::degree(0))?;
    let spectral = spectrum(&assembly, SpectrumOptions::default())?;
    let index = spectral_index(&spectral)?;
    let h = match assembly.discretization() {
        Discretization::Sphere { n_theta, .. } => PI / *n_theta as f64,
        _ => 0.0,
    };
    let sharp = (n * kappa / (4.0 * (n - 1.0))).sqrt();
    let window = sharp - 2.0 * h * h / radius;
    let min = spectral.min_abs_eigenvalue();
    let a_hat_integral = geometric_integral(&assembly)?;
    let eta = eta_integral(&spectral, ETA_T_MAX, ETA_PANELS)?;
    let checks = vec![
        Check {
            name: "spectral_window".into(),
            value: min,
            tolerance: window,
            passed: min >= window,
        },
        Check::new("index", index as f64, 0.0),
        Check::new("a_hat_integral", a_hat_integral, 1e-12),
        Check::new("eta", eta.value.abs() + eta.tail_bound, 1e-10),
    ];
    let passed = checks.iter().all(|c| c.passed) && spectral.kernel_dimension() == 0;
    Ok(PscReport {
        schema_version: SCHEMA_VERSION,
        geometry: geom.kind().clone(),
        resolution: geom.resolution().to_vec(),
        scalar_curvature_min: kappa,
        lichnerowicz_bound: 0.5 * kappa.sqrt(),
        sharp_bound: sharp,
        window,
        min_abs_eigenvalue: min,
        kernel_dimension: spectral.kernel_dimension(),
        index,
        a_hat_integral,
        eta: eta.value,
        checks,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::GeometrySpec;

    fn torus(res: usize) -> ModelGeometry {
        GeometrySpec::flat_torus(vec![2.0 * PI, 2.0 * PI], res).build().unwrap()
    }

    #[test]
    fn torus_index_report() {
        let g = torus(8);
        for d in -3..=3 {
            let r = verify_index_theorem(&g, TwistSpec::degree(d), &DEFAULT_TIMES).unwrap();
            assert!(r.passed, "{d}: {:?}", r.checks);
            assert_eq!(r.spectral_index, Some(d));
            assert_eq!(r.geometric_exact.as_deref(), Some(d.to_string().as_str()));
        }
    }

    #[test]
    fn sphere_reports_and_obstruction() {
        let g = GeometrySpec::round_sphere(1.0, 40).build().unwrap();
        let r = verify_index_theorem(&g, TwistSpec::degree(0), &DEFAULT_TIMES).unwrap();
        assert!(r.passed, "{:?}", r.checks);
        assert_eq!(r.spectral_index, Some(0));
        let p = psc_obstruction_check(&g).unwrap();
        assert!(p.passed, "{p:?}");
        assert!(p.min_abs_eigenvalue >= p.lichnerowicz_bound);
        assert!(matches!(psc_obstruction_check(&torus(8)), Err(Error::Precondition(_))));
        let r2 = verify_index_theorem(&g, TwistSpec::degree(2), &DEFAULT_TIMES).unwrap();
        assert_eq!(r2.spectral_index, Some(2));
        assert!(r2.passed, "{:?}", r2.checks);
    }

    #[test]
    fn ambiguous_gap_is_reported() {
        let a = build_dirac_with(&torus(8), TwistSpec::degree(1)).unwrap();
        let mut s = spectrum(&a, SpectrumOptions::default()).unwrap();
        let (_, above) = s.gap();
        s.set_threshold(above * 1.01);
        assert!(matches!(spectral_index(&s), Err(Error::AmbiguousGap { .. })));
    }

    #[test]
    fn b_cylinder_is_diagnostic() {
        let g = GeometrySpec::b_cylinder(2.0 * PI, 1.0, 8).build().unwrap();
        let r = verify_index_theorem(&g, TwistSpec::degree(0), &DEFAULT_TIMES).unwrap();
        assert_eq!(r.branch, Branch::Diagnostic);
        assert!(r.spectral_index.is_none());
        assert!(r.geometric.abs() < 1e-8);
    }
}
