//! Twisted spin Dirac operators on the 2-dimensional models, their connection
//! Laplacians, the curvature split and the Lichnerowicz residual.
//!
//! Conventions (n = 2): `c(e1) = iσx`, `c(e2) = iσy`, grading `Γ = σz`
//! (positive chirality is the upper spinor component). The twisting line
//! bundle of degree `d` has curvature `F(e1, e2) = −2πi d / Area`, so that
//! `∫ (i/2π) F = d` and the kernel sits in positive chirality for `d > 0`.
//!
//! Discretizations:
//! - flat torus, `d = 0`: plane waves, one 2×2 block per momentum;
//! - flat torus, `d ≠ 0`: Landau levels. Each level is `|d|`-fold degenerate
//!   (magnetic translations), and `D` couples level `k` of the zero-mode
//!   chirality with level `k − 1` of the other one;
//! - round sphere: exact azimuthal Fourier modes `e^{imφ}`, `m ∈ ℤ + ½ + d/2`,
//!   and a staggered second-order finite-difference grid in `θ`
//!   (upper component on the nodes `jh`, lower component on `(j − ½)h`).

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::charclass::{top_degree_integral, FormPolynomial, Normalization};
use crate::clifford::{CliffordElement, MetricForm, SpinRepresentation};
use crate::error::{Error, Result};
use crate::geometry::{GeometryKind, ModelGeometry};
use crate::linalg::{self, Block, BlockOperator, CMatrix};

pub const DEFAULT_SIZE_CAP: usize = 16384;
pub const MAX_TWIST_DEGREE: i64 = 8;

/// Twisting line bundle: degree and an exact gauge transformation
/// `e^{2πi (w1 x1/L1 + w2 x2/L2)}` applied to the connection (torus only).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TwistSpec {
    pub degree: i64,
    pub gauge_winding: [i64; 2],
}

impl TwistSpec {
    pub fn degree(d: i64) -> Self {
        Self {
            degree: d,
            gauge_winding: [0, 0],
        }
    }
}

/// One invariant subspace of the discretized operator.
#[derive(Clone, Debug)]
pub struct SectorBlock {
    pub label: String,
    pub multiplicity: usize,
    pub dirac: CMatrix,
    pub laplacian: CMatrix,
    /// `c(F) + κ/4`, diagonal.
    pub endomorphism: CMatrix,
    /// Diagonal of the grading operator.
    pub grading: Vec<f64>,
}

/// Unnormalized finite-difference data of one azimuthal sector on the sphere.
#[derive(Clone, Debug)]
pub struct SphereSector {
    pub m: f64,
    pub u_nodes: Vec<f64>,
    pub v_nodes: Vec<f64>,
    pub w_u: Vec<f64>,
    pub w_v: Vec<f64>,
    /// `D` from upper to lower component, `N_v × N_u`.
    pub b: DMatrix<f64>,
    pub lap_u: DMatrix<f64>,
    pub lap_v: DMatrix<f64>,
    pub endo_u: f64,
    pub endo_v: f64,
}

#[derive(Clone, Debug)]
pub enum Discretization {
    PlaneWave { cutoff: [usize; 2] },
    Landau { levels: usize, field: f64 },
    Sphere { n_theta: usize, sectors: Vec<SphereSector> },
}

/// Discretized twisted Dirac operator with grading, connection Laplacian
/// and curvature endomorphism, stored block-diagonally.
#[derive(Clone, Debug)]
pub struct DiracAssembly {
    geom: ModelGeometry,
    twist: TwistSpec,
    blocks: Vec<SectorBlock>,
    discretization: Discretization,
}

pub fn build_dirac(geom: &ModelGeometry, twist_degree: i64) -> Result<DiracAssembly> {
    build_dirac_with(geom, TwistSpec::degree(twist_degree))
}

pub fn build_dirac_with(geom: &ModelGeometry, twist: TwistSpec) -> Result<DiracAssembly> {
    if twist.degree.abs() > MAX_TWIST_DEGREE {
        return Err(Error::InvalidParameter(format!(
            "twist degree {} outside the supported range ±{MAX_TWIST_DEGREE}",
            twist.degree
        )));
    }
    let (blocks, discretization) = match geom.kind() {
        GeometryKind::FlatTorus { periods } if periods.len() == 2 => {
            let l = [periods[0], periods[1]];
            let res = geom.resolution();
            if twist.degree == 0 {
                let cutoff = [res[0], res[1]];
                (plane_wave_blocks(l, cutoff, twist.gauge_winding), Discretization::PlaneWave { cutoff })
            } else {
                let levels = res[0] * res[1];
                let field = 2.0 * PI * twist.degree as f64 / (l[0] * l[1]);
                (landau_blocks(twist.degree, field, levels), Discretization::Landau { levels, field })
            }
        }
        GeometryKind::RoundSphere { radius } => {
            if twist.gauge_winding != [0, 0] {
                return Err(Error::Unsupported("gauge windings on the sphere".into()));
            }
            let n_theta = geom.resolution()[0];
            let modes = geom.resolution()[1];
            if (modes as i64) < twist.degree.abs() {
                return Err(Error::InvalidParameter(format!(
                    "need at least |d| = {} azimuthal modes, got {modes}",
                    twist.degree.abs()
                )));
            }
            let sectors = sphere_sectors(*radius, twist.degree, n_theta, modes);
            let blocks = sectors.iter().map(sphere_block).collect();
            (blocks, Discretization::Sphere { n_theta, sectors })
        }
        _ => {
            return Err(Error::Unsupported(format!(
                "Dirac operator on {} of dimension {}",
                geom.label(),
                geom.dim()
            )))
        }
    };
    Ok(DiracAssembly {
        geom: geom.clone(),
        twist,
        blocks,
        discretization,
    })
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn diag(v: &[f64]) -> CMatrix {
    CMatrix::from_fn(v.len(), v.len(), |r, s| if r == s { c(v[r], 0.0) } else { c(0.0, 0.0) })
}

fn plane_wave_blocks(l: [f64; 2], cutoff: [usize; 2], w: [i64; 2]) -> Vec<SectorBlock> {
    let (k1max, k2max) = (cutoff[0] as i64, cutoff[1] as i64);
    let mut out = Vec::new();
    for n1 in -k1max..=k1max {
        for n2 in -k2max..=k2max {
            let k1 = 2.0 * PI * (n1 + w[0]) as f64 / l[0];
            let k2 = 2.0 * PI * (n2 + w[1]) as f64 / l[1];
            // D = −(k1 σx + k2 σy) on e^{ik·x}
            let dirac = CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(-k1, k2), c(-k1, -k2), c(0.0, 0.0)]);
            let k2sum = k1 * k1 + k2 * k2;
            out.push(SectorBlock {
                label: format!("n=({n1},{n2})"),
                multiplicity: 1,
                dirac,
                laplacian: diag(&[k2sum, k2sum]),
                endomorphism: diag(&[0.0, 0.0]),
                grading: vec![1.0, -1.0],
            });
        }
    }
    out
}

fn landau_blocks(d: i64, field: f64, levels: usize) -> Vec<SectorBlock> {
    let b = field.abs();
    let chi = field.signum();
    let mult = d.unsigned_abs() as usize;
    let mut out = Vec::with_capacity(levels + 1);
    out.push(SectorBlock {
        label: "level 0".into(),
        multiplicity: mult,
        dirac: CMatrix::zeros(1, 1),
        laplacian: diag(&[b]),
        endomorphism: diag(&[-b]),
        grading: vec![chi],
    });
    for k in 1..=levels {
        let kf = k as f64;
        let s = -(2.0 * b * kf).sqrt();
        out.push(SectorBlock {
            label: format!("level {k}"),
            multiplicity: mult,
            dirac: CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(s, 0.0), c(s, 0.0), c(0.0, 0.0)]),
            laplacian: diag(&[b * (2.0 * kf + 1.0), b * (2.0 * kf - 1.0)]),
            endomorphism: diag(&[-b, b]),
            grading: vec![chi, -chi],
        });
    }
    out
}

/// Azimuthal quantum numbers `m ∈ ℤ + ½ + q` with `|m| < modes/2 + ¼`.
fn azimuthal_modes(q: f64, modes: usize) -> Vec<f64> {
    let bound = modes as f64 / 2.0 + 0.25;
    let base = 0.5 + q;
    let lo = (-bound - base).ceil() as i64;
    let hi = (bound - base).floor() as i64;
    (lo..=hi).map(|j| j as f64 + base).filter(|m| m.abs() < bound).collect()
}

fn sphere_sectors(radius: f64, d: i64, n: usize, modes: usize) -> Vec<SphereSector> {
    let q = d as f64 / 2.0;
    azimuthal_modes(q, modes)
        .into_par_iter()
        .map(|m| sphere_sector(radius, q, m, n))
        .collect()
}

fn sphere_sector(radius: f64, q: f64, m: f64, n: usize) -> SphereSector {
    let h = PI / n as f64;
    let mu0 = m + q;
    let mupi = m - q;
    let first = if mu0 > 0.0 { 0 } else { 1 };
    let last = if mupi < 0.0 { n } else { n - 1 };
    let u_idx: Vec<usize> = (first..=last).collect();
    let u_nodes: Vec<f64> = u_idx.iter().map(|j| *j as f64 * h).collect();
    let v_nodes: Vec<f64> = (1..=n).map(|j| (j as f64 - 0.5) * h).collect();
    let w_u: Vec<f64> = u_nodes
        .iter()
        .map(|t| (t - 0.5 * h).max(0.0).cos() - (t + 0.5 * h).min(PI).cos())
        .collect();
    let w_v: Vec<f64> = (1..=n)
        .map(|j| ((j - 1) as f64 * h).cos() - (j as f64 * h).cos())
        .collect();
    let col = |j: usize| u_idx.iter().position(|k| *k == j);
    let nu = u_idx.len();

    let mut b = DMatrix::<f64>::zeros(n, nu);
    for (row, t) in v_nodes.iter().enumerate() {
        let (s, co) = t.sin_cos();
        let a = 0.5 * co / s - (m + q * co) / s;
        let j = row + 1;
        if let Some(cj) = col(j) {
            b[(row, cj)] += 1.0 / h + 0.5 * a;
        }
        if let Some(cj) = col(j - 1) {
            b[(row, cj)] += -1.0 / h + 0.5 * a;
        }
    }
    b /= radius;

    let r2 = radius * radius;
    let mut lap_u = DMatrix::<f64>::zeros(nu, nu);
    for (i, &j) in u_idx.iter().enumerate() {
        let t = j as f64 * h;
        let right = if j < n { (t + 0.5 * h).sin() } else { 0.0 };
        let left = if j > 0 { (t - 0.5 * h).sin() } else { 0.0 };
        let w = w_u[i];
        lap_u[(i, i)] = (right + left) / (h * w);
        if let Some(cj) = col(j + 1) {
            lap_u[(i, cj)] = -right / (h * w);
        }
        if j > 0 {
            if let Some(cj) = col(j - 1) {
                lap_u[(i, cj)] = -left / (h * w);
            }
        }
        if j > 0 && j < n {
            let (s, co) = t.sin_cos();
            let pot = m + q * co - 0.5 * co;
            lap_u[(i, i)] += pot * pot / (s * s);
        }
    }
    lap_u /= r2;

    let mut lap_v = DMatrix::<f64>::zeros(n, n);
    for (i, t) in v_nodes.iter().enumerate() {
        let right = (t + 0.5 * h).sin().max(0.0);
        let left = (t - 0.5 * h).sin().max(0.0);
        let w = w_v[i];
        let right = if i + 1 < n { right } else { 0.0 };
        let left = if i > 0 { left } else { 0.0 };
        lap_v[(i, i)] = (right + left) / (h * w);
        if i + 1 < n {
            lap_v[(i, i + 1)] = -right / (h * w);
        }
        if i > 0 {
            lap_v[(i, i - 1)] = -left / (h * w);
        }
        let (s, co) = t.sin_cos();
        let pot = m + q * co + 0.5 * co;
        lap_v[(i, i)] += pot * pot / (s * s);
    }
    lap_v /= r2;

    SphereSector {
        m,
        u_nodes,
        v_nodes,
        w_u,
        w_v,
        b,
        lap_u,
        lap_v,
        endo_u: (0.5 - q) / r2,
        endo_v: (0.5 + q) / r2,
    }
}

/// Symmetrized block in the orthonormal basis `W^{1/2} ψ`.
fn sphere_block(s: &SphereSector) -> SectorBlock {
    let nu = s.u_nodes.len();
    let nv = s.v_nodes.len();
    let su: Vec<f64> = s.w_u.iter().map(|w| w.sqrt()).collect();
    let sv: Vec<f64> = s.w_v.iter().map(|w| w.sqrt()).collect();
    let bt = DMatrix::<f64>::from_fn(nv, nu, |r, k| sv[r] * s.b[(r, k)] / su[k]);
    let n = nu + nv;
    let mut dirac = CMatrix::zeros(n, n);
    let mut lap = CMatrix::zeros(n, n);
    for r in 0..nv {
        for k in 0..nu {
            dirac[(nu + r, k)] = c(bt[(r, k)], 0.0);
            dirac[(k, nu + r)] = c(bt[(r, k)], 0.0);
        }
    }
    for i in 0..nu {
        for j in 0..nu {
            let v = 0.5 * (su[i] * s.lap_u[(i, j)] / su[j] + su[j] * s.lap_u[(j, i)] / su[i]);
            lap[(i, j)] = c(v, 0.0);
        }
    }
    for i in 0..nv {
        for j in 0..nv {
            let v = 0.5 * (sv[i] * s.lap_v[(i, j)] / sv[j] + sv[j] * s.lap_v[(j, i)] / sv[i]);
            lap[(nu + i, nu + j)] = c(v, 0.0);
        }
    }
    let mut endo = vec![s.endo_u; nu];
    endo.extend(vec![s.endo_v; nv]);
    let mut grading = vec![1.0; nu];
    grading.extend(vec![-1.0; nv]);
    SectorBlock {
        label: format!("m={}", s.m),
        multiplicity: 1,
        dirac,
        laplacian: lap,
        endomorphism: diag(&endo),
        grading,
    }
}

impl DiracAssembly {
    pub fn geometry(&self) -> &ModelGeometry {
        &self.geom
    }

    pub fn twist(&self) -> TwistSpec {
        self.twist
    }

    pub fn twist_degree(&self) -> i64 {
        self.twist.degree
    }

    pub fn blocks(&self) -> &[SectorBlock] {
        &self.blocks
    }

    pub fn discretization(&self) -> &Discretization {
        &self.discretization
    }

    /// Total dimension of the discretized spinor space.
    pub fn size(&self) -> usize {
        self.blocks.iter().map(|b| b.multiplicity * b.grading.len()).sum()
    }

    pub fn area(&self) -> f64 {
        self.geom.volume().unwrap_or(f64::NAN)
    }

    pub fn dirac_operator(&self) -> BlockOperator {
        self.block_operator(|b| b.dirac.clone())
    }

    pub fn grading_operator(&self) -> BlockOperator {
        self.block_operator(|b| diag(&b.grading))
    }

    fn block_operator(&self, f: impl Fn(&SectorBlock) -> CMatrix) -> BlockOperator {
        BlockOperator {
            blocks: self
                .blocks
                .iter()
                .map(|b| Block {
                    multiplicity: b.multiplicity,
                    matrix: f(b),
                })
                .collect(),
        }
    }

    pub fn gradings(&self) -> Vec<Vec<f64>> {
        self.blocks.iter().map(|b| b.grading.clone()).collect()
    }

    /// Largest relative `‖D − D*‖` over blocks.
    pub fn hermiticity_defect(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| linalg::hermitian_defect(&b.dirac))
            .fold(0.0, f64::max)
    }

    /// Largest relative `‖ΓD + DΓ‖` over blocks.
    pub fn grading_defect(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| {
                let g = diag(&b.grading);
                let scale = linalg::max_abs(&b.dirac).max(f64::MIN_POSITIVE);
                linalg::max_abs(&(&g * &b.dirac + &b.dirac * &g)) / scale
            })
            .fold(0.0, f64::max)
    }

    /// `F(e1, e2)` in the orthonormal frame.
    pub fn twist_field(&self) -> Complex64 {
        let d = self.twist.degree as f64;
        match self.geom.kind() {
            GeometryKind::RoundSphere { radius } => c(0.0, -0.5 * d / (radius * radius)),
            _ => c(0.0, -2.0 * PI * d / self.area()),
        }
    }

    /// Twisting curvature `F^{W/S}` as a scalar 2-form in the orthonormal coframe.
    pub fn twist_curvature(&self) -> FormPolynomial<Complex64> {
        FormPolynomial::monomial(2, &[0, 1], self.twist_field()).expect("dimension 2")
    }

    /// Connection 1-form `(ω(e1), ω(e2))` on spinors ⊗ twist at a chart point.
    pub fn connection_form(&self, x: &[f64]) -> [CMatrix; 2] {
        let sz = diag(&[1.0, -1.0]);
        let id = CMatrix::identity(2, 2);
        match self.geom.kind() {
            GeometryKind::RoundSphere { radius } => {
                let q = self.twist.degree as f64 / 2.0;
                let (s, co) = x[0].sin_cos();
                let w2 = (&id * c(q, 0.0) - &sz * c(0.5, 0.0)) * c(0.0, co / (radius * s));
                [CMatrix::zeros(2, 2), w2]
            }
            GeometryKind::FlatTorus { periods } => {
                let b = self.twist_field().im;
                let w = self.twist.gauge_winding;
                let a1 = 2.0 * PI * w[0] as f64 / periods[0];
                let a2 = 2.0 * PI * w[1] as f64 / periods[1] + b * x[0];
                [&id * c(0.0, a1), &id * c(0.0, a2)]
            }
            _ => [CMatrix::zeros(2, 2), CMatrix::zeros(2, 2)],
        }
    }

    /// `Ω(e1, e2)` of the connection by central differences of the connection form.
    fn connection_curvature(&self, x: &[f64], h: f64) -> CMatrix {
        // five-point central differences
        let partial = |axis: usize, slot: usize| {
            let at = |k: f64| {
                let mut y = x.to_vec();
                y[axis] += k * h;
                self.connection_form(&y)[slot].clone()
            };
            (at(-2.0) - at(2.0) + (at(1.0) - at(-1.0)) * c(8.0, 0.0)) / c(12.0 * h, 0.0)
        };
        let w = self.connection_form(x);
        let d1w2 = partial(0, 1);
        let d2w1 = partial(1, 0);
        let comm = &w[0] * &w[1] - &w[1] * &w[0];
        match self.geom.kind() {
            GeometryKind::RoundSphere { radius } => {
                // e1 = ∂θ/r, e2 = ∂φ/(r sinθ), [e1, e2] = −(cot θ / r) e2
                let cot = x[0].cos() / x[0].sin();
                d1w2 / c(*radius, 0.0) - d2w1 / c(radius * x[0].sin(), 0.0) + comm + &w[1] * c(cot / radius, 0.0)
            }
            _ => d1w2 - d2w1 + comm,
        }
    }
}

/// Connection Laplacian `Δ^W`, block-diagonal like `D`.
pub fn connection_laplacian(assembly: &DiracAssembly) -> BlockOperator {
    assembly.block_operator(|b| b.laplacian.clone())
}

/// Riemannian and twisting parts of the curvature of `∇^W`.
#[derive(Clone, Debug)]
pub struct CurvatureSplit {
    /// `R^W(e1, e2) = ¼ Σ_{kl} g(R(e1, e2) e_k, e_l) e_k e_l`.
    pub riemann: CliffordElement<Complex64>,
    /// `F^{W/S}` in the orthonormal coframe.
    pub twist: FormPolynomial<Complex64>,
    /// Largest `‖Ω(e1, e2) − c(R^W) − F(e1, e2)‖` over the sample grid, with
    /// `Ω` computed from the connection form by finite differences.
    pub split_residual: f64,
    /// Largest `‖[F(e1, e2), c(e_i)]‖`.
    pub commutator_residual: f64,
    /// `∫ (i/2π) F`.
    pub flux: Complex64,
}

pub fn curvature_split(assembly: &DiracAssembly) -> Result<CurvatureSplit> {
    let geom = assembly.geometry();
    let g = MetricForm::<Complex64>::identity(2);
    let samples = geom.sample_points();
    let curv = geom.curvature(&samples[0]);
    let mut riemann = CliffordElement::zero(2);
    for k in 0..2 {
        for l in 0..2 {
            let coeff = curv.riemann_frame(l, k, 0, 1);
            if coeff == 0.0 {
                continue;
            }
            let ek = CliffordElement::generator(2, k)?;
            let el = CliffordElement::generator(2, l)?;
            let term = ek.mul(&el, &g)?.scale(&c(0.25 * coeff, 0.0));
            riemann = riemann.add(&term)?;
        }
    }
    let spin = SpinRepresentation::new(2)?;
    let rw = spin.represent(&riemann);
    let f12 = assembly.twist_field();
    let fmat = CMatrix::identity(2, 2) * f12;
    let expected = &rw + &fmat;
    let split_residual = samples
        .iter()
        .map(|x| {
            // the sphere connection form is singular at the poles; keep the step relative
            let h = match geom.kind() {
                GeometryKind::RoundSphere { .. } => 1e-3 * x[0].sin(),
                _ => 1e-3,
            };
            linalg::max_abs(&(assembly.connection_curvature(x, h) - &expected))
        })
        .fold(0.0, f64::max);
    let commutator_residual = (0..2)
        .map(|i| {
            let ci = spin.generator(i);
            linalg::max_abs(&(&fmat * ci - ci * &fmat))
        })
        .fold(0.0, f64::max);
    let twist = assembly.twist_curvature();
    let flux = top_degree_integral(&twist, geom, Normalization::Raw)? * c(0.0, 1.0 / (2.0 * PI));
    Ok(CurvatureSplit {
        riemann,
        twist,
        split_residual,
        commutator_residual,
        flux,
    })
}

/// Size of `D² − Δ^W − c(F) − κ/4`.
///
/// Torus: the exact operator norm (the bases are exact). Sphere: the largest
/// weighted `L²` norm over a fixed family of smooth sections with the correct
/// pole behaviour, measured on the band `θ ∈ [π/6, 5π/6]` and relative to the
/// section norm; this converges at second order in `h = π/N_θ`.
pub fn lichnerowicz_residual(assembly: &DiracAssembly) -> Result<f64> {
    match assembly.discretization() {
        Discretization::Sphere { sectors, .. } => {
            let q = assembly.twist_degree() as f64 / 2.0;
            let mut worst: f64 = 0.0;
            for s in sectors.iter().filter(|s| s.m.abs() <= 2.5) {
                for cc in [0.0, 0.4] {
                    worst = worst.max(sphere_section_residual(s, q, cc));
                }
            }
            Ok(worst)
        }
        _ => {
            let norms: Vec<Result<f64>> = assembly
                .blocks()
                .par_iter()
                .map(|b| {
                    let r = &b.dirac * &b.dirac - &b.laplacian - &b.endomorphism;
                    linalg::hermitian_norm(&r)
                })
                .collect();
            norms.into_iter().try_fold(0.0f64, |acc, v| Ok(acc.max(v?)))
        }
    }
}

fn sphere_section_residual(s: &SphereSector, q: f64, cc: f64) -> f64 {
    let mu0 = s.m + q;
    let mupi = s.m - q;
    let sg = |x: f64| if x > 0.0 { 1.0 } else { -1.0 };
    let u0 = mu0.abs() - 0.5 * sg(mu0);
    let v0 = mu0.abs() + 0.5 * sg(mu0);
    let upi = mupi.abs() + 0.5 * sg(mupi);
    let vpi = mupi.abs() - 0.5 * sg(mupi);
    let section = |t: f64, a: f64, b: f64| (0.5 * t).sin().powf(a) * (0.5 * t).cos().powf(b) * (1.0 + cc * t.cos());
    let u = nalgebra::DVector::from_iterator(s.u_nodes.len(), s.u_nodes.iter().map(|t| section(*t, u0, upi)));
    let v = nalgebra::DVector::from_iterator(s.v_nodes.len(), s.v_nodes.iter().map(|t| section(*t, v0, vpi)));
    let wu = nalgebra::DVector::from_column_slice(&s.w_u);
    let wv = nalgebra::DVector::from_column_slice(&s.w_v);
    // weighted adjoint B† = W_u⁻¹ Bᵀ W_v
    let bu = &s.b * &u;
    let dd_u = (s.b.transpose() * bu.component_mul(&wv)).component_div(&wu);
    let bt_v = (s.b.transpose() * v.component_mul(&wv)).component_div(&wu);
    let dd_v = &s.b * bt_v;
    let ru = dd_u - &s.lap_u * &u - &u * s.endo_u;
    let rv = dd_v - &s.lap_v * &v - &v * s.endo_v;
    let band = |t: f64| t >= PI / 6.0 - 1e-12 && t <= 5.0 * PI / 6.0 + 1e-12;
    let mut num = 0.0;
    for (i, t) in s.u_nodes.iter().enumerate() {
        if band(*t) {
            num += s.w_u[i] * ru[i] * ru[i];
        }
    }
    for (i, t) in s.v_nodes.iter().enumerate() {
        if band(*t) {
            num += s.w_v[i] * rv[i] * rv[i];
        }
    }
    let den: f64 = u.iter().zip(&s.w_u).map(|(x, w)| w * x * x).sum::<f64>()
        + v.iter().zip(&s.w_v).map(|(x, w)| w * x * x).sum::<f64>();
    (num / den).sqrt()
}

/// How the stored eigenvectors relate to pointwise values.
#[derive(Clone, Debug, PartialEq)]
pub enum SpectralBasis {
    /// Homogeneous model: the diagonal of the kernel is determined by the
    /// per-chirality traces divided by the area.
    Homogeneous,
    /// Plane waves `e^{2πi n x/L}/√L` on a circle of length `L`.
    Fourier1d { length: f64, modes: Vec<i64> },
}

/// Eigen-decomposition of one block.
#[derive(Clone, Debug)]
pub struct BlockSpectrum {
    pub label: String,
    pub multiplicity: usize,
    pub values: Vec<f64>,
    pub vectors: CMatrix,
    /// `⟨v, Γ v⟩` for each eigenvector.
    pub chirality: Vec<f64>,
    /// The block's operator matrix.
    pub operator: CMatrix,
    pub grading: Vec<f64>,
}

/// Spectral data of a block-diagonal self-adjoint operator.
#[derive(Clone, Debug)]
pub struct SpectralData {
    pub blocks: Vec<BlockSpectrum>,
    /// Eigenvalues `λ` are those of `D`; heat kernels use `e^{−tλ²}`. If false
    /// the operator is a Laplace-type operator and heat kernels use `e^{−tλ}`.
    pub dirac: bool,
    pub kernel_threshold: f64,
    pub ker_plus: usize,
    pub ker_minus: usize,
    /// Largest `‖Av − λv‖ / ‖v‖` over all eigenpairs.
    pub max_residual: f64,
    pub area: f64,
    pub basis: SpectralBasis,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectrumOptions {
    /// `None`: geometric mean of the magnitudes on both sides of the gap above
    /// the near-zero eigenvalues.
    pub kernel_threshold: Option<f64>,
    /// Largest dense block that may be diagonalized.
    pub size_cap: usize,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        Self {
            kernel_threshold: None,
            size_cap: DEFAULT_SIZE_CAP,
        }
    }
}

/// Dense eigendecomposition of every block of `D`.
pub fn spectrum(assembly: &DiracAssembly, options: SpectrumOptions) -> Result<SpectralData> {
    let blocks: Vec<(String, usize, CMatrix, Vec<f64>)> = assembly
        .blocks()
        .iter()
        .map(|b| (b.label.clone(), b.multiplicity, b.dirac.clone(), b.grading.clone()))
        .collect();
    SpectralData::from_blocks(blocks, true, assembly.area(), SpectralBasis::Homogeneous, options)
}

impl SpectralData {
    pub fn from_blocks(
        blocks: Vec<(String, usize, CMatrix, Vec<f64>)>,
        dirac: bool,
        area: f64,
        basis: SpectralBasis,
        options: SpectrumOptions,
    ) -> Result<Self> {
        if let Some((_, _, m, _)) = blocks.iter().find(|b| b.2.nrows() > options.size_cap) {
            return Err(Error::SizeCapExceeded {
                size: m.nrows(),
                cap: options.size_cap,
            });
        }
        let solved: Vec<Result<BlockSpectrum>> = blocks
            .into_par_iter()
            .map(|(label, multiplicity, operator, grading)| {
                let (values, vectors) = linalg::eigh(&operator)?;
                let chirality = (0..values.len())
                    .map(|k| {
                        vectors
                            .column(k)
                            .iter()
                            .zip(&grading)
                            .map(|(z, g)| g * z.norm_sqr())
                            .sum()
                    })
                    .collect();
                Ok(BlockSpectrum {
                    label,
                    multiplicity,
                    values,
                    vectors,
                    chirality,
                    operator,
                    grading,
                })
            })
            .collect();
        let blocks: Vec<BlockSpectrum> = solved.into_iter().collect::<Result<_>>()?;
        let max_residual = blocks
            .par_iter()
            .map(|b| {
                let lam = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
                    b.values.len(),
                    b.values.iter().map(|v| c(*v, 0.0)),
                ));
                let r = &b.operator * &b.vectors - &b.vectors * lam;
                (0..r.ncols()).map(|k| r.column(k).norm()).fold(0.0, f64::max)
            })
            .reduce(|| 0.0, f64::max);
        let mut out = Self {
            blocks,
            dirac,
            kernel_threshold: 0.0,
            ker_plus: 0,
            ker_minus: 0,
            max_residual,
            area,
            basis,
        };
        let threshold = match options.kernel_threshold {
            Some(t) if t > 0.0 => t,
            Some(t) => return Err(Error::InvalidParameter(format!("kernel threshold must be positive, got {t}"))),
            None => out.default_threshold(),
        };
        out.set_threshold(threshold);
        Ok(out)
    }

    fn default_threshold(&self) -> f64 {
        let mut mags: Vec<f64> = self.blocks.iter().flat_map(|b| b.values.iter().map(|v| v.abs())).collect();
        mags.sort_by(f64::total_cmp);
        let top = mags.last().copied().unwrap_or(1.0).max(f64::MIN_POSITIVE);
        match mags.iter().position(|m| *m > 1e-6 * top) {
            Some(0) => mags[0] * 1e-3,
            Some(i) => (mags[i - 1].max(1e-300) * mags[i]).sqrt(),
            None => top,
        }
    }

    /// Recounts the kernel with a new threshold.
    pub fn set_threshold(&mut self, threshold: f64) {
        let mut plus = 0;
        let mut minus = 0;
        for b in &self.blocks {
            let mut dim = 0;
            let mut tr = 0.0;
            for (v, ch) in b.values.iter().zip(&b.chirality) {
                if v.abs() < threshold {
                    dim += 1;
                    tr += ch;
                }
            }
            let tr = tr.round() as i64;
            let p = ((dim as i64 + tr) / 2) as usize;
            plus += p * b.multiplicity;
            minus += (dim - p) * b.multiplicity;
        }
        self.kernel_threshold = threshold;
        self.ker_plus = plus;
        self.ker_minus = minus;
    }

    pub fn kernel_dimension(&self) -> usize {
        self.ker_plus + self.ker_minus
    }

    /// All eigenvalues with multiplicity, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self
            .blocks
            .iter()
            .flat_map(|b| b.values.iter().flat_map(move |x| std::iter::repeat(*x).take(b.multiplicity)))
            .collect();
        v.sort_by(f64::total_cmp);
        v
    }

    /// Largest magnitude below the threshold and smallest above it.
    pub fn gap(&self) -> (f64, f64) {
        let mut below: f64 = 0.0;
        let mut above = f64::INFINITY;
        for v in self.blocks.iter().flat_map(|b| b.values.iter()) {
            if v.abs() < self.kernel_threshold {
                below = below.max(v.abs());
            } else {
                above = above.min(v.abs());
            }
        }
        (below, above)
    }

    fn heat_weight(&self, lambda: f64, t: f64) -> f64 {
        if self.dirac {
            (-t * lambda * lambda).exp()
        } else {
            (-t * lambda).exp()
        }
    }

    pub fn heat_trace(&self, t: f64) -> f64 {
        self.blocks
            .iter()
            .map(|b| b.multiplicity as f64 * b.values.iter().map(|l| self.heat_weight(*l, t)).sum::<f64>())
            .sum()
    }

    /// `(Tr(e^{−tD²}|_{W+}), Tr(e^{−tD²}|_{W−}))`.
    pub fn chiral_traces(&self, t: f64) -> (f64, f64) {
        let mut p = 0.0;
        let mut m = 0.0;
        for b in &self.blocks {
            for (l, ch) in b.values.iter().zip(&b.chirality) {
                let w = b.multiplicity as f64 * self.heat_weight(*l, t);
                p += w * 0.5 * (1.0 + ch);
                m += w * 0.5 * (1.0 - ch);
            }
        }
        (p, m)
    }

    /// McKean–Singer supertrace `Tr(Γ e^{−tD²})`.
    pub fn heat_supertrace(&self, t: f64) -> f64 {
        let (p, m) = self.chiral_traces(t);
        p - m
    }

    /// Largest `|λ_i + λ_{n−1−i}|` within blocks (odd grading makes each
    /// block spectrum symmetric), and largest `|⟨v, Γ v⟩|` of nonzero modes.
    pub fn pairing_defect(&self) -> (f64, f64) {
        let mut sym: f64 = 0.0;
        let mut chi: f64 = 0.0;
        for b in &self.blocks {
            let n = b.values.len();
            for i in 0..n {
                sym = sym.max((b.values[i] + b.values[n - 1 - i]).abs());
                if b.values[i].abs() >= self.kernel_threshold {
                    chi = chi.max(b.chirality[i].abs());
                }
            }
        }
        (sym, chi)
    }

    pub fn min_abs_eigenvalue(&self) -> f64 {
        self.blocks
            .iter()
            .flat_map(|b| b.values.iter())
            .map(|v| v.abs())
            .fold(f64::INFINITY, f64::min)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::GeometrySpec;

    fn torus(res: usize) -> ModelGeometry {
        GeometrySpec::flat_torus(vec![2.0 * PI, 2.0 * PI], res).build().unwrap()
    }

    fn sphere(n: usize, modes: usize) -> ModelGeometry {
        GeometrySpec::round_sphere(1.0, n)
            .with_resolution(vec![n, modes])
            .build()
            .unwrap()
    }

    #[test]
    fn flat_torus_untwisted_spectrum() {
        let a = build_dirac(&torus(4), 0).unwrap();
        assert!(a.hermiticity_defect() < 1e-14 && a.grading_defect() < 1e-14);
        let s = spectrum(&a, SpectrumOptions::default()).unwrap();
        let mut squares: Vec<f64> = s.eigenvalues().iter().map(|l| l * l).collect();
        squares.sort_by(f64::total_cmp);
        let mut want: Vec<f64> = Vec::new();
        for k in -4i32..=4 {
            for l in -4i32..=4 {
                want.extend([(k * k + l * l) as f64; 2]);
            }
        }
        want.sort_by(f64::total_cmp);
        for (a, b) in squares.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!((s.ker_plus, s.ker_minus), (1, 1));
    }

    #[test]
    fn flat_torus_twisted_index() {
        for d in [-3i64, -1, 1, 3] {
            let a = build_dirac(&torus(6), d).unwrap();
            let s = spectrum(&a, SpectrumOptions::default()).unwrap();
            assert_eq!(s.ker_plus as i64 - s.ker_minus as i64, d);
            assert!(s.max_residual < 1e-10);
        }
    }

    #[test]
    fn torus_lichnerowicz_is_exact() {
        for d in [0, 2] {
            let a = build_dirac(&torus(6), d).unwrap();
            assert!(lichnerowicz_residual(&a).unwrap() < 1e-10);
        }
    }

    #[test]
    fn flat_laplacian_untwisted() {
        let a = build_dirac(&torus(4), 0).unwrap();
        let lap = connection_laplacian(&a);
        assert!(lap.min_eigenvalue().unwrap() >= -1e-12);
        for b in a.blocks() {
            assert_eq!(b.laplacian[(0, 0)], b.laplacian[(1, 1)]);
        }
    }

    #[test]
    fn sphere_spectrum_and_index() {
        let a = build_dirac(&sphere(40, 8), 0).unwrap();
        assert!(a.hermiticity_defect() < 1e-12 && a.grading_defect() < 1e-14);
        let s = spectrum(&a, SpectrumOptions::default()).unwrap();
        assert_eq!(s.kernel_dimension(), 0);
        let min = s.min_abs_eigenvalue();
        assert!((min - 1.0).abs() < 2e-3, "{min}");
        for d in [-2i64, 1, 3] {
            let a = build_dirac(&sphere(30, 8), d).unwrap();
            let s = spectrum(&a, SpectrumOptions::default()).unwrap();
            assert_eq!(s.ker_plus as i64 - s.ker_minus as i64, d, "d = {d}");
        }
    }

    #[test]
    fn sphere_laplacian_commutes_with_grading() {
        let a = build_dirac(&sphere(20, 6), 1).unwrap();
        let lap = connection_laplacian(&a);
        assert!(lap.commutator_with_diagonal(&a.gradings()) < 1e-12);
        assert!(lap.min_eigenvalue().unwrap() > -1e-8);
    }

    #[test]
    fn curvature_split_examples() {
        let split = curvature_split(&build_dirac(&torus(4), 0).unwrap()).unwrap();
        assert!(split.riemann.is_zero() && split.twist.is_zero());
        let split = curvature_split(&build_dirac(&torus(4), 2).unwrap()).unwrap();
        assert!(split.riemann.is_zero());
        assert!((split.flux - c(2.0, 0.0)).norm() < 1e-10);
        assert!(split.split_residual < 1e-8 && split.commutator_residual == 0.0);
        let split = curvature_split(&build_dirac(&sphere(8, 4), 0).unwrap()).unwrap();
        assert!(split.twist.is_zero());
        // R^W(e1, e2) = −½ e1 e2 for R_1212 = 1
        let e12 = split.riemann.coefficient(0b11);
        assert!((e12 - c(-0.5, 0.0)).norm() < 1e-12);
        assert!(split.split_residual < 1e-7, "{}", split.split_residual);
    }

    #[test]
    fn gauge_winding_preserves_spectrum_near_zero() {
        let g = torus(6);
        let a = spectrum(&build_dirac(&g, 0).unwrap(), SpectrumOptions::default()).unwrap();
        let twist = TwistSpec {
            degree: 0,
            gauge_winding: [1, -2],
        };
        let b = spectrum(&build_dirac_with(&g, twist).unwrap(), SpectrumOptions::default()).unwrap();
        assert_eq!(a.ker_plus, b.ker_plus);
        let low = |s: &SpectralData| s.eigenvalues().into_iter().filter(|l| l.abs() < 3.0).collect::<Vec<_>>();
        assert_eq!(low(&a).len(), low(&b).len());
    }

    #[test]
    fn rejects_unsupported() {
        let s1 = GeometrySpec::flat_torus(vec![1.0], 8).build().unwrap();
        assert!(matches!(build_dirac(&s1, 0), Err(Error::Unsupported(_))));
        assert!(build_dirac(&torus(4), 9).is_err());
    }
}

