//! Model geometries: flat tori, round 2-spheres, and the b-cylinder
//! `[0, c]_x × S¹` with metric `(dx/x)² + dθ²`.
//!
//! Chart coordinates:
//! - flat torus: `x_i ∈ [0, L_i)`;
//! - round sphere: `(θ, φ) ∈ (0, π) × [0, 2π)`;
//! - b-cylinder: `(x, θ) ∈ (0, c] × [0, L)`, boundary face at `x = 0`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::Rule;

const MIN_RESOLUTION: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeometryKind {
    FlatTorus { periods: Vec<f64> },
    RoundSphere { radius: f64 },
    BCylinder { boundary_length: f64, collar: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometrySpec {
    pub kind: GeometryKind,
    pub resolution: Vec<usize>,
}

impl GeometrySpec {
    pub fn flat_torus(periods: Vec<f64>, resolution: usize) -> Self {
        let n = periods.len();
        Self {
            kind: GeometryKind::FlatTorus { periods },
            resolution: vec![resolution; n],
        }
    }

    pub fn round_sphere(radius: f64, resolution: usize) -> Self {
        Self {
            kind: GeometryKind::RoundSphere { radius },
            resolution: vec![resolution; 2],
        }
    }

    pub fn b_cylinder(boundary_length: f64, collar: f64, resolution: usize) -> Self {
        Self {
            kind: GeometryKind::BCylinder {
                boundary_length,
                collar,
            },
            resolution: vec![resolution; 2],
        }
    }

    pub fn with_resolution(mut self, resolution: Vec<usize>) -> Self {
        self.resolution = resolution;
        self
    }

    pub fn build(&self) -> Result<ModelGeometry> {
        build_geometry(self)
    }
}

pub fn build_geometry(spec: &GeometrySpec) -> Result<ModelGeometry> {
    let dim = match &spec.kind {
        GeometryKind::FlatTorus { periods } => {
            if periods.is_empty() || periods.len() > 2 {
                return Err(Error::Unsupported(format!(
                    "flat torus of dimension {}",
                    periods.len()
                )));
            }
            if let Some(p) = periods.iter().find(|p| !(**p > 0.0 && p.is_finite())) {
                return Err(Error::InvalidParameter(format!("period must be positive, got {p}")));
            }
            periods.len()
        }
        GeometryKind::RoundSphere { radius } => {
            if !(*radius > 0.0 && radius.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "radius must be positive, got {radius}"
                )));
            }
            2
        }
        GeometryKind::BCylinder {
            boundary_length,
            collar,
        } => {
            for (name, v) in [("boundary length", boundary_length), ("collar", collar)] {
                if !(*v > 0.0 && v.is_finite()) {
                    return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
                }
            }
            2
        }
    };
    if spec.resolution.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: spec.resolution.len(),
        });
    }
    if let Some(r) = spec.resolution.iter().find(|r| **r < MIN_RESOLUTION) {
        return Err(Error::InvalidParameter(format!(
            "resolution must be at least {MIN_RESOLUTION}, got {r}"
        )));
    }
    let geom = ModelGeometry {
        kind: spec.kind.clone(),
        dim,
        resolution: spec.resolution.clone(),
    };
    for x in geom.sample_points() {
        let g = geom.metric(&x);
        if !is_positive_definite(&g, dim) {
            return Err(Error::InvalidMetric(format!("not positive definite at {x:?}")));
        }
    }
    Ok(geom)
}

fn is_positive_definite(g: &[f64], n: usize) -> bool {
    match n {
        1 => g[0] > 0.0,
        2 => g[0] > 0.0 && g[0] * g[3] - g[1] * g[2] > 0.0 && (g[1] - g[2]).abs() <= 1e-14 * g[0].abs().max(1.0),
        _ => false,
    }
}

/// Concrete model manifold with an analytic metric and a uniform sample grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelGeometry {
    kind: GeometryKind,
    dim: usize,
    resolution: Vec<usize>,
}

impl ModelGeometry {
    pub fn kind(&self) -> &GeometryKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn resolution(&self) -> &[usize] {
        &self.resolution
    }

    pub fn has_boundary(&self) -> bool {
        matches!(self.kind, GeometryKind::BCylinder { .. })
    }

    pub fn orientation(&self) -> f64 {
        1.0
    }

    pub fn label(&self) -> &'static str {
        match self.kind {
            GeometryKind::FlatTorus { .. } => "flat_torus",
            GeometryKind::RoundSphere { .. } => "round_sphere",
            GeometryKind::BCylinder { .. } => "b_cylinder",
        }
    }

    /// Coordinate extent of each chart axis.
    pub fn extents(&self) -> Vec<(f64, f64)> {
        match &self.kind {
            GeometryKind::FlatTorus { periods } => periods.iter().map(|p| (0.0, *p)).collect(),
            GeometryKind::RoundSphere { .. } => vec![(0.0, PI), (0.0, 2.0 * PI)],
            GeometryKind::BCylinder {
                boundary_length,
                collar,
            } => vec![(0.0, *collar), (0.0, *boundary_length)],
        }
    }

    /// Cell-centred samples in the non-periodic directions, left endpoints in
    /// the periodic ones.
    pub fn axis_samples(&self, axis: usize) -> Vec<f64> {
        let (lo, hi) = self.extents()[axis];
        let n = self.resolution[axis];
        let h = (hi - lo) / n as f64;
        let periodic = self.is_periodic(axis);
        (0..n)
            .map(|j| lo + h * (j as f64 + if periodic { 0.0 } else { 0.5 }))
            .collect()
    }

    pub fn is_periodic(&self, axis: usize) -> bool {
        match self.kind {
            GeometryKind::FlatTorus { .. } => true,
            GeometryKind::RoundSphere { .. } | GeometryKind::BCylinder { .. } => axis == 1,
        }
    }

    pub fn sample_points(&self) -> Vec<Vec<f64>> {
        let axes: Vec<Vec<f64>> = (0..self.dim).map(|a| self.axis_samples(a)).collect();
        let mut out = vec![vec![]];
        for axis in &axes {
            out = out
                .into_iter()
                .flat_map(|p| {
                    axis.iter().map(move |x| {
                        let mut q = p.clone();
                        q.push(*x);
                        q
                    })
                })
                .collect();
        }
        out
    }

    /// Metric coefficients `g_ij(x)`, row-major `n × n`.
    pub fn metric(&self, x: &[f64]) -> Vec<f64> {
        match &self.kind {
            GeometryKind::FlatTorus { periods } => {
                let n = periods.len();
                (0..n * n).map(|k| if k / n == k % n { 1.0 } else { 0.0 }).collect()
            }
            GeometryKind::RoundSphere { radius } => {
                let r2 = radius * radius;
                vec![r2, 0.0, 0.0, r2 * x[0].sin().powi(2)]
            }
            GeometryKind::BCylinder { .. } => vec![1.0 / (x[0] * x[0]), 0.0, 0.0, 1.0],
        }
    }

    /// Riemannian density `√det g` with respect to the chart coordinates.
    pub fn density(&self, x: &[f64]) -> f64 {
        match &self.kind {
            GeometryKind::FlatTorus { .. } => 1.0,
            GeometryKind::RoundSphere { radius } => radius * radius * x[0].sin(),
            GeometryKind::BCylinder { .. } => 1.0 / x[0],
        }
    }

    /// Boundary-defining function; identically 1 on closed models.
    pub fn rho(&self, x: &[f64]) -> f64 {
        match &self.kind {
            GeometryKind::BCylinder { .. } => x[0],
            _ => 1.0,
        }
    }

    pub fn scalar_curvature(&self) -> f64 {
        match &self.kind {
            GeometryKind::RoundSphere { radius } => 2.0 / (radius * radius),
            _ => 0.0,
        }
    }

    /// Total area (closed models), by Gauss–Legendre in non-periodic directions
    /// and the trapezoid rule in periodic ones.
    pub fn volume(&self) -> Result<f64> {
        if self.has_boundary() {
            return Err(Error::Precondition(
                "the b-cylinder has infinite volume; use the renormalized volume".into(),
            ));
        }
        let v = self.integrate(&|x| Ok(Complex64::new(self.density(x), 0.0)))?;
        Ok(v.re)
    }

    /// `∫ f dx` over the chart of a closed model (the density is not applied).
    pub fn integrate(&self, f: &dyn Fn(&[f64]) -> Result<Complex64>) -> Result<Complex64> {
        if self.has_boundary() {
            return Err(Error::Precondition(
                "ordinary integration over the b-cylinder diverges".into(),
            ));
        }
        let axes: Vec<(Vec<f64>, Vec<f64>)> = (0..self.dim)
            .map(|a| {
                let (lo, hi) = self.extents()[a];
                let n = self.resolution[a];
                if self.is_periodic(a) {
                    let h = (hi - lo) / n as f64;
                    (self.axis_samples(a), vec![h; n])
                } else {
                    let r = Rule::composite(lo, hi, 1, n);
                    (r.nodes, r.weights)
                }
            })
            .collect();
        let mut total = Complex64::new(0.0, 0.0);
        let mut idx = vec![0usize; self.dim];
        loop {
            let x: Vec<f64> = idx.iter().enumerate().map(|(a, i)| axes[a].0[*i]).collect();
            let w: f64 = idx.iter().enumerate().map(|(a, i)| axes[a].1[*i]).product();
            total += f(&x)? * w;
            let mut a = 0;
            loop {
                if a == self.dim {
                    return Ok(total);
                }
                idx[a] += 1;
                if idx[a] < axes[a].0.len() {
                    break;
                }
                idx[a] = 0;
                a += 1;
            }
        }
    }

    /// `∫_{x > ε} dμ` on the b-cylinder, computed in the log coordinate `s = log x`.
    pub fn truncated_volume(&self, eps: f64) -> Result<f64> {
        match &self.kind {
            GeometryKind::BCylinder {
                boundary_length,
                collar,
            } => {
                if !(eps > 0.0 && eps < *collar) {
                    return Err(Error::InvalidParameter(format!(
                        "cutoff must lie in (0, collar), got {eps}"
                    )));
                }
                // density dx/x = ds
                let rule = Rule::composite(eps.ln(), collar.ln(), 4, 8);
                Ok(boundary_length * rule.integrate(|_| 1.0))
            }
            _ => self.volume(),
        }
    }

    /// Geodesic distance between chart points.
    pub fn distance(&self, x: &[f64], y: &[f64]) -> f64 {
        match &self.kind {
            GeometryKind::FlatTorus { periods } => periods
                .iter()
                .enumerate()
                .map(|(i, l)| periodic_delta(x[i] - y[i], *l).powi(2))
                .sum::<f64>()
                .sqrt(),
            GeometryKind::RoundSphere { radius } => {
                let c = x[0].cos() * y[0].cos() + x[0].sin() * y[0].sin() * (x[1] - y[1]).cos();
                radius * c.clamp(-1.0, 1.0).acos()
            }
            GeometryKind::BCylinder {
                boundary_length, ..
            } => {
                let ds = x[0].ln() - y[0].ln();
                let dt = periodic_delta(x[1] - y[1], *boundary_length);
                (ds * ds + dt * dt).sqrt()
            }
        }
    }

    /// Injectivity radius (for the b-cylinder: of the periodic direction).
    pub fn injectivity_radius(&self) -> f64 {
        match &self.kind {
            GeometryKind::FlatTorus { periods } => periods.iter().cloned().fold(f64::INFINITY, f64::min) / 2.0,
            GeometryKind::RoundSphere { radius } => PI * radius,
            GeometryKind::BCylinder {
                boundary_length, ..
            } => boundary_length / 2.0,
        }
    }

    /// Analytic curvature at a chart point.
    pub fn curvature(&self, x: &[f64]) -> CurvatureData {
        let n = self.dim;
        let mut data = CurvatureData::zeros(n);
        match &self.kind {
            GeometryKind::FlatTorus { .. } => {}
            GeometryKind::RoundSphere { radius } => {
                let (s, c) = x[0].sin_cos();
                data.set_christoffel(0, 1, 1, -s * c);
                data.set_christoffel(1, 0, 1, c / s);
                data.set_christoffel(1, 1, 0, c / s);
                let g = self.metric(x);
                let k = 1.0 / (radius * radius);
                data.fill_riemann(|i, j, kk, l| {
                    k * (g[i * n + kk] * g[j * n + l] - g[i * n + l] * g[j * n + kk])
                });
            }
            GeometryKind::BCylinder { .. } => {
                data.set_christoffel(0, 0, 0, -1.0 / x[0]);
            }
        }
        data.finish(&self.metric(x));
        data
    }

    /// Curvature from central differences of the metric with step `h`:
    /// Christoffels from first differences, Riemann from differences of those.
    pub fn curvature_fd(&self, x: &[f64], h: f64) -> CurvatureData {
        let n = self.dim;
        let gamma = |p: &[f64]| christoffel_fd(&|q: &[f64]| self.metric(q), p, n, h);
        let g0 = gamma(x);
        let mut dgamma = vec![vec![0.0; n * n * n]; n];
        for (k, dg) in dgamma.iter_mut().enumerate() {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[k] += h;
            xm[k] -= h;
            let gp = gamma(&xp);
            let gm = gamma(&xm);
            for (d, (a, b)) in dg.iter_mut().zip(gp.iter().zip(&gm)) {
                *d = (a - b) / (2.0 * h);
            }
        }
        let idx = |i: usize, j: usize, k: usize| (i * n + j) * n + k;
        let mut data = CurvatureData::zeros(n);
        data.christoffel.clone_from(&g0);
        let g = self.metric(x);
        // R^i_{jkl} = ∂_k Γ^i_{lj} − ∂_l Γ^i_{kj} + Γ^i_{km} Γ^m_{lj} − Γ^i_{lm} Γ^m_{kj}
        let up = |i: usize, j: usize, k: usize, l: usize| {
            let mut v = dgamma[k][idx(i, l, j)] - dgamma[l][idx(i, k, j)];
            for m in 0..n {
                v += g0[idx(i, k, m)] * g0[idx(m, l, j)] - g0[idx(i, l, m)] * g0[idx(m, k, j)];
            }
            v
        };
        data.fill_riemann(|i, j, k, l| (0..n).map(|m| g[i * n + m] * up(m, j, k, l)).sum());
        data.finish(&g);
        data
    }

    /// Geodesic normal chart centred at `x0` covering radius `radius`.
    pub fn normal_coordinates(&self, x0: &[f64], radius: f64) -> Result<NormalChart> {
        if x0.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: x0.len(),
            });
        }
        let limit = self.injectivity_radius();
        if !(radius > 0.0) || radius >= limit {
            return Err(Error::RadiusTooLarge { radius, limit });
        }
        if let GeometryKind::RoundSphere { .. } = self.kind {
            if !(x0[0] > 0.0 && x0[0] < PI) {
                return Err(Error::OutsideChart);
            }
        }
        if let GeometryKind::BCylinder { collar, .. } = self.kind {
            if !(x0[0] > 0.0 && x0[0] <= collar) {
                return Err(Error::OutsideChart);
            }
        }
        Ok(NormalChart {
            geom: self.clone(),
            center: x0.to_vec(),
            radius,
        })
    }
}

fn periodic_delta(d: f64, period: f64) -> f64 {
    d - period * (d / period).round()
}

/// `Γ^k_{ij}` by central differences, stored at `(k * n + i) * n + j`.
fn christoffel_fd(metric: &dyn Fn(&[f64]) -> Vec<f64>, x: &[f64], n: usize, h: f64) -> Vec<f64> {
    let g = metric(x);
    let ginv = invert(&g, n);
    let mut dg = vec![vec![0.0; n * n]; n];
    for (k, d) in dg.iter_mut().enumerate() {
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[k] += h;
        xm[k] -= h;
        let gp = metric(&xp);
        let gm = metric(&xm);
        for (v, (a, b)) in d.iter_mut().zip(gp.iter().zip(&gm)) {
            *v = (a - b) / (2.0 * h);
        }
    }
    let mut out = vec![0.0; n * n * n];
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let mut v = 0.0;
                for l in 0..n {
                    v += 0.5 * ginv[k * n + l] * (dg[i][j * n + l] + dg[j][i * n + l] - dg[l][i * n + j]);
                }
                out[(k * n + i) * n + j] = v;
            }
        }
    }
    out
}

fn invert(g: &[f64], n: usize) -> Vec<f64> {
    match n {
        1 => vec![1.0 / g[0]],
        2 => {
            let det = g[0] * g[3] - g[1] * g[2];
            vec![g[3] / det, -g[1] / det, -g[2] / det, g[0] / det]
        }
        _ => unreachable!("model geometries have dimension at most 2"),
    }
}

/// Christoffel symbols, Riemann tensor (all indices down, coordinate frame),
/// scalar curvature and an orthonormal frame at one point.
///
/// Convention: `R_{ijkl} = g(R(∂_k, ∂_l)∂_j, ∂_i)`, so the unit sphere has
/// `R_{1212} = 1` in an orthonormal frame.
#[derive(Clone, Debug, PartialEq)]
pub struct CurvatureData {
    dim: usize,
    christoffel: Vec<f64>,
    riemann: Vec<f64>,
    scalar: f64,
    frame: Vec<f64>,
}

impl CurvatureData {
    fn zeros(dim: usize) -> Self {
        Self {
            dim,
            christoffel: vec![0.0; dim * dim * dim],
            riemann: vec![0.0; dim.pow(4)],
            scalar: 0.0,
            frame: vec![0.0; dim * dim],
        }
    }

    fn set_christoffel(&mut self, k: usize, i: usize, j: usize, v: f64) {
        let n = self.dim;
        self.christoffel[(k * n + i) * n + j] = v;
    }

    fn fill_riemann(&mut self, f: impl Fn(usize, usize, usize, usize) -> f64) {
        let n = self.dim;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        self.riemann[((i * n + j) * n + k) * n + l] = f(i, j, k, l);
                    }
                }
            }
        }
    }

    fn finish(&mut self, g: &[f64]) {
        let n = self.dim;
        let ginv = invert(g, n);
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        s += ginv[i * n + k] * ginv[j * n + l] * self.riemann(i, j, k, l);
                    }
                }
            }
        }
        self.scalar = s;
        // Gram–Schmidt on the coordinate vectors; frame[a * n + i] = (e_a)^i
        let mut frame = vec![0.0; n * n];
        for a in 0..n {
            let mut v = vec![0.0; n];
            v[a] = 1.0;
            for b in 0..a {
                let eb = &frame[b * n..(b + 1) * n];
                let dot = inner(g, n, &v, eb);
                for i in 0..n {
                    v[i] -= dot * eb[i];
                }
            }
            let norm = inner(g, n, &v, &v).sqrt();
            for i in 0..n {
                frame[a * n + i] = v[i] / norm;
            }
        }
        self.frame = frame;
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `Γ^k_{ij}`.
    pub fn christoffel(&self, k: usize, i: usize, j: usize) -> f64 {
        let n = self.dim;
        self.christoffel[(k * n + i) * n + j]
    }

    pub fn riemann(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        let n = self.dim;
        self.riemann[((i * n + j) * n + k) * n + l]
    }

    /// Riemann tensor in the orthonormal frame.
    pub fn riemann_frame(&self, a: usize, b: usize, c: usize, d: usize) -> f64 {
        let n = self.dim;
        let e = |a: usize, i: usize| self.frame[a * n + i];
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        s += e(a, i) * e(b, j) * e(c, k) * e(d, l) * self.riemann(i, j, k, l);
                    }
                }
            }
        }
        s
    }

    pub fn scalar_curvature(&self) -> f64 {
        self.scalar
    }

    /// Components `(e_a)^i` of the orthonormal frame.
    pub fn frame(&self, a: usize, i: usize) -> f64 {
        self.frame[a * self.dim + i]
    }

    pub fn max_abs_christoffel(&self) -> f64 {
        self.christoffel.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    pub fn max_abs_riemann(&self) -> f64 {
        self.riemann.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    /// Largest violation of `R_{ijkl} = −R_{jikl} = −R_{ijlk}`.
    pub fn antisymmetry_residual(&self) -> f64 {
        let n = self.dim;
        let mut r: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let v = self.riemann(i, j, k, l);
                        r = r.max((v + self.riemann(j, i, k, l)).abs());
                        r = r.max((v + self.riemann(i, j, l, k)).abs());
                    }
                }
            }
        }
        r
    }

    /// Largest `|R_{ijkl} + R_{kijl} + R_{jkil}|`.
    pub fn bianchi_residual(&self) -> f64 {
        let n = self.dim;
        let mut r: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let v = self.riemann(i, j, k, l) + self.riemann(k, i, j, l) + self.riemann(j, k, i, l);
                        r = r.max(v.abs());
                    }
                }
            }
        }
        r
    }

    /// Largest componentwise difference to another curvature sample.
    pub fn max_difference(&self, other: &CurvatureData) -> f64 {
        let a = self.christoffel.iter().zip(&other.christoffel);
        let b = self.riemann.iter().zip(&other.riemann);
        a.chain(b)
            .map(|(x, y)| (x - y).abs())
            .fold((self.scalar - other.scalar).abs(), f64::max)
    }
}

fn inner(g: &[f64], n: usize, u: &[f64], v: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            s += g[i * n + j] * u[i] * v[j];
        }
    }
    s
}

/// Geodesic normal chart. Points are given as normal-coordinate vectors `v`,
/// with `|v|` the geodesic distance to the centre.
#[derive(Clone, Debug)]
pub struct NormalChart {
    geom: ModelGeometry,
    center: Vec<f64>,
    radius: f64,
}

impl NormalChart {
    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn geometry(&self) -> &ModelGeometry {
        &self.geom
    }

    /// `J(p) = det(d Exp)` at geodesic distance `p`; depends only on `p` for the models.
    pub fn jacobian(&self, p: f64) -> f64 {
        match self.geom.kind {
            GeometryKind::RoundSphere { radius } => {
                let u = p / radius;
                if u.abs() < 1e-4 {
                    1.0 - u * u / 6.0 + u.powi(4) / 120.0
                } else {
                    u.sin() / u
                }
            }
            _ => 1.0,
        }
    }

    /// `dJ/dp`.
    pub fn jacobian_derivative(&self, p: f64) -> f64 {
        match self.geom.kind {
            GeometryKind::RoundSphere { radius } => {
                let u = p / radius;
                let d = if u.abs() < 1e-4 {
                    -u / 3.0 + u.powi(3) / 30.0
                } else {
                    (u * u.cos() - u.sin()) / (u * u)
                };
                d / radius
            }
            _ => 0.0,
        }
    }

    /// Metric coefficients in normal coordinates at `v` (polar form `dp² + (G(p)/p)² p² dω²`).
    pub fn metric(&self, v: &[f64]) -> Result<Vec<f64>> {
        let p = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if p > self.radius {
            return Err(Error::OutsideChart);
        }
        let n = v.len();
        let mut g: Vec<f64> = (0..n * n).map(|k| if k / n == k % n { 1.0 } else { 0.0 }).collect();
        if n == 2 && p > 0.0 {
            let ratio = self.jacobian(p).powi(2);
            for i in 0..2 {
                for j in 0..2 {
                    let radial = v[i] * v[j] / (p * p);
                    let delta = if i == j { 1.0 } else { 0.0 };
                    g[i * 2 + j] = radial + ratio * (delta - radial);
                }
            }
        }
        Ok(g)
    }

    /// Model-chart point at normal coordinates `v`.
    pub fn exp(&self, v: &[f64]) -> Result<Vec<f64>> {
        let p = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if p > self.radius {
            return Err(Error::OutsideChart);
        }
        let x0 = &self.center;
        Ok(match self.geom.kind {
            GeometryKind::FlatTorus { .. } => x0.iter().zip(v).map(|(a, b)| a + b).collect(),
            GeometryKind::BCylinder { .. } => vec![x0[0] * v[0].exp(), x0[1] + v[1]],
            GeometryKind::RoundSphere { radius } => {
                // v = (north-pointing θ component, φ-direction component) in the frame at x0
                let ang = p / radius;
                if p == 0.0 {
                    return Ok(x0.clone());
                }
                let (st, ct) = x0[0].sin_cos();
                let e_r = [st * x0[1].cos(), st * x0[1].sin(), ct];
                let e_th = [ct * x0[1].cos(), ct * x0[1].sin(), -st];
                let e_ph = [-x0[1].sin(), x0[1].cos(), 0.0];
                let (sa, ca) = ang.sin_cos();
                let q: Vec<f64> = (0..3)
                    .map(|k| ca * e_r[k] + sa * (v[0] * e_th[k] + v[1] * e_ph[k]) / p)
                    .collect();
                let theta = q[2].clamp(-1.0, 1.0).acos();
                let phi = q[1].atan2(q[0]).rem_euclid(2.0 * PI);
                vec![theta, phi]
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere(r: f64) -> ModelGeometry {
        GeometrySpec::round_sphere(r, 16).build().unwrap()
    }

    #[test]
    fn build_rejects_bad_parameters() {
        assert!(GeometrySpec::round_sphere(-1.0, 8).build().is_err());
        assert!(GeometrySpec::flat_torus(vec![1.0, 0.0], 8).build().is_err());
        assert!(GeometrySpec::round_sphere(1.0, 3).build().is_err());
        assert!(GeometrySpec::b_cylinder(1.0, 0.0, 8).build().is_err());
    }

    #[test]
    fn flat_torus_metric_is_identity_and_flat() {
        let g = GeometrySpec::flat_torus(vec![2.0 * PI; 2], 8).build().unwrap();
        for x in g.sample_points() {
            assert_eq!(g.metric(&x), vec![1.0, 0.0, 0.0, 1.0]);
            let c = g.curvature(&x);
            assert_eq!(c.max_abs_christoffel(), 0.0);
            assert_eq!(c.max_abs_riemann(), 0.0);
            assert_eq!(c.scalar_curvature(), 0.0);
        }
    }

    #[test]
    fn unit_sphere_curvature() {
        let g = sphere(1.0);
        for x in g.sample_points() {
            let c = g.curvature(&x);
            assert!((c.scalar_curvature() - 2.0).abs() < 1e-12);
            assert!((c.riemann_frame(0, 1, 0, 1) - 1.0).abs() < 1e-12);
            assert!(c.bianchi_residual() < 1e-12);
            assert!(c.antisymmetry_residual() < 1e-12);
        }
        let c = sphere(2.0).curvature(&[1.0, 0.0]);
        assert!((c.scalar_curvature() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn b_cylinder_is_flat_in_log_coordinate() {
        let g = GeometrySpec::b_cylinder(2.0 * PI, 1.0, 8).build().unwrap();
        let x = [0.3, 1.0];
        assert_eq!(g.metric(&x), vec![1.0 / 0.09, 0.0, 0.0, 1.0]);
        let c = g.curvature(&x);
        // the only Christoffel symbol is the Jacobian term of x = e^s
        assert!((c.christoffel(0, 0, 0) + 1.0 / 0.3).abs() < 1e-12);
        assert_eq!(c.max_abs_riemann(), 0.0);
        assert!(g.curvature_fd(&x, 1e-3).max_abs_riemann() < 1e-5);
    }

    #[test]
    fn finite_difference_curvature_is_second_order() {
        let g = sphere(1.0);
        let x = [1.1, 0.4];
        let exact = g.curvature(&x);
        let errs: Vec<f64> = [0.02, 0.01, 0.005]
            .iter()
            .map(|h| g.curvature_fd(&x, *h).max_difference(&exact))
            .collect();
        for w in errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!((order - 2.0).abs() < 0.1, "order {order}");
        }
        let t = GeometrySpec::flat_torus(vec![1.0, 2.0], 8).build().unwrap();
        assert!(t.curvature_fd(&[0.2, 0.3], 0.01).max_abs_riemann() < 1e-12);
    }

    #[test]
    fn sphere_volume() {
        for r in [1.0, 1.7] {
            let v = sphere(r).volume().unwrap();
            assert!((v - 4.0 * PI * r * r).abs() < 1e-8);
        }
    }

    #[test]
    fn b_cylinder_volume_diverges_logarithmically() {
        let g = GeometrySpec::b_cylinder(2.0, 1.0, 8).build().unwrap();
        let v1 = g.truncated_volume(1e-3).unwrap();
        let v2 = g.truncated_volume(1e-6).unwrap();
        let slope = (v2 - v1) / (1e3f64).ln();
        assert!((slope - 2.0).abs() < 1e-12);
        assert!(g.volume().is_err());
    }

    #[test]
    fn normal_coordinates() {
        let t = GeometrySpec::flat_torus(vec![2.0 * PI; 2], 8).build().unwrap();
        let chart = t.normal_coordinates(&[1.0, 1.0], 1.0).unwrap();
        assert_eq!(chart.jacobian(0.7), 1.0);
        assert_eq!(chart.exp(&[0.5, -0.25]).unwrap(), vec![1.5, 0.75]);

        let s = sphere(1.0);
        assert!(matches!(
            s.normal_coordinates(&[1.0, 0.0], 4.0),
            Err(Error::RadiusTooLarge { .. })
        ));
        let chart = s.normal_coordinates(&[1.0, 0.5], 2.0).unwrap();
        assert_eq!(chart.jacobian(0.0), 1.0);
        assert!(chart.jacobian_derivative(0.0).abs() < 1e-15);
        for p in [0.1, 0.5, 1.5] {
            assert!((chart.jacobian(p) - p.sin() / p).abs() < 1e-14);
        }
        assert_eq!(chart.metric(&[0.0, 0.0]).unwrap(), vec![1.0, 0.0, 0.0, 1.0]);
        // exp moves by geodesic distance |v|
        let y = chart.exp(&[0.3, 0.4]).unwrap();
        assert!((s.distance(chart.center(), &y) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn great_circle_distance() {
        let s = sphere(2.0);
        let d = s.distance(&[PI / 2.0, 0.0], &[PI / 2.0, PI / 2.0]);
        assert!((d - PI).abs() < 1e-12);
    }
}
