//! Gauss–Legendre rules and Chebyshev interpolation.

use std::f64::consts::PI;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0, "need at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Gauss–Legendre rule mapped to `[a, b]`, split into `panels` equal panels.
#[derive(Clone, Debug)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn composite(a: f64, b: f64, panels: usize, order: usize) -> Self {
        let (x, w) = gauss_legendre(order);
        let h = (b - a) / panels as f64;
        let mut nodes = Vec::with_capacity(panels * order);
        let mut weights = Vec::with_capacity(panels * order);
        for p in 0..panels {
            let lo = a + p as f64 * h;
            for (xi, wi) in x.iter().zip(&w) {
                nodes.push(lo + 0.5 * h * (xi + 1.0));
                weights.push(0.5 * h * wi);
            }
        }
        Self { nodes, weights }
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(x, w)| w * f(*x)).sum()
    }
}

/// Chebyshev–Lobatto interpolant on `[a, b]` with `n + 1` nodes.
#[derive(Clone, Debug)]
pub struct Chebyshev {
    a: f64,
    b: f64,
    nodes: Vec<f64>,
    bary: Vec<f64>,
}

impl Chebyshev {
    pub fn new(a: f64, b: f64, n: usize) -> Self {
        let nodes: Vec<f64> = (0..=n)
            .map(|j| {
                let x = -(PI * j as f64 / n as f64).cos();
                a + 0.5 * (b - a) * (x + 1.0)
            })
            .collect();
        let bary = (0..=n)
            .map(|j| {
                let s = if j % 2 == 0 { 1.0 } else { -1.0 };
                if j == 0 || j == n {
                    0.5 * s
                } else {
                    s
                }
            })
            .collect();
        Self { a, b, nodes, bary }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    /// Barycentric evaluation of the interpolant through `values`.
    pub fn eval(&self, values: &[f64], x: f64) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for ((xj, wj), fj) in self.nodes.iter().zip(&self.bary).zip(values) {
            let d = x - xj;
            if d == 0.0 {
                return *fj;
            }
            let c = wj / d;
            num += c * fj;
            den += c;
        }
        num / den
    }

    /// Values of the derivative of the interpolant at the nodes.
    pub fn differentiate(&self, values: &[f64]) -> Vec<f64> {
        let n = self.nodes.len();
        let mut out = vec![0.0; n];
        for i in 0..n {
            let mut diag = 0.0;
            let mut acc = 0.0;
            for j in 0..n {
                if i == j {
                    continue;
                }
                let dij = (self.bary[j] / self.bary[i]) / (self.nodes[i] - self.nodes[j]);
                acc += dij * values[j];
                diag -= dij;
            }
            out[i] = acc + diag * values[i];
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(8);
        for k in 0..16 {
            let got: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(k)).sum();
            let want = if k % 2 == 1 { 0.0 } else { 2.0 / (k as f64 + 1.0) };
            assert!((got - want).abs() < 1e-14, "k = {k}");
        }
    }

    #[test]
    fn composite_rule_on_interval() {
        let r = Rule::composite(0.0, PI, 4, 16);
        assert!((r.integrate(f64::sin) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn chebyshev_interpolates_and_differentiates() {
        let c = Chebyshev::new(-1.0, 2.0, 24);
        let v: Vec<f64> = c.nodes().iter().map(|x| x.exp()).collect();
        assert!((c.eval(&v, 0.3) - 0.3f64.exp()).abs() < 1e-13);
        let d = c.differentiate(&v);
        for (x, dv) in c.nodes().iter().zip(&d) {
            assert!((dv - x.exp()).abs() < 1e-10);
        }
    }
}
