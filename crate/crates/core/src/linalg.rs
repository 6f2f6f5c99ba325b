//! Block-diagonal Hermitian operators and dense eigensolvers.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

/// Largest entrywise `|M − M*|`, relative to the largest entry.
pub fn hermitian_defect(m: &CMatrix) -> f64 {
    let scale = max_abs(m).max(f64::MIN_POSITIVE);
    max_abs(&(m - m.adjoint())) / scale
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Eigenvalues (ascending) and orthonormal eigenvectors of a Hermitian matrix.
pub fn eigh(m: &CMatrix) -> Result<(Vec<f64>, CMatrix)> {
    let defect = hermitian_defect(m);
    if defect > 1e-10 {
        return Err(Error::NotHermitian(defect));
    }
    let n = m.nrows();
    if n == 0 {
        return Ok((vec![], CMatrix::zeros(0, 0)));
    }
    let sym = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|a, b| eig.eigenvalues[*a].total_cmp(&eig.eigenvalues[*b]));
    let values = order.iter().map(|i| eig.eigenvalues[*i]).collect();
    let vectors = CMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok((values, vectors))
}

/// Spectral norm of a Hermitian matrix.
pub fn hermitian_norm(m: &CMatrix) -> Result<f64> {
    let (v, _) = eigh(m)?;
    Ok(v.iter().map(|x| x.abs()).fold(0.0, f64::max))
}

/// One diagonal block, repeated `multiplicity` times.
#[derive(Clone, Debug)]
pub struct Block {
    pub multiplicity: usize,
    pub matrix: CMatrix,
}

/// Block-diagonal operator.
#[derive(Clone, Debug)]
pub struct BlockOperator {
    pub blocks: Vec<Block>,
}

impl BlockOperator {
    pub fn size(&self) -> usize {
        self.blocks.iter().map(|b| b.multiplicity * b.matrix.nrows()).sum()
    }

    /// All eigenvalues with multiplicity, ascending.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        let per: Vec<Result<Vec<f64>>> = self
            .blocks
            .par_iter()
            .map(|b| {
                let (v, _) = eigh(&b.matrix)?;
                Ok(v.iter().flat_map(|x| std::iter::repeat(*x).take(b.multiplicity)).collect())
            })
            .collect();
        let mut all = Vec::with_capacity(self.size());
        for v in per {
            all.extend(v?);
        }
        all.sort_by(f64::total_cmp);
        Ok(all)
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(self.eigenvalues()?.first().copied().unwrap_or(0.0))
    }

    /// Largest `‖[self, diag(g)]‖` over blocks, for a diagonal `g` given per block.
    pub fn commutator_with_diagonal(&self, diag: &[Vec<f64>]) -> f64 {
        self.blocks
            .iter()
            .zip(diag)
            .map(|(b, g)| {
                let n = g.len();
                let gm = CMatrix::from_fn(n, n, |r, c| {
                    if r == c {
                        Complex64::new(g[r], 0.0)
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                });
                max_abs(&(&b.matrix * &gm - &gm * &b.matrix))
            })
            .fold(0.0, f64::max)
    }

    pub fn dense(&self, cap: usize) -> Result<CMatrix> {
        let n = self.size();
        if n > cap {
            return Err(Error::SizeCapExceeded { size: n, cap });
        }
        let mut out = CMatrix::zeros(n, n);
        let mut off = 0;
        for b in &self.blocks {
            let k = b.matrix.nrows();
            for _ in 0..b.multiplicity {
                out.view_mut((off, off), (k, k)).copy_from(&b.matrix);
                off += k;
            }
        }
        Ok(out)
    }
}

/// Least-squares polynomial fit with coefficient standard errors.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PolyFit {
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    /// Condition number of the (column-scaled) design matrix.
    pub condition: f64,
    /// Root-mean-square residual.
    pub residual: f64,
}

impl PolyFit {
    pub fn eval(&self, x: f64) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }
}

pub const MAX_FIT_CONDITION: f64 = 1e13;

pub fn polynomial_fit(xs: &[f64], ys: &[f64], degree: usize) -> Result<PolyFit> {
    let m = xs.len().min(ys.len());
    let k = degree + 1;
    if m < k {
        return Err(Error::InsufficientSamples { needed: k, got: m });
    }
    let scale = xs.iter().fold(0.0f64, |a, x| a.max(x.abs())).max(f64::MIN_POSITIVE);
    let a = DMatrix::from_fn(m, k, |r, c| (xs[r] / scale).powi(c as i32));
    let b = DVector::from_column_slice(&ys[..m]);
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition = smax / smin;
    if !(condition < MAX_FIT_CONDITION) {
        return Err(Error::IllConditioned(condition));
    }
    let sol = svd
        .solve(&b, 0.0)
        .map_err(|e| Error::Precondition(e.to_string()))?;
    let resid = (&a * &sol - &b).norm();
    let dof = m - k;
    let sigma2 = if dof > 0 { resid * resid / dof as f64 } else { 0.0 };
    let v_t = svd.v_t.as_ref().expect("requested V");
    let coefficients = (0..k).map(|i| sol[i] / scale.powi(i as i32)).collect();
    let std_errors = (0..k)
        .map(|i| {
            let var: f64 = (0..k).map(|j| (v_t[(j, i)] / svd.singular_values[j]).powi(2)).sum();
            (var * sigma2).sqrt() / scale.powi(i as i32)
        })
        .collect();
    Ok(PolyFit {
        coefficients,
        std_errors,
        condition,
        residual: resid / (m as f64).sqrt(),
    })
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.abs().ln()).collect();
    Ok(polynomial_fit(&lx, &ly, 1)?.coefficients[1])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigh_sorts_and_rejects_non_hermitian() {
        let m = CMatrix::from_row_slice(
            2,
            2,
            &[
                Complex64::new(1.0, 0.0),
                Complex64::new(0.0, -2.0),
                Complex64::new(0.0, 2.0),
                Complex64::new(1.0, 0.0),
            ],
        );
        let (v, vec) = eigh(&m).unwrap();
        assert!((v[0] + 1.0).abs() < 1e-14 && (v[1] - 3.0).abs() < 1e-14);
        let r = &m * &vec - &vec * CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(2, v.iter().map(|x| Complex64::new(*x, 0.0))));
        assert!(max_abs(&r) < 1e-13);
        let mut bad = m.clone();
        bad[(0, 1)] = Complex64::new(5.0, 0.0);
        assert!(matches!(eigh(&bad), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn polynomial_fit_recovers_cubic() {
        let xs: Vec<f64> = (0..20).map(|k| 0.1 * k as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 1.0 - 2.0 * x + 0.5 * x.powi(3)).collect();
        let fit = polynomial_fit(&xs, &ys, 3).unwrap();
        for (a, b) in fit.coefficients.iter().zip([1.0, -2.0, 0.0, 0.5]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(matches!(polynomial_fit(&xs[..2], &ys[..2], 3), Err(Error::InsufficientSamples { .. })));
        let slope = loglog_slope(&[1.0, 2.0, 4.0], &[3.0, 12.0, 48.0]).unwrap();
        assert!((slope - 2.0).abs() < 1e-12);
    }

    #[test]
    fn dense_respects_cap() {
        let op = BlockOperator {
            blocks: vec![Block {
                multiplicity: 3,
                matrix: CMatrix::identity(2, 2),
            }],
        };
        assert_eq!(op.dense(6).unwrap(), CMatrix::identity(6, 6));
        assert!(matches!(op.dense(5), Err(Error::SizeCapExceeded { size: 6, cap: 5 })));
    }
}
