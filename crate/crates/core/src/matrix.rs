use std::fmt;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense square matrix over an arbitrary [`Scalar`], row-major.
///
/// Used for endomorphism-valued form coefficients where exact arithmetic is
/// needed; the floating-point pipelines use nalgebra instead.
#[derive(Clone, PartialEq)]
pub struct SquareMatrix<T> {
    size: usize,
    data: Vec<T>,
}

impl<T: Scalar> SquareMatrix<T> {
    pub fn zeros(size: usize) -> Self {
        Self {
            size,
            data: vec![T::zero(); size * size],
        }
    }

    pub fn identity(size: usize) -> Self {
        let mut m = Self::zeros(size);
        for i in 0..size {
            m.data[i * size + i] = T::one();
        }
        m
    }

    pub fn from_fn(size: usize, f: impl Fn(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(size * size);
        for i in 0..size {
            for j in 0..size {
                data.push(f(i, j));
            }
        }
        Self { size, data }
    }

    pub fn from_rows(rows: Vec<Vec<T>>) -> Result<Self> {
        let size = rows.len();
        let mut data = Vec::with_capacity(size * size);
        for row in rows {
            if row.len() != size {
                return Err(Error::ShapeMismatch(size, row.len()));
            }
            data.extend(row);
        }
        Ok(Self { size, data })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, i: usize, j: usize) -> &T {
        &self.data[i * self.size + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.size + j] = v;
    }

    pub fn trace(&self) -> T {
        (0..self.size).fold(T::zero(), |acc, i| acc + self.get(i, i).clone())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.size, |i, j| self.get(j, i).clone())
    }

    pub fn scale(&self, s: &T) -> Self {
        Self {
            size: self.size,
            data: self.data.iter().map(|x| x.clone() * s.clone()).collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|x| *x == T::zero())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|x| x.abs_f64()).fold(0.0, f64::max)
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        self.check(other)?;
        Ok(Self {
            size: self.size,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a.clone() + b.clone())
                .collect(),
        })
    }

    pub fn try_mul(&self, other: &Self) -> Result<Self> {
        self.check(other)?;
        let n = self.size;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.get(i, k);
                if *a == T::zero() {
                    continue;
                }
                for j in 0..n {
                    let v = out.data[i * n + j].clone() + a.clone() * other.get(k, j).clone();
                    out.data[i * n + j] = v;
                }
            }
        }
        Ok(out)
    }

    /// Direct sum `self ⊕ other`.
    pub fn direct_sum(&self, other: &Self) -> Self {
        let n = self.size + other.size;
        Self::from_fn(n, |i, j| {
            if i < self.size && j < self.size {
                self.get(i, j).clone()
            } else if i >= self.size && j >= self.size {
                other.get(i - self.size, j - self.size).clone()
            } else {
                T::zero()
            }
        })
    }

    fn check(&self, other: &Self) -> Result<()> {
        if self.size != other.size {
            return Err(Error::ShapeMismatch(self.size, other.size));
        }
        Ok(())
    }
}

impl<T: fmt::Debug> fmt::Debug for SquareMatrix<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<&[T]> = self.data.chunks(self.size.max(1)).collect();
        f.debug_list().entries(rows).finish()
    }
}
