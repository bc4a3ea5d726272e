//! Dense real vectors and row-major matrices.
//!
//! Everything in scope runs at desk scale (dimensions up to a few hundred),
//! so plain `Vec<f64>` storage with O(d) kernels is all the linear algebra
//! the crate needs.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Dense real vector with finite entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealVec(Vec<f64>);

impl RealVec {
    /// Checked constructor: rejects NaN/Inf entries and zero dimension.
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::argument("RealVec must have positive dimension"));
        }
        if let Some(bad) = entries.iter().position(|v| !v.is_finite()) {
            return Err(Error::argument(format!(
                "RealVec entry {bad} is not finite: {}",
                entries[bad]
            )));
        }
        Ok(RealVec(entries))
    }

    /// Unchecked wrapper for values produced by internal arithmetic.
    pub(crate) fn from_raw(entries: Vec<f64>) -> Self {
        RealVec(entries)
    }

    pub fn zeros(dim: usize) -> Self {
        RealVec(vec![0.0; dim])
    }

    pub fn scalar(v: f64) -> Self {
        RealVec(vec![v])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.0.clone()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn add(&self, other: &RealVec) -> RealVec {
        debug_assert_eq!(self.dim(), other.dim());
        RealVec(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &RealVec) -> RealVec {
        debug_assert_eq!(self.dim(), other.dim());
        RealVec(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn scale(&self, t: f64) -> RealVec {
        RealVec(self.0.iter().map(|a| a * t).collect())
    }

    /// `self + t * other`.
    pub fn axpy(&self, t: f64, other: &RealVec) -> RealVec {
        debug_assert_eq!(self.dim(), other.dim());
        RealVec(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| a + t * b)
                .collect(),
        )
    }

    /// In-place `self += t * other`; avoids allocation in hot loops.
    pub fn axpy_mut(&mut self, t: f64, other: &RealVec) {
        debug_assert_eq!(self.dim(), other.dim());
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += t * b;
        }
    }

    pub fn dot(&self, other: &RealVec) -> f64 {
        debug_assert_eq!(self.dim(), other.dim());
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn dist(&self, other: &RealVec) -> f64 {
        self.sub(other).norm()
    }

    /// Concatenate two vectors (used by joint `(x, y)` updates).
    pub fn stack(&self, other: &RealVec) -> RealVec {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        RealVec(v)
    }

    /// Split a stacked vector back into its two blocks.
    pub fn unstack(&self, first_dim: usize) -> (RealVec, RealVec) {
        debug_assert!(first_dim < self.dim());
        (
            RealVec(self.0[..first_dim].to_vec()),
            RealVec(self.0[first_dim..].to_vec()),
        )
    }
}

impl std::ops::Index<usize> for RealVec {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl std::ops::IndexMut<usize> for RealVec {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

impl From<&[f64]> for RealVec {
    fn from(s: &[f64]) -> Self {
        RealVec(s.to_vec())
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::argument(format!(
                "matrix data length {} does not match {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    /// `A v`.
    pub fn matvec(&self, v: &RealVec) -> RealVec {
        debug_assert_eq!(self.cols, v.dim());
        let out = self
            .data
            .chunks_exact(self.cols)
            .map(|row| row.iter().zip(v.as_slice()).map(|(a, b)| a * b).sum())
            .collect();
        RealVec::from_raw(out)
    }

    /// `A^T v`.
    pub fn matvec_t(&self, v: &RealVec) -> RealVec {
        debug_assert_eq!(self.rows, v.dim());
        let mut out = vec![0.0; self.cols];
        for r in 0..self.rows {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            let w = v.as_slice()[r];
            for (o, a) in out.iter_mut().zip(row) {
                *o += a * w;
            }
        }
        RealVec::from_raw(out)
    }
}
