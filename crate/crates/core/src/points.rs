//! Flat storage for finite point sets in `R^d`.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// `len` points of dimension `dim`, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Points {
    dim: usize,
    coords: Vec<f64>,
}

impl Points {
    pub fn new(dim: usize) -> Self {
        Self { dim, coords: Vec::new() }
    }

    pub fn with_capacity(dim: usize, len: usize) -> Self {
        Self { dim, coords: Vec::with_capacity(dim * len) }
    }

    pub fn from_flat(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 || coords.len() % dim != 0 {
            return Err(Error::DimensionMismatch { expected: dim, found: coords.len() });
        }
        Ok(Self { dim, coords })
    }

    pub fn from_rows<R: AsRef<[f64]>>(dim: usize, rows: &[R]) -> Result<Self> {
        let mut p = Self::with_capacity(dim, rows.len());
        for r in rows {
            p.push(r.as_ref())?;
        }
        Ok(p)
    }

    pub fn push(&mut self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: x.len() });
        }
        self.coords.extend_from_slice(x);
        Ok(())
    }

    pub fn extend(&mut self, other: &Points) -> Result<()> {
        if other.dim != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: other.dim });
        }
        self.coords.extend_from_slice(&other.coords);
        Ok(())
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn get_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn set(&mut self, i: usize, x: &[f64]) {
        self.get_mut(i).copy_from_slice(x);
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_flat(self) -> Vec<f64> {
        self.coords
    }

    pub fn select(&self, idx: &[usize]) -> Points {
        let mut p = Points::with_capacity(self.dim, idx.len());
        for &i in idx {
            p.coords.extend_from_slice(self.get(i));
        }
        p
    }

    /// Index of the point nearest to `x` (first one on ties).
    pub fn nearest(&self, x: &[f64]) -> Option<usize> {
        let mut best = None;
        let mut best_d = f64::INFINITY;
        for (i, p) in self.iter().enumerate() {
            let d = crate::math::dist2(p, x);
            if d < best_d {
                best_d = d;
                best = Some(i);
            }
        }
        best
    }

    /// Smallest pairwise distance; `+inf` for fewer than two points.
    pub fn min_separation(&self) -> f64 {
        let mut m = f64::INFINITY;
        for i in 0..self.len() {
            for j in i + 1..self.len() {
                m = m.min(crate::math::dist2(self.get(i), self.get(j)));
            }
        }
        crate::math::sqrt(m)
    }
}
