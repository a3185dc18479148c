//! The Riesz kernel `W(y) = |y|^{-α}` and its truncation
//! `h_M(x, y) = min(M, W(x - y))`.

use serde::{Deserialize, Serialize};

use crate::math::{self, dist2};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RieszKernel {
    alpha: f64,
    dim: usize,
    truncation: Option<f64>,
}

impl RieszKernel {
    /// Requires `d ≥ 3` and `0 < α < d`.
    pub fn new(alpha: f64, dim: usize) -> Result<Self> {
        if dim < 3 {
            return Err(Error::AmbientDimension(dim));
        }
        if !(alpha > 0.0 && alpha < dim as f64) {
            return Err(Error::Exponent { alpha, dim });
        }
        Ok(Self { alpha, dim, truncation: None })
    }

    pub fn truncated(self, level: f64) -> Result<Self> {
        if !(level > 0.0 && level.is_finite()) {
            return Err(Error::InvalidParameter(alloc::format!("truncation level {level}")));
        }
        Ok(Self { truncation: Some(level), ..self })
    }

    pub fn untruncated(self) -> Self {
        Self { truncation: None, ..self }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn truncation(&self) -> Option<f64> {
        self.truncation
    }

    /// `r^{-α}` from the squared distance; `+inf` at zero.
    #[inline]
    pub fn from_dist2(&self, r2: f64) -> f64 {
        if r2 == 0.0 {
            return f64::INFINITY;
        }
        if self.alpha == 1.0 {
            1.0 / math::sqrt(r2)
        } else if self.alpha == 2.0 {
            1.0 / r2
        } else {
            math::powf(r2, -0.5 * self.alpha)
        }
    }

    /// Untruncated `W(x - y)`, `+inf` at coincident points.
    #[inline]
    pub fn raw(&self, x: &[f64], y: &[f64]) -> f64 {
        let r2 = dist2(x, y);
        if r2 == 0.0 && x != y {
            // squared distance underflowed; rescale by the largest component
            let m = x.iter().zip(y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let s: f64 = x.iter().zip(y).map(|(a, b)| ((a - b) / m) * ((a - b) / m)).sum();
            return math::powf(m * math::sqrt(s), -self.alpha);
        }
        self.from_dist2(r2)
    }

    /// `|x - y|^{-α}`, capped at `M` when the kernel is truncated.
    ///
    /// Coincident points without truncation give [`Error::Singular`].
    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let w = self.raw(x, y);
        match self.truncation {
            Some(m) => Ok(w.min(m)),
            None if w == f64::INFINITY => Err(Error::Singular),
            None => Ok(w),
        }
    }

    /// Gradient in `x` of `|x - y|^{-α}`: `-α |x-y|^{-α-2} (x - y)`, added
    /// into `out` with factor `scale`.
    #[inline]
    pub fn add_grad_x(&self, x: &[f64], y: &[f64], scale: f64, out: &mut [f64]) {
        let r2 = dist2(x, y);
        let c = -self.alpha * self.from_dist2(r2) / r2 * scale;
        for k in 0..x.len() {
            out[k] += c * (x[k] - y[k]);
        }
    }
}
