use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Points, Result};

/// Finitely supported nonnegative measure `Σ w_i δ_{x_i}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    support: Points,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(support: Points, weights: Vec<f64>) -> Result<Self> {
        if support.len() != weights.len() {
            return Err(Error::InvalidMeasure(format!(
                "{} support points but {} weights",
                support.len(),
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::InvalidMeasure(format!("weight {w} is not a nonnegative real")));
        }
        Ok(Self { support, weights })
    }

    /// Equal weights `1/len`.
    pub fn uniform(support: Points) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::InvalidMeasure("empty support".into()));
        }
        let n = support.len();
        Self::new(support, alloc::vec![1.0 / n as f64; n])
    }

    pub fn dirac(x: &[f64], mass: f64) -> Result<Self> {
        Self::new(Points::from_flat(x.len(), x.to_vec())?, alloc::vec![mass])
    }

    pub fn support(&self) -> &Points {
        &self.support
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn dim(&self) -> usize {
        self.support.dim()
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Scaled to unit mass. A zero measure is returned unchanged.
    pub fn normalized(&self) -> Self {
        let m = self.mass();
        if m <= 0.0 {
            return self.clone();
        }
        Self { support: self.support.clone(), weights: self.weights.iter().map(|w| w / m).collect() }
    }

    pub fn with_weights(&self, weights: Vec<f64>) -> Result<Self> {
        Self::new(self.support.clone(), weights)
    }

    /// `∫ f dμ`.
    pub fn integrate<F: FnMut(&[f64]) -> f64>(&self, mut f: F) -> f64 {
        self.support.iter().zip(&self.weights).map(|(x, w)| w * f(x)).sum()
    }

    /// Mass of the closed ball `B(x, r)`.
    pub fn ball_mass(&self, x: &[f64], r: f64) -> f64 {
        let r2 = r * r;
        self.support
            .iter()
            .zip(&self.weights)
            .filter(|(p, _)| crate::math::dist2(p, x) <= r2)
            .map(|(_, w)| *w)
            .sum()
    }

    /// True when this is a probability measure to within `tol`.
    pub fn is_probability(&self, tol: f64) -> bool {
        (self.mass() - 1.0).abs() <= tol
    }
}
