//! Floating-point helpers that work without `std`.
//!
//! All transcendental functions go through `libm` so that results are
//! identical with and without the `std` feature.

use alloc::vec::Vec;

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn powf(x: f64, y: f64) -> f64 {
    libm::pow(x, y)
}

#[inline]
pub fn floor(x: f64) -> f64 {
    libm::floor(x)
}

#[inline]
pub fn round(x: f64) -> f64 {
    libm::round(x)
}

#[inline]
pub fn sin(x: f64) -> f64 {
    libm::sin(x)
}

#[inline]
pub fn cos(x: f64) -> f64 {
    libm::cos(x)
}

#[inline]
pub fn tgamma(x: f64) -> f64 {
    libm::tgamma(x)
}

pub const PI: f64 = core::f64::consts::PI;

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    sqrt(dot(a, a))
}

#[inline]
pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let t = x - y;
            t * t
        })
        .sum()
}

#[inline]
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    sqrt(dist2(a, b))
}

/// Streaming log-sum-exp accumulator with max shift.
///
/// Terms equal to `-inf` are skipped; an empty accumulator reports `-inf`.
#[derive(Debug, Clone, Copy)]
pub struct LogSumExp {
    max: f64,
    scaled: f64,
}

impl Default for LogSumExp {
    fn default() -> Self {
        Self::new()
    }
}

impl LogSumExp {
    pub const fn new() -> Self {
        Self { max: f64::NEG_INFINITY, scaled: 0.0 }
    }

    #[inline]
    pub fn push(&mut self, t: f64) {
        if t == f64::NEG_INFINITY {
            return;
        }
        if t > self.max {
            self.scaled = self.scaled * exp(self.max - t) + 1.0;
            self.max = t;
        } else {
            self.scaled += exp(t - self.max);
        }
    }

    pub fn merge(&mut self, other: &LogSumExp) {
        if other.max == f64::NEG_INFINITY {
            return;
        }
        if other.max > self.max {
            self.scaled = self.scaled * exp(self.max - other.max) + other.scaled;
            self.max = other.max;
        } else {
            self.scaled += other.scaled * exp(other.max - self.max);
        }
    }

    pub fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + ln(self.scaled)
        }
    }
}

/// `log Σ exp(t_i)` with max shift.
pub fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + ln(terms.iter().map(|t| exp(t - max)).sum::<f64>())
}

/// `log( (1/len) Σ exp(t_i) )`.
pub fn log_mean_exp(terms: &[f64]) -> f64 {
    log_sum_exp(terms) - ln(terms.len() as f64)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance; zero for fewer than two values.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Ordinary least squares `y = a + b x`; returns `(a, b)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let mx = mean(x);
    let my = mean(y);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (my - slope * mx, slope)
}

/// Surface area of the unit sphere `S^{d-1} ⊂ R^d`.
pub fn unit_sphere_area(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    2.0 * powf(PI, h) / tgamma(h)
}

/// Jackknife standard error of `log mean exp` over the given log terms.
pub fn jackknife_log_mean_exp(terms: &[f64]) -> f64 {
    let c = terms.len();
    if c < 2 {
        return f64::INFINITY;
    }
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scaled: Vec<f64> = terms.iter().map(|t| exp(t - max)).collect();
    let total: f64 = scaled.iter().sum();
    let loo: Vec<f64> = scaled
        .iter()
        .map(|s| max + ln(((total - s) / (c - 1) as f64).max(f64::MIN_POSITIVE)))
        .collect();
    let m = mean(&loo);
    let ss: f64 = loo.iter().map(|v| (v - m) * (v - m)).sum();
    sqrt(ss * (c - 1) as f64 / c as f64)
}
