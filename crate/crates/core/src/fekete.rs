//! Weighted Fekete configurations.
//!
//! For `x_1 … x_n ∈ K` the discrete weighted energy is
//!
//! ```text
//! L_n = Σ_{i≠j} |x_i - x_j|^{-α} + 2n Σ_j Q(x_j)
//! ```
//!
//! (ordered pairs, so every distance counts twice) and `VDM = exp(-L_n)`.
//! Only `log VDM = -L_n` is ever formed. Optimization minimizes `L_n` by
//! projected gradient descent with Armijo backtracking from several starts;
//! results are local optima with restart diagnostics, not certified global
//! minimizers.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::generate_mesh;
use crate::par::map_tasks;
use crate::rng::stream;
use crate::{CompactSet, DiscreteMeasure, Error, ExternalField, Points, Result, RieszKernel};

/// Separation below which a trial step is rejected.
pub const MIN_SEPARATION: f64 = 1e-9;

/// `L_n`; `+inf` for coincident points. The kernel's truncation is ignored.
pub fn lagrangian(points: &Points, kernel: &RieszKernel, q: &ExternalField) -> Result<f64> {
    let n = points.len();
    let mut pair = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            pair += kernel.raw(points.get(i), points.get(j));
        }
    }
    let field: f64 = q.values_on(points)?.iter().sum();
    Ok(2.0 * pair + 2.0 * n as f64 * field)
}

/// `log VDM_n^Q = -L_n`; `-inf` for coincident points.
pub fn log_vdm(points: &Points, kernel: &RieszKernel, q: &ExternalField) -> Result<f64> {
    Ok(-lagrangian(points, kernel, q)?)
}

/// `L_n / (n(n-1))`.
///
/// Against the empirical measure `μ = (1/n) Σ δ_{x_i}` this equals
/// `n/(n-1) · E(μ) + 2/(n-1) · Σ Q(x_i)` with `E` the diagonal-free energy.
pub fn normalized_energy(points: &Points, kernel: &RieszKernel, q: &ExternalField) -> Result<f64> {
    let n = points.len() as f64;
    Ok(lagrangian(points, kernel, q)? / (n * (n - 1.0)))
}

/// Ambient gradient of `L_n`, flat with the layout of `points`.
pub fn lagrangian_gradient(points: &Points, kernel: &RieszKernel, q: &ExternalField) -> Result<Vec<f64>> {
    let n = points.len();
    let d = points.dim();
    let mut g = vec![0.0; n * d];
    for i in 0..n {
        let xi = points.get(i);
        let gi = &mut g[i * d..(i + 1) * d];
        for j in 0..n {
            if j != i {
                kernel.add_grad_x(xi, points.get(j), 2.0, gi);
            }
        }
        let gq = q.gradient(xi)?;
        for k in 0..d {
            gi[k] += 2.0 * n as f64 * gq[k];
        }
    }
    Ok(g)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeketeParams {
    pub restarts: usize,
    pub max_iters: usize,
    /// First trial displacement as a fraction of the set's diameter.
    pub step_init: f64,
    /// Stop when an accepted step lowers `L_n` by less than this, relatively.
    pub rel_tol: f64,
    pub seed: u64,
}

impl Default for FeketeParams {
    fn default() -> Self {
        Self { restarts: 8, max_iters: 20_000, step_init: 0.05, rel_tol: 1e-15, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeketeResult {
    pub points: Points,
    pub n: usize,
    pub log_vdm: f64,
    /// `L_n / (n(n-1))` of the returned configuration.
    pub d_n: f64,
    pub restarts_used: usize,
    /// `d_n` reached by every restart, in restart order.
    pub restart_d_n: Vec<f64>,
    /// True when all restarts agree to within [`AGREEMENT_TOL`].
    pub restarts_agree: bool,
    pub seed: u64,
    pub optimality: Optimality,
}

/// What a returned configuration is known to be. Gradient descent from
/// several starts only certifies a local minimum of the energy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimality {
    Local,
}

pub const AGREEMENT_TOL: f64 = 1e-6;

/// Starting configuration for restart `r`.
///
/// Restart 0 is the set's own mesh at `n` points when the mesh has exactly
/// that many; restart 1 draws from `equilibrium` without replacement when
/// one is given; everything else is uniform.
fn seed_configuration(
    set: &CompactSet,
    n: usize,
    r: usize,
    equilibrium: Option<&DiscreteMeasure>,
    rng: &mut impl Rng,
) -> Result<Points> {
    if r == 0 {
        if let Ok(m) = generate_mesh(set, n) {
            if m.len() == n {
                return Ok(m.points);
            }
        }
    }
    if r == 1 {
        if let Some(eq) = equilibrium {
            if eq.len() >= n {
                // Efraimidis–Spirakis keys u^{1/w}, compared in log form
                let mut keys: Vec<(f64, usize)> = eq
                    .weights()
                    .iter()
                    .enumerate()
                    .filter(|(_, w)| **w > 0.0)
                    .map(|(i, w)| (crate::math::ln(rng.random::<f64>()) / w, i))
                    .collect();
                if keys.len() >= n {
                    keys.sort_by(|a, b| b.0.total_cmp(&a.0));
                    let idx: Vec<usize> = keys[..n].iter().map(|k| k.1).collect();
                    let picked = eq.support().select(&idx);
                    let mut out = Points::with_capacity(set.dim(), n);
                    for x in picked.iter() {
                        out.push(&set.project(x))?;
                    }
                    return Ok(out);
                }
            }
        }
    }
    let mut out = Points::with_capacity(set.dim(), n);
    for _ in 0..n {
        out.push(&set.sample_uniform(rng))?;
    }
    Ok(out)
}

struct Descent {
    points: Points,
    value: f64,
}

fn project_all(set: &CompactSet, p: &Points) -> Result<Points> {
    let mut out = Points::with_capacity(p.dim(), p.len());
    for x in p.iter() {
        out.push(&set.project(x))?;
    }
    Ok(out)
}

fn descend(
    set: &CompactSet,
    kernel: &RieszKernel,
    q: &ExternalField,
    start: Points,
    params: &FeketeParams,
) -> Result<Descent> {
    let mut x = project_all(set, &start)?;
    let mut value = lagrangian(&x, kernel, q)?;
    if !value.is_finite() {
        return Err(Error::InvalidParameter("starting configuration has coincident points".into()));
    }
    let mut grad = lagrangian_gradient(&x, kernel, q)?;
    let gmax = grad.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let diam = set.diameter().max(f64::MIN_POSITIVE);
    let mut t = if gmax > 0.0 { params.step_init * diam / gmax } else { 0.0 };
    let mut quiet = 0;
    for _ in 0..params.max_iters {
        if t == 0.0 {
            break;
        }
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<f64> = x.as_flat().iter().zip(&grad).map(|(a, g)| a - t * g).collect();
            let trial = project_all(set, &Points::from_flat(x.dim(), trial)?)?;
            if trial.min_separation() < MIN_SEPARATION {
                t *= 0.5;
                continue;
            }
            let tv = lagrangian(&trial, kernel, q)?;
            let decrease: f64 = x.as_flat().iter().zip(trial.as_flat()).zip(&grad).map(|((a, b), g)| g * (a - b)).sum();
            if tv.is_finite() && tv <= value - 1e-4 * decrease {
                let rel = (value - tv) / value.abs().max(1.0);
                x = trial;
                value = tv;
                accepted = true;
                quiet = if rel < params.rel_tol { quiet + 1 } else { 0 };
                break;
            }
            t *= 0.5;
        }
        if !accepted || quiet >= 10 {
            break;
        }
        grad = lagrangian_gradient(&x, kernel, q)?;
        t *= 2.0;
    }
    Ok(Descent { points: x, value })
}

fn better(a: &Descent, b: &Descent) -> bool {
    match a.value.total_cmp(&b.value) {
        Ordering::Less => true,
        Ordering::Greater => false,
        Ordering::Equal => {
            let (pa, pb) = (a.points.as_flat(), b.points.as_flat());
            pa.iter().zip(pb).map(|(u, v)| u.total_cmp(v)).find(|o| *o != Ordering::Equal) == Some(Ordering::Less)
        }
    }
}

/// Best local minimizer of `L_n` over `restarts` starts.
///
/// `d_n` of the result bounds `D_n(K)` from above and `log_vdm / n²` bounds
/// `log δ_n^Q(K)` from below.
pub fn optimize_fekete(
    set: &CompactSet,
    kernel: &RieszKernel,
    q: &ExternalField,
    n: usize,
    params: &FeketeParams,
    equilibrium: Option<&DiscreteMeasure>,
) -> Result<FeketeResult> {
    if n < 2 {
        return Err(Error::InvalidParameter(alloc::format!("n = {n} < 2")));
    }
    if params.restarts == 0 {
        return Err(Error::InvalidParameter("at least one restart".into()));
    }
    let runs = map_tasks(params.restarts, |r| {
        let mut rng = stream(params.seed, r as u64);
        let start = seed_configuration(set, n, r, equilibrium, &mut rng)?;
        descend(set, kernel, q, start, params)
    });
    let runs: Vec<Descent> = runs.into_iter().collect::<Result<_>>()?;
    let norm = (n * (n - 1)) as f64;
    let restart_d_n: Vec<f64> = runs.iter().map(|r| r.value / norm).collect();
    let lo = restart_d_n.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = restart_d_n.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut best = 0;
    for i in 1..runs.len() {
        if better(&runs[i], &runs[best]) {
            best = i;
        }
    }
    let best = runs.into_iter().nth(best).expect("nonempty");
    Ok(FeketeResult {
        n,
        log_vdm: -best.value,
        d_n: best.value / norm,
        points: best.points,
        restarts_used: params.restarts,
        restart_d_n,
        restarts_agree: hi - lo <= AGREEMENT_TOL,
        seed: params.seed,
        optimality: Optimality::Local,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiameterRow {
    pub n: usize,
    /// `log_vdm / n²`, a lower bound for `log δ_n^Q(K)`.
    pub log_delta_n: f64,
    pub d_n: f64,
    pub restarts_agree: bool,
}

/// One [`optimize_fekete`] run per `n`, each on its own seed stream.
pub fn transfinite_diameter_sequence(
    set: &CompactSet,
    kernel: &RieszKernel,
    q: &ExternalField,
    n_list: &[usize],
    params: &FeketeParams,
) -> Result<Vec<(DiameterRow, FeketeResult)>> {
    if n_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("n_list must be increasing".into()));
    }
    n_list
        .iter()
        .map(|&n| {
            let p = FeketeParams { seed: crate::rng::child_seed(params.seed, n as u64), ..params.clone() };
            let r = optimize_fekete(set, kernel, q, n, &p, None)?;
            let row = DiameterRow {
                n,
                log_delta_n: r.log_vdm / (n * n) as f64,
                d_n: r.d_n,
                restarts_agree: r.restarts_agree,
            };
            Ok((row, r))
        })
        .collect()
}
