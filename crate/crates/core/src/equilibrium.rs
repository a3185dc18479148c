//! Weighted equilibrium measures on a mesh.
//!
//! The discrete problem is `min wᵀAw + 2qᵀw` over the probability simplex,
//! with `A` the kernel matrix under a diagonal policy and `q` the field at
//! the nodes. It is solved by Frank–Wolfe with away steps and exact line
//! search; iterates stay sparse, so the support emerges on its own.
//!
//! With `g = Aw + q` the Frank–Wolfe gap is `2(g·w - min_i g_i)` and the
//! away gap is `2(max_{w_i>0} g_i - g·w)`. The solver stops only when both
//! are below the tolerance, which is exactly the discrete Frostman condition
//! `U^μ + Q ≥ F_w` everywhere and `≤ F_w` on the support, up to tolerance.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::energy::{default_truncation, kernel_matrix, self_potentials};
use crate::{DiagonalPolicy, DiscreteMeasure, Error, ExternalField, Mesh, Result, RieszKernel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "index", rename_all = "snake_case")]
pub enum Start {
    Barycenter,
    Vertex(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverParams {
    pub max_iters: usize,
    pub gap_tol: f64,
    /// `None` selects truncation at [`default_truncation`] of the mesh spacing.
    pub diagonal_policy: Option<DiagonalPolicy>,
    pub start: Start,
    pub record_history: bool,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            max_iters: 1_000_000,
            gap_tol: 1e-8,
            diagonal_policy: None,
            start: Start::Barycenter,
            record_history: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrostmanReport {
    pub min_on_support: f64,
    pub max_on_support: f64,
    pub global_min: f64,
    pub violation_count: usize,
    pub tolerance: f64,
    pub support_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumSolution {
    pub measure: DiscreteMeasure,
    /// `V_w`, the minimal weighted energy.
    pub value: f64,
    /// `F_w = V_w - ∫ Q dμ`.
    pub robin: f64,
    /// Final Frank–Wolfe gap.
    pub gap: f64,
    pub away_gap: f64,
    pub converged: bool,
    pub iterations: usize,
    pub policy: DiagonalPolicy,
    /// Smallest `dᵀAd / |d|²` over the search directions taken; a negative
    /// value proves the form is not convex on the simplex.
    pub min_curvature: f64,
    pub frostman: FrostmanReport,
    /// Objective after every iteration, when requested.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub history: Vec<f64>,
}

impl EquilibriumSolution {
    pub fn weights(&self) -> &[f64] {
        self.measure.weights()
    }

    /// Support points with weight above `threshold · max weight`.
    pub fn support_indices(&self, relative_threshold: f64) -> Vec<usize> {
        let w = self.weights();
        let cut = relative_threshold * w.iter().copied().fold(0.0, f64::max);
        (0..w.len()).filter(|&i| w[i] > cut).collect()
    }
}

/// Default `support_threshold`, relative to the largest weight.
pub const SUPPORT_THRESHOLD: f64 = 1e-8;

/// Raw output of the simplex solver.
#[derive(Debug, Clone)]
pub struct QuadraticSolution {
    pub weights: Vec<f64>,
    /// `A w + q` at the final iterate.
    pub gradient: Vec<f64>,
    pub objective: f64,
    pub gap: f64,
    pub away_gap: f64,
    pub converged: bool,
    pub iterations: usize,
    pub min_curvature: f64,
    pub history: Vec<f64>,
}

/// Minimizes `wᵀAw + 2qᵀw` over the probability simplex. `a` is dense
/// row-major and symmetric.
pub fn minimize_on_simplex(a: &[f64], q: &[f64], params: &SolverParams) -> Result<QuadraticSolution> {
    let n = q.len();
    if n == 0 || a.len() != n * n {
        return Err(Error::InvalidParameter("empty problem or misshapen matrix".into()));
    }
    if !(params.gap_tol > 0.0) {
        return Err(Error::InvalidParameter(alloc::format!("gap_tol {}", params.gap_tol)));
    }
    let mut w = match params.start {
        Start::Barycenter => vec![1.0 / n as f64; n],
        Start::Vertex(i) if i < n => {
            let mut w = vec![0.0; n];
            w[i] = 1.0;
            w
        }
        Start::Vertex(i) => return Err(Error::InvalidParameter(alloc::format!("start vertex {i} of {n}"))),
    };
    let row = |i: usize| &a[i * n..(i + 1) * n];
    let matvec = |w: &[f64]| -> Vec<f64> { (0..n).map(|i| crate::math::dot(row(i), w)).collect() };
    let mut aw = matvec(&w);
    let mut min_curv = f64::INFINITY;
    let mut history = Vec::new();
    let mut iters = 0;
    let refresh = n.max(64);
    loop {
        if iters % refresh == 0 && iters > 0 {
            aw = matvec(&w);
        }
        let g: Vec<f64> = aw.iter().zip(q).map(|(u, q)| u + q).collect();
        let gw = crate::math::dot(&g, &w);
        let (mut s, mut v) = (0, usize::MAX);
        for i in 0..n {
            if g[i] < g[s] {
                s = i;
            }
            if w[i] > 0.0 && (v == usize::MAX || g[i] > g[v]) {
                v = i;
            }
        }
        let fw_gap = 2.0 * (gw - g[s]);
        let away_gap = 2.0 * (g[v] - gw);
        let objective = crate::math::dot(&w, &aw) + 2.0 * crate::math::dot(q, &w);
        if params.record_history {
            history.push(objective);
        }
        let done = fw_gap <= params.gap_tol && away_gap <= params.gap_tol;
        if done || iters >= params.max_iters {
            return Ok(QuadraticSolution {
                weights: w,
                gradient: g,
                objective,
                gap: fw_gap.max(0.0),
                away_gap: away_gap.max(0.0),
                converged: done,
                iterations: iters,
                min_curvature: min_curv,
                history,
            });
        }
        iters += 1;
        let waw = crate::math::dot(&w, &aw);
        if fw_gap >= away_gap {
            // toward vertex s: d = e_s - w
            let slope = g[s] - gw;
            let curv = a[s * n + s] - 2.0 * aw[s] + waw;
            let d2 = crate::math::dot(&w, &w) - 2.0 * w[s] + 1.0;
            if d2 > 0.0 {
                min_curv = min_curv.min(curv / d2);
            }
            let gamma = if curv > 0.0 { (-slope / curv).clamp(0.0, 1.0) } else { 1.0 };
            if gamma == 0.0 {
                continue;
            }
            for wi in w.iter_mut() {
                *wi *= 1.0 - gamma;
            }
            w[s] += gamma;
            let rs = row(s);
            for i in 0..n {
                aw[i] = (1.0 - gamma) * aw[i] + gamma * rs[i];
            }
        } else {
            // away from vertex v: d = w - e_v
            let slope = gw - g[v];
            let curv = waw - 2.0 * aw[v] + a[v * n + v];
            let d2 = crate::math::dot(&w, &w) - 2.0 * w[v] + 1.0;
            if d2 > 0.0 {
                min_curv = min_curv.min(curv / d2);
            }
            let gmax = w[v] / (1.0 - w[v]);
            let gamma = if curv > 0.0 { (-slope / curv).clamp(0.0, gmax) } else { gmax };
            if gamma == 0.0 {
                continue;
            }
            for wi in w.iter_mut() {
                *wi *= 1.0 + gamma;
            }
            if gamma == gmax {
                w[v] = 0.0;
            } else {
                w[v] -= gamma;
            }
            let rv = row(v);
            for i in 0..n {
                aw[i] = (1.0 + gamma) * aw[i] - gamma * rv[i];
            }
        }
    }
}

/// Weighted equilibrium measure of the mesh's set in the field `q`.
pub fn solve_equilibrium(
    mesh: &Mesh,
    kernel: &RieszKernel,
    q: &ExternalField,
    params: &SolverParams,
) -> Result<EquilibriumSolution> {
    if mesh.is_empty() {
        return Err(Error::InvalidParameter("empty mesh".into()));
    }
    let policy = params
        .diagonal_policy
        .unwrap_or_else(|| DiagonalPolicy::Truncate(default_truncation(kernel, mesh.spacing)));
    let qv = q.values_on(&mesh.points)?;
    let a = kernel_matrix(kernel, &mesh.points, policy)?;
    let raw = minimize_on_simplex(&a, &qv, params)?;
    let field: f64 = raw.weights.iter().zip(&qv).map(|(w, q)| w * q).sum();
    let measure = DiscreteMeasure::new(mesh.points.clone(), raw.weights)?;
    let frostman = frostman_from_gradient(&raw.gradient, measure.weights(), SUPPORT_THRESHOLD, 10.0 * params.gap_tol);
    Ok(EquilibriumSolution {
        measure,
        value: raw.objective,
        robin: raw.objective - field,
        gap: raw.gap,
        away_gap: raw.away_gap,
        converged: raw.converged,
        iterations: raw.iterations,
        policy,
        min_curvature: raw.min_curvature,
        frostman,
        history: raw.history,
    })
}

fn frostman_from_gradient(g: &[f64], w: &[f64], relative_threshold: f64, tol: f64) -> FrostmanReport {
    let cut = relative_threshold * w.iter().copied().fold(0.0, f64::max);
    let robin: f64 = g.iter().zip(w).map(|(g, w)| g * w).sum::<f64>() / w.iter().sum::<f64>();
    let mut rep = FrostmanReport {
        min_on_support: f64::INFINITY,
        max_on_support: f64::NEG_INFINITY,
        global_min: f64::INFINITY,
        violation_count: 0,
        tolerance: tol,
        support_size: 0,
    };
    for (gi, wi) in g.iter().zip(w) {
        if *wi > cut {
            rep.min_on_support = rep.min_on_support.min(*gi);
            rep.max_on_support = rep.max_on_support.max(*gi);
            rep.support_size += 1;
        }
        rep.global_min = rep.global_min.min(*gi);
        if *gi < robin - tol {
            rep.violation_count += 1;
        }
    }
    rep
}

/// Evaluates `U^μ + Q` at every mesh node from scratch and compares with
/// `F_w = ∫ (U^μ + Q) dμ`. Every node counts; there is no exceptional set.
pub fn frostman_check(
    sol: &EquilibriumSolution,
    kernel: &RieszKernel,
    q: &ExternalField,
    mesh: &Mesh,
    support_threshold: f64,
    tol: f64,
) -> Result<FrostmanReport> {
    if mesh.points != *sol.measure.support() {
        return Err(Error::InvalidParameter("solution was computed on a different mesh".into()));
    }
    let qv = q.values_on(&mesh.points)?;
    let u = self_potentials(kernel, &sol.measure, sol.policy);
    let g: Vec<f64> = u.iter().zip(&qv).map(|(u, q)| u + q).collect();
    Ok(frostman_from_gradient(&g, sol.measure.weights(), support_threshold, tol))
}

/// The field `Q = -U^τ` on τ's support, for which τ is the equilibrium
/// measure under the same diagonal policy.
pub fn inverse_equilibrium(tau: &DiscreteMeasure, kernel: &RieszKernel, policy: DiagonalPolicy) -> Result<ExternalField> {
    if !tau.is_probability(1e-12) {
        return Err(Error::InvalidMeasure(alloc::format!("mass {} is not 1", tau.mass())));
    }
    let u = self_potentials(kernel, tau, policy);
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular);
    }
    ExternalField::grid(tau.support().clone(), u.into_iter().map(|v| -v).collect())
}
