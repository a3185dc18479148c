//! The Gibbs ensemble on `K^n` with density `exp(-e · L_n)` against `ν^n`.
//!
//! `e` is the ensemble exponent: 1 by default, 2 for the squared
//! Vandermonde variant. `ν` is either a discrete measure (usually a mesh)
//! or the normalized reference measure of the set scaled to a given mass.
//!
//! Sampling is single-site Metropolis. With probability 0.9 a site takes a
//! local step (a uniform choice among the 8 nearest nodes for a discrete
//! base, a projected Gaussian step on the site's own part otherwise); with
//! probability 0.1 it jumps to an independent draw from `ν`, which lets
//! chains cross between the components of a union.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::geometry::SetKind;
use crate::math::{self, dist2, LogSumExp};
use crate::par::map_tasks;
use crate::rng::stream;
use crate::{CompactSet, DiscreteMeasure, Error, ExternalField, Mesh, Points, Result, RieszKernel};

/// Probability of a `ν`-jump proposal.
pub const JUMP_PROBABILITY: f64 = 0.1;
/// Neighbourhood size for local moves on a discrete base.
pub const NEIGHBORS: usize = 8;
/// Largest number of terms a quadrature may enumerate.
pub const QUADRATURE_LIMIT: f64 = 1e7;
/// Acceptance rate the burn-in adaptation aims for.
pub const TARGET_ACCEPTANCE: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaseMeasure {
    Discrete { measure: DiscreteMeasure },
    /// Normalized reference measure of the set, times `mass`.
    Continuous { mass: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GibbsSpec {
    pub set: CompactSet,
    pub base: BaseMeasure,
    pub kernel: RieszKernel,
    pub q: ExternalField,
    pub n: usize,
    pub exponent: f64,
}

impl GibbsSpec {
    pub fn new(set: CompactSet, base: BaseMeasure, kernel: RieszKernel, q: ExternalField, n: usize) -> Result<Self> {
        let spec = Self { set, base, kernel, q, n, exponent: 1.0 };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_exponent(mut self, exponent: f64) -> Result<Self> {
        self.exponent = exponent;
        self.validate()?;
        Ok(self)
    }

    pub fn with_n(&self, n: usize) -> Result<Self> {
        let s = Self { n, ..self.clone() };
        s.validate()?;
        Ok(s)
    }

    fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidParameter(alloc::format!("ensemble size {} < 2", self.n)));
        }
        if !(self.exponent >= 0.0 && self.exponent.is_finite()) {
            return Err(Error::InvalidParameter(alloc::format!("ensemble exponent {}", self.exponent)));
        }
        let d = self.set.dim();
        if self.kernel.dim() != d || self.q.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, found: self.kernel.dim() });
        }
        let m = self.base_mass();
        if !(m > 0.0 && m.is_finite()) {
            return Err(Error::InvalidMeasure(alloc::format!("base mass {m}")));
        }
        if let BaseMeasure::Continuous { .. } = self.base {
            for p in self.set.parts() {
                if matches!(p.kind(), SetKind::PointCloud { .. } | SetKind::Union { .. }) {
                    return Err(Error::Unsupported(
                        "continuous base on a point cloud or nested union; use a discrete base".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn base_mass(&self) -> f64 {
        match &self.base {
            BaseMeasure::Discrete { measure } => measure.mass(),
            BaseMeasure::Continuous { mass } => *mass,
        }
    }

    /// `e · L_n` of a configuration, `+inf` for coincident points.
    pub fn energy(&self, config: &Points) -> Result<f64> {
        if self.exponent == 0.0 {
            return Ok(0.0);
        }
        Ok(self.exponent * crate::fekete::lagrangian(config, &self.kernel, &self.q)?)
    }
}

/// Node data for a discrete base.
struct Nodes<'a> {
    points: &'a Points,
    weights: &'a [f64],
    log_w: Vec<f64>,
    cumulative: Vec<f64>,
    field: Vec<f64>,
    knn: Vec<Vec<usize>>,
}

impl<'a> Nodes<'a> {
    fn new(mu: &'a DiscreteMeasure, q: &ExternalField) -> Result<Self> {
        let points = mu.support();
        let weights = mu.weights();
        let mut acc = 0.0;
        let cumulative = weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        let k = NEIGHBORS.min(points.len().saturating_sub(1));
        let knn = map_tasks(points.len(), |i| {
            let mut idx: Vec<usize> = (0..points.len()).filter(|&j| j != i).collect();
            idx.sort_by(|a, b| {
                dist2(points.get(i), points.get(*a)).total_cmp(&dist2(points.get(i), points.get(*b))).then(a.cmp(b))
            });
            idx.truncate(k);
            idx
        });
        Ok(Self {
            points,
            weights,
            log_w: weights.iter().map(|w| math::ln(*w)).collect(),
            cumulative,
            field: q.values_on(points)?,
            knn,
        })
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = *self.cumulative.last().expect("nonempty base");
        let u = rng.random::<f64>() * total;
        let i = self.cumulative.partition_point(|c| *c <= u);
        let mut i = i.min(self.weights.len() - 1);
        // never land on a zero-weight node
        while self.weights[i] == 0.0 && i > 0 {
            i -= 1;
        }
        i
    }
}

/// A configuration with its cached field values and energy.
#[derive(Debug, Clone)]
struct Walker {
    points: Points,
    nodes: Vec<usize>,
    field: Vec<f64>,
    /// `L_n` (without the ensemble exponent).
    l: f64,
}

struct Sampler<'a> {
    spec: &'a GibbsSpec,
    nodes: Option<Nodes<'a>>,
}

/// A proposed new position for one site.
struct Proposal {
    y: Vec<f64>,
    node: usize,
    field: f64,
    /// `log q(back) / q(forth)` plus any base-density ratio.
    log_extra: f64,
    local: bool,
}

impl<'a> Sampler<'a> {
    fn new(spec: &'a GibbsSpec) -> Result<Self> {
        let nodes = match &spec.base {
            BaseMeasure::Discrete { measure } => Some(Nodes::new(measure, &spec.q)?),
            BaseMeasure::Continuous { .. } => None,
        };
        Ok(Self { spec, nodes })
    }

    fn walker(&self, points: Points, nodes: Vec<usize>) -> Result<Walker> {
        let field = match &self.nodes {
            Some(nd) => nodes.iter().map(|&i| nd.field[i]).collect(),
            None => self.spec.q.values_on(&points)?,
        };
        let l = self.full_l(&points, &field);
        Ok(Walker { points, nodes, field, l })
    }

    fn full_l(&self, points: &Points, field: &[f64]) -> f64 {
        let n = points.len();
        let mut pair = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                pair += self.spec.kernel.raw(points.get(i), points.get(j));
            }
        }
        2.0 * pair + 2.0 * n as f64 * field.iter().sum::<f64>()
    }

    /// Exact draw from `ν^n`.
    fn draw_base<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Walker> {
        let n = self.spec.n;
        let d = self.spec.set.dim();
        let mut pts = Points::with_capacity(d, n);
        let mut idx = Vec::new();
        match &self.nodes {
            Some(nd) => {
                for _ in 0..n {
                    let i = nd.draw(rng);
                    idx.push(i);
                    pts.push(nd.points.get(i))?;
                }
            }
            None => {
                for _ in 0..n {
                    pts.push(&self.spec.set.sample_uniform(rng))?;
                }
            }
        }
        self.walker(pts, idx)
    }

    /// Starting point for a sampling chain: distinct nodes when possible.
    fn draw_start<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Walker> {
        if let Some(nd) = &self.nodes {
            let positive = nd.weights.iter().filter(|w| **w > 0.0).count();
            if positive >= self.spec.n {
                let mut keys: Vec<(f64, usize)> = nd
                    .weights
                    .iter()
                    .enumerate()
                    .filter(|(_, w)| **w > 0.0)
                    .map(|(i, w)| (math::ln(rng.random::<f64>()) / w, i))
                    .collect();
                keys.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
                let idx: Vec<usize> = keys[..self.spec.n].iter().map(|k| k.1).collect();
                return self.walker(nd.points.select(&idx), idx);
            }
        }
        self.draw_base(rng)
    }

    fn propose<R: Rng + ?Sized>(&self, w: &Walker, i: usize, sigma: f64, rng: &mut R) -> Result<Option<Proposal>> {
        let jump = rng.random::<f64>() < JUMP_PROBABILITY;
        if let Some(nd) = &self.nodes {
            let a = w.nodes[i];
            if jump {
                // q(b) ∝ w_b cancels the base ratio w_b / w_a
                let b = nd.draw(rng);
                return Ok(Some(Proposal { y: nd.points.get(b).to_vec(), node: b, field: nd.field[b], log_extra: 0.0, local: false }));
            }
            let nb = &nd.knn[a];
            if nb.is_empty() {
                return Ok(None);
            }
            let b = nb[rng.random_range(0..nb.len())];
            if !nd.knn[b].contains(&a) {
                // the reverse move is impossible
                return Ok(Some(Proposal { y: Vec::new(), node: b, field: 0.0, log_extra: f64::NEG_INFINITY, local: true }));
            }
            let extra = nd.log_w[b] - nd.log_w[a] + math::ln(nb.len() as f64) - math::ln(nd.knn[b].len() as f64);
            return Ok(Some(Proposal { y: nd.points.get(b).to_vec(), node: b, field: nd.field[b], log_extra: extra, local: true }));
        }
        let set = &self.spec.set;
        if jump {
            let y = set.sample_uniform(rng);
            let f = self.spec.q.value(&y)?;
            return Ok(Some(Proposal { y, node: 0, field: f, log_extra: 0.0, local: false }));
        }
        let x = w.points.get(i);
        let part = &set.parts()[set.part_index(x)];
        let y = match part.kind() {
            SetKind::Box { lower, upper } => {
                let mut y = x.to_vec();
                for k in 0..y.len() {
                    if upper[k] > lower[k] {
                        let g: f64 = StandardNormal.sample(rng);
                        y[k] += sigma * g;
                        if y[k] < lower[k] || y[k] > upper[k] {
                            return Ok(Some(Proposal { y: Vec::new(), node: 0, field: 0.0, log_extra: f64::NEG_INFINITY, local: true }));
                        }
                    }
                }
                y
            }
            _ => {
                // isotropic step then projection: the proposal density depends
                // only on the angle between x and y, so it is symmetric
                let y: Vec<f64> = x
                    .iter()
                    .map(|v| {
                        let g: f64 = StandardNormal.sample(rng);
                        v + sigma * g
                    })
                    .collect();
                part.project(&y)
            }
        };
        let f = self.spec.q.value(&y)?;
        Ok(Some(Proposal { y, node: 0, field: f, log_extra: 0.0, local: true }))
    }

    fn site_pairs(&self, w: &Walker, i: usize, y: &[f64]) -> f64 {
        let mut s = 0.0;
        for (j, x) in w.points.iter().enumerate() {
            if j != i {
                s += self.spec.kernel.raw(y, x);
            }
        }
        s
    }

    /// Change in `L_n` when site `i` moves to `p`.
    fn delta(&self, w: &Walker, i: usize, p: &Proposal) -> f64 {
        let n = self.spec.n as f64;
        let old = self.site_pairs(w, i, w.points.get(i));
        let new = self.site_pairs(w, i, &p.y);
        2.0 * (new - old) + 2.0 * n * (p.field - w.field[i])
    }

    fn apply(&self, w: &mut Walker, i: usize, p: Proposal, new_l: f64) {
        w.points.set(i, &p.y);
        if !w.nodes.is_empty() {
            w.nodes[i] = p.node;
        }
        w.field[i] = p.field;
        w.l = new_l;
    }

    /// One single-site Metropolis–Hastings update at inverse temperature
    /// `beta` (applied to `L_n`). Returns `(local, accepted)`.
    fn step<R: Rng + ?Sized>(&self, w: &mut Walker, beta: f64, sigma: f64, rng: &mut R) -> Result<(bool, bool)> {
        let i = rng.random_range(0..self.spec.n);
        let Some(p) = self.propose(w, i, sigma, rng)? else {
            return Ok((true, false));
        };
        let local = p.local;
        if p.log_extra == f64::NEG_INFINITY {
            return Ok((local, false));
        }
        let u: f64 = rng.random();
        if !w.l.is_finite() {
            // escape from a zero-density state as soon as a move allows it
            let mut trial = w.clone();
            let (y, field) = (p.y.clone(), p.field);
            trial.points.set(i, &y);
            trial.field[i] = field;
            let l = self.full_l(&trial.points, &trial.field);
            if l.is_finite() || beta == 0.0 {
                self.apply(w, i, p, l);
                return Ok((local, true));
            }
            return Ok((local, false));
        }
        let dl = self.delta(w, i, &p);
        let log_alpha = if beta == 0.0 { p.log_extra } else { -beta * dl + p.log_extra };
        if log_alpha >= 0.0 || math::ln(u) < log_alpha {
            let new_l = w.l + dl;
            self.apply(w, i, p, new_l);
            return Ok((local, true));
        }
        Ok((local, false))
    }

    fn sweep<R: Rng + ?Sized>(&self, w: &mut Walker, beta: f64, sigma: f64, rng: &mut R, tally: &mut Tally) -> Result<()> {
        for _ in 0..self.spec.n {
            let (local, acc) = self.step(w, beta, sigma, rng)?;
            tally.proposals += 1;
            tally.accepts += acc as u64;
            if local {
                tally.local_proposals += 1;
                tally.local_accepts += acc as u64;
            }
        }
        Ok(())
    }

    fn refresh(&self, w: &mut Walker) {
        w.l = self.full_l(&w.points, &w.field);
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    proposals: u64,
    accepts: u64,
    local_proposals: u64,
    local_accepts: u64,
}

/// Resumable state of one chain. The random stream position is stored, so a
/// resumed chain continues exactly where it stopped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainState {
    pub config: Points,
    /// Node index of every site, for a discrete base.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub nodes: Vec<usize>,
    /// `-e · L_n`.
    pub log_density: f64,
    pub step_scale: f64,
    pub accepts: u64,
    pub proposals: u64,
    pub seed: u64,
    pub stream: u64,
    pub word_pos: u128,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McmcParams {
    pub chains: usize,
    /// Total sweeps per chain (one sweep is `n` single-site updates),
    /// burn-in included.
    pub sweeps: usize,
    pub burn_in: usize,
    /// Keep every `thin`-th production sweep.
    pub thin: usize,
    /// Initial Gaussian step for a continuous base.
    pub step_scale: f64,
    pub seed: u64,
}

impl Default for McmcParams {
    fn default() -> Self {
        Self { chains: 4, sweeps: 2000, burn_in: 500, thin: 10, step_scale: 0.2, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainOutput {
    pub samples: Vec<Points>,
    /// `L_n / (n(n-1))` after every production sweep.
    pub trace: Vec<f64>,
    pub acceptance: f64,
    pub step_scale: f64,
    pub state: ChainState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McmcOutput {
    pub chains: Vec<ChainOutput>,
    /// Split-chain potential scale reduction of the normalized energy.
    pub r_hat: f64,
    pub mean_energy: f64,
    /// Standard error of `mean_energy` from the spread of chain means.
    pub energy_std_error: f64,
    /// Some chain accepted less than 5% or more than 80% of proposals.
    pub acceptance_warning: bool,
}

impl McmcOutput {
    pub fn samples(&self) -> impl Iterator<Item = &Points> {
        self.chains.iter().flat_map(|c| c.samples.iter())
    }
}

fn production(
    sampler: &Sampler<'_>,
    w: &mut Walker,
    sweeps: usize,
    thin: usize,
    sigma: f64,
    rng: &mut ChaCha8Rng,
    tally: &mut Tally,
) -> Result<(Vec<Points>, Vec<f64>)> {
    let n = sampler.spec.n as f64;
    let beta = sampler.spec.exponent;
    let mut samples = Vec::new();
    let mut trace = Vec::with_capacity(sweeps);
    for s in 1..=sweeps {
        sampler.sweep(w, beta, sigma, rng, tally)?;
        // exact energy at every sweep boundary keeps checkpoints bit-exact
        sampler.refresh(w);
        trace.push(w.l / (n * (n - 1.0)));
        if s % thin.max(1) == 0 {
            samples.push(w.points.clone());
        }
    }
    Ok((samples, trace))
}

fn capture(spec: &GibbsSpec, w: &Walker, sigma: f64, tally: &Tally, rng: &ChaCha8Rng, seed: u64) -> ChainState {
    ChainState {
        config: w.points.clone(),
        nodes: w.nodes.clone(),
        log_density: -spec.exponent * w.l,
        step_scale: sigma,
        accepts: tally.accepts,
        proposals: tally.proposals,
        seed,
        stream: rng.get_stream(),
        word_pos: rng.get_word_pos(),
    }
}

fn run_chain(sampler: &Sampler<'_>, params: &McmcParams, c: usize) -> Result<ChainOutput> {
    let spec = sampler.spec;
    let mut rng = stream(params.seed, c as u64);
    let mut w = sampler.draw_start(&mut rng)?;
    let mut sigma = params.step_scale;
    let cap = spec.set.diameter();
    let mut batch = Tally::default();
    for s in 1..=params.burn_in {
        sampler.sweep(&mut w, spec.exponent, sigma, &mut rng, &mut batch)?;
        if s % 20 == 0 {
            if sampler.nodes.is_none() && batch.local_proposals > 0 {
                let rate = batch.local_accepts as f64 / batch.local_proposals as f64;
                sigma = (sigma * math::exp(rate - TARGET_ACCEPTANCE)).min(cap);
            }
            batch = Tally::default();
            sampler.refresh(&mut w);
        }
    }
    let mut tally = Tally::default();
    let (samples, trace) =
        production(sampler, &mut w, params.sweeps - params.burn_in, params.thin, sigma, &mut rng, &mut tally)?;
    let acceptance = if tally.proposals > 0 { tally.accepts as f64 / tally.proposals as f64 } else { 0.0 };
    let state = capture(spec, &w, sigma, &tally, &rng, params.seed);
    Ok(ChainOutput { samples, trace, acceptance, step_scale: sigma, state })
}

/// Runs `chains` independent chains and pools their diagnostics.
pub fn mcmc_sample(spec: &GibbsSpec, params: &McmcParams) -> Result<McmcOutput> {
    if params.sweeps <= params.burn_in || params.chains == 0 {
        return Err(Error::InvalidParameter("need sweeps > burn_in and at least one chain".into()));
    }
    let sampler = Sampler::new(spec)?;
    let chains = map_tasks(params.chains, |c| run_chain(&sampler, params, c));
    let chains: Vec<ChainOutput> = chains.into_iter().collect::<Result<_>>()?;
    Ok(summarize(chains))
}

fn summarize(chains: Vec<ChainOutput>) -> McmcOutput {
    let traces: Vec<&[f64]> = chains.iter().map(|c| c.trace.as_slice()).collect();
    let means: Vec<f64> = traces.iter().map(|t| math::mean(t)).collect();
    let mean_energy = math::mean(&means);
    let energy_std_error = math::sqrt(math::variance(&means) / means.len() as f64);
    let acceptance_warning = chains.iter().any(|c| !(0.05..=0.8).contains(&c.acceptance));
    McmcOutput { r_hat: split_r_hat(&traces), mean_energy, energy_std_error, acceptance_warning, chains }
}

/// Continues a chain from a checkpoint for `sweeps` more production sweeps
/// with the step scale frozen.
pub fn resume_chain(spec: &GibbsSpec, state: &ChainState, sweeps: usize, thin: usize) -> Result<ChainOutput> {
    let sampler = Sampler::new(spec)?;
    let w = sampler.walker(state.config.clone(), state.nodes.clone())?;
    let stored = -spec.exponent * w.l;
    if (stored - state.log_density).abs() > 1e-10 * stored.abs().max(1.0) {
        return Err(Error::InvalidParameter(alloc::format!(
            "checkpoint density {} disagrees with its configuration ({stored})",
            state.log_density
        )));
    }
    let mut rng = stream(state.seed, state.stream);
    rng.set_word_pos(state.word_pos);
    let mut w = w;
    let mut tally = Tally { proposals: state.proposals, accepts: state.accepts, ..Default::default() };
    let before = tally;
    let (samples, trace) = production(&sampler, &mut w, sweeps, thin, state.step_scale, &mut rng, &mut tally)?;
    let p = tally.proposals - before.proposals;
    let acceptance = if p > 0 { (tally.accepts - before.accepts) as f64 / p as f64 } else { 0.0 };
    let st = capture(spec, &w, state.step_scale, &tally, &rng, state.seed);
    Ok(ChainOutput { samples, trace, acceptance, step_scale: state.step_scale, state: st })
}

/// Split-chain `R̂`: every trace is cut in half and the halves are compared
/// as separate chains.
pub fn split_r_hat(traces: &[&[f64]]) -> f64 {
    let half = traces.iter().map(|t| t.len() / 2).min().unwrap_or(0);
    if half < 2 {
        return f64::NAN;
    }
    let mut parts: Vec<&[f64]> = Vec::with_capacity(2 * traces.len());
    for t in traces {
        parts.push(&t[..half]);
        parts.push(&t[t.len() - half..]);
    }
    let means: Vec<f64> = parts.iter().map(|p| math::mean(p)).collect();
    let within = math::mean(&parts.iter().map(|p| math::variance(p)).collect::<Vec<_>>());
    let between = half as f64 * math::variance(&means);
    if within == 0.0 {
        return if between == 0.0 { 1.0 } else { f64::INFINITY };
    }
    let pooled = (half as f64 - 1.0) / half as f64 * within + between / half as f64;
    math::sqrt(pooled / within)
}

/// The base measure as weights on a mesh: the base itself when discrete,
/// otherwise the mesh's normalized reference measure times the base mass.
pub fn quadrature_measure(spec: &GibbsSpec, mesh: &Mesh) -> Result<DiscreteMeasure> {
    match &spec.base {
        BaseMeasure::Discrete { measure } => Ok(measure.clone()),
        BaseMeasure::Continuous { mass } => {
            let m = mesh.normalized_measure();
            let w = m.weights().iter().map(|w| w * mass).collect();
            m.with_weights(w)
        }
    }
}

fn guard(len: usize, power: usize) -> Result<()> {
    let terms = math::powf(len as f64, power as f64);
    if terms > QUADRATURE_LIMIT {
        return Err(Error::QuadratureTooLarge { terms, limit: QUADRATURE_LIMIT });
    }
    Ok(())
}

/// Depth-first enumeration of all node tuples, calling `leaf` with the
/// first index, `log(Π w) - e·L` and `L`.
fn enumerate<F: FnMut(f64, f64)>(spec: &GibbsSpec, nodes: &Nodes<'_>, first: usize, leaf: &mut F) {
    let n = spec.n;
    let e = spec.exponent;
    let mut idx = vec![first; n];
    // partial[k] = (L, log weight) of the first k+1 sites
    let mut partial = vec![(0.0f64, 0.0f64); n];
    let site = |idx: &[usize], k: usize| -> f64 {
        let x = nodes.points.get(idx[k]);
        let mut s = 0.0;
        for j in 0..k {
            s += spec.kernel.raw(x, nodes.points.get(idx[j]));
        }
        2.0 * s + 2.0 * n as f64 * nodes.field[idx[k]]
    };
    partial[0] = (site(&idx, 0), nodes.log_w[first]);
    let len = nodes.weights.len();
    let mut k = 1;
    if n == 1 {
        return;
    }
    idx[1] = 0;
    loop {
        // evaluate site k at idx[k]
        let l = partial[k - 1].0 + site(&idx, k);
        let lw = partial[k - 1].1 + nodes.log_w[idx[k]];
        partial[k] = (l, lw);
        if k + 1 == n {
            let term = if e == 0.0 { lw } else if l.is_finite() { lw - e * l } else { f64::NEG_INFINITY };
            leaf(term, l);
        } else if lw > f64::NEG_INFINITY {
            k += 1;
            idx[k] = 0;
            continue;
        }
        // advance
        loop {
            idx[k] += 1;
            if idx[k] < len {
                break;
            }
            k -= 1;
            if k == 0 {
                return;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quadrature {
    pub log_z: f64,
    /// One-point correlation `τ_n`, on the quadrature nodes.
    pub tau: DiscreteMeasure,
    pub terms: f64,
}

fn per_first<T: Send, F>(spec: &GibbsSpec, nodes: &Nodes<'_>, f: F) -> Vec<T>
where
    F: Fn(usize, &mut dyn FnMut(&mut dyn FnMut(f64, f64))) -> T + Sync + Send,
{
    map_tasks(nodes.weights.len(), |first| {
        f(first, &mut |leaf: &mut dyn FnMut(f64, f64)| enumerate(spec, nodes, first, &mut |t, l| leaf(t, l)))
    })
}

/// Exact `log Z_n` and `τ_n` on a mesh by summing over every node tuple.
///
/// `Z_n = Σ_{a ∈ nodes^n} exp(-e · L_n(a)) Π w_{a_i}` and `τ_n(x)` is the
/// share of `Z_n` coming from tuples with first entry `x`. Needs
/// `len^n ≤ 1e7`.
pub fn partition_function_quadrature(spec: &GibbsSpec, mesh: &Mesh) -> Result<Quadrature> {
    let mu = quadrature_measure(spec, mesh)?;
    guard(mu.len(), spec.n)?;
    let nodes = Nodes::new(&mu, &spec.q)?;
    let parts = per_first(spec, &nodes, |_, run| {
        let mut acc = LogSumExp::new();
        run(&mut |t, _| acc.push(t));
        acc
    });
    let mut total = LogSumExp::new();
    for p in &parts {
        total.merge(p);
    }
    let log_z = total.value();
    let tau_w: Vec<f64> = parts.iter().map(|p| math::exp(p.value() - log_z)).collect();
    let tau = DiscreteMeasure::new(mu.support().clone(), tau_w)?;
    Ok(Quadrature { log_z, tau, terms: math::powf(mu.len() as f64, spec.n as f64) })
}

/// `τ_n` alone by quadrature. Needs `len^{n-1} ≤ 1e7` nodes per entry.
pub fn one_point_correlation_quadrature(spec: &GibbsSpec, mesh: &Mesh) -> Result<DiscreteMeasure> {
    let mu = quadrature_measure(spec, mesh)?;
    guard(mu.len(), spec.n - 1)?;
    let nodes = Nodes::new(&mu, &spec.q)?;
    let parts = per_first(spec, &nodes, |_, run| {
        let mut acc = LogSumExp::new();
        run(&mut |t, _| acc.push(t));
        acc.value()
    });
    let total = math::log_sum_exp(&parts);
    DiscreteMeasure::new(mu.support().clone(), parts.iter().map(|p| math::exp(p - total)).collect())
}

/// `τ_n` from samples: every coordinate of every sample is assigned to its
/// nearest mesh node, which averages over all exchangeable coordinates.
pub fn one_point_correlation_mcmc(mesh: &Mesh, samples: &[Points]) -> Result<DiscreteMeasure> {
    let mut counts = vec![0.0; mesh.len()];
    let mut total = 0.0;
    for s in samples {
        for x in s.iter() {
            counts[mesh.points.nearest(x).expect("nonempty mesh")] += 1.0;
            total += 1.0;
        }
    }
    if total == 0.0 {
        return Err(Error::InvalidParameter("no samples".into()));
    }
    DiscreteMeasure::new(mesh.points.clone(), counts.into_iter().map(|c| c / total).collect())
}

/// Inverse temperatures `0, t_1, …, 1` with `t_1 … 1` geometric from `min`.
pub fn geometric_ladder(rungs: usize, min: f64) -> Vec<f64> {
    let mut out = vec![0.0];
    if rungs == 1 {
        out.push(1.0);
        return out;
    }
    let lmin = math::ln(min);
    for k in 0..rungs {
        let t = k as f64 / (rungs - 1) as f64;
        out.push(math::exp(lmin * (1.0 - t)));
    }
    *out.last_mut().expect("nonempty") = 1.0;
    out
}

pub const DEFAULT_RUNGS: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AisParams {
    pub chains: usize,
    pub sweeps_per_rung: usize,
    pub step_scale: f64,
    pub seed: u64,
}

impl Default for AisParams {
    fn default() -> Self {
        Self { chains: 200, sweeps_per_rung: 5, step_scale: 0.5, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AisEstimate {
    pub log_z: f64,
    pub std_error: f64,
    /// Effective sample size of the final importance weights.
    pub ess: f64,
    /// ESS fell below 10% of the chains.
    pub ess_flag: bool,
    pub log_weights: Vec<f64>,
}

/// Annealed importance sampling of `log Z_n` along the ladder: chains start
/// from exact `ν^n` draws and move through `exp(-t e L_n)` for each rung.
pub fn partition_function_ais(spec: &GibbsSpec, ladder: &[f64], params: &AisParams) -> Result<AisEstimate> {
    if ladder.len() < 2 || ladder[0] != 0.0 || *ladder.last().expect("len ≥ 2") != 1.0 || ladder.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidParameter("ladder must increase from 0 to 1".into()));
    }
    if params.chains < 2 {
        return Err(Error::InvalidParameter("AIS needs at least two chains".into()));
    }
    let sampler = Sampler::new(spec)?;
    let e = spec.exponent;
    let logs = map_tasks(params.chains, |c| -> Result<f64> {
        let mut rng = stream(params.seed, c as u64);
        let mut w = sampler.draw_base(&mut rng)?;
        let mut lw = 0.0;
        let mut tally = Tally::default();
        for k in 1..ladder.len() {
            let dt = (ladder[k] - ladder[k - 1]) * e;
            if dt > 0.0 {
                lw -= if w.l.is_finite() { dt * w.l } else { f64::INFINITY };
            }
            if k + 1 < ladder.len() || params.sweeps_per_rung > 0 {
                for _ in 0..params.sweeps_per_rung {
                    sampler.sweep(&mut w, ladder[k] * e, params.step_scale, &mut rng, &mut tally)?;
                }
                sampler.refresh(&mut w);
            }
        }
        Ok(lw)
    });
    let log_weights: Vec<f64> = logs.into_iter().collect::<Result<_>>()?;
    let lse = math::log_sum_exp(&log_weights);
    let lse2 = math::log_sum_exp(&log_weights.iter().map(|l| 2.0 * l).collect::<Vec<_>>());
    let ess = if lse == f64::NEG_INFINITY { 0.0 } else { math::exp(2.0 * lse - lse2) };
    let n = spec.n as f64;
    Ok(AisEstimate {
        log_z: n * math::ln(spec.base_mass()) + math::log_mean_exp(&log_weights),
        std_error: math::jackknife_log_mean_exp(&log_weights),
        ess,
        ess_flag: ess < 0.1 * params.chains as f64,
        log_weights,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZnRow {
    pub n: usize,
    pub log_z: f64,
    pub std_error: f64,
    /// `log Z_n / n²`.
    pub normalized: f64,
    /// `-V_w`.
    pub target: f64,
    /// `(e · best log VDM + n log mass(ν)) / n²`, an upper bound for
    /// `normalized`.
    pub sandwich_bound: f64,
    pub sandwich_holds: bool,
    pub ess_flag: bool,
}

/// `log Z_n / n²` by AIS for each `n`, next to `-V_w` and the bound from
/// `Z_n ≤ max VDM^e · mass(ν)^n` evaluated at the best Fekete configuration.
pub fn zn_scaling_check(
    template: &GibbsSpec,
    n_list: &[usize],
    v_w: f64,
    ladder: &[f64],
    ais: &AisParams,
    fekete: &crate::fekete::FeketeParams,
) -> Result<Vec<ZnRow>> {
    n_list
        .iter()
        .enumerate()
        .map(|(slot, &n)| {
            let spec = template.with_n(n)?;
            let p = AisParams { seed: crate::rng::child_seed(ais.seed, slot as u64), ..ais.clone() };
            let est = partition_function_ais(&spec, ladder, &p)?;
            let best = crate::fekete::optimize_fekete(&spec.set, &spec.kernel, &spec.q, n, fekete, None)?;
            let n2 = (n * n) as f64;
            let bound = (spec.exponent * best.log_vdm + n as f64 * math::ln(spec.base_mass())) / n2;
            let normalized = est.log_z / n2;
            Ok(ZnRow {
                n,
                log_z: est.log_z,
                std_error: est.std_error,
                normalized,
                target: -v_w,
                sandwich_bound: bound,
                sandwich_holds: normalized <= bound,
                ess_flag: est.ess_flag,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RareEvent {
    /// Estimated `Prob_n(VDM < (δ - η)^{n²})`.
    pub p_hat: f64,
    /// `(1 - η/(2δ))^{n²} mass(ν)^n`.
    pub analytic_bound: f64,
    pub bound_holds: bool,
}

/// `(1 - η/(2δ))^{n²} mass^n`, evaluated in log form.
pub fn rare_event_bound(delta: f64, eta: f64, n: usize, mass: f64) -> Result<f64> {
    if !(eta > 0.0 && eta < delta) {
        return Err(Error::InvalidParameter(alloc::format!("need 0 < η < δ, got η = {eta}, δ = {delta}")));
    }
    let n = n as f64;
    Ok(math::exp(n * n * math::ln(1.0 - eta / (2.0 * delta)) + n * math::ln(mass)))
}

/// `log VDM` threshold `n² log(δ - η)` defining the typical set.
fn rare_threshold(n: usize, delta: f64, eta: f64) -> f64 {
    (n * n) as f64 * math::ln(delta - eta)
}

/// Exact tail probability by enumeration over the quadrature nodes.
pub fn rare_event_exact(spec: &GibbsSpec, mesh: &Mesh, delta: f64, eta: f64) -> Result<RareEvent> {
    let analytic_bound = rare_event_bound(delta, eta, spec.n, spec.base_mass())?;
    let mu = quadrature_measure(spec, mesh)?;
    guard(mu.len(), spec.n)?;
    let nodes = Nodes::new(&mu, &spec.q)?;
    let thr = rare_threshold(spec.n, delta, eta);
    let parts = per_first(spec, &nodes, |_, run| {
        let mut all = LogSumExp::new();
        let mut tail = LogSumExp::new();
        run(&mut |t, l| {
            all.push(t);
            if -l < thr {
                tail.push(t);
            }
        });
        (all, tail)
    });
    let mut all = LogSumExp::new();
    let mut tail = LogSumExp::new();
    for (a, t) in &parts {
        all.merge(a);
        tail.merge(t);
    }
    let p_hat = math::exp(tail.value() - all.value());
    Ok(RareEvent { p_hat, analytic_bound, bound_holds: p_hat <= analytic_bound })
}

/// Tail probability as the fraction of samples below the threshold.
pub fn rare_event_from_samples(spec: &GibbsSpec, samples: &[Points], delta: f64, eta: f64) -> Result<RareEvent> {
    let analytic_bound = rare_event_bound(delta, eta, spec.n, spec.base_mass())?;
    if samples.is_empty() {
        return Err(Error::InvalidParameter("no samples".into()));
    }
    let thr = rare_threshold(spec.n, delta, eta);
    let mut hits = 0usize;
    for s in samples {
        if crate::fekete::log_vdm(s, &spec.kernel, &spec.q)? < thr {
            hits += 1;
        }
    }
    let p_hat = hits as f64 / samples.len() as f64;
    Ok(RareEvent { p_hat, analytic_bound, bound_holds: p_hat <= analytic_bound })
}

/// `P(a → b)` of the sampler for configurations on a discrete base that
/// differ in at most one site, at the spec's exponent. Exposed so detailed
/// balance can be checked by enumeration.
pub fn transition_probability(spec: &GibbsSpec, a: &[usize], b: &[usize]) -> Result<f64> {
    let BaseMeasure::Discrete { measure } = &spec.base else {
        return Err(Error::Unsupported("transition probabilities need a discrete base".into()));
    };
    let nodes = Nodes::new(measure, &spec.q)?;
    let sampler = Sampler { spec, nodes: None };
    let n = spec.n;
    let diff: Vec<usize> = (0..n).filter(|&i| a[i] != b[i]).collect();
    let walker = |idx: &[usize]| -> Result<Walker> {
        let pts = measure.support().select(idx);
        let field: Vec<f64> = idx.iter().map(|&i| nodes.field[i]).collect();
        let l = sampler.full_l(&pts, &field);
        Ok(Walker { points: pts, nodes: idx.to_vec(), field, l })
    };
    let wa = walker(a)?;
    let total: f64 = nodes.weights.iter().sum();
    let move_prob = |i: usize, to: usize| -> f64 {
        let from = a[i];
        let mut p = JUMP_PROBABILITY * nodes.weights[to] / total * accept(&sampler, &wa, i, to, 0.0, &nodes);
        if nodes.knn[from].contains(&to) && nodes.knn[to].contains(&from) {
            let extra = nodes.log_w[to] - nodes.log_w[from] + math::ln(nodes.knn[from].len() as f64)
                - math::ln(nodes.knn[to].len() as f64);
            p += (1.0 - JUMP_PROBABILITY) / nodes.knn[from].len() as f64 * accept(&sampler, &wa, i, to, extra, &nodes);
        }
        p / n as f64
    };
    match diff.len() {
        0 => {
            let mut stay = 1.0;
            for i in 0..n {
                for to in 0..nodes.weights.len() {
                    if to != a[i] {
                        stay -= move_prob(i, to);
                    }
                }
            }
            Ok(stay)
        }
        1 => Ok(move_prob(diff[0], b[diff[0]])),
        _ => Ok(0.0),
    }
}

fn accept(sampler: &Sampler<'_>, w: &Walker, i: usize, to: usize, extra: f64, nodes: &Nodes<'_>) -> f64 {
    let p = Proposal { y: nodes.points.get(to).to_vec(), node: to, field: nodes.field[to], log_extra: extra, local: false };
    let beta = sampler.spec.exponent;
    if !w.l.is_finite() {
        let mut t = w.clone();
        t.points.set(i, &p.y);
        t.field[i] = p.field;
        return if sampler.full_l(&t.points, &t.field).is_finite() || beta == 0.0 { 1.0 } else { 0.0 };
    }
    let dl = sampler.delta(w, i, &p);
    let la = if beta == 0.0 { extra } else { -beta * dl + extra };
    math::exp(la.min(0.0))
}
