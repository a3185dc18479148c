//! Empirical measures, a sliced transport distance, `J` functionals and
//! numerical large-deviation scans.
//!
//! Weak neighbourhoods are balls in the sliced 1-Wasserstein distance over
//! a fixed, seeded set of directions, so ball membership of a sampled
//! configuration is reproducible and cheap.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::equilibrium::EquilibriumSolution;
use crate::gibbs::{BaseMeasure, GibbsSpec};
use crate::math::{self, LogSumExp};
use crate::par::map_tasks;
use crate::rng::{child_seed, stream};
use crate::{CompactSet, DiscreteMeasure, Error, ExternalField, Points, Result, RieszKernel};

/// Default number of slicing directions.
pub const DEFAULT_DIRECTIONS: usize = 64;

/// `(1/n) Σ δ_{x_j}`; coincident points share one atom.
pub fn empirical_measure(config: &Points) -> Result<DiscreteMeasure> {
    let n = config.len();
    if n == 0 {
        return Err(Error::InvalidMeasure("empty configuration".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        let (x, y) = (config.get(a), config.get(b));
        x.iter().zip(y).map(|(u, v)| u.total_cmp(v)).find(|o| o.is_ne()).unwrap_or(core::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    // atom of each point, keyed by its first occurrence
    let mut atom_of = vec![usize::MAX; n];
    for w in order.windows(2) {
        if config.get(w[0]) == config.get(w[1]) {
            let root = if atom_of[w[0]] == usize::MAX { w[0] } else { atom_of[w[0]] };
            atom_of[w[1]] = root;
        }
    }
    let mut support = Points::with_capacity(config.dim(), n);
    let mut slot = vec![usize::MAX; n];
    let mut counts: Vec<usize> = Vec::new();
    for i in 0..n {
        let root = if atom_of[i] == usize::MAX { i } else { atom_of[i] };
        if slot[root] == usize::MAX {
            slot[root] = counts.len();
            counts.push(0);
            support.push(config.get(root))?;
        }
        counts[slot[root]] += 1;
    }
    DiscreteMeasure::new(support, counts.into_iter().map(|c| c as f64 / n as f64).collect())
}

/// A fixed set of unit directions.
///
/// In `R^3` this is a Fibonacci lattice on the sphere turned by a seeded
/// random rotation; in other dimensions, normalized Gaussian vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Directions {
    dim: usize,
    units: Vec<Vec<f64>>,
}

impl Directions {
    pub fn new(dim: usize, count: usize, seed: u64) -> Result<Self> {
        if count == 0 || dim == 0 {
            return Err(Error::InvalidParameter("need at least one direction".into()));
        }
        let mut rng = stream(seed, 0);
        let units = if dim == 3 {
            let rot = random_rotation(&mut rng);
            let golden = math::PI * (3.0 - math::sqrt(5.0));
            (0..count)
                .map(|k| {
                    let z = 1.0 - (2 * k + 1) as f64 / count as f64;
                    let r = math::sqrt(1.0 - z * z);
                    let phi = golden * k as f64;
                    let v = [r * math::cos(phi), r * math::sin(phi), z];
                    (0..3).map(|i| (0..3).map(|j| rot[i][j] * v[j]).sum()).collect()
                })
                .collect()
        } else {
            (0..count)
                .map(|_| loop {
                    let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
                    let nv = math::norm(&v);
                    if nv > 1e-12 {
                        break v.iter().map(|x| x / nv).collect();
                    }
                })
                .collect()
        };
        Ok(Self { dim, units })
    }

    /// A single direction, for exact checks along a line.
    pub fn from_units(units: Vec<Vec<f64>>) -> Result<Self> {
        let dim = units.first().map(|u| u.len()).ok_or_else(|| Error::InvalidParameter("no directions".into()))?;
        for u in &units {
            if u.len() != dim || (math::norm(u) - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidParameter("directions must be unit vectors of one dimension".into()));
            }
        }
        Ok(Self { dim, units })
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn units(&self) -> &[Vec<f64>] {
        &self.units
    }

    /// Sorted projections of `mu` on every direction, with weights
    /// normalized to total 1.
    pub fn project(&self, mu: &DiscreteMeasure) -> Result<Projected> {
        if mu.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: mu.dim() });
        }
        let total = mu.mass();
        if !(total > 0.0) {
            return Err(Error::InvalidMeasure("zero mass".into()));
        }
        let lines = self
            .units
            .iter()
            .map(|u| {
                let mut line: Vec<(f64, f64)> =
                    mu.support().iter().zip(mu.weights()).map(|(x, w)| (math::dot(x, u), w / total)).collect();
                line.sort_by(|a, b| a.0.total_cmp(&b.0));
                line
            })
            .collect();
        Ok(Projected { lines })
    }

    /// Sliced 1-Wasserstein distance.
    pub fn distance(&self, mu: &DiscreteMeasure, sigma: &DiscreteMeasure) -> Result<f64> {
        Ok(self.project(mu)?.distance(&self.project(sigma)?))
    }

    /// Distance from the empirical measure of `config` to a projected
    /// measure, without building the empirical measure.
    pub fn distance_to_config(&self, target: &Projected, config: &Points) -> f64 {
        let w = 1.0 / config.len() as f64;
        let mut line = Vec::with_capacity(config.len());
        let mut total = 0.0;
        for (u, t) in self.units.iter().zip(&target.lines) {
            line.clear();
            line.extend(config.iter().map(|x| (math::dot(x, u), w)));
            line.sort_by(|a, b| a.0.total_cmp(&b.0));
            total += w1_sorted(&line, t);
        }
        total / self.units.len() as f64
    }
}

fn random_rotation<R: Rng + ?Sized>(rng: &mut R) -> [[f64; 3]; 3] {
    let mut q = [0.0f64; 4];
    loop {
        for c in q.iter_mut() {
            *c = StandardNormal.sample(rng);
        }
        let n = math::norm(&q);
        if n > 1e-12 {
            q.iter_mut().for_each(|c| *c /= n);
            break;
        }
    }
    let [w, x, y, z] = q;
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - z * w), 2.0 * (x * z + y * w)],
        [2.0 * (x * y + z * w), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - x * w)],
        [2.0 * (x * z - y * w), 2.0 * (y * z + x * w), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

/// A measure projected on each direction of a [`Directions`] set.
#[derive(Debug, Clone, PartialEq)]
pub struct Projected {
    lines: Vec<Vec<(f64, f64)>>,
}

impl Projected {
    pub fn distance(&self, other: &Projected) -> f64 {
        let s: f64 = self.lines.iter().zip(&other.lines).map(|(a, b)| w1_sorted(a, b)).sum();
        s / self.lines.len() as f64
    }
}

/// `∫ |F_a - F_b|` for two sorted weighted atom lists of equal mass.
fn w1_sorted(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let (mut i, mut j) = (0, 0);
    let (mut fa, mut fb) = (0.0f64, 0.0f64);
    let mut prev = f64::NAN;
    let mut total = 0.0;
    while i < a.len() || j < b.len() {
        let next = match (a.get(i), b.get(j)) {
            (Some(x), Some(y)) => x.0.min(y.0),
            (Some(x), None) => x.0,
            (None, Some(y)) => y.0,
            (None, None) => unreachable!(),
        };
        if !prev.is_nan() {
            total += (fa - fb).abs() * (next - prev);
        }
        prev = next;
        while i < a.len() && a[i].0 == next {
            fa += a[i].1;
            i += 1;
        }
        while j < b.len() && b[j].0 == next {
            fb += b[j].1;
            j += 1;
        }
    }
    total
}

/// Sliced 1-Wasserstein distance with `directions` seeded directions.
pub fn measure_distance(mu: &DiscreteMeasure, sigma: &DiscreteMeasure, directions: usize, seed: u64) -> Result<f64> {
    Directions::new(mu.dim(), directions, seed)?.distance(mu, sigma)
}

/// Exact 1-Wasserstein distance between measures supported on the line
/// `origin + t·unit`; points are projected on `unit` first.
pub fn line_wasserstein(mu: &DiscreteMeasure, sigma: &DiscreteMeasure, unit: &[f64]) -> Result<f64> {
    Directions::from_units(vec![unit.to_vec()])?.distance(mu, sigma)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureBall {
    pub center: DiscreteMeasure,
    /// Radius in the sliced distance; `inf` gives the whole space.
    pub radius: f64,
}

impl MeasureBall {
    pub fn new(center: DiscreteMeasure, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::InvalidParameter(alloc::format!("ball radius {radius}")));
        }
        Ok(Self { center, radius })
    }

    pub fn whole_space(center: DiscreteMeasure) -> Self {
        Self { center, radius: f64::INFINITY }
    }
}

/// Draws from `ν^n` normalized to a probability measure.
struct BaseDraw<'a> {
    spec: &'a GibbsSpec,
    cumulative: Vec<f64>,
}

impl<'a> BaseDraw<'a> {
    fn new(spec: &'a GibbsSpec) -> Self {
        let cumulative = match &spec.base {
            BaseMeasure::Discrete { measure } => {
                let mut acc = 0.0;
                measure
                    .weights()
                    .iter()
                    .map(|w| {
                        acc += w;
                        acc
                    })
                    .collect()
            }
            BaseMeasure::Continuous { .. } => Vec::new(),
        };
        Self { spec, cumulative }
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Points> {
        let d = self.spec.set.dim();
        let mut pts = Points::with_capacity(d, self.spec.n);
        for _ in 0..self.spec.n {
            match &self.spec.base {
                BaseMeasure::Discrete { measure } => {
                    let total = *self.cumulative.last().expect("nonempty base");
                    let u = rng.random::<f64>() * total;
                    let mut i = self.cumulative.partition_point(|c| *c <= u).min(measure.len() - 1);
                    while measure.weights()[i] == 0.0 && i > 0 {
                        i -= 1;
                    }
                    pts.push(measure.support().get(i))?;
                }
                BaseMeasure::Continuous { .. } => pts.push(&self.spec.set.sample_uniform(rng))?,
            }
        }
        Ok(pts)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum JMode {
    /// Sum over every node tuple of a discrete base.
    Exhaustive,
    /// Plain Monte Carlo over `ν^n`.
    MonteCarlo { samples: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JEstimate {
    /// `(1/n²) log ∫_{ball} exp(-e L_n) dν^n`.
    pub log_j: f64,
    pub hits: usize,
    pub total: usize,
    /// No configuration landed in the ball; `log_j` is `-inf`.
    pub flagged: bool,
}

/// `log J_n` of a ball: the Gibbs weight of configurations whose empirical
/// measure lies in the ball, in units of `n²`.
pub fn j_functional_estimate(
    ball: &MeasureBall,
    spec: &GibbsSpec,
    mode: JMode,
    directions: &Directions,
    seed: u64,
) -> Result<JEstimate> {
    let n = spec.n;
    let n2 = (n * n) as f64;
    let target = directions.project(&ball.center)?;
    let inside = |cfg: &Points| ball.radius.is_infinite() || directions.distance_to_config(&target, cfg) <= ball.radius;
    match mode {
        JMode::Exhaustive => {
            let BaseMeasure::Discrete { measure } = &spec.base else {
                return Err(Error::Unsupported("exhaustive J needs a discrete base".into()));
            };
            let len = measure.len();
            let terms = math::powf(len as f64, n as f64);
            if terms > crate::gibbs::QUADRATURE_LIMIT {
                return Err(Error::QuadratureTooLarge { terms, limit: crate::gibbs::QUADRATURE_LIMIT });
            }
            let logw: Vec<f64> = measure.weights().iter().map(|w| math::ln(*w)).collect();
            let mut idx = vec![0usize; n];
            let mut acc = LogSumExp::new();
            let (mut hits, mut total) = (0, 0);
            loop {
                let cfg = measure.support().select(&idx);
                total += 1;
                if inside(&cfg) {
                    hits += 1;
                    let lw: f64 = idx.iter().map(|&i| logw[i]).sum();
                    let e = spec.energy(&cfg)?;
                    acc.push(if e.is_finite() { lw - e } else { f64::NEG_INFINITY });
                }
                let mut k = 0;
                loop {
                    if k == n {
                        let log_j = acc.value() / n2;
                        return Ok(JEstimate { log_j, hits, total, flagged: hits == 0 });
                    }
                    idx[k] += 1;
                    if idx[k] < len {
                        break;
                    }
                    idx[k] = 0;
                    k += 1;
                }
            }
        }
        JMode::MonteCarlo { samples } => {
            if samples < 100 {
                return Err(Error::InvalidParameter("Monte Carlo J needs at least 100 samples".into()));
            }
            let draw = BaseDraw::new(spec);
            let terms = map_tasks(samples, |s| -> Result<Option<f64>> {
                let mut rng = stream(seed, s as u64);
                let cfg = draw.draw(&mut rng)?;
                if !inside(&cfg) {
                    return Ok(None);
                }
                let e = spec.energy(&cfg)?;
                Ok(Some(if e.is_finite() { -e } else { f64::NEG_INFINITY }))
            });
            let mut acc = LogSumExp::new();
            let mut hits = 0;
            for t in terms {
                if let Some(v) = t? {
                    hits += 1;
                    acc.push(v);
                }
            }
            let log_mean = acc.value() - math::ln(samples as f64);
            let log_j = (n as f64 * math::ln(spec.base_mass()) + log_mean) / n2;
            Ok(JEstimate { log_j, hits, total: samples, flagged: hits == 0 })
        }
    }
}

/// `I^Q(center) - V_w`, with the equilibrium's own diagonal policy.
pub fn rate_function(
    center: &DiscreteMeasure,
    kernel: &RieszKernel,
    q: &ExternalField,
    equilibrium: &EquilibriumSolution,
) -> Result<f64> {
    Ok(crate::energy::weighted_energy(kernel, center, q, equilibrium.policy)? - equilibrium.value)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanParams {
    pub n_list: Vec<usize>,
    pub samples: usize,
    pub directions: usize,
    pub seed: u64,
}

impl Default for ScanParams {
    fn default() -> Self {
        Self { n_list: vec![4, 8, 12, 16], samples: 20000, directions: DEFAULT_DIRECTIONS, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub n: usize,
    /// `-(1/n²) log σ_n(ball)`.
    pub neg_log_mass_over_n2: f64,
    pub hits: usize,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub center_id: usize,
    pub i_q_center: f64,
    pub i_q_eq: f64,
    pub rate: f64,
    pub per_n: Vec<RateRow>,
}

/// For every ball and `n`, `-(1/n²) log σ_n(ball)` next to the rate of the
/// ball's centre.
///
/// All balls share the same `ν^n` samples for a given `n`, and `σ_n` is
/// self-normalized over those samples: the Gibbs weight inside the ball
/// divided by the Gibbs weight of all samples. A ball covering the whole
/// space therefore gets exactly 0.
pub fn ldp_scan(
    balls: &[MeasureBall],
    template: &GibbsSpec,
    equilibrium: &EquilibriumSolution,
    params: &ScanParams,
) -> Result<Vec<RateReport>> {
    let dirs = Directions::new(template.set.dim(), params.directions, params.seed)?;
    let targets: Vec<Projected> = balls.iter().map(|b| dirs.project(&b.center)).collect::<Result<_>>()?;
    let mut reports: Vec<RateReport> = balls
        .iter()
        .enumerate()
        .map(|(id, b)| {
            let i_q = crate::energy::weighted_energy(&template.kernel, &b.center, &template.q, equilibrium.policy)?;
            Ok(RateReport { center_id: id, i_q_center: i_q, i_q_eq: equilibrium.value, rate: i_q - equilibrium.value, per_n: Vec::new() })
        })
        .collect::<Result<_>>()?;
    for &n in &params.n_list {
        let spec = template.with_n(n)?;
        let draw = BaseDraw::new(&spec);
        let seed = child_seed(params.seed, n as u64);
        let rows = map_tasks(params.samples, |s| -> Result<(f64, Vec<f64>)> {
            let mut rng = stream(seed, s as u64);
            let cfg = draw.draw(&mut rng)?;
            let e = spec.energy(&cfg)?;
            let d = balls
                .iter()
                .zip(&targets)
                .map(|(b, t)| if b.radius.is_infinite() { 0.0 } else { dirs.distance_to_config(t, &cfg) })
                .collect();
            Ok((if e.is_finite() { -e } else { f64::NEG_INFINITY }, d))
        });
        let rows: Vec<(f64, Vec<f64>)> = rows.into_iter().collect::<Result<_>>()?;
        let log_all = weight_where(&rows, |_| true);
        let n2 = (n * n) as f64;
        for (k, b) in balls.iter().enumerate() {
            let hits = rows.iter().filter(|r| r.1[k] <= b.radius).count();
            let log_in = weight_where(&rows, |d| d[k] <= b.radius);
            // adding 0.0 turns a -0.0 into 0.0
            let value = -(log_in - log_all) / n2 + 0.0;
            reports[k].per_n.push(RateRow { n, neg_log_mass_over_n2: value, hits, flagged: hits == 0 });
        }
    }
    Ok(reports)
}

fn weight_where<F: Fn(&[f64]) -> bool>(rows: &[(f64, Vec<f64>)], keep: F) -> f64 {
    let mut acc = LogSumExp::new();
    for (lw, d) in rows {
        if keep(d) {
            acc.push(*lw);
        }
    }
    acc.value()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub distance: f64,
    pub d_n: f64,
}

/// Distance from the empirical measure of an optimized Fekete configuration
/// to the equilibrium measure, for each `n`.
pub fn fekete_empirical_convergence(
    set: &CompactSet,
    kernel: &RieszKernel,
    q: &ExternalField,
    equilibrium: &DiscreteMeasure,
    n_list: &[usize],
    fekete: &crate::fekete::FeketeParams,
    directions: usize,
) -> Result<Vec<ConvergenceRow>> {
    let dirs = Directions::new(set.dim(), directions, fekete.seed)?;
    let target = dirs.project(equilibrium)?;
    n_list
        .iter()
        .map(|&n| {
            let p = crate::fekete::FeketeParams { seed: child_seed(fekete.seed, n as u64), ..fekete.clone() };
            let r = crate::fekete::optimize_fekete(set, kernel, q, n, &p, Some(equilibrium))?;
            Ok(ConvergenceRow { n, distance: dirs.distance_to_config(&target, &r.points), d_n: r.d_n })
        })
        .collect()
}
