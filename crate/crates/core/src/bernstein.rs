//! The class `P_n^Q` and probes of its Bernstein and Bernstein–Markov
//! constants.
//!
//! Members are `f(y) = exp(-Σ_j |y - x_j|^{-α} - 2n Q(y))` for poles
//! `x_2 … x_n ∈ K`. Values are kept in log form throughout: at `n = 64`
//! the functions routinely sit below `1e-300` over most of `K`.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::math::{self, dist2, LogSumExp};
use crate::par::map_tasks;
use crate::rng::stream;
use crate::{CompactSet, DiscreteMeasure, Error, ExternalField, Points, Result, RieszKernel};

#[derive(Debug, Clone, PartialEq)]
pub struct PnFunction {
    poles: Points,
    kernel: RieszKernel,
    q: ExternalField,
}

impl PnFunction {
    pub fn new(poles: Points, kernel: RieszKernel, q: ExternalField) -> Result<Self> {
        if poles.dim() != kernel.dim() || q.dim() != kernel.dim() {
            return Err(Error::DimensionMismatch { expected: kernel.dim(), found: poles.dim() });
        }
        Ok(Self { poles, kernel, q })
    }

    /// Unweighted member (`Q ≡ 0`).
    pub fn unweighted(poles: Points, kernel: RieszKernel) -> Result<Self> {
        let d = kernel.dim();
        Self::new(poles, kernel, ExternalField::zero(d))
    }

    /// `n = #poles + 1`.
    pub fn n(&self) -> usize {
        self.poles.len() + 1
    }

    pub fn poles(&self) -> &Points {
        &self.poles
    }

    /// `log f(y)`; `-inf` at a pole.
    pub fn log_value(&self, y: &[f64]) -> Result<f64> {
        let mut s = 0.0;
        for x in self.poles.iter() {
            s += self.kernel.raw(y, x);
        }
        if s == f64::INFINITY {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(-s - 2.0 * self.n() as f64 * self.q.value(y)?)
    }

    /// `∇ log f(y) = α Σ_j |y - x_j|^{-α-2} (y - x_j) - 2n ∇Q(y)`.
    pub fn log_gradient(&self, y: &[f64]) -> Result<Vec<f64>> {
        let mut g = vec![0.0; y.len()];
        for x in self.poles.iter() {
            self.kernel.add_grad_x(y, x, -1.0, &mut g);
        }
        let gq = self.q.gradient(y)?;
        let c = 2.0 * self.n() as f64;
        for (gk, qk) in g.iter_mut().zip(gq) {
            *gk -= c * qk;
        }
        Ok(g)
    }

    /// `∇f(y) = f(y) ∇ log f(y)`; zero at a pole, where `f` vanishes to
    /// infinite order.
    pub fn gradient(&self, y: &[f64]) -> Result<Vec<f64>> {
        let lf = self.log_value(y)?;
        if lf == f64::NEG_INFINITY {
            return Ok(vec![0.0; y.len()]);
        }
        let f = math::exp(lf);
        Ok(self.log_gradient(y)?.into_iter().map(|g| f * g).collect())
    }

    /// `log |∇f(y)|`, finite even where `f` underflows.
    pub fn log_gradient_norm(&self, y: &[f64]) -> Result<f64> {
        let lf = self.log_value(y)?;
        if lf == f64::NEG_INFINITY {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(lf + math::ln(math::norm(&self.log_gradient(y)?)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupNorm {
    /// `log ‖f‖_K`.
    pub log_value: f64,
    pub argmax: Vec<f64>,
}

/// `‖f‖_K` from a scan over `scan` followed by `refine_rounds` steps of
/// projected gradient ascent on `log f` from the five best scan points.
pub fn sup_norm_estimate(f: &PnFunction, set: &CompactSet, scan: &Points, refine_rounds: usize) -> Result<SupNorm> {
    if scan.is_empty() {
        return Err(Error::InvalidParameter("empty scan set".into()));
    }
    let vals: Vec<f64> = scan.iter().map(|y| f.log_value(y)).collect::<Result<_>>()?;
    let mut order: Vec<usize> = (0..vals.len()).collect();
    order.sort_by(|a, b| vals[*b].total_cmp(&vals[*a]).then(a.cmp(b)));
    let mut best = SupNorm { log_value: vals[order[0]], argmax: scan.get(order[0]).to_vec() };
    if refine_rounds == 0 {
        return Ok(best);
    }
    let diam = set.diameter();
    for &i in order.iter().take(5) {
        let mut y = scan.get(i).to_vec();
        let mut v = vals[i];
        if v == f64::NEG_INFINITY {
            continue;
        }
        let mut t = 1e-2 * diam;
        for _ in 0..refine_rounds {
            let g = f.log_gradient(&y)?;
            let gn = math::norm(&g);
            if gn == 0.0 || t < 1e-12 * diam {
                break;
            }
            let trial: Vec<f64> = y.iter().zip(&g).map(|(a, b)| a + t * b / gn).collect();
            let trial = set.project(&trial);
            let tv = f.log_value(&trial)?;
            if tv > v {
                y = trial;
                v = tv;
                t *= 1.5;
            } else {
                t *= 0.5;
            }
        }
        if v > best.log_value {
            best = SupNorm { log_value: v, argmax: y };
        }
    }
    Ok(best)
}

/// Lower bound on `log ‖f‖_K` valid for every member of `P_n` on a set of
/// dimension at least `m`: `-2^α n^{1 + 2α/m}`.
pub fn sup_norm_floor(alpha: f64, n: usize, m: f64) -> f64 {
    -math::powf(2.0, alpha) * math::powf(n as f64, 1.0 + 2.0 * alpha / m)
}

/// Exponent `β` in `‖∇f‖_K ≤ C n^β ‖f‖_K`: `2 + 1/α + 2α/m + 2/m`.
pub fn bernstein_exponent(alpha: f64, m: f64) -> f64 {
    2.0 + 1.0 / alpha + 2.0 * alpha / m + 2.0 / m
}

/// How the `n - 1` poles of a trial are placed on the mesh.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolePattern {
    /// Distinct mesh nodes, uniformly.
    Uniform,
    /// The nodes nearest to a uniformly chosen node: all poles in one cap.
    Cluster,
}

/// Poles for trial `t`: even trials are uniform, odd ones clustered.
pub fn trial_pattern(t: usize) -> PolePattern {
    if t % 2 == 0 {
        PolePattern::Uniform
    } else {
        PolePattern::Cluster
    }
}

pub fn sample_poles<R: Rng + ?Sized>(mesh: &Points, count: usize, pattern: PolePattern, rng: &mut R) -> Result<Points> {
    if count > mesh.len() {
        return Err(Error::InvalidParameter(alloc::format!("{count} poles on {} nodes", mesh.len())));
    }
    match pattern {
        PolePattern::Uniform => Ok(mesh.select(&sample(rng, mesh.len(), count).into_vec())),
        PolePattern::Cluster => {
            let c = mesh.get(rng.random_range(0..mesh.len())).to_vec();
            let mut idx: Vec<usize> = (0..mesh.len()).collect();
            idx.sort_by(|a, b| dist2(mesh.get(*a), &c).total_cmp(&dist2(mesh.get(*b), &c)).then(a.cmp(b)));
            idx.truncate(count);
            Ok(mesh.select(&idx))
        }
    }
}

/// `log (‖∇f‖_K / ‖f‖_K)` with both norms taken over the scan points.
pub fn log_bernstein_ratio(f: &PnFunction, scan: &Points) -> Result<f64> {
    let mut top = f64::NEG_INFINITY;
    let mut grad = f64::NEG_INFINITY;
    for y in scan.iter() {
        top = top.max(f.log_value(y)?);
        grad = grad.max(f.log_gradient_norm(y)?);
    }
    Ok(grad - top)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BernsteinRow {
    pub n: usize,
    pub max_ratio: f64,
    /// `C n^β` with the fitted constant.
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BernsteinProbe {
    pub rows: Vec<BernsteinRow>,
    pub beta: f64,
    /// `max ratio / n^β` over every trial.
    pub constant: f64,
    /// Least-squares slope of `log max_ratio` against `log n`.
    pub fitted_beta: f64,
    /// Every observed ratio, by `n` then trial.
    pub ratios: Vec<Vec<f64>>,
}

/// Samples `trials` unweighted members of `P_n` per `n` with poles on the
/// mesh, alternating uniform and clustered pole patterns.
pub fn bernstein_ratio_probe(
    mesh: &Points,
    kernel: &RieszKernel,
    n_list: &[usize],
    trials: usize,
    m: f64,
    seed: u64,
) -> Result<BernsteinProbe> {
    if trials == 0 || n_list.is_empty() {
        return Err(Error::InvalidParameter("need trials and at least one n".into()));
    }
    let beta = bernstein_exponent(kernel.alpha(), m);
    let mut ratios = Vec::with_capacity(n_list.len());
    for (slot, &n) in n_list.iter().enumerate() {
        if n < 2 {
            return Err(Error::InvalidParameter(alloc::format!("n = {n} < 2")));
        }
        let r = map_tasks(trials, |t| -> Result<f64> {
            let mut rng = stream(seed, (slot * trials + t) as u64);
            let poles = sample_poles(mesh, n - 1, trial_pattern(t), &mut rng)?;
            let f = PnFunction::unweighted(poles, *kernel)?;
            Ok(math::exp(log_bernstein_ratio(&f, mesh)?))
        });
        ratios.push(r.into_iter().collect::<Result<Vec<f64>>>()?);
    }
    let constant = n_list
        .iter()
        .zip(&ratios)
        .flat_map(|(n, rs)| rs.iter().map(move |r| r / math::powf(*n as f64, beta)))
        .fold(0.0, f64::max);
    let rows: Vec<BernsteinRow> = n_list
        .iter()
        .zip(&ratios)
        .map(|(&n, rs)| BernsteinRow {
            n,
            max_ratio: rs.iter().copied().fold(0.0, f64::max),
            bound: constant * math::powf(n as f64, beta),
        })
        .collect();
    let lx: Vec<f64> = rows.iter().map(|r| math::ln(r.n as f64)).collect();
    let ly: Vec<f64> = rows.iter().map(|r| math::ln(r.max_ratio)).collect();
    let fitted_beta = if rows.len() >= 2 { math::linear_fit(&lx, &ly).1 } else { f64::NAN };
    Ok(BernsteinProbe { rows, beta, constant, fitted_beta, ratios })
}

/// `log (‖f‖_K / ∫ f dμ)` for one member, with the sup taken over μ's
/// support (refined off it) so the ratio is never below `1/mass(μ)`.
pub fn log_bm_ratio(f: &PnFunction, mu: &DiscreteMeasure, set: &CompactSet, refine_rounds: usize) -> Result<f64> {
    let sup = sup_norm_estimate(f, set, mu.support(), refine_rounds)?;
    let mut acc = LogSumExp::new();
    for (y, w) in mu.support().iter().zip(mu.weights()) {
        if *w > 0.0 {
            acc.push(math::ln(*w) + f.log_value(y)?);
        }
    }
    Ok(sup.log_value - acc.value())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BmRecord {
    pub n: usize,
    pub log_m_hat: f64,
    pub m_hat: f64,
    /// `M̂_n^{1/n}`.
    pub root: f64,
    pub trials: usize,
}

/// Largest observed `‖f‖_K / ∫ f dμ` over weighted members of `P_n^Q` with
/// poles on μ's support, for each `n`.
#[allow(clippy::too_many_arguments)]
pub fn bm_constant_probe(
    mu: &DiscreteMeasure,
    set: &CompactSet,
    kernel: &RieszKernel,
    q: &ExternalField,
    n_list: &[usize],
    trials: usize,
    refine_rounds: usize,
    seed: u64,
) -> Result<Vec<BmRecord>> {
    if trials == 0 {
        return Err(Error::InvalidParameter("need at least one trial".into()));
    }
    let mut out = Vec::with_capacity(n_list.len());
    for (slot, &n) in n_list.iter().enumerate() {
        if n < 2 {
            return Err(Error::InvalidParameter(alloc::format!("n = {n} < 2")));
        }
        let r = map_tasks(trials, |t| -> Result<f64> {
            let mut rng = stream(seed, (slot * trials + t) as u64);
            let poles = sample_poles(mu.support(), n - 1, trial_pattern(t), &mut rng)?;
            let f = PnFunction::new(poles, *kernel, q.clone())?;
            log_bm_ratio(&f, mu, set, refine_rounds)
        });
        let log_m_hat = r.into_iter().collect::<Result<Vec<f64>>>()?.into_iter().fold(f64::NEG_INFINITY, f64::max);
        out.push(BmRecord {
            n,
            log_m_hat,
            m_hat: math::exp(log_m_hat),
            root: math::exp(log_m_hat / n as f64),
            trials,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassDensityReport {
    pub t_best: f64,
    pub c_best: f64,
    /// Largest radius tested.
    pub r0: f64,
    pub pass: bool,
    /// `(T, c(T))` for every exponent tried.
    pub per_exponent: Vec<(f64, f64)>,
    /// Centre indices where some ball was empty.
    pub empty_centres: Vec<usize>,
}

/// Margin above which `c` counts as positive.
pub const MASS_DENSITY_MARGIN: f64 = 1e-12;

/// `c(T) = min_{x, r} μ(B(x, r)) / r^T` over the given centres and radii.
pub fn mass_density_probe(mu: &DiscreteMeasure, centres: &Points, t_grid: &[f64], r_grid: &[f64]) -> Result<MassDensityReport> {
    if t_grid.is_empty() || r_grid.is_empty() || centres.is_empty() {
        return Err(Error::InvalidParameter("empty exponent, radius or centre grid".into()));
    }
    if r_grid.windows(2).any(|w| w[1] >= w[0]) || r_grid.iter().any(|r| *r <= 0.0) {
        return Err(Error::InvalidParameter("radii must be positive and descending".into()));
    }
    let masses: Vec<Vec<f64>> = map_tasks(centres.len(), |i| {
        r_grid.iter().map(|r| mu.ball_mass(centres.get(i), *r)).collect()
    });
    let empty_centres: Vec<usize> = (0..centres.len()).filter(|&i| masses[i].contains(&0.0)).collect();
    let per_exponent: Vec<(f64, f64)> = t_grid
        .iter()
        .map(|&t| {
            let c = masses
                .iter()
                .flat_map(|row| row.iter().zip(r_grid).map(move |(m, r)| m / math::powf(*r, t)))
                .fold(f64::INFINITY, f64::min);
            (t, c)
        })
        .collect();
    let (t_best, c_best) = per_exponent
        .iter()
        .copied()
        .fold((f64::NAN, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });
    Ok(MassDensityReport {
        t_best,
        c_best,
        r0: r_grid[0],
        pass: c_best > MASS_DENSITY_MARGIN,
        per_exponent,
        empty_centres,
    })
}
