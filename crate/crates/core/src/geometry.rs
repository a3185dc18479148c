//! Compact sets `K ⊂ R^d`, quasi-uniform meshes carrying their reference
//! measures, and the covering/dimension estimators.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::math::{self, dist, dist2, sqrt, PI};
use crate::measure::DiscreteMeasure;
use crate::{Error, Points, Result};

/// Points within this distance of a set count as lying on it.
pub const ON_SET_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SetKind {
    /// `{x : |x - center| = radius}`, the full `(d-1)`-sphere.
    Sphere { center: Vec<f64>, radius: f64 },
    /// Circle in the coordinate plane spanned by `axes`, through `center`.
    Circle { center: Vec<f64>, radius: f64, axes: [usize; 2] },
    /// Axis-aligned box; `lower[k] == upper[k]` flattens coordinate `k`.
    Box { lower: Vec<f64>, upper: Vec<f64> },
    /// Finite set with a nominal spacing.
    PointCloud { points: Points, spacing: f64 },
    Union { parts: Vec<CompactSet> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompactSet {
    dim: usize,
    kind: SetKind,
}

fn check_dim(d: usize) -> Result<()> {
    if d < 3 {
        Err(Error::AmbientDimension(d))
    } else {
        Ok(())
    }
}

fn check_finite(xs: &[f64], what: &str) -> Result<()> {
    if xs.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidSet(format!("{what} has non-finite coordinates")))
    }
}

impl CompactSet {
    pub fn sphere(center: Vec<f64>, radius: f64) -> Result<Self> {
        check_dim(center.len())?;
        check_finite(&center, "sphere center")?;
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidSet(format!("sphere radius {radius}")));
        }
        Ok(Self { dim: center.len(), kind: SetKind::Sphere { center, radius } })
    }

    pub fn unit_sphere(dim: usize) -> Result<Self> {
        Self::sphere(vec![0.0; dim], 1.0)
    }

    pub fn circle(center: Vec<f64>, radius: f64, axes: [usize; 2]) -> Result<Self> {
        let d = center.len();
        check_dim(d)?;
        check_finite(&center, "circle center")?;
        if axes[0] == axes[1] || axes[0] >= d || axes[1] >= d {
            return Err(Error::InvalidSet(format!("circle axes {axes:?} in dimension {d}")));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidSet(format!("circle radius {radius}")));
        }
        Ok(Self { dim: d, kind: SetKind::Circle { center, radius, axes } })
    }

    /// Unit circle in the `x_1 x_2` plane of `R^dim`.
    pub fn unit_circle(dim: usize) -> Result<Self> {
        Self::circle(vec![0.0; dim], 1.0, [0, 1])
    }

    pub fn cuboid(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let d = lower.len();
        check_dim(d)?;
        if upper.len() != d {
            return Err(Error::DimensionMismatch { expected: d, found: upper.len() });
        }
        check_finite(&lower, "box")?;
        check_finite(&upper, "box")?;
        if lower.iter().zip(&upper).any(|(a, b)| a > b) {
            return Err(Error::InvalidSet("box lower corner exceeds upper corner".into()));
        }
        Ok(Self { dim: d, kind: SetKind::Box { lower, upper } })
    }

    pub fn point_cloud(points: Points, spacing: f64) -> Result<Self> {
        check_dim(points.dim())?;
        if points.is_empty() {
            return Err(Error::InvalidSet("empty point cloud".into()));
        }
        check_finite(points.as_flat(), "point cloud")?;
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::InvalidSet(format!("point cloud spacing {spacing}")));
        }
        Ok(Self { dim: points.dim(), kind: SetKind::PointCloud { points, spacing } })
    }

    /// Union of sets. Overlapping parts are allowed; see [`Self::overlapping_parts`].
    pub fn union(parts: Vec<CompactSet>) -> Result<Self> {
        let Some(first) = parts.first() else {
            return Err(Error::InvalidSet("empty union".into()));
        };
        let d = first.dim;
        if let Some(p) = parts.iter().find(|p| p.dim != d) {
            return Err(Error::DimensionMismatch { expected: d, found: p.dim });
        }
        Ok(Self { dim: d, kind: SetKind::Union { parts } })
    }

    /// Rebuilds a set from its parts, re-running validation.
    pub fn from_kind(kind: SetKind) -> Result<Self> {
        match kind {
            SetKind::Sphere { center, radius } => Self::sphere(center, radius),
            SetKind::Circle { center, radius, axes } => Self::circle(center, radius, axes),
            SetKind::Box { lower, upper } => Self::cuboid(lower, upper),
            SetKind::PointCloud { points, spacing } => Self::point_cloud(points, spacing),
            SetKind::Union { parts } => {
                let parts = parts.into_iter().map(|p| Self::from_kind(p.kind)).collect::<Result<_>>()?;
                Self::union(parts)
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &SetKind {
        &self.kind
    }

    /// Total mass of the natural reference measure: surface measure on
    /// spheres and circles, Lebesgue measure on the active face of a box
    /// (counting measure for a degenerate box), counting on clouds.
    pub fn reference_mass(&self) -> f64 {
        match &self.kind {
            SetKind::Sphere { radius, .. } => {
                math::unit_sphere_area(self.dim) * math::powf(*radius, (self.dim - 1) as f64)
            }
            SetKind::Circle { radius, .. } => 2.0 * PI * radius,
            SetKind::Box { lower, upper } => {
                lower.iter().zip(upper).map(|(a, b)| b - a).filter(|e| *e > 0.0).product()
            }
            SetKind::PointCloud { points, .. } => points.len() as f64,
            SetKind::Union { parts } => parts.iter().map(|p| p.reference_mass()).sum(),
        }
    }

    /// Nominal topological dimension of the set (max over union parts).
    pub fn nominal_dimension(&self) -> usize {
        match &self.kind {
            SetKind::Sphere { .. } => self.dim - 1,
            SetKind::Circle { .. } => 1,
            SetKind::Box { lower, upper } => lower.iter().zip(upper).filter(|(a, b)| b > a).count(),
            SetKind::PointCloud { .. } => 0,
            SetKind::Union { parts } => parts.iter().map(|p| p.nominal_dimension()).max().unwrap_or(0),
        }
    }

    /// Euclidean distance from `y` to the set.
    pub fn distance(&self, y: &[f64]) -> f64 {
        match &self.kind {
            SetKind::Sphere { center, radius } => (dist(y, center) - radius).abs(),
            SetKind::Circle { center, radius, axes } => {
                let mut off = 0.0;
                for k in 0..self.dim {
                    if k != axes[0] && k != axes[1] {
                        off += (y[k] - center[k]) * (y[k] - center[k]);
                    }
                }
                let a = y[axes[0]] - center[axes[0]];
                let b = y[axes[1]] - center[axes[1]];
                let rho = sqrt(a * a + b * b);
                sqrt(off + (rho - radius) * (rho - radius))
            }
            SetKind::Box { lower, upper } => {
                let mut s = 0.0;
                for k in 0..self.dim {
                    let c = y[k].clamp(lower[k], upper[k]);
                    s += (y[k] - c) * (y[k] - c);
                }
                sqrt(s)
            }
            SetKind::PointCloud { points, .. } => {
                points.iter().map(|p| dist2(p, y)).fold(f64::INFINITY, f64::min).sqrt_or_inf()
            }
            SetKind::Union { parts } => parts.iter().map(|p| p.distance(y)).fold(f64::INFINITY, f64::min),
        }
    }

    pub fn contains(&self, y: &[f64], tol: f64) -> bool {
        self.distance(y) <= tol
    }

    /// Nearest point of the set to `y`.
    ///
    /// Points already within [`ON_SET_TOL`] are returned unchanged, which
    /// makes the map exactly idempotent.
    pub fn project(&self, y: &[f64]) -> Vec<f64> {
        if self.distance(y) <= ON_SET_TOL {
            return y.to_vec();
        }
        self.project_raw(y)
    }

    fn project_raw(&self, y: &[f64]) -> Vec<f64> {
        match &self.kind {
            SetKind::Sphere { center, radius } => {
                let r = dist(y, center);
                if r == 0.0 {
                    let mut out = center.clone();
                    out[0] += radius;
                    return out;
                }
                center.iter().zip(y).map(|(c, v)| c + radius * (v - c) / r).collect()
            }
            SetKind::Circle { center, radius, axes } => {
                let mut out = center.clone();
                let a = y[axes[0]] - center[axes[0]];
                let b = y[axes[1]] - center[axes[1]];
                let rho = sqrt(a * a + b * b);
                if rho == 0.0 {
                    out[axes[0]] += radius;
                } else {
                    out[axes[0]] += radius * a / rho;
                    out[axes[1]] += radius * b / rho;
                }
                out
            }
            SetKind::Box { lower, upper } => {
                y.iter().enumerate().map(|(k, v)| v.clamp(lower[k], upper[k])).collect()
            }
            SetKind::PointCloud { points, .. } => {
                let i = points.nearest(y).unwrap_or(0);
                points.get(i).to_vec()
            }
            SetKind::Union { parts } => {
                let mut best = None;
                let mut best_d = f64::INFINITY;
                for p in parts {
                    let q = p.project(y);
                    let d = dist2(&q, y);
                    if d < best_d {
                        best_d = d;
                        best = Some(q);
                    }
                }
                best.unwrap_or_else(|| y.to_vec())
            }
        }
    }

    /// Index of the union part nearest to `y` (0 for non-unions).
    pub fn part_index(&self, y: &[f64]) -> usize {
        match &self.kind {
            SetKind::Union { parts } => {
                let mut best = 0;
                let mut best_d = f64::INFINITY;
                for (i, p) in parts.iter().enumerate() {
                    let d = p.distance(y);
                    if d < best_d {
                        best_d = d;
                        best = i;
                    }
                }
                best
            }
            _ => 0,
        }
    }

    pub fn parts(&self) -> &[CompactSet] {
        match &self.kind {
            SetKind::Union { parts } => parts,
            _ => core::slice::from_ref(self),
        }
    }

    /// Draws a point from the normalized reference measure.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match &self.kind {
            SetKind::Sphere { center, radius } => {
                let g = gaussian_direction(self.dim, rng);
                center.iter().zip(&g).map(|(c, u)| c + radius * u).collect()
            }
            SetKind::Circle { center, radius, axes } => {
                let t = 2.0 * PI * rng.random::<f64>();
                let mut out = center.clone();
                out[axes[0]] += radius * math::cos(t);
                out[axes[1]] += radius * math::sin(t);
                out
            }
            SetKind::Box { lower, upper } => lower
                .iter()
                .zip(upper)
                .map(|(a, b)| if b > a { a + (b - a) * rng.random::<f64>() } else { *a })
                .collect(),
            SetKind::PointCloud { points, .. } => points.get(rng.random_range(0..points.len())).to_vec(),
            SetKind::Union { parts } => {
                let total = self.reference_mass();
                let mut u = rng.random::<f64>() * total;
                for p in parts {
                    let m = p.reference_mass();
                    if u < m {
                        return p.sample_uniform(rng);
                    }
                    u -= m;
                }
                parts[parts.len() - 1].sample_uniform(rng)
            }
        }
    }

    /// Diameter: exact for spheres, circles, boxes and clouds; for unions the
    /// maximum over a 256-per-part mesh, which may undershoot slightly.
    pub fn diameter(&self) -> f64 {
        match &self.kind {
            SetKind::Sphere { radius, .. } | SetKind::Circle { radius, .. } => 2.0 * radius,
            SetKind::Box { lower, upper } => dist(lower, upper),
            SetKind::PointCloud { points, .. } => max_pairwise(points),
            SetKind::Union { .. } => match generate_mesh(self, 256) {
                Ok(m) => max_pairwise(&m.points),
                Err(_) => 0.0,
            },
        }
    }

    /// Pairs of union parts that come within `tol` of each other, judged on
    /// meshes of the given resolution. Overlap is allowed but worth flagging.
    pub fn overlapping_parts(&self, resolution: usize, tol: f64) -> Vec<(usize, usize)> {
        let parts = self.parts();
        let mut out = Vec::new();
        for i in 0..parts.len() {
            let Ok(mi) = generate_mesh(&parts[i], resolution) else { continue };
            for (j, pj) in parts.iter().enumerate().skip(i + 1) {
                if mi.points.iter().any(|x| pj.distance(x) <= tol) {
                    out.push((i, j));
                }
            }
        }
        out
    }
}

trait SqrtOrInf {
    fn sqrt_or_inf(self) -> f64;
}

impl SqrtOrInf for f64 {
    fn sqrt_or_inf(self) -> f64 {
        if self.is_finite() {
            sqrt(self)
        } else {
            self
        }
    }
}

fn max_pairwise(p: &Points) -> f64 {
    let mut m: f64 = 0.0;
    for i in 0..p.len() {
        for j in i + 1..p.len() {
            m = m.max(dist2(p.get(i), p.get(j)));
        }
    }
    sqrt(m)
}

pub(crate) fn gaussian_direction<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let g: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let n = math::norm(&g);
        if n > 1e-12 {
            return g.into_iter().map(|v| v / n).collect();
        }
    }
}

/// Quasi-uniform discretization of a set and its reference measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    pub points: Points,
    pub cell_weights: Vec<f64>,
    /// Characteristic length, within a factor 2 of the largest
    /// nearest-neighbour gap.
    pub spacing: f64,
}

impl Mesh {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.cell_weights.iter().sum()
    }

    /// The reference measure carried by the mesh.
    pub fn reference_measure(&self) -> DiscreteMeasure {
        DiscreteMeasure::new(self.points.clone(), self.cell_weights.clone())
            .expect("mesh weights are nonnegative and aligned")
    }

    /// Reference measure scaled to unit mass.
    pub fn normalized_measure(&self) -> DiscreteMeasure {
        self.reference_measure().normalized()
    }

    /// Largest nearest-neighbour distance, by brute force (`O(N^2)`).
    pub fn max_nearest_neighbor_gap(&self) -> f64 {
        max_nn_gap(&self.points)
    }
}

fn max_nn_gap(p: &Points) -> f64 {
    if p.len() < 2 {
        return 0.0;
    }
    let mut worst: f64 = 0.0;
    for i in 0..p.len() {
        let mut best = f64::INFINITY;
        for j in 0..p.len() {
            if i != j {
                best = best.min(dist2(p.get(i), p.get(j)));
            }
        }
        worst = worst.max(best);
    }
    sqrt(worst)
}

/// Largest mesh `generate_mesh` will build.
pub const MAX_MESH_POINTS: usize = 20_000_000;

/// Meshes a set.
///
/// `resolution` is the number of points for spheres and circles and the
/// number of cells per active edge for boxes; point clouds ignore it.
/// Unions mesh every part at the same resolution.
pub fn generate_mesh(set: &CompactSet, resolution: usize) -> Result<Mesh> {
    if resolution < 2 {
        return Err(Error::InvalidParameter(format!("mesh resolution {resolution} < 2")));
    }
    if matches!(set.kind, SetKind::Sphere { .. } | SetKind::Circle { .. }) && resolution > MAX_MESH_POINTS {
        return Err(Error::InvalidParameter(format!("mesh resolution {resolution} above {MAX_MESH_POINTS}")));
    }
    let d = set.dim;
    match &set.kind {
        SetKind::Sphere { center, radius } => {
            let n = resolution;
            let mut pts = Points::with_capacity(d, n);
            if d == 3 {
                let golden = PI * (1.0 + sqrt(5.0));
                for i in 0..n {
                    let t = i as f64 + 0.5;
                    let z = 1.0 - 2.0 * t / n as f64;
                    let r = sqrt((1.0 - z * z).max(0.0));
                    let phi = golden * t;
                    let u = [r * math::cos(phi), r * math::sin(phi), z];
                    let x: Vec<f64> = (0..3).map(|k| center[k] + radius * u[k]).collect();
                    pts.push(&x)?;
                }
            } else {
                // no lattice in higher dimension: fixed-seed uniform draws
                let mut rng = crate::rng::stream(0x5EED_5F4E, d as u64);
                for _ in 0..n {
                    let u = gaussian_direction(d, &mut rng);
                    let x: Vec<f64> = center.iter().zip(&u).map(|(c, v)| c + radius * v).collect();
                    pts.push(&x)?;
                }
            }
            let mass = set.reference_mass();
            let spacing = if d == 3 {
                sqrt(mass / n as f64)
            } else {
                max_nn_gap(&pts)
            };
            Ok(Mesh { points: pts, cell_weights: vec![mass / n as f64; n], spacing })
        }
        SetKind::Circle { center, radius, axes } => {
            let n = resolution;
            let mut pts = Points::with_capacity(d, n);
            for i in 0..n {
                let t = 2.0 * PI * i as f64 / n as f64;
                let mut x = center.clone();
                x[axes[0]] += radius * math::cos(t);
                x[axes[1]] += radius * math::sin(t);
                pts.push(&x)?;
            }
            let spacing = 2.0 * radius * math::sin(PI / n as f64);
            Ok(Mesh { points: pts, cell_weights: vec![2.0 * PI * radius / n as f64; n], spacing })
        }
        SetKind::Box { lower, upper } => {
            let active: Vec<usize> = (0..d).filter(|&k| upper[k] > lower[k]).collect();
            if active.is_empty() {
                let pts = Points::from_flat(d, lower.clone())?;
                return Ok(Mesh { points: pts, cell_weights: vec![1.0], spacing: 1.0 });
            }
            let m = resolution;
            let total = m
                .checked_pow(active.len() as u32)
                .filter(|t| *t <= MAX_MESH_POINTS)
                .ok_or_else(|| Error::InvalidParameter(format!("box mesh with {m}^{} cells", active.len())))?;
            let mut pts = Points::with_capacity(d, total);
            let mut idx = vec![0usize; active.len()];
            let mut x = lower.clone();
            for _ in 0..total {
                for (a, &k) in active.iter().enumerate() {
                    let h = (upper[k] - lower[k]) / m as f64;
                    x[k] = lower[k] + (idx[a] as f64 + 0.5) * h;
                }
                pts.push(&x)?;
                for c in idx.iter_mut() {
                    *c += 1;
                    if *c < m {
                        break;
                    }
                    *c = 0;
                }
            }
            let mass = set.reference_mass();
            let spacing = active
                .iter()
                .map(|&k| (upper[k] - lower[k]) / m as f64)
                .fold(f64::INFINITY, f64::min);
            Ok(Mesh { points: pts, cell_weights: vec![mass / total as f64; total], spacing })
        }
        SetKind::PointCloud { points, spacing } => Ok(Mesh {
            points: points.clone(),
            cell_weights: vec![1.0; points.len()],
            spacing: *spacing,
        }),
        SetKind::Union { parts } => {
            let mut pts = Points::new(d);
            let mut w = Vec::new();
            let mut spacing: f64 = 0.0;
            for p in parts {
                let m = generate_mesh(p, resolution)?;
                pts.extend(&m.points)?;
                w.extend_from_slice(&m.cell_weights);
                if m.len() > 1 {
                    spacing = spacing.max(m.spacing);
                }
            }
            if spacing == 0.0 {
                spacing = 1.0;
            }
            Ok(Mesh { points: pts, cell_weights: w, spacing })
        }
    }
}

/// Greedy farthest-point (k-center) estimate of the covering radius
/// `M_n(K)`: the smallest radius for which `n` closed balls cover the points.
///
/// The greedy radius is at least the optimum and at most twice it. Returns
/// 0 once `n` reaches the number of distinct points.
pub fn covering_radius(points: &Points, n: usize) -> f64 {
    assert!(n >= 1, "covering_radius needs n >= 1");
    let len = points.len();
    if len == 0 || n >= len {
        return 0.0;
    }
    let mut nearest: Vec<f64> = points.iter().map(|p| dist2(p, points.get(0))).collect();
    for _ in 1..n {
        let (far, &fd) = nearest
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("nonempty");
        if fd == 0.0 {
            return 0.0;
        }
        let c = points.get(far);
        for (i, p) in points.iter().enumerate() {
            let d = dist2(p, c);
            if d < nearest[i] {
                nearest[i] = d;
            }
        }
    }
    sqrt(nearest.iter().copied().fold(0.0, f64::max))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxCount {
    pub delta: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxDimension {
    /// Least-squares slope of `log N_δ` against `-log δ` on the central
    /// 80% of the log range.
    pub slope: f64,
    /// Smallest and largest slope between consecutive scales in that range.
    pub lower: f64,
    pub upper: f64,
    pub fit_log: Vec<BoxCount>,
}

/// Scales `max, max/2, max/4, ...` down to at least `min`.
pub fn dyadic_deltas(max: f64, min: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut d = max;
    while d >= min * (1.0 - 1e-12) {
        out.push(d);
        d /= 2.0;
    }
    out
}

/// Scales for box counting on a mesh: dyadic from a quarter of the
/// diameter down to twice the spacing.
pub fn default_box_scales(mesh: &Mesh) -> Vec<f64> {
    let mut hi = 0.0f64;
    let p = &mesh.points;
    // diameter from the bounding box is enough for a starting scale
    for k in 0..p.dim() {
        let (lo, up) = p.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, x| (a.0.min(x[k]), a.1.max(x[k])));
        hi = hi.max(up - lo);
    }
    dyadic_deltas(hi / 4.0, 2.0 * mesh.spacing)
}

/// Number of grid cubes of side `delta` (anchored at the coordinatewise
/// minimum) that contain at least one point.
pub fn occupied_boxes(points: &Points, delta: f64) -> usize {
    let n = points.len();
    if n == 0 {
        return 0;
    }
    let d = points.dim();
    let mut origin = vec![f64::INFINITY; d];
    for p in points.iter() {
        for k in 0..d {
            origin[k] = origin[k].min(p[k]);
        }
    }
    let mut keys = Vec::with_capacity(n * d);
    for p in points.iter() {
        for k in 0..d {
            keys.push(math::floor((p[k] - origin[k]) / delta) as i64);
        }
    }
    let mut order: Vec<u32> = (0..n as u32).collect();
    let key = |i: u32| &keys[i as usize * d..(i as usize + 1) * d];
    order.sort_unstable_by(|&a, &b| key(a).cmp(key(b)));
    1 + order.windows(2).filter(|w| key(w[0]) != key(w[1])).count()
}

/// Box-counting dimension estimate from occupied-box counts at the given
/// scales, which must be strictly descending and span at least one decade.
pub fn box_counting_dimension(points: &Points, deltas: &[f64]) -> Result<BoxDimension> {
    if deltas.len() < 2
        || deltas.iter().any(|d| !(d.is_finite() && *d > 0.0))
        || deltas.windows(2).any(|w| w[1] >= w[0])
        || deltas[0] / deltas[deltas.len() - 1] < 10.0 * (1.0 - 1e-12)
    {
        return Err(Error::InvalidParameter(
            "box-counting scales must be positive, strictly descending and span a decade".into(),
        ));
    }
    let fit_log: Vec<BoxCount> = deltas
        .iter()
        .map(|&delta| BoxCount { delta, count: occupied_boxes(points, delta) })
        .collect();
    let hi = math::ln(deltas[0]);
    let lo = math::ln(deltas[deltas.len() - 1]);
    let band = 0.1 * (hi - lo);
    let eps = 1e-9 * (hi - lo);
    let mut used: Vec<&BoxCount> = fit_log
        .iter()
        .filter(|b| {
            let l = math::ln(b.delta);
            l <= hi - band + eps && l >= lo + band - eps
        })
        .collect();
    if used.len() < 2 {
        used = fit_log.iter().collect();
    }
    let xs: Vec<f64> = used.iter().map(|b| -math::ln(b.delta)).collect();
    let ys: Vec<f64> = used.iter().map(|b| math::ln(b.count as f64)).collect();
    let (_, slope) = math::linear_fit(&xs, &ys);
    let mut lower = f64::INFINITY;
    let mut upper = f64::NEG_INFINITY;
    for k in 0..xs.len() - 1 {
        let s = (ys[k + 1] - ys[k]) / (xs[k + 1] - xs[k]);
        lower = lower.min(s);
        upper = upper.max(s);
    }
    Ok(BoxDimension { slope, lower, upper, fit_log })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalDimension {
    pub dimension: f64,
    /// Radius whose ball produced `dimension`.
    pub radius: f64,
    /// False when no radius met the reliability rule and the estimate comes
    /// from the largest radius tried.
    pub reliable: bool,
}

/// Minimum points in a ball for a local fit to count as reliable.
pub const LOCAL_MIN_POINTS: usize = 32;

/// Local box-counting dimension at `x`.
///
/// For each radius `r` (descending) the points in `B(x, r)` are box-counted
/// over dyadic scales `r/2 … r/32`. A radius is reliable when the ball holds
/// at least [`LOCAL_MIN_POINTS`] points and its finest scale is at least twice
/// the mesh spacing, or when the ball collapses to a single location
/// (dimension 0). The estimate at the smallest reliable radius is returned.
pub fn local_dimension(mesh: &Mesh, x: &[f64], radii: &[f64]) -> Result<LocalDimension> {
    if radii.is_empty() || radii.windows(2).any(|w| w[1] >= w[0]) || radii.iter().any(|r| *r <= 0.0) {
        return Err(Error::InvalidParameter("radii must be positive and strictly descending".into()));
    }
    let mut best: Option<LocalDimension> = None;
    let mut fallback: Option<LocalDimension> = None;
    for &r in radii {
        let idx: Vec<usize> = (0..mesh.len()).filter(|&i| dist(mesh.points.get(i), x) <= r).collect();
        let ball = mesh.points.select(&idx);
        let collapsed = !ball.is_empty() && ball.iter().all(|p| p == ball.get(0));
        let finest = r / 32.0;
        let est = if collapsed {
            0.0
        } else if ball.len() >= 2 {
            box_counting_dimension(&ball, &dyadic_deltas(r / 2.0, finest))?.slope
        } else {
            0.0
        };
        let reliable = collapsed || (ball.len() >= LOCAL_MIN_POINTS && finest >= 2.0 * mesh.spacing);
        let rec = LocalDimension { dimension: est, radius: r, reliable };
        if fallback.is_none() {
            fallback = Some(LocalDimension { reliable: false, ..rec.clone() });
        }
        if reliable {
            best = Some(rec);
        }
    }
    Ok(best.or(fallback).expect("radii nonempty"))
}

/// Middle-thirds Cantor set at the given depth, laid along the `x_1` axis of
/// `R^dim`: the left endpoints of the `2^depth` surviving intervals.
pub fn cantor_points(dim: usize, depth: u32) -> Points {
    let mut starts = vec![0.0f64];
    let mut len = 1.0f64;
    for _ in 0..depth {
        len /= 3.0;
        starts = starts.iter().flat_map(|&s| [s, s + 2.0 * len]).collect();
    }
    let mut p = Points::with_capacity(dim, starts.len());
    for s in starts {
        let mut x = vec![0.0; dim];
        x[0] = s;
        p.push(&x).expect("dimension matches");
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_square_corners() -> Points {
        Points::from_rows(3, &[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 1.0, 0.0]]).unwrap()
    }

    #[test]
    fn rejects_low_ambient_dimension() {
        assert_eq!(CompactSet::sphere(vec![0.0, 0.0], 1.0), Err(Error::AmbientDimension(2)));
        assert!(CompactSet::circle(vec![0.0; 3], 1.0, [0, 0]).is_err());
    }

    #[test]
    fn sphere_mesh_weights_sum_to_area() {
        let s = CompactSet::unit_sphere(3).unwrap();
        let m = generate_mesh(&s, 500).unwrap();
        assert_eq!(m.len(), 500);
        assert!((m.total_mass() - 4.0 * PI).abs() < 1e-9 * 4.0 * PI);
        assert!(m.cell_weights.iter().all(|w| *w > 0.0));
        for p in m.points.iter() {
            assert!(s.distance(p) <= ON_SET_TOL);
        }
    }

    #[test]
    fn circle_mesh_weights_are_equal() {
        let c = CompactSet::unit_circle(3).unwrap();
        let m = generate_mesh(&c, 100).unwrap();
        for w in &m.cell_weights {
            assert!((w - 2.0 * PI / 100.0).abs() < 1e-15);
        }
        for p in m.points.iter() {
            assert!(c.distance(p) <= ON_SET_TOL);
            assert_eq!(p[2], 0.0);
        }
    }

    #[test]
    fn point_cloud_mesh_is_identity() {
        let pts = Points::from_rows(3, &(0..7).map(|i| [i as f64, 0.0, 1.0]).collect::<Vec<_>>()).unwrap();
        let c = CompactSet::point_cloud(pts.clone(), 1.0).unwrap();
        let m = generate_mesh(&c, 2).unwrap();
        assert_eq!(m.points, pts);
        assert_eq!(m.cell_weights, vec![1.0; 7]);
    }

    #[test]
    fn spacing_within_factor_two_of_nearest_neighbor_gap() {
        // box resolution counts cells per edge, so it is kept small
        let sets = [
            (CompactSet::unit_sphere(3).unwrap(), 300),
            (CompactSet::unit_sphere(4).unwrap(), 300),
            (CompactSet::unit_circle(3).unwrap(), 300),
            (CompactSet::cuboid(vec![0.0, 0.0, 0.0], vec![1.0, 2.0, 0.0]).unwrap(), 20),
        ];
        for (s, res) in &sets {
            let m = generate_mesh(s, *res).unwrap();
            let gap = m.max_nearest_neighbor_gap();
            assert!(m.spacing <= 2.0 * gap && gap <= 2.0 * m.spacing, "{s:?}: {} vs {gap}", m.spacing);
        }
    }

    #[test]
    fn box_mesh_mass_and_resolution() {
        let b = CompactSet::cuboid(vec![0.0, 0.0, 0.0], vec![1.0, 2.0, 0.0]).unwrap();
        let m = generate_mesh(&b, 10).unwrap();
        assert_eq!(m.len(), 100);
        assert!((m.total_mass() - 2.0).abs() < 1e-12);
        let point = CompactSet::cuboid(vec![1.0, 1.0, 1.0], vec![1.0, 1.0, 1.0]).unwrap();
        let m = generate_mesh(&point, 5).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m.total_mass(), 1.0);
    }

    #[test]
    fn projection_examples() {
        let s = CompactSet::unit_sphere(3).unwrap();
        assert_eq!(s.project(&[2.0, 0.0, 0.0]), vec![1.0, 0.0, 0.0]);
        let on = [0.6, 0.8, 0.0];
        assert_eq!(s.project(&on), on.to_vec());
        let b = CompactSet::cuboid(vec![0.0, 0.0, 0.0], vec![1.0, 1.0, 0.0]).unwrap();
        assert_eq!(b.project(&[2.0, -1.0, 3.0]), vec![1.0, 0.0, 0.0]);
        let c = CompactSet::unit_circle(3).unwrap();
        let p = c.project(&[3.0, 4.0, 7.0]);
        assert!((p[0] - 0.6).abs() < 1e-15 && (p[1] - 0.8).abs() < 1e-15 && p[2] == 0.0);
    }

    #[test]
    fn union_projects_to_nearest_part() {
        let u = CompactSet::union(vec![
            CompactSet::unit_sphere(3).unwrap(),
            CompactSet::cuboid(vec![5.0, 0.0, 0.0], vec![5.0, 0.0, 0.0]).unwrap(),
        ])
        .unwrap();
        assert_eq!(u.project(&[4.0, 0.0, 0.0]), vec![5.0, 0.0, 0.0]);
        assert_eq!(u.project(&[0.0, 0.0, 2.0]), vec![0.0, 0.0, 1.0]);
        assert_eq!(u.part_index(&[4.9, 0.0, 0.0]), 1);
        assert!(u.overlapping_parts(64, 1e-9).is_empty());
    }

    #[test]
    fn covering_radius_small_cases() {
        let sq = unit_square_corners();
        let r = covering_radius(&sq, 1);
        let half_diag = sqrt(2.0) / 2.0;
        assert!(r >= half_diag - 1e-12 && r <= 2.0 * half_diag + 1e-12);
        assert_eq!(covering_radius(&sq, 4), 0.0);
        assert_eq!(covering_radius(&sq, 9), 0.0);
    }

    fn exact_two_center(points: &Points) -> f64 {
        let mut best = f64::INFINITY;
        for a in 0..points.len() {
            for b in a..points.len() {
                let r = points
                    .iter()
                    .map(|p| dist(p, points.get(a)).min(dist(p, points.get(b))))
                    .fold(0.0, f64::max);
                best = best.min(r);
            }
        }
        best
    }

    #[test]
    fn covering_radius_within_factor_two_of_exhaustive_search() {
        let c = CompactSet::unit_circle(3).unwrap();
        let m = generate_mesh(&c, 24).unwrap();
        let exact = exact_two_center(&m.points);
        // two antipodal centers: the farthest points sit a quarter turn away
        assert!((exact - sqrt(2.0)).abs() < 1e-12);
        let greedy = covering_radius(&m.points, 2);
        assert!(greedy >= exact - 1e-12 && greedy <= 2.0 * exact + 1e-12);
    }

    #[test]
    fn single_point_has_dimension_zero() {
        let p = Points::from_rows(3, &[[0.3, 0.2, 0.1]]).unwrap();
        let b = box_counting_dimension(&p, &dyadic_deltas(0.5, 0.01)).unwrap();
        assert_eq!(b.slope, 0.0);
        assert_eq!(b.lower, 0.0);
        assert_eq!(b.upper, 0.0);
    }

    #[test]
    fn degenerate_scale_ranges_are_rejected() {
        let p = unit_square_corners();
        assert!(box_counting_dimension(&p, &[0.1]).is_err());
        assert!(box_counting_dimension(&p, &[0.1, 0.05]).is_err());
        assert!(box_counting_dimension(&p, &[0.01, 0.1]).is_err());
    }

    #[test]
    fn segment_local_dimension_is_one() {
        let seg = CompactSet::cuboid(vec![0.0, 0.0, 0.0], vec![1.0, 0.0, 0.0]).unwrap();
        let m = generate_mesh(&seg, 20_000).unwrap();
        let ld = local_dimension(&m, &[0.5, 0.0, 0.0], &[0.4, 0.2, 0.1]).unwrap();
        assert!(ld.reliable);
        assert!((ld.dimension - 1.0).abs() < 0.15, "{ld:?}");
    }

    #[test]
    fn isolated_point_local_dimension_is_zero() {
        let u = CompactSet::union(vec![
            CompactSet::unit_sphere(3).unwrap(),
            CompactSet::cuboid(vec![3.0, 0.0, 0.0], vec![3.0, 0.0, 0.0]).unwrap(),
        ])
        .unwrap();
        let m = generate_mesh(&u, 2000).unwrap();
        let ld = local_dimension(&m, &[3.0, 0.0, 0.0], &[2.5, 0.5, 0.1]).unwrap();
        assert!(ld.reliable);
        assert_eq!(ld.dimension, 0.0);
        assert_eq!(ld.radius, 0.1);
    }

    #[test]
    fn cantor_points_layout() {
        let c = cantor_points(3, 2);
        let xs: Vec<f64> = c.iter().map(|p| p[0]).collect();
        let expect = [0.0, 2.0 / 9.0, 2.0 / 3.0, 8.0 / 9.0];
        for (a, b) in xs.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}
