//! Experiment configuration.
//!
//! A config is a TOML file (or JSON, when the file ends in `.json` or starts
//! with `{`). Relative file paths inside it resolve against the config's own
//! directory. Every task block is optional and falls back to defaults; the
//! `seed` is required unless given on the command line.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use riesz_core::energy::DiagonalPolicy;
use riesz_core::{CompactSet, DiscreteMeasure, ExternalField, Mesh, Points, RieszKernel};
use serde::{Deserialize, Serialize};

use crate::io;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub set: SetConfig,
    #[serde(default)]
    pub mesh: MeshConfig,
    #[serde(default)]
    pub kernel: KernelConfig,
    #[serde(default)]
    pub field: FieldConfig,
    #[serde(default)]
    pub measure: MeasureConfig,
    #[serde(default)]
    pub equilibrium: EquilibriumConfig,
    #[serde(default)]
    pub inverse_eq: InverseConfig,
    #[serde(default)]
    pub fekete: FeketeConfig,
    #[serde(default)]
    pub tdiam: TdiamConfig,
    #[serde(default)]
    pub bm_probe: BmConfig,
    #[serde(default)]
    pub bernstein_probe: BernsteinConfig,
    #[serde(default)]
    pub mass_density: MassDensityConfig,
    #[serde(default)]
    pub dimension: DimensionConfig,
    #[serde(default)]
    pub gibbs: GibbsConfig,
    #[serde(default)]
    pub zn: ZnConfig,
    #[serde(default)]
    pub tau: TauConfig,
    #[serde(default)]
    pub ldp: LdpConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SetConfig {
    Sphere {
        center: Vec<f64>,
        radius: f64,
    },
    Circle {
        center: Vec<f64>,
        radius: f64,
        #[serde(default = "default_axes")]
        axes: [usize; 2],
    },
    Box {
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
    /// Points read from a text file, one per line.
    PointCloud {
        file: PathBuf,
        /// Mesh spacing; defaults to the largest nearest-neighbour gap.
        spacing: Option<f64>,
    },
    Union {
        parts: Vec<SetConfig>,
    },
}

fn default_axes() -> [usize; 2] {
    [0, 1]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshConfig {
    /// Points for spheres and circles, cells per edge for boxes.
    pub resolution: usize,
}

impl Default for MeshConfig {
    fn default() -> Self {
        Self { resolution: 2000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DiagonalConfig {
    /// `"default"` (truncate at half the mesh spacing) or `"exclude"`.
    Named(String),
    /// Truncation level.
    Level(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelConfig {
    pub alpha: f64,
    pub diagonal: DiagonalConfig,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self { alpha: 1.0, diagonal: DiagonalConfig::Named("default".into()) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct FieldConfig {
    pub expression: Option<String>,
    /// Text file with rows `x1 … xd value`.
    pub grid: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureKind {
    /// Cell areas of the mesh.
    Reference,
    /// Cell areas scaled to total mass 1.
    Normalized,
    /// Text file with rows `x1 … xd weight`.
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeasureConfig {
    pub kind: MeasureKind,
    pub file: Option<PathBuf>,
}

impl Default for MeasureConfig {
    fn default() -> Self {
        Self { kind: MeasureKind::Normalized, file: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EquilibriumConfig {
    pub gap_tol: f64,
    pub max_iters: usize,
    pub frostman_tol: f64,
}

impl Default for EquilibriumConfig {
    fn default() -> Self {
        Self { gap_tol: 1e-8, max_iters: 1_000_000, frostman_tol: 1e-5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InverseConfig {
    /// Random Dirichlet(1, …, 1) targets to draw, when no measure file is
    /// configured.
    pub trials: usize,
    pub gap_tol: f64,
    /// A trial succeeds when the recovered weights are within this of the
    /// target in sup norm.
    pub tolerance: f64,
}

impl Default for InverseConfig {
    fn default() -> Self {
        Self { trials: 1, gap_tol: 1e-10, tolerance: 1e-4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeketeConfig {
    pub n: usize,
    pub restarts: usize,
    pub max_iters: usize,
}

impl Default for FeketeConfig {
    fn default() -> Self {
        Self { n: 10, restarts: 8, max_iters: 20_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TdiamConfig {
    pub n_list: Vec<usize>,
}

impl Default for TdiamConfig {
    fn default() -> Self {
        Self { n_list: vec![10, 20, 40, 80] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BmConfig {
    pub n_list: Vec<usize>,
    pub trials: usize,
    pub refine_rounds: usize,
}

impl Default for BmConfig {
    fn default() -> Self {
        Self { n_list: vec![8, 16, 32, 64], trials: 200, refine_rounds: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BernsteinConfig {
    pub n_list: Vec<usize>,
    pub trials: usize,
    /// Dimension of the set; estimated by box counting when absent.
    pub m: Option<f64>,
}

impl Default for BernsteinConfig {
    fn default() -> Self {
        Self { n_list: vec![2, 4, 8, 16, 32, 64], trials: 100, m: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MassDensityConfig {
    pub t_grid: Vec<f64>,
    pub r_grid: Vec<f64>,
    /// Use every `stride`-th mesh node as a ball centre.
    pub stride: usize,
}

impl Default for MassDensityConfig {
    fn default() -> Self {
        Self { t_grid: vec![1.0, 2.0, 3.0], r_grid: vec![0.5, 0.4, 0.3, 0.2], stride: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DimensionConfig {
    /// Box sides, descending; dyadic from a quarter of the extent down to
    /// twice the mesh spacing when absent.
    pub deltas: Option<Vec<f64>>,
    /// Radii for local estimates at `local_points`.
    pub local_radii: Vec<f64>,
    pub local_points: Vec<Vec<f64>>,
}

impl Default for DimensionConfig {
    fn default() -> Self {
        Self { deltas: None, local_radii: vec![0.8, 0.4, 0.2], local_points: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseKind {
    /// The normalized reference measure of the set, times `mass`.
    Continuous,
    /// The configured measure on the mesh.
    Mesh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GibbsConfig {
    pub n: usize,
    pub base: BaseKind,
    pub mass: f64,
    pub exponent: f64,
    pub chains: usize,
    pub sweeps: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub step_scale: f64,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        Self {
            n: 8,
            base: BaseKind::Continuous,
            mass: 1.0,
            exponent: 1.0,
            chains: 4,
            sweeps: 2000,
            burn_in: 500,
            thin: 10,
            step_scale: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ZnConfig {
    pub n_list: Vec<usize>,
    pub rungs: usize,
    pub ladder_min: f64,
    pub chains: usize,
    pub sweeps_per_rung: usize,
    pub step_scale: f64,
    pub fekete_restarts: usize,
    /// Minimal weighted energy to compare against; solved on the mesh when
    /// absent.
    pub v_w: Option<f64>,
}

impl Default for ZnConfig {
    fn default() -> Self {
        Self {
            n_list: vec![4, 8, 16, 32],
            rungs: riesz_core::gibbs::DEFAULT_RUNGS,
            ladder_min: 1e-3,
            chains: 200,
            sweeps_per_rung: 5,
            step_scale: 0.5,
            fekete_restarts: 4,
            v_w: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauMethod {
    Quadrature,
    Mcmc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TauConfig {
    pub n: usize,
    pub method: TauMethod,
    /// Mesh resolution for quadrature, which needs `len^(n-1) ≤ 1e7`.
    pub quadrature_resolution: usize,
    pub directions: usize,
}

impl Default for TauConfig {
    fn default() -> Self {
        Self { n: 3, method: TauMethod::Quadrature, quadrature_resolution: 200, directions: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CenterConfig {
    /// The equilibrium measure.
    Equilibrium,
    /// The configured measure restricted to `sign · x_axis ≥ 0`.
    Half { axis: usize, sign: f64 },
    /// Rows `x1 … xd weight` from a file.
    File { file: PathBuf },
    /// Any centre with an infinite radius.
    WholeSpace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LdpConfig {
    pub centers: Vec<CenterConfig>,
    pub radius: f64,
    pub n_list: Vec<usize>,
    pub samples: usize,
    pub directions: usize,
}

impl Default for LdpConfig {
    fn default() -> Self {
        Self {
            centers: vec![CenterConfig::Equilibrium, CenterConfig::Half { axis: 1, sign: 1.0 }, CenterConfig::WholeSpace],
            radius: 0.15,
            n_list: vec![8, 12, 16],
            samples: 20_000,
            directions: riesz_core::ldp::DEFAULT_DIRECTIONS,
        }
    }
}

/// A parsed config together with its raw bytes and location.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub raw: Vec<u8>,
    pub base_dir: PathBuf,
}

pub fn parse(text: &str, json: bool) -> Result<ExperimentConfig> {
    if json {
        serde_json::from_str(text).context("parsing JSON config")
    } else {
        toml::from_str(text).context("parsing TOML config")
    }
}

pub fn load(path: &Path) -> Result<LoadedConfig> {
    let raw = std::fs::read(path).with_context(|| format!("reading config {}", path.display()))?;
    let text = std::str::from_utf8(&raw).context("config is not UTF-8")?;
    let json = path.extension().is_some_and(|e| e == "json") || text.trim_start().starts_with('{');
    let config = parse(text, json)?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(LoadedConfig { config, raw, base_dir })
}

/// Objects built from a config.
pub struct Setup {
    pub set: CompactSet,
    pub mesh: Mesh,
    pub kernel: RieszKernel,
    pub q: ExternalField,
    pub measure: DiscreteMeasure,
    pub policy: DiagonalPolicy,
}

impl LoadedConfig {
    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn build_set(&self, s: &SetConfig) -> Result<CompactSet> {
        Ok(match s {
            SetConfig::Sphere { center, radius } => CompactSet::sphere(center.clone(), *radius)?,
            SetConfig::Circle { center, radius, axes } => CompactSet::circle(center.clone(), *radius, *axes)?,
            SetConfig::Box { lower, upper } => CompactSet::cuboid(lower.clone(), upper.clone())?,
            SetConfig::PointCloud { file, spacing } => {
                let pts = io::read_points(&self.resolve(file), None)?;
                let h = match spacing {
                    Some(h) => *h,
                    None => max_gap(&pts),
                };
                CompactSet::point_cloud(pts, h)?
            }
            SetConfig::Union { parts } => {
                CompactSet::union(parts.iter().map(|p| self.build_set(p)).collect::<Result<_>>()?)?
            }
        })
    }

    pub fn setup(&self) -> Result<Setup> {
        let c = &self.config;
        let set = self.build_set(&c.set)?;
        let d = set.dim();
        let mesh = riesz_core::geometry::generate_mesh(&set, c.mesh.resolution)?;
        let kernel = RieszKernel::new(c.kernel.alpha, d)?;
        let policy = match &c.kernel.diagonal {
            DiagonalConfig::Named(s) if s == "default" => {
                DiagonalPolicy::Truncate(riesz_core::energy::default_truncation(&kernel, mesh.spacing))
            }
            DiagonalConfig::Named(s) if s == "exclude" => DiagonalPolicy::Exclude,
            DiagonalConfig::Named(s) => bail!("unknown diagonal policy '{s}' (use \"default\", \"exclude\" or a number)"),
            DiagonalConfig::Level(m) => DiagonalPolicy::Truncate(*m),
        };
        let q = match (&c.field.expression, &c.field.grid) {
            (Some(_), Some(_)) => bail!("field: give either an expression or a grid file, not both"),
            (Some(e), None) => ExternalField::expression(e, d)?,
            (None, Some(g)) => {
                let (pts, vals) = io::read_weighted_points(&self.resolve(g), d)?;
                ExternalField::grid(pts, vals)?
            }
            (None, None) => ExternalField::zero(d),
        };
        let measure = match c.measure.kind {
            MeasureKind::Reference => mesh.reference_measure(),
            MeasureKind::Normalized => mesh.normalized_measure(),
            MeasureKind::File => {
                let f = c.measure.file.as_ref().ok_or_else(|| anyhow!("measure kind 'file' needs a file"))?;
                let (pts, w) = io::read_weighted_points(&self.resolve(f), d)?;
                DiscreteMeasure::new(pts, w)?
            }
        };
        Ok(Setup { set, mesh, kernel, q, measure, policy })
    }

    pub fn center_measure(&self, c: &CenterConfig, setup: &Setup, equilibrium: &DiscreteMeasure) -> Result<DiscreteMeasure> {
        Ok(match c {
            CenterConfig::Equilibrium | CenterConfig::WholeSpace => equilibrium.clone(),
            CenterConfig::Half { axis, sign } => {
                let mu = &setup.measure;
                if *axis >= mu.dim() {
                    bail!("half-space axis {axis} out of range");
                }
                let w: Vec<f64> = mu
                    .support()
                    .iter()
                    .zip(mu.weights())
                    .map(|(x, w)| if sign * x[*axis] >= 0.0 { *w } else { 0.0 })
                    .collect();
                let total: f64 = w.iter().sum();
                if total <= 0.0 {
                    bail!("half-space centre carries no mass");
                }
                mu.with_weights(w.iter().map(|x| x / total).collect())?
            }
            CenterConfig::File { file } => {
                let (pts, w) = io::read_weighted_points(&self.resolve(file), setup.set.dim())?;
                DiscreteMeasure::new(pts, w)?.normalized()
            }
        })
    }
}

/// Largest nearest-neighbour distance, or 1 for a single point.
pub(crate) fn max_gap(pts: &Points) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..pts.len() {
        let mut best = f64::INFINITY;
        for j in 0..pts.len() {
            if i != j {
                best = best.min(riesz_core::math::dist(pts.get(i), pts.get(j)));
            }
        }
        if best.is_finite() {
            worst = worst.max(best);
        }
    }
    if worst > 0.0 {
        worst
    } else {
        1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
seed = 7

[set]
kind = "sphere"
center = [0.0, 0.0, 0.0]
radius = 1.0

[mesh]
resolution = 300

[kernel]
alpha = 1.0
diagonal = "exclude"

[field]
expression = "0.5*norm()^2"

[fekete]
n = 4
"#;

    #[test]
    fn toml_and_json_agree() {
        let a = parse(SAMPLE, false).unwrap();
        let json = serde_json::to_string(&a).unwrap();
        let b = parse(&json, true).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.fekete.n, 4);
        assert_eq!(a.fekete.restarts, 8);
        assert_eq!(a.kernel.diagonal, DiagonalConfig::Named("exclude".into()));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = SAMPLE.replace("radius = 1.0", "radius = 1.0\nradios = 2.0");
        assert!(parse(&bad, false).is_err());
        let bad = SAMPLE.replace("n = 4", "n = 4\nrestart = 2");
        assert!(parse(&bad, false).is_err());
    }

    #[test]
    fn builds_objects() {
        let loaded = LoadedConfig { config: parse(SAMPLE, false).unwrap(), raw: Vec::new(), base_dir: PathBuf::new() };
        let s = loaded.setup().unwrap();
        assert_eq!(s.mesh.len(), 300);
        assert_eq!(s.policy, DiagonalPolicy::Exclude);
        assert!((s.q.value(&[1.0, 1.0, 1.0]).unwrap() - 1.5).abs() < 1e-15);
        assert!((s.measure.mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn numeric_diagonal_is_a_truncation_level() {
        let text = SAMPLE.replace("diagonal = \"exclude\"", "diagonal = 40.0");
        let loaded = LoadedConfig { config: parse(&text, false).unwrap(), raw: Vec::new(), base_dir: PathBuf::new() };
        assert_eq!(loaded.setup().unwrap().policy, DiagonalPolicy::Truncate(40.0));
    }
}
