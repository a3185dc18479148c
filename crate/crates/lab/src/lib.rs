//! Experiment runner for `riesz-core`.
//!
//! One subcommand runs one library entry point on the objects described by a
//! config file, then writes task-named JSON and CSV files plus a
//! `manifest.json` into the output directory. All randomness comes from the
//! master seed. Deterministic tasks reproduce their outputs byte for byte;
//! the manifest differs between runs only in its wall time.

pub mod config;
pub mod io;
mod tasks;

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;

pub use config::{ExperimentConfig, LoadedConfig};
pub use io::OutputFile;
pub use tasks::dirichlet_measure;

#[derive(Debug, Clone, Parser)]
#[command(name = "riesz-lab", version, about = "Numerical experiments in weighted Riesz potential theory")]
pub struct Cli {
    /// Experiment config (TOML, or JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Output directory; `RIESZ_LAB_OUT` takes precedence.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Weighted equilibrium measure and Frostman report.
    Equilibrium,
    /// Recover random target measures from their own potentials.
    InverseEq,
    /// Optimized Fekete configuration.
    Fekete {
        /// Number of points; overrides the config.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Transfinite diameter sequence.
    Tdiam,
    /// Bernstein–Markov constant probe.
    BmProbe,
    /// Bernstein gradient ratio probe.
    BernsteinProbe,
    /// Lower mass density probe.
    MassDensity,
    /// Box-counting dimension.
    Dimension,
    /// Metropolis sampling of the Gibbs ensemble.
    GibbsSample {
        /// Continue the chains stored in a checkpoint file.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Production sweeps when resuming (default: sweeps − burn-in).
        #[arg(long, requires = "resume")]
        sweeps: Option<usize>,
    },
    /// Partition function scaling.
    Zn,
    /// One-point correlation measure.
    Tau,
    /// Large-deviation rate scan.
    LdpScan,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Equilibrium => "equilibrium",
            Command::InverseEq => "inverse-eq",
            Command::Fekete { .. } => "fekete",
            Command::Tdiam => "tdiam",
            Command::BmProbe => "bm-probe",
            Command::BernsteinProbe => "bernstein-probe",
            Command::MassDensity => "mass-density",
            Command::Dimension => "dimension",
            Command::GibbsSample { .. } => "gibbs-sample",
            Command::Zn => "zn",
            Command::Tau => "tau",
            Command::LdpScan => "ldp-scan",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub subcommand: String,
    pub config_path: String,
    pub config_sha256: String,
    pub seed: u64,
    pub workers: usize,
    pub versions: Versions,
    pub wall_time_s: f64,
    pub outputs: Vec<OutputFile>,
    /// Hash over the output names and hashes, in order.
    pub outputs_sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Versions {
    pub riesz_lab: &'static str,
    pub riesz_core: &'static str,
}

/// Output directory: the environment override, then `--out`, then the
/// config's `output_dir`, then `out`.
pub fn output_dir(env: Option<PathBuf>, cli: Option<&Path>, loaded: &LoadedConfig) -> PathBuf {
    env.or_else(|| cli.map(Path::to_path_buf))
        .or_else(|| {
            loaded.config.output_dir.as_ref().map(|p| if p.is_absolute() { p.clone() } else { loaded.base_dir.join(p) })
        })
        .unwrap_or_else(|| PathBuf::from("out"))
}

/// Runs one subcommand and writes its outputs and manifest. `env_out` is
/// the value of `RIESZ_LAB_OUT`, if set.
pub fn run(cli: &Cli, env_out: Option<PathBuf>) -> Result<Manifest> {
    let start = Instant::now();
    let path = cli.config.as_ref().context("--config is required")?;
    let loaded = config::load(path)?;
    let seed = match cli.seed.or(loaded.config.seed) {
        Some(s) => s,
        None => bail!("no seed: set `seed` in the config or pass --seed"),
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = cli.workers {
        if w == 0 {
            bail!("--workers must be at least 1");
        }
        pool = pool.num_threads(w);
    }
    let pool = pool.build().context("building the worker pool")?;
    let workers = pool.current_num_threads();
    let mut out = io::Outputs::create(output_dir(env_out, cli.out.as_deref(), &loaded))?;
    pool.install(|| tasks::dispatch(&cli.command, &loaded, seed, &mut out))?;

    let mut joined = String::new();
    for f in &out.files {
        joined.push_str(&f.name);
        joined.push(' ');
        joined.push_str(&f.sha256);
        joined.push('\n');
    }
    let manifest = Manifest {
        subcommand: cli.command.name().into(),
        config_path: path.display().to_string(),
        config_sha256: io::sha256_hex(&loaded.raw),
        seed,
        workers,
        versions: Versions { riesz_lab: env!("CARGO_PKG_VERSION"), riesz_core: riesz_core::VERSION },
        wall_time_s: start.elapsed().as_secs_f64(),
        outputs_sha256: io::sha256_hex(joined.as_bytes()),
        outputs: out.files.clone(),
    };
    std::fs::write(out.dir.join("manifest.json"), io::to_json(&manifest)?).context("writing manifest.json")?;
    Ok(manifest)
}

#[derive(Debug, Clone, Serialize)]
pub struct ErrorReport {
    pub subcommand: String,
    pub kind: String,
    pub message: String,
    /// Context chain, outermost first.
    pub causes: Vec<String>,
}

impl ErrorReport {
    pub fn new(subcommand: &str, err: &anyhow::Error) -> Self {
        let kind = if let Some(e) = err.chain().find_map(|c| c.downcast_ref::<riesz_core::Error>()) {
            let dbg = format!("{e:?}");
            let variant: String = dbg.chars().take_while(|c| c.is_alphanumeric()).collect();
            format!("core.{variant}")
        } else if err.chain().any(|c| c.is::<std::io::Error>()) {
            "io".into()
        } else if err.chain().any(|c| c.is::<toml::de::Error>() || c.is::<serde_json::Error>()) {
            "config".into()
        } else {
            "runtime".into()
        };
        Self {
            subcommand: subcommand.into(),
            kind,
            message: err.to_string(),
            causes: err.chain().skip(1).map(|c| c.to_string()).collect(),
        }
    }
}
