//! One function per subcommand.

use std::path::Path;

use anyhow::{bail, Context, Result};
use rand_distr::{Distribution, Exp1};
use riesz_core::equilibrium::{frostman_check, inverse_equilibrium, solve_equilibrium, EquilibriumSolution, SolverParams};
use riesz_core::fekete::{optimize_fekete, transfinite_diameter_sequence, FeketeParams};
use riesz_core::geometry::{box_counting_dimension, default_box_scales, local_dimension};
use riesz_core::gibbs::{self, AisParams, BaseMeasure, ChainState, GibbsSpec, McmcOutput, McmcParams};
use riesz_core::ldp::{self, MeasureBall, ScanParams};
use riesz_core::rng::{child_seed, stream};
use riesz_core::{bernstein, DiscreteMeasure, Mesh, Points};
use serde::Serialize;

use crate::config::{BaseKind, CenterConfig, LoadedConfig, Setup, TauMethod};
use crate::io::{self, Cell, Csv, Outputs};
use crate::Command;

// Independent seed streams for tasks that need more than one.
const SEED_SOLVE: u64 = 0;
const SEED_SAMPLE: u64 = 1;
const SEED_DIRECTIONS: u64 = 2;

pub fn dispatch(cmd: &Command, cfg: &LoadedConfig, seed: u64, out: &mut Outputs) -> Result<()> {
    let setup = cfg.setup()?;
    match cmd {
        Command::Equilibrium => equilibrium(cfg, &setup, out),
        Command::InverseEq => inverse_eq(cfg, &setup, seed, out),
        Command::Fekete { n } => fekete(cfg, &setup, n.unwrap_or(cfg.config.fekete.n), seed, out),
        Command::Tdiam => tdiam(cfg, &setup, seed, out),
        Command::BmProbe => bm_probe(cfg, &setup, seed, out),
        Command::BernsteinProbe => bernstein_probe(cfg, &setup, seed, out),
        Command::MassDensity => mass_density(cfg, &setup, out),
        Command::Dimension => dimension(cfg, &setup, out),
        Command::GibbsSample { resume, sweeps } => gibbs_sample(cfg, &setup, seed, resume.as_deref(), *sweeps, out),
        Command::Zn => zn(cfg, &setup, seed, out),
        Command::Tau => tau(cfg, &setup, seed, out),
        Command::LdpScan => ldp_scan(cfg, &setup, seed, out),
    }
}

fn solve(cfg: &LoadedConfig, setup: &Setup) -> Result<EquilibriumSolution> {
    let e = &cfg.config.equilibrium;
    let params = SolverParams {
        gap_tol: e.gap_tol,
        max_iters: e.max_iters,
        diagonal_policy: Some(setup.policy),
        ..Default::default()
    };
    Ok(solve_equilibrium(&setup.mesh, &setup.kernel, &setup.q, &params)?)
}

fn coordinate_header(d: usize, last: &str) -> Vec<String> {
    let mut h: Vec<String> = (1..=d).map(|k| format!("x{k}")).collect();
    h.push(last.into());
    h
}

fn measure_csv(mu: &DiscreteMeasure) -> Csv {
    let h = coordinate_header(mu.dim(), "weight");
    let mut t = Csv::new(&h.iter().map(String::as_str).collect::<Vec<_>>());
    for (x, w) in mu.support().iter().zip(mu.weights()) {
        let mut row = x.to_vec();
        row.push(*w);
        t.values(&row);
    }
    t
}

fn points_csv(p: &Points) -> Csv {
    let h: Vec<String> = (1..=p.dim()).map(|k| format!("x{k}")).collect();
    let mut t = Csv::new(&h.iter().map(String::as_str).collect::<Vec<_>>());
    for x in p.iter() {
        t.values(x);
    }
    t
}

fn equilibrium(cfg: &LoadedConfig, setup: &Setup, out: &mut Outputs) -> Result<()> {
    let sol = solve(cfg, setup)?;
    let tol = cfg.config.equilibrium.frostman_tol;
    let report = frostman_check(&sol, &setup.kernel, &setup.q, &setup.mesh, riesz_core::equilibrium::SUPPORT_THRESHOLD, tol)?;
    out.json("equilibrium.json", &sol)?;
    out.json("frostman.json", &report)?;
    out.csv("equilibrium_weights.csv", measure_csv(&sol.measure))
}

#[derive(Serialize)]
struct InverseTrial {
    trial: usize,
    sup_error: f64,
    gap: f64,
    iterations: usize,
    converged: bool,
    success: bool,
}

#[derive(Serialize)]
struct InverseReport {
    tolerance: f64,
    successes: usize,
    trials: Vec<InverseTrial>,
}

/// Dirichlet(1, …, 1) weights on `support`.
pub fn dirichlet_measure(support: &Points, seed: u64, trial: usize) -> Result<DiscreteMeasure> {
    let mut rng = stream(seed, trial as u64);
    let raw: Vec<f64> = (0..support.len()).map(|_| Exp1.sample(&mut rng)).collect();
    let s: f64 = raw.iter().sum();
    Ok(DiscreteMeasure::new(support.clone(), raw.iter().map(|w| w / s).collect())?)
}

fn inverse_eq(cfg: &LoadedConfig, setup: &Setup, seed: u64, out: &mut Outputs) -> Result<()> {
    let ic = &cfg.config.inverse_eq;
    let from_file = matches!(cfg.config.measure.kind, crate::config::MeasureKind::File);
    let targets: Vec<DiscreteMeasure> = if from_file {
        vec![setup.measure.normalized()]
    } else {
        (0..ic.trials).map(|t| dirichlet_measure(&setup.mesh.points, seed, t)).collect::<Result<_>>()?
    };
    if targets.is_empty() {
        bail!("inverse_eq.trials must be at least 1");
    }
    let mut trials = Vec::new();
    for (t, tau) in targets.iter().enumerate() {
        let mesh = if from_file {
            Mesh {
                points: tau.support().clone(),
                cell_weights: vec![1.0; tau.len()],
                spacing: crate::config::max_gap(tau.support()),
            }
        } else {
            setup.mesh.clone()
        };
        let q = inverse_equilibrium(tau, &setup.kernel, setup.policy)?;
        let params = SolverParams { gap_tol: ic.gap_tol, diagonal_policy: Some(setup.policy), ..Default::default() };
        let sol = solve_equilibrium(&mesh, &setup.kernel, &q, &params)?;
        let sup_error = sol.weights().iter().zip(tau.weights()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        trials.push(InverseTrial {
            trial: t,
            sup_error,
            gap: sol.gap,
            iterations: sol.iterations,
            converged: sol.converged,
            success: sol.converged && sup_error < ic.tolerance,
        });
    }
    let mut table = Csv::new(&["trial", "sup_error", "gap", "success"]);
    for r in &trials {
        table.row(&[Cell::Int(r.trial), Cell::Num(r.sup_error), Cell::Num(r.gap), Cell::Int(r.success as usize)]);
    }
    let report =
        InverseReport { tolerance: ic.tolerance, successes: trials.iter().filter(|r| r.success).count(), trials };
    out.json("inverse_eq.json", &report)?;
    out.csv("inverse_eq.csv", table)
}

fn fekete_params(cfg: &LoadedConfig, seed: u64) -> FeketeParams {
    let f = &cfg.config.fekete;
    FeketeParams { restarts: f.restarts, max_iters: f.max_iters, seed, ..Default::default() }
}

fn fekete(cfg: &LoadedConfig, setup: &Setup, n: usize, seed: u64, out: &mut Outputs) -> Result<()> {
    let r = optimize_fekete(&setup.set, &setup.kernel, &setup.q, n, &fekete_params(cfg, seed), None)?;
    out.json("fekete.json", &r)?;
    out.csv("fekete_points.csv", points_csv(&r.points))
}

fn tdiam(cfg: &LoadedConfig, setup: &Setup, seed: u64, out: &mut Outputs) -> Result<()> {
    let rows = transfinite_diameter_sequence(
        &setup.set,
        &setup.kernel,
        &setup.q,
        &cfg.config.tdiam.n_list,
        &fekete_params(cfg, seed),
    )?;
    let mut table = Csv::new(&["n", "log_delta_n", "d_n"]);
    for (r, _) in &rows {
        table.row(&[Cell::Int(r.n), Cell::Num(r.log_delta_n), Cell::Num(r.d_n)]);
    }
    let results: Vec<_> = rows.iter().map(|(_, f)| f).collect();
    out.json("tdiam.json", &results)?;
    out.csv("tdiam.csv", table)
}

fn bm_probe(cfg: &LoadedConfig, setup: &Setup, seed: u64, out: &mut Outputs) -> Result<()> {
    let b = &cfg.config.bm_probe;
    let recs = bernstein::bm_constant_probe(
        &setup.measure,
        &setup.set,
        &setup.kernel,
        &setup.q,
        &b.n_list,
        b.trials,
        b.refine_rounds,
        seed,
    )?;
    let mut table = Csv::new(&["n", "m_hat_root"]);
    for r in &recs {
        table.row(&[Cell::Int(r.n), Cell::Num(r.root)]);
    }
    out.json("bm_probe.json", &recs)?;
    out.csv("bm_probe.csv", table)
}

#[derive(Serialize)]
struct BernsteinOutput {
    m: f64,
    m_estimated: bool,
    #[serde(flatten)]
    probe: bernstein::BernsteinProbe,
}

fn bernstein_probe(cfg: &LoadedConfig, setup: &Setup, seed: u64, out: &mut Outputs) -> Result<()> {
    let b = &cfg.config.bernstein_probe;
    let (m, m_estimated) = match b.m {
        Some(m) => (m, false),
        None => (box_counting_dimension(&setup.mesh.points, &default_box_scales(&setup.mesh))?.slope, true),
    };
    let probe = bernstein::bernstein_ratio_probe(&setup.mesh.points, &setup.kernel, &b.n_list, b.trials, m, seed)?;
    let mut table = Csv::new(&["n", "max_ratio", "bound"]);
    for r in &probe.rows {
        table.row(&[Cell::Int(r.n), Cell::Num(r.max_ratio), Cell::Num(r.bound)]);
    }
    out.json("bernstein_probe.json", &BernsteinOutput { m, m_estimated, probe })?;
    out.csv("bernstein_probe.csv", table)
}

fn mass_density(cfg: &LoadedConfig, setup: &Setup, out: &mut Outputs) -> Result<()> {
    let c = &cfg.config.mass_density;
    if c.stride == 0 {
        bail!("mass_density.stride must be at least 1");
    }
    let idx: Vec<usize> = (0..setup.mesh.len()).step_by(c.stride).collect();
    let centres = setup.mesh.points.select(&idx);
    let rep = bernstein::mass_density_probe(&setup.measure, &centres, &c.t_grid, &c.r_grid)?;
    out.json("mass_density.json", &rep)
}

#[derive(Serialize)]
struct DimensionOutput {
    points: usize,
    #[serde(flatten)]
    global: riesz_core::geometry::BoxDimension,
    local: Vec<LocalRow>,
}

#[derive(Serialize)]
struct LocalRow {
    point: Vec<f64>,
    #[serde(flatten)]
    estimate: riesz_core::geometry::LocalDimension,
}

fn dimension(cfg: &LoadedConfig, setup: &Setup, out: &mut Outputs) -> Result<()> {
    let c = &cfg.config.dimension;
    let deltas = c.deltas.clone().unwrap_or_else(|| default_box_scales(&setup.mesh));
    let global = box_counting_dimension(&setup.mesh.points, &deltas)
        .context("box counting failed; refine the mesh or set dimension.deltas")?;
    let local = c
        .local_points
        .iter()
        .map(|x| Ok(LocalRow { point: x.clone(), estimate: local_dimension(&setup.mesh, x, &c.local_radii)? }))
        .collect::<Result<Vec<_>>>()?;
    let mut table = Csv::new(&["delta", "count"]);
    for b in &global.fit_log {
        table.row(&[Cell::Num(b.delta), Cell::Int(b.count)]);
    }
    out.json("dimension.json", &DimensionOutput { points: setup.mesh.len(), global, local })?;
    out.csv("dimension.csv", table)
}

fn gibbs_spec(cfg: &LoadedConfig, setup: &Setup, n: usize) -> Result<GibbsSpec> {
    let g = &cfg.config.gibbs;
    let base = match g.base {
        BaseKind::Continuous => BaseMeasure::Continuous { mass: g.mass },
        BaseKind::Mesh => BaseMeasure::Discrete { measure: setup.measure.clone() },
    };
    Ok(GibbsSpec::new(setup.set.clone(), base, setup.kernel, setup.q.clone(), n)?.with_exponent(g.exponent)?)
}

fn mcmc_params(cfg: &LoadedConfig, seed: u64) -> McmcParams {
    let g = &cfg.config.gibbs;
    McmcParams {
        chains: g.chains,
        sweeps: g.sweeps,
        burn_in: g.burn_in,
        thin: g.thin,
        step_scale: g.step_scale,
        seed,
    }
}

#[derive(Serialize)]
struct ChainDiagnostics {
    acceptance: f64,
    step_scale: f64,
    samples: usize,
    mean_energy: f64,
}

#[derive(Serialize)]
struct GibbsDiagnostics {
    seed: u64,
    spec_sha256: String,
    n: usize,
    resumed: bool,
    r_hat: f64,
    mean_energy: f64,
    energy_std_error: f64,
    acceptance_warning: bool,
    chains: Vec<ChainDiagnostics>,
}

fn gibbs_sample(
    cfg: &LoadedConfig,
    setup: &Setup,
    seed: u64,
    resume: Option<&Path>,
    sweeps: Option<usize>,
    out: &mut Outputs,
) -> Result<()> {
    let g = &cfg.config.gibbs;
    let spec = gibbs_spec(cfg, setup, g.n)?;
    let result: McmcOutput = match resume {
        None => gibbs::mcmc_sample(&spec, &mcmc_params(cfg, seed))?,
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let states: Vec<ChainState> = serde_json::from_str(&text).context("parsing checkpoint")?;
            let sweeps = sweeps.unwrap_or(g.sweeps.saturating_sub(g.burn_in));
            let chains = states
                .iter()
                .map(|s| gibbs::resume_chain(&spec, s, sweeps, g.thin))
                .collect::<riesz_core::Result<Vec<_>>>()?;
            let traces: Vec<&[f64]> = chains.iter().map(|c| c.trace.as_slice()).collect();
            let means: Vec<f64> = traces.iter().map(|t| riesz_core::math::mean(t)).collect();
            McmcOutput {
                r_hat: gibbs::split_r_hat(&traces),
                mean_energy: riesz_core::math::mean(&means),
                energy_std_error: (riesz_core::math::variance(&means) / means.len() as f64).sqrt(),
                acceptance_warning: chains.iter().any(|c| !(0.05..=0.8).contains(&c.acceptance)),
                chains,
            }
        }
    };
    let d = setup.set.dim();
    let mut table = Csv::configurations(spec.n, d);
    for s in result.samples() {
        table.values(s.as_flat());
    }
    let diagnostics = GibbsDiagnostics {
        seed,
        spec_sha256: io::sha256_hex(serde_json::to_string(&spec)?.as_bytes()),
        n: spec.n,
        resumed: resume.is_some(),
        r_hat: result.r_hat,
        mean_energy: result.mean_energy,
        energy_std_error: result.energy_std_error,
        acceptance_warning: result.acceptance_warning,
        chains: result
            .chains
            .iter()
            .map(|c| ChainDiagnostics {
                acceptance: c.acceptance,
                step_scale: c.step_scale,
                samples: c.samples.len(),
                mean_energy: riesz_core::math::mean(&c.trace),
            })
            .collect(),
    };
    let states: Vec<&ChainState> = result.chains.iter().map(|c| &c.state).collect();
    out.csv("gibbs_samples.csv", table)?;
    out.json("gibbs_diagnostics.json", &diagnostics)?;
    out.json("gibbs_checkpoint.json", &states)
}

#[derive(Serialize)]
struct ZnOutput {
    v_w: f64,
    v_w_source: &'static str,
    ladder: Vec<f64>,
    rows: Vec<gibbs::ZnRow>,
}

fn zn(cfg: &LoadedConfig, setup: &Setup, seed: u64, out: &mut Outputs) -> Result<()> {
    let z = &cfg.config.zn;
    let (v_w, v_w_source) = match z.v_w {
        Some(v) => (v, "config"),
        None => (solve(cfg, setup)?.value, "mesh"),
    };
    let template = gibbs_spec(cfg, setup, 2)?;
    let ladder = gibbs::geometric_ladder(z.rungs, z.ladder_min);
    let ais = AisParams {
        chains: z.chains,
        sweeps_per_rung: z.sweeps_per_rung,
        step_scale: z.step_scale,
        seed: child_seed(seed, SEED_SAMPLE),
    };
    let fekete = FeketeParams {
        restarts: z.fekete_restarts,
        max_iters: cfg.config.fekete.max_iters,
        seed: child_seed(seed, SEED_SOLVE),
        ..Default::default()
    };
    let rows = gibbs::zn_scaling_check(&template, &z.n_list, v_w, &ladder, &ais, &fekete)?;
    let mut table = Csv::new(&[
        "n",
        "log_z",
        "std_error",
        "normalized",
        "target",
        "sandwich_bound",
        "sandwich_holds",
        "ess_flag",
    ]);
    for r in &rows {
        table.row(&[
            Cell::Int(r.n),
            Cell::Num(r.log_z),
            Cell::Num(r.std_error),
            Cell::Num(r.normalized),
            Cell::Num(r.target),
            Cell::Num(r.sandwich_bound),
            Cell::Int(r.sandwich_holds as usize),
            Cell::Int(r.ess_flag as usize),
        ]);
    }
    out.json("zn.json", &ZnOutput { v_w, v_w_source, ladder, rows })?;
    out.csv("zn.csv", table)
}

#[derive(Serialize)]
struct TauOutput {
    n: usize,
    method: TauMethod,
    /// Sliced transport distance to the equilibrium measure.
    distance_to_equilibrium: f64,
    log_z: Option<f64>,
    r_hat: Option<f64>,
    tau: DiscreteMeasure,
}

fn tau(cfg: &LoadedConfig, setup: &Setup, seed: u64, out: &mut Outputs) -> Result<()> {
    let t = &cfg.config.tau;
    let spec = gibbs_spec(cfg, setup, t.n)?;
    let (tau, log_z, r_hat) = match t.method {
        TauMethod::Quadrature => {
            let mesh = match spec.base {
                BaseMeasure::Continuous { .. } => riesz_core::geometry::generate_mesh(&setup.set, t.quadrature_resolution)?,
                BaseMeasure::Discrete { .. } => setup.mesh.clone(),
            };
            let q = gibbs::partition_function_quadrature(&spec, &mesh)?;
            (q.tau, Some(q.log_z), None)
        }
        TauMethod::Mcmc => {
            let res = gibbs::mcmc_sample(&spec, &mcmc_params(cfg, child_seed(seed, SEED_SAMPLE)))?;
            let samples: Vec<Points> = res.samples().cloned().collect();
            (gibbs::one_point_correlation_mcmc(&setup.mesh, &samples)?, None, Some(res.r_hat))
        }
    };
    let eq = solve(cfg, setup)?;
    let distance = ldp::measure_distance(&tau, &eq.measure, t.directions, child_seed(seed, SEED_DIRECTIONS))?;
    out.csv("tau.csv", measure_csv(&tau))?;
    out.json(
        "tau.json",
        &TauOutput { n: t.n, method: t.method.clone(), distance_to_equilibrium: distance, log_z, r_hat, tau },
    )
}

#[derive(Serialize)]
struct LdpOutput {
    radius: f64,
    centers: Vec<CenterConfig>,
    reports: Vec<ldp::RateReport>,
}

fn ldp_scan(cfg: &LoadedConfig, setup: &Setup, seed: u64, out: &mut Outputs) -> Result<()> {
    let l = &cfg.config.ldp;
    if l.centers.is_empty() {
        bail!("ldp.centers is empty");
    }
    let eq = solve(cfg, setup)?;
    let balls = l
        .centers
        .iter()
        .map(|c| {
            let center = cfg.center_measure(c, setup, &eq.measure)?;
            Ok(match c {
                CenterConfig::WholeSpace => MeasureBall::whole_space(center),
                _ => MeasureBall::new(center, l.radius)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let template = gibbs_spec(cfg, setup, 2)?;
    let params = ScanParams { n_list: l.n_list.clone(), samples: l.samples, directions: l.directions, seed };
    let reports = ldp::ldp_scan(&balls, &template, &eq, &params)?;
    let mut table = Csv::new(&["center_id", "n", "neg_log_mass_over_n2", "rate"]);
    for r in &reports {
        for row in &r.per_n {
            table.row(&[Cell::Int(r.center_id), Cell::Int(row.n), Cell::Num(row.neg_log_mass_over_n2), Cell::Num(r.rate)]);
        }
    }
    out.json("ldp_scan.json", &LdpOutput { radius: l.radius, centers: l.centers.clone(), reports })?;
    out.csv("ldp_scan.csv", table)
}
