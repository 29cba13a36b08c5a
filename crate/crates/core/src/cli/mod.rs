//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 numerical
//! failure, 3 at least one validation row failed.

mod config;
mod output;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

pub use config::{resolve, scale_grid, ConfigFile, Scenario};
pub use output::{Cell, Table};

use crate::dynamics::{cache_key, cache_path, propagate_stt_grid, read_cache, write_cache, SttStack};
use crate::eigen::PowerIterConfig;
use crate::error::{Error, Result};
use crate::guidance::{bound_curve, guidance_norm, guidance_tensor, GuidanceKind};
use crate::measurement::{direction, hbar_norm, MeasurementModel};
use crate::nonlinearity::{beth_bound, demon, nu_quotient, nu_sampled, temon, IndexKind, IndexResult};
use crate::oracle::{run_protocol, GuidanceProblem, Objective, OracleSettings};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "opnorm", version, about = "Tensor norm bounds and nonlinearity indices for orbital flows")]
struct Cli {
    /// Scenario file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Reference orbit preset (iss, nrho, circular); overrides the file.
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Worker threads.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Random seed; overrides the file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; tables go to stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Also write an SVG plot next to each table.
    #[arg(long, global = true)]
    plot: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Propagate and cache the STT stack(s) of a scenario.
    Stt,
    /// Tensor 2-norm of a guidance tensor at each scenario time.
    Norm {
        #[arg(long, default_value = "propagation_vv")]
        kind: String,
        /// Read stacks from this cache file instead of the scenario.
        #[arg(long)]
        cache: Option<PathBuf>,
    },
    /// Bound curve of a guidance tensor over the scale grid.
    Guidance {
        #[arg(long, default_value = "miss_e1")]
        kind: String,
    },
    /// Nonlinearity indices at each scenario time.
    #[command(alias = "nonlinearity")]
    Nonlin {
        #[arg(default_value = "index")]
        action: String,
        /// Comma separated, e.g. nu_2,nu_2_upper,demon_2,temon_3,beth_2,nu_sampled.
        #[arg(long, value_delimiter = ',')]
        kinds: Option<Vec<String>>,
        /// Radius for temon, beth and nu_sampled (model units).
        #[arg(long)]
        radius: Option<f64>,
    },
    /// Measurement curvature norms on the unit sphere.
    Measurement {
        #[arg(default_value = "compare")]
        action: String,
        /// Elevation grid in degrees, start:stop:step.
        #[arg(long, default_value = "0:85:5")]
        grid: String,
        /// Azimuth in degrees.
        #[arg(long, default_value_t = 0.0)]
        theta: f64,
    },
    /// Compare a bound with sampled, eigenvector and optimized maxima.
    Validate {
        #[arg(long)]
        objective: Option<String>,
        /// Largest scale, in the scale unit of the scenario.
        #[arg(long = "R-max")]
        r_max: Option<f64>,
        #[arg(long = "R-min")]
        r_min: Option<f64>,
        /// Number of scales.
        #[arg(long)]
        n: Option<usize>,
    },
}

/// Parse arguments and run; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.jobs.unwrap_or(0)).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    match pool.install(|| dispatch(&cli)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Parse(_) | Error::InvalidArgument(_) | Error::Io(_) => EXIT_USAGE,
        _ => EXIT_NUMERICAL,
    }
}

struct Context {
    file: ConfigFile,
    out: Option<PathBuf>,
    cache_dir: Option<PathBuf>,
    seed: u64,
    plot: bool,
}

fn context(cli: &Cli) -> Result<Context> {
    let file = match &cli.config {
        Some(p) => ConfigFile::load(p).map_err(|e| match e {
            Error::Io(io) => Error::Config(format!("{}: {io}", p.display())),
            other => other,
        })?,
        None => ConfigFile::default(),
    };
    let out = cli.out.clone().or_else(|| file.output.dir.clone());
    let cache_dir = file.output.cache_dir.clone().or_else(|| out.clone());
    let seed = cli.seed.unwrap_or(file.oracle.seed);
    Ok(Context { file, out, cache_dir, seed, plot: cli.plot })
}

fn short_hash(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().take(8).map(|b| format!("{b:02x}")).collect()
}

fn header(table: &mut Table, command: &str, scenario_hash: &str, seed: u64) {
    table.comments.push(format!(
        "opnorm {} command={command} scenario={scenario_hash} seed={seed}",
        env!("CARGO_PKG_VERSION")
    ));
}

impl Context {
    fn scenario(&self, cli: &Cli) -> Result<Scenario> {
        if cli.config.is_none() && cli.preset.is_none() {
            return Err(Error::Config("a scenario needs --config or --preset".into()));
        }
        resolve(&self.file, cli.preset.as_deref())
    }

    fn finish(&self, table: &Table, name: &str, plot: Option<(&str, &[&str], Option<&str>, bool)>) -> Result<()> {
        let written = output::emit(self.out.as_deref(), &format!("{name}.csv"), &table.render())?;
        if let (true, Some(path), Some((x, ys, group, log))) = (self.plot, written, plot) {
            if let Some(svg) = table.svg(x, ys, group, log) {
                std::fs::write(path.with_extension("svg"), svg)?;
            }
        }
        Ok(())
    }
}

fn scenario_key(sc: &Scenario, order: usize) -> String {
    cache_key(sc.model, &sc.x0, sc.t0, &sc.times, order, sc.tol)
}

/// Stacks for every scenario time, from the cache when possible.
fn load_stacks(sc: &Scenario, order: usize, cache_dir: Option<&Path>) -> Result<(Vec<SttStack>, Option<PathBuf>)> {
    let order = order.max(sc.stt_order);
    let key = scenario_key(sc, order);
    if let Some(dir) = cache_dir {
        let path = cache_path(dir, &key);
        if path.exists() {
            let stacks = read_cache(&path)?;
            if stacks.len() == sc.times.len() {
                return Ok((stacks, Some(path)));
            }
        }
        let stacks = propagate_stt_grid(sc.model, &sc.x0, sc.t0, &sc.times, order, sc.tol)?;
        std::fs::create_dir_all(dir)?;
        write_cache(&path, &stacks)?;
        return Ok((stacks, Some(path)));
    }
    Ok((propagate_stt_grid(sc.model, &sc.x0, sc.t0, &sc.times, order, sc.tol)?, None))
}

fn dispatch(cli: &Cli) -> Result<i32> {
    let ctx = context(cli)?;
    match &cli.command {
        Command::Stt => cmd_stt(cli, &ctx),
        Command::Norm { kind, cache } => cmd_norm(cli, &ctx, kind, cache.as_deref()),
        Command::Guidance { kind } => cmd_guidance(cli, &ctx, kind),
        Command::Nonlin { action, kinds, radius } => {
            if action != "index" {
                return Err(Error::InvalidArgument(format!("unknown nonlin action '{action}'")));
            }
            cmd_nonlin(cli, &ctx, kinds.as_deref(), *radius)
        }
        Command::Measurement { action, grid, theta } => {
            if action != "compare" {
                return Err(Error::InvalidArgument(format!("unknown measurement action '{action}'")));
            }
            cmd_measurement(&ctx, grid, *theta)
        }
        Command::Validate { objective, r_max, r_min, n } => cmd_validate(cli, &ctx, objective.as_deref(), *r_min, *r_max, *n),
    }
}

fn cmd_stt(cli: &Cli, ctx: &Context) -> Result<i32> {
    let sc = ctx.scenario(cli)?;
    let dir = ctx.cache_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    let (stacks, path) = load_stacks(&sc, sc.stt_order, Some(&dir))?;
    let mut t = Table::new(&["t_f", "det_phi", "det_error", "accepted_steps", "rejected_steps"]);
    header(&mut t, "stt", &scenario_key(&sc, sc.stt_order)[..16], ctx.seed);
    for s in &stacks {
        let det = s.phi.determinant();
        t.push(vec![
            s.tf.into(),
            det.into(),
            (det - 1.0).abs().into(),
            (s.stats.accepted_steps as usize).into(),
            (s.stats.rejected_steps as usize).into(),
        ]);
    }
    if let Some(p) = path {
        eprintln!("cache {}", p.display());
    }
    ctx.finish(&t, "stt", Some(("t_f", &["det_error"], None, false)))?;
    Ok(EXIT_OK)
}

fn cmd_norm(cli: &Cli, ctx: &Context, kind: &str, cache: Option<&Path>) -> Result<i32> {
    let kind = GuidanceKind::from_name(kind).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let (stacks, hash) = match cache {
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            (crate::dynamics::stacks_from_text(&text)?, short_hash(&text))
        }
        None => {
            let sc = ctx.scenario(cli)?;
            let order = kind.required_stt_order();
            let (stacks, _) = load_stacks(&sc, order, ctx.cache_dir.as_deref())?;
            (stacks, scenario_key(&sc, order.max(sc.stt_order))[..16].to_string())
        }
    };
    let cfg = PowerIterConfig { seed: ctx.seed, ..Default::default() };
    let rows: Vec<Vec<Cell>> = stacks
        .par_iter()
        .map(|s| match guidance_tensor(s, kind).and_then(|t| Ok((guidance_norm(s, &t, &cfg)?, t))) {
            Ok((n, t)) => vec![
                s.tf.into(),
                n.value.into(),
                n.converged.into(),
                n.restarts_used.into(),
                t.phirv_condition.into(),
            ],
            Err(e) => {
                let cond = match e {
                    Error::Singular { condition, .. } => condition,
                    _ => f64::NAN,
                };
                vec![s.tf.into(), f64::NAN.into(), false.into(), 0usize.into(), cond.into()]
            }
        })
        .collect();
    let mut t = Table::new(&["t_f", "norm_value", "converged", "restarts_used", "cond_phirv"]);
    header(&mut t, &format!("norm:{}", kind.name()), &hash, ctx.seed);
    for r in rows {
        t.push(r);
    }
    ctx.finish(&t, &format!("norm_{}", kind.name()), Some(("t_f", &["norm_value"], None, true)))?;
    Ok(EXIT_OK)
}

fn cmd_guidance(cli: &Cli, ctx: &Context, kind: &str) -> Result<i32> {
    let kind = GuidanceKind::from_name(kind).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut sc = ctx.scenario(cli)?;
    sc.times = vec![sc.tf()];
    let order = kind.required_stt_order();
    let (stacks, _) = load_stacks(&sc, order, ctx.cache_dir.as_deref())?;
    let stack = &stacks[0];
    let tensor = guidance_tensor(stack, kind)?;
    let norm = guidance_norm(stack, &tensor, &PowerIterConfig { seed: ctx.seed, ..Default::default() })?;
    let grid = scale_grid(&ctx.file.scales, &sc)?;
    let model_scales: Vec<f64> = grid.iter().map(|g| g.1).collect();
    let curve = bound_curve(&tensor, &norm, &model_scales);
    let mut t = Table::new(&["R", "R_model", "bound"]);
    header(&mut t, &format!("guidance:{}", kind.name()), &scenario_key(&sc, order.max(sc.stt_order))[..16], ctx.seed);
    t.comments.push(format!(
        "t_f={:.16e} norm={:.16e} order={} cond_phirv={:.16e} unit={}",
        stack.tf,
        norm.value,
        tensor.order(),
        tensor.phirv_condition,
        ctx.file.scales.unit
    ));
    for ((r, _), (rm, b)) in grid.iter().zip(curve) {
        t.push(vec![(*r).into(), rm.into(), b.into()]);
    }
    ctx.finish(&t, &format!("guidance_{}", kind.name()), Some(("R", &["bound"], None, false)))?;
    Ok(EXIT_OK)
}

#[derive(Clone, Copy, Debug)]
enum IndexSpec {
    Quotient(IndexKind),
    Demon(usize),
    Temon(usize),
    Beth(usize),
    Sampled,
}

impl IndexSpec {
    fn parse(name: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("unknown index '{name}'"));
        if let Some((head, m)) = name.rsplit_once('_') {
            if let Ok(m) = m.parse::<usize>() {
                return match (head, m) {
                    ("demon", 2 | 3) => Ok(IndexSpec::Demon(m)),
                    ("temon", 3 | 4) => Ok(IndexSpec::Temon(m)),
                    ("beth", 2 | 3) => Ok(IndexSpec::Beth(m)),
                    ("nu", 2) => Ok(IndexSpec::Quotient(IndexKind::Nu2)),
                    _ => Err(bad()),
                };
            }
        }
        match IndexKind::from_name(name).map_err(|_| bad())? {
            IndexKind::NuSampled => Ok(IndexSpec::Sampled),
            k if IndexKind::QUOTIENTS.contains(&k) => Ok(IndexSpec::Quotient(k)),
            _ => Err(bad()),
        }
    }

    fn stt_order(self) -> usize {
        match self {
            IndexSpec::Quotient(_) => 2,
            IndexSpec::Demon(m) | IndexSpec::Beth(m) => m,
            IndexSpec::Temon(m) => m - 1,
            IndexSpec::Sampled => 1,
        }
    }

    fn label(self) -> String {
        match self {
            IndexSpec::Quotient(k) => k.name().into(),
            IndexSpec::Demon(m) => format!("demon_{m}"),
            IndexSpec::Temon(m) => format!("temon_{m}"),
            IndexSpec::Beth(m) => format!("beth_{m}"),
            IndexSpec::Sampled => "nu_sampled".into(),
        }
    }
}

fn cmd_nonlin(cli: &Cli, ctx: &Context, kinds: Option<&[String]>, radius: Option<f64>) -> Result<i32> {
    let names: Vec<String> = kinds.map(<[String]>::to_vec).unwrap_or_else(|| ctx.file.nonlin.kinds.clone());
    let specs: Vec<IndexSpec> = names.iter().map(|n| IndexSpec::parse(n.trim())).collect::<Result<_>>()?;
    if specs.is_empty() {
        return Err(Error::InvalidArgument("no index kinds requested".into()));
    }
    let radius = radius.unwrap_or(ctx.file.nonlin.radius);
    if !(radius > 0.0) {
        return Err(Error::InvalidArgument("radius must be positive".into()));
    }
    let sc = ctx.scenario(cli)?;
    let order = specs.iter().map(|s| s.stt_order()).max().unwrap_or(2);
    let (stacks, _) = load_stacks(&sc, order, ctx.cache_dir.as_deref())?;
    let cfg = PowerIterConfig { seed: ctx.seed, ..Default::default() };
    let samples = ctx.file.nonlin.samples;
    let jobs: Vec<(usize, usize)> = (0..stacks.len()).flat_map(|k| (0..specs.len()).map(move |j| (k, j))).collect();
    let results: Vec<Result<IndexResult>> = jobs
        .par_iter()
        .map(|&(k, j)| {
            let s = &stacks[k];
            match specs[j] {
                IndexSpec::Quotient(kind) => nu_quotient(s, kind, &cfg),
                IndexSpec::Demon(m) => demon(s, m, &cfg),
                IndexSpec::Temon(m) => temon(s, m, radius, &cfg),
                IndexSpec::Beth(m) => beth_bound(s, m, radius, &cfg),
                IndexSpec::Sampled => {
                    let seed = ctx.seed.wrapping_add(k as u64);
                    nu_sampled(sc.model, &sc.x0, sc.t0, s.tf, radius, samples, seed, sc.tol).map(|r| r.result)
                }
            }
        })
        .collect();
    let mut t = Table::new(&[
        "t_f", "kind", "order_m", "value", "dir_0", "dir_1", "dir_2", "dir_3", "dir_4", "dir_5", "converged",
    ]);
    let hash = short_hash(&format!("{}|{}|{radius:e}|{samples}", scenario_key(&sc, order), names.join(",")));
    header(&mut t, "nonlin", &hash, ctx.seed);
    for (&(k, j), res) in jobs.iter().zip(results) {
        let mut row: Vec<Cell> = vec![stacks[k].tf.into(), specs[j].label().into()];
        match res {
            Ok(r) => {
                row.push(r.order_m.map(|m| m.to_string()).unwrap_or_default().into());
                row.push(r.value.into());
                for i in 0..6 {
                    row.push(r.direction.as_ref().and_then(|d| d.get(i).copied()).unwrap_or(f64::NAN).into());
                }
                row.push(r.converged.into());
            }
            Err(_) => {
                row.push(String::new().into());
                for _ in 0..7 {
                    row.push(f64::NAN.into());
                }
                row.push(false.into());
            }
        }
        t.push(row);
    }
    ctx.finish(&t, "nonlin", Some(("t_f", &["value"], Some("kind"), true)))?;
    Ok(EXIT_OK)
}

fn parse_grid(grid: &str) -> Result<Vec<f64>> {
    let parts: Vec<f64> = grid
        .split(':')
        .map(|p| p.trim().parse::<f64>().map_err(|_| Error::InvalidArgument(format!("bad grid '{grid}'"))))
        .collect::<Result<_>>()?;
    let [start, stop, step] = parts[..] else {
        return Err(Error::InvalidArgument(format!("grid '{grid}' is not start:stop:step")));
    };
    if !(step > 0.0) || stop < start {
        return Err(Error::InvalidArgument(format!("grid '{grid}' needs step > 0 and stop >= start")));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| start + step * i as f64).collect())
}

fn cmd_measurement(ctx: &Context, grid: &str, theta: f64) -> Result<i32> {
    let phis = parse_grid(grid)?;
    let cfg = PowerIterConfig { seed: ctx.seed, ..Default::default() };
    let mut t = Table::new(&["phi_deg", "norm_hbar_angles", "norm_hbar_unitvec"]);
    header(&mut t, "measurement", &short_hash(&format!("{grid}|{theta:e}")), ctx.seed);
    let rows: Vec<(f64, f64, f64)> = phis
        .par_iter()
        .map(|&p| {
            let r = direction(theta.to_radians(), p.to_radians());
            let a = hbar_norm(MeasurementModel::Angles, &r, &cfg).unwrap_or(f64::NAN);
            let u = hbar_norm(MeasurementModel::UnitVector, &r, &cfg).unwrap_or(f64::NAN);
            (p, a, u)
        })
        .collect();
    for (p, a, u) in rows {
        t.push(vec![p.into(), a.into(), u.into()]);
    }
    ctx.finish(&t, "measurement", Some(("phi_deg", &["norm_hbar_angles", "norm_hbar_unitvec"], None, true)))?;
    Ok(EXIT_OK)
}

fn cmd_validate(
    cli: &Cli,
    ctx: &Context,
    objective: Option<&str>,
    r_min: Option<f64>,
    r_max: Option<f64>,
    n: Option<usize>,
) -> Result<i32> {
    let objective = Objective::from_name(objective.unwrap_or(&ctx.file.oracle.objective))
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut sc = ctx.scenario(cli)?;
    sc.times = vec![sc.tf()];
    let kind = objective.tensor_kind();
    let order = kind.required_stt_order();
    let (stacks, _) = load_stacks(&sc, order, ctx.cache_dir.as_deref())?;
    let stack = &stacks[0];
    let problem = GuidanceProblem::new(stack, objective, sc.tol)?;
    let tensor = problem.bound_tensor()?;
    let norm = guidance_norm(stack, &tensor, &PowerIterConfig { seed: ctx.seed, ..Default::default() })?;
    let dir = norm
        .maximizer
        .clone()
        .ok_or_else(|| Error::Degenerate("norm computation returned no maximizer".into()))?;
    let mut scales = ctx.file.scales.clone_with(r_min, r_max, n);
    if cli.config.is_none() && r_max.is_some() && ctx.file.scales.unit == "model" {
        scales.unit = default_unit(objective);
    }
    let grid = scale_grid(&scales, &sc)?;
    let model_scales: Vec<f64> = grid.iter().map(|g| g.1).collect();
    let settings = OracleSettings {
        n_samples: ctx.file.oracle.n_samples,
        seed: ctx.seed,
        enable_opt: ctx.file.oracle.enable_opt,
        ..Default::default()
    };
    let f = |x: &crate::tensor::Vector| problem.eval(x);
    let reports = run_protocol(
        &f,
        3,
        &dir,
        tensor.bound_coefficient() * norm.value,
        tensor.order(),
        &model_scales,
        &settings,
    );
    let tol = &ctx.file.validate;
    let mut t = Table::new(&[
        "R",
        "bound",
        "eigvec_eval",
        "sampled_max",
        "optimized_max",
        "rel_err_bound",
        "rel_err_sampled",
        "rel_err_eigvec",
        "n_failed_samples",
        "status",
    ]);
    let hash = short_hash(&format!(
        "{}|{}|{:?}|{}|{}",
        scenario_key(&sc, order.max(sc.stt_order)),
        objective.name(),
        model_scales,
        settings.n_samples,
        settings.enable_opt
    ));
    header(&mut t, &format!("validate:{}", objective.name()), &hash, ctx.seed);
    t.comments.push(format!("unit={} quantities in model units", scales.unit));
    let mut any_fail = false;
    for ((r, _), rep) in grid.iter().zip(&reports) {
        let pass = rep.failure.is_none()
            && rep.rel_err_bound.abs() <= tol.max_rel_err_bound
            && rep.rel_err_sampled <= 1e-6
            && rep.rel_err_sampled >= -tol.max_rel_err_sampled
            && rep.rel_err_eigvec.abs() <= tol.max_rel_err_eigvec;
        any_fail |= !pass;
        t.push(vec![
            (*r).into(),
            rep.bound.into(),
            rep.eigvec_eval.into(),
            rep.sampled_max.into(),
            rep.optimized_max.into(),
            rep.rel_err_bound.into(),
            rep.rel_err_sampled.into(),
            rep.rel_err_eigvec.into(),
            rep.n_failed_samples.into(),
            (if pass { "PASS" } else { "FAIL" }).into(),
        ]);
    }
    ctx.finish(
        &t,
        &format!("validate_{}", objective.name()),
        Some(("R", &["bound", "eigvec_eval", "sampled_max", "optimized_max"], None, false)),
    )?;
    Ok(if any_fail { EXIT_VALIDATION } else { EXIT_OK })
}

/// Scale unit used when only `--R-max` is given: m/s for velocity inputs,
/// km for position inputs.
fn default_unit(objective: Objective) -> String {
    match objective {
        Objective::Propagation => "m/s".into(),
        _ => "km".into(),
    }
}

impl config::ScalesSection {
    fn clone_with(&self, min: Option<f64>, max: Option<f64>, n: Option<usize>) -> Self {
        Self {
            min: min.unwrap_or(self.min),
            max: max.unwrap_or(self.max),
            n: n.unwrap_or(if max.is_some() { 11 } else { self.n }),
            spacing: self.spacing.clone(),
            unit: self.unit.clone(),
        }
    }
}
