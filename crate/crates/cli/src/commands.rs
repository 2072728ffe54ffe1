use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use quadnet::cone::{cone_statistics_with, cover_expected, cover_limit, write_stats_csv, ConeEnsemble, DEFAULT_TOL};
use quadnet::dynamics::{gd_weights, proximal_flow, rate_diagnostics_from, IntegratorConfig, ProxConfig, ProxSolve};
use quadnet::eigenflow::{eigen_flow, lv_analysis, reduced_flow, teacher_spectrum};
use quadnet::harness::{classify, fit_alpha_c, sweep, SampleSize, StudentInit, SweepGrid, TrialConfig, TrialStatus};
use quadnet::model::{gram, make_student, make_teacher, sample_dataset, TeacherEnsemble};
use quadnet::ode::Method;
use quadnet::rng::derive_seed;
use quadnet::string_method::{
    init_string, log_average_profiles, relax_string_with, string_profile, write_profile_csv, ProfileRow,
};
use quadnet::{GramMatrix, Matrix};

use crate::config::{req, resolve};

pub const VERSION: &str = env!("QUADNET_VERSION");

type Table = toml::Table;

struct Run {
    command: &'static str,
    started: Instant,
    config: Value,
}

impl Run {
    fn new(command: &'static str, config: Value) -> Self {
        Run { command, started: Instant::now(), config }
    }

    /// Builds the JSON summary and writes it to `target` when given.
    fn finish(self, status_counts: BTreeMap<String, usize>, results: Value, target: Option<PathBuf>) -> Result<Value> {
        let summary = json!({
            "command": self.command,
            "version": VERSION,
            "config": self.config,
            "wall_time_s": self.started.elapsed().as_secs_f64(),
            "status_counts": status_counts,
            "results": results,
        });
        if let Some(path) = target {
            let file = create(&path)?;
            serde_json::to_writer_pretty(file, &summary)?;
        }
        Ok(summary)
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

/// `traj.csv` → `traj.summary.json`.
fn summary_next_to(out: &Path) -> PathBuf {
    out.with_extension("summary.json")
}

fn one_status(s: impl ToString) -> BTreeMap<String, usize> {
    BTreeMap::from([(s.to_string(), 1)])
}

fn ensemble(name: &Option<String>) -> Result<TeacherEnsemble> {
    TeacherEnsemble::from_str(name.as_deref().unwrap_or("gaussian")).map_err(|e| anyhow!(e))
}

fn finite_or_null(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

/// `START:STOP:STEP` (inclusive) or a single value.
pub fn parse_range(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<f64> = spec
        .split(':')
        .map(|p| p.trim().parse::<f64>().with_context(|| format!("bad number '{p}' in '{spec}'")))
        .collect::<Result<_>>()?;
    match parts.as_slice() {
        [x] => Ok(vec![*x]),
        [start, stop, step] => {
            if !(*step > 0.0) || stop < start {
                bail!("range '{spec}' needs STEP > 0 and STOP >= START");
            }
            let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
            Ok((0..count).map(|i| start + step * i as f64).collect())
        }
        _ => bail!("expected START:STOP:STEP, got '{spec}'"),
    }
}

#[derive(Args, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct GdArgs {
    #[arg(long)]
    pub d: Option<usize>,
    /// Student width (default 2d).
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub mstar: Option<usize>,
    #[arg(long, conflicts_with = "alpha")]
    pub n: Option<usize>,
    /// Sample ratio; n = floor(alpha d).
    #[arg(long)]
    pub alpha: Option<f64>,
    /// gaussian | orthonormal
    #[arg(long)]
    pub ensemble: Option<String>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub record_every: Option<usize>,
    #[arg(long)]
    pub gen_threshold: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn samples(n: Option<usize>, alpha: Option<f64>) -> Result<SampleSize> {
    match (n, alpha) {
        (Some(n), None) => Ok(SampleSize::Count(n)),
        (None, Some(a)) => Ok(SampleSize::Ratio(a)),
        (Some(_), Some(_)) => bail!("give either --n or --alpha, not both"),
        (None, None) => bail!("missing required setting --n or --alpha"),
    }
}

/// The config file without `key`, at top level and in the `[section]` table.
fn without_key(file: Option<&Table>, section: &str, key: &str) -> Option<Table> {
    let mut t = file?.clone();
    t.remove(key);
    if let Some(toml::Value::Table(sub)) = t.get_mut(section) {
        sub.remove(key);
    }
    Some(t)
}

pub fn run_gd(cli: &GdArgs, file: Option<&Table>) -> Result<Value> {
    // a sample size given on the command line replaces either form in the file
    let file = match (cli.n.is_some(), cli.alpha.is_some()) {
        (true, _) => without_key(file, "gd", "alpha"),
        (_, true) => without_key(file, "gd", "n"),
        _ => file.cloned(),
    };
    let defaults = json!({"ensemble": "gaussian", "eta": 0.003, "steps": 100_000, "seed": 0,
                          "record-every": 100, "gen-threshold": 1e-5});
    let (a, echo) = resolve(cli, defaults, file.as_ref(), "gd")?;
    let d = req(&a.d, "d")?;
    let mut cfg = TrialConfig::new(d, a.m.unwrap_or(2 * d), req(&a.mstar, "mstar")?, samples(a.n, a.alpha)?);
    cfg.ensemble = ensemble(&a.ensemble)?;
    cfg.eta = req(&a.eta, "eta")?;
    cfg.max_steps = req(&a.steps, "steps")?;
    cfg.seed = req(&a.seed, "seed")?;
    cfg.record_every = req(&a.record_every, "record-every")?;
    cfg.gen_threshold = req(&a.gen_threshold, "gen-threshold")?;
    cfg.validate()?;
    let run = Run::new("gd", echo);

    let teacher = make_teacher::<f64>(cfg.d, cfg.m_star, cfg.ensemble, derive_seed(cfg.seed, &[0]))?;
    let data = sample_dataset(&teacher, cfg.n(), derive_seed(cfg.seed, &[1]))?;
    let student = make_student::<f64>(cfg.d, cfg.m, derive_seed(cfg.seed, &[2]))?;
    let icfg = IntegratorConfig::new(cfg.eta, cfg.max_steps).record_every(cfg.record_every);
    let traj = gd_weights(&student, &gram(&teacher), Some(&data), &icfg)?;
    if let Some(out) = &a.out {
        traj.write_csv(create(out)?)?;
    }
    let train = traj.final_train_loss().unwrap_or(f64::NAN);
    let gen = traj.final_gen_loss();
    let status = classify(train, gen, traj.status.is_failure(), &cfg);
    let results = json!({
        "n": cfg.n(),
        "flow_status": format!("{:?}", traj.status),
        "final_train_loss": finite_or_null(train),
        "final_gen_loss": finite_or_null(gen),
        "final_time": traj.final_time(),
        "relax_time": traj.first_crossing(cfg.gen_threshold),
    });
    run.finish(one_status(status), results, a.out.as_deref().map(summary_next_to))
}

#[derive(Args, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct EigenflowArgs {
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub mstar: Option<usize>,
    #[arg(long)]
    pub ensemble: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub dt: Option<f64>,
    /// Time horizon.
    #[arg(long = "T")]
    #[serde(rename = "T")]
    pub horizon: Option<f64>,
    /// euler | rk4
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub record_every: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn integrator(dt: f64, horizon: f64, method: &str, record_every: usize) -> Result<IntegratorConfig<f64>> {
    let cfg = IntegratorConfig::until(dt, horizon)
        .method(Method::from_str(method).map_err(|e| anyhow!(e))?)
        .record_every(record_every);
    cfg.validate()?;
    Ok(cfg)
}

pub fn run_eigenflow(cli: &EigenflowArgs, file: Option<&Table>) -> Result<Value> {
    let defaults =
        json!({"ensemble": "gaussian", "seed": 0, "dt": 1e-3, "T": 10.0, "method": "rk4", "record-every": 10});
    let (a, echo) = resolve(cli, defaults, file, "eigenflow")?;
    let run = Run::new("eigenflow", echo);
    let teacher =
        make_teacher::<f64>(req(&a.d, "d")?, req(&a.mstar, "mstar")?, ensemble(&a.ensemble)?, req(&a.seed, "seed")?)?;
    let star = teacher_spectrum(&teacher);
    let cfg = integrator(
        req(&a.dt, "dt")?,
        req(&a.horizon, "T")?,
        &req(&a.method, "method")?,
        req(&a.record_every, "record-every")?,
    )?;
    let traj = eigen_flow(&star, &cfg)?;
    if let Some(out) = &a.out {
        traj.write_csv(create(out)?)?;
    }
    let rate = rate_diagnostics_from(&traj.times, &traj.loss);
    let results = json!({
        "lambdas_star": star,
        "final_lambdas": traj.final_lambdas(),
        "final_loss": traj.loss.last().copied().map(finite_or_null),
        "decay_class": format!("{:?}", rate.decay_class),
        "plateau": rate.plateau,
        "rate": rate.rate,
        "power_slope": rate.power_slope,
    });
    run.finish(one_status(format!("{:?}", traj.status)), results, a.out.as_deref().map(summary_next_to))
}

#[derive(Args, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ReducedArgs {
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub mstar: Option<usize>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long = "T")]
    #[serde(rename = "T")]
    pub horizon: Option<f64>,
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub record_every: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run_reduced(cli: &ReducedArgs, file: Option<&Table>) -> Result<Value> {
    let defaults = json!({"dt": 1e-3, "T": 10.0, "method": "rk4", "record-every": 10});
    let (a, echo) = resolve(cli, defaults, file, "reduced")?;
    let run = Run::new("reduced", echo);
    let cfg = integrator(
        req(&a.dt, "dt")?,
        req(&a.horizon, "T")?,
        &req(&a.method, "method")?,
        req(&a.record_every, "record-every")?,
    )?;
    let traj = reduced_flow(req(&a.d, "d")?, req(&a.mstar, "mstar")?, &cfg)?;
    if let Some(out) = &a.out {
        traj.write_csv(create(out)?)?;
    }
    let results = json!({
        "final_lambda": traj.lambda.last(),
        "final_epsilon": traj.epsilon.last(),
        "final_loss_approx": traj.loss.last(),
    });
    run.finish(one_status(format!("{:?}", traj.status)), results, a.out.as_deref().map(summary_next_to))
}

#[derive(Args, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct LvReportArgs {
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub mstar: Option<usize>,
}

pub fn run_lv_report(cli: &LvReportArgs, file: Option<&Table>) -> Result<Value> {
    let (a, echo) = resolve(cli, json!({}), file, "lv-report")?;
    let run = Run::new("lv-report", echo);
    let r = lv_analysis(req(&a.d, "d")?, req(&a.mstar, "mstar")?)?;
    let results = json!({
        "d": r.d,
        "m_star": r.m_star,
        "fixed_points": r.fixed_points,
        "t0": r.t0,
        "t_jump": r.t_jump,
        "loss_tail_quadratic": r.loss_tail_quadratic,
        "loss_tail_exponential": r.loss_tail_exponential,
    });
    run.finish(one_status("ok"), results, None)
}

#[derive(Args, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct StringArgs {
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub mstar: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub images: Option<usize>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub seeds: Option<usize>,
    /// Base seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub ensemble: Option<String>,
    /// identity | random (Gram matrix of a random student of width --m)
    #[arg(long)]
    pub init: Option<String>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn initial_gram(init: &str, d: usize, m: usize, seed: u64) -> Result<GramMatrix<f64>> {
    match init {
        "identity" => Ok(GramMatrix::identity(d)),
        "random" => Ok(gram(&make_student::<f64>(d, m, seed)?)),
        other => bail!("unknown init '{other}' (expected identity or random)"),
    }
}

/// Interior images with `E_n < 1e-8` and `E > 1e-2`.
fn decoupled(rows: &[ProfileRow<f64>]) -> Vec<usize> {
    rows[1..rows.len() - 1].iter().filter(|r| r.train_loss < 1e-8 && r.gen_loss > 1e-2).map(|r| r.index).collect()
}

pub fn run_string(cli: &StringArgs, file: Option<&Table>) -> Result<Value> {
    let defaults = json!({"images": 100, "dt": 1e-3, "iters": 100_000, "seeds": 10, "seed": 0,
                          "ensemble": "gaussian", "init": "identity"});
    let (a, echo) = resolve(cli, defaults, file, "string")?;
    let run = Run::new("string", echo);
    let (d, m_star, n) = (req(&a.d, "d")?, req(&a.mstar, "mstar")?, req(&a.n, "n")?);
    let base = req(&a.seed, "seed")?;
    let ens = ensemble(&a.ensemble)?;
    let init = req(&a.init, "init")?;
    let mut profiles = Vec::new();
    let mut per_seed = Vec::new();
    let mut counts = BTreeMap::new();
    for s in 0..req(&a.seeds, "seeds")? {
        let teacher = make_teacher::<f64>(d, m_star, ens, derive_seed(base, &[s as u64, 0]))?;
        let a_star = gram(&teacher);
        let data = sample_dataset(&teacher, n, derive_seed(base, &[s as u64, 1]))?;
        let a0 = initial_gram(&init, d, a.m.unwrap_or(2 * d), derive_seed(base, &[s as u64, 2]))?;
        let path = init_string(&a0, &a_star, req(&a.images, "images")?)?;
        let mut spread = 0.0f64;
        let relaxed = relax_string_with(&path, &data, &a_star, req(&a.dt, "dt")?, req(&a.iters, "iters")?, |_, p| {
            spread = spread.max(p.gap_spread())
        });
        let relaxed = match relaxed {
            Ok(p) => p,
            Err(e) => {
                *counts.entry("diverged".to_string()).or_insert(0) += 1;
                per_seed.push(json!({"seed": s, "error": e.to_string()}));
                continue;
            }
        };
        *counts.entry("relaxed".to_string()).or_insert(0) += 1;
        let prof = string_profile(&relaxed, &data, &a_star)?;
        if let Some(dir) = &a.out {
            write_profile_csv(&prof, create(&dir.join(format!("string_seed{s}.csv")))?)?;
        }
        per_seed.push(json!({"seed": s, "max_gap_spread": spread, "decoupled_images": decoupled(&prof)}));
        profiles.push(prof);
    }
    let averaged = if profiles.is_empty() { None } else { Some(log_average_profiles(&profiles)?) };
    if let (Some(dir), Some(avg)) = (&a.out, &averaged) {
        write_profile_csv(avg, create(&dir.join("string_logavg.csv"))?)?;
    }
    let results = json!({
        "per_seed": per_seed,
        "log_average_decoupled_images": averaged.as_deref().map(decoupled),
    });
    run.finish(counts, results, a.out.as_ref().map(|d| d.join("summary.json")))
}

#[derive(Args, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ConeArgs {
    #[arg(long)]
    pub d: Option<usize>,
    /// One or more sample counts, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub n: Option<Vec<usize>>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub tol: Option<f64>,
    /// folded | sign-conditioned
    #[arg(long)]
    pub ensemble: Option<String>,
    /// Walk length per row for the sign-conditioned ensemble.
    #[arg(long)]
    pub sweeps: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run_cone(cli: &ConeArgs, file: Option<&Table>) -> Result<Value> {
    let defaults = json!({"trials": 200, "seed": 0, "tol": DEFAULT_TOL, "ensemble": "folded", "sweeps": 10});
    let (a, echo) = resolve(cli, defaults, file, "cone")?;
    let run = Run::new("cone", echo);
    let ens = match req(&a.ensemble, "ensemble")?.as_str() {
        "folded" => ConeEnsemble::Folded,
        "sign-conditioned" => ConeEnsemble::SignConditioned { sweeps: req(&a.sweeps, "sweeps")? },
        other => bail!("unknown cone ensemble '{other}' (expected folded or sign-conditioned)"),
    };
    let d = req(&a.d, "d")?;
    let (trials, seed, tol) = (req(&a.trials, "trials")?, req(&a.seed, "seed")?, req(&a.tol, "tol")?);
    let stats = req(&a.n, "n")?
        .into_iter()
        .map(|n| cone_statistics_with(n, d, trials, seed, tol, ens))
        .collect::<quadnet::Result<Vec<_>>>()?;
    if let Some(out) = &a.out {
        write_stats_csv(&stats, create(out)?)?;
    }
    let rows: Vec<Value> = stats
        .iter()
        .map(|s| {
            json!({"n": s.n, "d": s.d, "trials": s.trials, "mean_count": s.mean_count, "stderr": s.stderr,
                   "formula_value": s.formula_value, "certified_fraction": s.certified_fraction})
        })
        .collect();
    let certified: usize = stats.iter().map(|s| (s.certified_fraction * s.trials as f64).round() as usize).sum();
    let total: usize = stats.iter().map(|s| s.trials).sum();
    let counts =
        BTreeMap::from([("certified".to_string(), certified), ("not_certified".to_string(), total - certified)]);
    run.finish(counts, json!({"stats": rows}), a.out.as_deref().map(summary_next_to))
}

#[derive(Args, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ConeExpectedArgs {
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
}

pub fn run_cone_expected(cli: &ConeExpectedArgs, file: Option<&Table>) -> Result<Value> {
    let (a, echo) = resolve(cli, json!({}), file, "cone-expected")?;
    let run = Run::new("cone-expected", echo);
    let (d, n) = (req(&a.d, "d")?, req(&a.n, "n")?);
    let c = cover_expected(n, d)?;
    let results = json!({
        "n": n,
        "d": d,
        "expected": c.expected,
        "exact": c.exact.to_string(),
        "c_table": c.c_table.to_string(),
        "expected_over_d": c.expected / d as f64,
        "limit_over_d": cover_limit(n as f64 / d as f64),
    });
    run.finish(one_status("ok"), results, None)
}

#[derive(Args, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct PhaseArgs {
    #[arg(long, value_delimiter = ',')]
    pub d: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub mstar: Option<Vec<usize>>,
    /// START:STOP:STEP, inclusive.
    #[arg(long)]
    pub alpha: Option<String>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Student width per input dimension, m = width d.
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub ensemble: Option<String>,
    #[arg(long)]
    pub gen_threshold: Option<f64>,
    #[arg(long)]
    pub ratio_factor: Option<f64>,
    #[arg(long)]
    pub record_every: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run_phase(cli: &PhaseArgs, file: Option<&Table>) -> Result<Value> {
    let defaults = json!({"trials": 20, "eta": 0.003, "steps": 1_000_000, "seed": 0, "width": 2,
                          "ensemble": "gaussian", "gen-threshold": 1e-5, "ratio-factor": 1e9, "record-every": 100});
    let (a, echo) = resolve(cli, defaults, file, "phase")?;
    let run = Run::new("phase", echo);
    let mut template = TrialConfig::new(1, 1, 1, SampleSize::Count(1));
    template.ensemble = ensemble(&a.ensemble)?;
    template.eta = req(&a.eta, "eta")?;
    template.max_steps = req(&a.steps, "steps")?;
    template.gen_threshold = req(&a.gen_threshold, "gen-threshold")?;
    template.ratio_factor = req(&a.ratio_factor, "ratio-factor")?;
    template.record_every = req(&a.record_every, "record-every")?;
    template.init = StudentInit::Gaussian;
    let grid = SweepGrid {
        dims: req(&a.d, "d")?,
        m_stars: req(&a.mstar, "mstar")?,
        alphas: parse_range(&req(&a.alpha, "alpha")?)?,
        width: req(&a.width, "width")?,
        template,
    };
    let table = sweep(&grid, req(&a.trials, "trials")?, req(&a.seed, "seed")?);
    if let Some(dir) = &a.out {
        table.write_cells_csv(create(&dir.join("cells.csv"))?)?;
        table.write_trials_csv(create(&dir.join("trials.csv"))?)?;
    }
    let mut counts: BTreeMap<String, usize> = table.status_counts().iter().map(|(s, c)| (s.to_string(), *c)).collect();
    let errors: Vec<String> = table.records.iter().filter_map(|r| r.result.as_ref().err().cloned()).collect();
    if !errors.is_empty() {
        counts.insert("error".into(), errors.len());
    }
    let cells: Vec<Value> = table
        .cells
        .iter()
        .map(|c| {
            json!({"d": c.key.d, "m_star": c.key.m_star, "n": c.key.n, "alpha": c.key.alpha,
                   "success_fraction": c.success_fraction, "median_relax_time": c.median_relax_time})
        })
        .collect();
    run.finish(counts, json!({"cells": cells, "errors": errors}), a.out.as_ref().map(|d| d.join("summary.json")))
}

#[derive(Args, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct FitAlphaCArgs {
    /// CSV with an `alpha` column and a `relax_time` or `median_relax_time` column.
    #[arg(long = "in")]
    #[serde(rename = "in")]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub const FIT_CSV_HEADER: &str = "d,m_star,alpha_c,ci_low,ci_high,theta,intercept,sse,points";

/// Groups `(alpha, tau)` pairs by the optional `d` and `m_star` columns; rows without a time are skipped.
fn read_relax_times(path: &Path) -> Result<BTreeMap<(String, String), (Vec<f64>, Vec<f64>)>> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let alpha = col("alpha").ok_or_else(|| anyhow!("{} has no alpha column", path.display()))?;
    let tau = col("relax_time")
        .or_else(|| col("median_relax_time"))
        .ok_or_else(|| anyhow!("{} has no relax_time or median_relax_time column", path.display()))?;
    let (d, m) = (col("d"), col("m_star"));
    let mut groups: BTreeMap<(String, String), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec?;
        let t = rec.get(tau).unwrap_or("").trim();
        if t.is_empty() {
            continue;
        }
        let get = |i: Option<usize>| i.and_then(|i| rec.get(i)).unwrap_or("").trim().to_string();
        let parse = |s: &str| s.parse::<f64>().with_context(|| format!("row {}: bad number '{s}'", line + 2));
        let entry = groups.entry((get(d), get(m))).or_default();
        entry.0.push(parse(rec.get(alpha).unwrap_or("").trim())?);
        entry.1.push(parse(t)?);
    }
    Ok(groups)
}

pub fn run_fit_alpha_c(cli: &FitAlphaCArgs, file: Option<&Table>) -> Result<Value> {
    let (a, echo) = resolve(cli, json!({}), file, "fit-alpha-c")?;
    let run = Run::new("fit-alpha-c", echo);
    let groups = read_relax_times(&req(&a.input, "in")?)?;
    if groups.is_empty() {
        bail!("no rows with a relaxation time");
    }
    let mut fits = Vec::new();
    let mut counts = BTreeMap::new();
    let mut lines = vec![FIT_CSV_HEADER.to_string()];
    for ((d, m), (alphas, taus)) in &groups {
        match fit_alpha_c(alphas, taus) {
            Ok(f) => {
                *counts.entry("fitted".to_string()).or_insert(0) += 1;
                lines.push(format!(
                    "{d},{m},{},{},{},{},{},{},{}",
                    f.alpha_c, f.ci95.0, f.ci95.1, f.theta, f.intercept, f.sse, f.points
                ));
                fits.push(json!({"d": d, "m_star": m, "alpha_c": f.alpha_c, "ci95": [finite_or_null(f.ci95.0), finite_or_null(f.ci95.1)],
                                 "theta": f.theta, "points": f.points}));
            }
            Err(e) => {
                *counts.entry("rejected".to_string()).or_insert(0) += 1;
                fits.push(json!({"d": d, "m_star": m, "error": e.to_string()}));
            }
        }
    }
    if let Some(out) = &a.out {
        use std::io::Write;
        let mut w = create(out)?;
        for l in &lines {
            writeln!(w, "{l}")?;
        }
    }
    run.finish(counts, json!({"fits": fits}), a.out.as_deref().map(summary_next_to))
}

#[derive(Args, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ProxArgs {
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub mstar: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub ensemble: Option<String>,
    /// identity | random (square root of a random student's Gram matrix, width --m)
    #[arg(long)]
    pub init: Option<String>,
    #[arg(long)]
    pub m: Option<usize>,
    /// first-order | implicit
    #[arg(long)]
    pub solve: Option<String>,
    #[arg(long)]
    pub record_every: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// `B = V Λ^{1/2}` with `A = V Λ Vᵀ`, so that `BBᵀ = A`.
fn square_factor(a: &GramMatrix<f64>) -> Result<Matrix<f64>> {
    let (vals, vecs) = a.matrix().symmetric_eigen()?;
    let d = a.dims();
    Ok(Matrix::from_fn(d, d, |i, j| vecs[(i, j)] * vals[j].max(0.0).sqrt()))
}

pub fn run_prox(cli: &ProxArgs, file: Option<&Table>) -> Result<Value> {
    let defaults = json!({"tau": 1e-3, "steps": 1000, "seed": 0, "ensemble": "gaussian", "init": "identity",
                          "solve": "first-order", "record-every": 1});
    let (a, echo) = resolve(cli, defaults, file, "prox")?;
    let run = Run::new("prox", echo);
    let (d, seed) = (req(&a.d, "d")?, req(&a.seed, "seed")?);
    let teacher = make_teacher::<f64>(d, req(&a.mstar, "mstar")?, ensemble(&a.ensemble)?, derive_seed(seed, &[0]))?;
    let data = sample_dataset(&teacher, req(&a.n, "n")?, derive_seed(seed, &[1]))?;
    let a0 = initial_gram(&req(&a.init, "init")?, d, a.m.unwrap_or(2 * d), derive_seed(seed, &[2]))?;
    let mut cfg = ProxConfig::new(req(&a.tau, "tau")?, req(&a.steps, "steps")?);
    cfg.record_every = req(&a.record_every, "record-every")?;
    cfg.solve = match req(&a.solve, "solve")?.as_str() {
        "first-order" => ProxSolve::FirstOrder,
        "implicit" => ProxSolve::Implicit { tol: 1e-13, max_iter: 200 },
        other => bail!("unknown solve '{other}' (expected first-order or implicit)"),
    };
    let traj = proximal_flow(&square_factor(&a0)?, &gram(&teacher), &data, &cfg)?;
    if let Some(out) = &a.out {
        traj.write_csv(create(out)?)?;
    }
    let results = json!({
        "flow_status": format!("{:?}", traj.status),
        "final_train_loss": traj.final_train_loss().map(finite_or_null),
        "final_gen_loss": finite_or_null(traj.final_gen_loss()),
        "final_time": traj.final_time(),
    });
    let status = if traj.status.is_failure() { TrialStatus::Diverged.to_string() } else { "completed".into() };
    run.finish(one_status(status), results, a.out.as_deref().map(summary_next_to))
}
