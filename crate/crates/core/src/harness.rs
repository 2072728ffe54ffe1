//! Experiment orchestration: seeded GD trials with outcome classification,
//! phase-diagram sweeps, power-law extrapolation of the critical sample ratio,
//! and log-averaging of loss curves.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::statistics::{Data, OrderStatistics};

use crate::dynamics::{gd_weights, FlowStatus, IntegratorConfig, Monitor};
use crate::error::{invalid, Error, Result};
use crate::linalg::{cholesky_solve, Matrix};
use crate::model::{gram, make_student, make_teacher, sample_dataset, TeacherEnsemble, WeightMatrix};
use crate::rng::derive_seed;
use crate::stats::linear_fit;

/// Environment variable bounding the number of concurrent trials.
pub const WORKERS_ENV: &str = "QUADNET_WORKERS";
/// Floor applied before taking logarithms in [`log_mean`].
pub const LOG_FLOOR: f64 = 1e-300;

/// Number of samples, given directly or as `α = n/d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SampleSize {
    Count(usize),
    Ratio(f64),
}

impl SampleSize {
    /// `n`, with `n = floor(α·d)` for a ratio.
    pub fn resolve(self, d: usize) -> usize {
        match self {
            SampleSize::Count(n) => n,
            SampleSize::Ratio(alpha) => (alpha * d as f64 + 1e-9).floor() as usize,
        }
    }
}

/// How the student weights are initialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StudentInit {
    /// I.i.d. standard normal units with scale `1/m`.
    #[default]
    Gaussian,
    /// The teacher units rescaled by `√(m/m*)`, padded with zero units, so that `A(0) = A*`.
    Teacher,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialConfig {
    pub d: usize,
    pub m: usize,
    pub m_star: usize,
    pub samples: SampleSize,
    pub ensemble: TeacherEnsemble,
    pub eta: f64,
    pub max_steps: usize,
    pub gen_threshold: f64,
    pub ratio_factor: f64,
    pub seed: u64,
    /// Losses are checked (and the run may stop) every `record_every` steps.
    pub record_every: usize,
    pub init: StudentInit,
}

impl TrialConfig {
    pub fn new(d: usize, m: usize, m_star: usize, samples: SampleSize) -> Self {
        TrialConfig {
            d,
            m,
            m_star,
            samples,
            ensemble: TeacherEnsemble::GaussianIid,
            eta: 0.003,
            max_steps: 1_000_000,
            gen_threshold: 1e-5,
            ratio_factor: 1e9,
            seed: 0,
            record_every: 100,
            init: StudentInit::Gaussian,
        }
    }

    pub fn n(&self) -> usize {
        self.samples.resolve(self.d)
    }

    pub fn alpha(&self) -> f64 {
        self.n() as f64 / self.d as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.m_star == 0 {
            return Err(invalid("d and m* must be positive"));
        }
        if self.m < self.d {
            return Err(invalid(format!("student width m = {} is below d = {}", self.m, self.d)));
        }
        if self.n() == 0 {
            return Err(Error::EmptyDataset);
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(invalid("eta must be positive"));
        }
        if !(self.gen_threshold > 0.0) || !(self.ratio_factor > 0.0) {
            return Err(invalid("thresholds must be positive"));
        }
        if self.record_every == 0 {
            return Err(invalid("record_every must be positive"));
        }
        if self.init == StudentInit::Teacher && self.m < self.m_star {
            return Err(invalid("a teacher-initialized student needs m >= m*"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TrialStatus {
    Success,
    LikelyConverging,
    Failed,
    Diverged,
}

impl TrialStatus {
    pub const ALL: [TrialStatus; 4] =
        [TrialStatus::Success, TrialStatus::LikelyConverging, TrialStatus::Failed, TrialStatus::Diverged];

    pub fn as_str(self) -> &'static str {
        match self {
            TrialStatus::Success => "success",
            TrialStatus::LikelyConverging => "likely_converging",
            TrialStatus::Failed => "failed",
            TrialStatus::Diverged => "diverged",
        }
    }
}

impl fmt::Display for TrialStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TrialStatus {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TrialStatus::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| invalid(format!("unknown trial status '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub status: TrialStatus,
    pub final_train_loss: f64,
    pub final_gen_loss: f64,
    /// First recorded time `steps·η` with generalization loss at or below the threshold.
    pub relax_time: Option<f64>,
    pub steps_used: usize,
}

/// Classifies the end state of a run.
pub fn classify(train: f64, gen: f64, diverged: bool, cfg: &TrialConfig) -> TrialStatus {
    if diverged {
        TrialStatus::Diverged
    } else if gen <= cfg.gen_threshold {
        TrialStatus::Success
    } else if train <= cfg.gen_threshold * 1e-3 && gen > cfg.ratio_factor * cfg.d as f64 * train {
        TrialStatus::Failed
    } else {
        TrialStatus::LikelyConverging
    }
}

fn teacher_student(cfg: &TrialConfig, teacher: &WeightMatrix<f64>) -> Result<WeightMatrix<f64>> {
    match cfg.init {
        StudentInit::Gaussian => make_student(cfg.d, cfg.m, derive_seed(cfg.seed, &[2])),
        StudentInit::Teacher => {
            let c = (cfg.m as f64 / cfg.m_star as f64).sqrt();
            let w =
                Matrix::from_fn(cfg.m, cfg.d, |i, j| if i < cfg.m_star { c * teacher.weights()[(i, j)] } else { 0.0 });
            WeightMatrix::with_mean_scale(w)
        }
    }
}

/// Builds teacher, data and student from `cfg.seed` and runs empirical GD on the weights.
///
/// The run stops at the first recorded point whose generalization loss is below the threshold.
pub fn run_trial(cfg: &TrialConfig) -> Result<TrialResult> {
    cfg.validate()?;
    let teacher = make_teacher::<f64>(cfg.d, cfg.m_star, cfg.ensemble, derive_seed(cfg.seed, &[0]))?;
    let data = sample_dataset(&teacher, cfg.n(), derive_seed(cfg.seed, &[1]))?;
    let student = teacher_student(cfg, &teacher)?;
    let icfg = IntegratorConfig::new(cfg.eta, cfg.max_steps)
        .record_every(cfg.record_every)
        .stop_when(Monitor::Gen, cfg.gen_threshold);
    let traj = gd_weights(&student, &gram(&teacher), Some(&data), &icfg)?;
    let diverged = traj.status.is_failure();
    let train = traj.final_train_loss().unwrap_or(f64::NAN);
    let gen = traj.final_gen_loss();
    let steps_used = match traj.status {
        FlowStatus::Diverged { step } | FlowStatus::LostPsd { step } | FlowStatus::Stopped { step } => step,
        FlowStatus::Completed => cfg.max_steps,
    };
    Ok(TrialResult {
        status: classify(train, gen, diverged, cfg),
        final_train_loss: train,
        final_gen_loss: gen,
        relax_time: traj.first_crossing(cfg.gen_threshold),
        steps_used,
    })
}

/// Cartesian grid `d × m* × α` with shared trial settings; the student width is `m = width·d`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub dims: Vec<usize>,
    pub m_stars: Vec<usize>,
    pub alphas: Vec<f64>,
    pub width: usize,
    /// Settings copied into every trial; its `d`, `m`, `m_star`, `samples` and `seed` are overwritten.
    pub template: TrialConfig,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellKey {
    pub d: usize,
    pub m_star: usize,
    pub n: usize,
    pub alpha: f64,
}

impl SweepGrid {
    pub fn cells(&self) -> Vec<CellKey> {
        let mut out = Vec::new();
        for &d in &self.dims {
            for &m_star in &self.m_stars {
                for &alpha in &self.alphas {
                    out.push(CellKey { d, m_star, n: SampleSize::Ratio(alpha).resolve(d), alpha });
                }
            }
        }
        out
    }

    fn trial_config(&self, cell: &CellKey, trial: usize, base_seed: u64) -> TrialConfig {
        let seed = derive_seed(base_seed, &[cell.d as u64, cell.m_star as u64, cell.alpha.to_bits(), trial as u64]);
        TrialConfig {
            d: cell.d,
            m: self.width * cell.d,
            m_star: cell.m_star,
            samples: SampleSize::Count(cell.n),
            seed,
            ..self.template.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub cell: CellKey,
    pub trial: usize,
    pub seed: u64,
    /// `Err` holds the message of a trial that could not be set up.
    pub result: std::result::Result<TrialResult, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub key: CellKey,
    pub trials: usize,
    pub success: usize,
    pub likely_converging: usize,
    pub failed: usize,
    pub diverged: usize,
    pub errors: usize,
    pub success_fraction: f64,
    pub median_relax_time: Option<f64>,
    pub q25_relax_time: Option<f64>,
    pub q75_relax_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResultTable {
    pub cells: Vec<CellSummary>,
    /// Every trial, ordered by cell then trial index.
    pub records: Vec<TrialRecord>,
}

impl ResultTable {
    pub const CELL_CSV_HEADER: &'static str = "d,m_star,n,alpha,trials,success,likely_converging,failed,diverged,errors,success_fraction,median_relax_time,q25_relax_time,q75_relax_time";
    pub const TRIAL_CSV_HEADER: &'static str =
        "d,m_star,n,alpha,trial,seed,status,final_train_loss,final_gen_loss,relax_time,steps_used";

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn status_counts(&self) -> [(TrialStatus, usize); 4] {
        TrialStatus::ALL
            .map(|s| (s, self.records.iter().filter(|r| r.result.as_ref().is_ok_and(|t| t.status == s)).count()))
    }

    pub fn write_cells_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        writeln!(out, "{}", Self::CELL_CSV_HEADER)?;
        for c in &self.cells {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                c.key.d,
                c.key.m_star,
                c.key.n,
                c.key.alpha,
                c.trials,
                c.success,
                c.likely_converging,
                c.failed,
                c.diverged,
                c.errors,
                c.success_fraction,
                opt(c.median_relax_time),
                opt(c.q25_relax_time),
                opt(c.q75_relax_time)
            )?;
        }
        Ok(())
    }

    pub fn write_trials_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{}", Self::TRIAL_CSV_HEADER)?;
        for r in &self.records {
            let k = &r.cell;
            write!(out, "{},{},{},{},{},{},", k.d, k.m_star, k.n, k.alpha, r.trial, r.seed)?;
            match &r.result {
                Ok(t) => writeln!(
                    out,
                    "{},{:e},{:e},{},{}",
                    t.status,
                    t.final_train_loss,
                    t.final_gen_loss,
                    t.relax_time.map(|x| x.to_string()).unwrap_or_default(),
                    t.steps_used
                )?,
                Err(_) => writeln!(out, "error,,,,")?,
            }
        }
        Ok(())
    }
}

/// Worker count from [`WORKERS_ENV`], if set to a positive integer.
pub fn workers_from_env() -> Option<usize> {
    std::env::var(WORKERS_ENV).ok()?.trim().parse().ok().filter(|&n| n > 0)
}

fn summarize(key: CellKey, records: &[TrialRecord]) -> CellSummary {
    let count = |s: TrialStatus| records.iter().filter(|r| r.result.as_ref().is_ok_and(|t| t.status == s)).count();
    let errors = records.iter().filter(|r| r.result.is_err()).count();
    let success = count(TrialStatus::Success);
    let times: Vec<f64> = records.iter().filter_map(|r| r.result.as_ref().ok()?.relax_time).collect();
    let (median, q25, q75) = if times.is_empty() {
        (None, None, None)
    } else {
        let mut data = Data::new(times);
        (Some(data.median()), Some(data.lower_quartile()), Some(data.upper_quartile()))
    };
    CellSummary {
        key,
        trials: records.len(),
        success,
        likely_converging: count(TrialStatus::LikelyConverging),
        failed: count(TrialStatus::Failed),
        diverged: count(TrialStatus::Diverged),
        errors,
        success_fraction: if records.is_empty() { 0.0 } else { success as f64 / records.len() as f64 },
        median_relax_time: median,
        q25_relax_time: q25,
        q75_relax_time: q75,
    }
}

/// Runs `trials_per_cell` seeded trials in every grid cell.
///
/// Trial seeds are `derive_seed(base_seed, [d, m*, α bits, trial])`. Trials run concurrently,
/// bounded by [`WORKERS_ENV`] when set; the table does not depend on the worker count.
pub fn sweep(grid: &SweepGrid, trials_per_cell: usize, base_seed: u64) -> ResultTable {
    let cells = grid.cells();
    let jobs: Vec<(usize, usize)> = (0..cells.len()).flat_map(|c| (0..trials_per_cell).map(move |t| (c, t))).collect();
    let run = || -> Vec<TrialRecord> {
        jobs.par_iter()
            .map(|&(c, t)| {
                let cfg = grid.trial_config(&cells[c], t, base_seed);
                TrialRecord {
                    cell: cells[c],
                    trial: t,
                    seed: cfg.seed,
                    result: run_trial(&cfg).map_err(|e| e.to_string()),
                }
            })
            .collect()
    };
    let records = match workers_from_env().and_then(|n| rayon::ThreadPoolBuilder::new().num_threads(n).build().ok()) {
        Some(pool) => pool.install(run),
        None => run(),
    };
    let cells = cells
        .iter()
        .enumerate()
        .map(|(c, &key)| summarize(key, &records[c * trials_per_cell..(c + 1) * trials_per_cell]))
        .collect();
    ResultTable { cells, records }
}

/// Least-squares fit of `log τ = c − θ log(α − α_c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaCFit {
    pub alpha_c: f64,
    /// 95% interval for `α_c` from the linearized fit with a Student-t quantile.
    pub ci95: (f64, f64),
    pub theta: f64,
    pub intercept: f64,
    pub sse: f64,
    pub points: usize,
}

const GRID_POINTS: usize = 400;
const GOLDEN_ITERS: usize = 200;

fn profile_sse(alphas: &[f64], log_tau: &[f64], alpha_c: f64) -> Option<(f64, f64, f64)> {
    let x: Vec<f64> = alphas.iter().map(|&a| (a - alpha_c).ln()).collect();
    let fit = linear_fit(&x, log_tau)?;
    Some((fit.sse, -fit.slope, fit.intercept))
}

/// Extrapolates the critical ratio from relaxation times measured at `alphas`.
///
/// Requires at least four points with finite positive times that grow strictly as `α`
/// decreases. The outer search over `α_c < min α` scans a log grid in `min α − α_c` and
/// refines the best bracket by golden-section search.
pub fn fit_alpha_c(alphas: &[f64], relax_times: &[f64]) -> Result<AlphaCFit> {
    if alphas.len() != relax_times.len() {
        return Err(invalid("alphas and relaxation times differ in length"));
    }
    let mut pts: Vec<(f64, f64)> = alphas.iter().copied().zip(relax_times.iter().copied()).collect();
    if pts.iter().any(|&(a, t)| !a.is_finite() || !t.is_finite() || t <= 0.0) {
        return Err(Error::InsufficientData("relaxation times must be finite and positive".into()));
    }
    if pts.len() < 4 {
        return Err(Error::InsufficientData(format!("need at least 4 points, got {}", pts.len())));
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    for w in pts.windows(2) {
        if w[0].0 == w[1].0 {
            return Err(Error::InsufficientData(format!("repeated alpha {}", w[0].0)));
        }
        if w[0].1 <= w[1].1 {
            return Err(Error::InsufficientData(format!(
                "relaxation time does not grow toward the threshold between alpha {} and {}",
                w[0].0, w[1].0
            )));
        }
    }
    let a: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let lo_alpha = a[0];
    let span = a[a.len() - 1] - lo_alpha;
    // search variable u = ln(min α − α_c)
    let sse_at = |u: f64| profile_sse(&a, &y, lo_alpha - u.exp()).map_or(f64::INFINITY, |r| r.0);
    let (u_min, u_max) = ((span * 1e-9).ln(), (span * 100.0).ln());
    let grid: Vec<f64> =
        (0..GRID_POINTS).map(|i| u_min + (u_max - u_min) * i as f64 / (GRID_POINTS - 1) as f64).collect();
    let values: Vec<f64> = grid.iter().map(|&u| sse_at(u)).collect();
    let best = (0..GRID_POINTS).min_by(|&i, &j| values[i].total_cmp(&values[j])).expect("grid is nonempty");
    let (mut lo, mut hi) = (grid[best.saturating_sub(1)], grid[(best + 1).min(GRID_POINTS - 1)]);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = hi - phi * (hi - lo);
    let mut d = lo + phi * (hi - lo);
    let (mut fc, mut fd) = (sse_at(c), sse_at(d));
    for _ in 0..GOLDEN_ITERS {
        if hi - lo <= 1e-15 * (1.0 + lo.abs()) {
            break;
        }
        if fc <= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - phi * (hi - lo);
            fc = sse_at(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + phi * (hi - lo);
            fd = sse_at(d);
        }
    }
    let u = if fc <= fd { c } else { d };
    let alpha_c = lo_alpha - u.exp();
    let (sse, theta, intercept) =
        profile_sse(&a, &y, alpha_c).ok_or_else(|| Error::InsufficientData("degenerate fit".into()))?;

    let n = a.len();
    let dof = (n - 3) as f64;
    // Jacobian of the model c − θ ln(α − α_c) in (α_c, θ, c)
    let mut jtj = Matrix::<f64>::zeros(3, 3);
    for &ai in &a {
        let g = [theta / (ai - alpha_c), -(ai - alpha_c).ln(), 1.0];
        for r in 0..3 {
            for s in 0..3 {
                jtj[(r, s)] += g[r] * g[s];
            }
        }
    }
    let var = cholesky_solve(&jtj, &[1.0, 0.0, 0.0]).map(|col| col[0] * sse / dof);
    let half = match var {
        Some(v) if v >= 0.0 => {
            let t = StudentsT::new(0.0, 1.0, dof).map_err(|e| invalid(e.to_string()))?.inverse_cdf(0.975);
            t * v.sqrt()
        }
        _ => f64::INFINITY,
    };
    Ok(AlphaCFit { alpha_c, ci95: (alpha_c - half, alpha_c + half), theta, intercept, sse, points: n })
}

/// Pointwise geometric mean of curves sampled on a common grid, with values floored at [`LOG_FLOOR`].
pub fn log_mean(curves: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = curves.first().ok_or_else(|| invalid("no curves to average"))?;
    if curves.iter().any(|c| c.len() != first.len()) {
        return Err(invalid("curves have different lengths"));
    }
    let k = curves.len() as f64;
    Ok((0..first.len()).map(|i| (curves.iter().map(|c| c[i].max(LOG_FLOOR).ln()).sum::<f64>() / k).exp()).collect())
}

/// [`log_mean`] for `(times, values)` curves; the time grids must coincide exactly.
pub fn log_mean_curves(curves: &[(Vec<f64>, Vec<f64>)]) -> Result<(Vec<f64>, Vec<f64>)> {
    let (t0, _) = curves.first().ok_or_else(|| invalid("no curves to average"))?;
    if curves.iter().any(|(t, v)| t != t0 || v.len() != t.len()) {
        return Err(invalid("curves are not sampled on a common time grid"));
    }
    let values: Vec<Vec<f64>> = curves.iter().map(|(_, v)| v.clone()).collect();
    Ok((t0.clone(), log_mean(&values)?))
}

#[cfg(test)]
mod tests;
