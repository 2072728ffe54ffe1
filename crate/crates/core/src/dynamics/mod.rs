//! Gradient flows in weight space and in Gram-matrix space.
//!
//! Four flows share one integration loop:
//!
//! | space   | loss       | vector field                                         |
//! |---------|------------|------------------------------------------------------|
//! | weights | empirical  | `ẇ_i = E_n[(xᵀ(A*−A)x) (x·w_i) x]`                   |
//! | weights | population | `ẇ_i = tr(A*−A) w_i + 2(A*−A) w_i`                   |
//! | gram    | empirical  | `Ȧ = −A∇E_n(A) − ∇E_n(A)A`                           |
//! | gram    | population | `Ȧ = −A∇E(A) − ∇E(A)A`                               |
//!
//! With explicit Euler the weight flows are plain gradient descent on the
//! weight-space loss with learning rate `step`.

mod proximal;
mod rate;

pub use proximal::{proximal_flow, proximal_step, ProxConfig, ProxSolve};
pub use rate::{rate_diagnostics, rate_diagnostics_from, DecayClass, RateReport};

use std::io::{self, Write};

use crate::error::{check_dim, invalid, Result};
use crate::linalg::{dot, Matrix};
use crate::losses::{empirical_grad_from_delta, population_grad_from_delta, population_loss_from_delta};
use crate::model::{gram_into, Dataset, GramMatrix, WeightMatrix};
use crate::ode::{Method, Stepper};
use crate::scalar::Real;

/// Losses above this value count as divergence.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;
/// Gram flows are flagged once `λ_min < -PSD_TOLERANCE · max(1, λ_max)`.
pub const PSD_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Space {
    Weights,
    Gram,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    Empirical,
    Population,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FlowKind {
    pub space: Space,
    pub loss: LossKind,
}

/// Which recorded loss an early-stopping rule watches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Monitor {
    Train,
    Gen,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopRule<T> {
    pub monitor: Monitor,
    pub threshold: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegratorConfig<T> {
    /// Learning rate / time step.
    pub step: T,
    pub max_steps: usize,
    pub record_every: usize,
    pub stop: Option<StopRule<T>>,
    pub method: Method,
    /// Keep a copy of the Gram matrix at every recorded step.
    pub snapshots: bool,
}

impl<T: Real> IntegratorConfig<T> {
    pub fn new(step: T, max_steps: usize) -> Self {
        IntegratorConfig { step, max_steps, record_every: 1, stop: None, method: Method::Euler, snapshots: false }
    }

    pub fn record_every(mut self, every: usize) -> Self {
        self.record_every = every;
        self
    }

    pub fn method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }

    pub fn stop_when(mut self, monitor: Monitor, threshold: T) -> Self {
        self.stop = Some(StopRule { monitor, threshold });
        self
    }

    pub fn with_snapshots(mut self) -> Self {
        self.snapshots = true;
        self
    }

    /// Configuration that integrates up to time `horizon` (rounded to whole steps).
    pub fn until(step: T, horizon: T) -> Self {
        let steps = (horizon / step).round().to_usize().unwrap_or(0).max(1);
        Self::new(step, steps)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > T::zero()) || !self.step.is_finite() {
            return Err(invalid("integration step must be positive"));
        }
        if self.max_steps == 0 {
            return Err(invalid("max_steps must be at least 1"));
        }
        if self.record_every == 0 {
            return Err(invalid("record_every must be at least 1"));
        }
        if let Some(rule) = &self.stop {
            if !(rule.threshold >= T::zero()) {
                return Err(invalid("stop threshold must be nonnegative"));
            }
        }
        Ok(())
    }
}

impl Default for IntegratorConfig<f64> {
    fn default() -> Self {
        IntegratorConfig::new(0.003, 100_000).record_every(100)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowStatus {
    /// Ran for `max_steps`.
    Completed,
    /// The stop rule fired at this step.
    Stopped { step: usize },
    /// Loss became non-finite or exceeded the divergence threshold at this step.
    Diverged { step: usize },
    /// A Gram iterate left the PSD cone at this step.
    LostPsd { step: usize },
}

impl FlowStatus {
    pub fn is_failure(&self) -> bool {
        matches!(self, FlowStatus::Diverged { .. } | FlowStatus::LostPsd { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TerminalState<T> {
    Weights(WeightMatrix<T>),
    Gram(GramMatrix<T>),
    /// Factor `B` with `A = B Bᵀ`.
    Factor(Matrix<T>),
}

impl<T: Real> TerminalState<T> {
    pub fn gram(&self) -> GramMatrix<T> {
        match self {
            TerminalState::Weights(w) => crate::model::gram(w),
            TerminalState::Gram(a) => a.clone(),
            TerminalState::Factor(b) => {
                GramMatrix::symmetrized(b.matmul(&b.transpose()).expect("square factor")).expect("square")
            }
        }
    }
}

/// Recorded history of one flow.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub kind: FlowKind,
    pub steps: Vec<usize>,
    pub times: Vec<T>,
    /// `E_n` at each record; `None` for population flows.
    pub train_loss: Option<Vec<T>>,
    /// Population loss `E` at each record.
    pub gen_loss: Vec<T>,
    pub snapshots: Vec<GramMatrix<T>>,
    /// State at the last recorded step.
    pub terminal: TerminalState<T>,
    pub status: FlowStatus,
}

impl<T: Real> Trajectory<T> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_gen_loss(&self) -> T {
        *self.gen_loss.last().expect("trajectory has the initial record")
    }

    pub fn final_train_loss(&self) -> Option<T> {
        self.train_loss.as_ref().and_then(|v| v.last().copied())
    }

    pub fn final_time(&self) -> T {
        *self.times.last().expect("trajectory has the initial record")
    }

    pub fn diverged(&self) -> bool {
        self.status.is_failure()
    }

    /// First recorded time at which the population loss is at or below `threshold`.
    pub fn first_crossing(&self, threshold: T) -> Option<T> {
        self.times.iter().zip(&self.gen_loss).find(|(_, &e)| e <= threshold).map(|(&t, _)| t)
    }

    /// Writes `step,t,train_loss,gen_loss`; `train_loss` is empty for population flows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "step,t,train_loss,gen_loss")?;
        for i in 0..self.len() {
            let train = match &self.train_loss {
                Some(v) => v[i].to_string(),
                None => String::new(),
            };
            writeln!(out, "{},{},{},{}", self.steps[i], self.times[i], train, self.gen_loss[i])?;
        }
        Ok(())
    }
}

/// A vector field on a flat state together with its loss read-outs.
trait Flow<T: Real> {
    fn velocity(&mut self, state: &[T], out: &mut [T]);
    fn post_step(&self, _state: &mut [T]) {}
    /// `(train, gen)` losses at `state`.
    fn losses(&mut self, state: &[T]) -> (Option<T>, T);
    fn gram(&self, state: &[T]) -> Matrix<T>;
    fn tracks_psd(&self) -> bool {
        false
    }
}

struct WeightFlow<'a, T> {
    units: usize,
    dims: usize,
    scale: T,
    a_star: &'a Matrix<T>,
    data: Option<&'a Dataset<T>>,
    a: Matrix<T>,
}

impl<'a, T: Real> WeightFlow<'a, T> {
    fn update_gram(&mut self, state: &[T]) {
        gram_into(state, self.dims, self.scale, &mut self.a);
    }
}

impl<'a, T: Real> Flow<T> for WeightFlow<'a, T> {
    fn velocity(&mut self, state: &[T], out: &mut [T]) {
        self.update_gram(state);
        let d = self.dims;
        out.iter_mut().for_each(|x| *x = T::zero());
        match self.data {
            Some(data) => {
                let inv_n = T::one() / T::of_usize(data.len());
                for (x, y) in data.samples() {
                    let r = (y - self.a.quad_form(x)) * inv_n;
                    if r == T::zero() {
                        continue;
                    }
                    for (w, o) in state.chunks_exact(d).zip(out.chunks_exact_mut(d)) {
                        let c = r * dot(w, x);
                        for (oj, &xj) in o.iter_mut().zip(x) {
                            *oj += c * xj;
                        }
                    }
                }
            }
            None => {
                let delta = self.a_star - &self.a;
                let tr = delta.trace();
                let two = T::of(2.0);
                for (w, o) in state.chunks_exact(d).zip(out.chunks_exact_mut(d)) {
                    for (j, oj) in o.iter_mut().enumerate() {
                        *oj = tr * w[j] + two * dot(delta.row(j), w);
                    }
                }
            }
        }
        debug_assert_eq!(state.len(), self.units * d);
    }

    fn losses(&mut self, state: &[T]) -> (Option<T>, T) {
        self.update_gram(state);
        let train = self.data.map(|data| {
            let mut acc = T::zero();
            for (x, y) in data.samples() {
                let r = y - self.a.quad_form(x);
                acc += r * r;
            }
            acc / (T::of(2.0) * T::of_usize(data.len()))
        });
        let gen = population_loss_from_delta(&(&self.a - self.a_star));
        (train, gen)
    }

    fn gram(&self, state: &[T]) -> Matrix<T> {
        let mut a = Matrix::zeros(self.dims, self.dims);
        gram_into(state, self.dims, self.scale, &mut a);
        a
    }
}

struct GramFlow<'a, T> {
    dims: usize,
    a_star: &'a Matrix<T>,
    data: Option<&'a Dataset<T>>,
}

impl<'a, T: Real> GramFlow<'a, T> {
    fn as_matrix(&self, state: &[T]) -> Matrix<T> {
        Matrix::from_vec(self.dims, self.dims, state.to_vec()).expect("state shape")
    }

    fn grad(&self, a: &Matrix<T>) -> Matrix<T> {
        match self.data {
            Some(data) => empirical_grad_from_delta(&(self.a_star - a), data),
            None => population_grad_from_delta(&(a - self.a_star)),
        }
    }
}

impl<'a, T: Real> Flow<T> for GramFlow<'a, T> {
    fn velocity(&mut self, state: &[T], out: &mut [T]) {
        let a = self.as_matrix(state);
        let g = self.grad(&a);
        // GA = (AG)ᵀ for symmetric A and G
        let ag = a.matmul(&g).expect("square");
        let d = self.dims;
        for i in 0..d {
            for j in 0..d {
                out[i * d + j] = -(ag[(i, j)] + ag[(j, i)]);
            }
        }
    }

    fn post_step(&self, state: &mut [T]) {
        let d = self.dims;
        let half = T::of(0.5);
        for i in 0..d {
            for j in (i + 1)..d {
                let v = half * (state[i * d + j] + state[j * d + i]);
                state[i * d + j] = v;
                state[j * d + i] = v;
            }
        }
    }

    fn losses(&mut self, state: &[T]) -> (Option<T>, T) {
        let a = self.as_matrix(state);
        let train = self.data.map(|data| {
            let delta = &a - self.a_star;
            let mut acc = T::zero();
            for x in data.inputs().row_iter() {
                let q = delta.quad_form(x);
                acc += q * q;
            }
            acc / (T::of(2.0) * T::of_usize(data.len()))
        });
        (train, population_loss_from_delta(&(&a - self.a_star)))
    }

    fn gram(&self, state: &[T]) -> Matrix<T> {
        self.as_matrix(state)
    }

    fn tracks_psd(&self) -> bool {
        true
    }
}

pub(crate) struct Recording<T> {
    pub steps: Vec<usize>,
    pub times: Vec<T>,
    pub train: Vec<T>,
    pub gen: Vec<T>,
    pub snapshots: Vec<GramMatrix<T>>,
    pub last_good: Vec<T>,
    pub status: FlowStatus,
}

impl<T: Real> Recording<T> {
    pub(crate) fn new(state: &[T]) -> Self {
        Recording {
            steps: Vec::new(),
            times: Vec::new(),
            train: Vec::new(),
            gen: Vec::new(),
            snapshots: Vec::new(),
            last_good: state.to_vec(),
            status: FlowStatus::Completed,
        }
    }

    /// Records one point; returns `false` (and sets the status) when the point is unusable.
    pub(crate) fn push(
        &mut self,
        step: usize,
        time: T,
        losses: (Option<T>, T),
        state: &[T],
        snapshot: Option<Matrix<T>>,
        check_psd: Option<&Matrix<T>>,
    ) -> bool {
        let limit = T::of(DIVERGENCE_THRESHOLD);
        let bad = |x: T| !x.is_finite() || x > limit;
        if bad(losses.1) || losses.0.is_some_and(bad) || state.iter().any(|x| !x.is_finite()) {
            self.status = FlowStatus::Diverged { step };
            return false;
        }
        if let Some(a) = check_psd {
            let ev = a.symmetric_eigenvalues().expect("square");
            let hi = ev.first().copied().unwrap_or_else(T::zero).max(T::one());
            if ev.last().copied().unwrap_or_else(T::zero) < -T::of(PSD_TOLERANCE) * hi {
                self.status = FlowStatus::LostPsd { step };
                return false;
            }
        }
        self.steps.push(step);
        self.times.push(time);
        if let Some(tr) = losses.0 {
            self.train.push(tr);
        }
        self.gen.push(losses.1);
        if let Some(s) = snapshot {
            self.snapshots.push(GramMatrix::from_symmetric_unchecked(s));
        }
        self.last_good.clear();
        self.last_good.extend_from_slice(state);
        true
    }
}

fn integrate<T: Real, F: Flow<T>>(flow: &mut F, mut state: Vec<T>, cfg: &IntegratorConfig<T>) -> Recording<T> {
    let mut rec = Recording::new(&state);
    let mut stepper = Stepper::new(cfg.method, state.len());
    let record = |flow: &mut F, state: &[T], step: usize, rec: &mut Recording<T>| -> bool {
        let losses = flow.losses(state);
        let need_gram = cfg.snapshots || flow.tracks_psd();
        let a = need_gram.then(|| flow.gram(state));
        let psd = if flow.tracks_psd() { a.as_ref() } else { None };
        let snap = if cfg.snapshots { a.clone() } else { None };
        if !rec.push(step, T::of_usize(step) * cfg.step, losses, state, snap, psd) {
            return false;
        }
        if let Some(rule) = &cfg.stop {
            let watched = match rule.monitor {
                Monitor::Train => losses.0.unwrap_or(losses.1),
                Monitor::Gen => losses.1,
            };
            if watched <= rule.threshold {
                rec.status = FlowStatus::Stopped { step };
                return false;
            }
        }
        true
    };
    if !record(flow, &state, 0, &mut rec) {
        return rec;
    }
    for step in 1..=cfg.max_steps {
        stepper.step(&mut state, cfg.step, &mut |y, out| flow.velocity(y, out));
        flow.post_step(&mut state);
        if (step % cfg.record_every == 0 || step == cfg.max_steps) && !record(flow, &state, step, &mut rec) {
            return rec;
        }
    }
    rec
}

fn kind_of<T>(space: Space, data: Option<&Dataset<T>>) -> FlowKind {
    FlowKind { space, loss: if data.is_some() { LossKind::Empirical } else { LossKind::Population } }
}

/// Gradient descent on the student weights (empirical loss when `data` is given, population loss otherwise).
pub fn gd_weights<T: Real>(
    w0: &WeightMatrix<T>,
    a_star: &GramMatrix<T>,
    data: Option<&Dataset<T>>,
    cfg: &IntegratorConfig<T>,
) -> Result<Trajectory<T>> {
    cfg.validate()?;
    check_dim(a_star.dims(), w0.dims())?;
    if let Some(data) = data {
        check_dim(w0.dims(), data.dims())?;
    }
    let d = w0.dims();
    let mut flow = WeightFlow {
        units: w0.units(),
        dims: d,
        scale: w0.scale(),
        a_star: a_star.matrix(),
        data,
        a: Matrix::zeros(d, d),
    };
    let rec = integrate(&mut flow, w0.weights().as_slice().to_vec(), cfg);
    let mut terminal = w0.clone();
    terminal.weights_mut().as_mut_slice().copy_from_slice(&rec.last_good);
    Ok(Trajectory {
        kind: kind_of(Space::Weights, data),
        steps: rec.steps,
        times: rec.times,
        train_loss: data.map(|_| rec.train),
        gen_loss: rec.gen,
        snapshots: rec.snapshots,
        terminal: TerminalState::Weights(terminal),
        status: rec.status,
    })
}

/// Integrates `Ȧ = −A∇ℓ(A) − ∇ℓ(A)A` with `ℓ = E_n` (data given) or `ℓ = E`.
pub fn flow_gram<T: Real>(
    a0: &GramMatrix<T>,
    a_star: &GramMatrix<T>,
    data: Option<&Dataset<T>>,
    cfg: &IntegratorConfig<T>,
) -> Result<Trajectory<T>> {
    cfg.validate()?;
    check_dim(a_star.dims(), a0.dims())?;
    if let Some(data) = data {
        check_dim(a0.dims(), data.dims())?;
    }
    let d = a0.dims();
    let mut flow = GramFlow { dims: d, a_star: a_star.matrix(), data };
    let rec = integrate(&mut flow, a0.matrix().as_slice().to_vec(), cfg);
    let terminal = GramMatrix::from_symmetric_unchecked(Matrix::from_vec(d, d, rec.last_good)?);
    Ok(Trajectory {
        kind: kind_of(Space::Gram, data),
        steps: rec.steps,
        times: rec.times,
        train_loss: data.map(|_| rec.train),
        gen_loss: rec.gen,
        snapshots: rec.snapshots,
        terminal: TerminalState::Gram(terminal),
        status: rec.status,
    })
}

/// Largest Frobenius distance between snapshots recorded at identical times.
///
/// Times are matched to within `1e-9` relative; unmatched records are skipped.
pub fn max_snapshot_deviation<T: Real>(a: &Trajectory<T>, b: &Trajectory<T>) -> Option<T> {
    let mut j = 0;
    let mut best: Option<T> = None;
    let tol = T::of(1e-9);
    for (i, &t) in a.times.iter().enumerate() {
        while j < b.times.len() && b.times[j] < t - tol * t.abs().max(T::one()) {
            j += 1;
        }
        if j == b.times.len() {
            break;
        }
        if (b.times[j] - t).abs() <= tol * t.abs().max(T::one()) {
            let dev = a.snapshots.get(i)?.frobenius_dist(b.snapshots.get(j)?);
            best = Some(best.map_or(dev, |m: T| m.max(dev)));
        }
    }
    best
}

#[cfg(test)]
mod tests;
