//! Population dynamics in the teacher eigenbasis.
//!
//! Starting from `A(0) = Id`, the population gram flow stays diagonal in the
//! eigenbasis of `A*` and its eigenvalues obey
//!
//! ```text
//! λ̇_i = 2 Σ_j (λ*_j − λ_j) λ_i + 4 (λ*_i − λ_i) λ_i,    λ_i(0) = 1.
//! ```
//!
//! For an orthonormal teacher (`λ* = (1,…,1,0,…,0)` with `m*` ones) the
//! informative eigenvalues share a common value `λ` and the non-informative
//! ones a common value `ε`, which gives a two-species Lotka–Volterra system.

use std::io::{self, Write};

use crate::dynamics::{FlowStatus, IntegratorConfig, DIVERGENCE_THRESHOLD};
use crate::error::{check_dim, invalid, Result};
use crate::model::{gram, WeightMatrix};
use crate::ode::{Method, Stepper};
use crate::scalar::Real;

/// Eigenvalues below `-NEGATIVITY_TOLERANCE` are flagged.
pub const NEGATIVITY_TOLERANCE: f64 = 1e-12;

/// Default configuration: rk4 with `dt = 1e-3` up to time `horizon`.
pub fn default_config<T: Real>(horizon: T) -> IntegratorConfig<T> {
    IntegratorConfig::until(T::of(1e-3), horizon).method(Method::Rk4)
}

/// `Σ (λ_j − λ*_j)² + ½ (Σ (λ_j − λ*_j))²`.
pub fn eigen_loss<T: Real>(lambdas: &[T], lambdas_star: &[T]) -> Result<T> {
    check_dim(lambdas_star.len(), lambdas.len())?;
    Ok(eigen_loss_unchecked(lambdas, lambdas_star))
}

fn eigen_loss_unchecked<T: Real>(lambdas: &[T], lambdas_star: &[T]) -> T {
    let mut sq = T::zero();
    let mut sum = T::zero();
    for (&l, &s) in lambdas.iter().zip(lambdas_star) {
        let d = l - s;
        sq += d * d;
        sum += d;
    }
    sq + T::of(0.5) * sum * sum
}

/// Eigenvalues of the teacher's Gram matrix, descending; round-off negatives are clamped to zero.
pub fn teacher_spectrum<T: Real>(teacher: &WeightMatrix<T>) -> Vec<T> {
    let mut ev = gram(teacher).eigenvalues();
    let scale = ev.first().copied().unwrap_or_else(T::zero).abs().max(T::one());
    for v in &mut ev {
        if *v < T::zero() && *v > -T::of(1e-10) * scale {
            *v = T::zero();
        }
    }
    ev
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenTrajectory<T> {
    pub times: Vec<T>,
    /// `lambdas[k]` is the spectrum at `times[k]`.
    pub lambdas: Vec<Vec<T>>,
    pub loss: Vec<T>,
    pub lambdas_star: Vec<T>,
    pub status: FlowStatus,
}

impl<T: Real> EigenTrajectory<T> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_lambdas(&self) -> &[T] {
        self.lambdas.last().expect("initial record")
    }

    /// Writes `t,lambda_1,…,lambda_d,loss`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let d = self.lambdas_star.len();
        let mut header = String::from("t");
        for i in 1..=d {
            header.push_str(&format!(",lambda_{i}"));
        }
        writeln!(out, "{header},loss")?;
        for ((t, l), e) in self.times.iter().zip(&self.lambdas).zip(&self.loss) {
            write!(out, "{t}")?;
            for v in l {
                write!(out, ",{v}")?;
            }
            writeln!(out, ",{e}")?;
        }
        Ok(())
    }
}

fn check_config<T: Real>(cfg: &IntegratorConfig<T>) -> Result<()> {
    cfg.validate()
}

/// Integrates the eigenvalue ODE from `λ(0) = 1`.
pub fn eigen_flow<T: Real>(lambdas_star: &[T], cfg: &IntegratorConfig<T>) -> Result<EigenTrajectory<T>> {
    eigen_flow_from(&vec![T::one(); lambdas_star.len()], lambdas_star, cfg)
}

/// Integrates the eigenvalue ODE from an arbitrary positive start.
pub fn eigen_flow_from<T: Real>(
    lambda0: &[T],
    lambdas_star: &[T],
    cfg: &IntegratorConfig<T>,
) -> Result<EigenTrajectory<T>> {
    check_config(cfg)?;
    check_dim(lambdas_star.len(), lambda0.len())?;
    if lambdas_star.is_empty() {
        return Err(invalid("spectrum must be nonempty"));
    }
    if lambdas_star.iter().any(|&s| !(s >= T::zero())) {
        return Err(invalid("teacher eigenvalues must be nonnegative"));
    }
    let star = lambdas_star.to_vec();
    let two = T::of(2.0);
    let four = T::of(4.0);
    let field = |y: &[T], out: &mut [T]| {
        let s: T = star.iter().zip(y).map(|(&a, &b)| a - b).sum();
        for ((o, &l), &ls) in out.iter_mut().zip(y).zip(&star) {
            *o = l * (two * s + four * (ls - l));
        }
    };
    let loss = |y: &[T]| eigen_loss_unchecked(y, &star);
    let rec = run(lambda0.to_vec(), cfg, field, loss);
    Ok(EigenTrajectory {
        times: rec.times,
        lambdas: rec.states,
        loss: rec.values,
        lambdas_star: star,
        status: rec.status,
    })
}

struct Run<T> {
    times: Vec<T>,
    states: Vec<Vec<T>>,
    values: Vec<T>,
    status: FlowStatus,
}

fn run<T: Real>(
    mut y: Vec<T>,
    cfg: &IntegratorConfig<T>,
    mut field: impl FnMut(&[T], &mut [T]),
    value: impl Fn(&[T]) -> T,
) -> Run<T> {
    let mut r = Run { times: Vec::new(), states: Vec::new(), values: Vec::new(), status: FlowStatus::Completed };
    let limit = T::of(DIVERGENCE_THRESHOLD);
    let floor = -T::of(NEGATIVITY_TOLERANCE);
    let record = |r: &mut Run<T>, y: &[T], step: usize| -> bool {
        let v = value(y);
        if !v.is_finite() || v > limit || y.iter().any(|x| !x.is_finite()) {
            r.status = FlowStatus::Diverged { step };
            return false;
        }
        if y.iter().any(|&x| x < floor) {
            r.status = FlowStatus::LostPsd { step };
            return false;
        }
        r.times.push(T::of_usize(step) * cfg.step);
        r.states.push(y.to_vec());
        r.values.push(v);
        if let Some(rule) = &cfg.stop {
            if v <= rule.threshold {
                r.status = FlowStatus::Stopped { step };
                return false;
            }
        }
        true
    };
    if !record(&mut r, &y, 0) {
        return r;
    }
    let mut stepper = Stepper::new(cfg.method, y.len());
    for step in 1..=cfg.max_steps {
        stepper.step(&mut y, cfg.step, &mut field);
        if (step % cfg.record_every == 0 || step == cfg.max_steps) && !record(&mut r, &y, step) {
            break;
        }
    }
    r
}

/// `(λ, ε)` history of the two-species reduction.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedTrajectory<T> {
    pub d: usize,
    pub m_star: usize,
    pub times: Vec<T>,
    pub lambda: Vec<T>,
    pub epsilon: Vec<T>,
    /// Population loss with `m*` eigenvalues at `λ` (target 1) and `d − m*` at `ε` (target 0).
    pub loss: Vec<T>,
    pub status: FlowStatus,
}

impl<T: Real> ReducedTrajectory<T> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Writes `t,lambda,epsilon,loss_approx`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t,lambda,epsilon,loss_approx")?;
        for i in 0..self.len() {
            writeln!(out, "{},{},{},{}", self.times[i], self.lambda[i], self.epsilon[i], self.loss[i])?;
        }
        Ok(())
    }
}

fn reduced_loss<T: Real>(lambda: T, eps: T, d: usize, m_star: usize) -> T {
    let m = T::of_usize(m_star);
    let k = T::of_usize(d - m_star);
    let dl = lambda - T::one();
    let sum = m * dl + k * eps;
    m * dl * dl + k * eps * eps + T::of(0.5) * sum * sum
}

/// Integrates the reduced system from `(λ, ε) = (1, 1)`.
pub fn reduced_flow<T: Real>(d: usize, m_star: usize, cfg: &IntegratorConfig<T>) -> Result<ReducedTrajectory<T>> {
    reduced_flow_from(T::one(), T::one(), d, m_star, cfg)
}

/// ```text
/// λ̇ = λ [(2m*+4)(1−λ) − 2(d−m*)ε]
/// ε̇ = ε [2m*(1−λ) − 2(2+d−m*)ε]
/// ```
pub fn reduced_flow_from<T: Real>(
    lambda0: T,
    eps0: T,
    d: usize,
    m_star: usize,
    cfg: &IntegratorConfig<T>,
) -> Result<ReducedTrajectory<T>> {
    check_config(cfg)?;
    if m_star == 0 || m_star > d {
        return Err(invalid(format!("reduced flow needs 1 <= m* <= d, got m* = {m_star}, d = {d}")));
    }
    if !(lambda0 >= T::zero()) || !(eps0 >= T::zero()) {
        return Err(invalid("reduced flow needs nonnegative initial values"));
    }
    let m = T::of_usize(m_star);
    let k = T::of_usize(d - m_star);
    let two = T::of(2.0);
    let a = two * m + T::of(4.0);
    let field = |y: &[T], out: &mut [T]| {
        let (l, e) = (y[0], y[1]);
        out[0] = l * (a * (T::one() - l) - two * k * e);
        out[1] = e * (two * m * (T::one() - l) - two * (two + k) * e);
    };
    let loss = |y: &[T]| reduced_loss(y[0], y[1], d, m_star);
    let rec = run(vec![lambda0, eps0], cfg, field, loss);
    Ok(ReducedTrajectory {
        d,
        m_star,
        lambda: rec.states.iter().map(|s| s[0]).collect(),
        epsilon: rec.states.iter().map(|s| s[1]).collect(),
        times: rec.times,
        loss: rec.values,
        status: rec.status,
    })
}

/// Fixed points, timescales and closed-form approximations of the reduced system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LvReport {
    pub d: usize,
    pub m_star: usize,
    /// `(0,0)`, `(0, m*/(2+d−m*))` and `(1,0)`.
    pub fixed_points: [(f64, f64); 3],
    /// Time at which `λ` stops shrinking; absent when `m* ≥ d`.
    pub t0: Option<f64>,
    /// Duration of the logistic jump; absent when `m* ≥ d`.
    pub t_jump: Option<f64>,
    /// Limit of `t²·loss_approx(t)`; present when `m* < d`.
    pub loss_tail_quadratic: Option<f64>,
    /// Exponential decay rate of the loss; present when `m* ≥ d`.
    pub loss_tail_exponential: Option<f64>,
}

pub fn lv_analysis(d: usize, m_star: usize) -> Result<LvReport> {
    if d == 0 || m_star == 0 {
        return Err(invalid("lv_analysis needs d >= 1 and m* >= 1"));
    }
    let m_eff = m_star.min(d);
    let (df, mf) = (d as f64, m_eff as f64);
    let k = df - mf;
    let fixed_points = [(0.0, 0.0), (0.0, mf / (2.0 + k)), (1.0, 0.0)];
    let informative_gap = m_star < d;
    Ok(LvReport {
        d,
        m_star,
        fixed_points,
        t0: informative_gap.then(|| k / (2.0 * (2.0 + mf) * (2.0 + k))),
        t_jump: informative_gap.then(|| ((df + 2.0) / (2.0 * (mf + 2.0))).ln() / (mf + 2.0)),
        loss_tail_quadratic: informative_gap.then(|| k * k / (16.0 * (2.0 + k) * (2.0 + k))),
        loss_tail_exponential: (!informative_gap).then(|| 2.0 * (2.0 * df + 4.0)),
    })
}

impl LvReport {
    fn gap(&self) -> f64 {
        (self.d - self.m_star.min(self.d)) as f64
    }

    /// `ε(t) ≈ 1/(1 + 2(2+d−m*)t)`.
    pub fn eps_closed_form(&self, t: f64) -> f64 {
        1.0 / (1.0 + 2.0 * (2.0 + self.gap()) * t)
    }

    /// Decay along `eps_closed_form` until `t0`, then logistic growth at rate `2m*+4` from `(m*+2)/(d+2)`.
    pub fn lambda_closed_form(&self, t: f64) -> f64 {
        let Some(t0) = self.t0 else {
            return 1.0;
        };
        if t <= t0 {
            return self.eps_closed_form(t);
        }
        let m = self.m_star as f64;
        let l0 = (m + 2.0) / (self.d as f64 + 2.0);
        1.0 / (1.0 + (1.0 / l0 - 1.0) * (-(2.0 * m + 4.0) * (t - t0)).exp())
    }

    /// `¼((d−m*)/(1+2(2+d−m*)t))²` when `m* < d`, else `(1/2d) e^{−2(2d+4)t}`.
    pub fn loss_approx(&self, t: f64) -> f64 {
        match self.loss_tail_exponential {
            Some(rate) => (-rate * t).exp() / (2.0 * self.d as f64),
            None => 0.25 * (self.gap() * self.eps_closed_form(t)).powi(2),
        }
    }
}
