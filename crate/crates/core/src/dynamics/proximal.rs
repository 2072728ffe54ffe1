//! Proximal (minimizing-movement) scheme on the factor `B`, `A = BBᵀ`.

use super::{FlowKind, FlowStatus, LossKind, Recording, Space, TerminalState, Trajectory};
use crate::error::{check_dim, invalid, Result};
use crate::linalg::Matrix;
use crate::losses::{empirical_grad_from_delta, population_loss_from_delta};
use crate::model::{Dataset, GramMatrix};
use crate::scalar::Real;

/// How each proximal subproblem is solved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProxSolve<T> {
    /// `B_p = B_{p−1} − τ ∇E_n(B_{p−1}B_{p−1}ᵀ) B_{p−1}`.
    FirstOrder,
    /// Fixed-point iteration on the stationarity condition `B = B_{p−1} − τ ∇E_n(BBᵀ) B`.
    Implicit { tol: T, max_iter: usize },
}

fn grad_times<T: Real>(b: &Matrix<T>, a_star: &Matrix<T>, data: &Dataset<T>) -> Matrix<T> {
    let a = b.matmul(&b.transpose()).expect("square factor");
    let g = empirical_grad_from_delta(&(a_star - &a), data);
    g.matmul(b).expect("square")
}

/// One proximal step from `b`. Returns `None` if the implicit solve fails to converge.
pub fn proximal_step<T: Real>(
    b: &Matrix<T>,
    a_star: &GramMatrix<T>,
    data: &Dataset<T>,
    tau: T,
    solve: ProxSolve<T>,
) -> Result<Option<Matrix<T>>> {
    if !b.is_square() {
        return Err(invalid("proximal factor must be square"));
    }
    check_dim(a_star.dims(), b.rows())?;
    check_dim(b.rows(), data.dims())?;
    if !(tau > T::zero()) {
        return Err(invalid("tau must be positive"));
    }
    Ok(step_unchecked(b, a_star.matrix(), data, tau, solve))
}

fn step_unchecked<T: Real>(
    b: &Matrix<T>,
    a_star: &Matrix<T>,
    data: &Dataset<T>,
    tau: T,
    solve: ProxSolve<T>,
) -> Option<Matrix<T>> {
    let mut next = b.clone();
    next.axpy(-tau, &grad_times(b, a_star, data));
    match solve {
        ProxSolve::FirstOrder => Some(next),
        ProxSolve::Implicit { tol, max_iter } => {
            for _ in 0..max_iter {
                let mut candidate = b.clone();
                candidate.axpy(-tau, &grad_times(&next, a_star, data));
                let change = candidate.frobenius_dist(&next);
                let size = candidate.frobenius_norm().max(T::one());
                next = candidate;
                if !change.is_finite() {
                    return None;
                }
                if change <= tol * size {
                    return Some(next);
                }
            }
            None
        }
    }
}

/// Configuration of a proximal run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProxConfig<T> {
    pub tau: T,
    pub steps: usize,
    pub record_every: usize,
    pub solve: ProxSolve<T>,
    pub snapshots: bool,
}

impl<T: Real> ProxConfig<T> {
    pub fn new(tau: T, steps: usize) -> Self {
        ProxConfig { tau, steps, record_every: 1, solve: ProxSolve::FirstOrder, snapshots: false }
    }
}

/// Runs `steps` proximal iterations from `b0`; time of iterate `p` is `p·τ`.
pub fn proximal_flow<T: Real>(
    b0: &Matrix<T>,
    a_star: &GramMatrix<T>,
    data: &Dataset<T>,
    cfg: &ProxConfig<T>,
) -> Result<Trajectory<T>> {
    if !b0.is_square() {
        return Err(invalid("proximal factor must be square"));
    }
    check_dim(a_star.dims(), b0.rows())?;
    check_dim(b0.rows(), data.dims())?;
    if !(cfg.tau > T::zero()) || !cfg.tau.is_finite() {
        return Err(invalid("tau must be positive"));
    }
    if cfg.steps == 0 || cfg.record_every == 0 {
        return Err(invalid("steps and record_every must be at least 1"));
    }
    let d = b0.rows();
    let a_star_m = a_star.matrix();
    let losses = |b: &Matrix<T>| -> (Option<T>, T, Matrix<T>) {
        let a = b.matmul(&b.transpose()).expect("square");
        let delta = &a - a_star_m;
        let mut acc = T::zero();
        for x in data.inputs().row_iter() {
            let q = delta.quad_form(x);
            acc += q * q;
        }
        let train = acc / (T::of(2.0) * T::of_usize(data.len()));
        (Some(train), population_loss_from_delta(&delta), a)
    };

    let mut rec = Recording::new(b0.as_slice());
    let mut b = b0.clone();
    let push = |rec: &mut Recording<T>, b: &Matrix<T>, p: usize| -> bool {
        let (train, gen, a) = losses(b);
        rec.push(p, T::of_usize(p) * cfg.tau, (train, gen), b.as_slice(), cfg.snapshots.then_some(a), None)
    };
    if push(&mut rec, &b, 0) {
        for p in 1..=cfg.steps {
            match step_unchecked(&b, a_star_m, data, cfg.tau, cfg.solve) {
                Some(next) => b = next,
                None => {
                    rec.status = FlowStatus::Diverged { step: p };
                    break;
                }
            }
            if (p % cfg.record_every == 0 || p == cfg.steps) && !push(&mut rec, &b, p) {
                break;
            }
        }
    }
    let terminal = Matrix::from_vec(d, d, rec.last_good.clone())?;
    Ok(Trajectory {
        kind: FlowKind { space: Space::Gram, loss: LossKind::Empirical },
        steps: rec.steps,
        times: rec.times,
        train_loss: Some(rec.train),
        gen_loss: rec.gen,
        snapshots: rec.snapshots,
        terminal: TerminalState::Factor(terminal),
        status: rec.status,
    })
}
