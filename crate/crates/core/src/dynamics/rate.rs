//! Tail decay classification of a loss curve.

use super::Trajectory;
use crate::scalar::Real;
use crate::stats::linear_fit;

/// Minimum number of usable tail points.
pub const MIN_TAIL_POINTS: usize = 10;
const R2_MIN: f64 = 0.99;
const SLOPE_TOL: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecayClass {
    Quadratic,
    Exponential,
    Undetermined,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateReport {
    pub decay_class: DecayClass,
    /// Mean of `t²E(t)` over the tail, for quadratic decay.
    pub plateau: Option<f64>,
    /// Exponential rate `r` in `E ~ e^{−rt}`.
    pub rate: Option<f64>,
    /// Largest `C` with `E(t) ≤ E(0)/(1 + 2C·E(0)·t)` along the whole curve.
    pub bound_constant: Option<f64>,
    /// `bound_constant > 0` and `t·E(t)` non-increasing over the tail.
    pub bound_ok: bool,
    /// Log-log slope over the tail.
    pub power_slope: Option<f64>,
}

impl RateReport {
    fn undetermined() -> Self {
        RateReport {
            decay_class: DecayClass::Undetermined,
            plateau: None,
            rate: None,
            bound_constant: None,
            bound_ok: false,
            power_slope: None,
        }
    }
}

pub fn rate_diagnostics<T: Real>(traj: &Trajectory<T>) -> RateReport {
    let t: Vec<f64> = traj.times.iter().map(|x| x.as_f64()).collect();
    let e: Vec<f64> = traj.gen_loss.iter().map(|x| x.as_f64()).collect();
    rate_diagnostics_from(&t, &e)
}

/// Diagnostics on raw `(t, E)` samples. The first sample is the reference point `E(0)`.
pub fn rate_diagnostics_from(times: &[f64], losses: &[f64]) -> RateReport {
    let n = times.len().min(losses.len());
    if n == 0 {
        return RateReport::undetermined();
    }
    let start = n - n / 3;
    let tail: Vec<(f64, f64)> = (start..n)
        .map(|i| (times[i], losses[i]))
        .filter(|&(t, e)| t > 0.0 && e > 0.0 && t.is_finite() && e.is_finite())
        .collect();
    if tail.len() < MIN_TAIL_POINTS {
        return RateReport::undetermined();
    }
    let lt: Vec<f64> = tail.iter().map(|p| p.0.ln()).collect();
    let tt: Vec<f64> = tail.iter().map(|p| p.0).collect();
    let le: Vec<f64> = tail.iter().map(|p| p.1.ln()).collect();
    let (Some(pow), Some(exp)) = (linear_fit(&lt, &le), linear_fit(&tt, &le)) else {
        return RateReport::undetermined();
    };

    let decay_class = if exp.sse < pow.sse && exp.r2 > R2_MIN && exp.slope < 0.0 {
        DecayClass::Exponential
    } else if (pow.slope + 2.0).abs() < SLOPE_TOL && pow.r2 > R2_MIN {
        DecayClass::Quadratic
    } else {
        DecayClass::Undetermined
    };
    let plateau = (decay_class == DecayClass::Quadratic)
        .then(|| tail.iter().map(|&(t, e)| t * t * e).sum::<f64>() / tail.len() as f64);
    let rate = (decay_class == DecayClass::Exponential).then_some(-exp.slope);

    let (t0, e0) = (times[0], losses[0]);
    let bound_constant = if e0 > 0.0 && e0.is_finite() {
        (1..n)
            .filter(|&i| times[i] > t0)
            .map(|i| (e0 / losses[i] - 1.0) / (2.0 * e0 * (times[i] - t0)))
            .fold(None, |acc: Option<f64>, c| Some(acc.map_or(c, |a| a.min(c))))
    } else {
        None
    };
    let te_decreasing = tail.windows(2).all(|w| w[1].0 * w[1].1 <= w[0].0 * w[0].1 * (1.0 + 1e-12));
    let bound_ok = bound_constant.is_some_and(|c| c > 0.0) && te_decreasing;

    RateReport { decay_class, plateau, rate, bound_constant, bound_ok, power_slope: Some(pow.slope) }
}
