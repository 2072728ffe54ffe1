//! Lawson–Hanson active-set nonnegative least squares.

use crate::linalg::{cholesky_solve, dot, norm, Matrix};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct NnlsSolution<T> {
    /// Coefficients, one per generator row.
    pub coefficients: Vec<T>,
    /// `|b − Σ_j z_j g_j|`.
    pub residual: T,
}

/// Minimizes `|b − Σ_j z_j g_j|` over `z ≥ 0`, where `g_j` are the rows of `generators`.
///
/// Returns `None` if the active-set iteration does not terminate within `max_iter` pivots.
pub fn nnls<T: Real>(generators: &Matrix<T>, b: &[T], max_iter: usize) -> Option<NnlsSolution<T>> {
    let gram = generators.matmul(&generators.transpose()).ok()?;
    lawson_hanson(generators, &gram, None, b, T::zero(), max_iter)
}

/// Core iteration. Row `skip` is excluded; the solve stops early once the residual is at most `stop_below`.
pub(crate) fn lawson_hanson<T: Real>(
    rows: &Matrix<T>,
    gram: &Matrix<T>,
    skip: Option<usize>,
    b: &[T],
    stop_below: T,
    max_iter: usize,
) -> Option<NnlsSolution<T>> {
    let n = rows.rows();
    let mut z = vec![T::zero(); n];
    let mut passive = vec![false; n];
    // columns whose entry made the passive set singular; cleared once z moves
    let mut blocked = vec![false; n];
    let mut r = b.to_vec();
    let b_norm = norm(b);
    let row_scale = (0..n).map(|j| norm(rows.row(j))).fold(T::zero(), T::max);
    let w_tol = T::of(100.0) * T::epsilon() * row_scale * b_norm.max(T::min_positive_value());
    let rhs: Vec<T> = (0..n).map(|j| dot(rows.row(j), b)).collect();
    let mut residual = b_norm;
    let mut iter = 0;

    while residual > stop_below {
        let mut best: Option<(usize, T)> = None;
        for j in 0..n {
            if passive[j] || blocked[j] || Some(j) == skip {
                continue;
            }
            let w = dot(rows.row(j), &r);
            if w > w_tol && best.map_or(true, |(_, bw)| w > bw) {
                best = Some((j, w));
            }
        }
        let Some((entering, _)) = best else { break };
        if passive.iter().filter(|&&p| p).count() == rows.cols() {
            // a full passive set already reproduces b up to round-off
            break;
        }
        passive[entering] = true;

        let mut first = true;
        loop {
            iter += 1;
            if iter > max_iter {
                return None;
            }
            let idx: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
            let sub = Matrix::from_fn(idx.len(), idx.len(), |a, c| gram[(idx[a], idx[c])]);
            let sub_rhs: Vec<T> = idx.iter().map(|&j| rhs[j]).collect();
            let Some(s) = cholesky_solve(&sub, &sub_rhs) else {
                if first {
                    passive[entering] = false;
                    blocked[entering] = true;
                    break;
                }
                return None;
            };
            first = false;
            if s.iter().all(|&v| v > T::zero()) {
                for (&j, &v) in idx.iter().zip(&s) {
                    z[j] = v;
                }
                break;
            }
            let mut alpha = T::one();
            for (&j, &v) in idx.iter().zip(&s) {
                if v <= T::zero() {
                    let denom = z[j] - v;
                    if denom > T::zero() {
                        alpha = alpha.min(z[j] / denom);
                    } else {
                        alpha = T::zero();
                    }
                }
            }
            for (&j, &v) in idx.iter().zip(&s) {
                let zj = z[j];
                z[j] = zj + alpha * (v - zj);
                if z[j] <= T::zero() || (v <= T::zero() && z[j] <= T::epsilon() * v.abs().max(T::one())) {
                    z[j] = T::zero();
                    passive[j] = false;
                }
            }
            if !passive.iter().any(|&p| p) {
                break;
            }
        }

        if blocked[entering] {
            continue;
        }
        blocked.iter_mut().for_each(|b| *b = false);
        r.copy_from_slice(b);
        for j in (0..n).filter(|&j| passive[j]) {
            for (ri, &x) in r.iter_mut().zip(rows.row(j)) {
                *ri -= z[j] * x;
            }
        }
        residual = norm(&r);
    }
    Some(NnlsSolution { coefficients: z, residual })
}
