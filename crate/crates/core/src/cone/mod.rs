//! Cone certificates for uniqueness of the interpolating Gram matrix.
//!
//! Data vectors are folded into the half-space `{x : x·v ≥ 0}`. A folded row
//! is an extremal ray of the cone they span when it is not a nonnegative
//! combination of the other rows. If fewer than `n` rows are extremal, the
//! configuration along `v` is certified.

mod cover;
mod nnls;
mod simplex;

pub use cover::{cover_count, cover_expected, cover_limit, CoverExpected};
pub use nnls::{nnls, NnlsSolution};
pub use simplex::nonneg_feasible;

use std::io::{self, Write};

use num_rational::BigRational;
use rand::Rng as _;
use rayon::prelude::*;

use crate::error::{check_dim, invalid, Error, Result};
use crate::linalg::{norm, Matrix};
use crate::model::{Dataset, WeightMatrix};
use crate::rng::{derive_seed, normal_vec, rng_from_seed, unit_vector};
use crate::scalar::{Field, Real};

/// Default relative residual tolerance for the float feasibility test.
pub const DEFAULT_TOL: f64 = 1e-9;
const UNIT_TOL: f64 = 1e-12;

/// Rows flipped into the half-space of `direction`.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldedSet<T> {
    pub vectors: Matrix<T>,
    pub direction: Vec<T>,
}

/// Folds the inputs of `data` along the unit vector `v`.
pub fn fold<T: Real>(data: &Dataset<T>, v: &[T]) -> Result<FoldedSet<T>> {
    fold_vectors(data.inputs(), v)
}

/// `x̂_k = sign(x_k·v) x_k` with `sign(0) = +1`.
pub fn fold_vectors<T: Real>(vectors: &Matrix<T>, v: &[T]) -> Result<FoldedSet<T>> {
    check_dim(vectors.cols(), v.len())?;
    if (norm(v) - T::one()).abs() > T::of(UNIT_TOL).max(T::epsilon() * T::of(16.0)) {
        return Err(invalid("fold direction must be a unit vector"));
    }
    let mut out = vectors.clone();
    for k in 0..out.rows() {
        let row = out.row_mut(k);
        if row.iter().all(|x| x.is_zero()) {
            return Err(Error::ZeroRow(k));
        }
        if crate::linalg::dot(row, v) < T::zero() {
            row.iter_mut().for_each(|x| *x = -*x);
        }
    }
    Ok(FoldedSet { vectors: out, direction: v.to_vec() })
}

/// Canonical fold direction `w*/|w*|` for a single-unit teacher.
pub fn teacher_direction<T: Real>(teacher: &WeightMatrix<T>) -> Result<Vec<T>> {
    if teacher.units() != 1 {
        return Err(invalid("teacher direction is defined for single-unit teachers"));
    }
    let w = teacher.weights().row(0);
    let n = norm(w);
    if n.is_zero() {
        return Err(Error::ZeroRow(0));
    }
    Ok(w.iter().map(|&x| x / n).collect())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConeReport {
    /// Extremal row indices, ascending.
    pub extremal_indices: Vec<usize>,
    pub n: usize,
}

impl ConeReport {
    pub fn count(&self) -> usize {
        self.extremal_indices.len()
    }

    pub fn all_extremal(&self) -> bool {
        self.count() == self.n
    }
}

fn check_rows<T: Real>(vectors: &Matrix<T>) -> Result<()> {
    for k in 0..vectors.rows() {
        if vectors.row(k).iter().all(|x| x.is_zero()) {
            return Err(Error::ZeroRow(k));
        }
    }
    Ok(())
}

fn row_is_extremal<T: Real>(vectors: &Matrix<T>, gram: &Matrix<T>, k: usize, tol: T) -> Result<bool> {
    let b = vectors.row(k);
    let threshold = tol * norm(b);
    let max_iter = 50 * (vectors.rows() + vectors.cols()) + 100;
    nnls::lawson_hanson(vectors, gram, Some(k), b, threshold, max_iter)
        .map(|sol| sol.residual > threshold)
        .ok_or(Error::Undecided { index: k })
}

/// Extremal rows via nonnegative least squares: row `k` is extremal iff the residual of
/// projecting it onto the cone of the other rows exceeds `tol·|x_k|`.
pub fn extremal_rays<T: Real>(vectors: &Matrix<T>, tol: T) -> Result<ConeReport> {
    if !(tol > T::zero()) {
        return Err(invalid("tolerance must be positive"));
    }
    check_rows(vectors)?;
    let n = vectors.rows();
    let gram = vectors.matmul(&vectors.transpose())?;
    let verdicts: Vec<Result<bool>> = (0..n).into_par_iter().map(|k| row_is_extremal(vectors, &gram, k, tol)).collect();
    let mut extremal_indices = Vec::new();
    for (k, v) in verdicts.into_iter().enumerate() {
        if v? {
            extremal_indices.push(k);
        }
    }
    Ok(ConeReport { extremal_indices, n })
}

/// Extremal rows decided exactly; each float entry is converted to the rational it represents.
pub fn extremal_rays_exact<T: Real>(vectors: &Matrix<T>) -> Result<ConeReport> {
    check_rows(vectors)?;
    let rows: Vec<Vec<BigRational>> = vectors
        .row_iter()
        .map(|r| {
            r.iter().map(|x| BigRational::from_float(x.as_f64()).ok_or_else(|| invalid("non-finite entry"))).collect()
        })
        .collect::<Result<_>>()?;
    Ok(extremal_rays_field(&rows))
}

/// Exact extremality over any ordered field.
pub fn extremal_rays_field<F: Field>(rows: &[Vec<F>]) -> ConeReport {
    let n = rows.len();
    let extremal_indices = (0..n)
        .filter(|&k| {
            let others: Vec<Vec<F>> =
                rows.iter().enumerate().filter(|&(j, _)| j != k).map(|(_, r)| r.clone()).collect();
            !nonneg_feasible(&others, &rows[k])
        })
        .collect();
    ConeReport { extremal_indices, n }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerdictKind {
    /// Some folded vector lies inside the cone of the others.
    CertifiedNoNegativeSolution,
    /// Every folded vector is extremal.
    NotCertified,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verdict {
    pub kind: VerdictKind,
    pub extremal_count: usize,
    pub n: usize,
    pub report: ConeReport,
}

impl Verdict {
    pub fn certified(&self) -> bool {
        self.kind == VerdictKind::CertifiedNoNegativeSolution
    }
}

/// Folds along `v` and certifies iff fewer than `n` rows are extremal. The verdict is relative to `v`.
pub fn uniqueness_certificate<T: Real>(data: &Dataset<T>, v: &[T], tol: T) -> Result<Verdict> {
    let folded = fold(data, v)?;
    let report = extremal_rays(&folded.vectors, tol)?;
    let kind = if report.all_extremal() { VerdictKind::NotCertified } else { VerdictKind::CertifiedNoNegativeSolution };
    Ok(Verdict { kind, extremal_count: report.count(), n: report.n, report })
}

/// Monte-Carlo extremal-ray statistics for Gaussian folded sets.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeStats {
    pub n: usize,
    pub d: usize,
    pub trials: usize,
    pub mean_count: f64,
    pub stderr: f64,
    pub formula_value: f64,
    /// Fraction of trials with fewer than `n` extremal rows.
    pub certified_fraction: f64,
}

impl ConeStats {
    pub const CSV_HEADER: &'static str = "n,d,trials,mean_count,stderr,formula_value";

    pub fn csv_row(&self) -> String {
        format!("{},{},{},{},{},{}", self.n, self.d, self.trials, self.mean_count, self.stderr, self.formula_value)
    }
}

pub fn write_stats_csv<W: Write>(stats: &[ConeStats], mut out: W) -> io::Result<()> {
    writeln!(out, "{}", ConeStats::CSV_HEADER)?;
    for s in stats {
        writeln!(out, "{}", s.csv_row())?;
    }
    Ok(())
}

/// Random-cone ensembles for Monte-Carlo statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConeEnsemble {
    /// Gaussian rows folded along a uniformly random direction.
    Folded,
    /// Gaussian rows with a sign pattern drawn uniformly among those spanning a pointed cone,
    /// sampled by a random walk across cell walls started from a folded pattern.
    SignConditioned { sweeps: usize },
}

/// Draws one Gaussian `n×d` set and a uniform fold direction, both from `seed`.
pub fn random_folded_set(n: usize, d: usize, seed: u64) -> Result<FoldedSet<f64>> {
    let mut rng = rng_from_seed(seed);
    let x = Matrix::from_vec(n, d, normal_vec(&mut rng, n * d))?;
    let v = unit_vector(&mut rng, d);
    fold_vectors(&x, &v)
}

/// Draws the rows of one random pointed cone from `ensemble`.
///
/// The sign-conditioned walk picks a row uniformly at each step and flips it when it is
/// extremal, i.e. a wall of the current cell of the arrangement `{x_k^⊥}`; the uniform
/// proposal makes the uniform distribution over cells stationary.
pub fn sample_cone(n: usize, d: usize, ensemble: ConeEnsemble, seed: u64, tol: f64) -> Result<Matrix<f64>> {
    let mut x = random_folded_set(n, d, seed)?.vectors;
    let ConeEnsemble::SignConditioned { sweeps } = ensemble else {
        return Ok(x);
    };
    let mut gram = x.matmul(&x.transpose())?;
    let mut rng = rng_from_seed(derive_seed(seed, &[1]));
    for _ in 0..sweeps * n {
        let k = rng.gen_range(0..n);
        if row_is_extremal(&x, &gram, k, tol)? {
            x.row_mut(k).iter_mut().for_each(|v| *v = -*v);
            for j in 0..n {
                if j != k {
                    gram[(k, j)] = -gram[(k, j)];
                    gram[(j, k)] = -gram[(j, k)];
                }
            }
        }
    }
    Ok(x)
}

/// Runs `trials` independent folded Gaussian sets; trial `t` uses `derive_seed(seed, [n, d, t])`.
pub fn cone_statistics(n: usize, d: usize, trials: usize, seed: u64, tol: f64) -> Result<ConeStats> {
    cone_statistics_with(n, d, trials, seed, tol, ConeEnsemble::Folded)
}

pub fn cone_statistics_with(
    n: usize,
    d: usize,
    trials: usize,
    seed: u64,
    tol: f64,
    ensemble: ConeEnsemble,
) -> Result<ConeStats> {
    if trials == 0 {
        return Err(invalid("at least one trial is required"));
    }
    let formula_value = cover_expected(n, d)?.expected;
    let counts: Vec<usize> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let x = sample_cone(n, d, ensemble, derive_seed(seed, &[n as u64, d as u64, t as u64]), tol)?;
            Ok(extremal_rays(&x, tol)?.count())
        })
        .collect::<Result<_>>()?;
    let tf = trials as f64;
    let mean = counts.iter().map(|&c| c as f64).sum::<f64>() / tf;
    let var =
        if trials > 1 { counts.iter().map(|&c| (c as f64 - mean).powi(2)).sum::<f64>() / (tf - 1.0) } else { 0.0 };
    let certified = counts.iter().filter(|&&c| c < n).count() as f64 / tf;
    Ok(ConeStats {
        n,
        d,
        trials,
        mean_count: mean,
        stderr: (var / tf).sqrt(),
        formula_value,
        certified_fraction: certified,
    })
}
