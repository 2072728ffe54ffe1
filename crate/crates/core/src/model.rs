//! Teacher and student networks with quadratic activation.
//!
//! A network with hidden weights `w_1..w_m` and fixed output scale `s`
//! computes `f(x) = s Σ_j (x·w_j)²`, which is the quadratic form `xᵀ A x`
//! of its Gram matrix `A = s Σ_j w_j w_jᵀ`.

use crate::error::{check_dim, invalid, Error, Result};
use crate::linalg::{dot, Matrix};
use crate::rng::{normal_vec, rng_from_seed};
use crate::scalar::Real;

/// Hidden-layer weights (one row per unit) and the fixed second-layer scale.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix<T> {
    weights: Matrix<T>,
    scale: T,
}

impl<T: Real> WeightMatrix<T> {
    pub fn new(weights: Matrix<T>, scale: T) -> Result<Self> {
        if weights.rows() == 0 || weights.cols() == 0 {
            return Err(invalid("weight matrix needs at least one unit and one input dimension"));
        }
        if !(scale > T::zero()) || !scale.is_finite() {
            return Err(invalid("output scale must be positive and finite"));
        }
        if !weights.all_finite() {
            return Err(invalid("weights must be finite"));
        }
        Ok(WeightMatrix { weights, scale })
    }

    /// Weights with the conventional scale `1/m`.
    pub fn with_mean_scale(weights: Matrix<T>) -> Result<Self> {
        let m = weights.rows();
        Self::new(weights, T::one() / T::of_usize(m.max(1)))
    }

    #[inline]
    pub fn units(&self) -> usize {
        self.weights.rows()
    }

    #[inline]
    pub fn dims(&self) -> usize {
        self.weights.cols()
    }

    #[inline]
    pub fn scale(&self) -> T {
        self.scale
    }

    #[inline]
    pub fn weights(&self) -> &Matrix<T> {
        &self.weights
    }

    /// Mutable access for integrators; callers keep entries finite.
    #[inline]
    pub(crate) fn weights_mut(&mut self) -> &mut Matrix<T> {
        &mut self.weights
    }
}

/// Symmetric `d × d` matrix (`A`, `A*`, or a loss gradient).
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix<T> {
    inner: Matrix<T>,
}

impl<T: Real> GramMatrix<T> {
    /// Accepts a square matrix that is symmetric to within `1e-12` relative to its largest entry.
    pub fn new(m: Matrix<T>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch { expected: m.rows(), found: m.cols() });
        }
        let asym = m.asymmetry();
        let tol = T::of(1e-12) * m.max_abs().max(T::min_positive_value());
        if asym > tol {
            return Err(Error::NotSymmetric(asym.as_f64()));
        }
        Ok(GramMatrix { inner: m })
    }

    /// Wraps a matrix after replacing it by its symmetric part.
    pub fn symmetrized(mut m: Matrix<T>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch { expected: m.rows(), found: m.cols() });
        }
        m.symmetrize();
        Ok(GramMatrix { inner: m })
    }

    pub(crate) fn from_symmetric_unchecked(m: Matrix<T>) -> Self {
        GramMatrix { inner: m }
    }

    pub fn identity(d: usize) -> Self {
        GramMatrix { inner: Matrix::identity(d) }
    }

    pub fn zeros(d: usize) -> Self {
        GramMatrix { inner: Matrix::zeros(d, d) }
    }

    pub fn from_diagonal(diag: &[T]) -> Self {
        GramMatrix { inner: Matrix::from_diagonal(diag) }
    }

    #[inline]
    pub fn dims(&self) -> usize {
        self.inner.rows()
    }

    #[inline]
    pub fn matrix(&self) -> &Matrix<T> {
        &self.inner
    }

    pub fn into_matrix(self) -> Matrix<T> {
        self.inner
    }

    #[inline]
    pub fn quad_form(&self, x: &[T]) -> T {
        self.inner.quad_form(x)
    }

    pub fn trace(&self) -> T {
        self.inner.trace()
    }

    /// Eigenvalues in descending order.
    pub fn eigenvalues(&self) -> Vec<T> {
        self.inner.symmetric_eigenvalues().expect("square by construction")
    }

    pub fn min_eigenvalue(&self) -> T {
        self.eigenvalues().last().copied().unwrap_or_else(T::zero)
    }

    /// `λ_min ≥ -rel_tol · max(|λ_max|, tiny)`.
    pub fn is_psd(&self, rel_tol: T) -> bool {
        let ev = self.eigenvalues();
        let (Some(&hi), Some(&lo)) = (ev.first(), ev.last()) else {
            return true;
        };
        lo >= -rel_tol * hi.abs().max(T::min_positive_value())
    }

    pub fn frobenius_dist(&self, other: &GramMatrix<T>) -> T {
        self.inner.frobenius_dist(&other.inner)
    }
}

/// Inputs `x_k` (rows) and teacher labels `y_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    inputs: Matrix<T>,
    outputs: Vec<T>,
}

impl<T: Real> Dataset<T> {
    pub fn new(inputs: Matrix<T>, outputs: Vec<T>) -> Result<Self> {
        if inputs.rows() == 0 {
            return Err(Error::EmptyDataset);
        }
        check_dim(inputs.rows(), outputs.len())?;
        if outputs.iter().any(|&y| !(y >= T::zero())) {
            return Err(invalid("teacher outputs must be nonnegative"));
        }
        Ok(Dataset { inputs, outputs })
    }

    /// Labels every row of `inputs` with `teacher`.
    pub fn labelled(teacher: &WeightMatrix<T>, inputs: Matrix<T>) -> Result<Self> {
        check_dim(teacher.dims(), inputs.cols())?;
        let outputs = inputs.row_iter().map(|x| output_unchecked(teacher, x)).collect();
        Self::new(inputs, outputs)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.inputs.rows() == 0
    }

    #[inline]
    pub fn dims(&self) -> usize {
        self.inputs.cols()
    }

    #[inline]
    pub fn inputs(&self) -> &Matrix<T> {
        &self.inputs
    }

    #[inline]
    pub fn outputs(&self) -> &[T] {
        &self.outputs
    }

    /// Iterator over `(x_k, y_k)`.
    pub fn samples(&self) -> impl Iterator<Item = (&[T], T)> + '_ {
        self.inputs.row_iter().zip(self.outputs.iter().copied())
    }
}

/// Distribution of the teacher's hidden units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TeacherEnsemble {
    /// Rows i.i.d. standard normal.
    GaussianIid,
    /// Mutually orthogonal rows of squared norm `m*`, so the Gram eigenvalues are one.
    Orthonormal,
}

impl std::str::FromStr for TeacherEnsemble {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" | "gaussian-iid" => Ok(TeacherEnsemble::GaussianIid),
            "orthonormal" => Ok(TeacherEnsemble::Orthonormal),
            other => Err(invalid(format!("unknown teacher ensemble `{other}`"))),
        }
    }
}

impl std::fmt::Display for TeacherEnsemble {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TeacherEnsemble::GaussianIid => "gaussian",
            TeacherEnsemble::Orthonormal => "orthonormal",
        })
    }
}

pub fn make_teacher<T: Real>(d: usize, m_star: usize, ensemble: TeacherEnsemble, seed: u64) -> Result<WeightMatrix<T>> {
    if d == 0 || m_star == 0 {
        return Err(invalid("teacher needs d >= 1 and m* >= 1"));
    }
    let mut rng = rng_from_seed(seed);
    let weights = match ensemble {
        TeacherEnsemble::GaussianIid => Matrix::from_vec(m_star, d, normal_vec(&mut rng, m_star * d))?,
        TeacherEnsemble::Orthonormal => {
            if m_star > d {
                return Err(invalid(format!("an orthonormal teacher has at most d = {d} units, got m* = {m_star}")));
            }
            let target = T::of_usize(m_star).sqrt();
            let mut rows: Vec<Vec<T>> = Vec::with_capacity(m_star);
            while rows.len() < m_star {
                let mut v: Vec<T> = normal_vec(&mut rng, d);
                // two Gram-Schmidt passes for orthogonality at machine precision
                for _ in 0..2 {
                    for r in &rows {
                        let c = dot(&v, r) / dot(r, r);
                        for (vi, &ri) in v.iter_mut().zip(r) {
                            *vi -= c * ri;
                        }
                    }
                }
                let n = dot(&v, &v).sqrt();
                if n > T::of(1e-6) {
                    rows.push(v.into_iter().map(|x| x / n * target).collect());
                }
            }
            Matrix::from_rows(&rows)?
        }
    };
    WeightMatrix::new(weights, T::one() / T::of_usize(m_star))
}

/// Student with `m` i.i.d. standard normal units and scale `1/m`, so `A(0) → Id` as `m` grows.
pub fn make_student<T: Real>(d: usize, m: usize, seed: u64) -> Result<WeightMatrix<T>> {
    if d == 0 || m == 0 {
        return Err(invalid("student needs d >= 1 and m >= 1"));
    }
    let mut rng = rng_from_seed(seed);
    WeightMatrix::with_mean_scale(Matrix::from_vec(m, d, normal_vec(&mut rng, m * d))?)
}

/// Draws `n` standard normal inputs and labels them with the teacher.
pub fn sample_dataset<T: Real>(teacher: &WeightMatrix<T>, n: usize, seed: u64) -> Result<Dataset<T>> {
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let d = teacher.dims();
    let mut rng = rng_from_seed(seed);
    let inputs = Matrix::from_vec(n, d, normal_vec(&mut rng, n * d))?;
    Dataset::labelled(teacher, inputs)
}

/// Draws `n` standard normal inputs labelled by the quadratic form of `a_star`.
pub fn sample_dataset_from_gram<T: Real>(a_star: &GramMatrix<T>, n: usize, seed: u64) -> Result<Dataset<T>> {
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let d = a_star.dims();
    let mut rng = rng_from_seed(seed);
    let inputs = Matrix::from_vec(n, d, normal_vec(&mut rng, n * d))?;
    let outputs = inputs.row_iter().map(|x| a_star.quad_form(x).max(T::zero())).collect();
    Dataset::new(inputs, outputs)
}

#[inline]
fn output_unchecked<T: Real>(w: &WeightMatrix<T>, x: &[T]) -> T {
    let mut acc = T::zero();
    for row in w.weights().row_iter() {
        let p = dot(row, x);
        acc += p * p;
    }
    w.scale() * acc
}

/// `s Σ_j (x·w_j)²`.
pub fn network_output<T: Real>(w: &WeightMatrix<T>, x: &[T]) -> Result<T> {
    check_dim(w.dims(), x.len())?;
    Ok(output_unchecked(w, x))
}

/// `s Σ_j w_j w_jᵀ`.
pub fn gram<T: Real>(w: &WeightMatrix<T>) -> GramMatrix<T> {
    let d = w.dims();
    let mut a = Matrix::zeros(d, d);
    gram_into(w.weights().as_slice(), d, w.scale(), &mut a);
    GramMatrix::from_symmetric_unchecked(a)
}

/// Writes `s Σ_j w_j w_jᵀ` for row-major weights `flat` into `a`.
pub(crate) fn gram_into<T: Real>(flat: &[T], d: usize, s: T, a: &mut Matrix<T>) {
    a.as_mut_slice().iter_mut().for_each(|x| *x = T::zero());
    for row in flat.chunks_exact(d) {
        for i in 0..d {
            let ri = row[i];
            for j in i..d {
                a[(i, j)] += ri * row[j];
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            let v = a[(i, j)] * s;
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}

/// Sample-complexity threshold for a width-`m*` teacher in dimension `d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalSamples {
    pub n_c: usize,
    /// `n_c / d`.
    pub alpha_c_finite: f64,
    /// Large-`d` limit of `n_c / d`.
    pub alpha_c_limit: f64,
}

/// `n_c = d(m*+1) − m*(m*+1)/2` for `m* < d`, and `d(d+1)/2` once `m* ≥ d`.
pub fn critical_samples(d: usize, m_star: usize) -> CriticalSamples {
    let (n_c, alpha_c_limit) = if m_star < d {
        (d * (m_star + 1) - m_star * (m_star + 1) / 2, (m_star + 1) as f64)
    } else {
        (d * (d + 1) / 2, (d + 1) as f64 / 2.0)
    };
    CriticalSamples { n_c, alpha_c_finite: n_c as f64 / d.max(1) as f64, alpha_c_limit }
}
