//! Empirical and population losses with their analytic gradients.
//!
//! Gram-space losses are written in the `E` normalization, which is twice
//! the weight-space loss: `E_n(A) = 2 L_n(w)` whenever `A = gram(w)`.

use crate::error::{check_dim, Error, Result};
use crate::linalg::Matrix;
use crate::model::{network_output, Dataset, GramMatrix, WeightMatrix};
use crate::scalar::Real;

/// How per-sample terms are accumulated. Both modes sum in sample order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Summation {
    #[default]
    Sequential,
    /// Kahan–Babuška (Neumaier) compensated summation.
    Compensated,
}

struct Accumulator<T> {
    mode: Summation,
    sum: T,
    comp: T,
}

impl<T: Real> Accumulator<T> {
    fn new(mode: Summation) -> Self {
        Accumulator { mode, sum: T::zero(), comp: T::zero() }
    }

    #[inline]
    fn add(&mut self, x: T) {
        match self.mode {
            Summation::Sequential => self.sum += x,
            Summation::Compensated => {
                let t = self.sum + x;
                if self.sum.abs() >= x.abs() {
                    self.comp += (self.sum - t) + x;
                } else {
                    self.comp += (x - t) + self.sum;
                }
                self.sum = t;
            }
        }
    }

    fn total(&self) -> T {
        self.sum + self.comp
    }
}

fn check_pair<T: Real>(a: &GramMatrix<T>, a_star: &GramMatrix<T>) -> Result<()> {
    check_dim(a_star.dims(), a.dims())
}

fn check_data<T: Real>(d: usize, data: &Dataset<T>) -> Result<()> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    check_dim(d, data.dims())
}

/// `L_n = (1/4n) Σ_k (y_k − f(x_k))²`.
pub fn empirical_loss_weights<T: Real>(w: &WeightMatrix<T>, data: &Dataset<T>) -> Result<T> {
    check_data(w.dims(), data)?;
    let mut acc = T::zero();
    for (x, y) in data.samples() {
        let r = y - network_output(w, x)?;
        acc += r * r;
    }
    Ok(acc / (T::of(4.0) * T::of_usize(data.len())))
}

/// `E_n(A) = (1/2n) Σ_k (x_kᵀ (A − A*) x_k)²`.
pub fn empirical_gram_loss<T: Real>(a: &GramMatrix<T>, a_star: &GramMatrix<T>, data: &Dataset<T>) -> Result<T> {
    empirical_gram_loss_with(a, a_star, data, Summation::Sequential)
}

pub fn empirical_gram_loss_with<T: Real>(
    a: &GramMatrix<T>,
    a_star: &GramMatrix<T>,
    data: &Dataset<T>,
    mode: Summation,
) -> Result<T> {
    check_pair(a, a_star)?;
    check_data(a.dims(), data)?;
    let delta = a.matrix() - a_star.matrix();
    let mut acc = Accumulator::new(mode);
    for x in data.inputs().row_iter() {
        let q = delta.quad_form(x);
        acc.add(q * q);
    }
    Ok(acc.total() / (T::of(2.0) * T::of_usize(data.len())))
}

/// `∇E_n(A) = −(1/n) Σ_k [x_kᵀ(A* − A)x_k] x_k x_kᵀ`.
pub fn empirical_gram_grad<T: Real>(
    a: &GramMatrix<T>,
    a_star: &GramMatrix<T>,
    data: &Dataset<T>,
) -> Result<GramMatrix<T>> {
    check_pair(a, a_star)?;
    check_data(a.dims(), data)?;
    let delta = a_star.matrix() - a.matrix();
    Ok(GramMatrix::from_symmetric_unchecked(empirical_grad_from_delta(&delta, data)))
}

/// Gradient of `E_n` given `A* − A`; assumes dimensions were validated.
pub(crate) fn empirical_grad_from_delta<T: Real>(delta: &Matrix<T>, data: &Dataset<T>) -> Matrix<T> {
    let d = delta.rows();
    let mut g = Matrix::zeros(d, d);
    for x in data.inputs().row_iter() {
        let r = delta.quad_form(x);
        for i in 0..d {
            let rxi = r * x[i];
            for j in i..d {
                g[(i, j)] += rxi * x[j];
            }
        }
    }
    let s = -T::one() / T::of_usize(data.len());
    for i in 0..d {
        for j in i..d {
            let v = g[(i, j)] * s;
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    g
}

/// `E(A) = tr((A − A*)²) + ½ (tr(A − A*))²`.
pub fn population_loss<T: Real>(a: &GramMatrix<T>, a_star: &GramMatrix<T>) -> Result<T> {
    check_pair(a, a_star)?;
    Ok(population_loss_from_delta(&(a.matrix() - a_star.matrix())))
}

pub(crate) fn population_loss_from_delta<T: Real>(delta: &Matrix<T>) -> T {
    // tr(D²) = ‖D‖_F² for symmetric D
    let fro2: T = delta.as_slice().iter().map(|&x| x * x).sum();
    let tr = delta.trace();
    fro2 + T::of(0.5) * tr * tr
}

/// `∇E(A) = 2(A − A*) + tr(A − A*) Id`.
pub fn population_grad<T: Real>(a: &GramMatrix<T>, a_star: &GramMatrix<T>) -> Result<GramMatrix<T>> {
    check_pair(a, a_star)?;
    let delta = a.matrix() - a_star.matrix();
    Ok(GramMatrix::from_symmetric_unchecked(population_grad_from_delta(&delta)))
}

pub(crate) fn population_grad_from_delta<T: Real>(delta: &Matrix<T>) -> Matrix<T> {
    let tr = delta.trace();
    let mut g = delta.scale(T::of(2.0));
    for i in 0..g.rows() {
        g[(i, i)] += tr;
    }
    g
}
