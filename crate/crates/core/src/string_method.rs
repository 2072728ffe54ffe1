//! Simplified string method on the empirical Gram loss.
//!
//! A string is a chain of `K` Gram matrices joining a student initialization to the
//! teacher. Relaxation alternates one explicit Euler step of the Gram flow
//! `Ȧ = −A∇E_n − ∇E_n A` on every interior image with a reparametrization that
//! places the images at equal Frobenius distance along the current polyline.

use std::io::{self, Write};

use rayon::prelude::*;

use crate::dynamics::DIVERGENCE_THRESHOLD;
use crate::error::{check_dim, invalid, Error, Result};
use crate::harness::log_mean;
use crate::linalg::Matrix;
use crate::losses::{empirical_grad_from_delta, empirical_gram_loss, population_loss};
use crate::model::{Dataset, GramMatrix};
use crate::scalar::Real;

const BISECTION_ITERS: usize = 200;
const CHORD_RTOL: f64 = 1e-13;
const FOLD_RTOL: f64 = 1e-8;
const PAR_CHUNK: usize = 32;

/// Ordered images with normalized cumulative Frobenius arclength.
#[derive(Debug, Clone, PartialEq)]
pub struct StringPath<T> {
    images: Vec<GramMatrix<T>>,
    arclengths: Vec<T>,
}

impl<T: Real> StringPath<T> {
    /// Builds a path from explicit images; arclengths are computed from consecutive distances.
    pub fn from_images(images: Vec<GramMatrix<T>>) -> Result<Self> {
        if images.len() < 2 {
            return Err(invalid("a string needs at least two images"));
        }
        let d = images[0].dims();
        for img in &images {
            check_dim(d, img.dims())?;
        }
        let arclengths = normalized_arclengths(&images);
        Ok(StringPath { images, arclengths })
    }

    pub fn images(&self) -> &[GramMatrix<T>] {
        &self.images
    }

    pub fn arclengths(&self) -> &[T] {
        &self.arclengths
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.images[0].dims()
    }

    /// Frobenius distances between consecutive images.
    pub fn gaps(&self) -> Vec<T> {
        self.images.windows(2).map(|w| w[0].frobenius_dist(&w[1])).collect()
    }

    /// `(max gap − min gap) / mean gap`; zero for a string of coincident images.
    pub fn gap_spread(&self) -> T {
        let gaps = self.gaps();
        let hi = gaps.iter().copied().fold(T::zero(), T::max);
        let lo = gaps.iter().copied().fold(T::infinity(), T::min);
        let mean = gaps.iter().copied().sum::<T>() / T::of_usize(gaps.len());
        if mean.is_zero() {
            T::zero()
        } else {
            (hi - lo) / mean
        }
    }
}

fn normalized_arclengths<T: Real>(images: &[GramMatrix<T>]) -> Vec<T> {
    let mut s = Vec::with_capacity(images.len());
    let mut acc = T::zero();
    s.push(acc);
    for w in images.windows(2) {
        acc += w[0].frobenius_dist(&w[1]);
        s.push(acc);
    }
    if acc > T::zero() {
        s.iter_mut().for_each(|v| *v /= acc);
    }
    s
}

/// Linear interpolation `A0 + (k/(K−1))(A* − A0)`, `k = 0..K`.
pub fn init_string<T: Real>(a0: &GramMatrix<T>, a_star: &GramMatrix<T>, k: usize) -> Result<StringPath<T>> {
    if k < 2 {
        return Err(invalid("a string needs at least two images"));
    }
    check_dim(a0.dims(), a_star.dims())?;
    let diff = a_star.matrix() - a0.matrix();
    let last = T::of_usize(k - 1);
    let mut images: Vec<GramMatrix<T>> = (0..k - 1)
        .map(|i| {
            let mut m = a0.matrix().clone();
            m.axpy(T::of_usize(i) / last, &diff);
            GramMatrix::from_symmetric_unchecked(m)
        })
        .collect();
    images.push(a_star.clone());
    Ok(StringPath { arclengths: normalized_arclengths(&images), images })
}

fn lerp_into<T: Real>(a: &[T], b: &[T], s: T, out: &mut [T]) {
    for ((o, &x), &y) in out.iter_mut().zip(a).zip(b) {
        *o = x + s * (y - x);
    }
}

/// Position `(segment, fraction)` of the first point after `p` on the polyline at chord distance `h`,
/// searching from segment `start`.
fn next_at_distance<T: Real>(pts: &[&[T]], p: &[T], start: usize, h: T) -> Option<(usize, T)> {
    let h2 = h * h;
    for seg in start..pts.len() - 1 {
        let (a, b) = (pts[seg], pts[seg + 1]);
        let (mut qa, mut ab_ap, mut ap2, mut pb2) = (T::zero(), T::zero(), T::zero(), T::zero());
        for ((&x, &y), &z) in a.iter().zip(b).zip(p) {
            let (ab, ap, pb) = (y - x, x - z, y - z);
            qa += ab * ab;
            ab_ap += ab * ap;
            ap2 += ap * ap;
            pb2 += pb * pb;
        }
        if pb2 < h2 {
            continue;
        }
        // |a − p + s·(b − a)|² = h² has exactly one root in [0, 1] here; take the larger one
        let qb = T::of(2.0) * ab_ap;
        let disc = (qb * qb - T::of(4.0) * qa * (ap2 - h2)).max(T::zero());
        let s = ((-qb + disc.sqrt()) / (T::of(2.0) * qa)).max(T::zero()).min(T::one());
        return Some((seg, s));
    }
    None
}

/// Places `K` points at equal chord distance along the polyline through `pts`, keeping both ends.
/// The flag is set when no such placement exists and the points were laid at equal arclength.
fn equal_chords<T: Real>(pts: &[&[T]]) -> (Vec<Vec<T>>, bool) {
    let k = pts.len();
    let len = pts[0].len();
    let last = pts[k - 1];
    let dist = |a: &[T], b: &[T]| -> T { a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum::<T>().sqrt() };
    let mut p = vec![T::zero(); len];
    let mut marks = Vec::with_capacity(k - 2);
    // distance left to the end minus the chords still to be laid: positive when `h` is too short
    let mut place = |h: T, marks: &mut Vec<(usize, T)>| -> T {
        marks.clear();
        p.copy_from_slice(pts[0]);
        let mut seg = 0;
        for _ in 0..k - 2 {
            match next_at_distance(pts, &p, seg, h) {
                Some((next, s)) => {
                    seg = next;
                    lerp_into(pts[next], pts[next + 1], s, &mut p);
                    marks.push((next, s));
                }
                None => break,
            }
        }
        let missing = T::of_usize(k - 1 - marks.len());
        dist(&p, last) - missing * h
    };
    let total: T = pts.windows(2).map(|w| dist(w[0], w[1])).sum();
    let (mut lo, mut hi) = (T::zero(), total);
    let (mut f_lo, mut f_hi) = (place(lo, &mut marks), place(hi, &mut marks));
    let tol = T::of(CHORD_RTOL).max(T::of(64.0) * T::epsilon()) * total;
    // Illinois variant of regula falsi on the bracket [lo, hi]
    let mut side = 0i8;
    for _ in 0..BISECTION_ITERS {
        if hi - lo <= tol || !(f_lo > f_hi) {
            break;
        }
        let mut h = hi - f_hi * (hi - lo) / (f_hi - f_lo);
        if !(h > lo && h < hi) {
            h = T::of(0.5) * (lo + hi);
        }
        let f = place(h, &mut marks);
        if f.abs() <= tol {
            lo = h;
            break;
        }
        if f > T::zero() {
            lo = h;
            f_lo = f;
            if side == 1 {
                f_hi = f_hi * T::of(0.5);
            }
            side = 1;
        } else {
            hi = h;
            f_hi = f;
            if side == -1 {
                f_lo = f_lo * T::of(0.5);
            }
            side = -1;
        }
    }
    // a positive residual means every interior point was placed
    let residual = place(lo, &mut marks);
    let folded = residual > T::of(FOLD_RTOL).max(T::epsilon().sqrt()) * total;
    if folded {
        equal_arclength(pts, total, &mut marks);
    }
    let mut out = Vec::with_capacity(k);
    out.push(pts[0].to_vec());
    for &(seg, s) in &marks {
        let mut v = vec![T::zero(); len];
        lerp_into(pts[seg], pts[seg + 1], s, &mut v);
        out.push(v);
    }
    out.push(last.to_vec());
    (out, folded)
}

fn equal_arclength<T: Real>(pts: &[&[T]], total: T, marks: &mut Vec<(usize, T)>) {
    let k = pts.len();
    let lengths: Vec<T> =
        pts.windows(2).map(|w| w[0].iter().zip(w[1]).map(|(&x, &y)| (x - y) * (x - y)).sum::<T>().sqrt()).collect();
    marks.clear();
    let (mut seg, mut start) = (0, T::zero());
    for j in 1..k - 1 {
        let target = total * T::of_usize(j) / T::of_usize(k - 1);
        while seg + 1 < lengths.len() && start + lengths[seg] < target {
            start += lengths[seg];
            seg += 1;
        }
        let s = if lengths[seg] > T::zero() { (target - start) / lengths[seg] } else { T::zero() };
        marks.push((seg, s.max(T::zero()).min(T::one())));
    }
}

/// Reparametrizes to equal consecutive Frobenius distances; the endpoints are kept bitwise.
///
/// Points are laid along the current polyline so that each lies at the common chord length
/// from its predecessor. A polyline that doubles back so sharply that no such placement
/// exists is instead resampled at equal arclength.
pub fn reparametrize<T: Real>(path: &StringPath<T>) -> StringPath<T> {
    reparametrize_checked(path).0
}

/// [`reparametrize`], also reporting whether the equal-arclength fallback was used.
fn reparametrize_checked<T: Real>(path: &StringPath<T>) -> (StringPath<T>, bool) {
    let d = path.dims();
    let slices: Vec<&[T]> = path.images.iter().map(|g| g.matrix().as_slice()).collect();
    let (mut placed, folded) = equal_chords(&slices);
    let k = placed.len();
    let mut images = Vec::with_capacity(k);
    images.push(path.images[0].clone());
    for v in placed.drain(1..k - 1) {
        let mut m = Matrix::from_vec(d, d, v).expect("image shape");
        m.symmetrize();
        images.push(GramMatrix::from_symmetric_unchecked(m));
    }
    images.push(path.images[k - 1].clone());
    (StringPath { arclengths: normalized_arclengths(&images), images }, folded)
}

fn euler_step<T: Real>(a: &Matrix<T>, a_star: &Matrix<T>, data: &Dataset<T>, dt: T) -> Matrix<T> {
    let g = empirical_grad_from_delta(&(a_star - a), data);
    let ag = a.matmul(&g).expect("square");
    let d = a.rows();
    Matrix::from_fn(d, d, |i, j| {
        let v = a[(i, j)] - dt * (ag[(i, j)] + ag[(j, i)]);
        let w = a[(j, i)] - dt * (ag[(j, i)] + ag[(i, j)]);
        T::of(0.5) * (v + w)
    })
}

/// Relaxes `iters` times; see [`relax_string_with`].
pub fn relax_string<T: Real>(
    path: &StringPath<T>,
    data: &Dataset<T>,
    a_star: &GramMatrix<T>,
    dt: T,
    iters: usize,
) -> Result<StringPath<T>> {
    relax_string_with(path, data, a_star, dt, iters, |_, _| {})
}

/// Relaxes the string, calling `observer(iteration, &path)` after every reparametrization.
///
/// Interior images are stepped in parallel. Fails with [`Error::ImageDiverged`] as soon as an
/// image becomes non-finite or exceeds the divergence threshold, and with
/// [`Error::StringFolded`] when stepped images overtake one another so that no equal-chord
/// placement exists.
pub fn relax_string_with<T: Real>(
    path: &StringPath<T>,
    data: &Dataset<T>,
    a_star: &GramMatrix<T>,
    dt: T,
    iters: usize,
    mut observer: impl FnMut(usize, &StringPath<T>),
) -> Result<StringPath<T>> {
    if !(dt > T::zero()) {
        return Err(invalid("string step must be positive"));
    }
    check_dim(path.dims(), a_star.dims())?;
    check_dim(path.dims(), data.dims())?;
    let limit = T::of(DIVERGENCE_THRESHOLD);
    let k = path.len();
    let mut current = path.clone();
    for it in 0..iters {
        let stepped: Vec<Matrix<T>> = current.images[1..k - 1]
            .par_iter()
            .with_min_len(PAR_CHUNK)
            .map(|img| euler_step(img.matrix(), a_star.matrix(), data, dt))
            .collect();
        for (i, m) in stepped.iter().enumerate() {
            if !m.all_finite() || m.max_abs() > limit {
                return Err(Error::ImageDiverged { index: i + 1 });
            }
        }
        let mut images = Vec::with_capacity(k);
        images.push(current.images[0].clone());
        images.extend(stepped.into_iter().map(GramMatrix::from_symmetric_unchecked));
        images.push(current.images[k - 1].clone());
        let moved = StringPath { arclengths: Vec::new(), images };
        let (next, folded) = reparametrize_checked(&moved);
        if folded {
            return Err(Error::StringFolded { iteration: it });
        }
        current = next;
        observer(it, &current);
    }
    Ok(current)
}

/// Losses at one image of a string.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileRow<T> {
    pub index: usize,
    pub arclength: T,
    pub train_loss: T,
    pub gen_loss: T,
}

pub const PROFILE_CSV_HEADER: &str = "image_index,arclength,E_n,E";

/// `E_n` and `E` at every image.
pub fn string_profile<T: Real>(
    path: &StringPath<T>,
    data: &Dataset<T>,
    a_star: &GramMatrix<T>,
) -> Result<Vec<ProfileRow<T>>> {
    path.images
        .iter()
        .zip(&path.arclengths)
        .enumerate()
        .map(|(index, (img, &arclength))| {
            Ok(ProfileRow {
                index,
                arclength,
                train_loss: empirical_gram_loss(img, a_star, data)?,
                gen_loss: population_loss(img, a_star)?,
            })
        })
        .collect()
}

/// Pointwise geometric mean of losses over profiles of equal length; arclengths are averaged.
pub fn log_average_profiles<T: Real>(profiles: &[Vec<ProfileRow<T>>]) -> Result<Vec<ProfileRow<T>>> {
    let first = profiles.first().ok_or_else(|| invalid("no profiles to average"))?;
    if profiles.iter().any(|p| p.len() != first.len()) {
        return Err(invalid("profiles have different numbers of images"));
    }
    let column = |f: fn(&ProfileRow<T>) -> T| -> Vec<Vec<f64>> {
        profiles.iter().map(|p| p.iter().map(|r| f(r).as_f64()).collect()).collect()
    };
    let train = log_mean(&column(|r| r.train_loss))?;
    let gen = log_mean(&column(|r| r.gen_loss))?;
    let count = T::of_usize(profiles.len());
    Ok((0..first.len())
        .map(|k| ProfileRow {
            index: k,
            arclength: profiles.iter().map(|p| p[k].arclength).sum::<T>() / count,
            train_loss: T::of(train[k]),
            gen_loss: T::of(gen[k]),
        })
        .collect())
}

pub fn write_profile_csv<T: Real, W: Write>(rows: &[ProfileRow<T>], mut out: W) -> io::Result<()> {
    writeln!(out, "{PROFILE_CSV_HEADER}")?;
    for r in rows {
        writeln!(out, "{},{},{:e},{:e}", r.index, r.arclength, r.train_loss.as_f64(), r.gen_loss.as_f64())?;
    }
    Ok(())
}
