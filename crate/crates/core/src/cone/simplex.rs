//! Exact phase-I simplex for `{z ≥ 0 : Σ_j z_j g_j = b}` with Bland's rule.

use crate::scalar::Field;

/// Whether `b` is a nonnegative combination of `generators`, decided in exact arithmetic.
///
/// All vectors must have the same length.
pub fn nonneg_feasible<F: Field>(generators: &[Vec<F>], b: &[F]) -> bool {
    let d = b.len();
    let m = generators.len();
    let width = m + d + 1;
    let rhs = width - 1;
    // rows 0..d are constraints, row d is the phase-I reduced cost row
    let mut tab: Vec<Vec<F>> = vec![vec![F::zero(); width]; d + 1];
    for i in 0..d {
        let flip = b[i] < F::zero();
        let sign = |x: F| if flip { -x } else { x };
        for j in 0..m {
            tab[i][j] = sign(generators[j][i].clone());
        }
        tab[i][m + i] = F::one();
        tab[i][rhs] = sign(b[i].clone());
    }
    for j in (0..m).chain(std::iter::once(rhs)) {
        let mut s = F::zero();
        for row in tab.iter().take(d) {
            s = s - row[j].clone();
        }
        tab[d][j] = s;
    }
    let mut basis: Vec<usize> = (m..m + d).collect();

    loop {
        let Some(enter) = (0..rhs).find(|&j| tab[d][j] < F::zero()) else {
            break;
        };
        let mut leave: Option<(usize, F)> = None;
        for i in 0..d {
            if tab[i][enter] > F::zero() {
                let ratio = tab[i][rhs].clone() / tab[i][enter].clone();
                let better = match &leave {
                    None => true,
                    Some((li, lr)) => ratio < *lr || (ratio == *lr && basis[i] < basis[*li]),
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
        }
        // phase I is bounded below by zero, so an entering column always has a pivot row
        let (pr, _) = leave.expect("phase-I objective is bounded");
        let piv = tab[pr][enter].clone();
        for v in tab[pr].iter_mut() {
            *v = v.clone() / piv.clone();
        }
        let pivot_row = tab[pr].clone();
        for (i, row) in tab.iter_mut().enumerate() {
            if i == pr || row[enter].is_zero() {
                continue;
            }
            let f = row[enter].clone();
            for (v, p) in row.iter_mut().zip(&pivot_row) {
                *v = v.clone() - f.clone() * p.clone();
            }
        }
        basis[pr] = enter;
    }
    tab[d][rhs].is_zero()
}
