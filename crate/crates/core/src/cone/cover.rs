//! Cover's count of extremal rays for random cones in general position.

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use crate::error::{invalid, Result};

/// `C(n, d) = 2 Σ_{k<d} binom(n−1, k)`, with `C(0, d) = 1`.
pub fn cover_count(n: usize, d: usize) -> BigUint {
    if n == 0 {
        return BigUint::one();
    }
    let top = n - 1;
    let mut binom = BigUint::one();
    let mut sum = BigUint::zero();
    for k in 0..d.min(top + 1) {
        sum += &binom;
        binom = binom * BigUint::from(top - k) / BigUint::from(k + 1);
    }
    sum * 2u32
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverExpected {
    pub n: usize,
    pub d: usize,
    /// `E N_{n,d} = 2n C(n−1, d−1) / C(n, d)`, exact.
    pub exact: BigRational,
    pub expected: f64,
    /// `C(n, d)`.
    pub c_table: BigUint,
}

/// Expected number of extremal rays among `n` folded vectors in general position in dimension `d`.
pub fn cover_expected(n: usize, d: usize) -> Result<CoverExpected> {
    if n == 0 || d == 0 {
        return Err(invalid("cover_expected needs n >= 1 and d >= 1"));
    }
    let c_nd = cover_count(n, d);
    let num = BigUint::from(2 * n) * cover_count(n - 1, d - 1);
    let exact = BigRational::new(num.into(), c_nd.clone().into());
    let expected = exact.to_f64().unwrap_or(f64::NAN);
    Ok(CoverExpected { n, d, exact, expected, c_table: c_nd })
}

/// `lim d⁻¹ E N` as `n, d → ∞` with `n/d = α`.
pub fn cover_limit(alpha: f64) -> f64 {
    alpha.min(2.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(cover_expected(3, 3).unwrap().expected, 3.0);
        assert_eq!(cover_expected(4, 2).unwrap().expected, 2.0);
        let c = cover_expected(8, 4).unwrap();
        assert_eq!(c.c_table, BigUint::from(128u32));
        assert_eq!(cover_count(7, 3), BigUint::from(44u32));
        assert_eq!(c.exact, BigRational::new(11.into(), 2.into()));
    }

    #[test]
    fn small_n_means_all_extremal() {
        for d in 1..8 {
            for n in 1..=d {
                assert_eq!(cover_expected(n, d).unwrap().expected, n as f64, "n={n} d={d}");
            }
        }
    }

    #[test]
    fn table_counts_dichotomies() {
        // C(n, d) = 2^n whenever n ≤ d
        for n in 1..10 {
            assert_eq!(cover_count(n, n + 2), BigUint::from(1u64 << n));
        }
    }

    #[test]
    fn approaches_limit() {
        let at_40 = |n: usize| cover_expected(n, 40).unwrap().expected / 40.0;
        assert!((at_40(60) / 1.5 - 1.0).abs() < 0.01);
        assert!((at_40(120) / 2.0 - 1.0).abs() < 0.05);
        // for n ≫ d the count saturates at 2(d − 1)
        assert!((at_40(4000) - 2.0 * 39.0 / 40.0).abs() < 0.01);
        assert!(at_40(4000) < 2.0);
        assert_eq!(cover_limit(1.5), 1.5);
        assert_eq!(cover_limit(3.0), 2.0);
    }

    #[test]
    fn rejects_degenerate_arguments() {
        assert!(cover_expected(0, 3).is_err());
        assert!(cover_expected(3, 0).is_err());
    }
}
