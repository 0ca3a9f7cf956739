//! Random-permutation matching baseline.
//!
//! If file B is linked to file A by a uniformly random permutation, the number
//! of correctly matched records is the number of fixed points of that
//! permutation. Its distribution is
//!
//! ```text
//! P(R = r) = (1 / r!) * sum_{v = 0}^{n - r} (-1)^v / v!
//! ```
//!
//! which is the same as `D(n - r) / (r! (n - r)!)` where `D(m)` is the number of
//! derangements of `m` items. All probabilities are computed with exact
//! rational arithmetic and only rounded to `f64` at the boundary.

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use thiserror::Error;

/// Largest file size accepted by [`pmf_table`] and [`exact_match_moments`].
pub const DEFAULT_TABLE_CAP: usize = 10_000;

/// Beyond this many terms the alternating series and `1 / r!` are below the
/// smallest positive subnormal `f64` by hundreds of orders of magnitude, so
/// truncating there does not change the rounded result.
const SERIES_TERMS: usize = 200;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BaselineError {
    #[error("file size must be at least 1")]
    EmptyFile,
    #[error("r = {r} is outside 0..={n}")]
    OutOfRange { n: usize, r: usize },
    #[error("n = {n} exceeds the table cap of {cap}")]
    Capacity { n: usize, cap: usize },
}

/// Probability mass function of the number of correct matches for files of size `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchPmf {
    pub n: usize,
    /// `probs[r]` is the probability of exactly `r` correct matches.
    pub probs: Vec<f64>,
}

impl MatchPmf {
    pub fn total(&self) -> f64 {
        // Summed smallest-first so the tail does not get swamped.
        self.probs.iter().rev().sum()
    }
}

fn factorial(k: usize) -> BigUint {
    (1..=k as u64).fold(BigUint::one(), |acc, i| acc * i)
}

/// Derangement count `D(m)` via `D(m) = m D(m-1) + (-1)^m`.
pub fn derangements(m: usize) -> BigUint {
    let mut d = BigInt::one();
    for i in 1..=m {
        d = d * BigInt::from(i) + if i % 2 == 0 { 1 } else { -1 };
    }
    d.to_biguint().expect("derangement counts are non-negative")
}

/// Exact probability of exactly `r` correct matches among `n`.
pub fn exact_match_pmf_ratio(n: usize, r: usize) -> Result<BigRational, BaselineError> {
    if n == 0 {
        return Err(BaselineError::EmptyFile);
    }
    if r > n {
        return Err(BaselineError::OutOfRange { n, r });
    }
    let numer = derangements(n - r);
    let denom = factorial(r) * factorial(n - r);
    Ok(BigRational::new(numer.into(), denom.into()))
}

/// Probability of exactly `r` correct matches among `n`, rounded to `f64`.
pub fn exact_match_pmf(n: usize, r: usize) -> Result<f64, BaselineError> {
    if n == 0 {
        return Err(BaselineError::EmptyFile);
    }
    if r > n {
        return Err(BaselineError::OutOfRange { n, r });
    }
    let partial = SeriesPrefix::new(SERIES_TERMS.min(n));
    Ok(partial.probability(n, r))
}

/// Partial sums `s(m) = sum_{v=0}^{m} (-1)^v / v!` held exactly.
struct SeriesPrefix {
    sums: Vec<BigRational>,
}

impl SeriesPrefix {
    fn new(max_terms: usize) -> Self {
        let mut sums = Vec::with_capacity(max_terms + 1);
        let mut fact = BigUint::one();
        let mut acc = BigRational::zero();
        for v in 0..=max_terms {
            if v > 0 {
                fact *= v as u64;
            }
            let term = BigRational::new(BigInt::one(), fact.clone().into());
            if v % 2 == 0 {
                acc += term;
            } else {
                acc -= term;
            }
            sums.push(acc.clone());
        }
        SeriesPrefix { sums }
    }

    fn probability(&self, n: usize, r: usize) -> f64 {
        if r > SERIES_TERMS {
            return 0.0;
        }
        let m = (n - r).min(self.sums.len() - 1);
        let p = &self.sums[m] / BigRational::from_integer(factorial(r).into());
        ratio_to_f64(&p)
    }
}

fn ratio_to_f64(x: &BigRational) -> f64 {
    x.to_f64().unwrap_or(0.0)
}

/// Full pmf for files of size `n`, capped at [`DEFAULT_TABLE_CAP`].
pub fn pmf_table(n: usize) -> Result<MatchPmf, BaselineError> {
    pmf_table_with_cap(n, DEFAULT_TABLE_CAP)
}

pub fn pmf_table_with_cap(n: usize, cap: usize) -> Result<MatchPmf, BaselineError> {
    if n == 0 {
        return Err(BaselineError::EmptyFile);
    }
    if n > cap {
        return Err(BaselineError::Capacity { n, cap });
    }
    let prefix = SeriesPrefix::new(SERIES_TERMS.min(n));
    let probs = (0..=n).map(|r| prefix.probability(n, r)).collect();
    Ok(MatchPmf { n, probs })
}

/// Exact pmf as rationals. Intended for small `n`.
pub fn pmf_table_exact(n: usize) -> Result<Vec<BigRational>, BaselineError> {
    (0..=n).map(|r| exact_match_pmf_ratio(n, r)).collect()
}

/// Mean and variance of the number of correct matches, computed exactly.
///
/// Both numerators are accumulated as integers over the common denominator
/// `n!` using `P(r) = C(n, r) D(n - r) / n!`.
pub fn exact_match_moments(n: usize) -> Result<(f64, f64), BaselineError> {
    let (mean, var) = exact_match_moments_ratio(n)?;
    Ok((ratio_to_f64(&mean), ratio_to_f64(&var)))
}

pub fn exact_match_moments_ratio(n: usize) -> Result<(BigRational, BigRational), BaselineError> {
    if n == 0 {
        return Err(BaselineError::EmptyFile);
    }
    if n > DEFAULT_TABLE_CAP {
        return Err(BaselineError::Capacity {
            n,
            cap: DEFAULT_TABLE_CAP,
        });
    }
    // Walk r from n down to 0 so that m = n - r climbs and D(m) follows its
    // recurrence; C(n, r) is updated alongside.
    let mut d = BigInt::one();
    let mut binom = BigInt::one();
    let mut first = BigInt::zero();
    let mut second = BigInt::zero();
    for m in 0..=n {
        let r = n - m;
        if m > 0 {
            d = d * BigInt::from(m) + if m % 2 == 0 { 1 } else { -1 };
            // C(n, r) = C(n, r + 1) * (r + 1) / (n - r)
            binom = binom * BigInt::from(r + 1) / BigInt::from(m);
        }
        let weight = &binom * &d;
        let rr = BigInt::from(r);
        first += &weight * &rr;
        second += weight * &rr * &rr;
    }
    let total: BigInt = factorial(n).into();
    let mean = BigRational::new(first, total.clone());
    let raw_second = BigRational::new(second, total);
    let var = raw_second - &mean * &mean;
    Ok((mean, var))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn single_record_always_matches() {
        assert_eq!(exact_match_pmf(1, 1).unwrap(), 1.0);
        assert_eq!(pmf_table(1).unwrap().probs, vec![0.0, 1.0]);
    }

    #[test]
    fn three_records_by_hand() {
        // Permutations of 3: identity (3 fixed), three transpositions (1 fixed
        // each), two 3-cycles (0 fixed).
        let exact = pmf_table_exact(3).unwrap();
        assert_eq!(exact, vec![q(1, 3), q(1, 2), q(0, 1), q(1, 6)]);
        assert_eq!(exact_match_pmf_ratio(4, 2).unwrap(), q(1, 4));
    }

    #[test]
    fn two_records() {
        let t = pmf_table(2).unwrap();
        assert_eq!(t.probs, vec![0.5, 0.0, 0.5]);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert_eq!(
            exact_match_pmf(3, 4),
            Err(BaselineError::OutOfRange { n: 3, r: 4 })
        );
        assert_eq!(exact_match_pmf(0, 0), Err(BaselineError::EmptyFile));
        assert_eq!(
            pmf_table(DEFAULT_TABLE_CAP + 1).unwrap_err(),
            BaselineError::Capacity {
                n: DEFAULT_TABLE_CAP + 1,
                cap: DEFAULT_TABLE_CAP
            }
        );
    }

    #[test]
    fn derangement_numbers() {
        let known = [1u64, 0, 1, 2, 9, 44, 265, 1854, 14833];
        for (m, &d) in known.iter().enumerate() {
            assert_eq!(derangements(m), BigUint::from(d));
        }
    }

    #[test]
    fn float_and_exact_routes_agree() {
        for n in 1..=30 {
            for r in 0..=n {
                let exact = exact_match_pmf_ratio(n, r).unwrap().to_f64().unwrap();
                assert_eq!(exact_match_pmf(n, r).unwrap(), exact, "n={n} r={r}");
            }
        }
    }

    #[test]
    fn moments_small() {
        assert_eq!(exact_match_moments(1).unwrap(), (1.0, 0.0));
        assert_eq!(exact_match_moments(5).unwrap(), (1.0, 1.0));
        let (m, v) = exact_match_moments_ratio(90).unwrap();
        assert!(m.is_one() && v.is_one());
    }

    #[test]
    fn large_table_is_normalized() {
        let t = pmf_table(2_000).unwrap();
        assert!((t.total() - 1.0).abs() < 1e-12);
        assert_eq!(t.probs[1_999], 0.0);
    }
}
