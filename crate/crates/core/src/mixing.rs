//! Hypergeometric subsample weights and the mixed coefficients
//!
//! `H_n(m, k) = sum_i C(n-m, k-i) C(m, i) / C(n, k) * a(m, i)`,
//!
//! the expected coefficient of a uniformly chosen size-`m` subsample of `n`
//! coins of which `k` are heads. Float and exact paths are kept separate.

use std::collections::HashMap;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Zero};
use statrs::function::factorial::ln_binomial;

use crate::approx::{CoefficientScheme, Side};
use crate::error::{domain, Result};
use crate::numeric::{binomial, binomial_signed, CompensatedSum};

/// Relative size below which tail weights of a row are dropped.
const ROW_CUTOFF: f64 = 1e-18;

/// One hypergeometric weight with its exact twin.
#[derive(Debug, Clone, PartialEq)]
pub struct HypergeomWeight {
    pub n: u64,
    pub m: u64,
    pub k: u64,
    pub i: u64,
    pub value: f64,
    pub exact: BigRational,
}

impl HypergeomWeight {
    pub fn new(n: u64, m: u64, k: u64, i: u64) -> Result<Self> {
        Ok(Self {
            n,
            m,
            k,
            i,
            value: hyper_weight(n, m, k, i)?,
            exact: hyper_weight_exact(n, m, k, i)?,
        })
    }
}

fn check_indices(n: u64, m: u64, k: u64, i: u64) -> Result<()> {
    if m > n || k > n || i > k {
        return domain(format!("hypergeometric index out of range: n={n}, m={m}, k={k}, i={i}"));
    }
    Ok(())
}

/// Range `[lo, hi]` of `i` with nonzero weight.
pub fn support(n: u64, m: u64, k: u64) -> (u64, u64) {
    ((k + m).saturating_sub(n), k.min(m))
}

/// `C(n-m, k-i) C(m, i) / C(n, k)`: probability of `i` heads in a uniform
/// size-`m` subsample of `n` coins with `k` heads.
pub fn hyper_weight(n: u64, m: u64, k: u64, i: u64) -> Result<f64> {
    check_indices(n, m, k, i)?;
    let (lo, hi) = support(n, m, k);
    if i < lo || i > hi {
        return Ok(0.0);
    }
    let ln = ln_binomial(n - m, k - i) + ln_binomial(m, i) - ln_binomial(n, k);
    Ok(ln.exp().min(1.0))
}

pub fn hyper_weight_exact(n: u64, m: u64, k: u64, i: u64) -> Result<BigRational> {
    check_indices(n, m, k, i)?;
    if k - i > n - m || i > m {
        return Ok(BigRational::zero());
    }
    let num = BigInt::from(binomial(n - m, k - i) * binomial(m, i));
    Ok(BigRational::new(num, BigInt::from(binomial(n, k))))
}

/// Normalised weights of a whole row, `(first index, weights)`.
///
/// Built outward from the mode by the ratio recurrence, so there is no
/// overflow for any `n`; weights below `ROW_CUTOFF` times the mode are dropped.
pub(crate) fn hyper_row(n: u64, m: u64, k: u64) -> (u64, Vec<f64>) {
    let (lo, hi) = support(n, m, k);
    if lo == hi {
        return (lo, vec![1.0]);
    }
    let mode = ((((m as u128 + 1) * (k as u128 + 1)) / (n as u128 + 2)) as u64).clamp(lo, hi);
    // w(i+1) / w(i)
    let ratio = |i: u64| -> f64 { ((m - i) as f64 * (k - i) as f64) / ((i + 1) as f64 * ((n + i + 1) - m - k) as f64) };
    let mut up = Vec::new();
    let mut w = 1.0;
    let mut i = mode;
    while i < hi {
        w *= ratio(i);
        i += 1;
        if w < ROW_CUTOFF {
            break;
        }
        up.push(w);
    }
    let mut down = Vec::new();
    let mut w = 1.0;
    let mut i = mode;
    while i > lo {
        w /= ratio(i - 1);
        i -= 1;
        if w < ROW_CUTOFF {
            break;
        }
        down.push(w);
    }
    let first = mode - down.len() as u64;
    let mut weights: Vec<f64> = down.into_iter().rev().collect();
    weights.push(1.0);
    weights.extend(up);
    let total: CompensatedSum = weights.iter().copied().collect();
    let total = total.value();
    for w in &mut weights {
        *w /= total;
    }
    (first, weights)
}

fn check_mixing(scheme: &dyn CoefficientScheme, n: u64, m: u64, k: u64) -> Result<()> {
    if m < scheme.valid_from() || m > n || k > n {
        return domain(format!(
            "mixed coefficient needs valid_from={} <= m={m} <= n={n} and k={k} <= n",
            scheme.valid_from()
        ));
    }
    Ok(())
}

/// `H_n(m, k)` on the given side (float path).
pub fn mixed_coefficient(scheme: &dyn CoefficientScheme, n: u64, m: u64, k: u64, side: Side) -> Result<f64> {
    check_mixing(scheme, n, m, k)?;
    let (first, weights) = hyper_row(n, m, k);
    let mut coeffs = vec![0.0; weights.len()];
    scheme.coefficient_row(side, m, first, &mut coeffs)?;
    let sum: CompensatedSum = weights.iter().zip(&coeffs).map(|(w, a)| w * a).collect();
    Ok(sum.value())
}

/// `H_n(m, k) - H_n(m-1, k)`; nonnegative on the lower side of a consistent scheme.
pub fn increment(scheme: &dyn CoefficientScheme, n: u64, m: u64, k: u64, side: Side) -> Result<f64> {
    if m == 0 {
        return domain("increment needs m >= 1");
    }
    check_mixing(scheme, n, m - 1, k)?;
    Ok(mixed_coefficient(scheme, n, m, k, side)? - mixed_coefficient(scheme, n, m - 1, k, side)?)
}

/// Exact `H_n(m, k)`.
pub fn mixed_coefficient_exact(
    scheme: &dyn CoefficientScheme,
    n: u64,
    m: u64,
    k: u64,
    side: Side,
) -> Result<BigRational> {
    check_mixing(scheme, n, m, k)?;
    let row = ExactRow::from_scheme(scheme, side, m)?;
    let den = row.denom() * BigInt::from(binomial(n, k));
    Ok(BigRational::new(row.weighted_mixture(n, k), den))
}

/// Exact `H_n(m, k) - H_n(m-1, k)`.
pub fn increment_exact(scheme: &dyn CoefficientScheme, n: u64, m: u64, k: u64, side: Side) -> Result<BigRational> {
    if m == 0 {
        return domain("increment needs m >= 1");
    }
    Ok(mixed_coefficient_exact(scheme, n, m, k, side)? - mixed_coefficient_exact(scheme, n, m - 1, k, side)?)
}

/// `C(n-m,k-i) C(m,i) (m-i)/m + C(n-m,k-i-1) C(m,i+1) (i+1)/m - C(n-m+1,k-i) C(m-1,i)`.
///
/// Zero for every valid index tuple; this is what makes the increments of
/// `H_n(., k)` telescope into nonnegative terms.
pub fn combinatorial_identity_residual(n: u64, m: u64, k: u64, i: u64) -> Result<BigRational> {
    if m == 0 || m > n || i > k || k > n {
        return domain(format!(
            "identity needs 1 <= m <= n and i <= k <= n, got n={n}, m={m}, k={k}, i={i}"
        ));
    }
    let (n, m, k, i) = (n as i64, m as i64, k as i64, i as i64);
    let c = binomial_signed;
    let first = c(n - m, k - i) * c(m, i) * BigInt::from(m - i);
    let second = c(n - m, k - i - 1) * c(m, i + 1) * BigInt::from(i + 1);
    let third = c(n - m + 1, k - i) * c(m - 1, i) * BigInt::from(m);
    Ok(BigRational::new(first + second - third, BigInt::from(m)))
}

/// Opt-in cache of `H_n(m, k)` for one `n`, keyed by `(m, k)`.
///
/// Not synchronised: keep one per worker.
#[derive(Debug)]
pub struct MixingCache<'a> {
    scheme: &'a dyn CoefficientScheme,
    side: Side,
    n: u64,
    values: HashMap<(u64, u64), f64>,
}

impl<'a> MixingCache<'a> {
    pub fn new(scheme: &'a dyn CoefficientScheme, side: Side, n: u64) -> Self {
        Self {
            scheme,
            side,
            n,
            values: HashMap::new(),
        }
    }

    pub fn mixed(&mut self, m: u64, k: u64) -> Result<f64> {
        if let Some(&v) = self.values.get(&(m, k)) {
            return Ok(v);
        }
        let v = mixed_coefficient(self.scheme, self.n, m, k, self.side)?;
        self.values.insert((m, k), v);
        Ok(v)
    }

    pub fn increment(&mut self, m: u64, k: u64) -> Result<f64> {
        if m == 0 {
            return domain("increment needs m >= 1");
        }
        Ok(self.mixed(m, k)? - self.mixed(m - 1, k)?)
    }
}

/// One row `a(m, 0..=m)` over a common denominator, for fast exact scans.
#[derive(Debug, Clone)]
pub(crate) struct ExactRow {
    degree: u64,
    numers: Vec<BigInt>,
    denom: BigInt,
}

impl ExactRow {
    pub(crate) fn from_scheme(scheme: &dyn CoefficientScheme, side: Side, m: u64) -> Result<Self> {
        let values = (0..=m)
            .map(|i| scheme.coefficient_exact(side, m, i))
            .collect::<Result<Vec<_>>>()?;
        let denom = values.iter().fold(BigInt::one(), |acc, v| acc.lcm(v.denom()));
        let numers = values.iter().map(|v| v.numer() * (&denom / v.denom())).collect();
        Ok(Self {
            degree: m,
            numers,
            denom,
        })
    }

    pub(crate) fn value(&self, i: usize) -> BigRational {
        BigRational::new(self.numers[i].clone(), self.denom.clone())
    }

    pub(crate) fn numer(&self, i: usize) -> &BigInt {
        &self.numers[i]
    }

    pub(crate) fn denom(&self) -> &BigInt {
        &self.denom
    }

    /// `sum_i C(n-m, k-i) C(m, i) numer_i`, i.e. `H_n(m, k) C(n, k) denom`.
    pub(crate) fn weighted_mixture(&self, n: u64, k: u64) -> BigInt {
        let m = self.degree;
        let (lo, hi) = support(n, m, k);
        let mut acc = BigInt::zero();
        for i in lo..=hi {
            acc += BigInt::from(binomial(n - m, k - i) * binomial(m, i)) * &self.numers[i as usize];
        }
        acc
    }
}
