//! The law of the truncation index: `P(L = n) = n^-lambda / zeta(lambda, k)`
//! for `n >= k`, where `zeta(lambda, k) = sum_{j >= 0} (j + k)^-lambda` is the
//! Hurwitz zeta function.

use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::numeric::CompensatedSum;

pub const DEFAULT_LAMBDA: f64 = 2.0;
pub const DEFAULT_ZETA_TOL: f64 = 1e-12;
/// Largest truncation index a draw may reach.
pub const DEFAULT_CAP: u64 = 1 << 62;

/// Number of `zeta(lambda, n)` values kept in the law's table.
const TABLE_LEN: usize = 1 << 16;

/// `B_{2i}` for `i = 1..=12`.
const BERNOULLI: [f64; 12] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
    43867.0 / 798.0,
    -174611.0 / 330.0,
    854513.0 / 138.0,
    -236364091.0 / 2730.0,
];

/// Euler–Maclaurin evaluation of `zeta(s, a)` for real `s > 1`, `a > 0`,
/// summing directly until the shifted argument reaches `start`.
/// Returns the value and the size of the last correction used.
fn hurwitz_em(s: f64, a: f64, start: f64) -> (f64, f64) {
    let direct = (start - a).ceil().max(0.0) as u64;
    let mut sum = CompensatedSum::new();
    for j in (0..direct).rev() {
        sum.add((a + j as f64).powf(-s));
    }
    let b = a + direct as f64;
    let b_pow = b.powf(-s);
    sum.add(b * b_pow / (s - 1.0));
    sum.add(b_pow / 2.0);
    // term_i = B_2i / (2i)! * s (s+1) ... (s+2i-2) * b^(-s-2i+1)
    let mut rising = s;
    let mut fact = 2.0;
    let mut power = b_pow / b;
    let mut last = f64::INFINITY;
    for (i, bern) in BERNOULLI.iter().enumerate() {
        let term = bern / fact * rising * power;
        sum.add(term);
        last = term.abs();
        if last < 1e-17 * sum.value().abs() {
            break;
        }
        let two_i = 2.0 * (i + 1) as f64;
        rising *= (s + two_i - 1.0) * (s + two_i);
        fact *= (two_i + 1.0) * (two_i + 2.0);
        power /= b * b;
    }
    (sum.value(), last)
}

/// `zeta(s, a)` to full double precision.
pub(crate) fn hurwitz(s: f64, a: f64) -> f64 {
    hurwitz_em(s, a, 12.0 + s).0
}

/// `zeta(lambda, k)` with absolute error at most `tol` (down to rounding).
pub fn hurwitz_zeta(lambda: f64, k: u64, tol: f64) -> Result<f64> {
    if lambda.is_nan() || lambda <= 1.0 || !lambda.is_finite() {
        return domain(format!(
            "zeta(lambda, k) diverges for lambda = {lambda} (need lambda > 1)"
        ));
    }
    if k == 0 {
        return domain("zeta(lambda, k) needs k >= 1");
    }
    if tol.is_nan() || tol <= 0.0 {
        return domain(format!("tolerance must be positive, got {tol}"));
    }
    let mut start = 12.0 + lambda;
    loop {
        let (value, last) = hurwitz_em(lambda, k as f64, start);
        if last <= tol || last <= 4.0 * f64::EPSILON * value || start > 1e6 {
            return Ok(value);
        }
        start *= 2.0;
    }
}

/// The zeta law on `{k, k+1, ...}` with tail exponent `lambda`.
///
/// Immutable once built; `zeta(lambda, n)` for the first `2^16` support
/// points is precomputed, so sampling is a table search except in the far tail.
#[derive(Debug, Clone, Serialize)]
pub struct TruncationLaw {
    lambda: f64,
    k: u64,
    zeta_norm: f64,
    cap: u64,
    #[serde(skip)]
    zeta: Vec<f64>,
}

impl TruncationLaw {
    pub fn new(lambda: f64, k: u64) -> Result<Self> {
        if lambda.is_nan() || lambda <= 1.0 || !lambda.is_finite() {
            return domain(format!("truncation law needs lambda > 1, got {lambda}"));
        }
        if k == 0 {
            return domain("truncation law needs k >= 1");
        }
        // zeta(lambda, k + j) for j = 0..=TABLE_LEN, summed upward from the far end.
        let top = k + TABLE_LEN as u64;
        let mut zeta = vec![0.0; TABLE_LEN + 1];
        let mut acc = CompensatedSum::new();
        acc.add(hurwitz(lambda, top as f64));
        zeta[TABLE_LEN] = acc.value();
        for j in (0..TABLE_LEN).rev() {
            acc.add(((k + j as u64) as f64).powf(-lambda));
            zeta[j] = acc.value();
        }
        Ok(Self {
            lambda,
            k,
            zeta_norm: zeta[0],
            cap: DEFAULT_CAP,
            zeta,
        })
    }

    /// Replaces the truncation cap.
    pub fn with_cap(mut self, cap: u64) -> Result<Self> {
        if cap < self.k {
            return domain(format!("cap {cap} below support start {}", self.k));
        }
        self.cap = cap;
        Ok(self)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn k(&self) -> u64 {
        self.k
    }

    /// `zeta(lambda, k)`.
    pub fn zeta_norm(&self) -> f64 {
        self.zeta_norm
    }

    pub fn cap(&self) -> u64 {
        self.cap
    }

    /// `zeta(lambda, n)`, `n >= 1`.
    pub fn zeta(&self, n: u64) -> f64 {
        match n.checked_sub(self.k) {
            Some(j) if (j as usize) <= TABLE_LEN => self.zeta[j as usize],
            _ => hurwitz(self.lambda, n as f64),
        }
    }

    pub fn pmf(&self, n: u64) -> f64 {
        if n < self.k {
            0.0
        } else {
            (n as f64).powf(-self.lambda) / self.zeta_norm
        }
    }

    /// `P(L >= n) = zeta(lambda, n) / zeta(lambda, k)`.
    pub fn survival(&self, n: u64) -> Result<f64> {
        if n < self.k {
            return domain(format!("survival needs n >= k = {}, got {n}", self.k));
        }
        Ok(self.zeta(n) / self.zeta_norm)
    }

    /// `1 / P(L >= n)`.
    pub(crate) fn inverse_survival(&self, n: u64) -> f64 {
        self.zeta_norm / self.zeta(n)
    }

    /// `1/P(L >= n) - 1/P(L >= n+1)`, written without cancellation.
    pub(crate) fn delta(&self, n: u64) -> f64 {
        let z = self.zeta(n);
        let t = (n as f64).powf(-self.lambda);
        -self.zeta_norm * t / (z * (z - t))
    }

    /// `E[L] = zeta(lambda - 1, k) / zeta(lambda, k)`, finite for `lambda > 2`.
    pub fn mean(&self) -> Option<f64> {
        (self.lambda > 2.0).then(|| hurwitz(self.lambda - 1.0, self.k as f64) / self.zeta_norm)
    }

    /// Inversion: the smallest `n >= k` with `P(L <= n) >= u`.
    pub fn sample(&self, u: f64) -> Result<u64> {
        if !(0.0..1.0).contains(&u) {
            return domain(format!("uniform variate must lie in [0, 1), got {u}"));
        }
        // P(L <= n) >= u  <=>  zeta(lambda, n + 1) <= (1 - u) zeta(lambda, k)
        let target = (1.0 - u) * self.zeta_norm;
        let j = self.zeta[1..].partition_point(|&z| z > target);
        if j < TABLE_LEN {
            return Ok(self.k + j as u64);
        }
        let fits = |n: u64| hurwitz(self.lambda, (n + 1) as f64) <= target;
        let mut lo = self.k + TABLE_LEN as u64 - 1;
        let mut hi = lo;
        loop {
            if hi >= self.cap {
                if fits(self.cap) {
                    hi = self.cap;
                    break;
                }
                return Err(Error::TruncationCap { cap: self.cap });
            }
            hi = hi.saturating_mul(2).min(self.cap);
            if fits(hi) {
                break;
            }
            lo = hi;
        }
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if fits(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(hi)
    }
}

/// `P(L = n)`.
pub fn pmf(law: &TruncationLaw, n: u64) -> f64 {
    law.pmf(n)
}

/// `P(L >= n)`.
pub fn survival(law: &TruncationLaw, n: u64) -> Result<f64> {
    law.survival(n)
}

/// One draw of `L` from one uniform variate.
pub fn sample_l(law: &TruncationLaw, u: f64) -> Result<u64> {
    law.sample(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn zeta_examples() {
        let z21 = hurwitz_zeta(2.0, 1, 1e-10).unwrap();
        assert!((z21 - PI * PI / 6.0).abs() < 1e-10);
        let z22 = hurwitz_zeta(2.0, 2, 1e-10).unwrap();
        assert!((z22 - (PI * PI / 6.0 - 1.0)).abs() < 1e-10);
        for (l, k) in [(1.1, 1), (1.5, 7), (3.0, 1000), (2.5, 1 << 40)] {
            let z = hurwitz_zeta(l, k, 1e-12).unwrap();
            assert!(z >= (k as f64).powf(-l));
        }
        assert!(hurwitz_zeta(1.0, 1, 1e-10).is_err());
        assert!(hurwitz_zeta(2.0, 0, 1e-10).is_err());
    }

    #[test]
    fn zeta_matches_slow_direct_sum() {
        // zeta(3, 5) by direct summation with an integral tail bracket.
        let mut s = CompensatedSum::new();
        let n = 2_000_000u64;
        for j in (5..n).rev() {
            s.add((j as f64).powi(-3));
        }
        let nf = n as f64;
        let tail_lo = 1.0 / (2.0 * nf * nf);
        let tail_hi = tail_lo + nf.powi(-3);
        let z = hurwitz_zeta(3.0, 5, 1e-14).unwrap();
        assert!(z >= s.value() + tail_lo - 1e-15 && z <= s.value() + tail_hi + 1e-15);
    }

    #[test]
    fn pmf_and_survival_examples() {
        let law = TruncationLaw::new(2.0, 1).unwrap();
        assert!((law.pmf(1) - 6.0 / (PI * PI)).abs() < 1e-12);
        assert!((law.survival(2).unwrap() - (PI * PI / 6.0 - 1.0) / (PI * PI / 6.0)).abs() < 1e-12);
        let law2 = TruncationLaw::new(2.0, 2).unwrap();
        assert_eq!(law2.pmf(1), 0.0);
        assert_eq!(law2.survival(2).unwrap(), 1.0);
        let z = PI * PI / 6.0 - 1.0;
        assert!((law2.survival(3).unwrap() - (z - 0.25) / z).abs() < 1e-12);
        assert!(law2.survival(1).is_err());
    }

    #[test]
    fn survival_differences_are_pmf() {
        for (l, k) in [(1.5, 2), (2.0, 11), (3.5, 1)] {
            let law = TruncationLaw::new(l, k).unwrap();
            for n in k..=k + 100 {
                let d = law.survival(n).unwrap() - law.survival(n + 1).unwrap();
                assert!((d - law.pmf(n)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn zeta_grows_like_power() {
        for l in [1.5, 2.0, 3.0] {
            let law = TruncationLaw::new(l, 1).unwrap();
            let n = 10_000u64;
            let nf = n as f64;
            // Integral bracket: n^(1-l)/(l-1) <= zeta(l, n) <= n^(1-l)/(l-1) + n^-l.
            let eps = (l - 1.0) / nf;
            for m in [10u64, 100, 1000, n] {
                let ratio = law.zeta(m) * (m as f64).powf(l - 1.0) * (l - 1.0);
                assert!(ratio >= 1.0 - 1e-12 && ratio <= 1.0 + (l - 1.0) / m as f64 + 1e-12);
            }
            let ratio = law.zeta(n) * nf.powf(l - 1.0) * (l - 1.0);
            assert!((1.0 - eps..=1.0 + eps).contains(&ratio));
        }
    }

    #[test]
    fn table_and_far_tail_agree() {
        let law = TruncationLaw::new(1.5, 3).unwrap();
        let edge = 3 + TABLE_LEN as u64;
        let direct = hurwitz(1.5, edge as f64);
        assert!((law.zeta(edge) - direct).abs() < 1e-15 * direct.max(1.0));
        assert!((law.zeta(edge - 1) - (direct + ((edge - 1) as f64).powf(-1.5))).abs() < 1e-15);
    }

    #[test]
    fn sampling_examples() {
        let law = TruncationLaw::new(2.0, 1).unwrap();
        assert_eq!(law.sample(0.0).unwrap(), 1);
        assert_eq!(law.sample(0.6).unwrap(), 1);
        assert_eq!(law.sample(0.61).unwrap(), 2);
        let law = TruncationLaw::new(1.5, 11).unwrap();
        assert_eq!(law.sample(0.0).unwrap(), 11);
        for u in [0.3, 0.9, 0.999, 0.999_999, 1.0 - 1e-8] {
            let n = law.sample(u).unwrap();
            // P(L > n) <= 1 - u < P(L > n - 1), up to rounding of the tail sums
            let t = 1.0 - u;
            let after = law.survival(n + 1).unwrap();
            let at = law.survival(n).unwrap();
            assert!(
                after <= t * (1.0 + 1e-12) && (n == 11 || at > t * (1.0 - 1e-12)),
                "u={u}, n={n}"
            );
        }
        assert!(law.sample(1.0).is_err());
        // P(L > 2^62) is about 1.5e-9
        assert!(matches!(law.sample(1.0 - 1e-12), Err(Error::TruncationCap { .. })));
        let capped = TruncationLaw::new(1.5, 11).unwrap().with_cap(1000).unwrap();
        assert!(matches!(capped.sample(0.999_999), Err(Error::TruncationCap { .. })));
    }

    #[test]
    fn delta_matches_definition() {
        let law = TruncationLaw::new(2.0, 4).unwrap();
        for n in [4u64, 10, 1000, 100_000] {
            let d = law.inverse_survival(n) - law.inverse_survival(n + 1);
            assert!((law.delta(n) - d).abs() < 1e-9 * d.abs().max(1.0));
        }
    }
}
