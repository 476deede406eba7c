//! Exact and brute-force checks of the estimator's identities and bounds.
//!
//! Everything here recomputes hypergeometric mixtures and Bernstein sums
//! from scratch in rational arithmetic instead of reusing the float paths of
//! [`crate::mixing`] and [`crate::estimator`].

use std::fmt::Write as _;
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::Serialize;
use statrs::distribution::{Binomial, Discrete};

use crate::approx::{validate_consistency, CoefficientScheme, FunctionSpec, NacuPeres, Side};
use crate::error::{domain, Result};
use crate::estimator::EstimatorConfig;
use crate::mixing::combinatorial_identity_residual;
use crate::numeric::{f64_to_rational, rational_to_f64, CompensatedSum};
use crate::truncation::TruncationLaw;

/// Largest `L` for exact conditional-mean checks.
pub const MAX_EXACT_L: u64 = 12;
/// Largest degree for exact scans.
pub const MAX_SCAN_N: u64 = 30;
/// Largest `ell` for the float conditional-mean check.
pub const MAX_PSI_ELL: u64 = 40;
/// Tolerance of float-path identities.
pub const FLOAT_TOL: f64 = 1e-9;
/// Added on both sides of a bracket to cover the error of the zeta values.
const BRACKET_SLACK: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckKind {
    /// Passes when every `|residual| <= tolerance`.
    Identity,
    /// Passes when every slack is `>= -tolerance`.
    Inequality,
    /// Records a value; always passes.
    Note,
}

/// Outcome of one named check over a grid of cases.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub scope: String,
    pub kind: CheckKind,
    pub tolerance: f64,
    pub cases: u64,
    pub violations: u64,
    /// Largest `|residual|` for identities, smallest slack for inequalities,
    /// the recorded value for notes. Serialized as `null` when not finite.
    pub worst_residual: f64,
    pub worst_case: Option<String>,
    pub pass: bool,
}

impl Check {
    pub fn identity(name: impl Into<String>, scope: impl Into<String>, tolerance: f64) -> CheckBuilder {
        CheckBuilder::new(name.into(), scope.into(), CheckKind::Identity, tolerance)
    }

    pub fn inequality(name: impl Into<String>, scope: impl Into<String>) -> CheckBuilder {
        CheckBuilder::new(name.into(), scope.into(), CheckKind::Inequality, 0.0)
    }

    pub fn note(name: impl Into<String>, scope: impl Into<String>, value: f64, case: Option<String>) -> Check {
        Check {
            name: name.into(),
            scope: scope.into(),
            kind: CheckKind::Note,
            tolerance: 0.0,
            cases: 1,
            violations: 0,
            worst_residual: value,
            worst_case: case,
            pass: true,
        }
    }

    /// A check that could not run.
    pub fn failed(name: impl Into<String>, reason: impl Into<String>) -> Check {
        Check {
            name: name.into(),
            scope: String::new(),
            kind: CheckKind::Identity,
            tolerance: 0.0,
            cases: 0,
            violations: 1,
            worst_residual: f64::NAN,
            worst_case: Some(reason.into()),
            pass: false,
        }
    }
}

/// Accumulates residuals of a [`Check`].
#[derive(Debug, Clone)]
pub struct CheckBuilder {
    check: Check,
}

impl CheckBuilder {
    fn new(name: String, scope: String, kind: CheckKind, tolerance: f64) -> Self {
        let worst_residual = match kind {
            CheckKind::Inequality => f64::INFINITY,
            _ => 0.0,
        };
        let check = Check {
            name,
            scope,
            kind,
            tolerance,
            cases: 0,
            violations: 0,
            worst_residual,
            worst_case: None,
            pass: true,
        };
        Self { check }
    }

    /// Records one case; `case` labels it and is only built when needed.
    pub fn record(&mut self, value: f64, case: impl FnOnce() -> String) {
        let c = &mut self.check;
        c.cases += 1;
        let (worse, violated) = match c.kind {
            CheckKind::Inequality => (
                value < c.worst_residual || value.is_nan(),
                value.is_nan() || value < -c.tolerance,
            ),
            _ => (
                value.abs() > c.worst_residual || value.is_nan(),
                value.is_nan() || value.abs() > c.tolerance,
            ),
        };
        if worse {
            c.worst_residual = match c.kind {
                CheckKind::Inequality => value,
                _ => value.abs(),
            };
            c.worst_case = Some(case());
        }
        if violated {
            c.violations += 1;
        }
    }

    pub fn finish(mut self) -> Check {
        if self.check.cases == 0 {
            self.check.worst_residual = 0.0;
        }
        self.check.pass = self.check.violations == 0;
        self.check
    }
}

/// A list of checks; passes when all of them do.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct OracleReport {
    pub checks: Vec<Check>,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failing(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }

    pub fn extend(&mut self, other: OracleReport) {
        self.checks.extend(other.checks);
    }

    /// Fixed-width pass/fail table.
    pub fn to_table(&self) -> String {
        let width = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(5).max(5);
        let mut out = format!(
            "{:<width$}  {:<6}  {:>9}  {:>10}  {:>12}  worst case\n",
            "check", "result", "cases", "violations", "worst"
        );
        for c in &self.checks {
            let result = match (c.kind, c.pass) {
                (CheckKind::Note, _) => "note",
                (_, true) => "PASS",
                (_, false) => "FAIL",
            };
            let _ = writeln!(
                out,
                "{:<width$}  {:<6}  {:>9}  {:>10}  {:>12.4e}  {}",
                c.name,
                result,
                c.cases,
                c.violations,
                c.worst_residual,
                c.worst_case.as_deref().unwrap_or("-")
            );
        }
        out
    }
}

fn choose(n: u64, k: u64) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigInt::one();
    for j in 0..k {
        acc = acc * BigInt::from(n - j) / BigInt::from(j + 1);
    }
    acc
}

fn ratio(p: u64, q: u64) -> BigRational {
    BigRational::new(BigInt::from(p), BigInt::from(q))
}

fn row(scheme: &dyn CoefficientScheme, side: Side, n: u64) -> Result<Vec<BigRational>> {
    (0..=n).map(|i| scheme.coefficient_exact(side, n, i)).collect()
}

/// `H_big(n, s)` by the defining sum over `i`.
fn mixture(coeffs: &[BigRational], big: u64, s: u64) -> BigRational {
    let n = coeffs.len() as u64 - 1;
    let mut acc = BigRational::zero();
    for (i, a) in coeffs.iter().enumerate() {
        let i = i as u64;
        if i > s || s - i > big - n {
            continue;
        }
        acc += a * BigRational::from_integer(choose(big - n, s - i) * choose(n, i));
    }
    acc / BigRational::from_integer(choose(big, s))
}

/// `sum_k C(n,k) x^k (1-x)^(n-k) c_k`.
fn bernstein(coeffs: &[BigRational], x: &BigRational) -> BigRational {
    let n = coeffs.len() as u64 - 1;
    let y = BigRational::one() - x;
    coeffs
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let k = k as u64;
            c * BigRational::from_integer(choose(n, k)) * pow(x, k) * pow(&y, n - k)
        })
        .fold(BigRational::zero(), |a, b| a + b)
}

fn pow(x: &BigRational, e: u64) -> BigRational {
    (0..e).fold(BigRational::one(), |acc, _| acc * x)
}

/// Checks the combinatorial identity behind the telescoping increments for
/// every `1 <= m <= n <= n_max`, `0 <= i <= k <= n`.
pub fn identity_scan(n_max: u64) -> Result<OracleReport> {
    let mut check = Check::identity(
        "combinatorial-identity",
        format!("1 <= m <= n <= {n_max}, 0 <= i <= k <= n"),
        0.0,
    );
    for n in 1..=n_max {
        for m in 1..=n {
            for k in 0..=n {
                for i in 0..=k {
                    let r = combinatorial_identity_residual(n, m, k, i)?;
                    let v = if r.is_zero() {
                        0.0
                    } else {
                        rational_to_f64(&r).abs().max(f64::MIN_POSITIVE)
                    };
                    check.record(v, || format!("n={n}, m={m}, k={k}, i={i}"));
                }
            }
        }
    }
    Ok(OracleReport {
        checks: vec![check.finish()],
    })
}

/// Exact `(E[H_L(n, S_L) | L], g_n(x))` for `S_L ~ Binomial(L, x)`; the two
/// agree because a uniform size-`n` subsample of `L` x-coins is itself `n` x-coins.
#[allow(non_snake_case)]
pub fn conditional_mean_H(
    scheme: &dyn CoefficientScheme,
    side: Side,
    l: u64,
    n: u64,
    x: &BigRational,
) -> Result<(BigRational, BigRational)> {
    if n < scheme.valid_from() || n > l {
        return domain(format!(
            "conditional mean needs valid_from={} <= n={n} <= L={l}",
            scheme.valid_from()
        ));
    }
    if x.is_negative() || *x > BigRational::one() {
        return domain(format!("x={x} outside [0, 1]"));
    }
    let coeffs = row(scheme, side, n)?;
    let mixed: Vec<BigRational> = (0..=l).map(|s| mixture(&coeffs, l, s)).collect();
    Ok((bernstein(&mixed, x), bernstein(&coeffs, x)))
}

/// `(sum_s Binom(ell, s; x) psi(ell, s), g_{k-1}(x) + sum_{n=k}^{ell} (g_n(x) - g_{n-1}(x)) / P(L >= n))`.
///
/// Since `P(L >= k) = 1` the right side is evaluated as
/// `g_k(x) + sum_{n=k+1}^{ell} ...`, which stays defined when degree `k-1`
/// is outside the scheme's window.
pub fn conditional_mean_psi(config: &EstimatorConfig, ell: u64, x: f64) -> Result<(f64, f64)> {
    let law = config.law();
    if ell < law.k() || ell > MAX_PSI_ELL {
        return domain(format!(
            "conditional mean of psi needs k={} <= ell <= {MAX_PSI_ELL}, got {ell}",
            law.k()
        ));
    }
    let binom = Binomial::new(x, ell).map_err(|e| crate::Error::Domain(e.to_string()))?;
    let mut lhs = CompensatedSum::new();
    for s in 0..=ell {
        lhs.add(binom.pmf(s) * config.psi_value(ell, s)?);
    }
    Ok((lhs.value(), expected_psi_given(config, ell, x)?))
}

/// `E[psi | L = ell]` from the Bernstein polynomials.
fn expected_psi_given(config: &EstimatorConfig, ell: u64, x: f64) -> Result<f64> {
    let (scheme, side, law) = (config.scheme(), config.variant(), config.law());
    let g = |n: u64| scheme.polynomial(side, n).map(|p| p.eval(x));
    // P(L >= k) = 1, so the n = k term cancels g_{k-1}
    let mut acc = CompensatedSum::new();
    let mut prev = g(law.k())?;
    acc.add(prev);
    for n in law.k() + 1..=ell {
        let cur = g(n)?;
        acc.add((cur - prev) / law.survival(n)?);
        prev = cur;
    }
    Ok(acc.value())
}

/// An interval certified to contain `E[psi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bracket {
    pub lo: f64,
    pub hi: f64,
    pub ell_max: u64,
}

impl Bracket {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }
}

/// Encloses `E[psi] = f(x)` using the draws with `L <= ell_max` only.
///
/// For the lower variant, `lo = sum_{ell <= N} pmf(ell) E[psi | ell]`, which
/// omits a nonnegative remainder. That remainder is
/// `P(L > N) E[psi | N] + (f(x) - g_N(x))`, and `f - g_N <= max_k (b(N,k) - a(N,k))`
/// for a consistent scheme, which bounds `hi`. The upper variant mirrors this.
pub fn truncated_expectation_bracket(config: &EstimatorConfig, x: f64, ell_max: u64) -> Result<Bracket> {
    let law = config.law();
    if ell_max < law.k() {
        return domain(format!("ell_max={ell_max} below support start k={}", law.k()));
    }
    if !(0.0..=1.0).contains(&x) {
        return domain(format!("x={x} outside [0, 1]"));
    }
    let scheme = config.scheme();
    let mut head = CompensatedSum::new();
    let mut last = 0.0;
    for ell in law.k()..=ell_max {
        last = expected_psi_given(config, ell, x)?;
        head.add(law.pmf(ell) * last);
    }
    let rest = law.survival(ell_max + 1)? * last;
    let gap = (0..=ell_max)
        .map(|k| Ok(scheme.upper(ell_max, k)? - scheme.lower(ell_max, k)?))
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    let partial = head.value();
    let (lo, hi) = match config.variant() {
        Side::Lower => (partial, partial + rest + gap),
        Side::Upper => (partial + rest - gap, partial + rest),
    };
    Ok(Bracket {
        lo: lo - BRACKET_SLACK,
        hi: hi + BRACKET_SLACK,
        ell_max,
    })
}

/// Exact sign check of every increment `H_n(m, k) - H_n(m-1, k)`: `>= 0` on
/// the lower side, `<= 0` on the upper side.
pub fn nonneg_scan(scheme: &dyn CoefficientScheme, n_max: u64) -> Result<OracleReport> {
    let lo = scheme.valid_from();
    let n_max = scheme.max_degree().map_or(n_max, |m| m.min(n_max));
    let scope = format!("{lo} < m <= n <= {n_max}, 0 <= k <= n");
    let mut checks = Vec::new();
    for (side, name) in [
        (Side::Lower, "increment-nonnegative"),
        (Side::Upper, "increment-nonpositive"),
    ] {
        let mut check = Check::inequality(name, scope.clone());
        let rows = (lo..=n_max).map(|m| row(scheme, side, m)).collect::<Result<Vec<_>>>()?;
        for n in lo + 1..=n_max {
            for k in 0..=n {
                let mut prev = mixture(&rows[0], n, k);
                for m in lo + 1..=n {
                    let cur = mixture(&rows[(m - lo) as usize], n, k);
                    let inc = &cur - &prev;
                    let slack = match side {
                        Side::Lower => inc,
                        Side::Upper => -inc,
                    };
                    check.record(rational_to_f64(&slack), || format!("n={n}, m={m}, k={k}"));
                    prev = cur;
                }
            }
        }
        checks.push(check.finish());
    }
    Ok(OracleReport { checks })
}

/// Checks `H_L(k-1, s) <= 1 - M/(4k)` for the lower Nacu–Peres scheme, all
/// `k-1 <= L <= n_max`, `0 <= s <= L`. This is what keeps the first term of
/// the estimator below one.
pub fn start_bound_check(spec: &FunctionSpec, k: u64, n_max: u64) -> Result<OracleReport> {
    let min_k = crate::approx::min_support_index(spec);
    if k < min_k {
        return domain(format!("start bound needs k >= {min_k}, got {k}"));
    }
    let scheme = NacuPeres::new(spec.clone());
    let bound = BigRational::one()
        - f64_to_rational(spec.second_deriv_bound()) / BigRational::from_integer(BigInt::from(4 * k));
    // With zero curvature k may be 1, and degree 0 has no coefficients; the
    // first degree the estimator reads is then k itself.
    let start = (k - 1).max(scheme.valid_from());
    let coeffs = row(&scheme, Side::Lower, start)?;
    let mut check = Check::inequality(
        "start-bound",
        format!(
            "{start} <= L <= {n_max}, 0 <= s <= L, bound {}",
            rational_to_f64(&bound)
        ),
    );
    for l in start..=n_max {
        for s in 0..=l {
            let slack = &bound - mixture(&coeffs, l, s);
            check.record(rational_to_f64(&slack), || format!("L={l}, s={s}"));
        }
    }
    Ok(OracleReport {
        checks: vec![check.finish()],
    })
}

/// Observed range of `psi(ell, s)` over `k <= ell <= ell_max` and a grid of
/// `L` values up to `2^40`; informational only.
pub fn psi_range(config: &EstimatorConfig, ell_max: u64) -> Result<OracleReport> {
    let k = config.law().k();
    let mut ells: Vec<u64> = (k..=ell_max.max(k)).collect();
    ells.extend((6..=40).step_by(2).map(|b| 1u64 << b).filter(|&l| l > ell_max));
    if let Some(max) = config.scheme().max_degree() {
        ells.retain(|&l| l <= max);
    }
    let (mut lo, mut hi) = ((f64::INFINITY, String::new()), (f64::NEG_INFINITY, String::new()));
    for &l in &ells {
        let step = (l / 64).max(1);
        for s in (0..=l).step_by(step as usize).chain([l]) {
            let v = config.psi_value(l, s)?;
            if v < lo.0 {
                lo = (v, format!("L={l}, S={s}"));
            }
            if v > hi.0 {
                hi = (v, format!("L={l}, S={s}"));
            }
        }
    }
    let scope = format!("{k} <= L <= {ell_max} and powers of 4 to 2^40");
    Ok(OracleReport {
        checks: vec![
            Check::note("psi-min", scope.clone(), lo.0, Some(lo.1)),
            Check::note("psi-max", scope, hi.0, Some(hi.1)),
        ],
    })
}

/// Caps and grids for [`verify_suite`].
#[derive(Debug, Clone, Serialize)]
pub struct VerifyOptions {
    pub n_max: u64,
    pub l_max: u64,
    pub ell_max: u64,
    pub lambda: f64,
    /// Support start; `None` picks the scheme's minimum.
    pub k: Option<u64>,
    pub variant: Side,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            n_max: 20,
            l_max: MAX_EXACT_L,
            ell_max: 50,
            lambda: 2.0,
            k: None,
            variant: Side::Lower,
        }
    }
}

/// Runs every oracle that applies to `scheme`.
pub fn verify_suite(scheme: Arc<dyn CoefficientScheme>, opts: &VerifyOptions) -> Result<OracleReport> {
    if opts.n_max > MAX_SCAN_N || opts.l_max > MAX_EXACT_L {
        return domain(format!("oracle caps are n_max <= {MAX_SCAN_N}, L <= {MAX_EXACT_L}"));
    }
    let mut report = identity_scan(opts.n_max)?;
    report.extend(validate_consistency(scheme.as_ref(), opts.n_max));
    report.extend(nonneg_scan(scheme.as_ref(), opts.n_max)?);

    let xs: Vec<BigRational> = [(0, 1), (1, 4), (1, 2), (3, 4), (1, 1)]
        .iter()
        .map(|&(p, q)| ratio(p, q))
        .collect();
    let l_max = scheme.max_degree().map_or(opts.l_max, |m| m.min(opts.l_max));
    let mut cond = Check::identity(
        "conditional-mean-H",
        format!("n <= L <= {l_max}, x in {{0, 1/4, 1/2, 3/4, 1}}, both sides"),
        0.0,
    );
    for side in [Side::Lower, Side::Upper] {
        for l in scheme.valid_from()..=l_max {
            for n in scheme.valid_from()..=l {
                for x in &xs {
                    let (lhs, rhs) = conditional_mean_H(scheme.as_ref(), side, l, n, x)?;
                    let r = &lhs - &rhs;
                    let v = if r.is_zero() {
                        0.0
                    } else {
                        rational_to_f64(&r).abs().max(f64::MIN_POSITIVE)
                    };
                    cond.record(v, || format!("{side}, L={l}, n={n}, x={x}"));
                }
            }
        }
    }
    report.checks.push(cond.finish());

    let k = opts.k.unwrap_or_else(|| scheme.min_support_index());
    if let Some(spec) = scheme.function_spec() {
        report.extend(start_bound_check(spec, k, opts.n_max)?);
    }

    let config =
        TruncationLaw::new(opts.lambda, k).and_then(|law| EstimatorConfig::new(scheme.clone(), law, opts.variant));
    let config = match config {
        Ok(c) => c,
        Err(e) => {
            report.checks.push(Check::failed("estimator-config", e.to_string()));
            return Ok(report);
        }
    };
    let ell_top = scheme.max_degree().map_or(MAX_PSI_ELL, |m| m.min(MAX_PSI_ELL));
    let mut psi = Check::identity(
        "conditional-mean-psi",
        format!("{k} <= ell <= {ell_top}, x in 0.1..0.9"),
        FLOAT_TOL,
    );
    for ell in k..=ell_top {
        for x in [0.1, 0.3, 0.5, 0.7, 0.9] {
            let (lhs, rhs) = conditional_mean_psi(&config, ell, x)?;
            psi.record(lhs - rhs, || format!("ell={ell}, x={x}"));
        }
    }
    report.checks.push(psi.finish());

    if let Some(spec) = scheme.function_spec() {
        if scheme.max_degree().is_none_or(|m| m >= opts.ell_max) {
            let mut bracket = Check::inequality(
                "bracket-contains-f",
                format!("ell_max = {}, x in {{1/4, 1/2, 3/4}}", opts.ell_max),
            );
            for x in [0.25, 0.5, 0.75] {
                let b = truncated_expectation_bracket(&config, x, opts.ell_max)?;
                let f = spec.evaluate(x);
                bracket.record((f - b.lo).min(b.hi - f), || {
                    format!("x={x}: [{}, {}] vs f={f}", b.lo, b.hi)
                });
            }
            report.checks.push(bracket.finish());
        }
    }
    report.extend(psi_range(&config, opts.ell_max)?);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approx::ConstantScheme;

    fn np(label: &str) -> NacuPeres {
        NacuPeres::new(FunctionSpec::preset(label).unwrap())
    }

    #[test]
    fn builder_semantics() {
        let mut c = Check::inequality("t", "");
        c.record(0.5, || "a".into());
        c.record(-1.0, || "b".into());
        c.record(0.0, || "c".into());
        let c = c.finish();
        assert_eq!((c.cases, c.violations, c.worst_residual, c.pass), (3, 1, -1.0, false));
        assert_eq!(c.worst_case.as_deref(), Some("b"));
        let mut c = Check::identity("t", "", 1e-9);
        c.record(-1e-10, || "a".into());
        assert!(c.finish().pass);
    }

    #[test]
    fn conditional_mean_degenerate_x() {
        let quad = np("quad");
        let zero = BigRational::zero();
        let one = BigRational::one();
        let (lhs, rhs) = conditional_mean_H(&quad, Side::Lower, 6, 3, &zero).unwrap();
        assert_eq!(lhs, rhs);
        assert_eq!(lhs, quad.coefficient_exact(Side::Lower, 3, 0).unwrap());
        let (lhs, rhs) = conditional_mean_H(&quad, Side::Lower, 6, 3, &one).unwrap();
        assert_eq!(
            (lhs.clone(), rhs),
            (lhs, quad.coefficient_exact(Side::Lower, 3, 3).unwrap())
        );
        let (lhs, rhs) = conditional_mean_H(&quad, Side::Upper, 6, 3, &ratio(1, 2)).unwrap();
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn conditional_mean_psi_linear() {
        let cfg = EstimatorConfig::preset("lin", 2.0, None, Side::Lower).unwrap();
        let (lhs, rhs) = conditional_mean_psi(&cfg, 5, 0.3).unwrap();
        let direct: f64 = (0..=5u64)
            .map(|s| Binomial::new(0.3, 5).unwrap().pmf(s) * (0.25 + 0.5 * s as f64 / 5.0))
            .sum();
        assert!((lhs - direct).abs() < 1e-12 && (rhs - direct).abs() < 1e-12);
        let quad = EstimatorConfig::preset("quad", 2.0, None, Side::Lower).unwrap();
        let (lhs, rhs) = conditional_mean_psi(&quad, 8, 0.5).unwrap();
        assert!((lhs - rhs).abs() < FLOAT_TOL);
    }

    #[test]
    fn brackets() {
        let c = EstimatorConfig::preset("const13", 2.0, None, Side::Lower).unwrap();
        assert!(truncated_expectation_bracket(&c, 0.5, 10).unwrap().contains(1.0 / 3.0));
        let lin = EstimatorConfig::preset("lin", 2.0, None, Side::Lower).unwrap();
        assert!(truncated_expectation_bracket(&lin, 0.4, 30).unwrap().contains(0.45));
        let quad = EstimatorConfig::preset("quad", 2.0, None, Side::Lower).unwrap();
        let b = truncated_expectation_bracket(&quad, 0.5, 50).unwrap();
        assert!(b.contains(9.0 / 32.0), "{b:?}");
        assert!(truncated_expectation_bracket(&quad, 0.5, 1).is_err());
    }

    #[test]
    fn scans_on_constant_scheme() {
        let third = ratio(1, 3);
        let c = ConstantScheme::new("c", third.clone(), third).unwrap();
        let r = nonneg_scan(&c, 12).unwrap();
        assert!(r.passed());
        assert!(r.checks.iter().all(|c| c.worst_residual == 0.0));
    }

    #[test]
    fn start_bound_zero_curvature() {
        let r = start_bound_check(&FunctionSpec::preset("lin").unwrap(), 1, 15).unwrap();
        assert!(r.passed());
        assert!(start_bound_check(&FunctionSpec::preset("trig").unwrap(), 3, 15).is_err());
    }
}
