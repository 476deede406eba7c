//! Target functions and the coefficient sequences `a(n, k)` (lower) and
//! `b(n, k)` (upper) whose Bernstein forms `g_n`, `h_n` bracket the target.
//!
//! The shipped construction is the Nacu–Peres shift
//! `a(n, k) = f(k/n) - M/(4n)`, `b(n, k) = f(k/n) + M/(4n)` with
//! `M >= sup |f''|`. Any other scheme can be supplied through a coefficient
//! table file and is checked with [`validate_consistency`] before use.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::mixing::ExactRow;
use crate::numeric::{binomial, f64_to_rational, rational_pow, rational_to_f64};
use crate::oracle::{Check, OracleReport};

/// Number of grid points used to spot-check user-certified bounds.
pub const SPOT_CHECK_POINTS: usize = 1024;

const SPOT_CHECK_SLACK: f64 = 1e-12;

/// Which coefficient sequence an operation reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    /// `a(n, k)`, the lower sequence.
    Lower,
    /// `b(n, k)`, the upper sequence.
    Upper,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Lower => "lower",
            Side::Upper => "upper",
        })
    }
}

impl FromStr for Side {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lower" => Ok(Side::Lower),
            "upper" => Ok(Side::Upper),
            other => Err(Error::Config(format!(
                "unknown variant `{other}` (expected lower|upper)"
            ))),
        }
    }
}

/// The analytic form of a target function.
#[derive(Clone)]
pub enum Target {
    /// `c_0 + c_1 x + c_2 x^2 + ...` with exact rational coefficients.
    Polynomial(Vec<BigRational>),
    /// `offset + amplitude * sin(2 pi frequency x)`.
    Sinusoid {
        offset: f64,
        amplitude: f64,
        frequency: f64,
    },
    /// Arbitrary closure. No exact values and no series expansion.
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Target::Polynomial(c) => {
                let terms: Vec<String> = c.iter().map(|r| r.to_string()).collect();
                write!(f, "Polynomial[{}]", terms.join(", "))
            }
            Target::Sinusoid {
                offset,
                amplitude,
                frequency,
            } => {
                write!(f, "Sinusoid({offset} + {amplitude} sin(2pi {frequency} x))")
            }
            Target::Custom(_) => f.write_str("Custom"),
        }
    }
}

/// How the mixed coefficient `H_L(n, s)` behaves as a function of `1/n`.
///
/// For a polynomial target of degree `d` it is exactly a polynomial in `1/n`
/// of degree `max(d - 1, 1)`; for a sinusoid it is an entire function whose
/// high-order terms vanish quickly once `n` is past a frequency-dependent size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Expansion {
    /// Degree in `1/n` used by the interpolating polynomial.
    pub degree: usize,
    /// Whether that polynomial is exact.
    pub exact: bool,
    /// Smallest `n` from which the polynomial is accurate to rounding.
    pub from_degree: u64,
}

/// A target `f: [0, 1] -> (0, 1)` with certified range and curvature bounds.
#[derive(Debug, Clone)]
pub struct FunctionSpec {
    label: String,
    target: Target,
    poly_f64: Vec<f64>,
    second_deriv_bound: f64,
    second_deriv_exact: Option<BigRational>,
    f_min: f64,
    f_max: f64,
    f_min_exact: Option<BigRational>,
    f_max_exact: Option<BigRational>,
    np_window: u64,
}

impl FunctionSpec {
    /// Builds a spec from a target and user-certified bounds. The bounds are
    /// spot-checked on a [`SPOT_CHECK_POINTS`]-point grid.
    pub fn new(
        label: impl Into<String>,
        target: Target,
        second_deriv_bound: f64,
        f_min: f64,
        f_max: f64,
    ) -> Result<Self> {
        Self::build(label.into(), target, second_deriv_bound, None, f_min, f_max, None, None)
    }

    /// A polynomial target with exact coefficients and exact bounds, so that
    /// every Nacu–Peres coefficient is an exact rational.
    pub fn polynomial(
        label: impl Into<String>,
        coefficients: Vec<BigRational>,
        second_deriv_bound: BigRational,
        f_min: BigRational,
        f_max: BigRational,
    ) -> Result<Self> {
        Self::build(
            label.into(),
            Target::Polynomial(coefficients),
            rational_to_f64(&second_deriv_bound),
            Some(second_deriv_bound),
            rational_to_f64(&f_min),
            rational_to_f64(&f_max),
            Some(f_min),
            Some(f_max),
        )
    }

    /// `offset + amplitude sin(2 pi frequency x)`; bounds are derived.
    pub fn sinusoid(label: impl Into<String>, offset: f64, amplitude: f64, frequency: f64) -> Result<Self> {
        let omega = 2.0 * PI * frequency;
        let a = amplitude.abs();
        Self::new(
            label,
            Target::Sinusoid {
                offset,
                amplitude,
                frequency,
            },
            a * omega * omega,
            offset - a,
            offset + a,
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn build(
        label: String,
        target: Target,
        second_deriv_bound: f64,
        second_deriv_exact: Option<BigRational>,
        f_min: f64,
        f_max: f64,
        f_min_exact: Option<BigRational>,
        f_max_exact: Option<BigRational>,
    ) -> Result<Self> {
        let name = label.clone();
        let invalid = move |reason: String| Error::InvalidSpec {
            label: name.clone(),
            reason,
        };
        if label.is_empty() {
            return Err(invalid("empty label".into()));
        }
        if !second_deriv_bound.is_finite() || second_deriv_bound < 0.0 {
            return Err(invalid(format!(
                "second derivative bound {second_deriv_bound} must be finite and >= 0"
            )));
        }
        if !(f_min > 0.0 && f_min <= f_max && f_max < 1.0) {
            return Err(invalid(format!("need 0 < f_min <= f_max < 1, got [{f_min}, {f_max}]")));
        }
        let poly_f64 = match &target {
            Target::Polynomial(c) => c.iter().map(rational_to_f64).collect(),
            _ => Vec::new(),
        };
        let mut spec = FunctionSpec {
            label,
            target,
            poly_f64,
            second_deriv_bound,
            second_deriv_exact,
            f_min,
            f_max,
            f_min_exact,
            f_max_exact,
            np_window: 1,
        };
        for i in 0..SPOT_CHECK_POINTS {
            let p = i as f64 / (SPOT_CHECK_POINTS - 1) as f64;
            let v = spec.evaluate(p);
            if !v.is_finite() || v < f_min - SPOT_CHECK_SLACK || v > f_max + SPOT_CHECK_SLACK {
                return Err(invalid(format!(
                    "f({p}) = {v} outside certified range [{f_min}, {f_max}]"
                )));
            }
        }
        spec.np_window = spec.compute_np_window();
        Ok(spec)
    }

    /// Looks up a shipped preset: `const13`, `lin`, `quad` or `trig`.
    pub fn preset(label: &str) -> Result<Self> {
        let r = |n: i64, d: i64| BigRational::new(BigInt::from(n), BigInt::from(d));
        match label {
            "const13" => Self::polynomial(label, vec![r(1, 3)], r(0, 1), r(1, 3), r(1, 3)),
            "lin" => Self::polynomial(label, vec![r(1, 4), r(1, 2)], r(0, 1), r(1, 4), r(3, 4)),
            "quad" => Self::polynomial(label, vec![r(1, 4), r(0, 1), r(1, 8)], r(1, 4), r(1, 4), r(3, 8)),
            "trig" => Self::sinusoid(label, 0.5, 0.25, 1.0),
            other => Err(Error::Config(format!(
                "unknown preset `{other}` (expected one of {})",
                PRESETS.join(", ")
            ))),
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn target(&self) -> &Target {
        &self.target
    }

    /// `sup |f''|` as certified by the user.
    pub fn second_deriv_bound(&self) -> f64 {
        self.second_deriv_bound
    }

    pub fn f_min(&self) -> f64 {
        self.f_min
    }

    pub fn f_max(&self) -> f64 {
        self.f_max
    }

    /// Whether `f(k/n)` and the curvature bound are exact rationals.
    pub fn is_exact(&self) -> bool {
        matches!(self.target, Target::Polynomial(_)) && self.second_deriv_exact.is_some()
    }

    pub fn evaluate(&self, p: f64) -> f64 {
        match &self.target {
            Target::Polynomial(_) => self.poly_f64.iter().rev().fold(0.0, |acc, c| acc * p + c),
            Target::Sinusoid {
                offset,
                amplitude,
                frequency,
            } => offset + amplitude * (2.0 * PI * frequency * p).sin(),
            Target::Custom(f) => f(p),
        }
    }

    /// `out[j] = f((first + j) / n)`.
    pub(crate) fn evaluate_grid(&self, n: u64, first: u64, out: &mut [f64]) {
        match &self.target {
            Target::Sinusoid {
                offset,
                amplitude,
                frequency,
            } => {
                // Rotate (sin, cos) by one grid step, re-anchoring every 32 steps.
                let step = 2.0 * PI * frequency / n as f64;
                let (ds, dc) = step.sin_cos();
                let (mut s, mut c) = (0.0, 1.0);
                for (j, slot) in out.iter_mut().enumerate() {
                    if j % 32 == 0 {
                        (s, c) = (2.0 * PI * frequency * ((first + j as u64) as f64 / n as f64)).sin_cos();
                    } else {
                        (s, c) = (s * dc + c * ds, c * dc - s * ds);
                    }
                    *slot = offset + amplitude * s;
                }
            }
            _ => {
                for (j, slot) in out.iter_mut().enumerate() {
                    *slot = self.evaluate((first + j as u64) as f64 / n as f64);
                }
            }
        }
    }

    /// Exact value at a rational point, for polynomial targets.
    pub fn evaluate_exact(&self, p: &BigRational) -> Option<BigRational> {
        match &self.target {
            Target::Polynomial(c) => Some(c.iter().rev().fold(BigRational::zero(), |acc, ci| acc * p + ci)),
            _ => None,
        }
    }

    /// Behaviour of the mixed coefficients in `1/n`, if known.
    pub fn expansion(&self) -> Option<Expansion> {
        match &self.target {
            Target::Polynomial(c) => {
                let degree = c.len().saturating_sub(2).max(1);
                Some(Expansion {
                    degree,
                    exact: true,
                    from_degree: 1,
                })
            }
            Target::Sinusoid { frequency, .. } => {
                // The u^l coefficient is of order (w^2/8)^l / l! with w = 2 pi freq,
                // so from n = 64 freq^2 on, degree 10 leaves terms below 1e-16.
                let scale = (frequency * frequency).ceil().max(1.0) as u64;
                Some(Expansion {
                    degree: 10,
                    exact: false,
                    from_degree: 64 * scale,
                })
            }
            Target::Custom(_) => None,
        }
    }

    /// Smallest degree `n >= 1` at which the Nacu–Peres coefficients stay in `[0, 1]`.
    pub fn nacu_peres_window(&self) -> u64 {
        self.np_window
    }

    fn compute_np_window(&self) -> u64 {
        if self.second_deriv_bound == 0.0 {
            return 1;
        }
        let exact = match (&self.second_deriv_exact, &self.f_min_exact, &self.f_max_exact) {
            (Some(m), Some(lo), Some(hi)) => Some((m.clone(), lo.clone(), hi.clone())),
            _ => None,
        };
        let ok = |n: u64| -> bool {
            match &exact {
                Some((m, lo, hi)) => {
                    let shift = m / BigRational::from_integer(BigInt::from(4 * n));
                    lo - &shift >= BigRational::zero() && hi + &shift <= BigRational::one()
                }
                None => {
                    let shift = self.second_deriv_bound / (4.0 * n as f64);
                    self.f_min - shift >= 0.0 && self.f_max + shift <= 1.0
                }
            }
        };
        let margin = self.f_min.min(1.0 - self.f_max);
        let mut n = (self.second_deriv_bound / (4.0 * margin)).ceil().max(1.0) as u64;
        while n > 1 && ok(n - 1) {
            n -= 1;
        }
        while !ok(n) {
            n += 1;
        }
        n
    }
}

/// Labels accepted by [`FunctionSpec::preset`].
pub const PRESETS: [&str; 4] = ["const13", "lin", "quad", "trig"];

/// Smallest support start `k` of the truncation law for which every index
/// the estimator touches (`n >= k - 1`) has coefficients in `[0, 1]`:
/// `k = 1 + ceil(M / (4 min(f_min, 1 - f_max)))`, and `k = 1` when `M = 0`.
pub fn min_support_index(spec: &FunctionSpec) -> u64 {
    if spec.second_deriv_bound == 0.0 {
        1
    } else {
        spec.nacu_peres_window() + 1
    }
}

fn check_np_index(spec: &FunctionSpec, n: u64, k: u64) -> Result<()> {
    if n < spec.nacu_peres_window() || n == 0 || k > n {
        return Err(Error::CoefficientWindow {
            n,
            k,
            valid_from: spec.nacu_peres_window(),
            max_degree: None,
        });
    }
    Ok(())
}

/// `a(n, k) = f(k/n) - M/(4n)`.
pub fn np_lower_coeff(spec: &FunctionSpec, n: u64, k: u64) -> Result<f64> {
    check_np_index(spec, n, k)?;
    let v = spec.evaluate(k as f64 / n as f64) - spec.second_deriv_bound / (4.0 * n as f64);
    Ok(v.max(0.0))
}

/// `b(n, k) = f(k/n) + M/(4n)`.
pub fn np_upper_coeff(spec: &FunctionSpec, n: u64, k: u64) -> Result<f64> {
    check_np_index(spec, n, k)?;
    let v = spec.evaluate(k as f64 / n as f64) + spec.second_deriv_bound / (4.0 * n as f64);
    Ok(v.min(1.0))
}

/// Exact rational twin of [`np_lower_coeff`] / [`np_upper_coeff`]. For
/// targets without exact values this is the exact value of the double the
/// float path uses, so both paths see the same coefficients.
pub fn np_coeff_exact(spec: &FunctionSpec, side: Side, n: u64, k: u64) -> Result<BigRational> {
    check_np_index(spec, n, k)?;
    if let (true, Some(m)) = (spec.is_exact(), &spec.second_deriv_exact) {
        let p = BigRational::new(BigInt::from(k), BigInt::from(n));
        let f = spec.evaluate_exact(&p).expect("polynomial target");
        let shift = m / BigRational::from_integer(BigInt::from(4 * n));
        return Ok(match side {
            Side::Lower => f - shift,
            Side::Upper => f + shift,
        });
    }
    let v = match side {
        Side::Lower => np_lower_coeff(spec, n, k)?,
        Side::Upper => np_upper_coeff(spec, n, k)?,
    };
    Ok(f64_to_rational(v))
}

/// What an estimator built on one side of a scheme is guaranteed to satisfy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Guarantees {
    /// `psi >= 0` almost surely.
    pub nonnegative: bool,
    /// `psi <= 1` almost surely.
    pub at_most_one: bool,
}

/// A provider of lower and upper coefficient sequences.
///
/// Implementations must be immutable once built; they are shared across
/// worker threads.
pub trait CoefficientScheme: Send + Sync + fmt::Debug {
    fn label(&self) -> &str;

    /// Smallest degree for which both sequences are certified.
    fn valid_from(&self) -> u64;

    /// Largest degree available, if the scheme is finite.
    fn max_degree(&self) -> Option<u64> {
        None
    }

    fn coefficient(&self, side: Side, n: u64, k: u64) -> Result<f64>;

    fn coefficient_exact(&self, side: Side, n: u64, k: u64) -> Result<BigRational>;

    /// Fills `out[j]` with the coefficient at `(n, first + j)`.
    fn coefficient_row(&self, side: Side, n: u64, first: u64, out: &mut [f64]) -> Result<()> {
        for (j, slot) in out.iter_mut().enumerate() {
            *slot = self.coefficient(side, n, first + j as u64)?;
        }
        Ok(())
    }

    /// Bounds an estimator on `side` inherits from this scheme.
    fn guarantees(&self, side: Side) -> Guarantees;

    /// Smallest admissible support start of the truncation law.
    fn min_support_index(&self) -> u64 {
        self.valid_from() + 1
    }

    /// The target behind the scheme, when it is built from one.
    fn function_spec(&self) -> Option<&FunctionSpec> {
        None
    }

    fn lower(&self, n: u64, k: u64) -> Result<f64> {
        self.coefficient(Side::Lower, n, k)
    }

    fn upper(&self, n: u64, k: u64) -> Result<f64> {
        self.coefficient(Side::Upper, n, k)
    }

    /// `psi >= 0` is guaranteed for the lower-side estimator.
    fn certifies_lower_bound(&self) -> bool {
        self.guarantees(Side::Lower).nonnegative
    }

    /// `psi <= 1` is guaranteed for the lower-side estimator.
    fn certifies_upper_bound(&self) -> bool {
        self.guarantees(Side::Lower).at_most_one
    }

    /// The degree-`n` Bernstein polynomial `g_n` (lower) or `h_n` (upper).
    fn polynomial(&self, side: Side, n: u64) -> Result<BernsteinPolynomial> {
        let coefficients = (0..=n)
            .map(|k| self.coefficient(side, n, k))
            .collect::<Result<Vec<_>>>()?;
        BernsteinPolynomial::new(coefficients)
    }
}

fn window_error(scheme: &dyn CoefficientScheme, n: u64, k: u64) -> Error {
    Error::CoefficientWindow {
        n,
        k,
        valid_from: scheme.valid_from(),
        max_degree: scheme.max_degree(),
    }
}

/// The Nacu–Peres scheme `f(k/n) -/+ M/(4n)` for a target.
#[derive(Debug, Clone)]
pub struct NacuPeres {
    spec: FunctionSpec,
}

impl NacuPeres {
    pub fn new(spec: FunctionSpec) -> Self {
        Self { spec }
    }

    pub fn spec(&self) -> &FunctionSpec {
        &self.spec
    }
}

impl CoefficientScheme for NacuPeres {
    fn label(&self) -> &str {
        self.spec.label()
    }

    fn valid_from(&self) -> u64 {
        self.spec.nacu_peres_window()
    }

    fn coefficient(&self, side: Side, n: u64, k: u64) -> Result<f64> {
        match side {
            Side::Lower => np_lower_coeff(&self.spec, n, k),
            Side::Upper => np_upper_coeff(&self.spec, n, k),
        }
    }

    fn coefficient_exact(&self, side: Side, n: u64, k: u64) -> Result<BigRational> {
        np_coeff_exact(&self.spec, side, n, k)
    }

    fn coefficient_row(&self, side: Side, n: u64, first: u64, out: &mut [f64]) -> Result<()> {
        if out.is_empty() {
            return Ok(());
        }
        check_np_index(&self.spec, n, first + out.len() as u64 - 1)?;
        self.spec.evaluate_grid(n, first, out);
        let shift = self.spec.second_deriv_bound / (4.0 * n as f64);
        match side {
            Side::Lower => out.iter_mut().for_each(|v| *v = (*v - shift).max(0.0)),
            Side::Upper => out.iter_mut().for_each(|v| *v = (*v + shift).min(1.0)),
        }
        Ok(())
    }

    fn guarantees(&self, side: Side) -> Guarantees {
        // With zero curvature both sequences equal f(k/n); the estimator then
        // reduces to f(S_L / L) and both bounds hold.
        let flat = self.spec.second_deriv_bound() == 0.0;
        match side {
            Side::Lower => Guarantees {
                nonnegative: true,
                at_most_one: flat,
            },
            Side::Upper => Guarantees {
                nonnegative: flat,
                at_most_one: true,
            },
        }
    }

    fn min_support_index(&self) -> u64 {
        min_support_index(&self.spec)
    }

    fn function_spec(&self) -> Option<&FunctionSpec> {
        Some(&self.spec)
    }
}

/// `a(n, k) = lower`, `b(n, k) = upper` for every `n >= 0`.
#[derive(Debug, Clone)]
pub struct ConstantScheme {
    label: String,
    lower: BigRational,
    upper: BigRational,
    lower_f: f64,
    upper_f: f64,
}

impl ConstantScheme {
    pub fn new(label: impl Into<String>, lower: BigRational, upper: BigRational) -> Result<Self> {
        if lower.is_negative() || lower > upper || upper > BigRational::one() {
            return domain(format!("constant scheme needs 0 <= {lower} <= {upper} <= 1"));
        }
        Ok(Self {
            label: label.into(),
            lower_f: rational_to_f64(&lower),
            upper_f: rational_to_f64(&upper),
            lower,
            upper,
        })
    }
}

impl CoefficientScheme for ConstantScheme {
    fn label(&self) -> &str {
        &self.label
    }

    fn valid_from(&self) -> u64 {
        0
    }

    fn coefficient(&self, side: Side, n: u64, k: u64) -> Result<f64> {
        if k > n {
            return Err(window_error(self, n, k));
        }
        Ok(match side {
            Side::Lower => self.lower_f,
            Side::Upper => self.upper_f,
        })
    }

    fn coefficient_exact(&self, side: Side, n: u64, k: u64) -> Result<BigRational> {
        if k > n {
            return Err(window_error(self, n, k));
        }
        Ok(match side {
            Side::Lower => self.lower.clone(),
            Side::Upper => self.upper.clone(),
        })
    }

    fn guarantees(&self, _side: Side) -> Guarantees {
        Guarantees {
            nonnegative: true,
            at_most_one: true,
        }
    }

    fn min_support_index(&self) -> u64 {
        1
    }
}

/// A finite scheme read from a coefficient table (`n k a b` lines).
#[derive(Debug, Clone)]
pub struct TableScheme {
    label: String,
    n_lo: u64,
    lower: Vec<Vec<BigRational>>,
    upper: Vec<Vec<BigRational>>,
    lower_f: Vec<Vec<f64>>,
    upper_f: Vec<Vec<f64>>,
    lower_consistent: bool,
    upper_consistent: bool,
}

impl TableScheme {
    /// Parses a coefficient table. The result carries no guarantees until
    /// [`TableScheme::validated`] has checked it.
    pub fn parse(label: impl Into<String>, text: &str) -> Result<Self> {
        let mut entries: BTreeMap<(u64, u64), (BigRational, BigRational)> = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parse_err = |message: String| Error::Parse { line: line_no, message };
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 4 {
                return Err(parse_err(format!("expected `n k a b`, found {} fields", fields.len())));
            }
            let n: u64 = fields[0]
                .parse()
                .map_err(|_| parse_err(format!("bad degree `{}`", fields[0])))?;
            let k: u64 = fields[1]
                .parse()
                .map_err(|_| parse_err(format!("bad index `{}`", fields[1])))?;
            let a = parse_rational(fields[2]).map_err(parse_err)?;
            let b = parse_rational(fields[3]).map_err(parse_err)?;
            if k > n {
                return Err(parse_err(format!("index k={k} exceeds degree n={n}")));
            }
            if a.is_negative() || a > b || b > BigRational::one() {
                return Err(parse_err(format!("need 0 <= a <= b <= 1, got a={a}, b={b}")));
            }
            if entries.insert((n, k), (a, b)).is_some() {
                return Err(parse_err(format!("duplicate entry for (n={n}, k={k})")));
            }
        }
        let (&(n_lo, _), _) = entries.iter().next().ok_or_else(|| Error::Parse {
            line: 0,
            message: "empty table".into(),
        })?;
        let n_hi = entries.keys().map(|&(n, _)| n).max().unwrap_or(n_lo);
        let mut lower = Vec::new();
        let mut upper = Vec::new();
        for n in n_lo..=n_hi {
            let mut row_a = Vec::with_capacity(n as usize + 1);
            let mut row_b = Vec::with_capacity(n as usize + 1);
            for k in 0..=n {
                let (a, b) = entries.remove(&(n, k)).ok_or_else(|| Error::Parse {
                    line: 0,
                    message: format!("missing entry for (n={n}, k={k}); rows must be complete and contiguous"),
                })?;
                row_a.push(a);
                row_b.push(b);
            }
            lower.push(row_a);
            upper.push(row_b);
        }
        let to_f =
            |rows: &Vec<Vec<BigRational>>| rows.iter().map(|r| r.iter().map(rational_to_f64).collect()).collect();
        Ok(Self {
            label: label.into(),
            n_lo,
            lower_f: to_f(&lower),
            upper_f: to_f(&upper),
            lower,
            upper,
            lower_consistent: false,
            upper_consistent: false,
        })
    }

    /// Runs [`validate_consistency`] over the whole table and records which
    /// sides passed.
    pub fn validated(mut self) -> (Self, OracleReport) {
        let n_max = self.n_lo + self.lower.len() as u64 - 1;
        let report = validate_consistency(&self, n_max);
        let ok = |name: &str| report.check(name).map(|c| c.pass).unwrap_or(false);
        let bounds = ok(CHECK_BOUNDS);
        self.lower_consistent = bounds && ok(CHECK_LOWER);
        self.upper_consistent = bounds && ok(CHECK_UPPER);
        (self, report)
    }

    fn index(&self, n: u64, k: u64) -> Result<(usize, usize)> {
        if n < self.n_lo || n - self.n_lo >= self.lower.len() as u64 || k > n {
            return Err(window_error(self, n, k));
        }
        Ok(((n - self.n_lo) as usize, k as usize))
    }
}

fn parse_rational(s: &str) -> std::result::Result<BigRational, String> {
    BigRational::from_str(s).map_err(|_| format!("bad rational `{s}` (expected p/q)"))
}

impl CoefficientScheme for TableScheme {
    fn label(&self) -> &str {
        &self.label
    }

    fn valid_from(&self) -> u64 {
        self.n_lo
    }

    fn max_degree(&self) -> Option<u64> {
        Some(self.n_lo + self.lower.len() as u64 - 1)
    }

    fn coefficient(&self, side: Side, n: u64, k: u64) -> Result<f64> {
        let (r, c) = self.index(n, k)?;
        Ok(match side {
            Side::Lower => self.lower_f[r][c],
            Side::Upper => self.upper_f[r][c],
        })
    }

    fn coefficient_exact(&self, side: Side, n: u64, k: u64) -> Result<BigRational> {
        let (r, c) = self.index(n, k)?;
        Ok(match side {
            Side::Lower => self.lower[r][c].clone(),
            Side::Upper => self.upper[r][c].clone(),
        })
    }

    fn guarantees(&self, side: Side) -> Guarantees {
        match side {
            Side::Lower => Guarantees {
                nonnegative: self.lower_consistent,
                at_most_one: false,
            },
            Side::Upper => Guarantees {
                nonnegative: false,
                at_most_one: self.upper_consistent,
            },
        }
    }
}

/// Writes rows `n_lo..=n_hi` of a scheme in the coefficient-table format.
pub fn coefficient_table(scheme: &dyn CoefficientScheme, n_lo: u64, n_hi: u64) -> Result<String> {
    let mut out = format!("# coefficient table for `{}`: n k a b\n", scheme.label());
    for n in n_lo..=n_hi {
        for k in 0..=n {
            let a = scheme.coefficient_exact(Side::Lower, n, k)?;
            let b = scheme.coefficient_exact(Side::Upper, n, k)?;
            out.push_str(&format!("{n} {k} {} {}\n", fmt_rational(&a), fmt_rational(&b)));
        }
    }
    Ok(out)
}

fn fmt_rational(r: &BigRational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

/// Coefficients of a Bernstein-form polynomial `sum_k C(n,k) c_k x^k (1-x)^(n-k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BernsteinPolynomial {
    coefficients: Vec<f64>,
}

impl BernsteinPolynomial {
    pub fn new(coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.is_empty() {
            return domain("Bernstein polynomial needs at least one coefficient");
        }
        if let Some(c) = coefficients.iter().find(|c| !(0.0..=1.0).contains(*c)) {
            return domain(format!("Bernstein coefficient {c} outside [0, 1]"));
        }
        Ok(Self { coefficients })
    }

    pub fn degree(&self) -> u64 {
        self.coefficients.len() as u64 - 1
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    /// Evaluates at `x` by de Casteljau's algorithm.
    pub fn eval(&self, x: f64) -> f64 {
        bernstein_eval(self, x)
    }
}

/// Evaluates a Bernstein-form polynomial at `x in [0, 1]`. Every step is a
/// convex combination, so the result lies in `[min c, max c]`.
pub fn bernstein_eval(poly: &BernsteinPolynomial, x: f64) -> f64 {
    let mut work = poly.coefficients.clone();
    let y = 1.0 - x;
    for r in 1..work.len() {
        for i in 0..work.len() - r {
            work[i] = y * work[i] + x * work[i + 1];
        }
    }
    let (lo, hi) = poly
        .coefficients
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &c| {
            (lo.min(c), hi.max(c))
        });
    work[0].clamp(lo, hi)
}

/// Exact Bernstein evaluation `sum_k C(n,k) c_k x^k (1-x)^(n-k)`.
pub fn bernstein_eval_exact(coefficients: &[BigRational], x: &BigRational) -> BigRational {
    let n = coefficients.len() as u64 - 1;
    let y = BigRational::one() - x;
    coefficients
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let k = k as u64;
            BigRational::from_integer(BigInt::from(binomial(n, k))) * c * rational_pow(x, k) * rational_pow(&y, n - k)
        })
        .fold(BigRational::zero(), |acc, t| acc + t)
}

pub(crate) const CHECK_BOUNDS: &str = "coefficient-bounds";
pub(crate) const CHECK_LOWER: &str = "lower-consistency";
pub(crate) const CHECK_UPPER: &str = "upper-consistency";

/// Exhaustively checks, in exact arithmetic, that
/// `0 <= a(n,k) <= b(n,k) <= 1`, `a(n,k) >= H_n(m,k)` and the mirrored
/// `b(n,k) <= sum_i w_i b(m,i)` for all `valid_from <= m <= n <= n_max`.
/// Violations are reported, not raised.
pub fn validate_consistency(scheme: &dyn CoefficientScheme, n_max: u64) -> OracleReport {
    let lo = scheme.valid_from();
    let n_max = scheme.max_degree().map_or(n_max, |m| m.min(n_max));
    let scope = format!("{lo} <= m <= n <= {n_max}, 0 <= k <= n");
    let mut bounds = Check::inequality(CHECK_BOUNDS, format!("{lo} <= n <= {n_max}, 0 <= k <= n"));
    let mut lower = Check::inequality(CHECK_LOWER, scope.clone());
    let mut upper = Check::inequality(CHECK_UPPER, scope);

    let mut rows: Vec<Option<(ExactRow, ExactRow)>> = Vec::new();
    for n in lo..=n_max {
        let row = ExactRow::from_scheme(scheme, Side::Lower, n)
            .and_then(|a| Ok((a, ExactRow::from_scheme(scheme, Side::Upper, n)?)));
        match row {
            Ok((a, b)) => {
                for k in 0..=n as usize {
                    let ak = a.value(k);
                    let bk = b.value(k);
                    let slack = [ak.clone(), &bk - &ak, BigRational::one() - &bk]
                        .into_iter()
                        .min()
                        .expect("three slacks");
                    bounds.record(rational_to_f64(&slack), || format!("n={n}, k={k}"));
                }
                rows.push(Some((a, b)));
            }
            Err(e) => {
                bounds.record(f64::NEG_INFINITY, || format!("n={n}: {e}"));
                rows.push(None);
            }
        }
    }

    for n in lo..=n_max {
        let Some((an, bn)) = &rows[(n - lo) as usize] else {
            continue;
        };
        for m in lo..=n {
            let Some((am, bm)) = &rows[(m - lo) as usize] else {
                continue;
            };
            for k in 0..=n {
                let ck = BigInt::from(binomial(n, k));
                let mix_a = am.weighted_mixture(n, k);
                let mix_b = bm.weighted_mixture(n, k);
                // a(n,k) >= sum_i C(n-m,k-i) C(m,i) a(m,i) / C(n,k)
                let lhs_a = an.numer(k as usize) * &ck * am.denom();
                let rhs_a = &mix_a * an.denom();
                let den_a = an.denom() * am.denom() * &ck;
                lower.record(crate::numeric::ratio_to_f64(&(lhs_a - rhs_a), &den_a), || {
                    format!("n={n}, m={m}, k={k}")
                });
                let lhs_b = bn.numer(k as usize) * &ck * bm.denom();
                let rhs_b = &mix_b * bn.denom();
                let den_b = bn.denom() * bm.denom() * &ck;
                upper.record(crate::numeric::ratio_to_f64(&(rhs_b - lhs_b), &den_b), || {
                    format!("n={n}, m={m}, k={k}")
                });
            }
        }
    }
    OracleReport {
        checks: vec![bounds.finish(), lower.finish(), upper.finish()],
    }
}
