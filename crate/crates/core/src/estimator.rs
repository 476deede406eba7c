//! The debiased estimator
//!
//! `psi(L, S) = H_L(k-1, S) + sum_{n=k}^{L} (H_L(n, S) - H_L(n-1, S)) / P(L >= n)`,
//!
//! its coin sources, factory coins and seeded replicate runs.
//!
//! Since `P(L >= k) = 1` the first two terms telescope, and with
//! `c = H_L(L, S) = a(L, S)` the estimator is evaluated as
//!
//! `psi = c + sum_{n=k}^{L-1} (H_L(n, S) - c) (u_n - u_{n+1})`, `u_n = 1 / P(L >= n)`,
//!
//! which never touches index `k - 1` and has no large cancelling terms.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use rand::distr::{Bernoulli, Distribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Binomial;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::approx::{CoefficientScheme, FunctionSpec, Guarantees, NacuPeres, Side};
use crate::error::{domain, Error, Result};
use crate::mixing::hyper_row;
use crate::numeric::CompensatedSum;
use crate::series::{interpolate, lobatto, TailTables};
use crate::truncation::TruncationLaw;

/// Above this many coins a request is served by one binomial draw.
const BULK_COINS: u64 = 4096;

/// Largest `L` evaluated by the plain `O(L^2)` sum when no interpolation plan exists.
pub const DIRECT_LIMIT: u64 = 1 << 16;

/// Interpolation past `n0` in `w = n0 / n`.
#[derive(Debug)]
struct Plan {
    n0: u64,
    degree: usize,
    /// Nodes used once `L` exceeds `16 n0`.
    cluster: Vec<u64>,
    tables: TailTables,
}

impl Plan {
    fn new(spec: &FunctionSpec, law: &TruncationLaw) -> Option<Self> {
        let exp = spec.expansion()?;
        let n0 = exp.from_degree.max(law.k());
        let degree = exp.degree;
        let cluster = nodes_for(n0, lobatto(1.0 / 16.0, 1.0, degree))?;
        Some(Self {
            n0,
            degree,
            cluster,
            tables: TailTables::new(law, n0, degree),
        })
    }

    /// Below this `L` the direct sum is used throughout.
    fn direct_below(&self) -> u64 {
        self.n0 + 8 * (self.degree as u64 + 1)
    }
}

/// Integer subsample sizes for interpolation nodes `w`; `None` on collisions.
fn nodes_for(n0: u64, ws: Vec<f64>) -> Option<Vec<u64>> {
    let nodes: Vec<u64> = ws.iter().map(|w| (n0 as f64 / w).round() as u64).collect();
    nodes.windows(2).all(|p| p[0] < p[1]).then_some(nodes)
}

/// A coefficient scheme, a truncation law and the side the estimator reads.
#[derive(Debug, Clone)]
pub struct EstimatorConfig {
    scheme: Arc<dyn CoefficientScheme>,
    law: Arc<TruncationLaw>,
    variant: Side,
    plan: Option<Arc<Plan>>,
}

impl EstimatorConfig {
    /// Checks `k >= min_support_index` and that the scheme certifies the
    /// variant's bound (`psi >= 0` for lower, `psi <= 1` for upper).
    pub fn new(scheme: Arc<dyn CoefficientScheme>, law: TruncationLaw, variant: Side) -> Result<Self> {
        let min_k = scheme.min_support_index();
        if law.k() < min_k {
            return Err(Error::Config(format!(
                "support start k={} below the minimum {min_k} for scheme `{}`",
                law.k(),
                scheme.label()
            )));
        }
        let g = scheme.guarantees(variant);
        let certified = match variant {
            Side::Lower => g.nonnegative,
            Side::Upper => g.at_most_one,
        };
        if !certified {
            return Err(Error::Certification(format!(
                "scheme `{}` is not certified consistent on the {variant} side",
                scheme.label()
            )));
        }
        let plan = scheme
            .function_spec()
            .and_then(|spec| Plan::new(spec, &law))
            .map(Arc::new);
        Ok(Self {
            scheme,
            law: Arc::new(law),
            variant,
            plan,
        })
    }

    /// Nacu–Peres scheme for a preset; `k = None` picks the minimum support index.
    pub fn preset(label: &str, lambda: f64, k: Option<u64>, variant: Side) -> Result<Self> {
        let scheme = NacuPeres::new(FunctionSpec::preset(label)?);
        let k = k.unwrap_or_else(|| scheme.min_support_index());
        Self::new(Arc::new(scheme), TruncationLaw::new(lambda, k)?, variant)
    }

    pub fn scheme(&self) -> &dyn CoefficientScheme {
        self.scheme.as_ref()
    }

    pub fn law(&self) -> &TruncationLaw {
        &self.law
    }

    pub fn variant(&self) -> Side {
        self.variant
    }

    /// Bounds every draw of this configuration satisfies.
    pub fn certification(&self) -> Guarantees {
        self.scheme.guarantees(self.variant)
    }

    fn check_args(&self, l: u64, s: u64) -> Result<()> {
        if l < self.law.k() || s > l {
            return domain(format!(
                "psi needs L >= k = {} and S <= L, got L={l}, S={s}",
                self.law.k()
            ));
        }
        if let Some(max) = self.scheme.max_degree() {
            if l > max {
                return Err(Error::CoefficientWindow {
                    n: l,
                    k: s,
                    valid_from: self.scheme.valid_from(),
                    max_degree: Some(max),
                });
            }
        }
        Ok(())
    }

    /// `psi(L, S)`; pure and deterministic.
    pub fn psi_value(&self, l: u64, s: u64) -> Result<f64> {
        self.check_args(l, s)?;
        let c = self.scheme.coefficient(self.variant, l, s)?;
        match &self.plan {
            Some(plan) if l >= plan.direct_below() => {
                let head = self.direct_sum(self.law.k(), plan.n0, l, s, c)?;
                Ok(c + head + self.interpolated_tail(plan, l, s, c)?)
            }
            Some(_) => Ok(c + self.direct_sum(self.law.k(), l, l, s, c)?),
            None if l <= DIRECT_LIMIT => Ok(c + self.direct_sum(self.law.k(), l, l, s, c)?),
            None => Err(Error::EvaluationLimit(format!(
                "L={l} exceeds {DIRECT_LIMIT} and scheme `{}` has no large-L expansion",
                self.scheme.label()
            ))),
        }
    }

    /// `psi(L, S)` by the plain sum over every `n`, with no interpolation.
    /// Cost grows like `L^1.5`; meant for cross-checks.
    pub fn psi_value_direct(&self, l: u64, s: u64) -> Result<f64> {
        self.check_args(l, s)?;
        let c = self.scheme.coefficient(self.variant, l, s)?;
        Ok(c + self.direct_sum(self.law.k(), l, l, s, c)?)
    }

    /// `H_L(n, S) - c`.
    fn deviation(&self, n: u64, l: u64, s: u64, c: f64, buf: &mut Vec<f64>) -> Result<f64> {
        let (first, weights) = hyper_row(l, n, s);
        buf.resize(weights.len(), 0.0);
        self.scheme.coefficient_row(self.variant, n, first, buf)?;
        let sum: CompensatedSum = weights.iter().zip(buf.iter()).map(|(w, a)| w * (a - c)).collect();
        Ok(sum.value())
    }

    /// `sum_{from <= n < to} (H_L(n, S) - c) Delta_n`.
    fn direct_sum(&self, from: u64, to: u64, l: u64, s: u64, c: f64) -> Result<f64> {
        let mut acc = CompensatedSum::new();
        let mut buf = Vec::new();
        for n in from..to {
            let d = self.deviation(n, l, s, c, &mut buf)?;
            acc.add(d * self.law.delta(n));
        }
        Ok(acc.value())
    }

    fn interpolated_tail(&self, plan: &Plan, l: u64, s: u64, c: f64) -> Result<f64> {
        let n0 = plan.n0;
        let nodes = if l > 16 * n0 {
            let mut nodes = plan.cluster.clone();
            nodes.push(l);
            nodes
        } else {
            match nodes_for(n0, lobatto(n0 as f64 / l as f64, 1.0, plan.degree + 1)) {
                Some(nodes) => nodes,
                None => return self.direct_sum(n0, l, l, s, c),
            }
        };
        let mut buf = Vec::new();
        let mut xs = Vec::with_capacity(nodes.len());
        let mut ys = Vec::with_capacity(nodes.len());
        for &n in &nodes {
            xs.push(n0 as f64 / n as f64);
            ys.push(if n == l {
                0.0
            } else {
                self.deviation(n, l, s, c, &mut buf)?
            });
        }
        let beta = interpolate(&xs, &ys);
        let g = plan.tables.weights(&self.law, l);
        let tail: CompensatedSum = beta[1..].iter().zip(&g).map(|(b, g)| b * g).collect();
        Ok(tail.value())
    }
}

/// Free-function form of [`EstimatorConfig::psi_value`].
pub fn psi_value(config: &EstimatorConfig, l: u64, s: u64) -> Result<f64> {
    config.psi_value(l, s)
}

/// A stream of x-coins.
pub trait CoinSource {
    fn next_coin(&mut self) -> Result<bool>;

    /// Coins drawn so far.
    fn consumed(&self) -> u64;

    /// Draws `count` coins and returns how many came up heads.
    fn take(&mut self, count: u64) -> Result<u64> {
        let mut heads = 0;
        for _ in 0..count {
            heads += self.next_coin()? as u64;
        }
        Ok(heads)
    }
}

/// Seeded Bernoulli(x) coins.
#[derive(Debug, Clone)]
pub struct RngCoins {
    rng: ChaCha8Rng,
    x: f64,
    coin: Bernoulli,
    consumed: u64,
}

impl RngCoins {
    pub fn new(x: f64, rng: ChaCha8Rng) -> Result<Self> {
        let coin = Bernoulli::new(x).map_err(|_| Error::Domain(format!("coin probability {x} outside [0, 1]")))?;
        Ok(Self {
            rng,
            x,
            coin,
            consumed: 0,
        })
    }
}

impl CoinSource for RngCoins {
    fn next_coin(&mut self) -> Result<bool> {
        self.consumed += 1;
        Ok(self.coin.sample(&mut self.rng))
    }

    fn consumed(&self) -> u64 {
        self.consumed
    }

    fn take(&mut self, count: u64) -> Result<u64> {
        if count <= BULK_COINS {
            let mut heads = 0;
            for _ in 0..count {
                heads += self.coin.sample(&mut self.rng) as u64;
            }
            self.consumed += count;
            return Ok(heads);
        }
        let binom = Binomial::new(count, self.x).map_err(|e| Error::Domain(e.to_string()))?;
        self.consumed += count;
        Ok(binom.sample(&mut self.rng))
    }
}

/// Coins replayed from a recorded bit sequence.
#[derive(Debug, Clone, Default)]
pub struct ReplayCoins {
    bits: Vec<bool>,
    pos: usize,
}

impl ReplayCoins {
    pub fn new(bits: Vec<bool>) -> Self {
        Self { bits, pos: 0 }
    }

    /// Parses ASCII `0`/`1` characters; whitespace, line breaks and lines
    /// starting with `#` are ignored, so factory output replays as is.
    pub fn parse(text: &str) -> Result<Self> {
        let mut bits = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim_start().starts_with('#') {
                continue;
            }
            for ch in line.chars() {
                match ch {
                    '0' => bits.push(false),
                    '1' => bits.push(true),
                    c if c.is_whitespace() => {}
                    c => {
                        return Err(Error::Parse {
                            line: idx + 1,
                            message: format!("unexpected character {c:?} in coin file"),
                        })
                    }
                }
            }
        }
        Ok(Self::new(bits))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn remaining(&self) -> usize {
        self.bits.len() - self.pos
    }
}

impl CoinSource for ReplayCoins {
    fn next_coin(&mut self) -> Result<bool> {
        let bit = *self.bits.get(self.pos).ok_or(Error::ReplayExhausted {
            consumed: self.pos as u64,
            requested: 1,
        })?;
        self.pos += 1;
        Ok(bit)
    }

    fn consumed(&self) -> u64 {
        self.pos as u64
    }

    fn take(&mut self, count: u64) -> Result<u64> {
        if (self.remaining() as u64) < count {
            return Err(Error::ReplayExhausted {
                consumed: self.pos as u64,
                requested: count,
            });
        }
        let end = self.pos + count as usize;
        let heads = self.bits[self.pos..end].iter().filter(|&&b| b).count() as u64;
        self.pos = end;
        Ok(heads)
    }
}

/// One draw of the estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateOutcome {
    pub psi: f64,
    #[serde(rename = "L")]
    pub l: u64,
    #[serde(rename = "S")]
    pub s: u64,
    pub coins_used: u64,
    pub lower_certified: bool,
    pub upper_certified: bool,
}

/// Draws `L` from `u`, then exactly `L` coins, and evaluates `psi(L, S_L)`.
pub fn draw(config: &EstimatorConfig, coins: &mut dyn CoinSource, u: f64) -> Result<EstimateOutcome> {
    let l = config.law.sample(u)?;
    let before = coins.consumed();
    let s = coins.take(l)?;
    let psi = config.psi_value(l, s)?;
    let g = config.certification();
    Ok(EstimateOutcome {
        psi,
        l,
        s,
        coins_used: coins.consumed() - before,
        lower_certified: g.nonnegative,
        upper_certified: g.at_most_one,
    })
}

/// An f(x)-coin: heads iff `u_flip < psi`. Needs `0 <= psi <= 1` to be certified.
pub fn factory_coin(config: &EstimatorConfig, coins: &mut dyn CoinSource, u_l: f64, u_flip: f64) -> Result<bool> {
    let g = config.certification();
    if !(g.nonnegative && g.at_most_one) {
        return Err(Error::Certification(format!(
            "scheme `{}` does not certify 0 <= psi <= 1 on the {} side; a coin flipped with psi would be biased",
            config.scheme.label(),
            config.variant
        )));
    }
    Ok(u_flip < draw(config, coins, u_l)?.psi)
}

/// Independent random streams of one replicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Truncation = 0,
    Coins = 1,
    Flip = 2,
}

/// The generator for `(seed, rep, stream)`; independent of scheduling.
pub fn stream_rng(seed: u64, rep: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep.wrapping_mul(3).wrapping_add(stream as u64));
    rng
}

/// Per-draw record of a replicate run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrawRecord {
    pub rep: u64,
    #[serde(rename = "L")]
    pub l: u64,
    #[serde(rename = "S")]
    pub s: u64,
    pub psi: f64,
    pub coins: u64,
}

/// Count of draws with `2^b <= L < 2^(b+1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: u64,
    pub hi: u64,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateSummary {
    pub reps: u64,
    pub mean: f64,
    pub se: f64,
    pub variance: f64,
    pub min_psi: f64,
    pub max_psi: f64,
    pub mean_coins: f64,
    pub total_coins: u128,
    /// Draws with `psi > 1`; possible when only the lower bound is certified.
    pub above_one: u64,
    pub below_zero: u64,
    pub lower_certified: bool,
    pub upper_certified: bool,
    pub l_histogram: Vec<HistogramBin>,
}

impl ReplicateSummary {
    /// Summarises draws in the given order, so the result does not depend
    /// on how the draws were scheduled.
    pub fn from_records(records: &[DrawRecord], certification: Guarantees) -> Self {
        let n = records.len() as f64;
        let mean = records.iter().map(|r| r.psi).collect::<CompensatedSum>().value() / n;
        let variance = if records.len() > 1 {
            records
                .iter()
                .map(|r| (r.psi - mean) * (r.psi - mean))
                .collect::<CompensatedSum>()
                .value()
                / (n - 1.0)
        } else {
            0.0
        };
        let mut bins: BTreeMap<u32, u64> = BTreeMap::new();
        for r in records {
            *bins.entry(63 - r.l.max(1).leading_zeros()).or_default() += 1;
        }
        let total_coins: u128 = records.iter().map(|r| r.coins as u128).sum();
        Self {
            reps: records.len() as u64,
            mean,
            se: (variance / n).sqrt(),
            variance,
            min_psi: records.iter().map(|r| r.psi).fold(f64::INFINITY, f64::min),
            max_psi: records.iter().map(|r| r.psi).fold(f64::NEG_INFINITY, f64::max),
            mean_coins: total_coins as f64 / n,
            total_coins,
            above_one: records.iter().filter(|r| r.psi > 1.0).count() as u64,
            below_zero: records.iter().filter(|r| r.psi < 0.0).count() as u64,
            lower_certified: certification.nonnegative,
            upper_certified: certification.at_most_one,
            l_histogram: bins
                .into_iter()
                .map(|(b, count)| HistogramBin {
                    lo: 1 << b,
                    hi: (1u64 << b).saturating_mul(2),
                    count,
                })
                .collect(),
        }
    }
}

/// Records and summary of a replicate run.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateRun {
    pub records: Vec<DrawRecord>,
    pub summary: ReplicateSummary,
}

fn one_replicate(config: &EstimatorConfig, x: f64, seed: u64, rep: u64) -> Result<DrawRecord> {
    let u = stream_rng(seed, rep, Stream::Truncation).random::<f64>();
    let mut coins = RngCoins::new(x, stream_rng(seed, rep, Stream::Coins))?;
    let out = draw(config, &mut coins, u)?;
    Ok(DrawRecord {
        rep,
        l: out.l,
        s: out.s,
        psi: out.psi,
        coins: out.coins_used,
    })
}

/// Runs `reps` seeded draws on `workers` threads (`None`: rayon's default).
/// Output is identical for any worker count.
pub fn run_replicates_with(
    config: &EstimatorConfig,
    x: f64,
    reps: u64,
    seed: u64,
    workers: Option<usize>,
) -> Result<ReplicateRun> {
    if !(0.0..=1.0).contains(&x) {
        return domain(format!("coin probability x={x} outside [0, 1]"));
    }
    if reps == 0 {
        return domain("reps must be >= 1");
    }
    let records = in_pool(workers, || {
        (0..reps)
            .into_par_iter()
            .map(|r| one_replicate(config, x, seed, r))
            .collect::<Result<Vec<_>>>()
    })??;
    let summary = ReplicateSummary::from_records(&records, config.certification());
    Ok(ReplicateRun { records, summary })
}

/// `count` seeded f(x)-coins; coin `i` uses the streams of replicate `i`.
pub fn factory_coins(
    config: &EstimatorConfig,
    x: f64,
    count: u64,
    seed: u64,
    workers: Option<usize>,
) -> Result<Vec<bool>> {
    if !(0.0..=1.0).contains(&x) {
        return domain(format!("coin probability x={x} outside [0, 1]"));
    }
    in_pool(workers, || {
        (0..count)
            .into_par_iter()
            .map(|i| {
                let u_l = stream_rng(seed, i, Stream::Truncation).random::<f64>();
                let u_flip = stream_rng(seed, i, Stream::Flip).random::<f64>();
                let mut coins = RngCoins::new(x, stream_rng(seed, i, Stream::Coins))?;
                factory_coin(config, &mut coins, u_l, u_flip)
            })
            .collect::<Result<Vec<_>>>()
    })?
}

fn in_pool<T: Send>(workers: Option<usize>, work: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        Some(w) => Ok(rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {w} workers: {e}")))?
            .install(work)),
        None => Ok(work()),
    }
}

/// Summary of `reps` seeded draws at coin probability `x`.
pub fn run_replicates(config: &EstimatorConfig, x: f64, reps: u64, seed: u64) -> Result<ReplicateSummary> {
    Ok(run_replicates_with(config, x, reps, seed, None)?.summary)
}
