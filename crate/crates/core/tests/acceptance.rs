//! Acceptance criteria. Each test prints one `criterion N: PASS|FAIL` line to
//! stderr (bypassing output capture) and then asserts.

use std::io::Write;
use std::path::PathBuf;
use std::process::Command;
use std::time::{Duration, Instant};

use bernoulli_debias::approx::{validate_consistency, CoefficientScheme, FunctionSpec, NacuPeres, Side, TableScheme};
use bernoulli_debias::estimator::{
    draw, factory_coins, run_replicates, run_replicates_with, EstimatorConfig, ReplayCoins,
};
use bernoulli_debias::oracle::{
    conditional_mean_H, identity_scan, nonneg_scan, start_bound_check, truncated_expectation_bracket,
};
use bernoulli_debias::truncation::{hurwitz_zeta, TruncationLaw};
use num_bigint::BigInt;
use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn report(n: u32, title: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "criterion {n:>2}: {verdict}  {title}  [{detail}]");
    assert!(pass, "criterion {n} failed: {detail}");
}

fn preset(label: &str, lambda: f64) -> EstimatorConfig {
    EstimatorConfig::preset(label, lambda, None, Side::Lower).unwrap()
}

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

#[test]
fn criterion_01_combinatorial_identity() {
    let t = Instant::now();
    let r = identity_scan(30).unwrap();
    let c = &r.checks[0];
    let elapsed = t.elapsed();
    let pass = r.passed() && c.worst_residual == 0.0 && c.cases > 0 && elapsed < Duration::from_secs(10);
    report(
        1,
        "combinatorial identity exact for n <= 30",
        pass,
        &format!("{} cases, max |residual| {}, {elapsed:.2?}", c.cases, c.worst_residual),
    );
}

#[test]
fn criterion_02_conditional_mean_identity() {
    let t = Instant::now();
    let xs: Vec<BigRational> = [(0, 1), (1, 4), (1, 2), (3, 4), (1, 1)]
        .iter()
        .map(|&(p, q)| BigRational::new(BigInt::from(p), BigInt::from(q)))
        .collect();
    let (mut cases, mut mismatches) = (0u64, Vec::new());
    for label in ["const13", "lin", "quad", "trig"] {
        let scheme = NacuPeres::new(FunctionSpec::preset(label).unwrap());
        for side in [Side::Lower, Side::Upper] {
            for l in scheme.valid_from()..=12 {
                for n in scheme.valid_from()..=l {
                    for x in &xs {
                        let (lhs, rhs) = conditional_mean_H(&scheme, side, l, n, x).unwrap();
                        cases += 1;
                        if lhs != rhs {
                            mismatches.push(format!("{label} {side} L={l} n={n} x={x}"));
                        }
                    }
                }
            }
        }
    }
    let elapsed = t.elapsed();
    let pass = mismatches.is_empty() && elapsed < Duration::from_secs(60);
    report(
        2,
        "E[H_L(n,S) | L] = g_n(x) exactly, L <= 12",
        pass,
        &format!(
            "{cases} cases, {} mismatches {:?}, {elapsed:.2?}",
            mismatches.len(),
            mismatches.first()
        ),
    );
}

#[test]
fn criterion_03_consistency_and_nonnegativity() {
    let mut details = Vec::new();
    let mut pass = true;
    for label in ["quad", "trig"] {
        let scheme = NacuPeres::new(FunctionSpec::preset(label).unwrap());
        let consistency = validate_consistency(&scheme, 25);
        let nonneg = nonneg_scan(&scheme, 25).unwrap();
        let violations: u64 = consistency
            .checks
            .iter()
            .chain(&nonneg.checks)
            .map(|c| c.violations)
            .sum();
        pass &= violations == 0 && consistency.passed() && nonneg.passed();
        details.push(format!("{label}: {violations} violations"));
    }
    let text = std::fs::read_to_string(data("corrupted.tbl")).unwrap();
    let (table, consistency) = TableScheme::parse("corrupted", &text).unwrap().validated();
    let nonneg = nonneg_scan(&table, 25).unwrap();
    let flagged: u64 = consistency
        .checks
        .iter()
        .chain(&nonneg.checks)
        .map(|c| c.violations)
        .sum();
    pass &= flagged > 0 && !consistency.passed() && !table.certifies_lower_bound();
    details.push(format!("corrupted table: {flagged} violations flagged"));
    report(
        3,
        "consistency and increment signs, n <= 25, exact",
        pass,
        &details.join("; "),
    );
}

#[test]
fn criterion_04_psi_nonnegative_over_draws() {
    let mut details = Vec::new();
    let mut pass = true;
    for label in ["quad", "trig"] {
        for lambda in [1.5, 2.0] {
            let cfg = preset(label, lambda);
            let s = run_replicates(&cfg, 0.3, 1_000_000, 4).unwrap();
            pass &= s.min_psi >= 0.0 && s.below_zero == 0;
            details.push(format!("{label} lambda={lambda}: min psi {:.4}", s.min_psi));
        }
    }
    report(4, "min psi >= 0 over 10^6 draws", pass, &details.join("; "));
}

#[test]
fn criterion_05_unbiased_monte_carlo() {
    let mut worst: (f64, String) = (0.0, String::new());
    let mut pass = true;
    for (i, label) in ["quad", "trig", "lin"].into_iter().enumerate() {
        let cfg = preset(label, 2.0);
        let spec = FunctionSpec::preset(label).unwrap();
        for (j, x) in [0.1, 0.3, 0.5, 0.7, 0.9].into_iter().enumerate() {
            let s = run_replicates(&cfg, x, 100_000, 500 + 10 * i as u64 + j as u64).unwrap();
            let z = (s.mean - spec.evaluate(x)).abs() / s.se;
            pass &= z <= 4.0;
            if z > worst.0 {
                worst = (z, format!("{label} x={x}"));
            }
        }
    }
    report(
        5,
        "|mean - f(x)| <= 4 SE, 10^5 draws each",
        pass,
        &format!("largest |z| {:.2} at {}", worst.0, worst.1),
    );
}

#[test]
fn criterion_06_exact_bracket() {
    let cfg = preset("quad", 2.0);
    let spec = FunctionSpec::preset("quad").unwrap();
    let mut pass = true;
    let mut details = Vec::new();
    for x in [0.25, 0.5, 0.75] {
        let widths: Vec<f64> = [10, 20, 50]
            .iter()
            .map(|&m| truncated_expectation_bracket(&cfg, x, m).unwrap().width())
            .collect();
        let b = truncated_expectation_bracket(&cfg, x, 50).unwrap();
        let ok = b.contains(spec.evaluate(x)) && b.width() < 0.02 && widths.windows(2).all(|w| w[1] < w[0]);
        pass &= ok;
        details.push(format!("x={x}: [{:.5}, {:.5}] widths {:.4?}", b.lo, b.hi, widths));
    }
    report(
        6,
        "bracket at ell_max=50 holds f(x), width < 0.02, shrinking",
        pass,
        &details.join("; "),
    );
}

#[test]
fn criterion_07_truncation_law() {
    let mut details = Vec::new();
    let mut pass = true;
    // Independent normalisation: direct sum to N plus a midpoint tail integral.
    for (lambda, k) in [(1.5, 1u64), (2.0, 1), (2.0, 2), (3.0, 11)] {
        let law = TruncationLaw::new(lambda, k).unwrap();
        let n_top = 2_000_000u64;
        let head: f64 = (k..=n_top).rev().map(|n| law.pmf(n)).sum();
        let tail = (n_top as f64 + 0.5).powf(1.0 - lambda) / (lambda - 1.0) / law.zeta_norm();
        let err = (head + tail - 1.0).abs();
        pass &= err <= 1e-10 && law.survival(k).unwrap() == 1.0;
        details.push(format!("lambda={lambda} k={k}: |sum pmf - 1| {err:.1e}"));
    }
    let z = hurwitz_zeta(2.0, 1, 1e-10).unwrap();
    let zeta_err = (z - std::f64::consts::PI.powi(2) / 6.0).abs();
    pass &= zeta_err <= 1e-10;
    details.push(format!("|zeta(2,1) - pi^2/6| {zeta_err:.1e}"));

    let law = TruncationLaw::new(2.0, 1).unwrap();
    let bins = 60u64;
    let mut counts = vec![0u64; bins as usize + 1];
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let draws = 1_000_000u64;
    for _ in 0..draws {
        let l = law.sample(rng.random::<f64>()).unwrap();
        counts[((l - 1).min(bins)) as usize] += 1;
    }
    let mut stat = 0.0;
    for (i, &c) in counts.iter().enumerate() {
        let p = if (i as u64) < bins {
            law.pmf(i as u64 + 1)
        } else {
            law.survival(bins + 1).unwrap()
        };
        let e = p * draws as f64;
        stat += (c as f64 - e).powi(2) / e;
    }
    let p_value = 1.0 - ChiSquared::new(bins as f64).unwrap().cdf(stat);
    pass &= p_value > 0.001;
    details.push(format!("chi-square {stat:.1} on {bins} df, p = {p_value:.3}"));
    report(
        7,
        "truncation law normalisation, zeta and sampling",
        pass,
        &details.join("; "),
    );
}

#[test]
fn criterion_08_coin_count_independent_of_outcomes() {
    let t = Instant::now();
    let mut pass = true;
    let mut patterns = 0u64;
    for label in ["lin", "quad"] {
        let cfg = preset(label, 2.0);
        let law = cfg.law();
        for l in law.k()..=10 {
            let u = 1.0 - law.survival(l).unwrap() + law.pmf(l) / 2.0;
            assert_eq!(law.sample(u).unwrap(), l);
            for pattern in 0u64..(1 << l) {
                // three spare coins that must stay unread
                let bits: Vec<bool> = (0..l + 3).map(|j| j < l && pattern >> j & 1 == 1).collect();
                let mut coins = ReplayCoins::new(bits);
                let out = draw(&cfg, &mut coins, u).unwrap();
                pass &=
                    out.coins_used == l && out.l == l && coins.remaining() == 3 && out.s == pattern.count_ones() as u64;
                patterns += 1;
            }
        }
    }
    let elapsed = t.elapsed();
    pass &= elapsed < Duration::from_secs(10);
    report(
        8,
        "coins_used = L for every coin pattern, L <= 10",
        pass,
        &format!("{patterns} patterns, {elapsed:.2?}"),
    );
}

#[test]
fn criterion_09_start_bound() {
    let spec = FunctionSpec::preset("quad").unwrap();
    let r = start_bound_check(&spec, 2, 30).unwrap();
    let c = &r.checks[0];
    let pass = r.passed() && c.cases > 0;
    report(
        9,
        "H_L(k-1, s) <= 1 - M/(4k) for quad, L <= 30",
        pass,
        &format!("{} cases, min slack {:.5} ({})", c.cases, c.worst_residual, c.scope),
    );
}

#[test]
fn criterion_10_variance_bound_and_factory() {
    let mut pass = true;
    let mut details = Vec::new();
    for label in ["const13", "lin"] {
        let cfg = preset(label, 2.0);
        let s = run_replicates(&cfg, 0.5, 1_000_000, 10).unwrap();
        pass &= s.variance <= 0.25;
        let f = FunctionSpec::preset(label).unwrap().evaluate(0.5);
        let bits = factory_coins(&cfg, 0.5, 1_000_000, 11, None).unwrap();
        let mean = bits.iter().filter(|&&b| b).count() as f64 / bits.len() as f64;
        let se = (f * (1.0 - f) / bits.len() as f64).sqrt();
        pass &= (mean - f).abs() <= 4.0 * se;
        details.push(format!(
            "{label}: variance {:.4}, factory mean {mean:.5} vs f {f:.5} ({:.2} SE)",
            s.variance,
            (mean - f).abs() / se
        ));
    }
    report(
        10,
        "variance <= 1/4 and factory coin mean within 4 SE",
        pass,
        &details.join("; "),
    );
}

fn run_cli(args: &[&str]) -> Vec<u8> {
    let out = Command::new(env!("CARGO_BIN_EXE_debias")).args(args).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    out.stdout
}

#[test]
fn criterion_11_reproducibility() {
    let dir = tempfile::tempdir().unwrap();
    let path = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    let estimate = |file: &str, workers: &str| {
        run_cli(&[
            "estimate",
            "--preset",
            "trig",
            "--x",
            "0.3",
            "--reps",
            "20000",
            "--seed",
            "3",
            "--workers",
            workers,
            "--output",
            &path(file),
        ]);
        std::fs::read(path(file)).unwrap()
    };
    let sweep = |workers: &str| {
        run_cli(&[
            "sweep",
            "--preset",
            "quad",
            "--reps",
            "5000",
            "--seed",
            "9",
            "--lambdas",
            "1.5,2",
            "--workers",
            workers,
        ])
    };
    let (a, b, c) = (
        estimate("a.jsonl", "1"),
        estimate("b.jsonl", "1"),
        estimate("c.jsonl", "4"),
    );
    let (s1, s2, s4) = (sweep("1"), sweep("1"), sweep("4"));
    let pass = a == b && a == c && s1 == s2 && s1 == s4 && !a.is_empty() && !s1.is_empty();
    // the library path must agree as well
    let cfg = preset("trig", 2.0);
    let lib = (
        run_replicates_with(&cfg, 0.3, 2000, 3, Some(1)).unwrap(),
        run_replicates_with(&cfg, 0.3, 2000, 3, Some(4)).unwrap(),
    );
    let pass = pass && lib.0 == lib.1;
    report(
        11,
        "byte-identical outputs across runs and worker counts",
        pass,
        &format!("estimate {} bytes, sweep {} bytes", a.len(), s1.len()),
    );
}
