use bernoulli_debias::approx::{bernstein_eval, BernsteinPolynomial, CoefficientScheme, FunctionSpec, NacuPeres, Side};
use bernoulli_debias::estimator::{draw, CoinSource, EstimatorConfig, ReplayCoins};
use bernoulli_debias::mixing::{
    combinatorial_identity_residual, hyper_weight, hyper_weight_exact, mixed_coefficient, mixed_coefficient_exact,
    support,
};
use bernoulli_debias::truncation::hurwitz_zeta;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use proptest::prelude::*;

fn config(label: &str, lambda: f64, variant: Side) -> EstimatorConfig {
    EstimatorConfig::preset(label, lambda, None, variant).unwrap()
}

fn choose(n: u64, k: u64) -> BigInt {
    (0..k).fold(BigInt::from(1), |acc, j| {
        acc * BigInt::from(n - j) / BigInt::from(j + 1)
    })
}

/// `(n, m, k, i)` with `m <= n`, `i <= k <= n`.
fn indices(max: u64) -> impl Strategy<Value = (u64, u64, u64, u64)> {
    (1..max)
        .prop_flat_map(|n| (Just(n), 0..=n, 0..=n))
        .prop_flat_map(|(n, m, k)| (Just(n), Just(m), Just(k), 0..=k))
}

proptest! {
    #[test]
    fn bernstein_value_within_coefficient_range(cs in prop::collection::vec(0.0f64..1.0, 1..40), x in 0.0f64..=1.0) {
        let p = BernsteinPolynomial::new(cs.clone()).unwrap();
        let v = bernstein_eval(&p, x);
        let lo = cs.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = cs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(lo <= v && v <= hi);
    }

    #[test]
    fn hypergeometric_weights_sum_to_one(n in 1u64..200, m_frac in 0.0f64..=1.0, k_frac in 0.0f64..=1.0) {
        let m = ((n as f64 * m_frac) as u64).min(n);
        let k = ((n as f64 * k_frac) as u64).min(n);
        let (lo, hi) = support(n, m, k);
        let total: f64 = (lo..=hi).map(|i| hyper_weight(n, m, k, i).unwrap()).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hypergeometric_float_matches_exact((n, m, k, i) in indices(40)) {
        let exact = hyper_weight_exact(n, m, k, i).unwrap().to_f64().unwrap();
        let float = hyper_weight(n, m, k, i).unwrap();
        prop_assert!((exact - float).abs() <= 1e-12 * exact.max(1e-300));
    }

    #[test]
    fn identity_residual_vanishes((n, m, k, i) in indices(60)) {
        prop_assume!(m >= 1);
        prop_assert!(combinatorial_identity_residual(n, m, k, i).unwrap().is_zero());
    }

    #[test]
    fn mixed_coefficient_float_matches_exact(n in 11u64..30, m_off in 0u64..20, k_frac in 0.0f64..=1.0) {
        let scheme = NacuPeres::new(FunctionSpec::preset("trig").unwrap());
        let m = (scheme.valid_from() + m_off).min(n);
        let k = (n as f64 * k_frac) as u64;
        for side in [Side::Lower, Side::Upper] {
            let exact = mixed_coefficient_exact(&scheme, n, m, k, side).unwrap().to_f64().unwrap();
            prop_assert!((mixed_coefficient(&scheme, n, m, k, side).unwrap() - exact).abs() < 1e-13);
        }
    }

    #[test]
    fn lower_psi_nonnegative_upper_at_most_one(log_l in 1.0f64..45.0, frac in 0.0f64..=1.0, lambda in 1.1f64..4.0) {
        for label in ["quad", "trig"] {
            let lo = config(label, lambda, Side::Lower);
            let l = (log_l.exp2() as u64).max(lo.law().k());
            let s = ((l as f64) * frac) as u64;
            prop_assert!(lo.psi_value(l, s).unwrap() >= 0.0);
            prop_assert!(config(label, lambda, Side::Upper).psi_value(l, s).unwrap() <= 1.0);
        }
    }

    #[test]
    fn fast_psi_matches_direct_sum(l in 11u64..3000, frac in 0.0f64..=1.0, lambda in 1.2f64..3.5) {
        for label in ["quad", "trig"] {
            for side in [Side::Lower, Side::Upper] {
                let cfg = config(label, lambda, side);
                let l = l.max(cfg.law().k());
                let s = (l as f64 * frac) as u64;
                let (fast, slow) = (cfg.psi_value(l, s).unwrap(), cfg.psi_value_direct(l, s).unwrap());
                prop_assert!((fast - slow).abs() < 1e-10 * slow.abs().max(1.0), "{} {} L={} S={}: {} vs {}", label, side, l, s, fast, slow);
            }
        }
    }

    #[test]
    fn degenerate_streams(u in 0.0f64..0.99) {
        let cfg = config("quad", 2.0, Side::Lower);
        let l = cfg.law().sample(u).unwrap();
        let zeros = draw(&cfg, &mut ReplayCoins::new(vec![false; l as usize]), u).unwrap();
        prop_assert_eq!(zeros.s, 0);
        prop_assert_eq!(zeros.psi, cfg.psi_value(l, 0).unwrap());
        let ones = draw(&cfg, &mut ReplayCoins::new(vec![true; l as usize]), u).unwrap();
        prop_assert_eq!(ones.s, l);
        prop_assert_eq!(ones.psi, cfg.psi_value(l, l).unwrap());
    }

    #[test]
    fn replay_parse_roundtrip(bits in prop::collection::vec(any::<bool>(), 0..300), width in 1usize..80) {
        let text: String = bits
            .chunks(width)
            .map(|c| c.iter().map(|&b| if b { '1' } else { '0' }).collect::<String>() + "\n")
            .collect();
        let mut coins = ReplayCoins::parse(&text).unwrap();
        prop_assert_eq!(coins.remaining(), bits.len());
        let heads = coins.take(bits.len() as u64).unwrap();
        prop_assert_eq!(heads as usize, bits.iter().filter(|&&b| b).count());
    }
}

/// psi(5, 2) for quad with lambda = 2, k = 2, recomputed term by term from
/// exact mixtures and survival values from a separately evaluated zeta.
#[test]
fn quad_psi_term_by_term() {
    let cfg = config("quad", 2.0, Side::Lower);
    let scheme = NacuPeres::new(FunctionSpec::preset("quad").unwrap());
    let (l, s, k) = (5u64, 2u64, 2u64);
    let h = |n: u64| -> f64 {
        let mut acc = BigRational::zero();
        for i in 0..=n.min(s) {
            if s - i > l - n {
                continue;
            }
            let w = BigRational::new(choose(l - n, s - i) * choose(n, i), choose(l, s));
            acc += w * scheme.coefficient_exact(Side::Lower, n, i).unwrap();
        }
        acc.to_f64().unwrap()
    };
    let z = |n: u64| hurwitz_zeta(2.0, n, 1e-15).unwrap();
    let mut psi = h(k - 1);
    for n in k..=l {
        psi += (h(n) - h(n - 1)) * z(k) / z(n);
    }
    let got = cfg.psi_value(l, s).unwrap();
    assert!((got - psi).abs() < 1e-13, "{got} vs {psi}");
}
