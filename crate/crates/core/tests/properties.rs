use lharg::io::Config;
use lharg::mgf::mgf_p;
use lharg::model::{MarketState, ModelParams, Variant};
use lharg::pricing::{bs_price, implied_vol, maturity_bucket, moneyness_bucket, trading_days, OptionType};
use lharg::sim::{path_rng, sample_noncentral_gamma};
use num_complex::Complex64;
use proptest::prelude::*;

fn any_type() -> impl Strategy<Value = OptionType> {
    prop_oneof![Just(OptionType::Call), Just(OptionType::Put)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn implied_vol_inverts_black_scholes(
        sigma in 0.05f64..0.8,
        m in 0.8f64..1.2,
        tau in 0.05f64..1.0,
        r in 0.0f64..0.06,
        ty in any_type(),
    ) {
        let k = 100.0 * m;
        let price = bs_price(100.0, k, r, sigma, tau, ty);
        prop_assume!(price > 1e-6);
        let iv = implied_vol(price, 100.0, k, r, tau, ty).unwrap();
        prop_assert!((iv - sigma).abs() < 1e-6, "{} vs {}", iv, sigma);
    }

    #[test]
    fn black_scholes_parity(sigma in 0.05f64..0.8, k in 50.0f64..150.0, tau in 0.01f64..2.0, r in -0.01f64..0.08) {
        let c = bs_price(100.0, k, r, sigma, tau, OptionType::Call);
        let p = bs_price(100.0, k, r, sigma, tau, OptionType::Put);
        prop_assert!((c - p - (100.0 - k * (-r * tau).exp())).abs() < 1e-9);
    }

    #[test]
    fn sampler_draws_are_non_negative(delta in 0.1f64..5.0, big_theta in 0.0f64..50.0, seed in any::<u64>()) {
        let mut rng = path_rng(seed, 0);
        for _ in 0..20 {
            let x = sample_noncentral_gamma(delta, big_theta, 1e-5, &mut rng).unwrap();
            prop_assert!(x >= 0.0 && x.is_finite());
        }
    }

    #[test]
    fn trading_days_are_monotone(a in 1i64..2000, b in 1i64..2000) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(trading_days(lo) <= trading_days(hi));
        prop_assert!(trading_days(lo) >= 1);
    }

    #[test]
    fn buckets_are_monotone(m1 in 0.8f64..1.2, m2 in 0.8f64..1.2, d1 in 1i64..400, d2 in 1i64..400) {
        let (lo, hi) = if m1 <= m2 { (m1, m2) } else { (m2, m1) };
        prop_assert!(moneyness_bucket(lo).unwrap() <= moneyness_bucket(hi).unwrap());
        let (dl, dh) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
        prop_assert!(maturity_bucket(dl) <= maturity_bucket(dh));
    }

    #[test]
    fn characteristic_function_is_bounded(u in -50.0f64..50.0, horizon in 1usize..120) {
        let p = ModelParams::reference(Variant::ZmLharg);
        let s = MarketState::stationary(&p).unwrap();
        let phi = mgf_p(&p, &s, Complex64::new(0.0, u), horizon).unwrap();
        prop_assert!(phi.norm() <= 1.0 + 1e-10);
        let conj = mgf_p(&p, &s, Complex64::new(0.0, -u), horizon).unwrap();
        prop_assert!((phi.conj() - conj).norm() < 1e-10);
    }

    #[test]
    fn config_values_round_trip(key in "[a-z][a-z_-]{0,12}", value in "[A-Za-z0-9./+-][A-Za-z0-9./+ -]{0,20}[A-Za-z0-9./+-]") {
        let cfg = Config::parse(&format!("{key} = {value}\n")).unwrap();
        prop_assert_eq!(cfg.get(&key), Some(value.as_str()));
    }
}
