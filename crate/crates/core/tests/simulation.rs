use lharg::estimation::estimate_lambda;
use lharg::mgf::{mgf_p, Measure};
use lharg::model::{
    conditional_covariance, filter_innovations, stationary_mean_rv, MarketState, ModelParams, RiskPremia, Variant,
    LAGS,
};
use lharg::sim::{
    mc_mgf, path_rng, sample_noncentral_gamma, simulate_paths, simulate_series, PathEngine, RunningStats,
    BURN_IN_DAYS,
};
use num_complex::Complex64;

fn moments(draws: impl Iterator<Item = f64>) -> RunningStats {
    let mut s = RunningStats::default();
    for x in draws {
        s.push(x);
    }
    s
}

#[test]
fn central_gamma_sampler_moments() {
    let (delta, theta) = (1.78, 1.117e-5);
    let mut rng = path_rng(11, 0);
    let s = moments((0..200_000).map(|_| sample_noncentral_gamma(delta, 0.0, theta, &mut rng).unwrap()));
    let mean = theta * delta;
    assert!((s.mean() - mean).abs() < 4.0 * s.std_error(), "{} vs {mean}", s.mean());
    assert!((s.variance() / (theta * theta * delta) - 1.0).abs() < 0.03);
}

#[test]
fn noncentral_gamma_sampler_moments() {
    let (delta, big_theta, theta) = (1.78, 9.0, 1.117e-5);
    let mut rng = path_rng(12, 0);
    let s = moments((0..200_000).map(|_| sample_noncentral_gamma(delta, big_theta, theta, &mut rng).unwrap()));
    let mean = theta * (delta + big_theta);
    let var = theta * theta * (delta + 2.0 * big_theta);
    assert!((s.mean() - mean).abs() < 4.0 * s.std_error());
    assert!((s.variance() / var - 1.0).abs() < 0.03, "{} vs {var}", s.variance());
    assert!(sample_noncentral_gamma(delta, -1.0, theta, &mut rng).is_err());
}

#[test]
fn harg_series_mean_matches_stationary_mean() {
    let p = ModelParams::reference(Variant::Harg);
    let s = MarketState::stationary(&p).unwrap();
    let (rv, _, _) = simulate_series(&p, &s, 200_000, BURN_IN_DAYS, 21).unwrap();
    // Batch means absorb the serial correlation.
    let batches = moments(rv.chunks(2_000).map(|c| c.iter().sum::<f64>() / c.len() as f64));
    let target = stationary_mean_rv(&p).unwrap();
    assert!((batches.mean() - target).abs() < 4.0 * batches.std_error(), "{} vs {target}", batches.mean());
}

#[test]
fn mc_standard_error_scales_with_inverse_root_n() {
    let p = ModelParams::reference(Variant::PLharg);
    let s = MarketState::stationary(&p).unwrap();
    let z = [Complex64::new(1.0, 0.0), Complex64::new(0.0, 5.0)];
    let small = simulate_paths(&p, &s, 22, 10_000, &Measure::Physical, 5).unwrap();
    let large = simulate_paths(&p, &s, 22, 40_000, &Measure::Physical, 6).unwrap();
    let a = mc_mgf(&small, &z).unwrap();
    let b = mc_mgf(&large, &z).unwrap();
    for (x, y) in a.iter().zip(&b) {
        let ratio = x.se_re / y.se_re;
        assert!((ratio - 2.0).abs() < 0.2, "{ratio}");
    }
}

#[test]
fn simulation_is_reproducible() {
    let p = ModelParams::reference(Variant::ZmLharg);
    let s = MarketState::stationary(&p).unwrap();
    let a = simulate_paths(&p, &s, 10, 3_000, &Measure::Physical, 99).unwrap();
    let b = simulate_paths(&p, &s, 10, 3_000, &Measure::Physical, 99).unwrap();
    let c = simulate_paths(&p, &s, 10, 3_000, &Measure::Physical, 100).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.rv_paths, c.rv_paths);
}

#[test]
fn discounted_price_is_a_martingale_under_q() {
    let p = ModelParams::reference(Variant::ZmLharg).with_rate(0.03 / 252.0);
    let s = MarketState::stationary(&p).unwrap();
    let q = Measure::RiskNeutral(RiskPremia::arbitrage_free(p.lambda, ModelParams::reference_nu1(p.variant)));
    let paths = simulate_paths(&p, &s, 63, 100_000, &q, 8).unwrap();
    let est = mc_mgf(&paths, &[Complex64::new(1.0, 0.0)]).unwrap()[0];
    let target = (63.0 * p.r).exp();
    assert!((est.value.re - target).abs() < 4.0 * est.se_re, "{} vs {target} (se {})", est.value.re, est.se_re);
}

/// Conditioning on the first simulated day and applying the analytic MGF
/// to the rest must reproduce the analytic MGF of the whole horizon.
#[test]
fn tower_property_of_the_physical_mgf() {
    let p = ModelParams::reference(Variant::PLharg);
    let s0 = MarketState::stationary(&p).unwrap();
    let engine = PathEngine::new(&p, &s0, &Measure::Physical).unwrap();
    let (z, horizon) = (Complex64::new(2.0, 0.0), 22);
    let mut stats = RunningStats::default();
    let (mut rv, mut y, mut eps) = ([0.0], [0.0], [0.0]);
    for i in 0..20_000 {
        engine.run(&mut path_rng(31, i), &mut rv, &mut y, Some(&mut eps));
        let mut s1 = s0;
        s1.rv.copy_within(0..LAGS - 1, 1);
        s1.lev.copy_within(0..LAGS - 1, 1);
        s1.rv[0] = rv[0];
        s1.lev[0] = (eps[0] - p.gamma * rv[0].sqrt()).powi(2);
        let rest = mgf_p(&p, &s1, z, horizon - 1).unwrap();
        stats.push((z.re * y[0]).exp() * rest.re);
    }
    let full = mgf_p(&p, &s0, z, horizon).unwrap().re;
    assert!((stats.mean() - full).abs() < 4.0 * stats.std_error(), "{} vs {full}", stats.mean());
}

#[test]
fn filtered_innovations_are_standard_normal() {
    let p = ModelParams::reference(Variant::ZmLharg);
    let s = MarketState::stationary(&p).unwrap();
    let (rv, y, eps) = simulate_series(&p, &s, 50_000, BURN_IN_DAYS, 17).unwrap();
    let (lambda, _) = estimate_lambda(&y, &rv, p.r).unwrap();
    let exact = filter_innovations(&y, &rv, p.r, p.lambda).unwrap();
    for (a, b) in exact.iter().zip(&eps) {
        assert!((a - b).abs() < 1e-9);
    }
    let filtered = filter_innovations(&y, &rv, p.r, lambda).unwrap();
    let n = filtered.len() as f64;
    let mean = filtered.iter().sum::<f64>() / n;
    let m = |k: i32| filtered.iter().map(|e| (e - mean).powi(k)).sum::<f64>() / n;
    let var = m(2);
    let skew = m(3) / var.powf(1.5);
    let kurt = m(4) / (var * var);
    assert!(mean.abs() < 4.0 / n.sqrt());
    assert!((var - 1.0).abs() < 4.0 * (2.0 / n).sqrt());
    assert!(skew.abs() < 4.0 * (6.0 / n).sqrt(), "{skew}");
    assert!((kurt - 3.0).abs() < 4.0 * (24.0 / n).sqrt(), "{kurt}");
}

#[test]
fn return_rv_covariance_without_risk_premium() {
    let p = ModelParams::reference(Variant::PLharg).with_lambda(0.0);
    let s = MarketState::stationary(&p).unwrap();
    let paths = simulate_paths(&p, &s, 2, 400_000, &Measure::Physical, 41).unwrap();
    let n = paths.n_paths;
    let y0: Vec<f64> = (0..n).map(|i| paths.y_path(i)[0]).collect();
    let rv1: Vec<f64> = (0..n).map(|i| paths.rv_path(i)[1]).collect();
    let my = y0.iter().sum::<f64>() / n as f64;
    let mr = rv1.iter().sum::<f64>() / n as f64;
    let prods = moments(y0.iter().zip(&rv1).map(|(a, b)| (a - my) * (b - mr)));
    let target = conditional_covariance(&p, &s);
    assert!(target < 0.0);
    assert!((prods.mean() - target).abs() < 4.0 * prods.std_error(), "{} vs {target}", prods.mean());
}
