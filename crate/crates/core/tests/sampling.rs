use fourns::bitree::RegionRule;
use fourns::measure::{
    cauchy_differences, change_of_variable_check, gronwall_probe, mc_weighted_measure, weight_convergence_sweep, Ball,
    CoordinateBall, Everything, GaussianSampler, Nothing,
};
use fourns::normal_form::EnergyFunctional;
use fourns::spectral::{bracket, FourierState, SobolevIndex};
use fourns::Complex64;

const S: f64 = 0.35;

#[test]
fn sampler_second_moments_follow_the_sobolev_profile() {
    let sampler = GaussianSampler::new(S, 4, 41);
    let n_samples = 10_000;
    let mut sums = [0.0f64; 9];
    for i in 0..n_samples {
        for (acc, c) in sums.iter_mut().zip(sampler.sample_at(i).modes()) {
            *acc += c.norm_sqr();
        }
    }
    for (k, acc) in sums.iter().enumerate() {
        let n = k as i64 - 4;
        let expected = bracket(n).powf(-2.0 * S);
        let mean = acc / n_samples as f64;
        // |û_n|² is exponential, so its standard deviation equals its mean.
        let se = expected / (n_samples as f64).sqrt();
        assert!((mean - expected).abs() <= 3.0 * se, "n={n}: {mean} vs {expected}");
    }
}

#[test]
fn coordinate_ball_hit_rate_matches_exponential_law() {
    let plain = EnergyFunctional::new(0, S, 2, RegionRule::default()).unwrap();
    let sampler = GaussianSampler::new(S, 2, 42);
    for (n, radius) in [(0i64, 0.8), (2, 0.5)] {
        let est = mc_weighted_measure(&CoordinateBall { n, radius }, &sampler, &plain, 20_000).unwrap();
        let expected = 1.0 - (-radius * radius * bracket(n).powf(2.0 * S)).exp();
        assert!((est.mean - expected).abs() <= 3.0 * est.std_err, "{est:?} vs {expected}");
    }
    let all = mc_weighted_measure(&Everything, &sampler, &plain, 100).unwrap();
    assert_eq!((all.mean, all.hits), (1.0, 100));
    let none = mc_weighted_measure(&Nothing, &sampler, &plain, 100).unwrap();
    assert_eq!(none.mean, 0.0);
    assert!(none.std_err.is_infinite());
    assert!(mc_weighted_measure(&Everything, &sampler, &plain, 10).is_err());
}

#[test]
fn weighted_measure_is_independent_of_thread_count() {
    let weight = EnergyFunctional::new(2, S, 2, RegionRule::default()).unwrap();
    let sampler = GaussianSampler::new(S, 4, 43);
    let region = Ball::centered(2.0, SobolevIndex::with_default_eps(S).unwrap().sigma);
    let pooled = mc_weighted_measure(&region, &sampler, &weight, 2000).unwrap();
    let single = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(|| mc_weighted_measure(&region, &sampler, &weight, 2000).unwrap());
    assert_eq!(pooled, single);
    assert!(pooled.mean > 0.0 && pooled.mean.is_finite());
}

#[test]
fn change_of_variable_holds_in_the_linear_limit() {
    let sampler = GaussianSampler::new(S, 4, 44).with_amplitude(1e-3);
    let weight = EnergyFunctional::new(2, S, 2, RegionRule::default()).unwrap();
    let region = Ball::centered(2.0e-3, SobolevIndex::with_default_eps(S).unwrap().sigma);
    let at0 = change_of_variable_check(&region, &sampler, 0.0, &weight, 1e-3, 1000).unwrap();
    assert_eq!(at0.lhs, at0.rhs);
    assert_eq!(at0.z_score, 0.0);
    let later = change_of_variable_check(&region, &sampler, 0.5, &weight, 1e-3, 2000).unwrap();
    assert!(later.overlap, "{later:?}");
    assert!((later.lhs.mean - later.rhs.mean).abs() < 1e-3);
}

#[test]
fn gronwall_curve_is_flat_at_zero_amplitude() {
    let sampler = GaussianSampler::new(S, 4, 45).with_amplitude(1e-6);
    let weight = EnergyFunctional::new(2, S, 2, RegionRule::default()).unwrap();
    let region = Ball::centered(2.5e-6, SobolevIndex::with_default_eps(S).unwrap().sigma);
    let probe = gronwall_probe(&region, &sampler, &[0.0, 0.25, 0.5], &weight, 1e-3, 500).unwrap();
    let direct = mc_weighted_measure(&region, &sampler, &weight, 500).unwrap();
    assert_eq!(probe.estimates[0], direct);
    assert!(probe.estimates.iter().all(|e| e.mean > 0.0 && e.mean.is_finite()));
    assert!(probe.rate.abs() < 1e-6, "rate {}", probe.rate);
}

#[test]
fn weight_sweep_is_constant_for_zero_and_for_compactly_supported_data() {
    let rule = RegionRule::default();
    let zero = weight_convergence_sweep(&FourierState::zeros(8), 1, S, &[2, 4, 8], rule).unwrap();
    assert!(zero.iter().all(|r| r.f == 1.0));
    let mut u = FourierState::zeros(8);
    for (n, c) in [(-1, Complex64::new(0.3, 0.1)), (0, Complex64::new(0.5, -0.2)), (1, Complex64::new(-0.4, 0.6)), (2, Complex64::new(0.2, 0.2))] {
        u.set(n, c);
    }
    let rows = weight_convergence_sweep(&u, 1, S, &[2, 4, 8], rule).unwrap();
    assert!(cauchy_differences(&rows).iter().all(|d| *d <= 1e-12), "{rows:?}");
    assert!(rows[0].log_f != 0.0);
}
