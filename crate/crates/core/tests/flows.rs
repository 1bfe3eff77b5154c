mod common;

use fourns::dynamics::{
    convergence_experiment, flow_gauged, flow_to, flow_truncated, gauge_j, jacobian_det, summarize, FlowConfig,
    GaugeData, GaugeDirection, Scheme,
};
use fourns::measure::GaussianSampler;
use fourns::spectral::{sobolev_distance, sobolev_norm, FourierState, SobolevIndex};
use fourns::Complex64;

use common::mu_sample;

fn rel_l2(a: &FourierState, reference: &FourierState) -> f64 {
    sobolev_distance(a, reference, 0.0) / sobolev_norm(reference, 0.0)
}

#[test]
fn rk4_error_shrinks_sixteenfold_per_halving() {
    let u0 = mu_sample(0.35, 2, 21, 0);
    let at = |dt: f64| flow_to(&u0, 2, dt, 0.5).unwrap();
    let exact = at(1e-4);
    let coarse = sobolev_distance(&at(1e-2), &exact, 0.0);
    let fine = sobolev_distance(&at(5e-3), &exact, 0.0);
    let ratio = coarse / fine;
    assert!((12.0..=22.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn forward_then_backward_recovers_data() {
    for k in 0..3 {
        let u0 = mu_sample(0.35, 2, 22, k);
        let there = flow_to(&u0, 2, 1e-3, 1.0).unwrap();
        let back = flow_to(&there, 2, 1e-3, -1.0).unwrap();
        assert!(rel_l2(&back, &u0) <= 1e-7, "{}", rel_l2(&back, &u0));
        assert!((back.time() - u0.time()).abs() < 1e-12);
    }
}

#[test]
fn gauged_flow_matches_gauged_truncated_flow() {
    let u0 = mu_sample(0.35, 4, 23, 0);
    let cfg = FlowConfig::new(4, 4, 1.0);
    let direct = flow_gauged(&u0, &cfg).unwrap();
    let via = flow_truncated(&u0, &cfg).unwrap();
    let g = GaugeData::from_initial(&u0);
    let mapped = gauge_j(via.last(), &g, 1.0, GaugeDirection::Forward);
    assert!(rel_l2(&mapped, direct.last()) <= 1e-7);
    let round = flow_truncated(&u0, &cfg.clone().with_scheme(Scheme::GaugedRk4)).unwrap();
    assert!(rel_l2(round.last(), via.last()) <= 1e-6);
}

#[test]
fn gauged_single_mode_keeps_its_modulus() {
    let c = Complex64::new(0.8, -0.3);
    let u0 = FourierState::single_mode(3, 2, c);
    let traj = flow_gauged(&u0, &FlowConfig::new(3, 3, 1.0).with_record_every(50)).unwrap();
    for st in &traj.states {
        assert!((st.get(2).norm() - c.norm()).abs() < 1e-12);
    }
}

#[test]
fn zero_data_stays_zero() {
    let z = FourierState::zeros(4);
    assert_eq!(flow_gauged(&z, &FlowConfig::new(4, 4, 0.5)).unwrap().last().max_abs(), 0.0);
    assert_eq!(flow_to(&z, 4, 1e-3, 0.5).unwrap().max_abs(), 0.0);
}

#[test]
fn jacobian_is_one_at_time_zero_and_in_the_linear_limit() {
    let u0 = mu_sample(0.35, 2, 24, 0);
    assert_eq!(jacobian_det(&u0, 0.0, 2, 1e-3, 1e-5).unwrap().det, 1.0);
    let tiny = GaussianSampler::new(0.35, 2, 24).with_amplitude(1e-4).sample_at(0);
    let rep = jacobian_det(&tiny, 0.5, 2, 1e-3, 1e-6).unwrap();
    assert!((rep.det - 1.0).abs() < 1e-6, "{rep:?}");
    assert!(jacobian_det(&u0, 0.5, 3, 1e-3, 1e-5).is_err());
}

#[test]
fn convergence_table_vanishes_at_time_zero_and_for_single_modes() {
    let index = SobolevIndex::with_default_eps(0.35).unwrap();
    let u0 = mu_sample(0.35, 8, 25, 0);
    let rows = convergence_experiment(&u0, 0.0, &[2, 4], index.sigma, 1e-3).unwrap();
    assert!(rows.iter().all(|r| r.distance == 0.0));
    let single = FourierState::single_mode(2, 1, Complex64::new(0.5, 0.5));
    let rows = convergence_experiment(&single, 1.0, &[2, 4], index.sigma, 1e-3).unwrap();
    assert!(rows.iter().all(|r| r.distance < 1e-10), "{rows:?}");
    assert!(convergence_experiment(&u0, 1.0, &[], index.sigma, 1e-3).is_err());
}

#[test]
fn growth_probe_stays_bounded_across_cutoffs() {
    let index = SobolevIndex::with_default_eps(0.35).unwrap();
    let sampler = GaussianSampler::new(0.35, 16, 26);
    let radius = 3.5;
    let mut report = Vec::new();
    for n in [2usize, 4, 8, 16] {
        let cfg = FlowConfig::new(n, 16, 1.0).with_record_every(50);
        let mut sup: f64 = 0.0;
        let mut used = 0;
        for k in 0..200 {
            let u0 = sampler.sample_at(k);
            if sobolev_norm(&u0, index.sigma) > radius {
                continue;
            }
            used += 1;
            let traj = flow_truncated(&u0, &cfg).unwrap();
            sup = sup.max(summarize(&traj, &cfg, index.sigma).unwrap().sup_norm_sigma);
        }
        assert!(used >= 100);
        assert!(sup.is_finite());
        report.push((n, sup));
    }
    println!("growth probe sup_t ||u||_(H^sigma) by N: {report:?}");
}

#[test]
fn summary_serializes_with_expected_fields() {
    let u0 = mu_sample(0.35, 2, 27, 0);
    let cfg = FlowConfig::new(2, 2, 0.1);
    let summary = summarize(&flow_truncated(&u0, &cfg).unwrap(), &cfg, 0.0).unwrap();
    let json = serde_json::to_value(&summary).unwrap();
    for key in ["mass_drift", "hamiltonian_drift", "sup_norm_sigma", "dt", "n", "m"] {
        assert!(json.get(key).is_some(), "{key}");
    }
    assert!(summary.mass_drift < 1e-10);
}
