mod common;

use schro_core::seed::stream_rng;
use schro_core::spectral::sobolev_norm;
use schro_core::stochastic::*;
use schro_core::{ControlSignal, PropagatorTables, QuantumState, SpectralBasis};

fn chain_fixture() -> (SpectralBasis, PropagatorTables) {
    let b = common::basis(128, "linear 1", "gauss 20 0.37 0.1", 8);
    let t = PropagatorTables::new(&b, 1e-3).unwrap();
    (b, t)
}

/// Mean and standard error of `‖η‖²_{L²(0,1)}` over `draws` kicks.
fn energy_estimate(model: &RandomAmplitudeModel, draws: usize, seed: u64) -> (f64, f64) {
    let sampler = EtaSampler::new(model, 1e-2).unwrap();
    let mut rng = common::rng(seed);
    let e: Vec<f64> = (0..draws).map(|_| sampler.sample(&mut rng).unwrap().energy()).collect();
    let n = draws as f64;
    let mean = e.iter().sum::<f64>() / n;
    let var = e.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[test]
fn kick_energy_matches_coefficient_sum() {
    for (basis, noise) in [
        (BasisFamily::Fourier, NoiseFamily::Gaussian),
        (BasisFamily::Fourier, NoiseFamily::Logistic),
        (BasisFamily::Cosine, NoiseFamily::Gaussian),
    ] {
        let b: Vec<f64> = (1..=8).map(|j| 1.0 / j as f64).collect();
        let model = RandomAmplitudeModel::new(b.clone(), basis, noise).unwrap();
        let want: f64 = b.iter().map(|x| x * x).sum();
        assert_eq!(model.energy(), want);
        let (mean, se) = energy_estimate(&model, 10_000, 17);
        assert!((mean - want).abs() <= 3.0 * se, "{basis} {noise}: {mean} ± {se} vs {want}");
    }
}

#[test]
fn kicks_are_the_stated_combination() {
    let model = RandomAmplitudeModel::new(vec![1.0, 0.5, 0.25, 0.125, 2.0], BasisFamily::Fourier, NoiseFamily::Logistic).unwrap();
    let dt = 1e-3;
    let eta = sample_eta(&model, dt, &mut common::rng(3)).unwrap();
    let mut rng = common::rng(3);
    let xi: Vec<f64> = (0..5).map(|_| NoiseFamily::Logistic.sample(&mut rng)).collect();
    for (i, v) in eta.values().iter().enumerate() {
        let t = (i as f64 + 0.5) * dt;
        let want: f64 = (0..5).map(|j| model.b()[j] * xi[j] * BasisFamily::Fourier.eval(j + 1, t)).sum();
        assert!((v - want).abs() < 1e-12);
    }
}

#[test]
fn kicks_are_reproducible_per_seed() {
    let model = RandomAmplitudeModel::default();
    let a = sample_eta(&model, 1e-3, &mut stream_rng(9, 4)).unwrap();
    let b = sample_eta(&model, 1e-3, &mut stream_rng(9, 4)).unwrap();
    let c = sample_eta(&model, 1e-3, &mut stream_rng(9, 5)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn kick_validation() {
    assert!(RandomAmplitudeModel::new(vec![], BasisFamily::Fourier, NoiseFamily::Gaussian).is_err());
    assert!(RandomAmplitudeModel::new(vec![-1.0], BasisFamily::Fourier, NoiseFamily::Gaussian).is_err());
    assert!(sample_eta(&RandomAmplitudeModel::default(), 0.3, &mut common::rng(1)).is_err());
    assert_eq!("cosine".parse::<BasisFamily>().unwrap(), BasisFamily::Cosine);
    assert_eq!("logistic".parse::<NoiseFamily>().unwrap().to_string(), "logistic");
    assert!("uniform".parse::<NoiseFamily>().is_err());
}

#[test]
fn chain_is_unitary_and_replays_from_its_kicks() {
    let (b, t) = chain_fixture();
    let z0 = QuantumState::eigenstate(8, 1);
    let rec = simulate_chain(&z0, &RandomAmplitudeModel::default(), 40, 1.0, &b, &t, &mut common::rng(5), true).unwrap();
    assert_eq!(rec.states.len(), 41);
    for z in &rec.states {
        assert!((z.norm() - 1.0).abs() <= 1e-8);
    }
    let mut z = z0;
    for (k, eta) in rec.kicks.iter().enumerate() {
        z = schro_core::propagator::propagate(&z, eta, &b, &t).unwrap();
        assert_eq!(z, rec.states[k + 1]);
        assert_eq!(rec.norm_neg[k + 1], sobolev_norm(&z, -1.0, &b).unwrap());
    }
}

#[test]
fn zero_noise_keeps_sobolev_norms() {
    let (b, t) = chain_fixture();
    let zero = RandomAmplitudeModel::new(vec![0.0; 4], BasisFamily::Fourier, NoiseFamily::Gaussian).unwrap();
    assert!(zero.is_zero());
    let z0 = common::random_state(8, 2);
    let path = growth_path(&z0, &zero, 50, 2.0, &b, &t, 1, 0).unwrap();
    let (g0, l0) = (path.running_max[0], path.running_min[0]);
    assert!(path.running_max.iter().all(|g| (g - g0).abs() <= 1e-12 * g0));
    assert!(path.running_min.iter().all(|l| (l - l0).abs() <= 1e-12 * l0));
}

#[test]
fn running_extrema_are_monotone() {
    let (b, t) = chain_fixture();
    let z0 = QuantumState::eigenstate(8, 1);
    let model = RandomAmplitudeModel::default();
    for index in 0..3 {
        let p = growth_path(&z0, &model, 60, 2.0, &b, &t, 7, index).unwrap();
        assert!(p.running_max.windows(2).all(|w| w[1] >= w[0]));
        assert!(p.running_min.windows(2).all(|w| w[1] <= w[0]));
    }
    let paths: Vec<GrowthPath> = (0..5).map(|i| growth_path(&z0, &model, 60, 2.0, &b, &t, 7, i).unwrap()).collect();
    let rep = growth_summary(&paths, 60).unwrap();
    assert_eq!(rep.checkpoints, [6, 30, 60]);
    let mut at_end: Vec<f64> = paths.iter().map(|p| p.running_max[60]).collect();
    at_end.sort_by(f64::total_cmp);
    assert_eq!(rep.median_g[2], at_end[2]);
    assert!(rep.growth_factor() >= 1.0);
    assert_eq!(rep, growth_report(&z0, &model, 60, 2.0, 5, 7, &b, &t).unwrap());
}

#[test]
fn entrance_trivial_cases() {
    let (b, t) = chain_fixture();
    let model = RandomAmplitudeModel::default();
    let z0 = QuantumState::eigenstate(8, 3);
    let inside = StoppingConfig::new(2.0 * sobolev_norm(&z0, -1.0, &b).unwrap(), 1.0, 10).unwrap();
    assert_eq!(first_entrance_time(&z0, &model, &inside, &b, &t, &mut common::rng(0)).unwrap(), Entrance::Hit(0));
    // ‖z‖_{−s} ≤ μ_1^{−s/2} on the unit sphere.
    let bound = b.norm_scale()[0].powf(-0.5) * (1.0 + 1e-12);
    let everything = StoppingConfig::new(bound, 1.0, 10).unwrap();
    for seed in 0..10 {
        let z = common::random_state(8, seed);
        assert_eq!(first_entrance_time(&z, &model, &everything, &b, &t, &mut common::rng(seed)).unwrap(), Entrance::Hit(0));
    }
    let rep = tail_statistics(&QuantumState::eigenstate(8, 1), &model, &everything, 3, 1, 50, 1, &b, &t).unwrap();
    assert!(rep.curve[1..].iter().all(|c| c.p_hat == 0.0));
    assert!(StoppingConfig::new(0.0, 1.0, 10).is_err());
    assert!(tail_statistics(&z0, &model, &inside, 3, 1, 49, 1, &b, &t).is_err());
}

#[test]
fn tail_accounting_on_a_short_run() {
    let (b, t) = chain_fixture();
    let z0 = QuantumState::eigenstate(8, 1);
    let stop = StoppingConfig::new(0.5 * sobolev_norm(&z0, -1.0, &b).unwrap(), 1.0, 40).unwrap();
    let rep = tail_statistics(&z0, &RandomAmplitudeModel::default(), &stop, 4, 10, 50, 42, &b, &t).unwrap();
    assert_eq!(rep.finite + rep.censored, 50);
    assert_eq!(rep.curve[0].p_hat, 1.0);
    assert!(rep.curve.windows(2).all(|w| w[1].p_hat <= w[0].p_hat));
    for c in &rep.curve {
        assert!((c.stderr - (c.p_hat * (1.0 - c.p_hat) / 50.0).sqrt()).abs() < 1e-15);
    }
    let entrances: Vec<Entrance> =
        (0..50).map(|i| entrance_path(&z0, &RandomAmplitudeModel::default(), &stop, &b, &t, 42, i).unwrap()).collect();
    assert_eq!(rep, tail_from_entrances(&entrances, 4, 10, 40).unwrap());
}

#[test]
fn support_probe_in_and_out_of_span() {
    let model = RandomAmplitudeModel::new(vec![1.0, 1.0, 1.0], BasisFamily::Fourier, NoiseFamily::Gaussian).unwrap();
    let dt = 1e-2;
    let g = |j: usize| move |t: f64| BasisFamily::Fourier.eval(j, t.fract());
    let inside = ControlSignal::from_fn(dt, 100, |t| 0.3 * g(1)(t) - 0.2 * g(3)(t)).unwrap();
    let probe = support_probe(&inside, &model, 1.0, 2000, 8).unwrap();
    assert!(probe.floor < 1e-12, "{}", probe.floor);
    // ‖u − β‖² is a noncentral χ² with three degrees of freedom; P{< 1} ≈ 0.18.
    let rate = probe.hits as f64 / 2000.0;
    assert!((0.1..0.3).contains(&rate), "{rate}");

    let outside = ControlSignal::from_fn(dt, 100, g(5)).unwrap();
    let probe = support_probe(&outside, &model, 0.9, 500, 8).unwrap();
    assert!((probe.floor - 1.0).abs() < 1e-12);
    assert_eq!(probe.hits, 0);
    assert!(probe.min_distance >= probe.floor);
}
