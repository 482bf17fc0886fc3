mod common;

use std::f64::consts::PI;

use common::*;
use mzfringe::extraction::*;
use mzfringe::physics::{fringe_wavelength, InterferometerConfig};
use mzfringe::rng::stream_rng;
use mzfringe::synthesis::*;
use mzfringe::{Error, Execution};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

fn cold_shot(phase: f64, contrast: f64, noise: &NoiseModel) -> (InterferometerConfig, DensityProfile) {
    let mut s = cold_settings();
    s.contrast = contrast;
    let cfg = config(350e-6, COLD_T_SEP);
    let p = simulate_shot(&cfg, &s, phase, noise).unwrap();
    let port = kicked_port(&p, &cfg);
    (cfg, port)
}

fn population_points(v: f64, phi: f64, k: f64, c: f64, n: usize) -> Vec<(f64, f64)> {
    (0..n)
        .map(|i| {
            let x = 2.0 * PI * i as f64 / n as f64 - PI;
            (x, v * (k * x + phi).sin() + c)
        })
        .collect()
}

#[test]
fn spatial_round_trip() {
    let (_, p) = cold_shot(0.7, 0.3, &NoiseModel::default());
    let fit = fit_spatial_fringe(&p, None).unwrap();
    assert!(fit.converged());
    assert!((fit.contrast() - 0.3).abs() < 1e-6);
    assert!(phase_error(fit.phase(), 0.7).abs() < 1e-6);
}

#[test]
fn spatial_round_trip_random_phases() {
    let mut rng = stream_rng(11, 0);
    for _ in 0..100 {
        let phi = rng.random_range(-PI..PI);
        let (_, p) = cold_shot(phi, 0.5, &NoiseModel::default());
        let fit = fit_spatial_fringe(&p, None).unwrap();
        assert!(phase_error(fit.phase(), phi).abs() < 1e-6, "{phi}: {}", fit.phase());
    }
}

#[test]
fn population_round_trip_random_phases() {
    let mut s = cold_settings();
    s.contrast = 0.8;
    let cfg = config(0.0, COLD_T_SEP);
    let d = cfg.recoil_velocity() * COLD_T_SEP;
    let ramp = 18f64.to_radians();
    let mut rng = stream_rng(12, 0);
    for _ in 0..100 {
        let phi = rng.random_range(-PI..PI);
        let pts: Vec<(f64, f64)> = (0..20)
            .map(|j| {
                let x = ramp * (j as f64 - 9.5);
                let p = synthesize_ports(&cfg, &s, phi + x, &NoiseModel::default()).unwrap();
                (x, population_readout(&p, (-0.5 * d, p.end()), (p.start(), -0.5 * d)).unwrap())
            })
            .collect();
        let fit = fit_population_fringe(&pts, 1.0).unwrap();
        assert!(fit.converged());
        assert!(phase_error(population_phase(&fit), phi).abs() < 1e-6, "{phi}");
    }
}

#[test]
fn degenerate_contrast_is_flagged() {
    let (_, p) = cold_shot(0.2, 0.0, &NoiseModel::default());
    match fit_spatial_fringe(&p, None) {
        Ok(f) => assert!(!f.converged()),
        Err(e) => assert!(matches!(e, Error::FringeUnresolvable { .. })),
    }
    let f = fit_spatial_fringe(&p, Some(2.0 * PI / 242.9e-6)).unwrap();
    assert_eq!(f.status, FitStatus::Degenerate);
    assert!(f.uncertainty("phi").unwrap().is_infinite());
}

#[test]
fn unresolvable_fringe_is_an_error() {
    let s = ShotSettings::default();
    let cfg = config(20e-6, 0.0);
    assert!(fringe_wavelength(&cfg).unwrap() > 4.0 * 477e-6);
    let p = simulate_shot(&cfg, &s, 0.3, &NoiseModel::default()).unwrap();
    match fit_spatial_fringe(&p, None) {
        Err(Error::FringeUnresolvable { .. }) => {}
        Ok(f) => assert!(!f.converged(), "{:?}", f.status),
        Err(e) => panic!("{e}"),
    }
}

#[test]
fn translation_covariance() {
    let (_, p) = cold_shot(0.4, 0.5, &NoiseModel::default());
    let base = fit_spatial_fringe(&p, None).unwrap();
    for dx in [-3e-4, -1e-5, 2.5e-6, 7e-5, 1e-3] {
        let f = fit_spatial_fringe(&p.translated_axis(dx), None).unwrap();
        let expected = base.phase() + base.wavenumber() * dx;
        assert!(phase_error(f.phase(), expected).abs() < 1e-6, "{dx}");
    }
}

#[test]
fn scaling_invariance() {
    let (_, p) = cold_shot(-1.2, 0.4, &NoiseModel::default());
    let base = fit_spatial_fringe(&p, None).unwrap();
    for c in [1e-3, 0.37, 250.0] {
        let scaled = DensityProfile::new(p.start(), p.step(), p.values().iter().map(|v| v * c).collect()).unwrap();
        let f = fit_spatial_fringe(&scaled, None).unwrap();
        assert!((f.get("A").unwrap() / (c * base.get("A").unwrap()) - 1.0).abs() < 1e-8);
        for name in ["B", "k", "phi", "x0", "sigma_x"] {
            let (a, b) = (f.get(name).unwrap(), base.get(name).unwrap());
            let tol = match name {
                "x0" => 1e-8 * base.get("sigma_x").unwrap(),
                _ => 1e-8 * b.abs().max(1.0),
            };
            assert!((a - b).abs() < tol, "{name}: {a} vs {b}");
        }
    }
}

#[test]
fn fixing_true_k_never_raises_residual() {
    let noise = NoiseModel {
        additive_detection_sigma: 1e8,
        ..Default::default()
    };
    for seed in 0..10 {
        let (cfg, p) = cold_shot(0.3 * seed as f64, 0.5, &noise.with_seed(seed));
        let free = fit_spatial_fringe(&p, None).unwrap();
        let k = 2.0 * PI / fringe_wavelength(&cfg).unwrap();
        let fixed = fit_spatial_fringe(&p, Some(k)).unwrap();
        assert!(fixed.rss >= free.rss * (1.0 - 1e-9));
        let (_, clean) = cold_shot(0.3 * seed as f64, 0.5, &NoiseModel::default());
        let free = fit_spatial_fringe(&clean, None).unwrap();
        let fixed = fit_spatial_fringe(&clean, Some(k)).unwrap();
        assert!(fixed.rss <= free.rss + 1e-10 * clean.values().iter().map(|v| v * v).sum::<f64>());
    }
}

#[test]
fn population_fit_contract() {
    let f = fit_population_fringe(&population_points(0.4, 1.0, 1.0, 0.5, 20), 1.0).unwrap();
    assert!(f.converged());
    assert!((f.contrast() - 0.4).abs() < 1e-6);
    assert!(phase_error(f.phase(), 1.0).abs() < 1e-6);
    assert!(f.phase() > -PI && f.phase() <= PI);

    let flat = fit_population_fringe(&population_points(0.0, 1.0, 1.0, 0.5, 20), 1.0).unwrap();
    assert!(!flat.converged());
    assert!(flat.contrast() < 1e-4 || flat.uncertainty("phi").unwrap().is_infinite());

    assert!(matches!(
        fit_population_fringe(&population_points(0.4, 1.0, 1.0, 0.5, 3), 1.0),
        Err(Error::InsufficientData(_))
    ));
    assert!(fit_population_fringe(&population_points(0.4, 1.0, 1.0, 0.5, 5), 1.0).is_err());
}

#[test]
fn population_phase_error_meets_cramer_rao() {
    let (v, sigma, n) = (0.4, 0.01, 20);
    let mut rng = stream_rng(99, 0);
    let clean = population_points(v, 1.0, 1.0, 0.5, n);
    let errs: Vec<f64> = (0..1000)
        .map(|_| {
            let pts: Vec<(f64, f64)> = clean
                .iter()
                .map(|&(x, y)| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    (x, y + sigma * z)
                })
                .collect();
            phase_error(fit_population_fringe(&pts, 1.0).unwrap().phase(), 1.0)
        })
        .collect();
    let expected = sigma * (2.0 / n as f64).sqrt() / v;
    let got = std_dev(&errs);
    assert!((got / expected - 1.0).abs() < 0.25, "{got} vs {expected}");
}

#[test]
fn population_readout_contract() {
    let p = DensityProfile::new(0.0, 1.0, vec![1.0; 11]).unwrap();
    assert!((population_readout(&p, (0.0, 5.0), (5.0, 10.0)).unwrap() - 0.5).abs() < 1e-15);
    let mut v = vec![0.0; 11];
    v[1] = 3.0;
    v[2] = 1.0;
    let q = DensityProfile::new(0.0, 1.0, v).unwrap();
    assert_eq!(population_readout(&q, (0.0, 4.0), (6.0, 10.0)).unwrap(), 1.0);
    let z = DensityProfile::new(0.0, 1.0, vec![0.0; 11]).unwrap();
    assert!(matches!(population_readout(&z, (0.0, 4.0), (6.0, 10.0)), Err(Error::NoSignal)));
    assert!(population_readout(&p, (0.0, 6.0), (5.0, 10.0)).is_err());
    assert!(population_readout(&p, (0.0, 4.0), (6.0, 12.0)).is_err());
}

fn noisy_batch(origin: f64, seed0: u64) -> Vec<DensityProfile> {
    let noise = NoiseModel {
        additive_detection_sigma: 3e8,
        ..Default::default()
    };
    (0..100)
        .map(|i| cold_shot(0.9, 0.5, &noise.with_seed(seed0 + i)).1.translated_axis(origin))
        .collect()
}

#[test]
fn median_k_never_increases_scatter() {
    for (b, origin) in [0.0, 1e-3, -2e-3].into_iter().enumerate() {
        let profiles = noisy_batch(origin, 1000 * b as u64);
        let batch = fit_batch_median_k(&profiles, Execution::Parallel).unwrap();
        let s1: Vec<f64> = batch.stage1.iter().map(|f| f.phase()).collect();
        let s2: Vec<f64> = batch.results.iter().map(|f| f.phase()).collect();
        let (a, b2) = (std_dev(&s1), std_dev(&s2));
        assert!(b2 <= a, "origin {origin}: stage 2 {b2} > stage 1 {a}");
    }
}

#[test]
fn median_k_identical_profiles() {
    let (_, p) = cold_shot(0.3, 0.5, &NoiseModel::default());
    let batch = fit_batch_median_k(&vec![p; 5], Execution::Sequential).unwrap();
    for (a, b) in batch.stage1.iter().zip(&batch.results) {
        assert!((a.phase() - b.phase()).abs() < 1e-9);
    }
}

#[test]
fn median_k_is_robust_to_a_corrupted_shot() {
    let mut profiles = noisy_batch(0.0, 5000);
    let clean = fit_batch_median_k(&profiles[1..], Execution::Parallel).unwrap().median_k;
    let junk: Vec<f64> = (0..profiles[0].len()).map(|i| ((i * 7919) % 113) as f64).collect();
    profiles[0] = DensityProfile::new(profiles[0].start(), profiles[0].step(), junk).unwrap();
    let batch = fit_batch_median_k(&profiles, Execution::Parallel).unwrap();
    let ks: Vec<f64> = batch.stage1[1..].iter().map(|f| f.wavenumber()).collect();
    let spread = std_dev(&ks);
    assert!((batch.median_k - clean).abs() < 0.1 * spread, "{} vs {clean}", batch.median_k);
}

#[test]
fn median_k_batch_errors() {
    let (_, p) = cold_shot(0.3, 0.5, &NoiseModel::default());
    assert!(fit_batch_median_k(&[p.clone(), p.clone()], Execution::Sequential).is_err());
    let flat = DensityProfile::new(p.start(), p.step(), vec![1.0; p.len()]).unwrap();
    let r = fit_batch_median_k(&[p, flat.clone(), flat.clone(), flat], Execution::Sequential);
    assert!(matches!(r, Err(Error::BatchFailure { failed: 3, total: 4 })));
}

#[test]
fn ramp_subtraction() {
    let ramp = 16f64.to_radians();
    let mut rng = stream_rng(5, 0);
    let noise: Vec<f64> = (0..300).map(|_| { let z: f64 = StandardNormal.sample(&mut rng); 0.05 * z }).collect();
    let raw: Vec<f64> = noise
        .iter()
        .enumerate()
        .map(|(i, n)| mzfringe::physics::wrap_phase(0.3 + ramp * i as f64 + n))
        .collect();
    let series = PhaseSeries::from_phases(&raw, 11.4).unwrap();
    let flat = subtract_laser_ramp(&series, ramp);
    let residual: Vec<f64> = flat.phases().iter().zip(&noise).map(|(p, n)| p - 0.3 - n).collect();
    assert!(residual.iter().all(|r| (r - residual[0]).abs() < 1e-9));
    assert!((std_dev(&flat.phases()) / 0.05 - 1.0).abs() < 0.2);

    assert_eq!(subtract_laser_ramp(&flat, 0.0).phases(), flat.phases());
    let aliased = subtract_laser_ramp(&flat, 2.0 * PI);
    for (a, b) in aliased.phases().iter().zip(flat.phases()) {
        assert!((a - b).abs() < 1e-9);
    }
}

#[test]
fn phase_series_contract() {
    let recs = vec![PhaseRecord::new(0, 0.0, 3.0), PhaseRecord::new(2, 22.8, -3.0), PhaseRecord::new(3, 34.2, 3.1)];
    let s = PhaseSeries::new(recs, 1, 11.4).unwrap();
    let p = s.phases();
    assert!((p[1] - (2.0 * PI - 3.0)).abs() < 1e-12);
    assert!(p.windows(2).all(|w| (w[1] - w[0]).abs() <= PI));
    let bad = vec![PhaseRecord::new(3, 0.0, 0.0), PhaseRecord::new(3, 1.0, 0.0)];
    assert!(PhaseSeries::new(bad, 1, 11.4).is_err());
    let mut buf = Vec::new();
    s.write_csv(&mut buf).unwrap();
    let back = PhaseSeries::read_csv(buf.as_slice(), 1, 11.4).unwrap();
    assert_eq!(back.phases(), s.phases());
}

#[test]
fn fit_csv_columns() {
    let (_, p) = cold_shot(0.3, 0.5, &NoiseModel::default());
    let f = fit_spatial_fringe(&p, None).unwrap();
    let mut buf = Vec::new();
    write_fit_csv(&mut buf, &[(7, &f)]).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("shot,converged,A,x0_m,sigma_m,B,k_per_m,phi_rad,C,rss,iters\n7,true,"));
}

fn overlap_config(offset: f64) -> (InterferometerConfig, ShotSettings) {
    let s = ShotSettings {
        port_phase_offset: offset,
        samples: 512,
        ..Default::default()
    };
    (config(350e-6, 0.0), s)
}

fn dense_argmax(cfg: &InterferometerConfig, s: &ShotSettings, lo: f64, hi: f64, n: usize) -> f64 {
    let scan = optimize_overlap_time(cfg, s, ScanRange::new(lo, hi, n).unwrap(), Execution::Parallel).unwrap();
    scan.curve
        .iter()
        .fold((0.0, -1.0), |best, &(t, c)| if c > best.1 { (t, c) } else { best })
        .0
}

#[test]
fn overlap_optimum_complementary_ports() {
    let (cfg, s) = overlap_config(PI);
    let v_r = cfg.recoil_velocity();
    let lambda = fringe_wavelength(&cfg).unwrap();
    let analytic = lambda / (2.0 * v_r);
    let scan = optimize_overlap_time(&cfg, &s, ScanRange::new(0.0, 2.0 * analytic, 41).unwrap(), Execution::Parallel).unwrap();
    let dense = dense_argmax(&cfg, &s, 0.5 * analytic, 1.5 * analytic, 801);
    assert!((scan.best_t_sep / dense - 1.0).abs() < 0.01, "{} vs {dense}", scan.best_t_sep);
    assert!((analytic / dense - 1.0).abs() < 0.01, "{analytic} vs {dense}");
    let c0 = scan.curve[0].1;
    assert!(scan.curve.iter().all(|&(_, c)| c >= c0));
}

#[test]
fn overlap_optimum_quadrature_ports() {
    let (cfg, s) = overlap_config(PI / 2.0);
    let analytic = mzfringe::physics::overlap_wait_time(&cfg).unwrap();
    let scan = optimize_overlap_time(&cfg, &s, ScanRange::new(0.0, 3.0 * analytic, 41).unwrap(), Execution::Parallel).unwrap();
    let dense = dense_argmax(&cfg, &s, 0.5 * analytic, 1.5 * analytic, 801);
    assert!((scan.best_t_sep / dense - 1.0).abs() < 0.01, "{} vs {dense}", scan.best_t_sep);
    assert!((analytic / dense - 1.0).abs() < 0.01, "{analytic} vs {dense}");
}

#[test]
fn overlap_contrast_is_periodic() {
    let (cfg, s) = overlap_config(PI);
    let period = fringe_wavelength(&cfg).unwrap() / cfg.recoil_velocity();
    let ts: Vec<f64> = (0..9).map(|i| 0.1 * period + 0.1 * period * i as f64).collect();
    let a = optimize_overlap_time(&cfg, &s, ScanRange::new(ts[0], ts[8], 9).unwrap(), Execution::Parallel).unwrap();
    let b = optimize_overlap_time(&cfg, &s, ScanRange::new(ts[0] + period, ts[8] + period, 9).unwrap(), Execution::Parallel).unwrap();
    for ((_, ca), (_, cb)) in a.curve.iter().zip(&b.curve) {
        assert!((ca - cb).abs() < 0.05, "{ca} vs {cb}");
    }
}

#[test]
fn overlap_scan_needs_a_fringe() {
    let (cfg, s) = overlap_config(PI);
    let mut sym = cfg;
    sym.timing.delta_t = 0.0;
    assert!(optimize_overlap_time(&sym, &s, ScanRange::new(0.0, 0.01, 5).unwrap(), Execution::Sequential).is_err());
    let flat = ShotSettings { contrast: 0.0, ..s };
    assert!(matches!(
        optimize_overlap_time(&cfg, &flat, ScanRange::new(1e-3, 0.02, 5).unwrap(), Execution::Sequential),
        Err(Error::AllFitsDegenerate)
    ));
}
