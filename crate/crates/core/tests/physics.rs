use std::f64::consts::PI;

use approx::assert_relative_eq;
use mzfringe::physics::*;
use proptest::prelude::*;

fn config(tof: f64, t1: f64, delta_t: f64, n: u32) -> InterferometerConfig {
    let mut c = InterferometerConfig::new(SequenceTiming::with_total_tof(tof, t1, delta_t, 0.0).unwrap());
    c.bragg_order = n;
    c
}

#[test]
fn recoil_velocity_values() {
    let rb = AtomSpecies::rb87();
    assert_relative_eq!(recoil_velocity(&rb, 1), 1.177e-2, max_relative = 5e-4);
    assert_relative_eq!(recoil_velocity(&rb, 2), 2.355e-2, max_relative = 5e-4);
    assert_eq!(recoil_velocity(&rb, 0), 0.0);
}

#[test]
fn fringe_wavelength_values() {
    let w = |dt, tof| fringe_wavelength(&config(tof, 1e-3, dt, 1)).unwrap();
    assert_relative_eq!(w(350e-6, 0.218), 242.9e-6, max_relative = 2e-4);
    assert_relative_eq!(w(700e-6, 0.218), 121.5e-6, max_relative = 5e-4);
    assert_relative_eq!(w(350e-6, 0.722), 804.5e-6, max_relative = 1e-4);
    assert!(matches!(
        fringe_wavelength(&config(0.218, 1e-3, 0.0, 1)),
        Err(mzfringe::Error::InfiniteFringeWavelength)
    ));
}

#[test]
fn separation_and_overlap_values() {
    assert_relative_eq!(beamsplitter_separation(&config(0.218, 5e-3, 1e-3, 1)), 11.77e-6, max_relative = 5e-4);
    assert_relative_eq!(beamsplitter_separation(&config(0.218, 5e-3, 350e-6, 1)), 4.12e-6, max_relative = 1e-3);
    assert_eq!(beamsplitter_separation(&config(0.218, 5e-3, 0.0, 1)), 0.0);
    let t = |tof| overlap_wait_time(&config(tof, 1e-3, 350e-6, 1)).unwrap();
    assert!((t(0.218) - 5.16e-3).abs() < 5e-6);
    assert!((t(0.722) - 17.1e-3).abs() < 5e-5);
    assert!(overlap_wait_time(&config(0.218, 1e-3, 0.0, 1)).is_err());
}

#[test]
fn mz_phase_values() {
    let mut c = config(0.2, 50e-3, 0.0, 1);
    assert_relative_eq!(c.chirp_rate, 25.15e6, max_relative = 2e-4);
    c.laser_phases = [0.4, -0.2, 1.1];
    assert_relative_eq!(mz_phase(&c).total, 0.4 + 0.4 + 1.1, max_relative = 1e-12);
    c.chirp_rate = 0.0;
    c.laser_phases = [0.0; 3];
    assert_relative_eq!(mz_phase(&c).total, 395_114.0, max_relative = 1e-5);
    c.laser_phases = [0.1, 0.2, 0.3];
    assert!(mz_phase(&c).laser.abs() < 1e-16);
}

#[test]
fn separation_phase_values() {
    let rb = AtomSpecies::rb87();
    assert_eq!(separation_phase(&rb, 0.0, 1e-27, 0.2, 3e-4).unwrap(), 0.0);
    assert!(separation_phase(&rb, 1e-6, 1e-27, 0.0, 0.0).is_err());
    let cfg = config(0.218, 1e-3, 350e-6, 1);
    let v_r = cfg.recoil_velocity();
    let dx = v_r * 350e-6;
    let p_bar = rb.mass * v_r / 2.0;
    let offset = separation_phase(&rb, dx, p_bar, 0.218, 0.0).unwrap();
    assert_relative_eq!(offset, dx * p_bar / HBAR, max_relative = 1e-14);
    let slope = separation_phase(&rb, dx, p_bar, 0.218, 1.0).unwrap() - offset;
    assert_relative_eq!(slope, 2.0 * PI / fringe_wavelength(&cfg).unwrap(), max_relative = 1e-12);
}

fn timing_strategy() -> impl Strategy<Value = (f64, f64, f64, u32)> {
    (
        0.05f64..0.73,
        1e-4f64..0.02,
        prop_oneof![-2e-3f64..-1e-5, 1e-5f64..2e-3],
        1u32..5,
    )
        .prop_filter("fits in budget", |(tof, t1, dt, _)| 2.0 * t1 + dt < *tof && t1 + dt >= 0.0)
}

proptest! {
    #[test]
    fn wavelength_identity((tof, t1, dt, n) in timing_strategy()) {
        let c = config(tof, t1, dt, n);
        let k = c.species.wavenumber();
        let w = fringe_wavelength(&c).unwrap();
        prop_assert!((w * n as f64 * k * dt.abs() / (PI * tof) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn overlap_identity((tof, t1, dt, n) in timing_strategy()) {
        let c = config(tof, t1, dt, n);
        let t = overlap_wait_time(&c).unwrap();
        let expected = fringe_wavelength(&c).unwrap() / (4.0 * c.recoil_velocity());
        prop_assert!((t / expected - 1.0).abs() < 1e-12);
    }

    #[test]
    fn overlap_scales_with_tof((tof, t1, dt, n) in timing_strategy()) {
        let a = overlap_wait_time(&config(tof, t1, dt, n)).unwrap();
        let b = overlap_wait_time(&config(2.0 * tof, t1, dt, n)).unwrap();
        prop_assert!((b / a - 2.0).abs() < 1e-12);
    }

    #[test]
    fn wavelength_decreases_with_asymmetry((tof, t1, dt, n) in timing_strategy()) {
        let a = fringe_wavelength(&config(tof, t1, dt, n)).unwrap();
        let bigger = dt * 1.5;
        prop_assume!(2.0 * t1 + bigger < tof && t1 + bigger >= 0.0);
        let b = fringe_wavelength(&config(tof, t1, bigger, n)).unwrap();
        prop_assert!(b < a);
    }

    #[test]
    fn recoil_is_linear(n in 0u32..50) {
        let rb = AtomSpecies::rb87();
        prop_assert!((recoil_velocity(&rb, n) - n as f64 * recoil_velocity(&rb, 1)).abs() <= 1e-15 * n as f64);
    }

    #[test]
    fn chirp_gauge_invariance(t1 in 1e-3f64..0.2, delta in -5.0f64..5.0, g in 9.0f64..10.0, alpha in 0.0f64..3e7) {
        let mut c = config(0.73, t1, 0.0, 1);
        c.gravity = g;
        c.chirp_rate = alpha;
        let before = mz_phase(&c).total;
        c.gravity = g + delta;
        c.chirp_rate = alpha + c.species.effective_wavevector() * delta / (2.0 * PI);
        let after = mz_phase(&c).total;
        prop_assert!((after - before).abs() <= 1e-9 * before.abs().max(1.0));
    }

    #[test]
    fn breakdown_sums((tof, t1, dt, n) in timing_strategy(), p in proptest::array::uniform3(-10.0f64..10.0), alpha in 0.0f64..3e7) {
        let mut c = config(tof, t1, dt, n);
        c.laser_phases = p;
        c.chirp_rate = alpha;
        let b = mz_phase(&c);
        prop_assert_eq!(b.total, b.propagation + b.laser + b.separation_offset);
        prop_assert_eq!(mz_phase(&c), b);
    }

    #[test]
    fn wrap_range(phi in -1e4f64..1e4) {
        let w = wrap_phase(phi);
        prop_assert!(w > -PI && w <= PI);
        prop_assert!(((phi - w) / (2.0 * PI) - ((phi - w) / (2.0 * PI)).round()).abs() < 1e-9);
    }

    #[test]
    fn keff_is_twice_k(lambda in 1e-7f64..2e-6, mass in 1e-27f64..1e-24) {
        let s = AtomSpecies::new(mass, lambda).unwrap();
        prop_assert_eq!(s.effective_wavevector(), 2.0 * s.wavenumber());
    }
}
