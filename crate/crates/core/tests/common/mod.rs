#![allow(dead_code)]

use std::f64::consts::PI;

use mzfringe::physics::{InterferometerConfig, SequenceTiming};
use mzfringe::synthesis::{thermal_velocity_sigma, CloudState, DensityProfile, ShotSettings};

/// 218 ms time of flight, T = 1 ms.
pub fn config(delta_t: f64, t_sep: f64) -> InterferometerConfig {
    InterferometerConfig::new(SequenceTiming::with_total_tof(0.218, 1e-3, delta_t, t_sep).unwrap())
}

/// A 2 nK cloud: after 218 ms the ports separate by ~24 envelope widths
/// while the 243 um fringe stays resolvable.
pub fn cold_settings() -> ShotSettings {
    let species = mzfringe::physics::AtomSpecies::rb87();
    ShotSettings {
        cloud: CloudState::new(0.0, 25e-6, thermal_velocity_sigma(&species, 2e-9), 2e6).unwrap(),
        ..Default::default()
    }
}

pub const COLD_T_SEP: f64 = 0.2;

/// Keeps the kicked port of a separated shot.
pub fn kicked_port(p: &DensityProfile, cfg: &InterferometerConfig) -> DensityProfile {
    let d = cfg.recoil_velocity() * cfg.timing.t_sep;
    p.crop(-0.5 * d, p.end()).unwrap()
}

/// Contrast left after integrating `1 - sin(k (u + s sin(theta)))` along a
/// line of sight tilted by `theta` through a Gaussian transverse profile of
/// width `sigma_perp` (brute-force 2D quadrature). The fringe is sampled at
/// 64 points over one period and projected on sin/cos.
pub fn tilt_quadrature(k: f64, sigma_perp: f64, theta: f64) -> f64 {
    let half = 12.0 * sigma_perp / theta.cos();
    let ns = 40_001;
    let ds = 2.0 * half / (ns - 1) as f64;
    let nu = 64;
    let period = 2.0 * PI / k;
    let (mut ps, mut pc, mut mean) = (0.0, 0.0, 0.0);
    for j in 0..nu {
        let u = period * j as f64 / nu as f64;
        let mut column = 0.0;
        for i in 0..ns {
            let s = -half + i as f64 * ds;
            let y = s * theta.cos();
            let x = u + s * theta.sin();
            let w = if i == 0 || i == ns - 1 { 0.5 } else { 1.0 };
            column += w * (-0.5 * (y / sigma_perp).powi(2)).exp() * (1.0 - (k * x).sin());
        }
        column *= ds;
        ps += column * (k * u).sin();
        pc += column * (k * u).cos();
        mean += column;
    }
    let amp = 2.0 * ps.hypot(pc) / nu as f64;
    amp / (mean / nu as f64)
}

/// Standard deviation with `n - 1` normalisation.
pub fn std_dev(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Phase difference wrapped into `(-pi, pi]`.
pub fn phase_error(a: f64, b: f64) -> f64 {
    mzfringe::physics::wrap_phase(a - b)
}
