use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Matrix3, Vector3};

use super::{FitKind, FitResult, FitStatus, DEGENERATE_CONTRAST, DEGENERATE_PHASE_SIGMA};
use crate::error::{Error, Result};
use crate::lm::{levenberg_marquardt, CurveModel, LmOptions};
use crate::physics::wrap_phase;
use crate::synthesis::DensityProfile;

/// Fraction of the signal in `box_a`, `N_a / (N_a + N_b)`, with each count a
/// trapezoidal integral over its box.
pub fn population_readout(profile: &DensityProfile, box_a: (f64, f64), box_b: (f64, f64)) -> Result<f64> {
    for (name, (lo, hi)) in [("a", box_a), ("b", box_b)] {
        if !(hi > lo) {
            return Err(Error::InvalidParameter(format!("box {name} is empty")));
        }
        if lo < profile.start() - 1e-12 * profile.step() || hi > profile.end() + 1e-12 * profile.step() {
            return Err(Error::InvalidParameter(format!("box {name} leaves the profile axis")));
        }
    }
    if box_a.0 < box_b.1 && box_b.0 < box_a.1 {
        return Err(Error::InvalidParameter("readout boxes overlap".into()));
    }
    let na = profile.integrate_between(box_a.0, box_a.1);
    let nb = profile.integrate_between(box_b.0, box_b.1);
    let total = na + nb;
    if total == 0.0 || !total.is_finite() {
        return Err(Error::NoSignal);
    }
    Ok(na / total)
}

/// `V sin(k x + phi) + C`, parameters `[V, k, phi, C]`.
pub struct PopulationFit;

impl CurveModel for PopulationFit {
    fn n_params(&self) -> usize {
        4
    }

    #[inline]
    fn eval(&self, x: f64, p: &[f64], g: &mut [f64]) -> f64 {
        let (s, c) = (p[1] * x + p[2]).sin_cos();
        g[0] = s;
        g[1] = p[0] * c * x;
        g[2] = p[0] * c;
        g[3] = 1.0;
        p[0] * s + p[3]
    }
}

/// Sinusoid fit to `(laser phase, fraction)` points. `k_seed` is the
/// commanded scan rate in the units of the abscissa (1 when the abscissa
/// is the laser phase itself); `k` is left free.
pub fn fit_population_fringe(points: &[(f64, f64)], k_seed: f64) -> Result<FitResult> {
    if points.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "population fit has 4 parameters but only {} points",
            points.len()
        )));
    }
    if points.len() < 6 {
        return Err(Error::InsufficientData("population fit needs at least 6 points".into()));
    }
    if !(k_seed.is_finite() && k_seed != 0.0) {
        return Err(Error::InvalidParameter("k seed must be finite and non-zero".into()));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let (lo, hi) = xs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    // Each point stands for one scan step; n steps must cover a period.
    let coverage = (hi - lo) * xs.len() as f64 / (xs.len() - 1) as f64 * k_seed.abs();
    if coverage < 2.0 * PI * (1.0 - 1e-9) {
        return Err(Error::InsufficientData(format!(
            "points span {:.3} rad of fringe phase, need one full period",
            coverage
        )));
    }

    // Linear solve for (a sin + b cos + C) at the seeded k.
    let mut ata = Matrix3::zeros();
    let mut aty = Vector3::zeros();
    for (&x, &y) in xs.iter().zip(&ys) {
        let (s, c) = (k_seed * x).sin_cos();
        let row = Vector3::new(s, c, 1.0);
        ata += row * row.transpose();
        aty += row * y;
    }
    let lin = ata.cholesky().map(|c| c.solve(&aty)).unwrap_or_else(Vector3::zeros);
    let v0 = lin[0].hypot(lin[1]);
    let phi0 = lin[1].atan2(lin[0]);
    let init = [v0.max(1e-6), k_seed, phi0, lin[2]];

    let out = levenberg_marquardt(&PopulationFit, &xs, &ys, &init, &[false; 4], &LmOptions::default());
    let mut params = out.params;
    let mut unc = out.uncertainties;
    if params.iter().any(|v| !v.is_finite()) {
        return Ok(FitResult::failed(FitKind::Population));
    }
    if params[0] < 0.0 {
        params[0] = -params[0];
        params[2] += PI;
    }
    params[2] = wrap_phase(params[2]);
    let degenerate = params[0] < DEGENERATE_CONTRAST || !(unc[2] < DEGENERATE_PHASE_SIGMA);
    if degenerate {
        unc[2] = f64::INFINITY;
    }
    Ok(FitResult {
        kind: FitKind::Population,
        params,
        uncertainties: unc,
        rss: out.rss,
        iterations: out.iterations,
        status: if degenerate {
            FitStatus::Degenerate
        } else if out.converged {
            FitStatus::Converged
        } else {
            FitStatus::NotConverged
        },
    })
}

/// Interferometer phase implied by a population fit whose abscissa is the
/// laser phase added to the interferometer phase, under the convention
/// `fraction_kicked = (1 - V cos(phi + x)) / 2`.
pub fn population_phase(fit: &FitResult) -> f64 {
    wrap_phase(fit.phase() + FRAC_PI_2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_and_single_port() {
        let v: Vec<f64> = (0..100).map(|i| if (20..30).contains(&i) || (70..80).contains(&i) { 1.0 } else { 0.0 }).collect();
        let p = DensityProfile::new(0.0, 1.0, v).unwrap();
        assert!((population_readout(&p, (10.0, 40.0), (60.0, 90.0)).unwrap() - 0.5).abs() < 1e-12);
        let v: Vec<f64> = (0..100).map(|i| if (20..30).contains(&i) { 1.0 } else { 0.0 }).collect();
        let p = DensityProfile::new(0.0, 1.0, v).unwrap();
        assert_eq!(population_readout(&p, (10.0, 40.0), (60.0, 90.0)).unwrap(), 1.0);
        assert!(matches!(
            population_readout(&p, (50.0, 55.0), (60.0, 90.0)),
            Err(Error::NoSignal)
        ));
        assert!(population_readout(&p, (10.0, 70.0), (60.0, 90.0)).is_err());
        assert!(population_readout(&p, (10.0, 40.0), (60.0, 190.0)).is_err());
    }

    #[test]
    fn round_trip_twenty_points() {
        let pts: Vec<(f64, f64)> = (0..20)
            .map(|i| {
                let x = i as f64 * 2.0 * PI / 20.0;
                (x, 0.4 * (x + 1.0).sin() + 0.5)
            })
            .collect();
        let f = fit_population_fringe(&pts, 1.0).unwrap();
        assert!(f.converged());
        assert!((f.contrast() - 0.4).abs() < 1e-6);
        assert!((f.phase() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn flat_data_is_degenerate() {
        let pts: Vec<(f64, f64)> = (0..20).map(|i| (i as f64 * 0.35, 0.5)).collect();
        let f = fit_population_fringe(&pts, 1.0).unwrap();
        assert!(!f.converged());
        assert!(f.contrast() < 1e-3);
        assert!(f.uncertainty("phi").unwrap().is_infinite());
    }

    #[test]
    fn too_few_points() {
        let pts = [(0.0, 0.1), (1.0, 0.2), (2.0, 0.3)];
        assert!(fit_population_fringe(&pts, 1.0).is_err());
        let pts: Vec<(f64, f64)> = (0..10).map(|i| (i as f64 * 0.1, 0.5)).collect();
        assert!(fit_population_fringe(&pts, 1.0).is_err());
    }
}
