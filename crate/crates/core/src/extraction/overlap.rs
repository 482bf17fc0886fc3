use std::io::Write;

use serde::Serialize;

use super::spatial::fit_spatial_fringe;
use super::FitStatus;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::physics::InterferometerConfig;
use crate::synthesis::{simulate_shot, NoiseModel, ShotSettings};

/// Evenly spaced `t_sep` values from `start` to `stop` inclusive (s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanRange {
    pub start: f64,
    pub stop: f64,
    pub steps: usize,
}

impl ScanRange {
    pub fn new(start: f64, stop: f64, steps: usize) -> Result<Self> {
        if !(start >= 0.0 && stop > start && stop.is_finite()) || steps < 3 {
            return Err(Error::InvalidParameter(format!(
                "overlap scan needs 0 <= start < stop and >= 3 steps, got [{start}, {stop}] x {steps}"
            )));
        }
        Ok(ScanRange { start, stop, steps })
    }

    pub fn values(&self) -> Vec<f64> {
        let d = (self.stop - self.start) / (self.steps - 1) as f64;
        (0..self.steps).map(|i| self.start + i as f64 * d).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OverlapScan {
    pub best_t_sep: f64,
    pub best_contrast: f64,
    /// `(t_sep, fitted contrast)` on the scan grid; degenerate fits count as
    /// zero contrast.
    pub curve: Vec<(f64, f64)>,
}

impl OverlapScan {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        #[derive(Serialize)]
        struct Row {
            t_sep_s: f64,
            contrast: f64,
        }
        let mut wtr = csv::Writer::from_writer(w);
        for &(t_sep_s, contrast) in &self.curve {
            wtr.serialize(Row { t_sep_s, contrast })?;
        }
        wtr.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Contrast of a noiseless shot imaged `t_sep` after the final pulse, with
/// the total time of flight held at the configured value.
fn shot_contrast(config: &InterferometerConfig, settings: &ShotSettings, t_sep: f64) -> Result<f64> {
    let timing = config.timing.with_t_sep_fixed_tof(t_sep)?;
    let cfg = config.with_timing(timing);
    let profile = simulate_shot(&cfg, settings, 0.0, &NoiseModel::default())?;
    Ok(match fit_spatial_fringe(&profile, None) {
        Ok(f) if f.status == FitStatus::Converged => f.contrast(),
        _ => 0.0,
    })
}

/// Scans the imaging delay, fitting each noiseless shot, and returns the
/// delay of maximum fringe contrast. The grid maximum (smallest delay on a
/// plateau) is refined by golden-section search between its neighbours.
pub fn optimize_overlap_time(
    config: &InterferometerConfig,
    settings: &ShotSettings,
    scan: ScanRange,
    exec: Execution,
) -> Result<OverlapScan> {
    if config.timing.delta_t == 0.0 {
        return Err(Error::InfiniteFringeWavelength);
    }
    let grid = scan.values();
    let contrasts: Vec<Result<f64>> = exec.map(&grid, |&t| shot_contrast(config, settings, t));
    let contrasts = contrasts.into_iter().collect::<Result<Vec<f64>>>()?;
    let max = contrasts.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return Err(Error::AllFitsDegenerate);
    }
    let i = contrasts
        .iter()
        .position(|&c| c >= max * (1.0 - 1e-9))
        .expect("maximum is attained");
    let curve: Vec<(f64, f64)> = grid.iter().copied().zip(contrasts.iter().copied()).collect();

    let mut lo = grid[i.saturating_sub(1)];
    let mut hi = grid[(i + 1).min(grid.len() - 1)];
    let mut best = (grid[i], max);
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let mut a = hi - ratio * (hi - lo);
    let mut b = lo + ratio * (hi - lo);
    let mut fa = shot_contrast(config, settings, a)?;
    let mut fb = shot_contrast(config, settings, b)?;
    for _ in 0..40 {
        if fa >= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - ratio * (hi - lo);
            fa = shot_contrast(config, settings, a)?;
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + ratio * (hi - lo);
            fb = shot_contrast(config, settings, b)?;
        }
        if hi - lo <= 1e-7 * hi.max(1e-9) {
            break;
        }
    }
    for (t, c) in [(a, fa), (b, fb)] {
        if c > best.1 * (1.0 + 1e-9) {
            best = (t, c);
        }
    }
    Ok(OverlapScan {
        best_t_sep: best.0,
        best_contrast: best.1,
        curve,
    })
}
