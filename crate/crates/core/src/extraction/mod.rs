//! Phase readout: population boxes with a sinusoid fit for symmetric
//! sequences, Gaussian-envelope x sinusoid fits for spatial fringes.

mod overlap;
mod population;
mod series;
mod spatial;

use std::io::Write;

use serde::Serialize;

pub use overlap::{optimize_overlap_time, OverlapScan, ScanRange};
pub use population::{fit_population_fringe, population_phase, population_readout, PopulationFit};
pub use series::{subtract_laser_ramp, unwrap_phases, PhaseRecord, PhaseSeries};
pub use spatial::{fit_batch_median_k, fit_spatial_fringe, median, BatchFit, SpatialFringeModel};

use crate::error::Result;

/// Contrast below which a fringe is reported as degenerate.
pub const DEGENERATE_CONTRAST: f64 = 1e-4;
/// Phase uncertainty (rad) above which a fit is reported as degenerate.
pub const DEGENERATE_PHASE_SIGMA: f64 = 1.0;
/// Slack allowed on contrast above 1.
pub const CONTRAST_SLACK: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FitKind {
    /// `A exp(-(x-x0)^2 / 2 sigma^2) [1 - B sin(k x - phi)] + C`
    SpatialFringe,
    /// `V sin(k x + phi) + C`
    Population,
}

impl FitKind {
    pub fn parameter_names(self) -> &'static [&'static str] {
        match self {
            FitKind::SpatialFringe => &["A", "x0", "sigma_x", "B", "k", "phi", "C"],
            FitKind::Population => &["V", "k", "phi", "C"],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FitStatus {
    Converged,
    NotConverged,
    /// No usable fringe: contrast vanishes or the phase is unconstrained.
    Degenerate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub kind: FitKind,
    pub params: Vec<f64>,
    pub uncertainties: Vec<f64>,
    pub rss: f64,
    pub iterations: usize,
    pub status: FitStatus,
}

impl FitResult {
    pub(crate) fn failed(kind: FitKind) -> Self {
        let n = kind.parameter_names().len();
        FitResult {
            kind,
            params: vec![f64::NAN; n],
            uncertainties: vec![f64::INFINITY; n],
            rss: f64::NAN,
            iterations: 0,
            status: FitStatus::NotConverged,
        }
    }

    /// True only for a converged, non-degenerate fit; other parameters are
    /// not to be used.
    pub fn converged(&self) -> bool {
        self.status == FitStatus::Converged
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.index(name).map(|i| self.params[i])
    }

    pub fn uncertainty(&self, name: &str) -> Option<f64> {
        self.index(name).map(|i| self.uncertainties[i])
    }

    fn index(&self, name: &str) -> Option<usize> {
        self.kind.parameter_names().iter().position(|n| *n == name)
    }

    /// Fitted phase in `(-pi, pi]`.
    pub fn phase(&self) -> f64 {
        self.get("phi").unwrap()
    }

    pub fn wavenumber(&self) -> f64 {
        self.get("k").unwrap()
    }

    /// B for spatial fits, V for population fits.
    pub fn contrast(&self) -> f64 {
        match self.kind {
            FitKind::SpatialFringe => self.params[3],
            FitKind::Population => self.params[0],
        }
    }
}

#[derive(Serialize)]
struct FitRow {
    shot: u64,
    converged: bool,
    #[serde(rename = "A")]
    a: f64,
    x0_m: f64,
    sigma_m: f64,
    #[serde(rename = "B")]
    b: f64,
    k_per_m: f64,
    phi_rad: f64,
    #[serde(rename = "C")]
    c: f64,
    rss: f64,
    iters: usize,
}

/// Writes spatial-fringe fits as CSV, one row per shot:
/// `shot,converged,A,x0_m,sigma_m,B,k_per_m,phi_rad,C,rss,iters`.
/// Population fits fill `B`, `k_per_m`, `phi_rad` and `C` from `V, k, phi, C`
/// and leave the envelope columns empty (NaN).
pub fn write_fit_csv<W: Write>(w: W, fits: &[(u64, &FitResult)]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for &(shot, f) in fits {
        let row = match f.kind {
            FitKind::SpatialFringe => FitRow {
                shot,
                converged: f.converged(),
                a: f.params[0],
                x0_m: f.params[1],
                sigma_m: f.params[2],
                b: f.params[3],
                k_per_m: f.params[4],
                phi_rad: f.params[5],
                c: f.params[6],
                rss: f.rss,
                iters: f.iterations,
            },
            FitKind::Population => FitRow {
                shot,
                converged: f.converged(),
                a: f64::NAN,
                x0_m: f64::NAN,
                sigma_m: f64::NAN,
                b: f.params[0],
                k_per_m: f.params[1],
                phi_rad: f.params[2],
                c: f.params[3],
                rss: f.rss,
                iters: f.iterations,
            },
        };
        wtr.serialize(row)?;
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}
