use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use super::config::Scheme;
use super::run::{csv_bytes, write_atomic, CampaignOutput};
use crate::error::{Error, Result};
use crate::synthesis::tilt_contrast_factor;

/// Tilt of the imaging light assumed by the contrast model column of `f3`.
pub const MODEL_TILT_DEG: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Figure {
    /// Fringe wavelength against `delta_T`, with the analytic curve.
    F2,
    /// One-run Allan deviation and contrast against `delta_T`.
    F3,
    /// Allan deviations of symmetric and separated asymmetric campaigns.
    F4,
    /// Allan deviations of overlapped and separated asymmetric campaigns.
    F5,
}

impl FromStr for Figure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "f2" => Ok(Figure::F2),
            "f3" => Ok(Figure::F3),
            "f4" => Ok(Figure::F4),
            "f5" => Ok(Figure::F5),
            _ => Err(Error::Config(format!("unknown figure {s:?}; expected f2, f3, f4 or f5"))),
        }
    }
}

impl fmt::Display for Figure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Figure::F2 => "f2",
            Figure::F3 => "f3",
            Figure::F4 => "f4",
            Figure::F5 => "f5",
        };
        f.write_str(s)
    }
}

#[derive(Serialize)]
struct WavelengthRow {
    campaign: String,
    tof_ms: f64,
    delta_t_us: f64,
    runs: u32,
    fitted: usize,
    wavelength_mean_um: Option<f64>,
    wavelength_std_um: Option<f64>,
    wavelength_theory_um: Option<f64>,
    relative_error: Option<f64>,
}

#[derive(Serialize)]
struct ShortTermRow {
    campaign: String,
    tof_ms: f64,
    t_ms: f64,
    delta_t_us: f64,
    adev_1run_rad: Option<f64>,
    ci_low: Option<f64>,
    ci_high: Option<f64>,
    contrast_mean: Option<f64>,
    contrast_std: Option<f64>,
    model_contrast: Option<f64>,
}

#[derive(Serialize)]
struct AllanFigureRow {
    campaign: String,
    scheme: Scheme,
    point: u32,
    t_ms: f64,
    delta_t_us: f64,
    t_sep_ms: f64,
    tau_runs: u64,
    tau_seconds: f64,
    adev_rad: f64,
    ci_low: f64,
    ci_high: f64,
    density_rad_rthz: Option<f64>,
}

fn require<'a>(
    campaigns: &'a [CampaignOutput],
    figure: Figure,
    schemes: &[Scheme],
    label: &str,
) -> Result<Vec<&'a CampaignOutput>> {
    let found: Vec<&CampaignOutput> = campaigns.iter().filter(|c| schemes.contains(&c.config.scheme)).collect();
    if found.is_empty() {
        return Err(Error::MissingCampaign {
            figure: figure.to_string(),
            required: label.into(),
        });
    }
    if let Some(c) = found.iter().find(|c| c.runs.is_empty()) {
        return Err(Error::InsufficientData(format!("campaign {:?} has no runs", c.config.name)));
    }
    Ok(found)
}

fn allan_rows(campaigns: &[&CampaignOutput]) -> Vec<AllanFigureRow> {
    let mut rows = Vec::new();
    for c in campaigns {
        for a in &c.allan {
            let Some(p) = c.points.iter().find(|p| p.point == a.point) else {
                continue;
            };
            rows.push(AllanFigureRow {
                campaign: c.config.name.clone(),
                scheme: c.config.scheme,
                point: a.point,
                t_ms: p.t_ms,
                delta_t_us: p.delta_t_us,
                t_sep_ms: p.t_sep_ms,
                tau_runs: a.tau_runs,
                tau_seconds: a.tau_seconds,
                adev_rad: a.adev_rad,
                ci_low: a.ci_low,
                ci_high: a.ci_high,
                density_rad_rthz: p.density_rad_rthz,
            });
        }
    }
    rows
}

/// Plot-ready CSV for `figure` built from campaign outputs.
///
/// * `f2`: `campaign,tof_ms,delta_t_us,runs,fitted,wavelength_mean_um,
///   wavelength_std_um,wavelength_theory_um,relative_error`, one row per
///   grid point of every asymmetric campaign.
/// * `f3`: `campaign,tof_ms,t_ms,delta_t_us,adev_1run_rad,ci_low,ci_high,
///   contrast_mean,contrast_std,model_contrast`, where `model_contrast` is
///   the configured contrast reduced by a 5 degree imaging tilt.
/// * `f4`, `f5`: `campaign,scheme,point,t_ms,delta_t_us,t_sep_ms,tau_runs,
///   tau_seconds,adev_rad,ci_low,ci_high,density_rad_rthz`.
///
/// `f4` needs a symmetric and a separated asymmetric campaign, `f5` an
/// overlapped and a separated one.
pub fn figure_data(campaigns: &[CampaignOutput], figure: Figure) -> Result<Vec<u8>> {
    let spatial = [Scheme::AsymmetricSeparated, Scheme::AsymmetricOverlapped];
    match figure {
        Figure::F2 => {
            let found = require(campaigns, figure, &spatial, "an asymmetric campaign scanning delta_t_us")?;
            let mut rows = Vec::new();
            for c in found {
                for p in &c.points {
                    let fitted = c.runs.iter().filter(|r| r.point == p.point && r.k_per_m.is_some()).count();
                    let rel = match (p.wavelength_mean_m, p.wavelength_theory_m) {
                        (Some(m), Some(t)) => Some(m / t - 1.0),
                        _ => None,
                    };
                    rows.push(WavelengthRow {
                        campaign: c.config.name.clone(),
                        tof_ms: p.tof_ms,
                        delta_t_us: p.delta_t_us,
                        runs: p.runs,
                        fitted,
                        wavelength_mean_um: p.wavelength_mean_m.map(|v| v * 1e6),
                        wavelength_std_um: p.wavelength_std_m.map(|v| v * 1e6),
                        wavelength_theory_um: p.wavelength_theory_m.map(|v| v * 1e6),
                        relative_error: rel,
                    });
                }
            }
            csv_bytes(&rows)
        }
        Figure::F3 => {
            let found = require(campaigns, figure, &spatial, "an asymmetric campaign scanning delta_t_us")?;
            let mut rows = Vec::new();
            for c in found {
                let cfg = &c.config;
                let sigma_v = crate::synthesis::thermal_velocity_sigma(
                    &crate::physics::AtomSpecies::rb87(),
                    cfg.cloud.temperature_nk * 1e-9,
                ) * cfg.expansion_scale;
                for p in &c.points {
                    let one = c.allan.iter().find(|a| a.point == p.point && a.tau_runs == 1);
                    let model = p.wavelength_theory_m.and_then(|w| {
                        let sigma = (cfg.cloud.sigma_um * 1e-6).hypot(sigma_v * p.tof_ms * 1e-3);
                        let sigma_perp = cfg.imaging.sigma_perp_um.map_or(sigma, |v| v * 1e-6);
                        let k = 2.0 * std::f64::consts::PI / w;
                        tilt_contrast_factor(k, sigma_perp, MODEL_TILT_DEG.to_radians())
                            .ok()
                            .map(|f| cfg.contrast * f)
                    });
                    rows.push(ShortTermRow {
                        campaign: cfg.name.clone(),
                        tof_ms: p.tof_ms,
                        t_ms: p.t_ms,
                        delta_t_us: p.delta_t_us,
                        adev_1run_rad: one.map(|a| a.adev_rad),
                        ci_low: one.map(|a| a.ci_low),
                        ci_high: one.map(|a| a.ci_high),
                        contrast_mean: p.contrast_mean,
                        contrast_std: p.contrast_std,
                        model_contrast: model,
                    });
                }
            }
            csv_bytes(&rows)
        }
        Figure::F4 => {
            let sym = require(campaigns, figure, &[Scheme::Symmetric], "a symmetric campaign")?;
            let sep = require(campaigns, figure, &[Scheme::AsymmetricSeparated], "an asymmetric-separated campaign")?;
            csv_bytes(&allan_rows(&[sym, sep].concat()))
        }
        Figure::F5 => {
            let ovl = require(campaigns, figure, &[Scheme::AsymmetricOverlapped], "an asymmetric-overlapped campaign")?;
            let sep = require(campaigns, figure, &[Scheme::AsymmetricSeparated], "an asymmetric-separated campaign")?;
            csv_bytes(&allan_rows(&[ovl, sep].concat()))
        }
    }
}

/// [`figure_data`] written atomically to `path`. Nothing is written on
/// error.
pub fn write_figure(campaigns: &[CampaignOutput], figure: Figure, path: &Path) -> Result<()> {
    let bytes = figure_data(campaigns, figure)?;
    write_atomic(path, &bytes)
}
