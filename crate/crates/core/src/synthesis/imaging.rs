use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use super::profile::ImagingMode;
use crate::error::{Error, Result};

/// Readout optics for one shot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Imaging {
    pub mode: ImagingMode,
    /// Angle between the imaging light and the fringe planes (rad).
    pub tilt: f64,
    /// Transverse envelope width integrated along the line of sight; the
    /// port envelope width is used when unset.
    pub sigma_perp: Option<f64>,
    /// Savitzky-Golay `(window, order)` applied after noise.
    pub savgol: Option<(usize, usize)>,
}

impl Default for Imaging {
    fn default() -> Self {
        Imaging {
            mode: ImagingMode::Absorption,
            tilt: 0.0,
            sigma_perp: None,
            savgol: None,
        }
    }
}

/// Contrast surviving line-of-sight integration through a Gaussian
/// transverse envelope of width `sigma_perp` when the light is tilted by
/// `theta`: `exp(-(k sigma_perp tan(theta))^2 / 2)`.
pub fn tilt_contrast_factor(wavenumber: f64, sigma_perp: f64, theta: f64) -> Result<f64> {
    if !(theta.abs() < FRAC_PI_2) {
        return Err(Error::InvalidParameter(format!("tilt must lie in (-pi/2, pi/2), got {theta}")));
    }
    if sigma_perp < 0.0 {
        return Err(Error::InvalidParameter("sigma_perp must be >= 0".into()));
    }
    if theta == 0.0 {
        return Ok(1.0);
    }
    let a = wavenumber * sigma_perp * theta.tan();
    Ok((-0.5 * a * a).exp())
}
