use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::profile::DensityProfile;
use crate::error::{Error, Result};
use crate::rng::{stream_rng, STREAM_DETECTION};

/// Per-shot noise channels. All sigmas are one-sigma Gaussian widths.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Laser phase noise (rad/shot).
    pub laser_phase_sigma: f64,
    /// Camera translation relative to the lattice (m/shot).
    pub camera_jitter_sigma: f64,
    /// Additive detection noise per sample (profile units).
    pub additive_detection_sigma: f64,
    /// Fractional shot-to-shot atom number fluctuation.
    pub atom_number_fractional_sigma: f64,
    pub rng_seed: u64,
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        let sigmas = [
            self.laser_phase_sigma,
            self.camera_jitter_sigma,
            self.additive_detection_sigma,
            self.atom_number_fractional_sigma,
        ];
        if sigmas.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::InvalidParameter("noise sigmas must be finite and >= 0".into()));
        }
        Ok(())
    }

    pub fn with_seed(self, rng_seed: u64) -> Self {
        NoiseModel { rng_seed, ..self }
    }

    pub fn is_noiseless(&self) -> bool {
        self.laser_phase_sigma == 0.0
            && self.camera_jitter_sigma == 0.0
            && self.additive_detection_sigma == 0.0
            && self.atom_number_fractional_sigma == 0.0
    }
}

/// Applies atom-number scaling, camera translation (linear resampling on
/// the same axis) and additive detection noise, in that order. The output
/// is a pure function of the profile and `noise` (including its seed).
/// Detection noise may push tail samples below zero.
pub fn apply_noise(profile: &DensityProfile, noise: &NoiseModel) -> DensityProfile {
    let mut rng = stream_rng(noise.rng_seed, STREAM_DETECTION);
    let mut draw = || -> f64 { StandardNormal.sample(&mut rng) };

    let scale = (1.0 + noise.atom_number_fractional_sigma * draw()).max(0.0);
    let shift = noise.camera_jitter_sigma * draw();

    let mut out = profile.clone();
    if shift != 0.0 {
        for (i, v) in out.values_mut().iter_mut().enumerate() {
            *v = profile.interpolate(profile.position(i) - shift);
        }
    }
    if scale != 1.0 {
        out.values_mut().iter_mut().for_each(|v| *v *= scale);
    }
    if noise.additive_detection_sigma > 0.0 {
        for v in out.values_mut() {
            *v += noise.additive_detection_sigma * draw();
        }
    }
    out
}
