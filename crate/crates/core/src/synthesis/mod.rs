//! Synthetic single-shot density profiles.
//!
//! The imaging frame follows the kicked output port, whose envelope centre
//! sits at `cloud.center`. The unkicked port trails it by `v_r * t_sep`.
//! Each port carries `G(x) [1 - B sin(k (x - x_c) - phi_port)]` with the
//! fringe referenced to its own envelope centre, so the fringe co-moves with
//! the port. The kicked port carries the interferometer phase, the unkicked
//! port the same phase plus `port_phase_offset`.
//!
//! A symmetric sequence (`delta_T = 0`) has no spatial fringe; the ports
//! carry populations `N (1 -/+ B cos phi) / 2` (kicked/unkicked).

mod imaging;
mod noise;
mod profile;
mod savgol;

use std::f64::consts::PI;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

pub use imaging::{tilt_contrast_factor, Imaging};
pub use noise::{apply_noise, NoiseModel};
pub use profile::{DensityProfile, ImagingMode, ProfileMeta};
pub use savgol::{savitzky_golay, savitzky_golay_coefficients};

use crate::error::{Error, Result};
use crate::physics::{self, AtomSpecies, InterferometerConfig, K_B};
use crate::rng::{stream_rng, STREAM_LASER};

/// Minimum samples per fringe period on a synthesized axis.
pub const MIN_SAMPLES_PER_PERIOD: f64 = 20.0;
/// Half-width of the default window in envelope sigmas.
pub const WINDOW_SIGMAS: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CloudState {
    pub center: f64,
    pub sigma: f64,
    pub velocity_sigma: f64,
    pub atom_number: f64,
    /// Accumulated common-mode free fall (m); bookkeeping only, it never
    /// shifts the profile axis.
    #[serde(default)]
    pub fall: f64,
}

impl CloudState {
    pub fn new(center: f64, sigma: f64, velocity_sigma: f64, atom_number: f64) -> Result<Self> {
        let c = CloudState {
            center,
            sigma,
            velocity_sigma,
            atom_number,
            fall: 0.0,
        };
        c.validate()?;
        Ok(c)
    }

    /// Cloud whose velocity spread corresponds to `temperature` (K).
    pub fn thermal(species: &AtomSpecies, sigma: f64, temperature: f64, atom_number: f64) -> Result<Self> {
        Self::new(0.0, sigma, thermal_velocity_sigma(species, temperature), atom_number)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma must be > 0, got {}", self.sigma)));
        }
        if !(self.velocity_sigma >= 0.0 && self.velocity_sigma.is_finite()) {
            return Err(Error::InvalidParameter("velocity sigma must be >= 0".into()));
        }
        if !(self.atom_number > 0.0 && self.atom_number.is_finite()) {
            return Err(Error::InvalidParameter("atom number must be > 0".into()));
        }
        if !self.center.is_finite() {
            return Err(Error::InvalidParameter("center must be finite".into()));
        }
        Ok(())
    }
}

impl Default for CloudState {
    /// 50 um in-trap width (sigma = 25 um), 50 nK Rb-87, 2e6 atoms.
    fn default() -> Self {
        CloudState {
            center: 0.0,
            sigma: 25e-6,
            velocity_sigma: thermal_velocity_sigma(&AtomSpecies::rb87(), 50e-9),
            atom_number: 2e6,
            fall: 0.0,
        }
    }
}

/// `sqrt(k_B T / m)`.
pub fn thermal_velocity_sigma(species: &AtomSpecies, temperature: f64) -> f64 {
    (K_B * temperature / species.mass).sqrt()
}

/// Ballistic expansion for time `t`: the width grows as
/// `sqrt(sigma0^2 + (sigma_v t)^2)`, the centre moves by `velocity * t`, and
/// the common-mode fall `g t^2 / 2` is accumulated in `fall`.
pub fn propagate_cloud(initial: &CloudState, t: f64, velocity: f64, gravity: f64) -> Result<CloudState> {
    if !(t >= 0.0) {
        return Err(Error::InvalidParameter(format!("propagation time must be >= 0, got {t}")));
    }
    if t == 0.0 {
        return Ok(*initial);
    }
    let spread = initial.velocity_sigma * t;
    Ok(CloudState {
        center: initial.center + velocity * t,
        sigma: initial.sigma.hypot(spread),
        fall: initial.fall + 0.5 * gravity * t * t,
        ..*initial
    })
}

/// Everything about a shot that is not interferometer physics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShotSettings {
    /// Cloud at release.
    pub cloud: CloudState,
    /// Fringe contrast B (population visibility for symmetric sequences).
    pub contrast: f64,
    /// Fringe phase of the unkicked port relative to the kicked port.
    pub port_phase_offset: f64,
    /// Scales the ballistic expansion rate, stretching both the envelope
    /// and the fringe wavelength. Uncalibrated; 1 reproduces the ideal model.
    pub expansion_scale: f64,
    pub imaging: Imaging,
    pub samples: usize,
    /// Explicit sampling window `(lo, hi)`; defaults to +-6 sigma around
    /// both ports.
    pub window: Option<(f64, f64)>,
}

impl Default for ShotSettings {
    fn default() -> Self {
        ShotSettings {
            cloud: CloudState::default(),
            contrast: 0.5,
            port_phase_offset: PI,
            expansion_scale: 1.0,
            imaging: Imaging::default(),
            samples: 2048,
            window: None,
        }
    }
}

impl ShotSettings {
    pub fn validate(&self) -> Result<()> {
        self.cloud.validate()?;
        if !(0.0..=1.0).contains(&self.contrast) {
            return Err(Error::InvalidParameter(format!("contrast must lie in [0, 1], got {}", self.contrast)));
        }
        if !(self.expansion_scale > 0.0 && self.expansion_scale.is_finite()) {
            return Err(Error::InvalidParameter("expansion scale must be > 0".into()));
        }
        if self.samples < 16 {
            return Err(Error::InvalidParameter("need at least 16 samples".into()));
        }
        if !self.port_phase_offset.is_finite() {
            return Err(Error::InvalidParameter("port phase offset must be finite".into()));
        }
        Ok(())
    }
}

/// One modulated output port.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FringePort {
    pub cloud: CloudState,
    pub contrast: f64,
    pub wavenumber: f64,
    pub phase: f64,
}

impl FringePort {
    fn shape(&self, x: f64, contrast_factor: f64) -> f64 {
        let u = x - self.cloud.center;
        let s = self.cloud.sigma;
        let env = (-0.5 * u * u / (s * s)).exp();
        if self.wavenumber == 0.0 {
            env
        } else {
            env * (1.0 - self.contrast * contrast_factor * (self.wavenumber * u - self.phase).sin())
        }
    }

    fn window_fraction(&self, lo: f64, hi: f64) -> f64 {
        let z = |x: f64| (x - self.cloud.center) / (self.cloud.sigma * std::f64::consts::SQRT_2);
        0.5 * (erf(z(hi)) - erf(z(lo)))
    }
}

/// The two output ports at the moment of imaging.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PortPair {
    /// Kicked port; carries the interferometer phase.
    pub port_a: FringePort,
    /// Unkicked port.
    pub port_b: FringePort,
    pub relative_velocity: f64,
}

impl PortPair {
    pub fn new(config: &InterferometerConfig, settings: &ShotSettings, phase: f64) -> Result<Self> {
        config.validate()?;
        settings.validate()?;
        let timing = &config.timing;
        let tof = timing.time_of_flight();
        let v_r = config.recoil_velocity();
        let mut released = settings.cloud;
        released.velocity_sigma *= settings.expansion_scale;
        let expanded = propagate_cloud(&released, tof, 0.0, config.gravity)?;
        let mut a = expanded;
        let mut b = expanded;
        b.center -= v_r * timing.t_sep;

        let (wavenumber, n_a, n_b) = if timing.delta_t == 0.0 {
            let v = settings.contrast * phase.cos();
            let n = expanded.atom_number;
            (0.0, 0.5 * n * (1.0 - v), 0.5 * n * (1.0 + v))
        } else {
            let k = physics::fringe_wavenumber(config)? / settings.expansion_scale;
            let n = 0.5 * expanded.atom_number;
            (k, n, n)
        };
        a.atom_number = n_a;
        b.atom_number = n_b;
        Ok(PortPair {
            port_a: FringePort {
                cloud: a,
                contrast: settings.contrast,
                wavenumber,
                phase,
            },
            port_b: FringePort {
                cloud: b,
                contrast: settings.contrast,
                wavenumber,
                phase: phase + settings.port_phase_offset,
            },
            relative_velocity: v_r,
        })
    }

    pub fn wavenumber(&self) -> f64 {
        self.port_a.wavenumber
    }

    pub fn total_atoms(&self) -> f64 {
        self.port_a.cloud.atom_number + self.port_b.cloud.atom_number
    }

    /// Default sampling window: +-6 sigma around both port centres.
    pub fn default_window(&self) -> (f64, f64) {
        let (ca, cb) = (self.port_a.cloud.center, self.port_b.cloud.center);
        let s = self.port_a.cloud.sigma.max(self.port_b.cloud.sigma);
        (ca.min(cb) - WINDOW_SIGMAS * s, ca.max(cb) + WINDOW_SIGMAS * s)
    }

    /// Sample count for `window`: at least `min_samples`, and at least 20
    /// per fringe period.
    pub fn sample_count(&self, window: (f64, f64), min_samples: usize) -> usize {
        let k = self.wavenumber();
        let mut n = min_samples.max(2);
        if k > 0.0 {
            let periods = (window.1 - window.0) * k / (2.0 * PI);
            let needed = (periods * MIN_SAMPLES_PER_PERIOD).ceil() as usize + 1;
            n = n.max(needed);
        }
        n
    }

    /// Renders the pair on `n` samples over `window`, multiplying the fringe
    /// contrast by `contrast_factor`. Each port is normalised so that its
    /// trapezoidal integral equals its atom number.
    pub fn render(&self, window: (f64, f64), n: usize, contrast_factor: f64) -> Result<DensityProfile> {
        let (lo, hi) = window;
        if !(hi > lo) || n < 2 {
            return Err(Error::InvalidParameter("empty sampling window".into()));
        }
        let total = self.total_atoms();
        let captured = (self.port_a.cloud.atom_number * self.port_a.window_fraction(lo, hi)
            + self.port_b.cloud.atom_number * self.port_b.window_fraction(lo, hi))
            / total;
        if captured < 0.99 {
            return Err(Error::WindowTooSmall { fraction: captured });
        }
        let step = (hi - lo) / (n - 1) as f64;
        let mut values = vec![0.0; n];
        for port in [&self.port_a, &self.port_b] {
            let shape: Vec<f64> = (0..n)
                .map(|i| port.shape(lo + i as f64 * step, contrast_factor))
                .collect();
            let norm = profile::trapezoid(&shape, step);
            if port.cloud.atom_number == 0.0 || norm == 0.0 {
                continue;
            }
            let scale = port.cloud.atom_number / norm;
            for (v, s) in values.iter_mut().zip(&shape) {
                *v += scale * s;
            }
        }
        DensityProfile::new(lo, step, values)
    }

    fn sampling(&self, settings: &ShotSettings) -> ((f64, f64), usize) {
        let window = settings.window.unwrap_or_else(|| self.default_window());
        (window, self.sample_count(window, settings.samples))
    }
}

/// Noiseless-optics synthesis: renders both ports with ideal imaging. The
/// only noise channel used here is the per-shot laser phase; detection
/// channels belong to [`apply_noise`].
pub fn synthesize_ports(
    config: &InterferometerConfig,
    settings: &ShotSettings,
    phase: f64,
    noise: &NoiseModel,
) -> Result<DensityProfile> {
    let phase = phase + laser_phase_noise(noise);
    let ports = PortPair::new(config, settings, phase)?;
    let (window, n) = ports.sampling(settings);
    let mut p = ports.render(window, n, 1.0)?;
    p.meta.timing = Some(config.timing);
    p.meta.shot_id = noise.rng_seed;
    Ok(p)
}

/// Line-of-sight absorption image of a port pair taken with `imaging`: the
/// fringe contrast is reduced by the tilt factor, the envelope is unchanged.
pub fn image_absorption(ports: &PortPair, imaging: &Imaging, window: (f64, f64), n: usize) -> Result<DensityProfile> {
    let sigma_perp = imaging.sigma_perp.unwrap_or(ports.port_a.cloud.sigma);
    let factor = tilt_contrast_factor(ports.wavenumber(), sigma_perp, imaging.tilt)?;
    let mut p = ports.render(window, n, factor)?;
    p.meta.mode = imaging.mode;
    Ok(p)
}

/// Full shot pipeline: ports (with laser phase noise), imaging, detection
/// noise, then optional Savitzky-Golay smoothing.
pub fn simulate_shot(
    config: &InterferometerConfig,
    settings: &ShotSettings,
    phase: f64,
    noise: &NoiseModel,
) -> Result<DensityProfile> {
    let phase = phase + laser_phase_noise(noise);
    let ports = PortPair::new(config, settings, phase)?;
    let (window, n) = ports.sampling(settings);
    let mut p = image_absorption(&ports, &settings.imaging, window, n)?;
    p.meta.timing = Some(config.timing);
    p.meta.shot_id = noise.rng_seed;
    let mut p = apply_noise(&p, noise);
    if let Some((w, order)) = settings.imaging.savgol {
        let smoothed = savitzky_golay(p.values(), w, order)?;
        p.values_mut().copy_from_slice(&smoothed);
    }
    Ok(p)
}

/// Laser phase deviation drawn for this shot.
pub fn laser_phase_noise(noise: &NoiseModel) -> f64 {
    if noise.laser_phase_sigma == 0.0 {
        return 0.0;
    }
    let mut rng = stream_rng(noise.rng_seed, STREAM_LASER);
    let z: f64 = StandardNormal.sample(&mut rng);
    noise.laser_phase_sigma * z
}
