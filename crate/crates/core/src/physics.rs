//! Closed-form interferometer phase and geometry.
//!
//! SI units throughout. The timing asymmetry `delta_t` is signed
//! (`T2 = T1 + delta_t`); magnitude-only expressions use `|delta_t|`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reduced Planck constant (J s).
pub const HBAR: f64 = 1.054_571_817e-34;
/// Boltzmann constant (J/K).
pub const K_B: f64 = 1.380_649e-23;
/// Rubidium-87 atomic mass (kg).
pub const RB87_MASS: f64 = 1.443_16e-25;
/// Bragg lattice wavelength (m), 1560 nm doubled.
pub const RB87_LATTICE_WAVELENGTH: f64 = 780e-9;
/// Standard gravity (m/s^2) used as the default projection on the lattice axis.
pub const STANDARD_GRAVITY: f64 = 9.81;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtomSpecies {
    pub mass: f64,
    pub optical_wavelength: f64,
}

impl AtomSpecies {
    pub fn new(mass: f64, optical_wavelength: f64) -> Result<Self> {
        let s = AtomSpecies {
            mass,
            optical_wavelength,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn rb87() -> Self {
        AtomSpecies {
            mass: RB87_MASS,
            optical_wavelength: RB87_LATTICE_WAVELENGTH,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mass.is_finite() && self.mass > 0.0) {
            return Err(Error::InvalidParameter(format!("mass must be > 0, got {}", self.mass)));
        }
        if !(self.optical_wavelength.is_finite() && self.optical_wavelength > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "optical wavelength must be > 0, got {}",
                self.optical_wavelength
            )));
        }
        Ok(())
    }

    /// Single-photon wavenumber `2 pi / lambda` (rad/m).
    pub fn wavenumber(&self) -> f64 {
        2.0 * PI / self.optical_wavelength
    }

    /// Effective two-photon wavevector `4 pi / lambda` (rad/m).
    pub fn effective_wavevector(&self) -> f64 {
        2.0 * self.wavenumber()
    }
}

impl Default for AtomSpecies {
    fn default() -> Self {
        Self::rb87()
    }
}

/// Pulse timing. `t0` is release to first beamsplitter, `t_sep` final
/// beamsplitter to imaging.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SequenceTiming {
    pub t0: f64,
    pub t1: f64,
    pub delta_t: f64,
    pub t_sep: f64,
}

impl SequenceTiming {
    pub fn new(t0: f64, t1: f64, delta_t: f64, t_sep: f64) -> Result<Self> {
        let t = SequenceTiming {
            t0,
            t1,
            delta_t,
            t_sep,
        };
        t.validate()?;
        Ok(t)
    }

    /// Builds a timing whose total time of flight is `tof`, placing the
    /// remainder before the first pulse.
    pub fn with_total_tof(tof: f64, t1: f64, delta_t: f64, t_sep: f64) -> Result<Self> {
        let t0 = tof - (2.0 * t1 + delta_t) - t_sep;
        // Absorb rounding when the sequence exactly fills the budget.
        let t0 = if t0 < 0.0 && t0 > -1e-15 * tof.abs().max(1.0) { 0.0 } else { t0 };
        Self::new(t0, t1, delta_t, t_sep)
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("T0", self.t0),
            ("T1", self.t1),
            ("T2", self.t2()),
            ("t_sep", self.t_sep),
        ];
        for (name, v) in fields {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidParameter(format!("{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }

    pub fn t2(&self) -> f64 {
        self.t1 + self.delta_t
    }

    /// Total time of flight after release, `T0 + T1 + T2 + t_sep`.
    pub fn time_of_flight(&self) -> f64 {
        self.t0 + self.t1 + self.t2() + self.t_sep
    }

    /// Returns the same sequence with a new `t_sep`, keeping the total time
    /// of flight fixed by moving the first pulse.
    pub fn with_t_sep_fixed_tof(&self, t_sep: f64) -> Result<Self> {
        Self::with_total_tof(self.time_of_flight(), self.t1, self.delta_t, t_sep)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterferometerConfig {
    pub species: AtomSpecies,
    pub timing: SequenceTiming,
    pub bragg_order: u32,
    /// Signed projection of gravity on the lattice axis (m/s^2).
    pub gravity: f64,
    /// Frequency chirp rate alpha (Hz/s).
    pub chirp_rate: f64,
    /// Laser phases of the three pulses (rad).
    pub laser_phases: [f64; 3],
}

impl InterferometerConfig {
    /// Rb-87 sequence with gravity fully compensated by the chirp.
    pub fn new(timing: SequenceTiming) -> Self {
        let species = AtomSpecies::rb87();
        InterferometerConfig {
            species,
            timing,
            bragg_order: 1,
            gravity: STANDARD_GRAVITY,
            chirp_rate: compensating_chirp(&species, STANDARD_GRAVITY),
            laser_phases: [0.0; 3],
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.species.validate()?;
        self.timing.validate()?;
        if self.bragg_order < 1 {
            return Err(Error::InvalidParameter("Bragg order must be >= 1".into()));
        }
        let finite = self.gravity.is_finite()
            && self.chirp_rate.is_finite()
            && self.laser_phases.iter().all(|p| p.is_finite());
        if !finite {
            return Err(Error::InvalidParameter("non-finite interferometer parameter".into()));
        }
        Ok(())
    }

    pub fn recoil_velocity(&self) -> f64 {
        recoil_velocity(&self.species, self.bragg_order)
    }

    pub fn with_timing(&self, timing: SequenceTiming) -> Self {
        InterferometerConfig { timing, ..*self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseBreakdown {
    pub propagation: f64,
    pub laser: f64,
    pub separation_offset: f64,
    pub total: f64,
}

/// Chirp rate that exactly cancels the Doppler shift of a falling atom,
/// `alpha = k_eff g / 2 pi`.
pub fn compensating_chirp(species: &AtomSpecies, gravity: f64) -> f64 {
    species.effective_wavevector() * gravity / (2.0 * PI)
}

/// Recoil velocity `2 n hbar k / m` of an order-`n` Bragg transition.
pub fn recoil_velocity(species: &AtomSpecies, n: u32) -> f64 {
    2.0 * n as f64 * HBAR * species.wavenumber() / species.mass
}

/// Spatial fringe wavelength `pi T_TOF / (n k |delta_T|)`.
pub fn fringe_wavelength(config: &InterferometerConfig) -> Result<f64> {
    let dt = config.timing.delta_t;
    if dt == 0.0 {
        return Err(Error::InfiniteFringeWavelength);
    }
    let tof = config.timing.time_of_flight();
    if tof <= 0.0 {
        return Err(Error::InvalidParameter("time of flight must be > 0".into()));
    }
    let n = config.bragg_order as f64;
    Ok(PI * tof / (n * config.species.wavenumber() * dt.abs()))
}

/// Spatial fringe wavenumber `2 pi / lambda_fringe` (rad/m).
pub fn fringe_wavenumber(config: &InterferometerConfig) -> Result<f64> {
    Ok(2.0 * PI / fringe_wavelength(config)?)
}

/// Separation of the two arms at the final beamsplitter, `v_r |delta_T|`.
pub fn beamsplitter_separation(config: &InterferometerConfig) -> f64 {
    config.recoil_velocity() * config.timing.delta_t.abs()
}

/// Wait after the final beamsplitter that moves the ports a quarter fringe
/// apart: `(lambda_fringe / 4) / v_r`.
pub fn overlap_wait_time(config: &InterferometerConfig) -> Result<f64> {
    Ok(fringe_wavelength(config)? / (4.0 * config.recoil_velocity()))
}

/// Mach-Zehnder phase. The propagation term uses `T = T1`; for an
/// asymmetric sequence the arm mismatch adds the constant
/// `delta_x * p_bar / hbar` with `p_bar = m v_r / 2`.
pub fn mz_phase(config: &InterferometerConfig) -> PhaseBreakdown {
    let n = config.bragg_order as f64;
    let t = config.timing.t1;
    let propagation = n
        * (config.species.effective_wavevector() * config.gravity - 2.0 * PI * config.chirp_rate)
        * t
        * t;
    let [p1, p2, p3] = config.laser_phases;
    let laser = p1 - 2.0 * p2 + p3;
    let separation_offset = if config.timing.delta_t == 0.0 {
        0.0
    } else {
        let v_r = config.recoil_velocity();
        let dx = v_r * config.timing.delta_t;
        dx * (config.species.mass * v_r / 2.0) / HBAR
    };
    PhaseBreakdown {
        propagation,
        laser,
        separation_offset,
        total: propagation + laser + separation_offset,
    }
}

/// Separation phase at position `x`: `dx p_bar / hbar + (m dx / t) x / hbar`.
pub fn separation_phase(species: &AtomSpecies, dx: f64, p_bar: f64, t: f64, x: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::InvalidParameter(format!("expansion time must be > 0, got {t}")));
    }
    let offset = dx * p_bar / HBAR;
    let dp = species.mass * dx / t;
    Ok(offset + dp * x / HBAR)
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_phase(phi: f64) -> f64 {
    let w = (phi + PI).rem_euclid(2.0 * PI) - PI;
    if w <= -PI {
        w + 2.0 * PI
    } else {
        w
    }
}
