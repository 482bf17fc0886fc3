use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extraction::{optimize_overlap_time, ScanRange};
use crate::exec::Execution;
use crate::physics::{self, AtomSpecies, InterferometerConfig, SequenceTiming, STANDARD_GRAVITY};
use crate::rng::shot_seed;
use crate::synthesis::{simulate_shot, CloudState, DensityProfile, Imaging, ImagingMode, NoiseModel, ShotSettings};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// `delta_T = 0`; phase from population fringes of `fringe_runs` runs.
    Symmetric,
    /// Spatial fringe fitted on the kicked port alone.
    AsymmetricSeparated,
    /// Spatial fringe of both ports imaged while they still overlap.
    AsymmetricOverlapped,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Symmetric => "symmetric",
            Scheme::AsymmetricSeparated => "asymmetric-separated",
            Scheme::AsymmetricOverlapped => "asymmetric-overlapped",
        }
    }

    pub fn is_asymmetric(self) -> bool {
        self != Scheme::Symmetric
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "symmetric" => Ok(Scheme::Symmetric),
            "asymmetric-separated" => Ok(Scheme::AsymmetricSeparated),
            "asymmetric-overlapped" => Ok(Scheme::AsymmetricOverlapped),
            _ => Err(Error::Config(format!("unknown scheme {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScanVariable {
    #[serde(rename = "delta_t_us")]
    DeltaT,
    #[serde(rename = "t_ms")]
    T,
    #[serde(rename = "t_sep_ms")]
    TSep,
    #[serde(rename = "ramp_deg")]
    Ramp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scan {
    pub variable: ScanVariable,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CloudConfig {
    pub sigma_um: f64,
    pub temperature_nk: f64,
    pub atom_number: f64,
}

impl Default for CloudConfig {
    fn default() -> Self {
        CloudConfig {
            sigma_um: 25.0,
            temperature_nk: 50.0,
            atom_number: 2e6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImagingConfig {
    pub mode: ImagingMode,
    pub tilt_deg: f64,
    pub sigma_perp_um: Option<f64>,
    pub savgol_window: Option<usize>,
    pub savgol_order: usize,
}

impl Default for ImagingConfig {
    fn default() -> Self {
        ImagingConfig {
            mode: ImagingMode::Absorption,
            tilt_deg: 0.0,
            sigma_perp_um: None,
            savgol_window: None,
            savgol_order: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub laser_phase_rad: f64,
    pub camera_jitter_um: f64,
    /// Additive detection noise relative to the peak density of one port.
    pub detection_rel: f64,
    pub atom_number_frac: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitStrategy {
    /// Free fits, then refits at the batch median wavenumber.
    #[default]
    MedianK,
    Free,
}

/// A Monte Carlo campaign. Stored as JSON; every dimensional key carries
/// its unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignConfig {
    pub name: String,
    pub scheme: Scheme,
    pub scan: Option<Scan>,
    pub runs_per_point: u32,
    pub seed: u64,
    pub tof_ms: f64,
    pub max_tof_ms: f64,
    pub t_ms: f64,
    pub delta_t_us: f64,
    /// Imaging delay after the last pulse. Separated and symmetric schemes
    /// default to the rest of the time-of-flight budget, the overlapped
    /// scheme to the contrast optimum.
    pub t_sep_ms: Option<f64>,
    pub bragg_order: u32,
    pub gravity_m_s2: f64,
    /// Laser phase step per run; 16 deg for spatial schemes, 18 deg (one
    /// period per fringe) for the symmetric scheme.
    pub ramp_deg: Option<f64>,
    pub fringe_runs: u32,
    pub duty_cycle_s: f64,
    pub contrast: f64,
    pub port_phase_offset_rad: f64,
    pub expansion_scale: f64,
    pub samples: usize,
    pub cloud: CloudConfig,
    pub imaging: ImagingConfig,
    pub noise: NoiseConfig,
    pub fit: FitStrategy,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            name: "campaign".into(),
            scheme: Scheme::AsymmetricSeparated,
            scan: None,
            runs_per_point: 100,
            seed: 1,
            tof_ms: 218.0,
            max_tof_ms: 730.0,
            t_ms: 1.0,
            delta_t_us: 350.0,
            t_sep_ms: None,
            bragg_order: 1,
            gravity_m_s2: STANDARD_GRAVITY,
            ramp_deg: None,
            fringe_runs: 20,
            duty_cycle_s: 11.4,
            contrast: 0.5,
            port_phase_offset_rad: PI,
            expansion_scale: 1.0,
            samples: 2048,
            cloud: CloudConfig::default(),
            imaging: ImagingConfig::default(),
            noise: NoiseConfig::default(),
            fit: FitStrategy::MedianK,
        }
    }
}

/// Everything needed to run the shots of one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointPlan {
    pub index: u32,
    pub scan_value: f64,
    pub interferometer: InterferometerConfig,
    pub settings: ShotSettings,
    pub noise: NoiseModel,
    /// Laser phase step per run (rad).
    pub ramp: f64,
}

impl PointPlan {
    pub fn timing(&self) -> SequenceTiming {
        self.interferometer.timing
    }

    /// Noise-free interferometer phase of `run`, including the commanded
    /// laser ramp on the last pulse.
    pub fn run_phase(&self, run: u32) -> f64 {
        let mut cfg = self.interferometer;
        cfg.laser_phases[2] = self.ramp * run as f64;
        physics::mz_phase(&cfg).total
    }

    /// Simulated profile of shot `run` in a campaign seeded with `master`.
    pub fn shot(&self, master: u64, run: u32) -> Result<DensityProfile> {
        let noise = self.noise.with_seed(shot_seed(master, self.index, run));
        simulate_shot(&self.interferometer, &self.settings, self.run_phase(run), &noise)
    }

    /// Crops a separated-scheme shot to the kicked port. The unkicked port
    /// is centred at `-v_r t_sep`.
    pub fn kicked_port(&self, profile: &DensityProfile) -> Result<DensityProfile> {
        let d = self.interferometer.recoil_velocity() * self.timing().t_sep;
        profile.crop(-0.5 * d, profile.end())
    }
}

/// Largest mismatch between the port fringes, `k v_r t_sep - dphi`, at
/// which an overridden overlapped imaging delay is still accepted.
const OVERLAP_PHASE_TOLERANCE: f64 = 2.0 * PI / 3.0;

impl CampaignConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn ramp_deg(&self) -> f64 {
        self.ramp_deg.unwrap_or(match self.scheme {
            Scheme::Symmetric => 18.0,
            _ => 16.0,
        })
    }

    /// Copy with the scheme default ramp written out.
    pub fn resolved(&self) -> Self {
        CampaignConfig {
            ramp_deg: Some(self.ramp_deg()),
            ..self.clone()
        }
    }

    /// Per-sample spacing of the phase series in runs.
    pub fn runs_per_sample(&self) -> u32 {
        match self.scheme {
            Scheme::Symmetric => self.fringe_runs,
            _ => 1,
        }
    }

    pub fn grid(&self) -> Vec<f64> {
        match &self.scan {
            Some(s) => s.values.clone(),
            None => vec![f64::NAN],
        }
    }

    fn cfg_err<T>(msg: impl Into<String>) -> Result<T> {
        Err(Error::Config(msg.into()))
    }

    /// Checks everything that does not depend on a grid point.
    pub fn validate(&self) -> Result<()> {
        if let Some(scan) = &self.scan {
            if scan.values.is_empty() {
                return Self::cfg_err("scan grid is empty");
            }
            if scan.values.iter().any(|v| !v.is_finite()) {
                return Self::cfg_err("scan values must be finite");
            }
        }
        if self.runs_per_point == 0 {
            return Self::cfg_err("runs_per_point must be >= 1");
        }
        if self.bragg_order == 0 {
            return Self::cfg_err("bragg_order must be >= 1");
        }
        for (name, v) in [
            ("tof_ms", self.tof_ms),
            ("max_tof_ms", self.max_tof_ms),
            ("duty_cycle_s", self.duty_cycle_s),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Self::cfg_err(format!("{name} must be > 0"));
            }
        }
        if self.tof_ms > self.max_tof_ms {
            return Self::cfg_err(format!(
                "tof_ms {} exceeds the time-of-flight budget max_tof_ms {}",
                self.tof_ms, self.max_tof_ms
            ));
        }
        if !self.ramp_deg().is_finite() {
            return Self::cfg_err("ramp_deg must be finite");
        }
        if self.scheme == Scheme::Symmetric {
            if self.fringe_runs < 6 {
                return Self::cfg_err("fringe_runs must be >= 6");
            }
            if self.runs_per_point < self.fringe_runs {
                return Self::cfg_err("symmetric campaigns need runs_per_point >= fringe_runs");
            }
        }
        let n = &self.noise;
        if [n.laser_phase_rad, n.camera_jitter_um, n.detection_rel, n.atom_number_frac]
            .iter()
            .any(|s| !(s.is_finite() && *s >= 0.0))
        {
            return Self::cfg_err("noise sigmas must be finite and >= 0");
        }
        if self.imaging.tilt_deg.abs() >= 90.0 {
            return Self::cfg_err("tilt_deg must lie in (-90, 90)");
        }
        Ok(())
    }

    fn settings(&self) -> Result<ShotSettings> {
        let species = AtomSpecies::rb87();
        let cloud = CloudState::thermal(
            &species,
            self.cloud.sigma_um * 1e-6,
            self.cloud.temperature_nk * 1e-9,
            self.cloud.atom_number,
        )
        .map_err(|e| Error::Config(e.to_string()))?;
        let savgol = self.imaging.savgol_window.map(|w| (w, self.imaging.savgol_order));
        let s = ShotSettings {
            cloud,
            contrast: self.contrast,
            port_phase_offset: self.port_phase_offset_rad,
            expansion_scale: self.expansion_scale,
            imaging: Imaging {
                mode: self.imaging.mode,
                tilt: self.imaging.tilt_deg.to_radians(),
                sigma_perp: self.imaging.sigma_perp_um.map(|v| v * 1e-6),
                savgol,
            },
            samples: self.samples,
            window: None,
        };
        s.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(s)
    }

    /// Resolves grid point `index`. For an overlapped campaign without an
    /// explicit `t_sep_ms` this runs the overlap optimiser.
    pub fn plan_point(&self, index: u32, exec: Execution) -> Result<PointPlan> {
        let grid = self.grid();
        let value = *grid
            .get(index as usize)
            .ok_or_else(|| Error::Config(format!("no grid point {index}")))?;
        let (mut t_ms, mut delta_t_us, mut t_sep_ms, mut ramp_deg) =
            (self.t_ms, self.delta_t_us, self.t_sep_ms, self.ramp_deg());
        match self.scan.as_ref().map(|s| s.variable) {
            Some(ScanVariable::DeltaT) => delta_t_us = value,
            Some(ScanVariable::T) => t_ms = value,
            Some(ScanVariable::TSep) => t_sep_ms = Some(value),
            Some(ScanVariable::Ramp) => ramp_deg = value,
            None => {}
        }
        match self.scheme {
            Scheme::Symmetric if delta_t_us != 0.0 => {
                return Self::cfg_err(format!("symmetric scheme requires delta_t_us = 0, got {delta_t_us}"))
            }
            Scheme::AsymmetricSeparated | Scheme::AsymmetricOverlapped if delta_t_us == 0.0 => {
                return Self::cfg_err("asymmetric schemes require delta_t_us != 0")
            }
            _ => {}
        }
        if !(t_ms > 0.0) {
            return Self::cfg_err(format!("t_ms must be > 0, got {t_ms}"));
        }
        let tof = self.tof_ms * 1e-3;
        let t1 = t_ms * 1e-3;
        let delta_t = delta_t_us * 1e-6;
        let pulses = 2.0 * t1 + delta_t;
        if pulses >= tof {
            return Self::cfg_err(format!(
                "pulse sequence ({:.3} ms) does not fit in tof_ms {}",
                pulses * 1e3,
                self.tof_ms
            ));
        }
        let budget = tof - pulses;

        let settings = self.settings()?;
        let mut interferometer = InterferometerConfig::new(
            SequenceTiming::with_total_tof(tof, t1, delta_t, budget.min(t_sep_ms.unwrap_or(0.0) * 1e-3))
                .map_err(|e| Error::Config(e.to_string()))?,
        );
        interferometer.bragg_order = self.bragg_order;
        interferometer.gravity = self.gravity_m_s2;
        interferometer.chirp_rate = physics::compensating_chirp(&interferometer.species, self.gravity_m_s2);

        let t_sep = match (self.scheme, t_sep_ms) {
            (_, Some(ms)) => {
                let t = ms * 1e-3;
                if !(t >= 0.0) || t > budget {
                    return Self::cfg_err(format!(
                        "t_sep_ms {ms} outside [0, {:.3}] left by the time-of-flight budget",
                        budget * 1e3
                    ));
                }
                if self.scheme == Scheme::AsymmetricOverlapped {
                    let k = physics::fringe_wavenumber(&interferometer)? / self.expansion_scale;
                    let mismatch = physics::wrap_phase(k * interferometer.recoil_velocity() * t - self.port_phase_offset_rad);
                    if mismatch.abs() > OVERLAP_PHASE_TOLERANCE {
                        return Self::cfg_err(format!(
                            "t_sep_ms {ms} is far from the overlap optimum (port fringes {mismatch:.2} rad apart)"
                        ));
                    }
                }
                t
            }
            (Scheme::AsymmetricOverlapped, None) => {
                let k = physics::fringe_wavenumber(&interferometer)? / self.expansion_scale;
                let period = 2.0 * PI / (k * interferometer.recoil_velocity());
                let stop = (0.98 * period).min(budget);
                let range = ScanRange::new(0.02 * period.min(budget), stop, 49)?;
                optimize_overlap_time(&interferometer, &settings, range, exec)?.best_t_sep
            }
            (_, None) => budget,
        };
        interferometer.timing = SequenceTiming::with_total_tof(tof, t1, delta_t, t_sep).map_err(|e| Error::Config(e.to_string()))?;

        let noise = NoiseModel {
            laser_phase_sigma: self.noise.laser_phase_rad,
            camera_jitter_sigma: self.noise.camera_jitter_um * 1e-6,
            additive_detection_sigma: self.noise.detection_rel * port_peak_density(&interferometer, &settings),
            atom_number_fractional_sigma: self.noise.atom_number_frac,
            rng_seed: 0,
        };
        Ok(PointPlan {
            index,
            scan_value: value,
            interferometer,
            settings,
            noise,
            ramp: ramp_deg.to_radians(),
        })
    }
}

/// Peak density of one port (half the atoms) at imaging.
fn port_peak_density(cfg: &InterferometerConfig, settings: &ShotSettings) -> f64 {
    let c = &settings.cloud;
    let sigma = c
        .sigma
        .hypot(c.velocity_sigma * settings.expansion_scale * cfg.timing.time_of_flight());
    0.5 * c.atom_number / ((2.0 * PI).sqrt() * sigma)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_defaults_and_units() {
        let c = CampaignConfig::from_json(r#"{"scheme": "symmetric", "delta_t_us": 0}"#).unwrap();
        assert_eq!(c.scheme, Scheme::Symmetric);
        assert_eq!(c.ramp_deg(), 18.0);
        assert_eq!(c.runs_per_sample(), 20);
        let back = CampaignConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(back, c);
        assert!(CampaignConfig::from_json(r#"{"delta_t": 1}"#).is_err());
    }

    #[test]
    fn scheme_constraints() {
        let sym = CampaignConfig {
            scheme: Scheme::Symmetric,
            ..Default::default()
        };
        assert!(matches!(sym.plan_point(0, Execution::Sequential), Err(Error::Config(_))));
        let asym = CampaignConfig {
            delta_t_us: 0.0,
            ..Default::default()
        };
        assert!(matches!(asym.plan_point(0, Execution::Sequential), Err(Error::Config(_))));
    }

    #[test]
    fn budget_is_enforced() {
        let c = CampaignConfig {
            tof_ms: 800.0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        let c = CampaignConfig {
            t_ms: 120.0,
            ..Default::default()
        };
        assert!(c.plan_point(0, Execution::Sequential).is_err());
    }

    #[test]
    fn separated_default_uses_remaining_budget() {
        let c = CampaignConfig::default();
        let p = c.plan_point(0, Execution::Sequential).unwrap();
        let t = p.timing();
        assert_eq!(t.t0, 0.0);
        assert!((t.time_of_flight() - 0.218).abs() < 1e-12);
    }

    #[test]
    fn overlapped_override_must_be_near_optimum() {
        let base = CampaignConfig {
            scheme: Scheme::AsymmetricOverlapped,
            tof_ms: 722.0,
            t_sep_ms: Some(19.0),
            ..Default::default()
        };
        assert!(base.plan_point(0, Execution::Sequential).is_ok());
        let far = CampaignConfig {
            tof_ms: 218.0,
            ..base
        };
        assert!(matches!(far.plan_point(0, Execution::Sequential), Err(Error::Config(_))));
    }

    #[test]
    fn empty_grid_rejected() {
        let c = CampaignConfig {
            scan: Some(Scan {
                variable: ScanVariable::DeltaT,
                values: vec![],
            }),
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }
}
