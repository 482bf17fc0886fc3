use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};

use super::config::{CampaignConfig, FitStrategy, PointPlan, Scheme};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::extraction::{
    fit_batch_median_k, fit_population_fringe, fit_spatial_fringe, population_phase, population_readout,
    subtract_laser_ramp, FitKind, FitResult, FitStatus, PhaseRecord, PhaseSeries,
};
use crate::physics::{self, wrap_phase};
use crate::rng::shot_seed;
use crate::stability::{allan_deviation, default_taus, fit_noise_slope, NoiseSummary};
use crate::synthesis::DensityProfile;

/// One shot of a campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub campaign: String,
    pub point: u32,
    pub run: u32,
    pub scheme: Scheme,
    pub scan_value: f64,
    pub t0_s: f64,
    pub t1_s: f64,
    pub delta_t_s: f64,
    pub t_sep_s: f64,
    pub tof_s: f64,
    /// Commanded laser phase, wrapped.
    pub laser_phase_rad: f64,
    /// Fitted spatial fringe phase; empty for the symmetric scheme.
    pub phase_rad: Option<f64>,
    pub phase_sigma_rad: Option<f64>,
    /// Kicked-port population fraction; symmetric scheme only.
    pub fraction: Option<f64>,
    pub contrast: Option<f64>,
    /// Wavenumber of the free (stage-1) fit.
    pub k_per_m: Option<f64>,
    pub rss: Option<f64>,
    pub iterations: Option<usize>,
    pub status: String,
    pub seed: u64,
}

/// Aggregate of one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub point: u32,
    pub scan_value: f64,
    pub t_ms: f64,
    pub delta_t_us: f64,
    pub t_sep_ms: f64,
    pub tof_ms: f64,
    pub runs: u32,
    pub failed: u32,
    pub phase_samples: u32,
    pub contrast_mean: Option<f64>,
    pub contrast_std: Option<f64>,
    pub wavelength_mean_m: Option<f64>,
    pub wavelength_std_m: Option<f64>,
    pub wavelength_theory_m: Option<f64>,
    pub median_k_per_m: Option<f64>,
    pub noise_slope: Option<f64>,
    pub density_rad_rthz: Option<f64>,
    pub density_ci_low: Option<f64>,
    pub density_ci_high: Option<f64>,
}

/// A phase-series sample with its grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseRow {
    pub point: u32,
    pub run: u64,
    pub timestamp_s: f64,
    pub phase_rad: f64,
    pub contrast: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AllanRow {
    pub point: u32,
    pub scan_value: f64,
    pub tau_runs: u64,
    pub tau_seconds: f64,
    pub adev_rad: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub pairs: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub code_version: String,
    pub name: String,
    pub scheme: Scheme,
    pub master_seed: u64,
    pub points: u32,
    pub runs_per_point: u32,
    pub files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignOutput {
    pub config: CampaignConfig,
    pub runs: Vec<RunRecord>,
    pub points: Vec<PointSummary>,
    pub phases: Vec<PhaseRow>,
    pub allan: Vec<AllanRow>,
}

pub const OUTPUT_FILES: [&str; 6] = [
    "config.json",
    "manifest.json",
    "runs.csv",
    "points.csv",
    "phases.csv",
    "allan.csv",
];

impl CampaignOutput {
    /// Ramp-corrected phase series of grid point `point`.
    pub fn series(&self, point: u32) -> Result<PhaseSeries> {
        let records = self
            .phases
            .iter()
            .filter(|r| r.point == point)
            .map(|r| PhaseRecord {
                run: r.run,
                timestamp: r.timestamp_s,
                phase: r.phase_rad,
                contrast: r.contrast,
                converged: r.converged,
                rss: f64::NAN,
            })
            .collect();
        PhaseSeries::new(records, self.config.runs_per_sample(), self.config.duty_cycle_s)
    }

    pub fn noise_summary(&self, point: u32) -> Option<NoiseSummary> {
        let s = self.series(point).ok()?;
        let curve = allan_deviation(&s, &default_taus(&s));
        fit_noise_slope(&curve, 1, u64::MAX, self.config.duty_cycle_s).ok()
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            code_version: env!("CARGO_PKG_VERSION").into(),
            name: self.config.name.clone(),
            scheme: self.config.scheme,
            master_seed: self.config.seed,
            points: self.points.len() as u32,
            runs_per_point: self.config.runs_per_point,
            files: OUTPUT_FILES.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// Writes the campaign directory. Each file is written to a temporary
    /// name and renamed into place.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut manifest = serde_json::to_vec_pretty(&self.manifest())?;
        manifest.push(b'\n');
        let mut config = self.config.to_json().into_bytes();
        config.push(b'\n');
        write_atomic(&dir.join("config.json"), &config)?;
        write_atomic(&dir.join("manifest.json"), &manifest)?;
        write_atomic(&dir.join("runs.csv"), &csv_bytes(&self.runs)?)?;
        write_atomic(&dir.join("points.csv"), &csv_bytes(&self.points)?)?;
        write_atomic(&dir.join("phases.csv"), &csv_bytes(&self.phases)?)?;
        write_atomic(&dir.join("allan.csv"), &csv_bytes(&self.allan)?)?;
        Ok(())
    }
}

pub(crate) fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.into_inner().map_err(|e| Error::Csv(e.into_error().into()))
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

/// Writes `bytes` next to `path` and renames over it, so readers never see
/// a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = PathBuf::from(path);
    let name = path
        .file_name()
        .map(|n| format!(".{}.tmp", n.to_string_lossy()))
        .unwrap_or_else(|| ".tmp".into());
    tmp.set_file_name(name);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

/// Reads a campaign directory written by [`CampaignOutput::write`].
pub fn load_campaign(dir: &Path) -> Result<CampaignOutput> {
    let cfg_path = dir.join("config.json");
    let text = fs::read_to_string(&cfg_path).map_err(|e| Error::io(&cfg_path, e))?;
    Ok(CampaignOutput {
        config: CampaignConfig::from_json(&text)?,
        runs: read_csv(&dir.join("runs.csv"))?,
        points: read_csv(&dir.join("points.csv"))?,
        phases: read_csv(&dir.join("phases.csv"))?,
        allan: read_csv(&dir.join("allan.csv"))?,
    })
}

fn mean_std(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        Some((values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt())
    } else {
        None
    };
    (Some(mean), std)
}

struct PointResult {
    runs: Vec<RunRecord>,
    series: Option<PhaseSeries>,
    median_k: Option<f64>,
}

fn base_record(cfg: &CampaignConfig, plan: &PointPlan, run: u32, seed: u64) -> RunRecord {
    let t = plan.timing();
    RunRecord {
        campaign: cfg.name.clone(),
        point: plan.index,
        run,
        scheme: cfg.scheme,
        scan_value: plan.scan_value,
        t0_s: t.t0,
        t1_s: t.t1,
        delta_t_s: t.delta_t,
        t_sep_s: t.t_sep,
        tof_s: t.time_of_flight(),
        laser_phase_rad: wrap_phase(plan.ramp * run as f64),
        phase_rad: None,
        phase_sigma_rad: None,
        fraction: None,
        contrast: None,
        k_per_m: None,
        rss: None,
        iterations: None,
        status: "failed".into(),
        seed,
    }
}

fn status_name(s: FitStatus) -> &'static str {
    match s {
        FitStatus::Converged => "converged",
        FitStatus::NotConverged => "not-converged",
        FitStatus::Degenerate => "degenerate",
    }
}

fn simulate(plan: &PointPlan, master: u64, run: u32) -> (u64, Result<DensityProfile>) {
    (shot_seed(master, plan.index, run), plan.shot(master, run))
}

fn run_symmetric(cfg: &CampaignConfig, plan: &PointPlan, exec: Execution) -> Result<PointResult> {
    let n = cfg.runs_per_point;
    let d = plan.interferometer.recoil_velocity() * plan.timing().t_sep;
    let split = -0.5 * d;
    let shots: Vec<(u64, Result<f64>)> = exec.map_indexed(n as usize, |i| {
        let (seed, profile) = simulate(plan, cfg.seed, i as u32);
        let frac = profile.and_then(|p| population_readout(&p, (split, p.end()), (p.start(), split)));
        (seed, frac)
    });
    let mut runs: Vec<RunRecord> = shots
        .iter()
        .enumerate()
        .map(|(i, (seed, frac))| {
            let mut r = base_record(cfg, plan, i as u32, *seed);
            if let Ok(f) = frac {
                r.fraction = Some(*f);
                r.status = "measured".into();
            }
            r
        })
        .collect();

    let block = cfg.fringe_runs as usize;
    let blocks = n as usize / block;
    if blocks * block < n as usize {
        warn!(
            "point {}: {} trailing runs do not fill a {block}-run fringe and are ignored",
            plan.index,
            n as usize - blocks * block
        );
    }
    let mut records = Vec::with_capacity(blocks);
    for b in 0..blocks {
        let start = b * block;
        let center = start as f64 + 0.5 * (block - 1) as f64;
        let pts: Vec<(f64, f64)> = (start..start + block)
            .filter_map(|i| runs[i].fraction.map(|f| (plan.ramp * (i as f64 - center), f)))
            .collect();
        let fit = match fit_population_fringe(&pts, 1.0) {
            Ok(f) if f.converged() => f,
            _ => continue,
        };
        let phase = wrap_phase(population_phase(&fit) - plan.ramp * center);
        let mut rec = PhaseRecord::new(start as u64, start as f64 * cfg.duty_cycle_s, phase);
        rec.contrast = 2.0 * fit.contrast();
        rec.rss = fit.rss;
        records.push(rec);
        for r in &mut runs[start..start + block] {
            r.contrast = Some(rec.contrast);
        }
    }
    let series = PhaseSeries::new(records, cfg.fringe_runs, cfg.duty_cycle_s)?;
    Ok(PointResult {
        runs,
        series: Some(series),
        median_k: None,
    })
}

fn run_spatial(cfg: &CampaignConfig, plan: &PointPlan, exec: Execution) -> Result<PointResult> {
    let n = cfg.runs_per_point as usize;
    let shots: Vec<(u64, Result<DensityProfile>)> = exec.map_indexed(n, |i| {
        let (seed, profile) = simulate(plan, cfg.seed, i as u32);
        let profile = match cfg.scheme {
            Scheme::AsymmetricSeparated => profile.and_then(|p| plan.kicked_port(&p)),
            _ => profile,
        };
        (seed, profile)
    });
    let mut runs: Vec<RunRecord> = shots
        .iter()
        .enumerate()
        .map(|(i, (seed, _))| base_record(cfg, plan, i as u32, *seed))
        .collect();
    let ok: Vec<usize> = (0..n).filter(|&i| shots[i].1.is_ok()).collect();
    for (i, (_, p)) in shots.iter().enumerate() {
        if let Err(e) = p {
            warn!("point {} run {i}: {e}", plan.index);
        }
    }
    let profiles: Vec<DensityProfile> = ok.iter().map(|&i| shots[i].1.as_ref().unwrap().clone()).collect();
    drop(shots);

    let free_fit = |p: &DensityProfile| fit_spatial_fringe(p, None).unwrap_or_else(|_| FitResult::failed(FitKind::SpatialFringe));
    let (stage1, final_fits, median_k) = match cfg.fit {
        FitStrategy::MedianK if profiles.len() >= 3 => match fit_batch_median_k(&profiles, exec) {
            Ok(b) => (b.stage1, b.results, Some(b.median_k)),
            Err(e) => {
                warn!("point {}: {e}; keeping free fits", plan.index);
                let s = exec.map(&profiles, free_fit);
                (s.clone(), s, None)
            }
        },
        _ => {
            let s = exec.map(&profiles, free_fit);
            (s.clone(), s, None)
        }
    };

    let mut records = Vec::new();
    for (j, &i) in ok.iter().enumerate() {
        let f = &final_fits[j];
        let r = &mut runs[i];
        r.status = status_name(f.status).into();
        r.iterations = Some(f.iterations);
        r.rss = Some(f.rss).filter(|v| v.is_finite());
        r.k_per_m = Some(stage1[j].wavenumber()).filter(|v| v.is_finite() && stage1[j].converged());
        if f.converged() {
            r.phase_rad = Some(f.phase());
            r.phase_sigma_rad = f.uncertainty("phi");
            r.contrast = Some(f.contrast());
            let mut rec = PhaseRecord::new(i as u64, i as f64 * cfg.duty_cycle_s, f.phase());
            rec.contrast = f.contrast();
            rec.rss = f.rss;
            records.push(rec);
        }
    }
    let raw = PhaseSeries::new(records, 1, cfg.duty_cycle_s)?;
    Ok(PointResult {
        runs,
        series: Some(subtract_laser_ramp(&raw, plan.ramp)),
        median_k,
    })
}

fn summarize(cfg: &CampaignConfig, plan: &PointPlan, res: &PointResult) -> (PointSummary, Vec<PhaseRow>, Vec<AllanRow>) {
    let t = plan.timing();
    let failed = match cfg.scheme {
        Scheme::Symmetric => res.runs.iter().filter(|r| r.fraction.is_none()).count(),
        _ => res.runs.iter().filter(|r| r.phase_rad.is_none()).count(),
    } as u32;
    let contrasts: Vec<f64> = match (&res.series, cfg.scheme) {
        (Some(s), Scheme::Symmetric) => s.records().iter().map(|r| r.contrast).collect(),
        _ => res.runs.iter().filter_map(|r| r.contrast).collect(),
    };
    let wavelengths: Vec<f64> = res
        .runs
        .iter()
        .filter_map(|r| r.k_per_m)
        .map(|k| 2.0 * std::f64::consts::PI / k)
        .collect();
    let (c_mean, c_std) = mean_std(&contrasts);
    let (w_mean, w_std) = mean_std(&wavelengths);
    let theory = physics::fringe_wavelength(&plan.interferometer)
        .ok()
        .map(|w| w * cfg.expansion_scale);

    let mut phases = Vec::new();
    let mut allan = Vec::new();
    let mut noise = None;
    if let Some(s) = &res.series {
        phases = s
            .records()
            .iter()
            .map(|r| PhaseRow {
                point: plan.index,
                run: r.run,
                timestamp_s: r.timestamp,
                phase_rad: r.phase,
                contrast: r.contrast,
                converged: r.converged,
            })
            .collect();
        let curve = allan_deviation(s, &default_taus(s));
        allan = curve
            .points
            .iter()
            .map(|p| AllanRow {
                point: plan.index,
                scan_value: plan.scan_value,
                tau_runs: p.tau_runs,
                tau_seconds: p.tau_seconds,
                adev_rad: p.adev_rad,
                ci_low: p.ci_low,
                ci_high: p.ci_high,
                pairs: p.pairs,
            })
            .collect();
        noise = fit_noise_slope(&curve, 1, u64::MAX, cfg.duty_cycle_s).ok();
    }
    let summary = PointSummary {
        point: plan.index,
        scan_value: plan.scan_value,
        t_ms: t.t1 * 1e3,
        delta_t_us: t.delta_t * 1e6,
        t_sep_ms: t.t_sep * 1e3,
        tof_ms: t.time_of_flight() * 1e3,
        runs: res.runs.len() as u32,
        failed,
        phase_samples: phases.len() as u32,
        contrast_mean: c_mean,
        contrast_std: c_std,
        wavelength_mean_m: w_mean,
        wavelength_std_m: w_std,
        wavelength_theory_m: theory,
        median_k_per_m: res.median_k,
        noise_slope: noise.map(|n| n.slope),
        density_rad_rthz: noise.map(|n| n.density),
        density_ci_low: noise.map(|n| n.density_ci_low),
        density_ci_high: noise.map(|n| n.density_ci_high),
    };
    (summary, phases, allan)
}

/// Runs every grid point of `config`. Shots are seeded from the master
/// seed and their `(point, run)` index, and all aggregation is ordered by
/// that index, so results do not depend on the thread count.
pub fn run_campaign(config: &CampaignConfig, exec: Execution) -> Result<CampaignOutput> {
    config.validate()?;
    let config = config.resolved();
    let mut out = CampaignOutput {
        config: config.clone(),
        runs: Vec::new(),
        points: Vec::new(),
        phases: Vec::new(),
        allan: Vec::new(),
    };
    for index in 0..config.grid().len() as u32 {
        let plan = config.plan_point(index, exec)?;
        info!(
            "{} point {index}: T = {:.3} ms, dT = {:.1} us, t_sep = {:.3} ms",
            config.name,
            plan.timing().t1 * 1e3,
            plan.timing().delta_t * 1e6,
            plan.timing().t_sep * 1e3
        );
        let res = match config.scheme {
            Scheme::Symmetric => run_symmetric(&config, &plan, exec)?,
            _ => run_spatial(&config, &plan, exec)?,
        };
        let (summary, phases, allan) = summarize(&config, &plan, &res);
        out.runs.extend(res.runs);
        out.points.push(summary);
        out.phases.extend(phases);
        out.allan.extend(allan);
    }
    Ok(out)
}
