use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use log::info;

use mzfringe::campaign::{figure_data, load_campaign, run_campaign, write_figure, CampaignConfig, Figure, Scheme};
use mzfringe::extraction::{fit_spatial_fringe, optimize_overlap_time, write_fit_csv, PhaseSeries, ScanRange};
use mzfringe::stability::{allan_deviation_with, default_taus, AllanEstimator};
use mzfringe::synthesis::DensityProfile;
use mzfringe::{Error, Execution};

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

/// Simulate and analyse spatial-fringe atom interferometer campaigns.
#[derive(Parser)]
#[command(name = "mzfringe", version)]
struct Cli {
    /// Master seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file or, for `campaign`, directory. Defaults to stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Campaign config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one shot and write its density profile as CSV.
    Simulate(SimulateArgs),
    /// Fit a spatial fringe to a profile CSV.
    Fit {
        profile: PathBuf,
        /// Hold the fringe wavenumber fixed.
        #[arg(long)]
        k_per_m: Option<f64>,
    },
    /// Allan deviation of a phase CSV (`run,phase_rad[,timestamp_s]`).
    Allan {
        phases: PathBuf,
        #[arg(long, default_value_t = 1)]
        runs_per_sample: u32,
        #[arg(long, default_value_t = 11.4)]
        duty_cycle_s: f64,
        /// Comma-separated taus in runs; defaults to 1, 2, 5, 10, ...
        #[arg(long, value_delimiter = ',')]
        taus: Option<Vec<u64>>,
        #[arg(long)]
        overlapping: bool,
    },
    /// Fringe contrast against imaging delay at fixed time of flight.
    OverlapScan {
        #[command(flatten)]
        shot: ShotArgs,
        #[arg(long)]
        start_ms: f64,
        #[arg(long)]
        stop_ms: f64,
        #[arg(long, default_value_t = 41)]
        steps: usize,
    },
    /// Run a full campaign into the `--out` directory.
    Campaign,
    /// Aggregate campaign directories into plot-ready CSV.
    Figure {
        /// f2, f3, f4 or f5.
        figure: String,
        /// Campaign directories.
        #[arg(required = true)]
        campaigns: Vec<PathBuf>,
    },
}

#[derive(Args)]
struct ShotArgs {
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long)]
    tof_ms: Option<f64>,
    #[arg(long)]
    t_ms: Option<f64>,
    #[arg(long)]
    delta_t_us: Option<f64>,
    #[arg(long)]
    t_sep_ms: Option<f64>,
    #[arg(long)]
    contrast: Option<f64>,
    #[arg(long)]
    tilt_deg: Option<f64>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    laser_noise_rad: Option<f64>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    shot: ShotArgs,
    /// Run index within the campaign (selects the shot seed and laser ramp).
    #[arg(long, default_value_t = 0)]
    run: u32,
    /// Write only the kicked port (asymmetric-separated scheme).
    #[arg(long)]
    kicked_port: bool,
}

fn load_config(path: Option<&Path>) -> anyhow::Result<CampaignConfig> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Io {
                path: p.into(),
                source: e,
            })?;
            Ok(CampaignConfig::from_json(&text)?)
        }
        None => Ok(CampaignConfig::default()),
    }
}

impl ShotArgs {
    fn apply(&self, cfg: &mut CampaignConfig) -> anyhow::Result<()> {
        if let Some(s) = &self.scheme {
            cfg.scheme = s.parse()?;
            if cfg.scheme == Scheme::Symmetric && self.delta_t_us.is_none() {
                cfg.delta_t_us = 0.0;
            }
        }
        cfg.tof_ms = self.tof_ms.unwrap_or(cfg.tof_ms);
        cfg.t_ms = self.t_ms.unwrap_or(cfg.t_ms);
        cfg.delta_t_us = self.delta_t_us.unwrap_or(cfg.delta_t_us);
        cfg.t_sep_ms = self.t_sep_ms.or(cfg.t_sep_ms);
        cfg.contrast = self.contrast.unwrap_or(cfg.contrast);
        cfg.imaging.tilt_deg = self.tilt_deg.unwrap_or(cfg.imaging.tilt_deg);
        cfg.samples = self.samples.unwrap_or(cfg.samples);
        cfg.noise.laser_phase_rad = self.laser_noise_rad.unwrap_or(cfg.noise.laser_phase_rad);
        cfg.scan = None;
        Ok(())
    }
}

fn output(out: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| Error::Io {
            path: p.into(),
            source: e,
        })?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(Error::Config("--workers must be >= 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring worker pool")?;
    }
    let exec = Execution::Parallel;
    let out = cli.out.as_deref();
    match cli.command {
        Command::Simulate(args) => {
            let mut cfg = load_config(cli.config.as_deref())?;
            args.shot.apply(&mut cfg)?;
            cfg.seed = cli.seed.unwrap_or(cfg.seed);
            cfg.validate()?;
            let plan = cfg.plan_point(0, exec)?;
            let mut profile = plan.shot(cfg.seed, args.run)?;
            if args.kicked_port {
                if cfg.scheme != Scheme::AsymmetricSeparated {
                    return Err(Error::Config("--kicked-port needs the asymmetric-separated scheme".into()).into());
                }
                profile = plan.kicked_port(&profile)?;
            }
            profile.write_csv(output(out)?)?;
        }
        Command::Fit { profile, k_per_m } => {
            let file = File::open(&profile).map_err(|e| Error::Io {
                path: profile.clone(),
                source: e,
            })?;
            let p = DensityProfile::read_csv(file)?;
            let fit = fit_spatial_fringe(&p, k_per_m)?;
            write_fit_csv(output(out)?, &[(0, &fit)])?;
            if !fit.converged() {
                return Err(Error::InsufficientData(format!("fit did not converge ({:?})", fit.status)).into());
            }
        }
        Command::Allan {
            phases,
            runs_per_sample,
            duty_cycle_s,
            taus,
            overlapping,
        } => {
            let file = File::open(&phases).map_err(|e| Error::Io {
                path: phases.clone(),
                source: e,
            })?;
            let series = PhaseSeries::read_csv(file, runs_per_sample, duty_cycle_s)?;
            let taus = taus.unwrap_or_else(|| default_taus(&series));
            let estimator = if overlapping {
                AllanEstimator::Overlapping
            } else {
                AllanEstimator::NonOverlapping
            };
            let curve = allan_deviation_with(&series, &taus, estimator);
            if curve.points.is_empty() {
                return Err(Error::InsufficientData("no tau fits the series".into()).into());
            }
            curve.write_csv(output(out)?)?;
        }
        Command::OverlapScan {
            shot,
            start_ms,
            stop_ms,
            steps,
        } => {
            let mut cfg = load_config(cli.config.as_deref())?;
            shot.apply(&mut cfg)?;
            if cfg.scheme == Scheme::AsymmetricOverlapped {
                cfg.scheme = Scheme::AsymmetricSeparated;
            }
            cfg.t_sep_ms = Some(start_ms);
            cfg.validate()?;
            let plan = cfg.plan_point(0, exec)?;
            let range = ScanRange::new(start_ms * 1e-3, stop_ms * 1e-3, steps)?;
            let scan = optimize_overlap_time(&plan.interferometer, &plan.settings, range, exec)?;
            eprintln!(
                "best t_sep = {:.4} ms, contrast = {:.4}",
                scan.best_t_sep * 1e3,
                scan.best_contrast
            );
            scan.write_csv(output(out)?)?;
        }
        Command::Campaign => {
            let Some(path) = cli.config.as_deref() else {
                return Err(Error::Config("campaign needs --config".into()).into());
            };
            let Some(dir) = out else {
                return Err(Error::Config("campaign needs --out <directory>".into()).into());
            };
            let mut cfg = load_config(Some(path))?;
            cfg.seed = cli.seed.unwrap_or(cfg.seed);
            let output = run_campaign(&cfg, exec)?;
            output.write(dir)?;
            info!("wrote {} runs to {}", output.runs.len(), dir.display());
        }
        Command::Figure { figure, campaigns } => {
            let figure: Figure = figure.parse()?;
            let loaded = campaigns
                .iter()
                .map(|d| load_campaign(d))
                .collect::<Result<Vec<_>, _>>()?;
            match out {
                Some(p) => write_figure(&loaded, figure, p)?,
                None => {
                    let bytes = figure_data(&loaded, figure)?;
                    io::stdout().lock().write_all(&bytes)?;
                }
            }
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(e) if e.is_config_error() => EXIT_CONFIG,
        Some(_) => EXIT_NUMERICAL,
        None if err.downcast_ref::<rayon::ThreadPoolBuildError>().is_some() => EXIT_CONFIG,
        None if err.downcast_ref::<io::Error>().is_some() => EXIT_CONFIG,
        None => EXIT_NUMERICAL,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
