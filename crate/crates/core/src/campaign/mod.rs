//! Seeded Monte Carlo campaigns and their on-disk outputs.
//!
//! A campaign directory holds `config.json`, `manifest.json`, `runs.csv`,
//! `points.csv`, `phases.csv` and `allan.csv`.

mod config;
mod figure;
mod run;

pub use config::{
    CampaignConfig, CloudConfig, FitStrategy, ImagingConfig, NoiseConfig, PointPlan, Scan, ScanVariable, Scheme,
};
pub use figure::{figure_data, write_figure, Figure, MODEL_TILT_DEG};
pub use run::{
    load_campaign, run_campaign, write_atomic, AllanRow, CampaignOutput, Manifest, PhaseRow, PointSummary,
    RunRecord, OUTPUT_FILES,
};
