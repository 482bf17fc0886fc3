use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("symmetric interferometer (delta_T = 0) produces no spatial fringe")]
    InfiniteFringeWavelength,

    #[error("sampling window holds only {fraction:.4} of the density, need at least 0.99")]
    WindowTooSmall { fraction: f64 },

    #[error("fringe wavelength {wavelength:.3e} m exceeds 4 sigma_x ({sigma:.3e} m); phase is not resolvable")]
    FringeUnresolvable { wavelength: f64, sigma: f64 },

    #[error("not enough data: {0}")]
    InsufficientData(String),

    #[error("no signal in readout boxes")]
    NoSignal,

    #[error("{failed} of {total} stage-1 fits failed to converge")]
    BatchFailure { failed: usize, total: usize },

    #[error("all fits in the overlap scan were degenerate")]
    AllFitsDegenerate,

    #[error("invalid campaign configuration: {0}")]
    Config(String),

    #[error("missing campaign: figure {figure} needs {required}")]
    MissingCampaign { figure: String, required: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad input or configuration, as opposed to
    /// numerical failures during extraction.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter(_)
                | Error::Config(_)
                | Error::MissingCampaign { .. }
                | Error::Io { .. }
                | Error::Csv(_)
                | Error::Json(_)
                | Error::InfiniteFringeWavelength
                | Error::WindowTooSmall { .. }
        )
    }
}
