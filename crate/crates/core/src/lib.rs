//! Simulation and analysis of Mach-Zehnder atom interferometers read out
//! through spatial fringes.
//!
//! The pipeline runs from interferometer physics ([`physics`]) through
//! synthetic density profiles ([`synthesis`]) and phase extraction
//! ([`extraction`]) to Allan-deviation analysis ([`stability`]). Whole
//! Monte Carlo campaigns are driven by [`campaign`].

pub mod campaign;
pub mod error;
pub mod exec;
pub mod extraction;
pub mod lm;
pub mod physics;
pub mod rng;
pub mod stability;
pub mod synthesis;

pub use error::{Error, Result};
pub use exec::Execution;
