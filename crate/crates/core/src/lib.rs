//! Two mechanically coupled optomechanical systems under multi-tone driving.
//!
//! * [`model`]: parameters, drive tones, validation and presets.
//! * [`analytic`]: linearized sideband ansatz for the nonlocal Stokes amplitude.
//! * [`cumulant`]: generated second-order cumulant equations.
//! * [`dynamics`]: adaptive integration and periodic steady states.
//! * [`spectrum`]: two-time correlations, output spectra and peak factors.

pub mod analytic;
pub mod cumulant;
pub mod dynamics;
pub mod error;
pub mod io;
pub mod model;
pub mod par;
pub mod spectrum;

pub use error::{Error, Result};

/// Library version recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
