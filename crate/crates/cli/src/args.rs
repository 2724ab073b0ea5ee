use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

#[derive(Debug, Parser)]
#[command(name = "omsim", version, about = "Coupled optomechanical systems: sideband amplitudes, dynamics and spectra")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check parameters and drives and print diagnostics.
    Validate(RunArgs),
    /// Analytic sideband solution with its linear-solve oracle.
    Steady(SteadyArgs),
    /// Stokes amplitude over a (gamma, K) grid and its ridge.
    Sweep(RunArgs),
    /// Time trace of the means and occupations from vacuum.
    Evolve(RunArgs),
    /// Steady state, output spectrum and peak factors.
    Spectrum(RunArgs),
    /// List the preset catalog.
    Presets {
        /// Print the catalog as JSON.
        #[arg(long)]
        json: bool,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Validate(_) => "validate",
            Command::Steady(_) => "steady",
            Command::Sweep(_) => "sweep",
            Command::Evolve(_) => "evolve",
            Command::Spectrum(_) => "spectrum",
            Command::Presets { .. } => "presets",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Preset name; repeat to run several independent jobs.
    #[arg(long = "preset", short = 'p', value_name = "NAME")]
    pub presets: Vec<String>,
    /// TOML run configuration.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Override a parameter after preset resolution (`K=0`, `frame=0`, `E[c:+1]=2`).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Output directory [default: $OMSIM_OUTPUT_DIR, else omsim-out].
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Worker threads for independent jobs and grid evaluation.
    #[arg(long, value_name = "N")]
    pub jobs: Option<usize>,
    #[command(flatten)]
    pub numerics: Numerics,
}

#[derive(Debug, Clone, Args)]
pub struct SteadyArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Also integrate to the periodic steady state and report the numerical
    /// Stokes harmonic of the target field.
    #[arg(long)]
    pub numeric: bool,
}

/// Numerical options; every field may also come from the `[numerics]` table
/// of a configuration file, with flags taking precedence.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Numerics {
    /// Integrator relative tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Steady-state tolerance on the stroboscopic map.
    #[arg(long = "tol-ss")]
    pub tol_ss: Option<f64>,
    /// Period budget for the steady-state search.
    #[arg(long = "max-periods")]
    pub max_periods: Option<usize>,
    /// Duration: trajectory length (evolve) or correlation window (spectrum).
    #[arg(short = 'T', long = "T", value_name = "T")]
    #[serde(rename = "T")]
    pub t: Option<f64>,
    /// Sample spacing of trajectories and correlation functions.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Detuning grid `LO:HI:N` in units of Omega0.
    #[arg(long, value_name = "LO:HI:N", allow_hyphen_values = true)]
    pub grid: Option<String>,
    /// Convergence factor of the Fourier kernel, in units of Omega0.
    #[arg(long)]
    pub resolution: Option<f64>,
    /// Correlation window shape: rectangular or hann.
    #[arg(long)]
    pub window: Option<String>,
    /// Cavity whose output spectrum is computed: c or t.
    #[arg(long)]
    pub cavity: Option<String>,
    /// Half width of the peak windows, in units of Omega0.
    #[arg(long = "peak-window")]
    pub peak_window: Option<f64>,
    /// Damping values `LO:HI:N` for the sweep.
    #[arg(long = "gamma-range", value_name = "LO:HI:N")]
    pub gamma_range: Option<String>,
    /// Coupling values `LO:HI:N` for the sweep.
    #[arg(long = "K-range", value_name = "LO:HI:N")]
    #[serde(rename = "K_range")]
    pub k_range: Option<String>,
}

impl Numerics {
    /// Fill unset fields from `base`.
    pub fn or(self, base: Numerics) -> Numerics {
        Numerics {
            tol: self.tol.or(base.tol),
            tol_ss: self.tol_ss.or(base.tol_ss),
            max_periods: self.max_periods.or(base.max_periods),
            t: self.t.or(base.t),
            dt: self.dt.or(base.dt),
            grid: self.grid.or(base.grid),
            resolution: self.resolution.or(base.resolution),
            window: self.window.or(base.window),
            cavity: self.cavity.or(base.cavity),
            peak_window: self.peak_window.or(base.peak_window),
            gamma_range: self.gamma_range.or(base.gamma_range),
            k_range: self.k_range.or(base.k_range),
        }
    }
}
