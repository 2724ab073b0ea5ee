//! Run configuration: preset or inline parameters, TOML file, overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use omsim::model::{preset, Cavity, Detuning, DriveConfig, SystemParams};

use crate::args::{Numerics, RunArgs};
use crate::error::{CliError, CliResult};

/// Output directory used when neither a flag, the file nor the environment
/// names one.
pub const DEFAULT_OUTPUT: &str = "omsim-out";

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    /// Optional guard: must match the subcommand when present.
    pub command: Option<String>,
    pub preset: Option<String>,
    /// Inline parameters by configuration key; `g0`, `kappa`, `gamma` and
    /// `K` are required, the rest default to identical resonators at 1.
    pub params: Option<BTreeMap<String, f64>>,
    pub drive: Option<DriveConfig>,
    pub numerics: Option<Numerics>,
    pub output: Option<PathBuf>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> CliResult<ConfigFile> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
    }
}

/// One independent unit of work with fully resolved physics.
#[derive(Debug, Clone, Serialize)]
pub struct Job {
    pub name: String,
    pub preset: Option<String>,
    pub params: SystemParams,
    pub drive: DriveConfig,
    pub overrides: Vec<Override>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Override {
    pub key: String,
    pub value: String,
}

/// Everything a subcommand needs after merging flags, file and environment.
#[derive(Debug)]
pub struct Resolved {
    pub jobs: Vec<Job>,
    pub numerics: Numerics,
    pub out: PathBuf,
    pub threads: Option<usize>,
}

pub fn resolve(command: &str, args: &RunArgs) -> CliResult<Resolved> {
    let file = match &args.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    if let Some(c) = &file.command {
        if c != command {
            return Err(CliError::config(format!(
                "configuration is for `{c}` but the `{command}` subcommand was run"
            )));
        }
    }
    let inline = file.params.is_some() || file.drive.is_some();
    if !args.presets.is_empty() && inline || file.preset.is_some() && inline {
        return Err(CliError::config(
            "exactly one of a preset or an inline parameter block may be given",
        ));
    }

    let overrides = args
        .overrides
        .iter()
        .map(|s| parse_override(s))
        .collect::<CliResult<Vec<_>>>()?;

    let mut bases: Vec<(String, Option<String>, SystemParams, DriveConfig)> = Vec::new();
    let names: Vec<String> = if !args.presets.is_empty() {
        args.presets.clone()
    } else if let Some(p) = &file.preset {
        vec![p.clone()]
    } else if inline {
        vec![]
    } else if command == "sweep" {
        // the sweep explores the Stokes ansatz, defined by the reference drive
        vec!["fig2_blue".to_string()]
    } else {
        return Err(CliError::config("no preset or inline parameter block given"));
    };
    for name in names {
        if bases.iter().any(|b| b.0 == name) {
            return Err(CliError::config(format!("preset `{name}` given twice")));
        }
        let p = preset(&name)?;
        bases.push((name.clone(), Some(name), p.params, p.drive));
    }
    if inline {
        let (Some(params), Some(drive)) = (&file.params, &file.drive) else {
            return Err(CliError::config("an inline configuration needs both [params] and [drive]"));
        };
        bases.push(("inline".to_string(), None, inline_params(params)?, drive.clone()));
    }

    let mut jobs = Vec::new();
    for (name, preset, mut params, mut drive) in bases {
        for o in &overrides {
            apply_override(&mut params, &mut drive, o)?;
        }
        jobs.push(Job {
            name,
            preset,
            params,
            drive,
            overrides: overrides.clone(),
        });
    }

    let out = args
        .out
        .clone()
        .or(file.output)
        .or_else(|| std::env::var_os("OMSIM_OUTPUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT));
    if args.jobs == Some(0) {
        return Err(CliError::config("--jobs must be at least 1"));
    }
    Ok(Resolved {
        jobs,
        numerics: args.numerics.clone().or(file.numerics.unwrap_or_default()),
        out,
        threads: args.jobs,
    })
}

fn inline_params(map: &BTreeMap<String, f64>) -> CliResult<SystemParams> {
    let get = |k: &str| {
        map.get(k)
            .copied()
            .ok_or_else(|| CliError::config(format!("inline [params] is missing `{k}`")))
    };
    let mut p = SystemParams::new(get("g0")?, get("kappa")?, get("gamma")?, get("K")?);
    // Omega0 first so that explicit resonator frequencies win
    if let Some(v) = map.get("Omega0") {
        p.set("Omega0", *v)?;
    }
    for (k, v) in map {
        if k != "Omega0" {
            p.set(k, *v)?;
        }
    }
    Ok(p)
}

fn parse_override(s: &str) -> CliResult<Override> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| CliError::config(format!("override `{s}` is not KEY=VALUE")))?;
    let (key, value) = (k.trim(), v.trim());
    if key.is_empty() || value.is_empty() {
        return Err(CliError::config(format!("override `{s}` is not KEY=VALUE")));
    }
    Ok(Override {
        key: key.to_string(),
        value: value.to_string(),
    })
}

fn number(o: &Override) -> CliResult<f64> {
    o.value
        .parse()
        .map_err(|_| CliError::config(format!("override `{}`: `{}` is not a number", o.key, o.value)))
}

/// Keys: any parameter key, `frame` for the rotating frame detuning, and
/// `E[cavity:detuning]` for a real tone amplitude (0 removes the tone).
fn apply_override(params: &mut SystemParams, drive: &mut DriveConfig, o: &Override) -> CliResult<()> {
    if o.key == "frame" {
        drive.frame_detuning = o.value.parse::<Detuning>()?;
        return Ok(());
    }
    if let Some(inner) = o.key.strip_prefix("E[").and_then(|r| r.strip_suffix(']')) {
        let (c, d) = inner
            .split_once(':')
            .ok_or_else(|| CliError::config(format!("override `{}`: expected E[cavity:detuning]", o.key)))?;
        let cavity: Cavity = c.trim().parse()?;
        let detuning: Detuning = d.parse()?;
        let amp = number(o)?;
        if amp == 0.0 {
            drive.tones.retain(|t| !(t.cavity == cavity && t.detuning == detuning));
        } else {
            drive.set_tone(cavity, detuning, Complex64::new(amp, 0.0));
        }
        return Ok(());
    }
    params.set(&o.key, number(o)?)?;
    Ok(())
}

/// `LO:HI:N` as `N` evenly spaced values including both ends.
pub fn parse_range(s: &str, what: &str) -> CliResult<(f64, f64, usize)> {
    let bad = || CliError::config(format!("{what} `{s}` is not LO:HI:N"));
    let parts: Vec<&str> = s.split(':').collect();
    let [lo, hi, n] = parts.as_slice() else {
        return Err(bad());
    };
    let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
    let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
    let n: usize = n.trim().parse().map_err(|_| bad())?;
    if n == 0 || !lo.is_finite() || !hi.is_finite() || (n > 1 && hi <= lo) {
        return Err(CliError::config(format!("{what} `{s}` needs N >= 1 and LO < HI")));
    }
    Ok((lo, hi, n))
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}
