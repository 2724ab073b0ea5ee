//! Subcommand bodies. Each job returns the text printed for it on stdout.

use std::fmt::Write as _;
use std::time::Instant;

use serde_json::{json, Value};

use omsim::analytic::{stokes_closed_form, stokes_linear_solve, sweep_gamma_k};
use omsim::cumulant::{build_moment_ode, vacuum_state};
use omsim::dynamics::{detect_steady, integrate_sampled, lab_component, SteadyOptions, SteadyState};
use omsim::io::fmt;
use omsim::model::{ensure_valid, presets, validate, Cavity, Detuning};
use omsim::spectrum::{spectrum_from_steady, SpectrumOptions, WindowKind};

use crate::args::Numerics;
use crate::config::{linspace, parse_range, Job, Resolved};
use crate::error::{CliError, CliResult};
use crate::output::{Artifacts, ManifestData};

pub const DEFAULT_GAMMA_RANGE: &str = "1e-4:1e-3:40";
pub const DEFAULT_K_RANGE: &str = "0:1e-3:60";
/// Default trajectory length and spacing in units of `1/Omega0`.
pub const DEFAULT_EVOLVE_T: f64 = 1e4;
pub const DEFAULT_EVOLVE_DT: f64 = 1.0;

pub fn presets_listing(as_json: bool) -> CliResult<String> {
    let all = presets();
    if as_json {
        return crate::json::to_string(&all).map_err(|e| CliError::config(e.to_string()));
    }
    let mut out = String::new();
    for p in all {
        let tones: Vec<String> = p
            .drive
            .tones
            .iter()
            .map(|t| format!("{}:{}={}", t.cavity.short(), t.detuning, t.amplitude.re))
            .collect();
        let _ = writeln!(out, "{:<12} K={:<8} {:<28} {}", p.name, p.params.k_coupling, tones.join(" "), p.notes);
    }
    Ok(out)
}

fn steady_options(n: &Numerics) -> SteadyOptions {
    let d = SteadyOptions::default();
    SteadyOptions {
        tol_ss: n.tol_ss.unwrap_or(d.tol_ss),
        max_periods: n.max_periods.unwrap_or(d.max_periods),
        tol: n.tol.unwrap_or(d.tol),
        ..d
    }
}

fn spectrum_options(n: &Numerics, omega0: f64) -> CliResult<SpectrumOptions> {
    let mut o = SpectrumOptions::default();
    o.tol = n.tol.unwrap_or(o.tol);
    o.t_window = n.t;
    if let Some(r) = n.resolution {
        o.resolution = r;
    }
    if let Some(g) = &n.grid {
        let (lo, hi, points) = parse_range(g, "grid")?;
        (o.grid_lo, o.grid_hi, o.grid_points) = (lo, hi, points);
    }
    if let Some(w) = &n.window {
        o.window = match w.as_str() {
            "rectangular" | "rect" => WindowKind::Rectangular,
            "hann" => WindowKind::Hann,
            other => return Err(CliError::config(format!("unknown window `{other}`"))),
        };
    }
    if let Some(c) = &n.cavity {
        o.cavity = c.parse::<Cavity>()?;
    }
    if let Some(w) = n.peak_window {
        o.peak_window = w;
    }
    if let Some(dt) = n.dt {
        if !(dt > 0.0) {
            return Err(CliError::config("dt must be positive"));
        }
        o.samples_per_radian_period = ((2.0 * std::f64::consts::PI / (omega0 * dt)).round() as usize).max(8);
    }
    Ok(o)
}

fn steady_summary(s: &SteadyState) -> Value {
    json!({
        "converged_at": s.converged_at,
        "residual": s.residual,
        "tolerance": s.tolerance,
        "periods": (s.converged_at / s.period).round(),
        "period": s.period,
        "cycle_samples": s.samples(),
        "accepted_steps": s.stats.accepted,
        "rejected_steps": s.stats.rejected,
        "min_occupation": s.stats.min_occupation,
        "truncation_warning": s.stats.truncation_warning,
    })
}

fn artifacts(r: &Resolved, job: &Job) -> CliResult<Artifacts> {
    Artifacts::create(r.out.join(&job.name))
}

/// Diagnostics text plus the validation error, if any.
pub fn validate_job(job: &Job) -> (String, Option<CliError>) {
    let diags = validate(&job.params, &job.drive);
    let mut out = String::new();
    let errors = diags.iter().filter(|d| d.is_error()).count();
    let status = if errors == 0 { "valid" } else { "invalid" };
    let _ = write!(out, "{}: {status}", job.name);
    if errors == 0 {
        let _ = write!(out, " (period {})", fmt(job.drive.fundamental_period(job.params.omega0)));
    }
    out.push('\n');
    for d in &diags {
        let _ = writeln!(out, "  {d}");
    }
    let err = (errors > 0).then(|| omsim::Error::Invalid(diags).into());
    (out, err)
}

pub fn steady_job(r: &Resolved, job: &Job, numeric: bool) -> CliResult<String> {
    let start = Instant::now();
    ensure_valid(&job.params, &job.drive)?;
    let closed = stokes_closed_form(&job.params, &job.drive)?;
    let oracle = stokes_linear_solve(&job.params, &job.drive)?;
    let (a, b) = (closed.a_t0.unwrap_or_default(), oracle.a_t0.unwrap_or_default());
    let abs = (a - b).norm();
    let scale = a.norm().max(b.norm());
    let rel = if abs == 0.0 { 0.0 } else { abs / scale };
    let mut doc = json!({
        "job": job.name,
        "closed_form": closed,
        "oracle": oracle,
        "difference": { "a_t0_abs": abs, "a_t0_rel": rel },
    });
    let mut summary = format!("{}: |a_t0| = {} (oracle {}, relative difference {})\n", job.name, fmt(a.norm()), fmt(b.norm()), fmt(rel));
    let mut convergence = json!({ "oracle_relative_difference": rel });
    let opts = steady_options(&r.numerics);
    if numeric {
        let ode = build_moment_ode(&job.params, &job.drive)?;
        let steady = detect_steady(&ode, &vacuum_state(), &opts)?;
        let h = lab_component(&ode, &steady, Cavity::Target, Detuning::ZERO)?;
        doc["numeric"] = json!({ "a_t0": h, "a_t0_abs": h.norm(), "steady": steady_summary(&steady) });
        convergence["steady"] = steady_summary(&steady);
        let _ = writeln!(summary, "  numerical Stokes harmonic |a_t0| = {} (converged at t = {})", fmt(h.norm()), fmt(steady.converged_at));
    }
    let mut art = artifacts(r, job)?;
    art.write_json("steady.json", &doc)?;
    let manifest = art.finish(ManifestData {
        command: "steady",
        job,
        options: json!({ "numeric": numeric, "steady": if numeric { json!(opts) } else { Value::Null } }),
        convergence,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    })?;
    let _ = writeln!(summary, "  wrote {}", manifest.display());
    Ok(summary)
}

pub fn sweep_job(r: &Resolved, job: &Job) -> CliResult<String> {
    let start = Instant::now();
    ensure_valid(&job.params, &job.drive)?;
    let n = &r.numerics;
    let gr = n.gamma_range.as_deref().unwrap_or(DEFAULT_GAMMA_RANGE);
    let kr = n.k_range.as_deref().unwrap_or(DEFAULT_K_RANGE);
    let (g_lo, g_hi, g_n) = parse_range(gr, "gamma range")?;
    let (k_lo, k_hi, k_n) = parse_range(kr, "K range")?;
    let grid = sweep_gamma_k(&job.params, &job.drive, &linspace(g_lo, g_hi, g_n), &linspace(k_lo, k_hi, k_n))?;
    let ratios: Vec<f64> = grid.ridge.iter().map(|&(g, k, _)| k / g).collect();
    let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let singular = grid.magnitude.iter().flatten().filter(|v| v.is_none()).count();

    let mut art = artifacts(r, job)?;
    art.write("sweep_grid.csv", &grid.to_csv())?;
    art.write("sweep_ridge.csv", &grid.ridge_csv())?;
    let manifest = art.finish(ManifestData {
        command: "sweep",
        job,
        options: json!({ "gamma_range": gr, "K_range": kr }),
        convergence: json!({ "singular_cells": singular, "ridge_ratio_min": lo, "ridge_ratio_max": hi }),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    })?;
    Ok(format!(
        "{}: {} x {} grid, K*/gamma in [{}, {}]\n  wrote {}\n",
        job.name,
        g_n,
        k_n,
        fmt(lo),
        fmt(hi),
        manifest.display()
    ))
}

pub fn evolve_job(r: &Resolved, job: &Job) -> CliResult<String> {
    let start = Instant::now();
    ensure_valid(&job.params, &job.drive)?;
    let n = &r.numerics;
    let w0 = job.params.omega0;
    let t_end = n.t.unwrap_or(DEFAULT_EVOLVE_T / w0);
    let dt = n.dt.unwrap_or(DEFAULT_EVOLVE_DT / w0);
    if !(t_end > 0.0 && dt > 0.0) {
        return Err(CliError::config("T and dt must be positive"));
    }
    let count = (t_end / dt * (1.0 + 1e-12)).floor() as usize;
    let times: Vec<f64> = (0..=count).map(|k| k as f64 * dt).collect();
    let tol = n.tol.unwrap_or(SteadyOptions::default().tol);
    let ode = build_moment_ode(&job.params, &job.drive)?;
    let tr = integrate_sampled(&ode, &vacuum_state(), &times, tol)?;

    let mut art = artifacts(r, job)?;
    art.write("trajectory.csv", &tr.to_csv())?;
    let manifest = art.finish(ManifestData {
        command: "evolve",
        job,
        options: json!({ "T": t_end, "dt": dt, "tol": tol }),
        convergence: json!({
            "accepted_steps": tr.stats.accepted,
            "rejected_steps": tr.stats.rejected,
            "evaluations": tr.stats.evaluations,
            "max_structure_residual": tr.stats.max_structure_residual,
            "min_occupation": tr.stats.min_occupation,
            "truncation_warning": tr.stats.truncation_warning,
        }),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    })?;
    let mut out = format!("{}: {} samples to t = {}\n", job.name, times.len(), fmt(t_end));
    if tr.stats.truncation_warning {
        let _ = writeln!(out, "  warning: negative occupation {} (truncation may be inaccurate)", fmt(tr.stats.min_occupation));
    }
    let _ = writeln!(out, "  wrote {}", manifest.display());
    Ok(out)
}

pub fn spectrum_job(r: &Resolved, job: &Job) -> CliResult<String> {
    let start = Instant::now();
    ensure_valid(&job.params, &job.drive)?;
    let steady_opts = steady_options(&r.numerics);
    let opts = spectrum_options(&r.numerics, job.params.omega0)?;
    let ode = build_moment_ode(&job.params, &job.drive)?;
    let steady = detect_steady(&ode, &vacuum_state(), &steady_opts)?;
    let run = spectrum_from_steady(&ode, &steady, &opts)?;
    let s = &run.spectrum;
    let argmax = s.detuning_grid[s.argmax];

    let mut art = artifacts(r, job)?;
    art.write("spectrum.csv", &s.to_csv())?;
    art.write("spectrum_fluctuation.csv", &s.fluctuation_csv())?;
    art.write_json(
        "peaks.json",
        &json!({
            "job": job.name,
            "cavity": opts.cavity,
            "argmax_delta": argmax,
            "window": run.peaks.window,
            "peaks": run.peaks.peaks,
            "warnings": s.warnings,
        }),
    )?;
    let mut convergence = steady_summary(&steady);
    convergence["floquet_closure"] = json!(run.floquet_closure);
    convergence["correlation_periods"] = json!(run.periods);
    convergence["correlation_window"] = json!(run.t_window);
    let manifest = art.finish(ManifestData {
        command: "spectrum",
        job,
        options: json!({ "steady": steady_opts, "spectrum": opts }),
        convergence,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    })?;

    let mut out = format!("{}: spectrum peaks globally at delta = {}\n", job.name, argmax);
    let _ = writeln!(out, "  {:>6}  {:<11}  {:>12}  {:>12}", "delta", "kind", "eta", "log10 eta");
    for p in &run.peaks.peaks {
        let kind = serde_json::to_value(p.kind).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
        let _ = writeln!(out, "  {:>6}  {:<11}  {:>12.4e}  {:>12.4}", p.delta_center, kind, p.eta, p.eta.log10());
    }
    for w in &s.warnings {
        let _ = writeln!(out, "  warning: {w}");
    }
    let _ = writeln!(out, "  wrote {}", manifest.display());
    Ok(out)
}
