//! Time evolution of the moment equations and periodic steady states.

pub mod dopri;

use num_complex::Complex64;
use serde::Serialize;

use crate::cumulant::{CumulantState, ModeIndex, MomentOde, PACKED_DIM};
use crate::error::{Error, Result};
use crate::model::{Cavity, Detuning};
pub use dopri::{Dopri5, Stats};

/// Occupations below this are flagged as truncation artifacts.
pub const NEGATIVE_OCCUPATION_LIMIT: f64 = -1e-6;

#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<CumulantState>,
    /// Every accepted step stored, as opposed to a fixed sampling grid.
    pub dense: bool,
    pub stats: TrajectoryStats,
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct TrajectoryStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
    pub max_structure_residual: f64,
    pub min_occupation: f64,
    pub truncation_warning: bool,
}

impl TrajectoryStats {
    fn observe(&mut self, s: &CumulantState) {
        self.max_structure_residual = self.max_structure_residual.max(s.structure_residual());
        self.min_occupation = self.min_occupation.min(s.min_occupation());
        self.truncation_warning = self.min_occupation < NEGATIVE_OCCUPATION_LIMIT;
    }

    fn absorb(&mut self, st: Stats) {
        self.accepted += st.accepted;
        self.rejected += st.rejected;
        self.evaluations += st.evaluations;
    }
}

/// Integrator configured for `ode`.
pub fn solver_for(ode: &MomentOde, tol: f64) -> Dopri5 {
    Dopri5 {
        rtol: tol,
        atol: tol * 1e-3,
        h_max: ode.max_step(),
    }
}

fn check_tol(tol: f64) -> Result<()> {
    if !(tol > 0.0) {
        return Err(Error::argument("tolerance must be positive"));
    }
    Ok(())
}

/// Integrate to `t_end`, storing every accepted step.
pub fn integrate(ode: &MomentOde, initial: &CumulantState, t_end: f64, tol: f64) -> Result<Trajectory> {
    check_tol(tol)?;
    if !(t_end > initial.t) {
        return Err(Error::argument("t_end must exceed the initial time"));
    }
    let mut y = initial.pack();
    let mut h = 0.0;
    let mut f = |t: f64, y: &[f64], dy: &mut [f64]| ode.rhs(t, y, dy);
    let mut times = vec![initial.t];
    let mut states = vec![*initial];
    let mut stats = TrajectoryStats {
        min_occupation: f64::INFINITY,
        ..Default::default()
    };
    stats.observe(initial);
    let mut buf = vec![0.0; PACKED_DIM];
    let st = solver_for(ode, tol).solve(&mut f, initial.t, &mut y, t_end, &mut h, |step| {
        step.eval(step.t1(), &mut buf);
        let s = CumulantState::unpack(step.t1(), &buf);
        stats.observe(&s);
        times.push(step.t1());
        states.push(s);
    })?;
    stats.absorb(st);
    // replace the interpolated endpoint with the exact one
    if let Some(last) = states.last_mut() {
        *last = CumulantState::unpack(t_end, &y);
        *times.last_mut().unwrap() = t_end;
    }
    Ok(Trajectory {
        times,
        states,
        dense: true,
        stats,
    })
}

/// Integrate and keep only the states at the given increasing times.
pub fn integrate_sampled(ode: &MomentOde, initial: &CumulantState, times: &[f64], tol: f64) -> Result<Trajectory> {
    check_tol(tol)?;
    if times.windows(2).any(|w| w[1] <= w[0]) || times.first().is_some_and(|&t| t < initial.t) {
        return Err(Error::argument("sample times must be increasing and start at or after the initial time"));
    }
    let mut y = initial.pack();
    let mut h = 0.0;
    let mut f = |t: f64, y: &[f64], dy: &mut [f64]| ode.rhs(t, y, dy);
    let (samples, st) = solver_for(ode, tol).solve_sampled(&mut f, initial.t, &mut y, times, &mut h)?;
    let mut stats = TrajectoryStats {
        min_occupation: f64::INFINITY,
        ..Default::default()
    };
    stats.absorb(st);
    let states: Vec<CumulantState> = times
        .iter()
        .zip(&samples)
        .map(|(&t, v)| CumulantState::unpack(t, v))
        .collect();
    for s in &states {
        stats.observe(s);
    }
    Ok(Trajectory {
        times: times.to_vec(),
        states,
        dense: false,
        stats,
    })
}

impl Trajectory {
    /// Columns: time, real and imaginary part of each mean, occupations.
    pub fn to_csv(&self) -> String {
        use crate::io::fmt;
        let mut out = String::from("t");
        for m in ModeIndex::ALL {
            out.push_str(&format!(",re_{0},im_{0}", m.name()));
        }
        for m in ModeIndex::ALL {
            out.push_str(&format!(",n_{}", m.name()));
        }
        out.push('\n');
        for s in &self.states {
            out.push_str(&fmt(s.t));
            for z in s.means {
                out.push_str(&format!(",{},{}", fmt(z.re), fmt(z.im)));
            }
            for i in 0..4 {
                out.push_str(&format!(",{}", fmt(s.normal[(i, i)].re)));
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SteadyOptions {
    pub tol_ss: f64,
    pub max_periods: usize,
    /// Integrator relative tolerance.
    pub tol: f64,
    /// Consecutive periods that must satisfy the criterion.
    pub confirm: usize,
    /// Cycle samples per `2π/omega0` of period.
    pub samples_per_radian_period: usize,
}

impl Default for SteadyOptions {
    fn default() -> Self {
        SteadyOptions {
            tol_ss: 1e-7,
            max_periods: 200_000,
            tol: 1e-9,
            confirm: 5,
            samples_per_radian_period: 128,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SteadyState {
    /// One drive period sampled uniformly on `[t0, t0 + P)`.
    pub cycle: Vec<CumulantState>,
    pub period: f64,
    /// Period averages of the four means.
    pub period_mean: [Complex64; 4],
    pub converged_at: f64,
    pub residual: f64,
    pub tolerance: f64,
    pub residual_history: Vec<f64>,
    pub stats: TrajectoryStats,
}

impl SteadyState {
    pub fn start(&self) -> &CumulantState {
        &self.cycle[0]
    }

    pub fn samples(&self) -> usize {
        self.cycle.len()
    }
}

/// Samples per period for a period `p` at mechanical frequency `omega0`.
pub fn cycle_samples(p: f64, omega0: f64, per_radian_period: usize) -> usize {
    let turns = p * omega0 / (2.0 * std::f64::consts::PI);
    ((turns * per_radian_period as f64).round() as usize).max(8)
}

fn rel_distance(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let n: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    if d == 0.0 {
        0.0
    } else {
        d / n.max(f64::MIN_POSITIVE)
    }
}

/// Integrate period by period until the stroboscopic map has converged.
///
/// The per-period change `d_k` alone under-reports the distance to the limit
/// cycle when the slowest transient decays over many periods, so the
/// criterion uses the geometric-tail estimate `d_k / (1 - r)` with `r` the
/// observed contraction ratio over the last three periods.
pub fn detect_steady(ode: &MomentOde, initial: &CumulantState, opts: &SteadyOptions) -> Result<SteadyState> {
    if !(opts.tol_ss > 0.0) {
        return Err(Error::argument("tol_ss must be positive"));
    }
    check_tol(opts.tol)?;
    let p = ode.period;
    let dopri = solver_for(ode, opts.tol);
    let mut f = |t: f64, y: &[f64], dy: &mut [f64]| ode.rhs(t, y, dy);

    let mut y = initial.pack();
    let mut prev = y.clone();
    let mut h = 0.0;
    let mut t = initial.t;
    let mut history: Vec<f64> = Vec::new();
    let mut raw: Vec<f64> = Vec::new();
    let mut streak = 0;
    let mut stats = TrajectoryStats {
        min_occupation: f64::INFINITY,
        ..Default::default()
    };
    let mut buf = vec![0.0; PACKED_DIM];

    for k in 1..=opts.max_periods {
        let t_next = initial.t + k as f64 * p;
        let st = dopri.solve(&mut f, t, &mut y, t_next, &mut h, |step| {
            step.eval(step.t1(), &mut buf);
            stats.observe(&CumulantState::unpack(step.t1(), &buf));
        })?;
        stats.absorb(st);
        t = t_next;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NotConverged {
                periods: k,
                last_residual: f64::INFINITY,
                tolerance: opts.tol_ss,
                history: tail(&history),
            });
        }

        let d = rel_distance(&y, &prev);
        raw.push(d);
        let est = if d == 0.0 {
            0.0
        } else if raw.len() > 3 && raw[raw.len() - 4] > 0.0 {
            let r = (d / raw[raw.len() - 4]).powf(1.0 / 3.0);
            d / (1.0 - r).clamp(1e-4, 1.0)
        } else {
            f64::INFINITY
        };
        history.push(est);
        prev.copy_from_slice(&y);

        streak = if est < opts.tol_ss { streak + 1 } else { 0 };
        if streak >= opts.confirm {
            let start = CumulantState::unpack(t, &y);
            let m = cycle_samples(p, ode.params.omega0, opts.samples_per_radian_period);
            let cycle = sample_cycle(ode, &start, m, opts.tol)?;
            let mut period_mean = [Complex64::new(0.0, 0.0); 4];
            for s in &cycle {
                for (acc, z) in period_mean.iter_mut().zip(s.means) {
                    *acc += z / m as f64;
                }
            }
            for s in &cycle {
                stats.observe(s);
            }
            return Ok(SteadyState {
                cycle,
                period: p,
                period_mean,
                converged_at: t,
                residual: est,
                tolerance: opts.tol_ss,
                residual_history: tail(&history),
                stats,
            });
        }
    }
    Err(Error::NotConverged {
        periods: opts.max_periods,
        last_residual: history.last().copied().unwrap_or(f64::INFINITY),
        tolerance: opts.tol_ss,
        history: tail(&history),
    })
}

fn tail(h: &[f64]) -> Vec<f64> {
    h[h.len().saturating_sub(64)..].to_vec()
}

/// `m` uniform samples of one period starting at `start`.
pub fn sample_cycle(ode: &MomentOde, start: &CumulantState, m: usize, tol: f64) -> Result<Vec<CumulantState>> {
    let dt = ode.period / m as f64;
    let times: Vec<f64> = (0..m).map(|l| start.t + l as f64 * dt).collect();
    let mut y = start.pack();
    let mut h = 0.0;
    let mut f = |t: f64, y: &[f64], dy: &mut [f64]| ode.rhs(t, y, dy);
    let (samples, _) = solver_for(ode, tol).solve_sampled(&mut f, start.t, &mut y, &times, &mut h)?;
    Ok(times
        .iter()
        .zip(&samples)
        .map(|(&t, v)| CumulantState::unpack(t, v))
        .collect())
}

/// `(1/P) ∫ <x(t)> exp(-i n 2π t / P) dt` over the converged cycle.
pub fn stroboscopic_component(steady: &SteadyState, op: ModeIndex, n: i64) -> Result<Complex64> {
    if !(steady.residual < steady.tolerance) {
        return Err(Error::argument("steady state is not converged"));
    }
    let m = steady.cycle.len();
    let w = 2.0 * std::f64::consts::PI / steady.period;
    // periodic trapezoid rule
    let sum: Complex64 = steady
        .cycle
        .iter()
        .map(|s| s.means[op.index()] * Complex64::from_polar(1.0, -(n as f64) * w * s.t))
        .sum();
    Ok(sum / m as f64)
}

/// Steady-state amplitude of the field in `cavity` oscillating at lab-frame
/// detuning `delta`. Fails when `delta` is not a harmonic of the drive period.
pub fn lab_component(ode: &MomentOde, steady: &SteadyState, cavity: Cavity, delta: Detuning) -> Result<Complex64> {
    let ratio = (ode.drive.frame_detuning.0 - delta.0) / ode.drive.fundamental_frequency();
    if !ratio.is_integer() {
        return Err(Error::argument(format!("detuning {delta} is not a harmonic of the drive period")));
    }
    let op = match cavity {
        Cavity::Controller => ModeIndex::AC,
        Cavity::Target => ModeIndex::AT,
    };
    stroboscopic_component(steady, op, ratio.to_integer())
}
