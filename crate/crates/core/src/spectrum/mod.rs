//! Output power spectra from two-time correlations.
//!
//! `C(τ) = conj(<a>_ref) <a(τ)> + V_a(τ)` where the fluctuation part obeys the
//! linear regression equation `dV/dτ = J(m(τ)) V` over the eight ladder
//! operators. Spectra use the kernel `exp((i ω_frame - ε) τ)`: the fixed
//! resolution `ε` gives coherent lines a finite height and makes the result
//! independent of the window length once `T ≫ 1/ε`.
//!
//! Two evaluation paths exist. [`propagate_two_time`] samples `C(τ)` on a
//! uniform grid by direct integration; [`floquet_correlation`] integrates one
//! period of the steady cycle together with the regression propagator and
//! sums the remaining periods in closed form. Both feed the same trapezoid
//! quadrature.

pub mod peaks;

use nalgebra::SVector;
use num_complex::Complex64;
use serde::Serialize;

use crate::cumulant::{CumulantState, Matrix8, ModeIndex, MomentOde, PACKED_DIM};
use crate::dynamics::{cycle_samples, solver_for, stroboscopic_component, SteadyState};
use crate::error::{Error, Result};
use crate::model::{Cavity, DriveConfig};
use crate::par;
pub use peaks::{find_peaks_eta, PeakKind, PeakReport, SpectralPeak};

pub type Vector8 = SVector<Complex64, 8>;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

fn mode_of(cavity: Cavity) -> usize {
    match cavity {
        Cavity::Controller => 0,
        Cavity::Target => 1,
    }
}

/// `V(0)`: equal-time cumulants `Δ<a^+ X>` for the eight ladder operators.
fn initial_regression(state: &CumulantState, alpha: usize) -> Vector8 {
    let mut v = Vector8::zeros();
    for j in 0..4 {
        v[j] = state.normal[(alpha, j)];
        v[4 + j] = state.anomalous[(alpha, j)].conj();
    }
    v
}

/// `<a^+(t0)>` used in the factorized part of the correlation.
///
/// This is the conjugated component of the steady mean at the strongest tone
/// on the cavity, evaluated at the cycle start. When that tone sits at the
/// frame frequency it is the period average of the mean. Picking the tone
/// component instead of the plain average keeps the spectrum independent of
/// the rotating frame.
pub fn coherent_reference(ode: &MomentOde, steady: &SteadyState, cavity: Cavity) -> Result<Complex64> {
    let drive = &ode.drive;
    let Some(main) = drive.main_tone(cavity) else {
        return Ok(steady.period_mean[mode_of(cavity)].conj());
    };
    let ratio = (drive.frame_detuning.0 - main.0) / drive.fundamental_frequency();
    debug_assert!(ratio.is_integer());
    let n = ratio.to_integer();
    let op = ModeIndex::from_index(mode_of(cavity));
    let m = stroboscopic_component(steady, op, n)?;
    let w = 2.0 * std::f64::consts::PI / steady.period;
    Ok((m * Complex64::from_polar(1.0, n as f64 * w * steady.start().t)).conj())
}

fn check_steady(steady: &SteadyState) -> Result<()> {
    if !(steady.residual < steady.tolerance) {
        return Err(Error::argument("two-time propagation needs a converged steady state"));
    }
    Ok(())
}

/// `C(τ)` sampled at `τ_j = j dt`, split into coherent and fluctuation parts.
#[derive(Debug, Clone, Serialize)]
pub struct SampledCorrelation {
    pub dt: f64,
    pub coherent: Vec<Complex64>,
    pub fluctuation: Vec<Complex64>,
}

impl SampledCorrelation {
    pub fn total(&self, j: usize) -> Complex64 {
        self.coherent[j] + self.fluctuation[j]
    }

    pub fn duration(&self) -> f64 {
        self.dt * (self.coherent.len() - 1) as f64
    }
}

/// Direct propagation of the two-time correlation over `[0, T]`.
pub fn propagate_two_time(
    ode: &MomentOde,
    steady: &SteadyState,
    cavity: Cavity,
    t_window: f64,
    dt: f64,
    tol: f64,
) -> Result<SampledCorrelation> {
    check_steady(steady)?;
    if !(dt > 0.0 && t_window >= dt) {
        return Err(Error::argument("need 0 < dt <= T"));
    }
    let alpha = mode_of(cavity);
    let start = steady.start();
    let prefactor = coherent_reference(ode, steady, cavity)?;
    let v0 = initial_regression(start, alpha);

    let n = (t_window / dt).round() as usize;
    let t0 = start.t;
    let times: Vec<f64> = (0..=n).map(|j| t0 + j as f64 * dt).collect();

    let dim = PACKED_DIM + 16;
    let mut y = start.pack();
    y.resize(dim, 0.0);
    for k in 0..8 {
        y[PACKED_DIM + 2 * k] = v0[k].re;
        y[PACKED_DIM + 2 * k + 1] = v0[k].im;
    }
    let mut f = |t: f64, y: &[f64], dy: &mut [f64]| {
        ode.rhs(t, &y[..PACKED_DIM], &mut dy[..PACKED_DIM]);
        let j = ode.jacobian_packed(y);
        let v = Vector8::from_fn(|k, _| Complex64::new(y[PACKED_DIM + 2 * k], y[PACKED_DIM + 2 * k + 1]));
        let dv = j * v;
        for k in 0..8 {
            dy[PACKED_DIM + 2 * k] = dv[k].re;
            dy[PACKED_DIM + 2 * k + 1] = dv[k].im;
        }
    };
    let mut h = 0.0;
    let (samples, _) = solver_for(ode, tol).solve_sampled(&mut f, t0, &mut y, &times, &mut h)?;

    let coherent = samples
        .iter()
        .map(|s| prefactor * Complex64::new(s[2 * alpha], s[2 * alpha + 1]))
        .collect();
    let fluctuation = samples
        .iter()
        .map(|s| Complex64::new(s[PACKED_DIM + 2 * alpha], s[PACKED_DIM + 2 * alpha + 1]))
        .collect();
    Ok(SampledCorrelation {
        dt,
        coherent,
        fluctuation,
    })
}

/// One period of the steady cycle plus the regression propagator.
#[derive(Debug, Clone)]
pub struct FloquetCorrelation {
    pub period: f64,
    pub dt: f64,
    pub prefactor: Complex64,
    /// `<a(s_l)>` for `s_l = l dt`, `l < M`.
    pub means: Vec<Complex64>,
    /// Row `alpha` of the propagator `Φ(s_l)`.
    pub rows: Vec<[Complex64; 8]>,
    pub monodromy: Matrix8,
    pub v0: Vector8,
    pub alpha: usize,
    /// Relative mismatch of the moment state after one period.
    pub closure: f64,
}

/// Build the one-period data for the closed-form multi-period sum.
pub fn floquet_correlation(
    ode: &MomentOde,
    steady: &SteadyState,
    cavity: Cavity,
    samples_per_radian_period: usize,
    tol: f64,
) -> Result<FloquetCorrelation> {
    check_steady(steady)?;
    let alpha = mode_of(cavity);
    let start = steady.start();
    let p = steady.period;
    let m = cycle_samples(p, ode.params.omega0, samples_per_radian_period);
    let dt = p / m as f64;
    let t0 = start.t;
    let times: Vec<f64> = (0..=m).map(|l| t0 + l as f64 * dt).collect();

    let dim = PACKED_DIM + 128;
    let mut y = start.pack();
    y.resize(dim, 0.0);
    for k in 0..8 {
        y[PACKED_DIM + 2 * (8 * k + k)] = 1.0;
    }
    let mut f = |t: f64, y: &[f64], dy: &mut [f64]| {
        ode.rhs(t, &y[..PACKED_DIM], &mut dy[..PACKED_DIM]);
        let j = ode.jacobian_packed(y);
        let phi = Matrix8::from_fn(|r, c| {
            let k = PACKED_DIM + 2 * (8 * r + c);
            Complex64::new(y[k], y[k + 1])
        });
        let d = j * phi;
        for r in 0..8 {
            for c in 0..8 {
                let k = PACKED_DIM + 2 * (8 * r + c);
                dy[k] = d[(r, c)].re;
                dy[k + 1] = d[(r, c)].im;
            }
        }
    };
    let mut h = 0.0;
    let (samples, _) = solver_for(ode, tol).solve_sampled(&mut f, t0, &mut y, &times, &mut h)?;

    let entry = |s: &[f64], r: usize, c: usize| {
        let k = PACKED_DIM + 2 * (8 * r + c);
        Complex64::new(s[k], s[k + 1])
    };
    let means = samples[..m]
        .iter()
        .map(|s| Complex64::new(s[2 * alpha], s[2 * alpha + 1]))
        .collect();
    let rows = samples[..m]
        .iter()
        .map(|s| std::array::from_fn(|c| entry(s, alpha, c)))
        .collect();
    let end = &samples[m];
    let monodromy = Matrix8::from_fn(|r, c| entry(end, r, c));

    let y0 = start.pack();
    let num: f64 = y0.iter().zip(end).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let den: f64 = y0.iter().map(|a| a * a).sum::<f64>().sqrt();
    let closure = if num == 0.0 { 0.0 } else { num / den.max(f64::MIN_POSITIVE) };

    Ok(FloquetCorrelation {
        period: p,
        dt,
        prefactor: coherent_reference(ode, steady, cavity)?,
        means,
        rows,
        monodromy,
        v0: initial_regression(start, alpha),
        alpha,
        closure,
    })
}

/// `exp(x) - 1` for complex `x` without cancellation near zero.
fn cexpm1(x: Complex64) -> Complex64 {
    let em1 = x.re.exp_m1();
    let (s, c) = x.im.sin_cos();
    let half = (x.im / 2.0).sin();
    Complex64::new(em1 * c - 2.0 * half * half, x.re.exp() * s)
}

/// A correlation function that can be Fourier transformed on a window.
pub trait Transform: Sync {
    /// Trapezoid transform `∫_0^T C(τ) exp((iω - ε)τ) dτ` of the coherent
    /// and fluctuation parts, for a frame frequency `omega`.
    fn transform(&self, omega: f64, eps: f64) -> (Complex64, Complex64);
    fn window(&self) -> f64;
}

impl Transform for SampledCorrelation {
    fn transform(&self, omega: f64, eps: f64) -> (Complex64, Complex64) {
        let n = self.coherent.len() - 1;
        let step = Complex64::new(-eps * self.dt, omega * self.dt).exp();
        let mut w = Complex64::new(1.0, 0.0);
        let (mut a, mut b) = (ZERO, ZERO);
        for j in 0..=n {
            let weight = if j == 0 || j == n { 0.5 } else { 1.0 };
            a += self.coherent[j] * w * weight;
            b += self.fluctuation[j] * w * weight;
            // resynchronize the phasor periodically
            w = if (j + 1) % 4096 == 0 {
                Complex64::new(-eps * self.dt * (j + 1) as f64, omega * self.dt * (j + 1) as f64).exp()
            } else {
                w * step
            };
        }
        (a * self.dt, b * self.dt)
    }

    fn window(&self) -> f64 {
        self.duration()
    }
}

/// Floquet data evaluated over `periods` whole periods.
pub struct FloquetWindow<'a> {
    pub data: &'a FloquetCorrelation,
    pub periods: u64,
    /// `Mon^K V0`
    tail: Vector8,
}

impl<'a> FloquetWindow<'a> {
    pub fn new(data: &'a FloquetCorrelation, periods: u64) -> Self {
        let mut pow = Matrix8::identity();
        let mut base = data.monodromy;
        let mut k = periods;
        while k > 0 {
            if k & 1 == 1 {
                pow = base * pow;
            }
            base = base * base;
            k >>= 1;
        }
        FloquetWindow {
            data,
            periods,
            tail: pow * data.v0,
        }
    }
}

impl Transform for FloquetWindow<'_> {
    fn transform(&self, omega: f64, eps: f64) -> (Complex64, Complex64) {
        let d = self.data;
        let s = Complex64::new(-eps, omega);
        let m = d.means.len();
        let big_t = self.periods as f64 * d.period;
        let zk = (s * big_t).exp();
        let one_minus_z = -cexpm1(s * d.period);
        let one_minus_zk = -cexpm1(s * big_t);

        let step = (s * d.dt).exp();
        let mut w = Complex64::new(1.0, 0.0);
        let mut b = ZERO;
        let mut r = [ZERO; 8];
        for l in 0..m {
            b += d.means[l] * w;
            for (acc, x) in r.iter_mut().zip(&d.rows[l]) {
                *acc += x * w;
            }
            w *= step;
        }
        let m0 = d.means[0];
        let coherent = d.prefactor * d.dt * (b * one_minus_zk / one_minus_z + (m0 * zk - m0) * 0.5);

        // Σ_k z^k Mon^k V0 over K periods = (I - z Mon)^{-1} (V0 - z^K Mon^K V0)
        let a = Matrix8::identity() - d.monodromy * (s * d.period).exp();
        let rhs = d.v0 - self.tail * zk;
        let u = a.lu().solve(&rhs).unwrap_or_else(Vector8::zeros);
        let mut fl: Complex64 = r.iter().zip(u.iter()).map(|(x, y)| x * y).sum();
        let end = self.tail[d.alpha] * zk;
        fl += (end - d.v0[d.alpha]) * 0.5;
        (coherent, fl * d.dt)
    }

    fn window(&self) -> f64 {
        self.periods as f64 * self.data.period
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    Rectangular,
    Hann,
}

#[derive(Debug, Clone, Serialize)]
pub struct Spectrum {
    pub detuning_grid: Vec<f64>,
    pub values: Vec<Complex64>,
    pub normalized: Vec<f64>,
    /// Fluctuation-only part of `values`.
    pub fluctuation: Vec<Complex64>,
    pub argmax: usize,
    pub warnings: Vec<String>,
}

/// Uniform grid of `n` points on `[lo, hi]`.
pub fn detuning_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Evaluate the spectrum on a lab-frame detuning grid (`ω = ω0 + δ omega0`).
pub fn compute_spectrum(
    corr: &dyn Transform,
    drive: &DriveConfig,
    omega0: f64,
    gamma: f64,
    grid: &[f64],
    eps: f64,
    window: WindowKind,
) -> Result<Spectrum> {
    if grid.is_empty() {
        return Err(Error::argument("empty detuning grid"));
    }
    if !(eps >= 0.0) {
        return Err(Error::argument("resolution must be nonnegative"));
    }
    let mut warnings = Vec::new();
    let spacing = grid
        .windows(2)
        .map(|w| (w[1] - w[0]).abs())
        .fold(0.0, f64::max);
    if grid.len() > 1 && spacing > gamma / (2.0 * omega0) {
        warnings.push(format!(
            "grid spacing {spacing:.3e} is coarser than gamma/(2 Omega0) = {:.3e}; spectral features may be unresolved",
            gamma / (2.0 * omega0)
        ));
    }
    let frame = drive.frame_detuning.as_f64();
    let shift = 2.0 * std::f64::consts::PI / corr.window();
    let pairs = par::map_indexed(grid.len(), |i| {
        let w = (grid[i] - frame) * omega0;
        match window {
            WindowKind::Rectangular => corr.transform(w, eps),
            WindowKind::Hann => {
                let (c0, f0) = corr.transform(w, eps);
                let (cp, fp) = corr.transform(w + shift, eps);
                let (cm, fm) = corr.transform(w - shift, eps);
                (
                    c0 * 0.5 - (cp + cm) * 0.25,
                    f0 * 0.5 - (fp + fm) * 0.25,
                )
            }
        }
    });
    let values: Vec<Complex64> = pairs.iter().map(|(c, f)| c + f).collect();
    let fluctuation: Vec<Complex64> = pairs.iter().map(|(_, f)| *f).collect();
    let (argmax, max) = values
        .iter()
        .enumerate()
        .fold((0, 0.0f64), |acc, (i, v)| if v.norm() > acc.1 { (i, v.norm()) } else { acc });
    let normalized = if max > 0.0 {
        values.iter().map(|v| v.norm() / max).collect()
    } else {
        vec![0.0; values.len()]
    };
    Ok(Spectrum {
        detuning_grid: grid.to_vec(),
        values,
        normalized,
        fluctuation,
        argmax,
        warnings,
    })
}

impl Spectrum {
    pub fn to_csv(&self) -> String {
        csv(&self.detuning_grid, &self.values)
    }

    /// Same layout for the fluctuation-only spectrum.
    pub fn fluctuation_csv(&self) -> String {
        csv(&self.detuning_grid, &self.fluctuation)
    }
}

fn csv(grid: &[f64], values: &[Complex64]) -> String {
    use crate::io::fmt;
    let max = values.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let mut out = String::from("delta,re_S,im_S,abs_S,normalized\n");
    for (d, v) in grid.iter().zip(values) {
        let norm = if max > 0.0 { v.norm() / max } else { 0.0 };
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt(*d),
            fmt(v.re),
            fmt(v.im),
            fmt(v.norm()),
            fmt(norm)
        ));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectrumOptions {
    pub cavity: Cavity,
    /// Resolution `ε` in units of `omega0`.
    pub resolution: f64,
    /// Correlation window; `None` picks `max(10/γ, 20/ε)`.
    pub t_window: Option<f64>,
    pub grid_lo: f64,
    pub grid_hi: f64,
    pub grid_points: usize,
    pub window: WindowKind,
    pub tol: f64,
    pub samples_per_radian_period: usize,
    pub peak_window: f64,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        SpectrumOptions {
            cavity: Cavity::Target,
            resolution: 1e-5,
            t_window: None,
            grid_lo: -1.5,
            grid_hi: 3.5,
            grid_points: 24001,
            window: WindowKind::Rectangular,
            tol: 1e-9,
            samples_per_radian_period: 128,
            peak_window: 0.01,
        }
    }
}

impl SpectrumOptions {
    /// Whole number of periods covering the requested window.
    pub fn periods(&self, ode: &MomentOde) -> u64 {
        let eps = self.resolution * ode.params.omega0;
        let t = self.t_window.unwrap_or_else(|| {
            let a = if ode.params.gamma > 0.0 { 10.0 / ode.params.gamma } else { 0.0 };
            let b = if eps > 0.0 { 20.0 / eps } else { 0.0 };
            a.max(b)
        });
        ((t / ode.period).ceil() as u64).max(1)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumRun {
    pub spectrum: Spectrum,
    pub peaks: PeakReport,
    pub periods: u64,
    pub t_window: f64,
    pub floquet_closure: f64,
}

/// Steady state to spectrum and peak report via the one-period Floquet sum.
pub fn spectrum_from_steady(ode: &MomentOde, steady: &SteadyState, opts: &SpectrumOptions) -> Result<SpectrumRun> {
    let data = floquet_correlation(ode, steady, opts.cavity, opts.samples_per_radian_period, opts.tol)?;
    let periods = opts.periods(ode);
    let win = FloquetWindow::new(&data, periods);
    let grid = detuning_grid(opts.grid_lo, opts.grid_hi, opts.grid_points);
    let spectrum = compute_spectrum(
        &win,
        &ode.drive,
        ode.params.omega0,
        ode.params.gamma,
        &grid,
        opts.resolution * ode.params.omega0,
        opts.window,
    )?;
    let peaks = find_peaks_eta(&spectrum, opts.peak_window, &ode.drive, opts.cavity)?;
    Ok(SpectrumRun {
        spectrum,
        peaks,
        periods,
        t_window: periods as f64 * ode.period,
        floquet_closure: data.closure,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expm1_small_and_large() {
        let x = Complex64::new(-1e-9, 2e-9);
        let e = cexpm1(x);
        assert!((e - x).norm() < 1e-17);
        let y = Complex64::new(0.3, -1.2);
        assert!((cexpm1(y) - (y.exp() - 1.0)).norm() < 1e-15);
    }

    #[test]
    fn pure_tone_peaks_at_its_frequency() {
        // C(τ) = exp(i ν τ) with ν = -(δ0 - frame) in the frame
        let dt = 0.05;
        let n = 20000;
        let nu = -0.5;
        let corr = SampledCorrelation {
            dt,
            coherent: (0..=n).map(|j| Complex64::from_polar(1.0, nu * dt * j as f64)).collect(),
            fluctuation: vec![ZERO; n + 1],
        };
        let drive = DriveConfig::default();
        let grid = detuning_grid(0.0, 3.0, 301);
        let s = compute_spectrum(&corr, &drive, 1.0, 1.0, &grid, 0.0, WindowKind::Rectangular).unwrap();
        assert!((grid[s.argmax] - 1.5).abs() < 1e-12);
        assert_eq!(s.normalized[s.argmax], 1.0);
        let hann = compute_spectrum(&corr, &drive, 1.0, 1.0, &grid, 0.0, WindowKind::Hann).unwrap();
        assert!((grid[hann.argmax] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn coarse_grid_warns() {
        let corr = SampledCorrelation {
            dt: 1.0,
            coherent: vec![Complex64::new(1.0, 0.0); 3],
            fluctuation: vec![ZERO; 3],
        };
        let s = compute_spectrum(
            &corr,
            &DriveConfig::default(),
            1.0,
            1e-3,
            &detuning_grid(0.0, 1.0, 11),
            0.0,
            WindowKind::Rectangular,
        )
        .unwrap();
        assert_eq!(s.warnings.len(), 1);
    }
}
