//! Linearized sideband ansatz for the nonlocal Stokes amplitude.
//!
//! The controller cavity carries a resonant tone (`c:0`) and a blue-detuned
//! tone (`c:+1`); the target carries a blue-detuned probe (`t:+1`). Beating
//! of the two controller tones drives the controller resonator at `omega0`,
//! the mechanical coupling hands the motion to the target resonator, and the
//! target probe scatters into the target cavity resonance.

use nalgebra::{Matrix4, Vector4};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Cavity, Detuning, DriveConfig, SystemParams};
use crate::par;

/// Denominators smaller than this are reported instead of inverted.
pub const SINGULAR_THRESHOLD: f64 = 1e-14;

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SidebandSolution {
    pub a_c0_bar: Complex64,
    pub a_cp_bar: Complex64,
    pub a_tp_bar: Complex64,
    pub g_cc_bar: Complex64,
    pub g_c_bar: Complex64,
    pub g_t_bar: Complex64,
    pub zeta: Complex64,
    /// Target cavity component at the bare cavity frequency.
    pub a_t0: Option<Complex64>,
    /// Controller cavity component one mechanical quantum below resonance.
    pub a_cm: Option<Complex64>,
    /// Phonon amplitudes `<b_c>`, `<b_t>` (slowly varying part).
    pub b_c: Option<Complex64>,
    pub b_t: Option<Complex64>,
}

fn check_pattern(drive: &DriveConfig) -> Result<()> {
    let allowed = |c: Cavity, d: Detuning| match c {
        Cavity::Controller => d == Detuning::ZERO || d == Detuning::ONE,
        Cavity::Target => d == Detuning::ONE,
    };
    let bad: Vec<String> = drive
        .tones
        .iter()
        .filter(|t| !allowed(t.cavity, t.detuning))
        .map(|t| format!("{}:{}", t.cavity.short(), t.detuning))
        .collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Error::UnsupportedDrive {
            found: bad.join(", "),
        })
    }
}

/// Bare cavity amplitudes and effective couplings. Absent ansatz tones are
/// treated as zero amplitude; any tone outside the ansatz is rejected.
pub fn bare_amplitudes(params: &SystemParams, drive: &DriveConfig) -> Result<SidebandSolution> {
    check_pattern(drive)?;
    let half_kappa = Complex64::new(params.kappa / 2.0, 0.0);
    let blue = Complex64::new(params.kappa / 2.0, -params.omega0);

    let e_c0 = drive.amplitude(Cavity::Controller, Detuning::ZERO);
    let e_cp = drive.amplitude(Cavity::Controller, Detuning::ONE);
    let e_tp = drive.amplitude(Cavity::Target, Detuning::ONE);

    let a_c0_bar = safe_div(e_c0, half_kappa, "bare amplitude", params)?;
    let a_cp_bar = safe_div(e_cp, blue, "bare amplitude", params)?;
    let a_tp_bar = safe_div(e_tp, blue, "bare amplitude", params)?;

    let g_cc_bar = params.g0 * a_c0_bar.conj() * a_cp_bar;
    let g_c_bar = params.g0 * a_c0_bar;
    let g_t_bar = params.g0 * a_tp_bar;
    let zeta = params.gamma / 2.0 - g_c_bar.norm_sqr() / Complex64::new(params.kappa / 2.0, params.omega0);

    Ok(SidebandSolution {
        a_c0_bar,
        a_cp_bar,
        a_tp_bar,
        g_cc_bar,
        g_c_bar,
        g_t_bar,
        zeta,
        a_t0: None,
        a_cm: None,
        b_c: None,
        b_t: None,
    })
}

fn safe_div(num: Complex64, den: Complex64, what: &'static str, params: &SystemParams) -> Result<Complex64> {
    if den.norm() < SINGULAR_THRESHOLD {
        return Err(Error::Singular {
            what,
            magnitude: den.norm(),
            context: describe(params),
        });
    }
    Ok(num / den)
}

fn describe(p: &SystemParams) -> String {
    format!(
        "g0={:e}, kappa={:e}, gamma={:e}, K={:e}, Omega0={:e}",
        p.g0, p.kappa, p.gamma, p.k_coupling, p.omega0
    )
}

/// Closed-form steady state of the linearized sideband equations.
pub fn stokes_closed_form(params: &SystemParams, drive: &DriveConfig) -> Result<SidebandSolution> {
    let mut s = bare_amplitudes(params, drive)?;
    let k = params.k_coupling;
    let hk = params.kappa / 2.0;

    let den = s.zeta * s.g_t_bar.norm_sqr() - hk * (k * k + s.zeta * params.gamma / 2.0);
    let a_t0 = safe_div(I * s.g_t_bar * s.g_cc_bar.conj() * k, den, "Stokes denominator", params)?;

    // daggered phonon pair first, then the optical sidebands
    let zeta_t = params.gamma / 2.0 - 2.0 * s.g_t_bar.norm_sqr() / params.kappa;
    let pair = s.zeta * zeta_t + k * k;
    let bc_dag = safe_div(-I * s.g_cc_bar.conj() * zeta_t, pair, "phonon denominator", params)?;
    let bt_dag = safe_div(-k * s.g_cc_bar.conj(), pair, "phonon denominator", params)?;
    let a_cm = safe_div(
        I * s.g_c_bar * bc_dag,
        Complex64::new(hk, params.omega0),
        "sideband denominator",
        params,
    )?;

    s.a_t0 = Some(a_t0);
    s.a_cm = Some(a_cm);
    s.b_c = Some(bc_dag.conj());
    s.b_t = Some(bt_dag.conj());
    Ok(s)
}

/// Direct 4×4 solve of the stationary linearized equations for
/// `(<a_{c,-}>, <a_{t,0}>, <b_c†>, <b_t†>)`.
pub fn stokes_linear_solve(params: &SystemParams, drive: &DriveConfig) -> Result<SidebandSolution> {
    let mut s = bare_amplitudes(params, drive)?;
    let k = Complex64::new(params.k_coupling, 0.0);
    let hk = params.kappa / 2.0;
    let hg = params.gamma / 2.0;
    let z = Complex64::new(0.0, 0.0);

    #[rustfmt::skip]
    let m = Matrix4::new(
        Complex64::new(-hk, -params.omega0), z, I * s.g_c_bar, z,
        z, Complex64::new(-hk, 0.0), z, I * s.g_t_bar,
        -I * s.g_c_bar.conj(), z, Complex64::new(-hg, 0.0), -I * k,
        z, -I * s.g_t_bar.conj(), -I * k, Complex64::new(-hg, 0.0),
    );
    let rhs = Vector4::new(z, z, I * s.g_cc_bar.conj(), z);

    let lu = m.lu();
    let u = lu.u();
    let scale = m.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let pivot = (0..4).map(|i| u[(i, i)].norm()).fold(f64::INFINITY, f64::min);
    if pivot < SINGULAR_THRESHOLD * scale.max(1.0) {
        return Err(Error::Singular {
            what: "linearized sideband matrix",
            magnitude: pivot,
            context: describe(params),
        });
    }
    let x = lu.solve(&rhs).ok_or_else(|| Error::Singular {
        what: "linearized sideband matrix",
        magnitude: pivot,
        context: describe(params),
    })?;

    s.a_cm = Some(x[0]);
    s.a_t0 = Some(x[1]);
    s.b_c = Some(x[2].conj());
    s.b_t = Some(x[3].conj());
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepGrid {
    pub gamma_values: Vec<f64>,
    pub k_values: Vec<f64>,
    /// Row per gamma, column per K; `None` marks a singular cell.
    pub magnitude: Vec<Vec<Option<f64>>>,
    /// `(gamma, K*, |a_t0|(K*))` per gamma row.
    pub ridge: Vec<(f64, f64, f64)>,
}

fn stokes_magnitude(params: &SystemParams, drive: &DriveConfig, gamma: f64, k: f64) -> Result<f64> {
    let p = params.with_gamma(gamma).with_coupling(k);
    Ok(stokes_closed_form(&p, drive)?.a_t0.unwrap_or_default().norm())
}

pub fn sweep_gamma_k(
    params: &SystemParams,
    drive: &DriveConfig,
    gammas: &[f64],
    ks: &[f64],
) -> Result<SweepGrid> {
    check_pattern(drive)?;
    let sorted = |v: &[f64]| v.windows(2).all(|w| w[0] < w[1]);
    if gammas.is_empty() || ks.is_empty() {
        return Err(Error::argument("sweep ranges must be non-empty"));
    }
    if !sorted(gammas) || !sorted(ks) {
        return Err(Error::argument("sweep values must be strictly increasing"));
    }
    if gammas[0] <= 0.0 || ks[0] < 0.0 {
        return Err(Error::argument("gamma must be positive and K nonnegative"));
    }

    let nk = ks.len();
    let cells = par::map_indexed(gammas.len() * nk, |idx| {
        let (gi, ki) = (idx / nk, idx % nk);
        stokes_magnitude(params, drive, gammas[gi], ks[ki]).ok()
    });
    let magnitude: Vec<Vec<Option<f64>>> = cells.chunks(nk).map(|r| r.to_vec()).collect();

    let ridge = par::map_indexed(gammas.len(), |gi| {
        let row = &magnitude[gi];
        let (best, _) = row
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.map(|v| (i, v)))
            .fold((0usize, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
        let gamma = gammas[gi];
        let f = |k: f64| stokes_magnitude(params, drive, gamma, k).unwrap_or(0.0);
        if best > 0 && best + 1 < nk {
            let k_star = golden_max(&f, ks[best - 1], ks[best + 1], 1e-9);
            (gamma, k_star, f(k_star))
        } else {
            (gamma, ks[best], row[best].unwrap_or(0.0))
        }
    });

    Ok(SweepGrid {
        gamma_values: gammas.to_vec(),
        k_values: ks.to_vec(),
        magnitude,
        ridge,
    })
}

impl SweepGrid {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("gamma,K,magnitude\n");
        for (gi, g) in self.gamma_values.iter().enumerate() {
            for (ki, k) in self.k_values.iter().enumerate() {
                let m = self.magnitude[gi][ki].map_or("nan".to_string(), crate::io::fmt);
                out.push_str(&format!("{},{},{}\n", crate::io::fmt(*g), crate::io::fmt(*k), m));
            }
        }
        out
    }

    pub fn ridge_csv(&self) -> String {
        let mut out = String::from("gamma,K_star,magnitude_at_star\n");
        for &(g, k, m) in &self.ridge {
            out.push_str(&format!(
                "{},{},{}\n",
                crate::io::fmt(g),
                crate::io::fmt(k),
                crate::io::fmt(m)
            ));
        }
        out
    }
}

/// Golden-section maximization on `[lo, hi]` to relative width `rtol`.
pub fn golden_max(f: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64, rtol: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..400 {
        if (hi - lo) <= rtol * (x1.abs() + x2.abs()) / 2.0 || hi - lo <= f64::EPSILON * hi.abs() {
            break;
        }
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = f(x1);
        }
    }
    if f1 > f2 {
        x1
    } else {
        x2
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimalK {
    pub k_star: f64,
    pub magnitude: f64,
    pub warning: Option<String>,
}

/// Coupling that maximizes the Stokes amplitude at the given damping.
pub fn optimal_k(params: &SystemParams, drive: &DriveConfig, gamma: f64) -> Result<OptimalK> {
    if !(gamma > 0.0) {
        return Err(Error::argument("optimal K needs gamma > 0"));
    }
    check_pattern(drive)?;
    let f = |k: f64| stokes_magnitude(params, drive, gamma, k).unwrap_or(0.0);
    let hi = 10.0 * gamma;
    let k_star = golden_max(&f, 0.0, hi, 1e-6);
    let best = f(k_star);

    // unimodality check against a coarse scan
    const SCAN: usize = 400;
    let scan: Vec<f64> = (0..=SCAN).map(|i| f(hi * i as f64 / SCAN as f64)).collect();
    let (imax, vmax) = scan
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
    if vmax <= best * (1.0 + 1e-9) {
        return Ok(OptimalK {
            k_star,
            magnitude: best,
            warning: None,
        });
    }
    let step = hi / SCAN as f64;
    let lo = (imax as f64 - 1.0).max(0.0) * step;
    let up = ((imax + 1) as f64).min(SCAN as f64) * step;
    let refined = golden_max(&f, lo, up, 1e-6);
    Ok(OptimalK {
        k_star: refined,
        magnitude: f(refined),
        warning: Some(format!(
            "objective is not unimodal on [0, {hi:e}]; used dense scan and local refinement"
        )),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{preset, DriveTone};

    fn ansatz() -> (SystemParams, DriveConfig) {
        let p = preset("fig2_blue").unwrap();
        (p.params, p.drive)
    }

    #[test]
    fn bare_values() {
        let (p, d) = ansatz();
        let s = bare_amplitudes(&p, &d).unwrap();
        assert!((s.a_c0_bar.re - 1.0 / 0.115).abs() < 1e-12);
        assert!((s.a_cp_bar.norm() - 1.0 / (0.115f64.powi(2) + 1.0).sqrt()).abs() < 1e-12);
        assert!(s.a_t0.is_none());
    }

    #[test]
    fn zero_resonant_tone_kills_stokes() {
        let (p, mut d) = ansatz();
        d.set_tone(Cavity::Controller, Detuning::ZERO, Complex64::new(0.0, 0.0));
        let s = stokes_closed_form(&p, &d).unwrap();
        assert_eq!(s.g_cc_bar, Complex64::new(0.0, 0.0));
        assert_eq!(s.a_t0.unwrap().norm(), 0.0);
        let l = stokes_linear_solve(&p, &d).unwrap();
        assert_eq!(l.a_t0.unwrap().norm(), 0.0);
        assert_eq!(l.b_c.unwrap().norm(), 0.0);
    }

    #[test]
    fn rejects_foreign_tone() {
        let (p, mut d) = ansatz();
        d.tones.push(DriveTone::new(Cavity::Target, Detuning::integer(2), 1.0));
        let e = bare_amplitudes(&p, &d).unwrap_err().to_string();
        assert!(e.contains("ansatz requires (c:0, c:+1, t:+1) tones"), "{e}");
    }

    #[test]
    fn back_substitution_matches_solver() {
        let (p, d) = ansatz();
        let a = stokes_closed_form(&p, &d).unwrap();
        let b = stokes_linear_solve(&p, &d).unwrap();
        for (x, y) in [(a.a_cm, b.a_cm), (a.b_c, b.b_c), (a.b_t, b.b_t), (a.a_t0, b.a_t0)] {
            let (x, y) = (x.unwrap(), y.unwrap());
            assert!((x - y).norm() <= 1e-10 * y.norm(), "{x} vs {y}");
        }
    }

    #[test]
    fn golden_finds_parabola_max() {
        let x = golden_max(&|x| -(x - 0.3) * (x - 0.3), 0.0, 1.0, 1e-10);
        assert!((x - 0.3).abs() < 1e-8);
    }

    #[test]
    fn k_zero_column_is_zero() {
        let (p, d) = ansatz();
        let g = sweep_gamma_k(&p, &d, &[2e-4, 4e-4], &[0.0, 1e-4, 2e-4, 3e-4]).unwrap();
        assert!(g.magnitude.iter().all(|r| r[0] == Some(0.0)));
        assert!(g.to_csv().lines().count() == 9);
        assert!(g.ridge_csv().starts_with("gamma,K_star,magnitude_at_star\n"));
    }
}
