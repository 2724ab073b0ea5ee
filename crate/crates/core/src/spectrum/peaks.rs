//! Peak heights and η-factors (peak over local baseline).

use serde::Serialize;

use super::Spectrum;
use crate::error::{Error, Result};
use crate::model::{Cavity, DriveConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PeakKind {
    Drive,
    Stokes,
    AntiStokes,
    Sideband,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralPeak {
    pub delta_center: f64,
    pub height: f64,
    /// Smallest value inside the window; a dip below `baseline` marks a
    /// Fano-type profile.
    pub dip: f64,
    pub baseline: f64,
    pub eta: f64,
    pub kind: PeakKind,
    /// Offset from the main tone on the cavity, in mechanical quanta.
    pub order: f64,
}

impl SpectralPeak {
    pub fn has_dip(&self) -> bool {
        self.dip < self.baseline && self.height > self.baseline
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeakReport {
    pub window: f64,
    pub peaks: Vec<SpectralPeak>,
}

impl PeakReport {
    pub fn at(&self, delta: f64) -> Option<&SpectralPeak> {
        self.peaks.iter().find(|p| (p.delta_center - delta).abs() < 1e-9)
    }

    pub fn of_kind(&self, kind: PeakKind) -> Option<&SpectralPeak> {
        self.peaks.iter().find(|p| p.kind == kind)
    }
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// η at one center: max of the normalized spectrum within `±window` over the
/// median in the annulus `[2 window, 4 window]`.
pub fn eta_at(spec: &Spectrum, center: f64, window: f64) -> Result<(f64, f64, f64)> {
    let tol = 1e-9 * window;
    let mut height = f64::NEG_INFINITY;
    let mut dip = f64::INFINITY;
    let mut ring = Vec::new();
    for (d, v) in spec.detuning_grid.iter().zip(&spec.normalized) {
        let off = (d - center).abs();
        if off <= window + tol {
            height = height.max(*v);
            dip = dip.min(*v);
        } else if off >= 2.0 * window - tol && off <= 4.0 * window + tol {
            ring.push(*v);
        }
    }
    if !height.is_finite() || ring.is_empty() {
        return Err(Error::EmptyWindow(center));
    }
    Ok((height, dip, median(&mut ring)))
}

/// Evaluate η at every integer detuning and every tone detuning of `cavity`
/// whose full annulus lies on the grid.
pub fn find_peaks_eta(spec: &Spectrum, window: f64, drive: &DriveConfig, cavity: Cavity) -> Result<PeakReport> {
    if !(window > 0.0) {
        return Err(Error::argument("peak window must be positive"));
    }
    let (Some(&lo), Some(&hi)) = (spec.detuning_grid.first(), spec.detuning_grid.last()) else {
        return Err(Error::EmptyWindow(f64::NAN));
    };
    let tones: Vec<f64> = drive.tones_on(cavity).map(|t| t.detuning.as_f64()).collect();
    let main = drive
        .main_tone(cavity)
        .unwrap_or(drive.frame_detuning)
        .as_f64();

    let reach = 4.0 * window;
    let mut centers: Vec<f64> = ((lo + reach).ceil() as i64..=(hi - reach).floor() as i64)
        .map(|n| n as f64)
        .collect();
    for &t in &tones {
        if t - reach >= lo && t + reach <= hi && !centers.iter().any(|c| (c - t).abs() < 1e-12) {
            centers.push(t);
        }
    }
    centers.sort_by(|a, b| a.total_cmp(b));

    let mut peaks = Vec::with_capacity(centers.len());
    for c in centers {
        let (height, dip, baseline) = eta_at(spec, c, window)?;
        let eta = if baseline > 0.0 {
            height / baseline
        } else if height > 0.0 {
            f64::INFINITY
        } else {
            1.0
        };
        let near = |x: f64| (c - x).abs() < 1e-12;
        let kind = if tones.iter().any(|&t| near(t)) {
            PeakKind::Drive
        } else if near(main - 1.0) {
            PeakKind::Stokes
        } else if near(main + 1.0) {
            PeakKind::AntiStokes
        } else {
            PeakKind::Sideband
        };
        peaks.push(SpectralPeak {
            delta_center: c,
            height,
            dip,
            baseline,
            eta,
            kind,
            order: c - main,
        });
    }
    Ok(PeakReport { window, peaks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Detuning, DriveTone};
    use crate::spectrum::detuning_grid;
    use num_complex::Complex64;

    fn spectrum(grid: Vec<f64>, vals: Vec<f64>) -> Spectrum {
        Spectrum {
            values: vals.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
            fluctuation: vec![Complex64::new(0.0, 0.0); grid.len()],
            normalized: vals,
            detuning_grid: grid,
            argmax: 0,
            warnings: vec![],
        }
    }

    #[test]
    fn flat_spectrum_has_unit_eta() {
        let g = detuning_grid(-1.5, 3.5, 5001);
        let s = spectrum(g.clone(), vec![0.5; g.len()]);
        let drive = DriveConfig::new(vec![DriveTone::new(Cavity::Target, Detuning::ONE, 1.0)]);
        let r = find_peaks_eta(&s, 0.01, &drive, Cavity::Target).unwrap();
        assert_eq!(r.peaks.len(), 5);
        assert!(r.peaks.iter().all(|p| p.eta == 1.0));
        assert_eq!(r.at(0.0).unwrap().kind, PeakKind::Stokes);
        assert_eq!(r.at(2.0).unwrap().kind, PeakKind::AntiStokes);
        assert_eq!(r.at(1.0).unwrap().kind, PeakKind::Drive);
    }

    #[test]
    fn lorentzian_eta() {
        let g = detuning_grid(-0.5, 0.5, 1001);
        let vals: Vec<f64> = g.iter().map(|d| 0.1 + 0.001 / (d * d + 1e-6)).collect();
        let s = spectrum(g, vals);
        let (h, _, b) = eta_at(&s, 0.0, 0.01).unwrap();
        assert!(h / b > 100.0);
    }

    #[test]
    fn empty_window_is_an_error() {
        let s = spectrum(vec![0.0, 1.0], vec![1.0, 1.0]);
        assert!(matches!(eta_at(&s, 0.5, 0.01), Err(Error::EmptyWindow(_))));
    }
}
