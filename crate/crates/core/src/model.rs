//! Physical parameters, laser drive configurations and the preset catalog.
//!
//! All rates are expressed in the same (arbitrary) unit as the mechanical
//! frequency `omega0`; the presets use `omega0 = 1`. The optical carrier
//! frequency never enters the dynamics: every equation of motion is written
//! in a frame rotating at `optical_frequency + frame_detuning * omega0`, and
//! the carrier is only kept to label lab-frame axes.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use num_integer::Integer;
use num_rational::Rational64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest detuning denominator accepted; keeps the drive exactly periodic.
pub const MAX_DETUNING_DENOMINATOR: i64 = 16;

/// Physical rates of the two optomechanical systems.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Mechanical reference frequency; the unit of every other rate.
    #[serde(rename = "Omega0")]
    pub omega0: f64,
    /// Optical carrier frequency (axis label only).
    #[serde(rename = "omega0")]
    pub optical_frequency: f64,
    pub g0: f64,
    pub kappa: f64,
    pub gamma: f64,
    /// Mechanical coupling between the two resonators.
    #[serde(rename = "K")]
    pub k_coupling: f64,
    /// Mechanical frequency of the controller resonator.
    #[serde(rename = "Omega_c")]
    pub omega_c: f64,
    /// Mechanical frequency of the target resonator.
    #[serde(rename = "Omega_t")]
    pub omega_t: f64,
}

impl SystemParams {
    /// Identical systems with `omega0 = 1`.
    pub fn new(g0: f64, kappa: f64, gamma: f64, k_coupling: f64) -> Self {
        SystemParams {
            omega0: 1.0,
            optical_frequency: 2.0e5,
            g0,
            kappa,
            gamma,
            k_coupling,
            omega_c: 1.0,
            omega_t: 1.0,
        }
    }

    /// Parameter set shared by every published spectrum.
    pub fn reference() -> Self {
        SystemParams::new(2.4e-4, 0.23, 4.7e-4, 2.35e-4)
    }

    pub fn with_coupling(mut self, k: f64) -> Self {
        self.k_coupling = k;
        self
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn mechanical_frequency(&self, cavity: Cavity) -> f64 {
        match cavity {
            Cavity::Controller => self.omega_c,
            Cavity::Target => self.omega_t,
        }
    }

    /// Multiply every rate (including `omega0`) by `factor`.
    pub fn rescaled(&self, factor: f64) -> Self {
        SystemParams {
            omega0: self.omega0 * factor,
            optical_frequency: self.optical_frequency * factor,
            g0: self.g0 * factor,
            kappa: self.kappa * factor,
            gamma: self.gamma * factor,
            k_coupling: self.k_coupling * factor,
            omega_c: self.omega_c * factor,
            omega_t: self.omega_t * factor,
        }
    }

    /// Set a field by its configuration key.
    pub fn set(&mut self, key: &str, value: f64) -> Result<()> {
        match key {
            "Omega0" => {
                // keep identical resonators identical
                if self.omega_c == self.omega0 {
                    self.omega_c = value;
                }
                if self.omega_t == self.omega0 {
                    self.omega_t = value;
                }
                self.omega0 = value;
            }
            "omega0" => self.optical_frequency = value,
            "g0" => self.g0 = value,
            "kappa" => self.kappa = value,
            "gamma" => self.gamma = value,
            "K" => self.k_coupling = value,
            "Omega_c" => self.omega_c = value,
            "Omega_t" => self.omega_t = value,
            other => return Err(Error::argument(format!("unknown parameter `{other}`"))),
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Cavity {
    #[serde(alias = "c")]
    Controller,
    #[serde(alias = "t")]
    Target,
}

impl Cavity {
    pub fn partner(self) -> Cavity {
        match self {
            Cavity::Controller => Cavity::Target,
            Cavity::Target => Cavity::Controller,
        }
    }

    pub fn short(self) -> &'static str {
        match self {
            Cavity::Controller => "c",
            Cavity::Target => "t",
        }
    }
}

impl FromStr for Cavity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "c" | "controller" => Ok(Cavity::Controller),
            "t" | "target" => Ok(Cavity::Target),
            other => Err(Error::argument(format!("unknown cavity `{other}`"))),
        }
    }
}

/// Drive frequency offset from the optical carrier in units of `omega0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Detuning(pub Rational64);

impl Detuning {
    pub const ZERO: Detuning = Detuning(Rational64::new_raw(0, 1));
    pub const ONE: Detuning = Detuning(Rational64::new_raw(1, 1));

    pub fn new(numer: i64, denom: i64) -> Self {
        Detuning(Rational64::new(numer, denom))
    }

    pub fn integer(n: i64) -> Self {
        Detuning(Rational64::from_integer(n))
    }

    pub fn as_f64(self) -> f64 {
        *self.0.numer() as f64 / *self.0.denom() as f64
    }
}

impl fmt::Display for Detuning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_integer() {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

impl FromStr for Detuning {
    type Err = Error;

    /// Accepts `3`, `-1/2`, `+1` or a decimal such as `0.25`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().trim_start_matches('+');
        let bad = || Error::argument(format!("cannot parse detuning `{s}`"));
        if let Some((n, d)) = s.split_once('/') {
            let n: i64 = n.trim().parse().map_err(|_| bad())?;
            let d: i64 = d.trim().parse().map_err(|_| bad())?;
            if d == 0 {
                return Err(bad());
            }
            return Ok(Detuning::new(n, d));
        }
        if let Ok(n) = s.parse::<i64>() {
            return Ok(Detuning::integer(n));
        }
        let x: f64 = s.parse().map_err(|_| bad())?;
        for d in 1..=MAX_DETUNING_DENOMINATOR {
            let n = (x * d as f64).round();
            if (n / d as f64 - x).abs() < 1e-12 {
                return Ok(Detuning::new(n as i64, d));
            }
        }
        Err(Error::argument(format!(
            "detuning `{s}` is not a fraction with denominator <= {MAX_DETUNING_DENOMINATOR}"
        )))
    }
}

impl Serialize for Detuning {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Detuning {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(i64),
            Float(f64),
            Text(String),
        }
        let text = match Raw::deserialize(deserializer)? {
            Raw::Int(n) => return Ok(Detuning::integer(n)),
            Raw::Float(x) => x.to_string(),
            Raw::Text(s) => s,
        };
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// One coherent laser tone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveTone {
    pub cavity: Cavity,
    /// Field strength in units of `omega0`.
    pub amplitude: Complex64,
    pub detuning: Detuning,
}

impl DriveTone {
    pub fn new(cavity: Cavity, detuning: Detuning, amplitude: f64) -> Self {
        DriveTone {
            cavity,
            amplitude: Complex64::new(amplitude, 0.0),
            detuning,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriveConfig {
    pub tones: Vec<DriveTone>,
    /// Rotating frame offset: the frame turns at `optical_frequency + frame_detuning * omega0`.
    #[serde(default = "default_frame")]
    pub frame_detuning: Detuning,
}

fn default_frame() -> Detuning {
    Detuning::ONE
}

impl Default for DriveConfig {
    fn default() -> Self {
        DriveConfig {
            tones: Vec::new(),
            frame_detuning: Detuning::ONE,
        }
    }
}

impl DriveConfig {
    pub fn new(tones: Vec<DriveTone>) -> Self {
        DriveConfig {
            tones,
            frame_detuning: Detuning::ONE,
        }
    }

    pub fn with_frame(mut self, frame: Detuning) -> Self {
        self.frame_detuning = frame;
        self
    }

    pub fn tones_on(&self, cavity: Cavity) -> impl Iterator<Item = &DriveTone> + '_ {
        self.tones.iter().filter(move |t| t.cavity == cavity)
    }

    /// Detuning of the strongest tone on `cavity`; the first one wins ties.
    pub fn main_tone(&self, cavity: Cavity) -> Option<Detuning> {
        self.tones_on(cavity)
            .fold(None::<&DriveTone>, |best, t| match best {
                Some(b) if b.amplitude.norm() >= t.amplitude.norm() => Some(b),
                _ => Some(t),
            })
            .map(|t| t.detuning)
    }

    /// Amplitude of the tone on `cavity` at `detuning`, zero when absent.
    pub fn amplitude(&self, cavity: Cavity, detuning: Detuning) -> Complex64 {
        self.tones_on(cavity)
            .find(|t| t.detuning == detuning)
            .map(|t| t.amplitude)
            .unwrap_or_default()
    }

    /// Insert or replace the tone at (`cavity`, `detuning`).
    pub fn set_tone(&mut self, cavity: Cavity, detuning: Detuning, amplitude: Complex64) {
        match self
            .tones
            .iter_mut()
            .find(|t| t.cavity == cavity && t.detuning == detuning)
        {
            Some(t) => t.amplitude = amplitude,
            None => self.tones.push(DriveTone {
                cavity,
                amplitude,
                detuning,
            }),
        }
    }

    /// Angular frequency at which a tone rotates in the moving frame:
    /// the drive term is `E * exp(i * frame_frequency * t)`.
    pub fn frame_frequency(&self, tone: &DriveTone, omega0: f64) -> f64 {
        (self.frame_detuning.0 - tone.detuning.0).to_f64_lossy() * omega0
    }

    /// Greatest common divisor of the mechanical frequency and all nonzero
    /// frame offsets, as a rational multiple of `omega0`. Including the
    /// mechanical frequency keeps `n = 1` harmonics at `omega0` for integer
    /// detunings.
    pub fn fundamental_frequency(&self) -> Rational64 {
        let mut acc = Rational64::from_integer(1);
        for tone in &self.tones {
            let diff = self.frame_detuning.0 - tone.detuning.0;
            let offset = if diff < Rational64::from_integer(0) { -diff } else { diff };
            if offset == Rational64::from_integer(0) {
                continue;
            }
            acc = rational_gcd(acc, offset);
        }
        acc
    }

    /// Period of the driven equations of motion; `2π/omega0` for integer
    /// detunings.
    pub fn fundamental_period(&self, omega0: f64) -> f64 {
        2.0 * std::f64::consts::PI / (omega0 * self.fundamental_frequency().to_f64_lossy())
    }
}

trait ToF64Lossy {
    fn to_f64_lossy(self) -> f64;
}

impl ToF64Lossy for Rational64 {
    fn to_f64_lossy(self) -> f64 {
        *self.numer() as f64 / *self.denom() as f64
    }
}

fn rational_gcd(a: Rational64, b: Rational64) -> Rational64 {
    let l = a.denom().lcm(b.denom());
    let na = a.numer() * (l / a.denom());
    let nb = b.numer() * (l / b.denom());
    Rational64::new(na.gcd(&nb), l)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub code: String,
    pub message: String,
}

impl Diagnostic {
    fn error(code: &str, message: impl Into<String>) -> Self {
        Diagnostic {
            severity: Severity::Error,
            code: code.to_string(),
            message: message.into(),
        }
    }

    fn warning(code: &str, message: impl Into<String>) -> Self {
        Diagnostic {
            severity: Severity::Warning,
            code: code.to_string(),
            message: message.into(),
        }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let level = match self.severity {
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        write!(f, "{level}[{}]: {}", self.code, self.message)
    }
}

/// Check hard invariants (errors) and the sideband-resolved weak-coupling
/// regime (warnings).
pub fn validate(params: &SystemParams, drive: &DriveConfig) -> Vec<Diagnostic> {
    let mut out = Vec::new();

    let rates = [
        ("g0", params.g0),
        ("kappa", params.kappa),
        ("gamma", params.gamma),
        ("K", params.k_coupling),
    ];
    for (name, value) in rates {
        if !value.is_finite() {
            out.push(Diagnostic::error("non-finite", format!("{name} is not finite")));
        } else if value < 0.0 {
            let code = if matches!(name, "kappa" | "gamma") {
                "negative damping rate"
            } else {
                "negative rate"
            };
            out.push(Diagnostic::error(code, format!("{name} = {value} < 0")));
        }
    }
    for (name, value) in [
        ("Omega0", params.omega0),
        ("Omega_c", params.omega_c),
        ("Omega_t", params.omega_t),
    ] {
        if !(value.is_finite() && value > 0.0) {
            out.push(Diagnostic::error(
                "non-positive frequency",
                format!("{name} = {value} must be positive"),
            ));
        }
    }

    for (i, tone) in drive.tones.iter().enumerate() {
        if !(tone.amplitude.re.is_finite() && tone.amplitude.im.is_finite()) {
            out.push(Diagnostic::error(
                "non-finite",
                format!("tone {i} has a non-finite amplitude"),
            ));
        }
        if *tone.detuning.0.denom() > MAX_DETUNING_DENOMINATOR {
            out.push(Diagnostic::error(
                "detuning denominator",
                format!(
                    "tone {i} detuning {} has denominator > {MAX_DETUNING_DENOMINATOR}",
                    tone.detuning
                ),
            ));
        }
        if drive.tones[..i]
            .iter()
            .any(|t| t.cavity == tone.cavity && t.detuning == tone.detuning)
        {
            out.push(Diagnostic::error(
                "duplicate tone",
                format!(
                    "more than one tone on {}:{}",
                    tone.cavity.short(),
                    tone.detuning
                ),
            ));
        }
    }
    if *drive.frame_detuning.0.denom() > MAX_DETUNING_DENOMINATOR {
        out.push(Diagnostic::error(
            "detuning denominator",
            format!("frame detuning {} is not representable", drive.frame_detuning),
        ));
    }

    if out.iter().any(Diagnostic::is_error) {
        return out;
    }

    if params.kappa >= params.omega0 {
        out.push(Diagnostic::warning(
            "regime",
            format!(
                "sideband-resolved regime violated (κ ≥ Ω0): kappa = {} >= Omega0 = {}",
                params.kappa, params.omega0
            ),
        ));
    }
    for (name, value) in [
        ("g0", params.g0),
        ("gamma", params.gamma),
        ("K", params.k_coupling),
    ] {
        if value > 0.1 * params.kappa {
            out.push(Diagnostic::warning(
                "regime",
                format!(
                    "weak-coupling regime violated: {name} = {value} is not much smaller than kappa = {}",
                    params.kappa
                ),
            ));
        }
    }
    out
}

/// Reject configurations with hard errors.
pub fn ensure_valid(params: &SystemParams, drive: &DriveConfig) -> Result<Vec<Diagnostic>> {
    let diags = validate(params, drive);
    if diags.iter().any(Diagnostic::is_error) {
        Err(Error::Invalid(diags))
    } else {
        Ok(diags)
    }
}

/// Single-photon cooperativity `4 g0² / (γ κ)` and its multiphoton version
/// `n_cav * C`.
pub fn cooperativity(params: &SystemParams, n_cav: f64) -> Result<(f64, f64)> {
    if params.gamma == 0.0 {
        return Err(Error::ZeroDamping("cooperativity needs gamma > 0"));
    }
    if params.kappa == 0.0 {
        return Err(Error::ZeroDamping("cooperativity needs kappa > 0"));
    }
    let c = 4.0 * params.g0 * params.g0 / (params.gamma * params.kappa);
    Ok((c, n_cav * c))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPreset {
    pub name: String,
    pub params: SystemParams,
    pub drive: DriveConfig,
    pub notes: String,
}

/// Preset names in catalog order.
pub const PRESET_NAMES: [&str; 11] = [
    "fig2_red",
    "fig2_green",
    "fig2_orange",
    "fig2_blue",
    "fig2b_black",
    "fig3_orange",
    "fig3_purple",
    "fig3_green",
    "fig3_red",
    "fig3_blue",
    "fig3_yellow",
];

pub fn preset(name: &str) -> Result<ExperimentPreset> {
    use Cavity::{Controller as C, Target as T};
    let int = Detuning::integer;
    let half = |n: i64| Detuning::new(n, 2);

    let (k_zero, target, controller, notes): (bool, Detuning, Vec<(Detuning, f64)>, &str) =
        match name {
            "fig2_red" => (true, int(1), vec![], "no mechanical coupling; blue-detuned target probe"),
            "fig2_green" => (
                false,
                int(1),
                vec![(int(1), 4.0)],
                "strong monotone blue-detuned controller input",
            ),
            "fig2_orange" => (false, int(1), vec![(int(0), 1.0)], "monotone resonant controller input"),
            "fig2_blue" | "fig3_purple" => (
                false,
                int(1),
                vec![(int(0), 1.0), (int(1), 1.0)],
                "two-tone resonant + blue-detuned controller input",
            ),
            "fig2b_black" => (true, int(0), vec![], "no mechanical coupling; resonant target input"),
            "fig3_orange" => (
                false,
                int(2),
                vec![(int(0), 1.0), (int(1), 1.0)],
                "two-tone controller; doubly blue-detuned target probe",
            ),
            "fig3_green" => (
                false,
                int(0),
                vec![(int(0), 1.0), (int(1), 1.0)],
                "two-tone controller; resonant target probe",
            ),
            "fig3_red" => (
                false,
                int(-1),
                vec![(int(0), 1.0), (int(1), 1.0)],
                "two-tone controller; red-detuned target probe",
            ),
            "fig3_blue" => (
                false,
                int(1),
                vec![(int(-1), 1.0), (int(1), 1.0)],
                "controller tones two mechanical quanta apart",
            ),
            "fig3_yellow" => (
                false,
                int(1),
                vec![(half(-1), 1.0), (half(1), 1.0)],
                "controller tones at half-integer detunings, one mechanical quantum apart",
            ),
            other => {
                return Err(Error::UnknownPreset {
                    name: other.to_string(),
                    available: PRESET_NAMES.to_vec(),
                })
            }
        };

    let mut params = SystemParams::reference();
    if k_zero {
        params.k_coupling = 0.0;
    }
    let mut tones: Vec<DriveTone> = controller
        .into_iter()
        .map(|(d, e)| DriveTone::new(C, d, e))
        .collect();
    tones.push(DriveTone::new(T, target, 1.0));

    Ok(ExperimentPreset {
        name: name.to_string(),
        params,
        drive: DriveConfig::new(tones),
        notes: notes.to_string(),
    })
}

pub fn presets() -> Vec<ExperimentPreset> {
    PRESET_NAMES
        .iter()
        .map(|n| preset(n).expect("catalog names resolve"))
        .collect()
}
