use crate::model::Diagnostic;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {}", format_diagnostics(.0))]
    Invalid(Vec<Diagnostic>),

    #[error("unknown preset `{name}`; available presets: {}", .available.join(", "))]
    UnknownPreset {
        name: String,
        available: Vec<&'static str>,
    },

    #[error("ansatz requires (c:0, c:+1, t:+1) tones; found {found}")]
    UnsupportedDrive { found: String },

    #[error("singular {what}: |denominator| = {magnitude:.3e} ({context})")]
    Singular {
        what: &'static str,
        magnitude: f64,
        context: String,
    },

    #[error("division by zero: {0}")]
    ZeroDamping(&'static str),

    #[error("step size underflow at t = {t:.6e} (h = {h:.3e}); the system is too stiff for the explicit integrator")]
    StepUnderflow { t: f64, h: f64 },

    #[error("no periodic steady state within {periods} periods (last residual {last_residual:.3e}, tolerance {tolerance:.1e})")]
    NotConverged {
        periods: usize,
        last_residual: f64,
        tolerance: f64,
        history: Vec<f64>,
    },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("empty peak window around delta = {0}")]
    EmptyWindow(f64),
}

impl Error {
    pub fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }
}

fn format_diagnostics(diags: &[Diagnostic]) -> String {
    diags
        .iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}
