use std::path::PathBuf;

use serde_json::json;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] omsim::Error),

    #[error("{0}")]
    Config(String),

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// 1 validation, 2 convergence, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(omsim::Error::NotConverged { .. } | omsim::Error::StepUnderflow { .. }) => 2,
            CliError::Core(_) | CliError::Config(_) => 1,
            CliError::Io { .. } => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        use omsim::Error as E;
        match self {
            CliError::Core(e) => match e {
                E::Invalid(_) => "invalid_configuration",
                E::UnknownPreset { .. } => "unknown_preset",
                E::UnsupportedDrive { .. } => "unsupported_drive",
                E::Singular { .. } => "singular",
                E::ZeroDamping(_) => "zero_damping",
                E::StepUnderflow { .. } => "step_underflow",
                E::NotConverged { .. } => "not_converged",
                E::Argument(_) => "invalid_argument",
                E::EmptyWindow(_) => "empty_window",
            },
            CliError::Config(_) => "invalid_configuration",
            CliError::Io { .. } => "io",
        }
    }

    /// Single-line JSON for stderr.
    pub fn to_json(&self, job: Option<&str>) -> String {
        let mut err = json!({
            "kind": self.kind(),
            "message": self.to_string(),
            "exit_code": self.exit_code(),
        });
        if let Some(job) = job {
            err["job"] = json!(job);
        }
        match self {
            CliError::Core(omsim::Error::Invalid(diags)) => {
                err["diagnostics"] = serde_json::to_value(diags).unwrap_or_default();
            }
            CliError::Core(omsim::Error::NotConverged {
                periods,
                last_residual,
                tolerance,
                ..
            }) => {
                err["periods"] = json!(periods);
                err["last_residual"] = json!(last_residual);
                err["tolerance"] = json!(tolerance);
            }
            _ => {}
        }
        json!({ "error": err }).to_string()
    }
}
