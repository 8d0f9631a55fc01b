use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("algebraic Jacobian dg/dy is singular (reciprocal condition {rcond:.3e})")]
    SingularAlgebraicJacobian { rcond: f64 },

    #[error("sI - A is singular at s = {re}{im:+}i (reciprocal condition {rcond:.3e})")]
    FrequencyAtPole { re: f64, im: f64, rcond: f64 },

    #[error("unsupported structure for closed-form step response: {poles} poles, {zeros} zeros")]
    UnsupportedStructure { poles: usize, zeros: usize },

    #[error("improper system: {zeros} zeros, {poles} poles after cancellation")]
    ImproperSystem { zeros: usize, poles: usize },

    #[error("invalid transfer function: {0}")]
    InvalidModel(String),

    #[error("input does not change after the step instant")]
    ZeroStep,

    #[error("response never exceeds the detection threshold")]
    NeverResponds,

    #[error("steady-state value of MV '{0}' is zero; relative steps are undefined")]
    ZeroSteadyState(String),

    #[error("gain matrix is singular (reciprocal condition {rcond:.3e})")]
    SingularGainMatrix { rcond: f64 },

    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("model gain is zero")]
    ZeroGainModel,

    #[error("closed-loop time constant {tau_c} must exceed -{taud}")]
    InvalidTauC { tau_c: f64, taud: f64 },

    #[error("invalid value for '{field}': {reason}")]
    Validation { field: String, reason: String },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Process exit code: 1 for numerical failures, 2 for usage and validation
    /// problems (bad input files, inconsistent dimensions, invalid options).
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Stage { source, .. } => source.exit_code(),
            Error::DimensionMismatch(_)
            | Error::InvalidModel(_)
            | Error::ImproperSystem { .. }
            | Error::UnsupportedStructure { .. }
            | Error::ZeroSteadyState(_)
            | Error::NotSquare { .. }
            | Error::InvalidTauC { .. }
            | Error::Validation { .. }
            | Error::Io { .. }
            | Error::Json(_)
            | Error::Csv(_) => 2,
            Error::SingularAlgebraicJacobian { .. }
            | Error::FrequencyAtPole { .. }
            | Error::ZeroStep
            | Error::NeverResponds
            | Error::SingularGainMatrix { .. }
            | Error::ZeroGainModel => 1,
        }
    }
}
