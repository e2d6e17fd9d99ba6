use semreg::correspondence::EvalError;
use semreg::loss::LossError;
use semreg::mesh::MeshError;
use semreg::registration::{CheckpointError, RegistrationError};
use semreg::render::RenderError;
use semreg::semflow::SemflowError;
use serde::Serialize;
use thiserror::Error;

pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_TOLERANCE: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(clap::Error),
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Numerical(String),
    #[error("{0}")]
    Tolerance(String),
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    kind: &'a str,
    exit_code: i32,
    message: String,
}

#[derive(Serialize)]
struct ErrorJson<'a> {
    error: ErrorBody<'a>,
}

impl CliError {
    pub fn input(m: impl Into<String>) -> Self {
        Self::Input(m.into())
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Usage(_) => "usage",
            Self::Input(_) => "input",
            Self::Numerical(_) => "numerical",
            Self::Tolerance(_) => "tolerance",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(e) => e.exit_code(),
            Self::Input(_) => EXIT_INPUT,
            Self::Numerical(_) => EXIT_NUMERICAL,
            Self::Tolerance(_) => EXIT_TOLERANCE,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&ErrorJson {
            error: ErrorBody { kind: self.kind(), exit_code: self.exit_code(), message: self.to_string() },
        })
        .expect("error serializes")
    }
}

impl From<MeshError> for CliError {
    fn from(e: MeshError) -> Self {
        match e {
            MeshError::Factorization(_) | MeshError::NonFiniteRhs => Self::Numerical(e.to_string()),
            _ => Self::Input(e.to_string()),
        }
    }
}

impl From<LossError> for CliError {
    fn from(e: LossError) -> Self {
        match e {
            LossError::Mesh(m) => m.into(),
            LossError::NoSignal => Self::Numerical(e.to_string()),
            _ => Self::Input(e.to_string()),
        }
    }
}

impl From<RegistrationError> for CliError {
    fn from(e: RegistrationError) -> Self {
        match e {
            RegistrationError::Loss(l) => l.into(),
            RegistrationError::Mesh(m) => m.into(),
            _ => Self::Input(e.to_string()),
        }
    }
}

macro_rules! input_error {
    ($($t:ty),*) => {
        $(impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                Self::Input(e.to_string())
            }
        })*
    };
}

input_error!(RenderError, SemflowError, EvalError, CheckpointError);

pub fn io_error(path: &std::path::Path, e: std::io::Error) -> CliError {
    CliError::Input(format!("{}: {e}", path.display()))
}
