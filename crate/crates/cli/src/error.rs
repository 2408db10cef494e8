use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("stage `{stage}` failed: {source}")]
    Numerical {
        stage: String,
        #[source]
        source: borglev_core::Error,
    },
    #[error("stage `{stage}` rejected its input: {source}")]
    Input {
        stage: String,
        #[source]
        source: borglev_core::Error,
    },
    #[error("stage `{stage}` failed its check: {detail}")]
    CheckFailed { stage: String, detail: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numerical { .. } | CliError::CheckFailed { .. } => 3,
            _ => 2,
        }
    }

    pub fn in_stage(stage: &str, err: borglev_core::Error) -> Self {
        if err.is_numerical() {
            CliError::Numerical {
                stage: stage.to_string(),
                source: err,
            }
        } else {
            CliError::Input {
                stage: stage.to_string(),
                source: err,
            }
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
