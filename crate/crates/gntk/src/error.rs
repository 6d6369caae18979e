use std::path::PathBuf;

use serde_json::json;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config file not found: {}", .0.display())]
    ConfigNotFound(PathBuf),
    #[error("cannot parse config: {0}")]
    ConfigParse(String),
    #[error("graph file not found: {}", .0.display())]
    GraphNotFound(PathBuf),
    #[error("cannot parse graph file {}: {message}", path.display())]
    GraphParse { path: PathBuf, message: String },
    #[error("{0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Core(#[from] gntk_core::Error),
    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn code(&self) -> &'static str {
        use gntk_core::Error as E;
        match self {
            CliError::ConfigNotFound(_) => "config_not_found",
            CliError::ConfigParse(_) => "config_parse_error",
            CliError::GraphNotFound(_) => "graph_not_found",
            CliError::GraphParse { .. } => "graph_parse_error",
            CliError::InvalidConfig(_) => "invalid_config",
            CliError::Io { .. } => "io_error",
            CliError::Core(e) => match e {
                E::InvalidSamplingProb { .. } | E::ProbabilitiesNotNormalized { .. } | E::CouplingExceedsOne { .. } => {
                    "invalid_sampling_prob"
                }
                E::NotPsd { .. } | E::SingularSystem(_) | E::InvalidErfCovariance { .. } => "numerical_failure",
                E::InvalidSplit(_) => "invalid_split",
                E::InvalidProgram(_) | E::MissingGraph => "invalid_program",
                _ => "invalid_config",
            },
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({ "error": { "code": self.code(), "message": self.to_string() } })
    }

    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }
}
