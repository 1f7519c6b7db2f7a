use std::process::ExitCode;

/// Command failures grouped by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags or flag combinations (exit code 2).
    #[error("{0}")]
    Usage(String),
    /// Unreadable, malformed or out-of-range input (exit code 3).
    #[error("{message}")]
    Data { message: String, hint: Option<String> },
    /// The model could not be fitted (exit code 4).
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn data(message: impl Into<String>) -> Self {
        Self::Data { message: message.into(), hint: None }
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            Self::Usage(_) => 2,
            Self::Data { .. } => 3,
            Self::Numerical(_) => 4,
        })
    }

    pub fn hint(&self) -> Option<&str> {
        match self {
            Self::Data { hint, .. } => hint.as_deref(),
            _ => None,
        }
    }
}

impl From<ebars::Error> for CliError {
    fn from(e: ebars::Error) -> Self {
        use ebars::Error as E;
        let message = e.to_string();
        match e {
            E::InvalidParameter(_) | E::InvalidKnots(_) | E::UnknownScenario { .. } => Self::Usage(message),
            E::DisconnectedGraph { .. } => Self::Data {
                message,
                hint: Some("raise --neighbors until the neighbour graph is connected".into()),
            },
            E::OutOfDomain(_) => Self::Data { message, hint: Some("pass --rescale to map inputs onto [0, 1]".into()) },
            E::DimensionMismatch { .. } | E::Io(_) | E::Csv(_) => Self::data(message),
            E::RankDeficient { .. } | E::EmptyTrace | E::NoMatchingSamples(_) | E::Numerical(_) => {
                Self::Numerical(message)
            }
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::data(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::data(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::data(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
