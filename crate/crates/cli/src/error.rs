use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Unreadable or malformed input audio, report or truth file.
    #[error("{0}")]
    Format(String),
    #[error("{0}")]
    Config(String),
    #[error("no usable frames in {0}")]
    NoUsableFrames(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io { .. } => 1,
            CliError::Format(_) => 2,
            CliError::NoUsableFrames(_) => 3,
            CliError::Config(_) => 4,
        }
    }

    /// Stable identifier printed in front of the message.
    pub fn reason(&self) -> &'static str {
        match self {
            CliError::Io { .. } => "io",
            CliError::Format(_) => "input_format",
            CliError::NoUsableFrames(_) => "no_usable_frames",
            CliError::Config(_) => "config",
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<tdvv::Error> for CliError {
    fn from(err: tdvv::Error) -> Self {
        use tdvv::Error as E;
        match err {
            E::InvalidConfig(_) | E::InvalidGeometry(_) | E::UnknownSignal(_) => CliError::Config(err.to_string()),
            E::SilentRecording => CliError::NoUsableFrames(err.to_string()),
            _ => CliError::Format(err.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
