use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid signal: {0}")]
    InvalidSignal(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("input too short: {len} samples, need at least {frame_len}")]
    InputTooShort { len: usize, frame_len: usize },
    #[error("frame index {index} out of range ({count} frames)")]
    FrameOutOfRange { index: usize, count: usize },
    #[error("silent frame")]
    SilentFrame,
    #[error("empty spectrum: no bin carries weight")]
    EmptySpectrum,
    #[error("degenerate vertical-plane: direction is colinear with the z-axis")]
    DegeneratePlane,
    #[error("no reflection detected")]
    NoReflection,
    #[error("degenerate reflection column")]
    DegenerateReflection,
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("unknown signal descriptor `{0}`")]
    UnknownSignal(String),
    #[error("empty recording")]
    EmptyRecording,
    #[error("silent recording")]
    SilentRecording,
    #[error("sample-rate mismatch: expected {expected} Hz, got {actual} Hz")]
    SampleRateMismatch { expected: u32, actual: u32 },
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
}
