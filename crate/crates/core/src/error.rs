use std::path::PathBuf;

/// Errors reported by the extraction pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("signal of {len} samples is shorter than one frame of {fft_len}")]
    SignalTooShort { len: usize, fft_len: usize },

    #[error("invalid STFT configuration: {0}")]
    InvalidStft(String),

    #[error("invalid waveform: {0}")]
    InvalidWaveform(String),

    #[error("sample rate mismatch: file has {file} Hz, configuration expects {expected} Hz")]
    SampleRateMismatch { file: u32, expected: u32 },

    #[error("{blocks} blocks requested but only {frames} frames available")]
    TooManyBlocks { blocks: usize, frames: usize },

    #[error("degenerate covariance at bin {bin}, block {block}")]
    DegenerateCovariance { bin: usize, block: usize },

    #[error("singular parameterization: gamma is zero")]
    SingularParameterization,

    #[error("degenerate nu at bin {bin}, block {block}")]
    DegenerateNu { bin: usize, block: usize },

    #[error("auxiliary system is singular at bin {bin}")]
    SingularAuxSystem { bin: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("metric undefined: {0}")]
    Undefined(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Wav {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },
}

impl Error {
    /// Numerical failures map to a distinct process exit code in the CLI.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::DegenerateCovariance { .. }
                | Error::SingularParameterization
                | Error::DegenerateNu { .. }
                | Error::SingularAuxSystem { .. }
                | Error::Undefined(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
