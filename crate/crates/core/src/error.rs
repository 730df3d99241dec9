use std::path::PathBuf;

/// Errors raised by every stage of the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("file not found: {}", .0.display())]
    FileNotFound(PathBuf),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),

    #[error("corrupt image: {0}")]
    CorruptImage(String),

    #[error("zero-dimension image")]
    ZeroDimension,

    #[error("invalid image buffer: {0}")]
    InvalidBuffer(String),

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("unknown label {0:?}")]
    UnknownLabel(String),

    #[error("image too small: {width}x{height} < {required}")]
    ImageTooSmall {
        width: usize,
        height: usize,
        required: usize,
    },

    #[error("color image required")]
    ColorRequired,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty score list")]
    EmptyScores,

    #[error("non-finite score")]
    NonFiniteScore,

    #[error("dimensions not divisible by factor {factor}: {width}x{height}")]
    NotDivisible {
        width: usize,
        height: usize,
        factor: usize,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("empty input")]
    EmptyInput,

    #[error("single-class input")]
    SingleClass,

    #[error("zero-variance residual")]
    ZeroVariance,

    #[error("degenerate calibration set: {0}")]
    DegenerateCalibration(String),

    #[error("calibration needs at least {required} patches per class, got {got}")]
    TooFewSamples { required: usize, got: usize },

    #[error("codec error: {0}")]
    Codec(String),

    #[error("scorer {phase} error: {detail}")]
    Scorer { phase: ScorerPhase, detail: String },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("model file: {0}")]
    Model(String),
}

/// Phase of the external scorer exchange in which a failure happened.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScorerPhase {
    Launch,
    Handshake,
    Request,
    Response,
    Timeout,
}

impl std::fmt::Display for ScorerPhase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ScorerPhase::Launch => "launch",
            ScorerPhase::Handshake => "handshake",
            ScorerPhase::Request => "request",
            ScorerPhase::Response => "response",
            ScorerPhase::Timeout => "timeout",
        };
        f.write_str(s)
    }
}

/// Broad failure category, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Scorer,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::FileNotFound(path)
        } else {
            Error::Io { path, source }
        }
    }

    pub(crate) fn scorer(phase: ScorerPhase, detail: impl Into<String>) -> Self {
        Error::Scorer {
            phase,
            detail: detail.into(),
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Innermost error, skipping stage annotations.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self.root() {
            Error::Scorer { .. } => ErrorKind::Scorer,
            Error::InvalidConfig(_) => ErrorKind::Usage,
            _ => ErrorKind::Data,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
