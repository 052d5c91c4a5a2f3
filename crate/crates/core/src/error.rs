use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse error category, used by the command line front end to pick an exit
/// status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Data,
    Training,
    Config,
    Io,
}

impl ErrorKind {
    pub fn exit_code(self) -> u8 {
        match self {
            ErrorKind::Io => 1,
            ErrorKind::Data => 2,
            ErrorKind::Training => 3,
            ErrorKind::Config => 4,
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("file name `{0}` does not match <Ga|Ju|Si><Pt|Co><NN>_<NN>")]
    MalformedFilename(String),
    #[error("{path}:{line}: {reason}")]
    MalformedRow {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("{0}: file contains no samples")]
    EmptyFile(PathBuf),
    #[error("no recordings found in {0}")]
    NoRecordingsFound(PathBuf),
    #[error("duplicate recording {0}")]
    DuplicateRecording(String),
    #[error("invalid recording: {0}")]
    InvalidRecording(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("channel {channel} has zero variance")]
    ZeroVarianceChannel { channel: usize },
    #[error("recording has {len} samples, at least {needed} required")]
    RecordingTooShort { len: usize, needed: usize },
    #[error("no control recordings available for linear prediction fitting")]
    NoControlRecordings,
    #[error("normal equations are singular{}", channel.map(|c| format!(" (channel {c})")).unwrap_or_default())]
    SingularSystem { channel: Option<usize> },
    #[error("signal of length {len} is too short for prediction order {order}")]
    OrderTooLarge { len: usize, order: usize },
    #[error("contract violation: {0}")]
    ContractViolation(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("backward called without forward context in {0}")]
    MissingForwardContext(&'static str),
    #[error("batch norm channel {channel} has only {count} values in train mode")]
    DegenerateBatch { channel: usize, count: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("labels contain a single class")]
    SingleClass,
    #[error("too few subjects: need {needed}, found {found}")]
    TooFewSubjects { needed: usize, found: usize },
    #[error("too few windows: {0}")]
    TooFewWindows(String),
    #[error("training diverged (non-finite loss){}", fold.map(|f| format!(" in fold {f}")).unwrap_or_default())]
    Diverged { fold: Option<usize>, epoch: usize },
    #[error("format error: {0}")]
    Format(String),
    #[error("configuration error: {0}")]
    Config(String),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        use Error::*;
        match self {
            Io { .. } => ErrorKind::Io,
            SingularSystem { .. }
            | Diverged { .. }
            | DegenerateBatch { .. }
            | MissingForwardContext(_) => ErrorKind::Training,
            Config(_) | ContractViolation(_) => ErrorKind::Config,
            _ => ErrorKind::Data,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Attaches a fold index to a divergence error.
    pub fn in_fold(self, fold: usize) -> Self {
        match self {
            Error::Diverged { epoch, .. } => Error::Diverged {
                fold: Some(fold),
                epoch,
            },
            other => other,
        }
    }
}
