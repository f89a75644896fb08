use std::path::PathBuf;

/// Errors produced anywhere in the mapping toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: String,
    },

    #[error("degenerate vector: {context}")]
    DegenerateVector { context: String },

    #[error("non-finite value: {context}")]
    NonFinite { context: String },

    #[error("need at least {needed} vectors, got {got}")]
    InsufficientVectors { needed: usize, got: usize },

    #[error("SVD did not converge after {sweeps} Jacobi sweeps")]
    SvdFailure { sweeps: usize },

    #[error("format error{}{}: {message}", fmt_path(.path), fmt_line(.line))]
    FormatError {
        path: Option<PathBuf>,
        line: Option<usize>,
        message: String,
    },

    #[error(
        "sentence count mismatch: target has {target_sentences}, source has {source_sentences}, alignments have {alignment_sentences}"
    )]
    LengthMismatch {
        target_sentences: usize,
        source_sentences: usize,
        alignment_sentences: usize,
    },

    #[error("alignment link out of range in sentence {sentence}: {detail}")]
    IndexOutOfRange { sentence: usize, detail: String },

    #[error("cannot form {k} clusters from {n} vectors")]
    TooFewVectors { k: usize, n: usize },

    #[error("WCSS curve too short for elbow selection")]
    CurveTooShort,

    #[error("type collection is empty")]
    EmptyCollection,

    #[error("missing label: {0}")]
    MissingLabel(String),

    #[error("unsupported artifact version {found:?} (expected {expected:?})")]
    VersionMismatch { found: String, expected: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn fmt_path(path: &Option<PathBuf>) -> String {
    match path {
        Some(p) => format!(" in {}", p.display()),
        None => String::new(),
    }
}

fn fmt_line(line: &Option<usize>) -> String {
    match line {
        Some(n) => format!(" at line {n}"),
        None => String::new(),
    }
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(
        path: Option<PathBuf>,
        line: Option<usize>,
        message: impl Into<String>,
    ) -> Self {
        Error::FormatError {
            path,
            line,
            message: message.into(),
        }
    }

    /// True for failures of the numeric machinery itself, as opposed to
    /// invalid or malformed input.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::SvdFailure { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
