use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the pipeline can report.
///
/// Variant names are stable: the CLI prints them as the `error` field of its
/// JSON error object.
#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {}", .0.display())]
    MissingFile(PathBuf),
    #[error("duplicate subject id `{0}`")]
    DuplicateSubject(String),
    #[error("bad sex label `{label}` for subject `{subject}` (expected F or M)")]
    BadSexLabel { subject: String, label: String },
    #[error("manifest has no entries: {}", .0.display())]
    EmptyManifest(PathBuf),
    #[error("invalid montage: {0}")]
    InvalidMontage(String),
    #[error("channel mismatch: {0}")]
    ChannelMismatch(String),
    #[error("sample rate mismatch: file has {found} Hz, expected {expected} Hz")]
    RateMismatch { expected: f64, found: f64 },
    #[error("non-numeric sample at line {line}, column {column}: `{value}`")]
    NonNumericSample { line: usize, column: usize, value: String },
    #[error("recording `{subject}` too short: {samples} samples, need more than {needed}")]
    TooShort { subject: String, samples: usize, needed: usize },
    #[error("epoch length {0} is odd")]
    OddEpochLength(usize),
    #[error("invalid epoching: {0}")]
    InvalidEpoching(String),
    #[error("coherence needs at least 2 epochs, got {0}")]
    SingleEpoch(usize),
    #[error("band `{0}` contains no frequency bins at this resolution")]
    EmptyBand(String),
    #[error("invalid band scheme: {0}")]
    InvalidBands(String),
    #[error("no subject yielded a full section")]
    NoSections,
    #[error("subject `{subject}` has {epochs} epochs, needs at least {needed}")]
    TooFewEpochs { subject: String, epochs: usize, needed: usize },
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("only one class present")]
    SingleClass,
    #[error("empty table")]
    EmptyTable,
    #[error("non-finite feature value in row {row}, column {column}")]
    NonFiniteFeature { row: usize, column: usize },
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("operation requires a model of kind {expected}, got {found}")]
    WrongKind { expected: &'static str, found: &'static str },
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("k = {k} outside 1..={d}")]
    BadK { k: usize, d: usize },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("cohort too small: {0}")]
    CohortTooSmall(String),
    #[error("subject `{0}` appears in both training and test cohorts")]
    SubjectOverlap(String),
    #[error("negative input: {0}")]
    NegativeInput(&'static str),
    #[error("invalid plant: {0}")]
    InvalidPlant(String),
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),
    #[error("invalid config: {0}")]
    ConfigInvalid(String),
    #[error("bad arguments: {0}")]
    BadArgs(String),
    #[error("malformed artifact {}: {msg}", .path.display())]
    MalformedArtifact { path: PathBuf, msg: String },
    #[error("I/O failure on {}: {source}", .path.display())]
    IoFailure {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable variant name, used in machine-readable error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::MissingFile(_) => "MissingFile",
            Error::DuplicateSubject(_) => "DuplicateSubject",
            Error::BadSexLabel { .. } => "BadSexLabel",
            Error::EmptyManifest(_) => "EmptyManifest",
            Error::InvalidMontage(_) => "InvalidMontage",
            Error::ChannelMismatch(_) => "ChannelMismatch",
            Error::RateMismatch { .. } => "RateMismatch",
            Error::NonNumericSample { .. } => "NonNumericSample",
            Error::TooShort { .. } => "TooShort",
            Error::OddEpochLength(_) => "OddEpochLength",
            Error::InvalidEpoching(_) => "InvalidEpoching",
            Error::SingleEpoch(_) => "SingleEpoch",
            Error::EmptyBand(_) => "EmptyBand",
            Error::InvalidBands(_) => "InvalidBands",
            Error::NoSections => "NoSections",
            Error::TooFewEpochs { .. } => "TooFewEpochs",
            Error::UnknownFeature(_) => "UnknownFeature",
            Error::SingleClass => "SingleClass",
            Error::EmptyTable => "EmptyTable",
            Error::NonFiniteFeature { .. } => "NonFiniteFeature",
            Error::SchemaMismatch(_) => "SchemaMismatch",
            Error::WrongKind { .. } => "WrongKind",
            Error::EmptyInput(_) => "EmptyInput",
            Error::BadK { .. } => "BadK",
            Error::LengthMismatch(..) => "LengthMismatch",
            Error::CohortTooSmall(_) => "CohortTooSmall",
            Error::SubjectOverlap(_) => "SubjectOverlap",
            Error::NegativeInput(_) => "NegativeInput",
            Error::InvalidPlant(_) => "InvalidPlant",
            Error::InvalidHyperparameter(_) => "InvalidHyperparameter",
            Error::ConfigInvalid(_) => "ConfigInvalid",
            Error::BadArgs(_) => "BadArgs",
            Error::MalformedArtifact { .. } => "MalformedArtifact",
            Error::IoFailure { .. } => "IoFailure",
            Error::Csv(_) => "Csv",
            Error::Json(_) => "Json",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path)
        } else {
            Error::IoFailure { path, source }
        }
    }
}
