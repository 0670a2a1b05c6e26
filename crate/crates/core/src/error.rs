use std::path::PathBuf;

use thiserror::Error;

/// Errors raised while reading or splitting a corpus.
#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("missing header row")]
    MissingHeader,
    #[error("required column `{0}` not found in header")]
    MissingColumn(String),
    #[error("malformed quoting in record {row}: {reason}")]
    MalformedQuoting { row: usize, reason: &'static str },
    #[error("record {row}: invalid label `{value}` (expected 0 or 1)")]
    InvalidLabel { row: usize, value: String },
    #[error("record {row}: invalid id `{value}`")]
    InvalidId { row: usize, value: String },
    #[error("document {0} has no label")]
    Unlabeled(usize),
    #[error("split ratio {0} must lie strictly between 0 and 1")]
    RatioOutOfRange(f64),
}

/// Errors raised while building or applying a vectorizer.
#[derive(Debug, Error, PartialEq)]
pub enum VectorizeError {
    #[error("cannot build a vocabulary from an empty corpus")]
    EmptyCorpus,
    #[error("max_features must be at least 1")]
    InvalidMaxFeatures,
    #[error("tf-idf transform requested without a fitted idf table")]
    MissingIdf,
    #[error("idf table has {idf} weights but vocabulary has {vocab} terms")]
    MisalignedIdf { idf: usize, vocab: usize },
    #[error("document {0} has no label")]
    Unlabeled(i64),
}

/// Errors raised while fitting or applying a learner.
#[derive(Debug, Error, PartialEq)]
pub enum LearnerError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("training set contains a single class; both 0 and 1 are required")]
    SingleClass,
    #[error("feature width mismatch: model expects {expected}, input has {found}")]
    WidthMismatch { expected: usize, found: usize },
    #[error("unknown hyperparameter `{key}` for {family}")]
    UnknownHyperparameter { family: &'static str, key: String },
    #[error("hyperparameter `{key}` for {family}: {reason}")]
    InvalidHyperparameter {
        family: &'static str,
        key: String,
        reason: String,
    },
    #[error("feature value {value} at index {index} is negative; naive Bayes needs counts")]
    NegativeFeature { index: usize, value: f64 },
    #[error("labels ({labels}) and rows ({rows}) differ in length")]
    LabelCount { labels: usize, rows: usize },
}

/// Errors raised by the voting ensemble.
#[derive(Debug, Error, PartialEq)]
pub enum EnsembleError {
    #[error("cannot take a majority of zero votes")]
    NoVotes,
    #[error("ensemble has no members")]
    NoMembers,
    #[error("member `{name}`: {source}")]
    Member {
        name: String,
        #[source]
        source: LearnerError,
    },
    #[error("members disagree on feature width for {0:?} features")]
    InconsistentWidth(crate::vectorize::FeatureKind),
}

/// Errors raised by the evaluation harness.
#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("label and prediction vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("cannot evaluate an empty set")]
    Empty,
    #[error("ROC needs at least one example of each class")]
    SingleClass,
    #[error("score {0} is not a finite number")]
    NonFiniteScore(f64),
}

/// Errors raised while reading, validating or writing a pipeline config.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid value for `{field}`: {reason}")]
    Invalid { field: String, reason: String },
}

/// Errors raised while encoding or decoding a model bundle.
#[derive(Debug, Error)]
pub enum BundleError {
    #[error("bundle i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("not a model bundle (bad magic)")]
    BadMagic,
    #[error("bundle format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("bundle checksum mismatch; file is truncated or corrupt")]
    Checksum,
    #[error("bundle is truncated")]
    Truncated,
    #[error("corrupt bundle: {0}")]
    Corrupt(String),
}

/// Top-level error for pipeline commands; names the stage that failed.
#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("ingest: {0}")]
    Ingest(#[from] IngestError),
    #[error("vectorize: {0}")]
    Vectorize(#[from] VectorizeError),
    #[error("training {learner}: {source}")]
    Train {
        learner: String,
        #[source]
        source: LearnerError,
    },
    #[error("ensemble: {0}")]
    Ensemble(#[from] EnsembleError),
    #[error("evaluate: {0}")]
    Eval(#[from] EvalError),
    #[error("bundle: {0}")]
    Bundle(#[from] BundleError),
    #[error("data: {0}")]
    Data(String),
    #[error("cannot write {path}: {source}")]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl PipelineError {
    /// Process exit code for this error: 2 config, 3 data, 4 bundle.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Bundle(_) => 4,
            _ => 3,
        }
    }
}
