use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("empty input")]
    Empty,
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: duplicate rating for user {user}, item {item}")]
    Duplicate {
        line: usize,
        user: String,
        item: String,
    },
    #[error("entry {entry}: index ({user}, {item}) outside the matrix")]
    IndexOutOfRange {
        entry: usize,
        user: usize,
        item: usize,
    },
    #[error("unknown rating format {0:?} (expected tsv, colons or csv)")]
    UnknownFormat(String),
    #[error("invalid split ratio {0:?}: need three positive integer weights like 7:1:2")]
    InvalidRatio(String),
    #[error("invalid fold setup: {0}")]
    InvalidFolds(String),
    #[error("dataset has {entries} entries, fewer than the {needed} subsets requested")]
    TooFewEntries { entries: usize, needed: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("index ({user}, {item}) out of range for a {rows}x{cols} model")]
    IndexOutOfRange {
        user: usize,
        item: usize,
        rows: usize,
        cols: usize,
    },
    #[error("empty entry set")]
    EmptyEntries,
    #[error("invalid model shape: {0}")]
    Shape(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error, PartialEq)]
pub enum ParamError {
    #[error("{name} = {value} is invalid: {reason}")]
    Invalid {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("{0}")]
    Other(String),
}

/// Failure of a training pass.
#[derive(Debug, Error)]
pub enum TrainError {
    /// A factor or rebuilt error went non-finite while processing a training entry.
    #[error("diverged at training entry {entry} (user {user}, item {item})")]
    Diverged {
        entry: usize,
        user: usize,
        item: usize,
    },
    #[error("every particle diverged in this epoch")]
    SwarmDiverged,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("config key {key}: cannot use {value:?}: {reason}")]
    BadValue {
        key: String,
        value: String,
        reason: String,
    },
    #[error("config file line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("file not found: {0}")]
    MissingFile(String),
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
