use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("conflicting gold labels for ({doc_id}, {gene_id}, {disease_id}): {first} vs {second}")]
    LabelConflict {
        doc_id: String,
        gene_id: String,
        disease_id: String,
        first: crate::Label,
        second: crate::Label,
    },

    #[error("label distribution is undefined for an empty instance list")]
    EmptyDistribution,

    #[error("KL divergence is infinite: q is zero where p is positive (label {0})")]
    InfiniteDivergence(crate::Label),

    #[error("split needs at least two documents, got {0}")]
    TooFewDocuments(usize),

    #[error("no seed in 0..{0} gives a dev set covering every train label")]
    NoAdmissibleSplit(u64),

    #[error("pair segment needs {needed} tokens but the sequence cap is {max_len}")]
    PairTooLong { needed: usize, max_len: usize },

    #[error("invalid vocabulary: {0}")]
    Vocab(String),

    #[error("invalid model config: {0}")]
    ModelConfig(String),

    #[error("token id {id} out of range for vocabulary of size {vocab_size}")]
    TokenOutOfRange { id: u32, vocab_size: usize },

    #[error("sequence length {len} exceeds max positions {max_positions}")]
    SequenceTooLong { len: usize, max_positions: usize },

    #[error("non-finite gradient in {0}")]
    NonFiniteGradient(String),

    #[error("training diverged at epoch {epoch}: non-finite loss")]
    Diverged {
        epoch: usize,
        history: Box<crate::trainer::TrainHistory>,
    },

    #[error("all {0} restarts diverged")]
    AllRestartsDiverged(usize),

    #[error("invalid training config: {0}")]
    TrainConfig(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("predictions and golds differ in length ({preds} vs {golds})")]
    LengthMismatch { preds: usize, golds: usize },

    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(file: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            file: file.into(),
            line,
            message: message.into(),
        }
    }
}
