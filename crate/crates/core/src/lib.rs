//! Gene / function-change / disease relation extraction.
//!
//! Candidate gene–disease pairs found by an external tagger are aligned to
//! gold annotations through their grounding identifiers, encoded as
//! `[CLS] gene disease [SEP] abstract [SEP]` subword sequences and classified
//! into five classes by a transformer encoder whose `[CLS]` state feeds a
//! single linear layer.
//!
//! The pipeline stages live in separate modules:
//!
//! * [`corpus`] – abstracts, gold mentions and gold triples.
//! * [`ner_align`] – grounding-id alignment, candidate pairs, negatives, audit.
//! * [`splitter`] – label distributions, entropy, KL and the train/dev split.
//! * [`encoder_input`] – WordPiece tokenization and pair-context sequences.
//! * [`net`] – encoder, linear head, loss and exact gradients.
//! * [`trainer`] – balanced batches, early stopping, random restarts.
//! * [`metrics`] – one-vs-all P/R/F1, micro/macro aggregates, random baseline.

pub mod corpus;
pub mod encoder_input;
pub mod error;
pub mod label;
pub mod metrics;
pub mod ner_align;
pub mod net;
pub mod scalar;
pub mod splitter;
pub mod trainer;

pub use error::{Error, Result};
pub use label::Label;
pub use scalar::Scalar;

/// Single-precision model parameters (the checkpoint storage precision).
pub type ModelParamsF32 = net::ModelParams<f32>;
/// Double-precision model parameters, used for training and gradient checks.
pub type ModelParamsF64 = net::ModelParams<f64>;
/// Double-precision gradients.
pub type GradientsF64 = net::ModelParams<f64>;
/// Training outcome in double precision.
pub type TrainOutcomeF64 = trainer::TrainOutcome<f64>;
