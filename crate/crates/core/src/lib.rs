//! Burnout screening pipeline.
//!
//! The crate covers every stage between raw comment dumps and a scored text:
//!
//! - [`corpus`]: comment ingestion, sentence preprocessing and dataset statistics
//! - [`promptgen`]: the combinatorial prompt matrix, LLM generation and synthetic sampling
//! - [`labeling`]: labeler verdicts, discrepancy detection and the manual adjudication protocol
//! - [`encoder`]: WordPiece tokenization and frozen sentence-embedding backends
//! - [`dataset`]: stratum assembly and the stratified train/eval split
//! - [`head`]: the trainable linear softmax classifier over frozen embeddings
//! - [`eval`]: confusion matrix, threshold metrics, ROC and AUC

pub mod corpus;
pub mod dataset;
pub mod encoder;
pub mod eval;
pub mod head;
pub mod jsonl;
pub mod labeling;
pub mod promptgen;

pub use corpus::{Class, Label, SentenceRecord, Source};
