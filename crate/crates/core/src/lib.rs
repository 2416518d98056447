//! Hierarchical classification of failure-case reports.
//!
//! Reports are labelled with a subclass code from a field / major class /
//! subclass taxonomy. Three classifiers are provided: an MLP over TF-IDF
//! features and a CNN and LSTM over skip-gram word embeddings, all trained
//! with a small reverse-mode autodiff engine in [`nn`]. The [`eval`] module
//! implements repeated-run accuracy and mismatch decomposition.

pub mod corpus;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod models;
pub mod nn;
pub mod seed;
pub mod selfcheck;
pub mod text;

pub use corpus::{default_taxonomy, FailureCase, Taxonomy};
pub use error::{Error, Result};
pub use eval::{EvalReport, MismatchBreakdown};
pub use models::{LabelLevel, ModelConfig, ModelKind, Prediction, TrainedModel};
pub use nn::Tensor;
