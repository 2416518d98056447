//! Tokenization, vocabularies, TF-IDF features and id sequences.

mod sequence;
mod tfidf;
mod tokenize;
mod vocab;

pub use sequence::{encode_sequence, EncodedSequence};
pub use tfidf::{fit_tfidf, tfidf_transform, TfIdfModel};
pub use tokenize::{tokenize, TokenizerMode};
pub use vocab::{build_vocabulary, Vocabulary, PAD, UNK};
