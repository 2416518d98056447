use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::embedding::SkipGramConfig;
use crate::error::{Error, Result};
use crate::nn::AdamConfig;
use crate::text::TokenizerMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Mlp,
    Cnn,
    Rnn,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Mlp, ModelKind::Cnn, ModelKind::Rnn];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Mlp => "mlp",
            ModelKind::Cnn => "cnn",
            ModelKind::Rnn => "rnn",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mlp" => Ok(ModelKind::Mlp),
            "cnn" => Ok(ModelKind::Cnn),
            "rnn" => Ok(ModelKind::Rnn),
            _ => Err(Error::InvalidArgument(format!("unknown model {s:?} (expected mlp, cnn or rnn)"))),
        }
    }
}

/// Which taxonomy level a model predicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelLevel {
    Major,
    Subclass,
}

impl fmt::Display for LabelLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LabelLevel::Major => "major",
            LabelLevel::Subclass => "subclass",
        })
    }
}

impl FromStr for LabelLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "major" => Ok(LabelLevel::Major),
            "subclass" => Ok(LabelLevel::Subclass),
            _ => Err(Error::InvalidArgument(format!("unknown level {s:?} (expected major or subclass)"))),
        }
    }
}

/// Everything that determines a trained model, given its training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub level: LabelLevel,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: AdamConfig,
    pub tokenizer: TokenizerMode,
    pub min_count: usize,
    /// Fit the vocabulary and TF-IDF statistics on every known text, test
    /// texts included, instead of the training texts alone.
    pub tfidf_fit_all: bool,
    pub dropout: f64,
    pub mlp_hidden: [usize; 2],
    pub cnn_widths: Vec<usize>,
    pub cnn_maps: usize,
    pub rnn_hidden: usize,
    pub max_len: usize,
    /// Word-embedding pre-training for cnn/rnn. Its seed is derived from
    /// `seed` at training time.
    pub embedding: SkipGramConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::Mlp,
            level: LabelLevel::Subclass,
            epochs: 30,
            batch_size: 16,
            seed: 0,
            optimizer: AdamConfig::default(),
            tokenizer: TokenizerMode::Whitespace,
            min_count: 1,
            tfidf_fit_all: false,
            dropout: 0.5,
            mlp_hidden: [256, 64],
            cnn_widths: vec![3, 4, 5],
            cnn_maps: 50,
            rnn_hidden: 64,
            max_len: 64,
            embedding: SkipGramConfig::default(),
        }
    }
}

impl ModelConfig {
    pub fn new(kind: ModelKind, level: LabelLevel) -> Self {
        Self { kind, level, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1".into());
        }
        if self.min_count == 0 {
            return bad("min_count must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        if !(self.optimizer.lr > 0.0 && self.optimizer.lr.is_finite()) {
            return bad(format!("learning rate must be positive, got {}", self.optimizer.lr));
        }
        if self.max_len == 0 {
            return bad("max_len must be at least 1".into());
        }
        match self.kind {
            ModelKind::Mlp => {
                if self.mlp_hidden.contains(&0) {
                    return bad("MLP hidden sizes must be at least 1".into());
                }
            }
            ModelKind::Cnn => {
                if self.cnn_maps == 0 {
                    return bad("CNN needs at least one feature map per width".into());
                }
                if self.cnn_widths.is_empty() || self.cnn_widths.contains(&0) {
                    return bad("CNN filter widths must be non-empty and at least 1".into());
                }
                let widest = *self.cnn_widths.iter().max().expect("non-empty");
                if self.max_len < widest {
                    return bad(format!("max_len {} is shorter than filter width {widest}", self.max_len));
                }
            }
            ModelKind::Rnn => {
                if self.rnn_hidden == 0 {
                    return bad("LSTM hidden size must be at least 1".into());
                }
            }
        }
        if self.kind != ModelKind::Mlp {
            self.embedding.validate()?;
        }
        Ok(())
    }
}
