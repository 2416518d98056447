//! Flag structs shared by the subcommands and their JSON config-file form.
//!
//! A config file is a JSON object whose keys are the long flag names
//! (`"model"`, `"split-test-per-class"`, ...). Flags given on the command
//! line win over the file.

use std::path::{Path, PathBuf};

use anyhow::Result;
use clap::Args;
use failnet::models::{LabelLevel, ModelConfig, ModelKind};
use failnet::text::TokenizerMode;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::usage;

/// Data source shared by `train` and `evaluate`.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "kebab-case", default)]
pub struct DataFlags {
    /// Corpus in JSON Lines form.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Taxonomy CSV; the built-in table when omitted.
    #[arg(long)]
    pub taxonomy: Option<PathBuf>,
    /// Test cases drawn from every class; the taxonomy's n_test column when omitted.
    #[arg(long)]
    pub split_test_per_class: Option<usize>,
}

/// Model hyperparameters; unset values keep the library defaults.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "kebab-case", default)]
pub struct ModelFlags {
    /// mlp, cnn or rnn.
    #[arg(long)]
    pub model: Option<String>,
    /// subclass or major.
    #[arg(long)]
    pub level: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Adam learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub dropout: Option<f64>,
    /// `whitespace` or `char:N`.
    #[arg(long)]
    pub tokenizer: Option<String>,
    #[arg(long)]
    pub min_count: Option<usize>,
    #[arg(long)]
    pub max_len: Option<usize>,
    #[arg(long)]
    pub embedding_dim: Option<usize>,
    #[arg(long)]
    pub embedding_epochs: Option<usize>,
    #[arg(long)]
    pub cnn_maps: Option<usize>,
    #[arg(long)]
    pub rnn_hidden: Option<usize>,
    /// Fit vocabulary and TF-IDF statistics on test texts too.
    #[arg(long)]
    pub tfidf_fit_all: bool,
}

fn nonzero(flag: &str, v: Option<usize>) -> Result<Option<usize>> {
    match v {
        Some(0) => Err(usage!("--{flag} must be at least 1")),
        v => Ok(v),
    }
}

impl ModelFlags {
    pub fn to_config(&self, seed: u64) -> Result<ModelConfig> {
        let kind: ModelKind = self
            .model
            .as_deref()
            .ok_or_else(|| usage!("--model is required (mlp, cnn or rnn)"))?
            .parse()
            .map_err(|e| usage!("--model: {e}"))?;
        let level: LabelLevel = match &self.level {
            Some(l) => l.parse().map_err(|e| usage!("--level: {e}"))?,
            None => LabelLevel::Subclass,
        };
        let mut cfg = ModelConfig { seed, ..ModelConfig::new(kind, level) };
        if let Some(v) = nonzero("epochs", self.epochs)? {
            cfg.epochs = v;
        }
        if let Some(v) = nonzero("batch-size", self.batch_size)? {
            cfg.batch_size = v;
        }
        if let Some(v) = self.lr {
            if !(v > 0.0 && v.is_finite()) {
                return Err(usage!("--lr must be positive, got {v}"));
            }
            cfg.optimizer.lr = v;
        }
        if let Some(v) = self.dropout {
            if !(0.0..1.0).contains(&v) {
                return Err(usage!("--dropout must be in [0, 1), got {v}"));
            }
            cfg.dropout = v;
        }
        if let Some(t) = &self.tokenizer {
            cfg.tokenizer = t.parse::<TokenizerMode>().map_err(|e| usage!("--tokenizer: {e}"))?;
        }
        if let Some(v) = nonzero("min-count", self.min_count)? {
            cfg.min_count = v;
        }
        if let Some(v) = nonzero("max-len", self.max_len)? {
            cfg.max_len = v;
        }
        if let Some(v) = nonzero("embedding-dim", self.embedding_dim)? {
            cfg.embedding.dim = v;
        }
        if let Some(v) = self.embedding_epochs {
            cfg.embedding.epochs = v;
        }
        if let Some(v) = nonzero("cnn-maps", self.cnn_maps)? {
            cfg.cnn_maps = v;
        }
        if let Some(v) = nonzero("rnn-hidden", self.rnn_hidden)? {
            cfg.rnn_hidden = v;
        }
        cfg.tfidf_fit_all = self.tfidf_fit_all;
        cfg.validate().map_err(|e| usage!("{e}"))?;
        Ok(cfg)
    }
}

/// Overlay the flags given on the command line onto the config file's
/// values. Unset options, `false` switches and empty lists count as not
/// given.
pub fn merge<T>(cli: &T, file: Option<&Path>) -> Result<T>
where
    T: Serialize + DeserializeOwned + Default,
{
    let Some(path) = file else { return Ok(serde_json::from_value(serde_json::to_value(cli)?)?) };
    let text = std::fs::read_to_string(path).map_err(|e| usage!("--config {}: {e}", path.display()))?;
    let mut base: Map<String, Value> = match serde_json::from_str(&text) {
        Ok(Value::Object(m)) => m,
        Ok(_) => return Err(usage!("--config {}: expected a JSON object", path.display())),
        Err(e) => return Err(usage!("--config {}: {e}", path.display())),
    };
    let Value::Object(known) = serde_json::to_value(T::default())? else { unreachable!("flag structs are objects") };
    if let Some(k) = base.keys().find(|k| !known.contains_key(*k)) {
        return Err(usage!("--config {}: unknown key {k:?}", path.display()));
    }
    let Value::Object(given) = serde_json::to_value(cli)? else { unreachable!("flag structs are objects") };
    for (k, v) in given {
        let unset = v.is_null() || v == Value::Bool(false) || v.as_array().is_some_and(Vec::is_empty);
        if !unset {
            base.insert(k, v);
        }
    }
    serde_json::from_value(Value::Object(base))
        .map_err(|e| usage!("--config {}: {e}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, Default, Serialize, Deserialize, PartialEq)]
    #[serde(rename_all = "kebab-case", default)]
    struct Demo {
        seed: Option<u64>,
        out: Option<PathBuf>,
        fast: bool,
        #[serde(flatten)]
        model: ModelFlags,
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"seed": 4, "model": "cnn", "epochs": 3, "fast": true}"#).unwrap();
        let cli = Demo { seed: Some(9), ..Default::default() };
        let merged = merge(&cli, Some(&path)).unwrap();
        assert_eq!(merged.seed, Some(9));
        assert_eq!(merged.model.model.as_deref(), Some("cnn"));
        assert_eq!(merged.model.epochs, Some(3));
        assert!(merged.fast);

        std::fs::write(&path, r#"{"sed": 4}"#).unwrap();
        assert!(merge(&cli, Some(&path)).is_err());
    }

    #[test]
    fn model_flag_validation() {
        let flags = ModelFlags { model: Some("xnn".into()), ..Default::default() };
        assert!(flags.to_config(0).unwrap_err().to_string().contains("--model"));
        let flags = ModelFlags { model: Some("rnn".into()), epochs: Some(0), ..Default::default() };
        assert!(flags.to_config(0).unwrap_err().to_string().contains("--epochs"));
        let flags = ModelFlags { model: Some("mlp".into()), tokenizer: Some("char:3".into()), ..Default::default() };
        assert_eq!(flags.to_config(5).unwrap().tokenizer, TokenizerMode::CharNgram(3));
    }
}
