//! Single-document JSON checkpoints guarded by a CRC-32.
//!
//! The CRC covers the compact serialization of every field except `crc32`,
//! with object keys in sorted order. Floats are written in shortest
//! round-trip form, so parameters reload bit-for-bit.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::network::{FeatureState, NamedTensor};
use super::train::TrainedModel;
use super::{LabelLevel, ModelConfig, ModelKind};
use crate::error::{Error, Result};
use crate::text::{TfIdfModel, Vocabulary};

pub const CHECKPOINT_VERSION: u64 = 1;

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum FeatureRepr {
    Tfidf { idf: Vec<f64>, n_docs: usize },
    Sequence { max_len: usize },
}

#[derive(Serialize, Deserialize)]
struct Body {
    version: u64,
    kind: ModelKind,
    level: LabelLevel,
    config: ModelConfig,
    labels: Vec<String>,
    vocabulary: Vocabulary,
    features: FeatureRepr,
    params: Vec<NamedTensor>,
    history: Vec<f64>,
}

fn crc_of(body: &Value) -> Result<u32> {
    Ok(crc32fast::hash(serde_json::to_string(body)?.as_bytes()))
}

/// Serialize `model` to the checkpoint document.
pub fn to_json(model: &TrainedModel) -> Result<String> {
    let features = match &model.features {
        FeatureState::TfIdf(m) => FeatureRepr::Tfidf { idf: m.idf.clone(), n_docs: m.n_docs },
        FeatureState::Sequence { max_len, .. } => FeatureRepr::Sequence { max_len: *max_len },
    };
    let body = Body {
        version: CHECKPOINT_VERSION,
        kind: model.config.kind,
        level: model.config.level,
        config: model.config.clone(),
        labels: model.labels.clone(),
        vocabulary: model.features.vocab().clone(),
        features,
        params: model.params.clone(),
        history: model.history.clone(),
    };
    let mut value = serde_json::to_value(&body)?;
    let crc = crc_of(&value)?;
    value.as_object_mut().expect("body is an object").insert("crc32".into(), Value::from(crc));
    Ok(serde_json::to_string(&value)?)
}

pub fn from_json(text: &str) -> Result<TrainedModel> {
    let mut value: Value = serde_json::from_str(text).map_err(|e| Error::Corrupted(e.to_string()))?;
    let obj = value.as_object_mut().ok_or_else(|| Error::Corrupted("not a JSON object".into()))?;
    match obj.get("version").and_then(Value::as_u64) {
        Some(CHECKPOINT_VERSION) => {}
        Some(found) => return Err(Error::VersionMismatch { found, expected: CHECKPOINT_VERSION }),
        None => return Err(Error::Corrupted("missing version".into())),
    }
    let stored = obj
        .remove("crc32")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::Corrupted("missing crc32".into()))?;
    let actual = crc_of(&value)?;
    if u64::from(actual) != stored {
        return Err(Error::Corrupted(format!("crc32 mismatch: stored {stored:08x}, computed {actual:08x}")));
    }
    let body: Body = serde_json::from_value(value).map_err(|e| Error::Corrupted(e.to_string()))?;
    if body.kind != body.config.kind || body.level != body.config.level {
        return Err(Error::Corrupted("header disagrees with config".into()));
    }
    let features = match body.features {
        FeatureRepr::Tfidf { idf, n_docs } => {
            if idf.len() + 2 != body.vocabulary.len() {
                return Err(Error::Corrupted("idf length does not match vocabulary".into()));
            }
            FeatureState::TfIdf(TfIdfModel { vocab: body.vocabulary, idf, n_docs })
        }
        FeatureRepr::Sequence { max_len } => FeatureState::Sequence { vocab: body.vocabulary, max_len },
    };
    Ok(TrainedModel { config: body.config, labels: body.labels, features, params: body.params, history: body.history })
}

pub fn save(model: &TrainedModel, path: &Path) -> Result<()> {
    std::fs::write(path, to_json(model)?)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<TrainedModel> {
    from_json(&std::fs::read_to_string(path)?)
}

/// Load and insist on a particular model kind.
pub fn load_kind(path: &Path, expected: ModelKind) -> Result<TrainedModel> {
    let model = load(path)?;
    if model.kind() != expected {
        return Err(Error::KindMismatch { found: model.kind().to_string(), expected: expected.to_string() });
    }
    Ok(model)
}
