//! The three classifiers: configuration, construction, training,
//! prediction and checkpoints.

pub mod checkpoint;
mod config;
mod network;
mod train;

pub use checkpoint::{load, load_kind, save};
pub use config::{LabelLevel, ModelConfig, ModelKind};
pub use network::{build, forward, FeatureState, Input, NamedTensor, Network};
pub use train::{label_of, predict, train, train_with_feature_texts, Prediction, TrainedModel};
