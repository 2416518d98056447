use std::collections::BTreeSet;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::network::{build, forward, FeatureState, Input, NamedTensor, Network};
use super::{LabelLevel, ModelConfig, ModelKind};
use crate::corpus::{FailureCase, Taxonomy};
use crate::embedding::train_skipgram;
use crate::error::{Error, Result};
use crate::nn::{softmax, AdamState, Mode, Tape, Tensor, Var};
use crate::seed;
use crate::text::{build_vocabulary, encode_sequence, fit_tfidf, tokenize, EncodedSequence, PAD};

/// A fitted classifier. Immutable; safe to share for concurrent prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub config: ModelConfig,
    /// Index → label, sorted.
    pub labels: Vec<String>,
    pub features: FeatureState,
    pub params: Vec<NamedTensor>,
    /// Mean training loss of each epoch.
    pub history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: String,
    /// Aligned with the model's label list.
    pub probs: Vec<f64>,
    pub latency_s: f64,
}

/// Label of `case` at `level`, derived through the taxonomy.
pub fn label_of<'t>(case: &'t FailureCase, level: LabelLevel, taxonomy: &'t Taxonomy) -> Result<&'t str> {
    match level {
        LabelLevel::Subclass => {
            taxonomy.lookup(&case.subclass)?;
            Ok(&case.subclass)
        }
        LabelLevel::Major => taxonomy.major_of(&case.subclass),
    }
}

enum Encoded {
    Rows(Vec<Vec<f64>>),
    Seqs(Vec<EncodedSequence>),
}

fn encode(features: &FeatureState, tokens: &[Vec<String>]) -> Result<Encoded> {
    Ok(match features {
        FeatureState::TfIdf(m) => Encoded::Rows(tokens.iter().map(|t| m.transform(t)).collect()),
        FeatureState::Sequence { vocab, max_len } => Encoded::Seqs(
            tokens
                .iter()
                .map(|t| encode_sequence(t, vocab, *max_len))
                .collect::<Result<_>>()?,
        ),
    })
}

pub fn train(cases: &[FailureCase], taxonomy: &Taxonomy, config: &ModelConfig) -> Result<TrainedModel> {
    train_with_feature_texts(cases, &[], taxonomy, config)
}

/// Train on `cases`. When `config.tfidf_fit_all` is set, `extra_texts`
/// (typically the held-out texts) also feed the vocabulary and the
/// TF-IDF / embedding statistics, but never the supervised loss.
pub fn train_with_feature_texts(
    cases: &[FailureCase],
    extra_texts: &[String],
    taxonomy: &Taxonomy,
    config: &ModelConfig,
) -> Result<TrainedModel> {
    config.validate()?;
    if cases.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let gold: Vec<&str> = cases.iter().map(|c| label_of(c, config.level, taxonomy)).collect::<Result<_>>()?;
    let labels: Vec<String> = gold.iter().copied().collect::<BTreeSet<_>>().into_iter().map(String::from).collect();
    if labels.len() < 2 {
        return Err(Error::SingleClass(labels[0].clone()));
    }
    let targets: Vec<usize> = gold
        .iter()
        .map(|g| labels.binary_search_by(|l| l.as_str().cmp(g)).expect("label collected above"))
        .collect();

    let tokens: Vec<Vec<String>> =
        cases.iter().map(|c| tokenize(&c.text, config.tokenizer)).collect::<Result<_>>()?;
    let mut feature_docs = tokens.clone();
    if config.tfidf_fit_all {
        for t in extra_texts {
            feature_docs.push(tokenize(t, config.tokenizer)?);
        }
    }
    let vocab = build_vocabulary(&feature_docs, config.min_count)?;

    let (features, embeddings) = match config.kind {
        ModelKind::Mlp => (FeatureState::TfIdf(fit_tfidf(&feature_docs, &vocab)), None),
        ModelKind::Cnn | ModelKind::Rnn => {
            let ids: Vec<Vec<usize>> = feature_docs
                .iter()
                .map(|d| d.iter().map(|t| vocab.id_or_unk(t)).collect())
                .collect();
            let sg = crate::embedding::SkipGramConfig { seed: seed::mix(config.seed, 7), ..config.embedding };
            let emb = train_skipgram(&ids, &vocab, &sg)?;
            (FeatureState::Sequence { vocab, max_len: config.max_len }, Some(emb))
        }
    };
    let network = build(config, &features, embeddings.as_ref(), labels.len())?;
    let inputs = encode(&features, &tokens)?;
    let (params, history) = fit(config, network, &inputs, &targets)?;
    Ok(TrainedModel { config: config.clone(), labels, features, params, history })
}

/// Mini-batch Adam over seeded shuffles.
fn fit(
    config: &ModelConfig,
    network: Network,
    inputs: &Encoded,
    targets: &[usize],
) -> Result<(Vec<NamedTensor>, Vec<f64>)> {
    let names: Vec<String> = network.params.iter().map(|p| p.name.clone()).collect();
    let mut tensors = network.tensors();
    let mut adam = AdamState::new(config.optimizer, &tensors);
    let mut rng = seed::rng(seed::mix(config.seed, 3));
    let mut order: Vec<usize> = (0..targets.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    let has_embedding = config.kind != ModelKind::Mlp;

    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let mut tape = Tape::new();
            let vars: Vec<Var> = tensors.iter().map(|t| tape.param(t.clone())).collect();
            let labels: Vec<usize> = batch.iter().map(|&i| targets[i]).collect();
            let loss = match inputs {
                Encoded::Rows(rows) => {
                    let dim = rows[0].len();
                    let data = batch.iter().flat_map(|&i| rows[i].iter().copied()).collect();
                    let x = Tensor::matrix(batch.len(), dim, data)?;
                    let logits = forward(config, &mut tape, &vars, Input::Features(&x), Mode::Train, &mut rng)?;
                    let loss = tape.softmax_cross_entropy_mean(logits, &labels)?;
                    epoch_loss += tape.value(loss).item() * batch.len() as f64;
                    loss
                }
                Encoded::Seqs(seqs) => {
                    let mut losses = Vec::with_capacity(batch.len());
                    for (&i, &label) in batch.iter().zip(&labels) {
                        let logits = forward(config, &mut tape, &vars, Input::Sequence(&seqs[i]), Mode::Train, &mut rng)?;
                        let l = tape.softmax_cross_entropy(logits, label)?;
                        epoch_loss += tape.value(l).item();
                        losses.push(l);
                    }
                    let total = tape.add_n(&losses)?;
                    tape.scale(total, 1.0 / batch.len() as f64)
                }
            };
            let mut grads = tape.backward(loss)?;
            let mut grad_tensors: Vec<Tensor> =
                vars.iter().map(|&v| grads.take(v).expect("parameter leaf")).collect();
            if has_embedding {
                // PAD stays the zero vector
                let dim = grad_tensors[0].shape()[1];
                grad_tensors[0].data_mut()[PAD * dim..(PAD + 1) * dim].iter_mut().for_each(|g| *g = 0.0);
            }
            adam.step(&mut tensors, &grad_tensors)?;
        }
        history.push(epoch_loss / targets.len() as f64);
    }
    let params = names.into_iter().zip(tensors).map(|(name, tensor)| NamedTensor { name, tensor }).collect();
    Ok((params, history))
}

impl TrainedModel {
    pub fn kind(&self) -> ModelKind {
        self.config.kind
    }

    /// Class probabilities for `text` with dropout disabled.
    pub fn probabilities(&self, text: &str) -> Result<Vec<f64>> {
        let tokens = tokenize(text, self.config.tokenizer)?;
        let mut tape = Tape::new();
        let vars: Vec<Var> = self.params.iter().map(|p| tape.constant(p.tensor.clone())).collect();
        // inference never draws from the stream
        let mut rng = seed::rng(0);
        let logits = match &self.features {
            FeatureState::TfIdf(m) => {
                let x = Tensor::matrix(1, m.dim(), m.transform(&tokens))?;
                forward(&self.config, &mut tape, &vars, Input::Features(&x), Mode::Infer, &mut rng)?
            }
            FeatureState::Sequence { vocab, max_len } => {
                let seq = encode_sequence(&tokens, vocab, *max_len)?;
                forward(&self.config, &mut tape, &vars, Input::Sequence(&seq), Mode::Infer, &mut rng)?
            }
        };
        Ok(softmax(tape.value(logits).data()))
    }

    /// Tokenize, featurize, run the network and time the whole inquiry.
    pub fn predict(&self, text: &str) -> Result<Prediction> {
        let start = Instant::now();
        let probs = self.probabilities(text)?;
        let mut best = 0;
        for (i, &p) in probs.iter().enumerate() {
            if p > probs[best] {
                best = i;
            }
        }
        let label = self.labels[best].clone();
        Ok(Prediction { label, probs, latency_s: start.elapsed().as_secs_f64() })
    }
}

pub fn predict(model: &TrainedModel, text: &str) -> Result<Prediction> {
    model.predict(text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::fixtures::{small_config, small_split};

    #[test]
    fn every_kind_learns() {
        let (tax, split) = small_split();
        for kind in ModelKind::ALL {
            let m = train(&split.train, &tax, &small_config(kind)).unwrap();
            assert_eq!(m.history.len(), 8);
            assert!(m.history.last() < m.history.first(), "{kind}: {:?}", m.history);
            assert_eq!(m.labels.len(), 16);
            // a training document is classified as its own subclass
            let case = &split.train[0];
            let p = m.predict(&case.text).unwrap();
            let own = m.labels.iter().position(|l| *l == case.subclass).unwrap();
            assert!(p.probs[own] > 1.0 / 16.0, "{kind}");
            assert!((p.probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn training_is_deterministic() {
        let (tax, split) = small_split();
        for kind in ModelKind::ALL {
            let cfg = small_config(kind);
            assert_eq!(train(&split.train, &tax, &cfg).unwrap(), train(&split.train, &tax, &cfg).unwrap());
        }
    }

    #[test]
    fn empty_text_gives_valid_prediction() {
        let (tax, split) = small_split();
        for kind in ModelKind::ALL {
            let m = train(&split.train, &tax, &small_config(kind)).unwrap();
            for text in ["", "  ... ", "never seen tokens"] {
                let p = m.predict(text).unwrap();
                assert!((p.probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                assert!(m.labels.contains(&p.label));
                assert_eq!(p.probs, m.predict(text).unwrap().probs);
            }
        }
    }

    #[test]
    fn major_level_labels() {
        let (tax, split) = small_split();
        let cfg = ModelConfig { level: LabelLevel::Major, ..small_config(ModelKind::Mlp) };
        let m = train(&split.train, &tax, &cfg).unwrap();
        assert_eq!(
            m.labels,
            ["cybercrime-related", "equipment-related", "information-related", "other", "processing-related", "service-related"]
        );
    }

    #[test]
    fn one_epoch_full_batch() {
        let (tax, split) = small_split();
        let cfg = ModelConfig { epochs: 1, batch_size: split.train.len(), ..small_config(ModelKind::Mlp) };
        let m = train(&split.train, &tax, &cfg).unwrap();
        assert_eq!(m.history.len(), 1);
        // one Adam step moves every weight by at most lr (plus rounding)
        let net = build(
            &cfg,
            &m.features,
            None,
            m.labels.len(),
        )
        .unwrap();
        for (before, after) in net.params.iter().zip(&m.params) {
            for (a, b) in before.tensor.data().iter().zip(after.tensor.data()) {
                assert!((a - b).abs() <= cfg.optimizer.lr * (1.0 + 1e-9));
            }
        }
    }

    #[test]
    fn degenerate_training_sets() {
        let (tax, split) = small_split();
        let cfg = small_config(ModelKind::Mlp);
        assert!(matches!(train(&[], &tax, &cfg), Err(Error::EmptyCorpus)));
        let one: Vec<FailureCase> = split.train.iter().filter(|c| c.subclass == "C-A1").cloned().collect();
        assert!(matches!(train(&one, &tax, &cfg), Err(Error::SingleClass(_))));
        let bad = ModelConfig { epochs: 0, ..cfg };
        assert!(matches!(train(&split.train, &tax, &bad), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn argmax_ties_pick_lowest_index() {
        let (tax, split) = small_split();
        let mut m = train(&split.train, &tax, &ModelConfig { epochs: 1, ..small_config(ModelKind::Mlp) }).unwrap();
        // zero output layer: uniform probabilities
        let n = m.params.len();
        for p in &mut m.params[n - 2..] {
            p.tensor.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let p = m.predict("anything").unwrap();
        assert_eq!(p.label, m.labels[0]);
    }
}
