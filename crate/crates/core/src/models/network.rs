use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelKind};
use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::nn::{Mode, Tape, Tensor, Var};
use crate::seed::{self, Rng};
use crate::text::{EncodedSequence, TfIdfModel, Vocabulary, PAD};

/// Input-side state fitted on the training texts.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureState {
    TfIdf(TfIdfModel),
    Sequence { vocab: Vocabulary, max_len: usize },
}

impl FeatureState {
    pub fn vocab(&self) -> &Vocabulary {
        match self {
            FeatureState::TfIdf(m) => &m.vocab,
            FeatureState::Sequence { vocab, .. } => vocab,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub tensor: Tensor,
}

/// Parameters of one of the three architectures.
///
/// * mlp: `tfidf → dense(H1) → ReLU → dropout → dense(H2) → ReLU → dropout → dense(C)`
/// * cnn: `embedding → conv(widths × F) → ReLU → max-over-time → concat → dropout → dense(C)`
/// * rnn: `embedding → LSTM(H) → ReLU → dropout → dense(C)`
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub kind: ModelKind,
    pub params: Vec<NamedTensor>,
}

/// One forward input.
pub enum Input<'a> {
    /// `[B, V]` TF-IDF rows.
    Features(&'a Tensor),
    Sequence(&'a EncodedSequence),
}

fn glorot(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut Rng) -> Tensor {
    Tensor::uniform(shape, (6.0 / (fan_in + fan_out) as f64).sqrt(), rng)
}

fn named(name: impl Into<String>, tensor: Tensor) -> NamedTensor {
    NamedTensor { name: name.into(), tensor }
}

/// Fresh, seeded parameters for `config` on top of `features`. The cnn and
/// rnn embedding layer starts from `embeddings`.
pub fn build(
    config: &ModelConfig,
    features: &FeatureState,
    embeddings: Option<&EmbeddingMatrix>,
    n_classes: usize,
) -> Result<Network> {
    config.validate()?;
    if n_classes == 0 {
        return Err(Error::InvalidConfig("model needs at least one class".into()));
    }
    let mut rng = seed::rng(seed::mix(config.seed, 2));
    let c = n_classes;
    let params = match (config.kind, features, embeddings) {
        (ModelKind::Mlp, FeatureState::TfIdf(tfidf), _) => {
            let v = tfidf.dim();
            if v == 0 {
                return Err(Error::InvalidConfig("TF-IDF vocabulary is empty".into()));
            }
            let [h1, h2] = config.mlp_hidden;
            vec![
                named("dense1.w", glorot(&[v, h1], v, h1, &mut rng)),
                named("dense1.b", Tensor::zeros(&[h1])),
                named("dense2.w", glorot(&[h1, h2], h1, h2, &mut rng)),
                named("dense2.b", Tensor::zeros(&[h2])),
                named("out.w", glorot(&[h2, c], h2, c, &mut rng)),
                named("out.b", Tensor::zeros(&[c])),
            ]
        }
        (ModelKind::Cnn | ModelKind::Rnn, FeatureState::Sequence { vocab, .. }, Some(emb)) => {
            if emb.rows != vocab.len() {
                return Err(Error::InvalidConfig(format!(
                    "embedding has {} rows for a vocabulary of {}",
                    emb.rows,
                    vocab.len()
                )));
            }
            let d = emb.dim;
            let mut params = vec![named("embedding", Tensor::matrix(emb.rows, d, emb.values.clone())?)];
            if config.kind == ModelKind::Cnn {
                let f = config.cnn_maps;
                for &w in &config.cnn_widths {
                    params.push(named(format!("conv{w}.w"), glorot(&[w, d, f], w * d, f, &mut rng)));
                    params.push(named(format!("conv{w}.b"), Tensor::zeros(&[f])));
                }
                let pooled = f * config.cnn_widths.len();
                params.push(named("out.w", glorot(&[pooled, c], pooled, c, &mut rng)));
                params.push(named("out.b", Tensor::zeros(&[c])));
            } else {
                let h = config.rnn_hidden;
                let limit = 1.0 / (h as f64).sqrt();
                let mut bias = Tensor::zeros(&[4 * h]);
                bias.data_mut()[h..2 * h].iter_mut().for_each(|b| *b = 1.0);
                params.push(named("lstm.wx", Tensor::uniform(&[d, 4 * h], limit, &mut rng)));
                params.push(named("lstm.wh", Tensor::uniform(&[h, 4 * h], limit, &mut rng)));
                params.push(named("lstm.b", bias));
                params.push(named("out.w", glorot(&[h, c], h, c, &mut rng)));
                params.push(named("out.b", Tensor::zeros(&[c])));
            }
            params
        }
        (kind, _, _) => {
            return Err(Error::InvalidConfig(format!(
                "{kind} model needs {}",
                if kind == ModelKind::Mlp { "TF-IDF features" } else { "a sequence vocabulary and embeddings" }
            )))
        }
    };
    Ok(Network { kind: config.kind, params })
}

impl Network {
    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|p| p.tensor.len()).sum()
    }

    pub fn tensors(&self) -> Vec<Tensor> {
        self.params.iter().map(|p| p.tensor.clone()).collect()
    }
}

/// Logits for `input`: `[B, C]` for feature rows, `[C]` for a sequence.
/// `vars` are the network's parameters placed on `tape`, in order.
pub fn forward(
    config: &ModelConfig,
    tape: &mut Tape,
    vars: &[Var],
    input: Input<'_>,
    mode: Mode,
    rng: &mut Rng,
) -> Result<Var> {
    let p = config.dropout;
    match (config.kind, input) {
        (ModelKind::Mlp, Input::Features(x)) => {
            let x = tape.constant(x.clone());
            let h = tape.affine(x, vars[0], vars[1])?;
            let h = tape.relu(h);
            let h = tape.dropout(h, p, mode, rng)?;
            let h = tape.affine(h, vars[2], vars[3])?;
            let h = tape.relu(h);
            let h = tape.dropout(h, p, mode, rng)?;
            tape.affine(h, vars[4], vars[5])
        }
        (ModelKind::Cnn, Input::Sequence(seq)) => {
            // Windows lying wholly in the padding are left out; short inputs
            // are padded up to the widest filter.
            let widest = *config.cnn_widths.iter().max().expect("validated");
            let len = seq.true_length.max(widest);
            let ids: Vec<usize> = (0..len).map(|t| seq.ids.get(t).copied().unwrap_or(PAD)).collect();
            let emb = tape.gather(vars[0], &ids)?;
            let n = config.cnn_widths.len();
            let bank: Vec<(Var, Var)> = (0..n).map(|k| (vars[1 + 2 * k], vars[2 + 2 * k])).collect();
            let mut pooled = Vec::with_capacity(n);
            for conv in tape.conv1d_bank(emb, &bank)? {
                let r = tape.relu(conv);
                pooled.push(tape.max_over_time(r)?);
            }
            let joined = tape.concat(&pooled);
            let h = tape.dropout(joined, p, mode, rng)?;
            tape.affine(h, vars[1 + 2 * n], vars[2 + 2 * n])
        }
        (ModelKind::Rnn, Input::Sequence(seq)) => {
            let len = seq.true_length.max(1);
            let ids: Vec<usize> = (0..len).map(|t| seq.ids.get(t).copied().unwrap_or(PAD)).collect();
            let emb = tape.gather(vars[0], &ids)?;
            let h = config.rnn_hidden;
            let h0 = tape.constant(Tensor::zeros(&[h]));
            let c0 = tape.constant(Tensor::zeros(&[h]));
            let last = tape.lstm_sequence(emb, len, vars[1], vars[2], vars[3], h0, c0)?;
            let r = tape.relu(last);
            let r = tape.dropout(r, p, mode, rng)?;
            tape.affine(r, vars[4], vars[5])
        }
        (kind, _) => Err(Error::InvalidArgument(format!("wrong input type for a {kind} model"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{initial_embeddings, SkipGramConfig};
    use crate::models::LabelLevel;
    use crate::text::{build_vocabulary, fit_tfidf};

    fn tfidf_of_dim(v: usize) -> FeatureState {
        let doc: Vec<String> = (0..v).map(|i| format!("t{i}")).collect();
        let vocab = build_vocabulary(std::slice::from_ref(&doc), 1).unwrap();
        FeatureState::TfIdf(fit_tfidf(&[doc], &vocab))
    }

    #[test]
    fn mlp_parameter_count() {
        let cfg = ModelConfig::new(ModelKind::Mlp, LabelLevel::Subclass);
        let net = build(&cfg, &tfidf_of_dim(1000), None, 16).unwrap();
        assert_eq!(net.parameter_count(), 1000 * 256 + 256 + 256 * 64 + 64 + 64 * 16 + 16);
    }

    #[test]
    fn invalid_builds() {
        let cnn = ModelConfig { cnn_maps: 0, ..ModelConfig::new(ModelKind::Cnn, LabelLevel::Subclass) };
        let vocab = build_vocabulary(&[vec!["a", "b"]], 1).unwrap();
        let emb = initial_embeddings(vocab.len(), &SkipGramConfig { dim: 4, ..Default::default() });
        let seq = FeatureState::Sequence { vocab, max_len: 8 };
        assert!(matches!(build(&cnn, &seq, Some(&emb), 3), Err(Error::InvalidConfig(_))));
        // mismatched pipelines
        let mlp = ModelConfig::new(ModelKind::Mlp, LabelLevel::Subclass);
        assert!(build(&mlp, &seq, Some(&emb), 3).is_err());
        let rnn = ModelConfig::new(ModelKind::Rnn, LabelLevel::Subclass);
        assert!(build(&rnn, &tfidf_of_dim(4), None, 3).is_err());
        assert!(build(&rnn, &seq, None, 3).is_err());
    }

    #[test]
    fn same_seed_same_initialisation() {
        let cfg = ModelConfig { seed: 5, ..ModelConfig::new(ModelKind::Rnn, LabelLevel::Subclass) };
        let vocab = build_vocabulary(&[vec!["a", "b"]], 1).unwrap();
        let emb = initial_embeddings(vocab.len(), &SkipGramConfig { dim: 4, ..Default::default() });
        let seq = FeatureState::Sequence { vocab, max_len: 8 };
        let a = build(&cfg, &seq, Some(&emb), 3).unwrap();
        assert_eq!(a, build(&cfg, &seq, Some(&emb), 3).unwrap());
        let other = ModelConfig { seed: 6, ..cfg };
        assert_ne!(a, build(&other, &seq, Some(&emb), 3).unwrap());
        let bias = &a.params[3].tensor;
        assert_eq!(bias.data()[64..128], [1.0; 64]);
        assert!(bias.data()[..64].iter().all(|&b| b == 0.0));
    }
}
