//! Skip-gram word embeddings trained with negative sampling.

use std::fmt::Write as _;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::text::{Vocabulary, PAD};

/// `rows × dim` matrix, one row per vocabulary id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingMatrix {
    pub rows: usize,
    pub dim: usize,
    pub values: Vec<f64>,
}

impl EmbeddingMatrix {
    pub fn row(&self, id: usize) -> &[f64] {
        &self.values[id * self.dim..(id + 1) * self.dim]
    }

    fn row_mut(&mut self, id: usize) -> &mut [f64] {
        &mut self.values[id * self.dim..(id + 1) * self.dim]
    }

    /// `token,v1,...,vD` per row, in id order.
    pub fn to_csv(&self, vocab: &Vocabulary) -> String {
        let mut out = String::new();
        for id in 0..self.rows {
            out.push_str(vocab.token(id).unwrap_or(""));
            for v in self.row(id) {
                write!(out, ",{v}").expect("writing to a string");
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SkipGramConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for SkipGramConfig {
    fn default() -> Self {
        Self { dim: 64, window: 4, negatives: 5, epochs: 15, learning_rate: 0.025, seed: 0 }
    }
}

impl SkipGramConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.window == 0 || self.negatives == 0 {
            return Err(Error::InvalidConfig("skip-gram dim, window and negatives must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        Ok(())
    }
}

/// The starting matrix for `cfg`: uniform in `(-0.5/D, 0.5/D)`, PAD row zero.
pub fn initial_embeddings(vocab_size: usize, cfg: &SkipGramConfig) -> EmbeddingMatrix {
    let mut rng = seed::rng(cfg.seed);
    let limit = 0.5 / cfg.dim as f64;
    let mut m = EmbeddingMatrix {
        rows: vocab_size,
        dim: cfg.dim,
        values: (0..vocab_size * cfg.dim).map(|_| rng.random_range(-limit..limit)).collect(),
    };
    if vocab_size > PAD {
        m.row_mut(PAD).iter_mut().for_each(|v| *v = 0.0);
    }
    m
}

fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn train_skipgram(docs: &[Vec<usize>], vocab: &Vocabulary, cfg: &SkipGramConfig) -> Result<EmbeddingMatrix> {
    Ok(train_skipgram_traced(docs, vocab, cfg)?.0)
}

/// Train and also return the mean per-pair loss of every epoch.
///
/// Reserved ids (PAD, UNK) hold their positions in the window but are never
/// used as a center or a context. Negatives come from the unigram
/// distribution raised to 0.75; a negative equal to the context is dropped.
/// The learning rate decays linearly to `1e-4 * lr` over all pairs.
pub fn train_skipgram_traced(
    docs: &[Vec<usize>],
    vocab: &Vocabulary,
    cfg: &SkipGramConfig,
) -> Result<(EmbeddingMatrix, Vec<f64>)> {
    cfg.validate()?;
    let v = vocab.len();
    let mut counts = vec![0usize; v];
    for doc in docs {
        for &id in doc {
            if id >= v {
                return Err(Error::InvalidArgument(format!("token id {id} out of range for vocabulary of {v}")));
            }
            if !Vocabulary::is_reserved(id) {
                counts[id] += 1;
            }
        }
    }
    if counts.iter().all(|&c| c == 0) {
        return Err(Error::EmptyCorpus);
    }
    let weights: Vec<f64> = counts.iter().map(|&c| (c as f64).powf(0.75)).collect();
    let negatives = WeightedIndex::new(&weights).map_err(|e| Error::InvalidArgument(e.to_string()))?;

    let usable = |id: usize| !Vocabulary::is_reserved(id);
    let pairs_per_epoch: usize = docs
        .iter()
        .map(|doc| {
            (0..doc.len())
                .filter(|&c| usable(doc[c]))
                .map(|c| {
                    let lo = c.saturating_sub(cfg.window);
                    let hi = (c + cfg.window).min(doc.len() - 1);
                    (lo..=hi).filter(|&j| j != c && usable(doc[j])).count()
                })
                .sum::<usize>()
        })
        .sum();

    let mut input = initial_embeddings(v, cfg);
    let mut output = EmbeddingMatrix { rows: v, dim: cfg.dim, values: vec![0.0; v * cfg.dim] };
    let mut rng = seed::rng(seed::mix(cfg.seed, 1));
    let total = (pairs_per_epoch * cfg.epochs).max(1) as f64;
    let mut done = 0usize;
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut center_grad = vec![0.0; cfg.dim];
    let mut targets = Vec::with_capacity(cfg.negatives + 1);

    for _ in 0..cfg.epochs {
        let mut epoch_loss = 0.0;
        for doc in docs {
            for c in 0..doc.len() {
                let center = doc[c];
                if !usable(center) {
                    continue;
                }
                let lo = c.saturating_sub(cfg.window);
                let hi = (c + cfg.window).min(doc.len() - 1);
                for (j, &context) in doc.iter().enumerate().take(hi + 1).skip(lo) {
                    if j == c || !usable(context) {
                        continue;
                    }
                    let lr = cfg.learning_rate * (1.0 - done as f64 / total).max(1e-4);
                    done += 1;
                    targets.clear();
                    targets.push((context, 1.0));
                    for _ in 0..cfg.negatives {
                        let n = negatives.sample(&mut rng);
                        if n != context {
                            targets.push((n, 0.0));
                        }
                    }
                    center_grad.iter_mut().for_each(|g| *g = 0.0);
                    for &(target, label) in &targets {
                        let score: f64 = input.row(center).iter().zip(output.row(target)).map(|(a, b)| a * b).sum();
                        epoch_loss -= if label > 0.0 { log_sigmoid(score) } else { log_sigmoid(-score) };
                        let g = (label - sigmoid(score)) * lr;
                        let (vc, ut) = (input.row(center), output.row_mut(target));
                        for ((cg, u), x) in center_grad.iter_mut().zip(ut.iter_mut()).zip(vc) {
                            *cg += g * *u;
                            *u += g * x;
                        }
                    }
                    for (x, cg) in input.row_mut(center).iter_mut().zip(&center_grad) {
                        *x += cg;
                    }
                }
            }
        }
        history.push(if pairs_per_epoch > 0 { epoch_loss / pairs_per_epoch as f64 } else { 0.0 });
    }
    input.row_mut(PAD).iter_mut().for_each(|x| *x = 0.0);
    Ok((input, history))
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch { op: "cosine_similarity", detail: format!("{} vs {}", a.len(), b.len()) });
    }
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector);
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// The `m` non-reserved tokens most similar to `token`, best first, ties by id.
pub fn nearest_neighbors(
    token: &str,
    m: usize,
    matrix: &EmbeddingMatrix,
    vocab: &Vocabulary,
) -> Result<Vec<(String, f64)>> {
    let query = vocab.id(token).ok_or_else(|| Error::UnknownToken(token.to_string()))?;
    let q = matrix.row(query);
    let mut scored: Vec<(usize, f64)> = vocab
        .iter()
        .filter(|&(id, _)| id != query)
        .map(|(id, _)| {
            let sim = match cosine_similarity(q, matrix.row(id)) {
                Ok(s) => s,
                Err(Error::ZeroVector) => 0.0,
                Err(e) => return Err(e),
            };
            Ok((id, sim))
        })
        .collect::<Result<_>>()?;
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(scored
        .into_iter()
        .take(m)
        .map(|(id, s)| (vocab.token(id).expect("id from vocabulary").to_string(), s))
        .collect())
}

/// Mean cosine similarity over all unordered pairs of non-reserved tokens.
pub fn mean_pairwise_similarity(matrix: &EmbeddingMatrix, vocab: &Vocabulary) -> Result<f64> {
    let ids: Vec<usize> = vocab.iter().map(|(id, _)| id).collect();
    let mut total = 0.0;
    let mut n = 0usize;
    for (k, &a) in ids.iter().enumerate() {
        for &b in &ids[k + 1..] {
            total += cosine_similarity(matrix.row(a), matrix.row(b))?;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::InvalidArgument("need at least two tokens".into()));
    }
    Ok(total / n as f64)
}
