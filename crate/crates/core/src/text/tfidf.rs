use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::vocab::Vocabulary;

/// Smoothed inverse document frequencies over the non-reserved vocabulary.
///
/// Feature `j` corresponds to vocabulary id `j + 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfIdfModel {
    pub vocab: Vocabulary,
    pub idf: Vec<f64>,
    pub n_docs: usize,
}

const OFFSET: usize = 2;

/// `idf(t) = ln((1 + N) / (1 + df(t))) + 1`, with `df` counted over `docs`.
pub fn fit_tfidf<S: AsRef<str>>(docs: &[Vec<S>], vocab: &Vocabulary) -> TfIdfModel {
    let dim = vocab.len() - OFFSET;
    let mut df = vec![0usize; dim];
    for doc in docs {
        let ids: HashSet<usize> = doc.iter().filter_map(|t| vocab.id(t.as_ref())).collect();
        for id in ids {
            df[id - OFFSET] += 1;
        }
    }
    let n = docs.len() as f64;
    let idf = df.iter().map(|&d| ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0).collect();
    TfIdfModel { vocab: vocab.clone(), idf, n_docs: docs.len() }
}

impl TfIdfModel {
    pub fn dim(&self) -> usize {
        self.idf.len()
    }

    /// L2-normalised `(count / |doc|) * idf` vector. Out-of-vocabulary tokens
    /// count toward `|doc|` but get no feature. A document with no known
    /// tokens maps to the zero vector.
    pub fn transform<S: AsRef<str>>(&self, doc: &[S]) -> Vec<f64> {
        let mut v = vec![0.0; self.dim()];
        if doc.is_empty() {
            return v;
        }
        for tok in doc {
            if let Some(id) = self.vocab.id(tok.as_ref()) {
                v[id - OFFSET] += 1.0;
            }
        }
        let len = doc.len() as f64;
        for (x, idf) in v.iter_mut().zip(&self.idf) {
            if *x != 0.0 {
                *x = *x / len * idf;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

pub fn tfidf_transform<S: AsRef<str>>(doc: &[S], model: &TfIdfModel) -> Vec<f64> {
    model.transform(doc)
}
