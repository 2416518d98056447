use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
const RESERVED: [&str; 2] = ["<pad>", "<unk>"];

/// Dense token ids with two reserved slots, PAD = 0 and UNK = 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "VocabularyRepr", into = "VocabularyRepr")]
pub struct Vocabulary {
    tokens: Vec<String>,
    doc_freq: Vec<usize>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabularyRepr {
    tokens: Vec<String>,
    doc_freq: Vec<usize>,
}

impl From<VocabularyRepr> for Vocabulary {
    fn from(r: VocabularyRepr) -> Self {
        let index = r.tokens.iter().enumerate().skip(RESERVED.len()).map(|(i, t)| (t.clone(), i)).collect();
        Self { tokens: r.tokens, doc_freq: r.doc_freq, index }
    }
}

impl From<Vocabulary> for VocabularyRepr {
    fn from(v: Vocabulary) -> Self {
        Self { tokens: v.tokens, doc_freq: v.doc_freq }
    }
}

impl Vocabulary {
    /// Total number of ids, reserved included.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    /// True when only the reserved ids exist.
    pub fn is_empty(&self) -> bool {
        self.tokens.len() == RESERVED.len()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn id_or_unk(&self, token: &str) -> usize {
        self.id(token).unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn doc_freq(&self, id: usize) -> usize {
        self.doc_freq.get(id).copied().unwrap_or(0)
    }

    pub fn is_reserved(id: usize) -> bool {
        id < RESERVED.len()
    }

    /// Non-reserved `(id, token)` pairs in id order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, &str)> {
        self.tokens.iter().enumerate().skip(RESERVED.len()).map(|(i, t)| (i, t.as_str()))
    }
}

/// Assign ids to every token occurring at least `min_count` times in `docs`,
/// most frequent first, ties broken lexicographically.
pub fn build_vocabulary<S: AsRef<str>>(docs: &[Vec<S>], min_count: usize) -> Result<Vocabulary> {
    if min_count == 0 {
        return Err(Error::InvalidArgument("min_count must be at least 1".into()));
    }
    // token -> (corpus frequency, document frequency, last doc seen)
    let mut stats: HashMap<&str, (usize, usize, usize)> = HashMap::new();
    for (d, doc) in docs.iter().enumerate() {
        for tok in doc {
            let e = stats.entry(tok.as_ref()).or_insert((0, 0, usize::MAX));
            e.0 += 1;
            if e.2 != d {
                e.1 += 1;
                e.2 = d;
            }
        }
    }
    let mut kept: Vec<(&str, usize, usize)> = stats
        .into_iter()
        .filter(|(_, (count, _, _))| *count >= min_count)
        .map(|(t, (count, df, _))| (t, count, df))
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

    let mut tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
    let mut doc_freq = vec![0; RESERVED.len()];
    for (t, _, df) in kept {
        tokens.push(t.to_string());
        doc_freq.push(df);
    }
    Ok(VocabularyRepr { tokens, doc_freq }.into())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn docs(raw: &[&[&str]]) -> Vec<Vec<String>> {
        raw.iter().map(|d| d.iter().map(|s| s.to_string()).collect()).collect()
    }

    #[test]
    fn ids_by_frequency() {
        let v = build_vocabulary(&docs(&[&["a", "b"], &["a"]]), 1).unwrap();
        assert_eq!(v.len(), 4);
        assert_eq!((v.id("a"), v.id("b")), (Some(2), Some(3)));
        assert_eq!(v.doc_freq(2), 2);
        assert_eq!(v.doc_freq(3), 1);
    }

    #[test]
    fn threshold_drops_rare_tokens() {
        let v = build_vocabulary(&docs(&[&["a", "b"], &["a"]]), 2).unwrap();
        assert_eq!(v.id("b"), None);
        assert_eq!(v.id_or_unk("b"), UNK);
    }

    #[test]
    fn empty_corpus_has_only_reserved_ids() {
        let v = build_vocabulary::<String>(&[], 1).unwrap();
        assert_eq!(v.len(), 2);
        assert!(v.is_empty());
        assert!(build_vocabulary::<String>(&[], 0).is_err());
    }

    #[test]
    fn lexicographic_tie_break_and_repeat_counts() {
        let v = build_vocabulary(&docs(&[&["z", "y", "x", "x"], &["y"]]), 1).unwrap();
        // x:2 y:2 z:1 -> x, y tie broken lexicographically
        assert_eq!(v.iter().map(|(_, t)| t).collect::<Vec<_>>(), ["x", "y", "z"]);
        assert_eq!(v.doc_freq(v.id("x").unwrap()), 1);
        assert_eq!(v.doc_freq(v.id("y").unwrap()), 2);
    }

    #[test]
    fn serde_rebuilds_index() {
        let v = build_vocabulary(&docs(&[&["a", "b"], &["a"]]), 1).unwrap();
        let back: Vocabulary = serde_json::from_str(&serde_json::to_string(&v).unwrap()).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.id("b"), Some(3));
        assert_eq!(back.id("<pad>"), None);
    }
}
