use std::collections::{BTreeMap, HashSet};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{FailureCase, Taxonomy};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub train: usize,
    pub test: usize,
}

/// Shape of a synthetic failure corpus.
///
/// Each subclass owns a keyword pool; each field owns a background pool shared
/// by all of its subclasses. A document of subclass `s` draws every token from
/// `s`'s pool with probability `keyword_prob`, otherwise from the background
/// pool of `s`'s field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub keywords_per_class: usize,
    pub doc_length: usize,
    pub keyword_prob: f64,
    pub background_per_field: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    /// Per-subclass count overrides.
    pub counts: BTreeMap<String, ClassCounts>,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            keywords_per_class: 20,
            doc_length: 30,
            keyword_prob: 0.8,
            background_per_field: 100,
            train_per_class: 60,
            test_per_class: 12,
            counts: BTreeMap::new(),
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.keyword_prob > 0.0 && self.keyword_prob <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "keyword probability must be in (0, 1], got {}",
                self.keyword_prob
            )));
        }
        let named = [
            ("keywords per class", self.keywords_per_class),
            ("document length", self.doc_length),
            ("background pool size", self.background_per_field),
            ("train cases per class", self.train_per_class),
            ("test cases per class", self.test_per_class),
        ];
        for (name, v) in named {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be at least 1")));
            }
        }
        for (code, c) in &self.counts {
            if c.train == 0 || c.test == 0 {
                return Err(Error::InvalidConfig(format!("{code}: counts must be at least 1")));
            }
        }
        Ok(())
    }

    pub fn counts_for(&self, code: &str) -> ClassCounts {
        self.counts
            .get(code)
            .copied()
            .unwrap_or(ClassCounts { train: self.train_per_class, test: self.test_per_class })
    }

    /// Test counts to pass to `stratified_split` for a generated corpus.
    pub fn test_counts(&self, taxonomy: &Taxonomy) -> BTreeMap<String, usize> {
        taxonomy
            .entries()
            .iter()
            .map(|e| (e.code.clone(), self.counts_for(&e.code).test))
            .collect()
    }
}

fn alnum_lower(s: &str) -> String {
    s.chars().filter(|c| c.is_ascii_alphanumeric()).map(|c| c.to_ascii_lowercase()).collect()
}

/// Keyword pool of a subclass.
pub fn keyword_pool(code: &str, size: usize) -> Vec<String> {
    let stem = alnum_lower(code);
    (0..size).map(|i| format!("{stem}k{i:03}")).collect()
}

/// Background pool of the field whose codes start with `prefix`.
pub fn background_pool(prefix: &str, size: usize) -> Vec<String> {
    let stem = alnum_lower(prefix);
    (0..size).map(|i| format!("{stem}bg{i:03}")).collect()
}

/// Deterministically generate a labelled corpus from `spec`.
pub fn generate_synthetic(spec: &SynthSpec, taxonomy: &Taxonomy) -> Result<Vec<FailureCase>> {
    spec.validate()?;
    let mut backgrounds: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    let mut pools = Vec::with_capacity(taxonomy.len());
    for e in taxonomy.entries() {
        let prefix = e.code.split('-').next().unwrap_or(&e.code);
        backgrounds
            .entry(e.field.as_str())
            .or_insert_with(|| background_pool(prefix, spec.background_per_field));
        pools.push(keyword_pool(&e.code, spec.keywords_per_class));
    }
    let mut seen = HashSet::new();
    for tok in pools.iter().flatten().chain(backgrounds.values().flatten()) {
        if !seen.insert(tok.as_str()) {
            return Err(Error::InvalidConfig(format!("token pools overlap at {tok:?}")));
        }
    }

    let mut rng = seed::rng(spec.seed);
    let mut cases = Vec::new();
    for (e, pool) in taxonomy.entries().iter().zip(&pools) {
        let bg = &backgrounds[e.field.as_str()];
        let n = {
            let c = spec.counts_for(&e.code);
            c.train + c.test
        };
        for j in 0..n {
            let mut words = Vec::with_capacity(spec.doc_length);
            for _ in 0..spec.doc_length {
                let word = if rng.random::<f64>() < spec.keyword_prob {
                    &pool[rng.random_range(0..pool.len())]
                } else {
                    &bg[rng.random_range(0..bg.len())]
                };
                words.push(word.as_str());
            }
            cases.push(FailureCase::new(format!("{}-{j:04}", e.code), words.join(" "), e.code.clone()));
        }
    }
    Ok(cases)
}
