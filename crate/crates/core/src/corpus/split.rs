use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::FailureCase;
use crate::error::{Error, Result};
use crate::seed::{fnv1a, splitmix64, CounterStream};

/// Disjoint train/test partition of a corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSplit {
    pub train: Vec<FailureCase>,
    pub test: Vec<FailureCase>,
}

impl CorpusSplit {
    /// Stable fingerprint of both partitions (ids, gold codes and texts, in order).
    pub fn digest(&self) -> String {
        let mut bytes = Vec::new();
        for part in [&self.train, &self.test] {
            for c in part {
                bytes.extend_from_slice(c.id.as_bytes());
                bytes.push(0x1f);
                bytes.extend_from_slice(c.subclass.as_bytes());
                bytes.push(0x1f);
                bytes.extend_from_slice(c.text.as_bytes());
                bytes.push(0x1e);
            }
            bytes.push(0x1d);
        }
        format!("{:016x}", fnv1a(&bytes))
    }
}

/// Draw exactly `per_class_test[code]` test cases from every class, without
/// replacement. Classes missing from the map contribute no test cases.
///
/// Each class samples from its own counter-based stream keyed by
/// `(seed, code)`, so the result for one class does not depend on which other
/// classes are present or how the input is ordered across classes. Both
/// partitions keep the input order.
pub fn stratified_split(
    cases: &[FailureCase],
    per_class_test: &BTreeMap<String, usize>,
    seed: u64,
) -> Result<CorpusSplit> {
    let mut by_class: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, c) in cases.iter().enumerate() {
        by_class.entry(c.subclass.as_str()).or_default().push(i);
    }

    let mut test_idx = BTreeSet::new();
    for (code, &want) in per_class_test {
        if want == 0 {
            continue;
        }
        let members = by_class.get(code.as_str()).map(Vec::as_slice).unwrap_or(&[]);
        if want > members.len() {
            return Err(Error::InsufficientCases {
                code: code.clone(),
                requested: want,
                available: members.len(),
            });
        }
        let mut pool = members.to_vec();
        let mut stream = CounterStream::new(splitmix64(seed ^ fnv1a(code.as_bytes())));
        // partial Fisher-Yates: the first `want` slots become the sample
        for k in 0..want {
            let j = k + stream.below((pool.len() - k) as u64) as usize;
            pool.swap(k, j);
        }
        test_idx.extend(pool[..want].iter().copied());
    }

    let mut split = CorpusSplit { train: Vec::new(), test: Vec::new() };
    for (i, c) in cases.iter().enumerate() {
        if test_idx.contains(&i) {
            split.test.push(c.clone());
        } else {
            split.train.push(c.clone());
        }
    }
    Ok(split)
}

/// The same count for every code in `codes`.
pub fn uniform_counts<'a>(codes: impl IntoIterator<Item = &'a str>, n: usize) -> BTreeMap<String, usize> {
    codes.into_iter().map(|c| (c.to_string(), n)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn class(code: &str, n: usize) -> Vec<FailureCase> {
        (0..n).map(|i| FailureCase::new(format!("{code}-{i}"), "t", code)).collect()
    }

    #[test]
    fn exact_count_and_repeatable() {
        let cases = class("C-A1", 10);
        let counts = uniform_counts(["C-A1"], 3);
        let a = stratified_split(&cases, &counts, 7).unwrap();
        assert_eq!((a.test.len(), a.train.len()), (3, 7));
        let b = stratified_split(&cases, &counts, 7).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        let c = stratified_split(&cases, &counts, 8).unwrap();
        assert_eq!(c.test.len(), 3);
    }

    #[test]
    fn digest_tracks_text() {
        let counts = uniform_counts(["C-A1"], 2);
        let a = stratified_split(&class("C-A1", 5), &counts, 1).unwrap();
        let mut edited = class("C-A1", 5);
        edited[4].text = "u".into();
        let b = stratified_split(&edited, &counts, 1).unwrap();
        assert_eq!(a.digest(), stratified_split(&class("C-A1", 5), &counts, 1).unwrap().digest());
        assert_ne!(a.digest(), b.digest());
    }

    #[test]
    fn zero_request_keeps_class_in_train() {
        let mut cases = class("C-C2", 7);
        cases.extend(class("C-A1", 5));
        let mut counts = uniform_counts(["C-A1"], 2);
        counts.insert("C-C2".into(), 0);
        let s = stratified_split(&cases, &counts, 1).unwrap();
        assert!(s.test.iter().all(|c| c.subclass == "C-A1"));
        assert_eq!(s.train.iter().filter(|c| c.subclass == "C-C2").count(), 7);
    }

    #[test]
    fn insufficient_cases() {
        let cases = class("C-A1", 4);
        let err = stratified_split(&cases, &uniform_counts(["C-A1"], 5), 0).unwrap_err();
        assert!(matches!(err, Error::InsufficientCases { requested: 5, available: 4, .. }));
    }

    #[test]
    fn class_order_independent() {
        let a = class("C-A1", 9);
        let b = class("F-A2", 9);
        let counts = uniform_counts(["C-A1", "F-A2"], 4);
        let ab: Vec<_> = a.iter().chain(&b).cloned().collect();
        let ba: Vec<_> = b.iter().chain(&a).cloned().collect();
        let ids = |s: &CorpusSplit| s.test.iter().map(|c| c.id.clone()).collect::<BTreeSet<_>>();
        assert_eq!(
            ids(&stratified_split(&ab, &counts, 3).unwrap()),
            ids(&stratified_split(&ba, &counts, 3).unwrap())
        );
    }

    proptest! {
        #[test]
        fn partition_invariants(sizes in proptest::collection::vec(0usize..12, 1..5), seed: u64, frac in 0.0f64..=1.0) {
            let codes = ["C-A1", "C-A2", "F-A1", "F-E3"];
            let mut cases = Vec::new();
            let mut counts = BTreeMap::new();
            for (code, &n) in codes.iter().zip(&sizes) {
                cases.extend(class(code, n));
                counts.insert(code.to_string(), (n as f64 * frac).floor() as usize);
            }
            let s = stratified_split(&cases, &counts, seed).unwrap();
            let train: HashSet<_> = s.train.iter().map(|c| &c.id).collect();
            let test: HashSet<_> = s.test.iter().map(|c| &c.id).collect();
            prop_assert!(train.is_disjoint(&test));
            prop_assert_eq!(train.len() + test.len(), cases.len());
            for (code, &want) in &counts {
                prop_assert_eq!(s.test.iter().filter(|c| &c.subclass == code).count(), want);
            }
        }
    }
}
