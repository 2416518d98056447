use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_lengths<S: AsRef<str>>(predicted: &[S], gold: &[S]) -> Result<()> {
    if predicted.len() != gold.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions for {} gold labels",
            predicted.len(),
            gold.len()
        )));
    }
    if gold.is_empty() {
        return Err(Error::InvalidArgument("accuracy of an empty list".into()));
    }
    Ok(())
}

/// Fraction of positions where `predicted` equals `gold`.
pub fn accuracy<S: AsRef<str>>(predicted: &[S], gold: &[S]) -> Result<f64> {
    check_lengths(predicted, gold)?;
    let hits = predicted.iter().zip(gold).filter(|(p, g)| p.as_ref() == g.as_ref()).count();
    Ok(hits as f64 / gold.len() as f64)
}

/// Gold × predicted counts over a sorted label set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    /// `counts[g][p]`: cases with gold `labels[g]` predicted as `labels[p]`.
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    /// Labels are the union of both lists, sorted.
    pub fn new<S: AsRef<str>>(predicted: &[S], gold: &[S]) -> Result<Self> {
        check_lengths(predicted, gold)?;
        let mut index: BTreeMap<&str, usize> =
            predicted.iter().chain(gold).map(|s| (s.as_ref(), 0)).collect();
        for (i, slot) in index.values_mut().enumerate() {
            *slot = i;
        }
        let n = index.len();
        let mut counts = vec![vec![0; n]; n];
        for (p, g) in predicted.iter().zip(gold) {
            counts[index[g.as_ref()]][index[p.as_ref()]] += 1;
        }
        Ok(Self { labels: index.into_keys().map(String::from).collect(), counts })
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> usize {
        (0..self.labels.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sum(&self, gold: &str) -> usize {
        self.labels
            .iter()
            .position(|l| l == gold)
            .map_or(0, |i| self.counts[i].iter().sum())
    }
}

/// Arithmetic mean, summed in sorted order so the result does not depend on
/// the order of `values`.
pub fn mean(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.iter().sum::<f64>() / sorted.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accuracy_examples() {
        let gold: Vec<String> = (0..200).map(|i| format!("g{i}")).collect();
        let mut pred = gold.clone();
        for p in pred.iter_mut().take(15) {
            *p = "wrong".into();
        }
        assert_eq!(accuracy(&pred, &gold).unwrap(), 0.925);
        assert_eq!(accuracy(&gold, &gold).unwrap(), 1.0);
        assert!(accuracy(&gold[..3], &gold[..2]).is_err());
        assert!(accuracy::<&str>(&[], &[]).is_err());
    }

    #[test]
    fn confusion_matrix_counts() {
        let gold = ["a", "a", "b", "c"];
        let pred = ["a", "b", "b", "a"];
        let m = ConfusionMatrix::new(&pred, &gold).unwrap();
        assert_eq!(m.labels, ["a", "b", "c"]);
        assert_eq!(m.counts, vec![vec![1, 1, 0], vec![0, 1, 0], vec![1, 0, 0]]);
        assert_eq!(m.total(), 4);
        assert_eq!(m.trace(), 2);
        assert_eq!(m.row_sum("a"), 2);
        assert_eq!(m.row_sum("z"), 0);
    }

    #[test]
    fn mean_is_order_free() {
        let v = [0.1, 0.7, 0.3, 1e-17, 0.9];
        let mut r = v;
        r.reverse();
        assert_eq!(mean(&v).to_bits(), mean(&r).to_bits());
        assert!((mean(&v) - 2.0 / 5.0).abs() < 1e-12);
    }
}
