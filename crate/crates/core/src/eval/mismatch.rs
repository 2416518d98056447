use serde::{Deserialize, Serialize};

use crate::corpus::Taxonomy;
use crate::error::{Error, Result};

/// Disagreements between predicted and gold subclasses at each level of
/// the taxonomy. Field and major class are derived from the codes; major
/// classes are compared by name, so `service-related` in one field matches
/// `service-related` in another.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct MismatchBreakdown {
    pub n_test: usize,
    pub subclass_mismatch: usize,
    pub major_name_mismatch: usize,
    pub field_mismatch: usize,
    /// Wrong field but the same major-class name.
    pub cross_field_same_major: usize,
    pub subclass_rate: f64,
    pub major_name_rate: f64,
    pub field_rate: f64,
    pub cross_field_same_major_rate: f64,
}

impl MismatchBreakdown {
    fn from_counts(n_test: usize, subclass: usize, major: usize, field: usize, cross: usize) -> Self {
        let rate = |c: usize| if n_test == 0 { 0.0 } else { c as f64 / n_test as f64 };
        Self {
            n_test,
            subclass_mismatch: subclass,
            major_name_mismatch: major,
            field_mismatch: field,
            cross_field_same_major: cross,
            // the complement of accuracy, bit for bit
            subclass_rate: if n_test == 0 { 0.0 } else { 1.0 - (n_test - subclass) as f64 / n_test as f64 },
            major_name_rate: rate(major),
            field_rate: rate(field),
            cross_field_same_major_rate: rate(cross),
        }
    }

    /// Counts summed over several breakdowns, rates recomputed.
    pub fn pooled(parts: &[MismatchBreakdown]) -> Self {
        let sum = |f: fn(&MismatchBreakdown) -> usize| parts.iter().map(f).sum::<usize>();
        Self::from_counts(
            sum(|b| b.n_test),
            sum(|b| b.subclass_mismatch),
            sum(|b| b.major_name_mismatch),
            sum(|b| b.field_mismatch),
            sum(|b| b.cross_field_same_major),
        )
    }
}

pub fn mismatch_analysis<S: AsRef<str>>(predicted: &[S], gold: &[S], taxonomy: &Taxonomy) -> Result<MismatchBreakdown> {
    if predicted.len() != gold.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions for {} gold labels",
            predicted.len(),
            gold.len()
        )));
    }
    let (mut subclass, mut major, mut field, mut cross) = (0, 0, 0, 0);
    for (p, g) in predicted.iter().zip(gold) {
        let p = taxonomy.lookup(p.as_ref())?;
        let g = taxonomy.lookup(g.as_ref())?;
        if p.code == g.code {
            continue;
        }
        subclass += 1;
        let same_major = p.major == g.major;
        if !same_major {
            major += 1;
        }
        if p.field != g.field {
            field += 1;
            if same_major {
                cross += 1;
            }
        }
    }
    Ok(MismatchBreakdown::from_counts(gold.len(), subclass, major, field, cross))
}
