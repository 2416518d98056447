use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::metrics::{accuracy, mean, ConfusionMatrix};
use super::mismatch::{mismatch_analysis, MismatchBreakdown};
use crate::corpus::{CorpusSplit, Taxonomy};
use crate::error::{Error, Result};
use crate::models::{label_of, train_with_feature_texts, LabelLevel, ModelConfig, ModelKind, TrainedModel};
use crate::seed;

/// Accuracy at each taxonomy level. A subclass-level model reports all
/// three, with major class and field derived from the predicted code. A
/// major-level model only reports the major class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelAccuracy {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub subclass: Option<f64>,
    pub major: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub field: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub run: usize,
    pub seed: u64,
    pub accuracy: LevelAccuracy,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub breakdown: Option<MismatchBreakdown>,
    pub confusion: ConfusionMatrix,
    pub final_loss: f64,
}

/// Wall-clock measurements. Excluded from determinism comparisons.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    /// Featurization, training and prediction over all runs.
    pub total_s: f64,
    pub mean_inquiry_s: f64,
    pub max_inquiry_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub kind: ModelKind,
    pub level: LabelLevel,
    pub n_runs: usize,
    pub master_seed: u64,
    pub split_digest: String,
    pub n_train: usize,
    pub n_test: usize,
    pub runs: Vec<RunResult>,
    pub mean: LevelAccuracy,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub pooled: Option<MismatchBreakdown>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub timings: Option<Timings>,
}

impl EvalReport {
    /// The report minus its timings; identical inputs give identical values.
    pub fn without_timings(&self) -> EvalReport {
        EvalReport { timings: None, ..self.clone() }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Rebuild the aggregate fields from `runs`, in run-index order.
    fn aggregate(mut self) -> Self {
        self.runs.sort_by_key(|r| r.run);
        let col = |f: fn(&LevelAccuracy) -> Option<f64>| -> Option<f64> {
            let v: Option<Vec<f64>> = self.runs.iter().map(|r| f(&r.accuracy)).collect();
            v.map(|v| mean(&v))
        };
        self.mean = LevelAccuracy {
            subclass: col(|a| a.subclass),
            major: col(|a| Some(a.major)).unwrap_or(0.0),
            field: col(|a| a.field),
        };
        let parts: Option<Vec<MismatchBreakdown>> = self.runs.iter().map(|r| r.breakdown).collect();
        self.pooled = parts.map(|p| MismatchBreakdown::pooled(&p));
        self
    }
}

/// Train `n_runs` models on the fixed `split`, run `i` seeded with
/// `mix(master_seed, i)`, and score each on the test partition.
pub fn repeated_runs(
    split: &CorpusSplit,
    taxonomy: &Taxonomy,
    config: &ModelConfig,
    n_runs: usize,
    master_seed: u64,
) -> Result<EvalReport> {
    repeated_runs_observed(split, taxonomy, config, n_runs, master_seed, |_, _| Ok(()))
}

/// As [`repeated_runs`], handing each trained model to `observe` along with
/// its run index before it is dropped.
pub fn repeated_runs_observed<F>(
    split: &CorpusSplit,
    taxonomy: &Taxonomy,
    config: &ModelConfig,
    n_runs: usize,
    master_seed: u64,
    mut observe: F,
) -> Result<EvalReport>
where
    F: FnMut(usize, &TrainedModel) -> Result<()>,
{
    if n_runs == 0 {
        return Err(Error::InvalidConfig("n_runs must be at least 1".into()));
    }
    if split.test.is_empty() {
        return Err(Error::InvalidArgument("test partition is empty".into()));
    }
    let start = Instant::now();
    let extra: Vec<String> = split.test.iter().map(|c| c.text.clone()).collect();
    let gold: Vec<String> = split
        .test
        .iter()
        .map(|c| label_of(c, config.level, taxonomy).map(String::from))
        .collect::<Result<_>>()?;
    let derived = |f: for<'a> fn(&'a Taxonomy, &str) -> Result<&'a str>, codes: &[String]| -> Result<Vec<String>> {
        codes.iter().map(|c| f(taxonomy, c).map(String::from)).collect()
    };
    let mut runs = Vec::with_capacity(n_runs);
    let mut latencies = Vec::with_capacity(n_runs * split.test.len());
    for run in 0..n_runs {
        let run_seed = seed::mix(master_seed, run as u64);
        let cfg = ModelConfig { seed: run_seed, ..config.clone() };
        let model = train_with_feature_texts(&split.train, &extra, taxonomy, &cfg)?;
        observe(run, &model)?;
        let mut predicted = Vec::with_capacity(split.test.len());
        for case in &split.test {
            let p = model.predict(&case.text)?;
            latencies.push(p.latency_s);
            predicted.push(p.label);
        }
        let (acc, breakdown) = match config.level {
            LabelLevel::Subclass => {
                let major = accuracy(&derived(Taxonomy::major_of, &predicted)?, &derived(Taxonomy::major_of, &gold)?)?;
                let field = accuracy(&derived(Taxonomy::field_of, &predicted)?, &derived(Taxonomy::field_of, &gold)?)?;
                let acc = LevelAccuracy { subclass: Some(accuracy(&predicted, &gold)?), major, field: Some(field) };
                (acc, Some(mismatch_analysis(&predicted, &gold, taxonomy)?))
            }
            LabelLevel::Major => (LevelAccuracy { subclass: None, major: accuracy(&predicted, &gold)?, field: None }, None),
        };
        runs.push(RunResult {
            run,
            seed: run_seed,
            accuracy: acc,
            breakdown,
            confusion: ConfusionMatrix::new(&predicted, &gold)?,
            final_loss: model.history.last().copied().unwrap_or(f64::NAN),
        });
    }
    let timings = Timings {
        total_s: start.elapsed().as_secs_f64(),
        mean_inquiry_s: mean(&latencies),
        max_inquiry_s: latencies.iter().copied().fold(0.0, f64::max),
    };
    let report = EvalReport {
        kind: config.kind,
        level: config.level,
        n_runs,
        master_seed,
        split_digest: split.digest(),
        n_train: split.train.len(),
        n_test: split.test.len(),
        runs,
        mean: LevelAccuracy { subclass: None, major: 0.0, field: None },
        pooled: None,
        timings: Some(timings),
    };
    Ok(report.aggregate())
}
