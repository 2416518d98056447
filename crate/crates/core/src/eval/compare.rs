use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::report::{EvalReport, LevelAccuracy};
use super::MismatchBreakdown;
use crate::error::{Error, Result};
use crate::models::{LabelLevel, ModelKind};

/// Competition ranks (1, 1, 3, ...) by descending mean accuracy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ranks {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub subclass: Option<usize>,
    pub major: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub field: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub model: ModelKind,
    pub mean: LevelAccuracy,
    pub ranks: Ranks,
    /// Per-run accuracies, in run order.
    pub runs: Vec<LevelAccuracy>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mismatch: Option<MismatchBreakdown>,
}

/// Side-by-side view of reports that share a split and run count. Rows are
/// ordered mlp, cnn, rnn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub level: LabelLevel,
    pub split_digest: String,
    pub n_runs: usize,
    pub rows: Vec<ComparisonRow>,
}

fn competition_ranks(values: &[Option<f64>]) -> Vec<Option<usize>> {
    values
        .iter()
        .map(|v| v.map(|v| 1 + values.iter().flatten().filter(|&&o| o > v).count()))
        .collect()
}

pub fn compare_models(reports: &[EvalReport]) -> Result<ComparisonTable> {
    let first = reports.first().ok_or_else(|| Error::InvalidArgument("no reports to compare".into()))?;
    for r in reports {
        if r.split_digest != first.split_digest {
            return Err(Error::InconsistentReports(format!(
                "split {} differs from {}",
                r.split_digest, first.split_digest
            )));
        }
        if r.n_runs != first.n_runs {
            return Err(Error::InconsistentReports(format!("{} runs vs {}", r.n_runs, first.n_runs)));
        }
        if r.level != first.level {
            return Err(Error::InconsistentReports("reports mix label levels".into()));
        }
    }
    let mut sorted: Vec<&EvalReport> = reports.iter().collect();
    sorted.sort_by_key(|r| r.kind);
    if sorted.windows(2).any(|w| w[0].kind == w[1].kind) {
        return Err(Error::InconsistentReports("more than one report per model".into()));
    }
    let sub = competition_ranks(&sorted.iter().map(|r| r.mean.subclass).collect::<Vec<_>>());
    let major = competition_ranks(&sorted.iter().map(|r| Some(r.mean.major)).collect::<Vec<_>>());
    let field = competition_ranks(&sorted.iter().map(|r| r.mean.field).collect::<Vec<_>>());
    let rows = sorted
        .iter()
        .enumerate()
        .map(|(i, r)| ComparisonRow {
            model: r.kind,
            mean: r.mean,
            ranks: Ranks { subclass: sub[i], major: major[i].expect("always present"), field: field[i] },
            runs: r.runs.iter().map(|run| run.accuracy).collect(),
            mismatch: r.pooled,
        })
        .collect();
    Ok(ComparisonTable { level: first.level, split_digest: first.split_digest.clone(), n_runs: first.n_runs, rows })
}

impl ComparisonTable {
    /// `model,level,mean,run1..runN`; one line per model and reported level.
    pub fn accuracy_csv(&self) -> String {
        let mut out = String::from("model,level,mean");
        for i in 1..=self.n_runs {
            write!(out, ",run{i}").unwrap();
        }
        out.push('\n');
        type Get = fn(&LevelAccuracy) -> Option<f64>;
        let levels: [(&str, Get); 3] =
            [("subclass", |a| a.subclass), ("major", |a| Some(a.major)), ("field", |a| a.field)];
        for row in &self.rows {
            for (name, get) in levels {
                let Some(m) = get(&row.mean) else { continue };
                write!(out, "{},{name},{m}", row.model).unwrap();
                for run in &row.runs {
                    write!(out, ",{}", get(run).unwrap_or(f64::NAN)).unwrap();
                }
                out.push('\n');
            }
        }
        out
    }

    /// `model,granularity,rate` from the pooled mismatch breakdowns.
    pub fn mismatch_csv(&self) -> String {
        let mut out = String::from("model,granularity,rate\n");
        for row in &self.rows {
            let Some(b) = &row.mismatch else { continue };
            for (name, rate) in [
                ("field", b.field_rate),
                ("major", b.major_name_rate),
                ("subclass", b.subclass_rate),
                ("cross_field_same_major", b.cross_field_same_major_rate),
            ] {
                writeln!(out, "{},{name},{rate}", row.model).unwrap();
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
