//! Built-in verification: finite-difference gradient checks for every tape
//! op and each full model loss, plus a brute-force TF-IDF comparison.

use std::collections::HashMap;

use serde::Serialize;

use crate::error::Result;
use crate::models::{forward, Input, LabelLevel, ModelConfig, ModelKind};
use crate::nn::{gradient_check_with_fault, GradFault, Mode, OpKind, Tape, Tensor, Var};
use crate::seed;
use crate::text::{build_vocabulary, fit_tfidf, EncodedSequence};

pub const STEP: f64 = 1e-6;
pub const TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub max_rel_error: f64,
    pub seeds: usize,
    pub passed: bool,
}

type CheckFn = fn(&mut Tape, &[Var], u64) -> Result<Var>;

struct GradCase {
    name: &'static str,
    shapes: &'static [&'static [usize]],
    f: CheckFn,
}

fn rand(shape: &[usize], s: u64) -> Tensor {
    Tensor::uniform(shape, 1.0, &mut seed::rng(s))
}

/// Reduce `x` to a scalar through fixed random weights.
fn weigh(t: &mut Tape, x: Var, s: u64) -> Result<Var> {
    let w = t.constant(rand(t.value(x).shape(), seed::mix(s, 99)));
    let xw = t.mul(x, w)?;
    Ok(t.sum(xw))
}

fn small_config(kind: ModelKind) -> ModelConfig {
    ModelConfig {
        mlp_hidden: [5, 4],
        cnn_widths: vec![2, 3],
        cnn_maps: 2,
        rnn_hidden: 3,
        max_len: 6,
        dropout: 0.3,
        ..ModelConfig::new(kind, LabelLevel::Subclass)
    }
}

fn sequence() -> EncodedSequence {
    EncodedSequence { ids: vec![2, 5, 3, 7, 1, 0], true_length: 5 }
}

const CASES: &[GradCase] = &[
    GradCase {
        name: "affine",
        shapes: &[&[3, 4], &[4, 2], &[2]],
        f: |t, v, s| {
            let y = t.affine(v[0], v[1], v[2])?;
            weigh(t, y, s)
        },
    },
    GradCase {
        name: "relu",
        shapes: &[&[5, 3]],
        f: |t, v, s| {
            let y = t.relu(v[0]);
            weigh(t, y, s)
        },
    },
    GradCase {
        name: "dropout",
        shapes: &[&[12]],
        f: |t, v, s| {
            let y = t.dropout(v[0], 0.4, Mode::Train, &mut seed::rng(s))?;
            weigh(t, y, s)
        },
    },
    GradCase {
        name: "conv1d_bank",
        shapes: &[&[7, 3], &[2, 3, 2], &[2], &[3, 3, 2], &[2]],
        f: |t, v, s| {
            let outs = t.conv1d_bank(v[0], &[(v[1], v[2]), (v[3], v[4])])?;
            let terms = outs.into_iter().map(|o| weigh(t, o, s)).collect::<Result<Vec<_>>>()?;
            t.add_n(&terms)
        },
    },
    GradCase {
        name: "max_over_time",
        shapes: &[&[5, 4]],
        f: |t, v, s| {
            let y = t.max_over_time(v[0])?;
            weigh(t, y, s)
        },
    },
    GradCase {
        name: "lstm_sequence",
        shapes: &[&[6, 3], &[3, 16], &[4, 16], &[16], &[4], &[4]],
        f: |t, v, s| {
            let len = 1 + (s % 6) as usize;
            let h = t.lstm_sequence(v[0], len, v[1], v[2], v[3], v[4], v[5])?;
            weigh(t, h, s)
        },
    },
    GradCase {
        name: "softmax_cross_entropy",
        shapes: &[&[5]],
        f: |t, v, s| t.softmax_cross_entropy(v[0], (s % 5) as usize),
    },
    GradCase {
        name: "softmax_cross_entropy_mean",
        shapes: &[&[3, 4]],
        f: |t, v, s| t.softmax_cross_entropy_mean(v[0], &[(s % 4) as usize, 0, 3]),
    },
    GradCase {
        name: "gather",
        shapes: &[&[5, 3]],
        f: |t, v, s| {
            let y = t.gather(v[0], &[4, 0, 4, 2])?;
            weigh(t, y, s)
        },
    },
    GradCase {
        name: "concat_add_n_scale_mul_sum",
        shapes: &[&[3], &[2], &[3]],
        f: |t, v, s| {
            let c = t.concat(&[v[0], v[1]]);
            let a = t.add_n(&[v[0], v[2], v[0]])?;
            let m = t.mul(a, v[2])?;
            let m = t.scale(m, -1.5);
            let x = weigh(t, c, s)?;
            let y = t.sum(m);
            t.add_n(&[x, y])
        },
    },
    GradCase {
        name: "mlp_loss",
        shapes: &[&[6, 5], &[5], &[5, 4], &[4], &[4, 3], &[3]],
        f: |t, v, s| {
            let cfg = small_config(ModelKind::Mlp);
            let x = rand(&[3, 6], seed::mix(s, 7));
            let logits = forward(&cfg, t, v, Input::Features(&x), Mode::Train, &mut seed::rng(s))?;
            t.softmax_cross_entropy_mean(logits, &[0, 2, 1])
        },
    },
    GradCase {
        name: "cnn_loss",
        shapes: &[&[8, 3], &[2, 3, 2], &[2], &[3, 3, 2], &[2], &[4, 3], &[3]],
        f: |t, v, s| {
            let cfg = small_config(ModelKind::Cnn);
            let logits = forward(&cfg, t, v, Input::Sequence(&sequence()), Mode::Train, &mut seed::rng(s))?;
            t.softmax_cross_entropy(logits, (s % 3) as usize)
        },
    },
    GradCase {
        name: "rnn_loss",
        shapes: &[&[8, 3], &[3, 12], &[3, 12], &[12], &[3, 3], &[3]],
        f: |t, v, s| {
            let cfg = small_config(ModelKind::Rnn);
            let logits = forward(&cfg, t, v, Input::Sequence(&sequence()), Mode::Train, &mut seed::rng(s))?;
            t.softmax_cross_entropy(logits, (s % 3) as usize)
        },
    },
];

/// Names of the gradient checks, in run order.
pub fn gradient_check_names() -> Vec<&'static str> {
    CASES.iter().map(|c| c.name).collect()
}

/// Run every gradient check over `n_seeds` random points. With `fault`,
/// the named op's backward pass is scaled, which must make checks fail.
pub fn run_gradient_checks(n_seeds: u64, fault: Option<GradFault>) -> Result<Vec<CheckResult>> {
    let fault = fault.unwrap_or(GradFault { op: OpKind::Leaf, factor: 1.0 });
    CASES
        .iter()
        .enumerate()
        .map(|(k, case)| {
            let mut worst: f64 = 0.0;
            let mut passed = true;
            for s in 0..n_seeds {
                let s = seed::mix(k as u64, s);
                let point: Vec<Tensor> =
                    case.shapes.iter().enumerate().map(|(i, shape)| rand(shape, seed::mix(s, i as u64))).collect();
                let f = |t: &mut Tape, v: &[Var]| (case.f)(t, v, s);
                let r = gradient_check_with_fault(f, &point, STEP, TOLERANCE, fault)?;
                worst = worst.max(r.max_rel_error);
                passed &= r.passed;
            }
            Ok(CheckResult { name: case.name.to_string(), max_rel_error: worst, seeds: n_seeds as usize, passed })
        })
        .collect()
}

fn tokens(doc: &str) -> Vec<String> {
    doc.split_whitespace().map(String::from).collect()
}

/// Largest per-component gap between [`crate::text::TfIdfModel::transform`]
/// and a direct evaluation of the formulas, over a few hand-built corpora.
pub fn tfidf_oracle_error() -> Result<f64> {
    let corpora: [&[&str]; 3] = [
        &["a b", "a", "b c c d", "e a", "d d d"],
        &["x y z x", "y"],
        &["p q r", "q r s", "r s t", "s t p"],
    ];
    let mut worst: f64 = 0.0;
    for corpus in corpora {
        let docs: Vec<Vec<String>> = corpus.iter().map(|d| tokens(d)).collect();
        let vocab = build_vocabulary(&docs, 1)?;
        let model = fit_tfidf(&docs, &vocab);
        let n = docs.len() as f64;
        for probe in docs.iter().chain([&tokens("a zz a q"), &Vec::new()]) {
            let got = model.transform(probe);
            let mut raw: HashMap<&str, f64> = HashMap::new();
            for (_, tok) in vocab.iter() {
                let count = probe.iter().filter(|t| *t == tok).count() as f64;
                let df = docs.iter().filter(|d| d.iter().any(|t| t == tok)).count() as f64;
                let tf = if probe.is_empty() { 0.0 } else { count / probe.len() as f64 };
                raw.insert(tok, tf * (((1.0 + n) / (1.0 + df)).ln() + 1.0));
            }
            let norm = raw.values().map(|v| v * v).sum::<f64>().sqrt();
            for (id, tok) in vocab.iter() {
                let want = if norm > 0.0 { raw[tok] / norm } else { 0.0 };
                worst = worst.max((got[id - 2] - want).abs());
            }
        }
    }
    Ok(worst)
}

/// Every gradient check plus the TF-IDF oracle (tolerance 1e-12).
pub fn run_all(n_seeds: u64, fault: Option<GradFault>) -> Result<Vec<CheckResult>> {
    let mut out = run_gradient_checks(n_seeds, fault)?;
    let err = tfidf_oracle_error()?;
    out.push(CheckResult { name: "tfidf_oracle".into(), max_rel_error: err, seeds: 3, passed: err <= 1e-12 });
    Ok(out)
}

/// Parse an op name as used by `GradFault` (`affine`, `lstm`, ...).
pub fn parse_op(name: &str) -> Option<OpKind> {
    serde_json::from_value(serde_json::Value::String(name.to_string())).ok()
}
