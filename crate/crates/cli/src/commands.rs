use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Args;
use failnet::corpus::{
    corpus_to_jsonl, default_taxonomy, generate_synthetic, read_corpus, stratified_split, uniform_counts, CorpusSplit,
    SynthSpec, Taxonomy,
};
use failnet::eval::{accuracy, compare_models, repeated_runs, EvalReport};
use failnet::models::{checkpoint, label_of, train_with_feature_texts, ModelConfig};
use failnet::nn::GradFault;
use failnet::selfcheck;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::manifest::{FileDigest, RunManifest};
use crate::options::{merge, DataFlags, ModelFlags};
use crate::usage;

fn read_input(path: &Path, flag: &str) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| usage!("{flag} {}: {e}", path.display()))
}

fn write_output(path: &Path, bytes: &[u8]) -> Result<FileDigest> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?;
    Ok(FileDigest::of(path, bytes))
}

fn required<'a, T>(v: &'a Option<T>, flag: &str) -> Result<&'a T> {
    v.as_ref().ok_or_else(|| usage!("--{flag} is required"))
}

fn load_taxonomy(path: Option<&Path>, manifest: &mut RunManifest) -> Result<Taxonomy> {
    match path {
        None => Ok(default_taxonomy()),
        Some(p) => {
            let bytes = read_input(p, "--taxonomy")?;
            manifest.inputs.push(FileDigest::of(p, &bytes));
            Ok(Taxonomy::read_csv(&bytes[..])?)
        }
    }
}

/// Read and split the corpus named by `data`, recording input digests.
fn load_split(data: &DataFlags, seed: u64, manifest: &mut RunManifest) -> Result<(Taxonomy, CorpusSplit)> {
    let taxonomy = load_taxonomy(data.taxonomy.as_deref(), manifest)?;
    let path = required(&data.corpus, "corpus")?;
    let bytes = read_input(path, "--corpus")?;
    manifest.inputs.push(FileDigest::of(path, &bytes));
    let cases = read_corpus(&bytes[..], path, &taxonomy)?;
    let counts: BTreeMap<String, usize> = match data.split_test_per_class {
        Some(n) => uniform_counts(taxonomy.entries().iter().map(|e| e.code.as_str()), n),
        None => taxonomy.test_counts(),
    };
    let split = stratified_split(&cases, &counts, seed)?;
    eprintln!("corpus: {} cases, {} train / {} test", cases.len(), split.train.len(), split.test.len());
    Ok((taxonomy, split))
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default)]
pub struct SynthArgs {
    /// JSON file with default values for these flags.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Keyword pool size per subclass.
    #[arg(long)]
    pub keywords: Option<usize>,
    /// Tokens per document.
    #[arg(long)]
    pub doc_length: Option<usize>,
    /// Probability of drawing a token from the subclass keyword pool.
    #[arg(long)]
    pub p: Option<f64>,
    /// Background pool size per field.
    #[arg(long)]
    pub background: Option<usize>,
    #[arg(long)]
    pub train_per_class: Option<usize>,
    #[arg(long)]
    pub test_per_class: Option<usize>,
    /// Taxonomy CSV; the built-in table when omitted.
    #[arg(long)]
    pub taxonomy: Option<PathBuf>,
    /// Output JSON Lines file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn synth(cli: SynthArgs) -> Result<ExitCode> {
    let a = merge(&cli, cli.config.as_deref())?;
    let mut spec = SynthSpec { seed: a.seed.unwrap_or(0), ..SynthSpec::default() };
    if let Some(p) = a.p {
        if !(p > 0.0 && p <= 1.0) {
            return Err(usage!("--p must be in (0, 1], got {p}"));
        }
        spec.keyword_prob = p;
    }
    for (flag, value, slot) in [
        ("keywords", a.keywords, &mut spec.keywords_per_class),
        ("doc-length", a.doc_length, &mut spec.doc_length),
        ("background", a.background, &mut spec.background_per_field),
        ("train-per-class", a.train_per_class, &mut spec.train_per_class),
        ("test-per-class", a.test_per_class, &mut spec.test_per_class),
    ] {
        match value {
            Some(0) => return Err(usage!("--{flag} must be at least 1")),
            Some(v) => *slot = v,
            None => {}
        }
    }
    let out = required(&a.out, "out")?;
    let mut manifest = RunManifest::start(serde_json::to_value(&spec)?, Some(spec.seed));
    let taxonomy = load_taxonomy(a.taxonomy.as_deref(), &mut manifest)?;
    let cases = generate_synthetic(&spec, &taxonomy)?;
    manifest.outputs.push(write_output(out, corpus_to_jsonl(&cases).as_bytes())?);
    manifest.finish(out)?;
    eprintln!("wrote {} cases over {} subclasses to {}", cases.len(), taxonomy.len(), out.display());
    Ok(ExitCode::SUCCESS)
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default)]
pub struct TrainArgs {
    /// JSON file with default values for these flags.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataFlags,
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelFlags,
    /// Seeds the split and the model.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Checkpoint path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn train(cli: TrainArgs) -> Result<ExitCode> {
    let a = merge(&cli, cli.config.as_deref())?;
    let seed = a.seed.unwrap_or(0);
    let config = a.model.to_config(seed)?;
    let out = required(&a.out, "out")?;
    let mut manifest = RunManifest::start(json!({ "model": &config, "data": &a.data }), Some(seed));
    let (taxonomy, split) = load_split(&a.data, seed, &mut manifest)?;
    let extra: Vec<String> = split.test.iter().map(|c| c.text.clone()).collect();
    let model = train_with_feature_texts(&split.train, &extra, &taxonomy, &config)?;
    for (epoch, loss) in model.history.iter().enumerate() {
        eprintln!("epoch {:>3}: mean loss {loss:.6}", epoch + 1);
    }
    if !split.test.is_empty() {
        let gold: Vec<&str> =
            split.test.iter().map(|c| label_of(c, config.level, &taxonomy)).collect::<failnet::Result<_>>()?;
        let predicted: Vec<String> =
            split.test.iter().map(|c| model.predict(&c.text).map(|p| p.label)).collect::<failnet::Result<_>>()?;
        let predicted: Vec<&str> = predicted.iter().map(String::as_str).collect();
        eprintln!("held-out accuracy ({}): {:.4}", config.level, accuracy(&predicted, &gold)?);
    }
    manifest.outputs.push(write_output(out, checkpoint::to_json(&model)?.as_bytes())?);
    manifest.finish(out)?;
    eprintln!("wrote {} checkpoint to {}", config.kind, out.display());
    Ok(ExitCode::SUCCESS)
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default)]
pub struct PredictArgs {
    /// JSON file with default values for these flags.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// A single text to classify.
    #[arg(long, conflicts_with = "input")]
    pub text: Option<String>,
    /// File with one text per line.
    #[arg(long)]
    pub input: Option<PathBuf>,
}

pub fn predict(cli: PredictArgs) -> Result<ExitCode> {
    let a = merge(&cli, cli.config.as_deref())?;
    let path = required(&a.checkpoint, "checkpoint")?;
    let bytes = read_input(path, "--checkpoint")?;
    let text = String::from_utf8(bytes).map_err(|e| usage!("--checkpoint {}: {e}", path.display()))?;
    let model = checkpoint::from_json(&text)?;
    let texts: Vec<String> = match (&a.text, &a.input) {
        (Some(t), None) => vec![t.clone()],
        (None, Some(p)) => {
            let file = std::fs::File::open(p).map_err(|e| usage!("--input {}: {e}", p.display()))?;
            BufReader::new(file).lines().collect::<std::io::Result<_>>()?
        }
        (Some(_), Some(_)) => return Err(usage!("--text and --input are mutually exclusive")),
        (None, None) => return Err(usage!("one of --text or --input is required")),
    };
    let mut stdout = std::io::stdout().lock();
    for t in &texts {
        let p = model.predict(t)?;
        serde_json::to_writer(&mut stdout, &p)?;
        stdout.write_all(b"\n")?;
    }
    stdout.flush()?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default)]
pub struct EvaluateArgs {
    /// JSON file with default values for these flags.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataFlags,
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelFlags,
    /// Number of independently seeded trainings [default: 5].
    #[arg(long)]
    pub runs: Option<usize>,
    /// Seeds the split; run i trains with mix(master seed, i).
    #[arg(long)]
    pub master_seed: Option<u64>,
    /// Include wall-clock timings in the report (they always go to the manifest).
    #[arg(long)]
    pub timings: bool,
    /// Report path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn evaluate(cli: EvaluateArgs) -> Result<ExitCode> {
    let a = merge(&cli, cli.config.as_deref())?;
    let runs = a.runs.unwrap_or(5);
    if runs == 0 {
        return Err(usage!("--runs must be at least 1"));
    }
    let master = a.master_seed.unwrap_or(0);
    let config: ModelConfig = a.model.to_config(0)?;
    let mut manifest = RunManifest::start(json!({ "model": &config, "data": &a.data, "runs": runs }), Some(master));
    let (taxonomy, split) = load_split(&a.data, master, &mut manifest)?;
    let report = repeated_runs(&split, &taxonomy, &config, runs, master)?;
    for r in &report.runs {
        eprintln!(
            "run {}: subclass {} major {:.4} loss {:.6}",
            r.run + 1,
            r.accuracy.subclass.map_or("-".into(), |v| format!("{v:.4}")),
            r.accuracy.major,
            r.final_loss
        );
    }
    manifest.timings = report.timings.map(serde_json::to_value).transpose()?;
    let shown = if a.timings { report.clone() } else { report.without_timings() };
    let text = shown.to_json()? + "\n";
    match &a.out {
        Some(out) => {
            manifest.outputs.push(write_output(out, text.as_bytes())?);
            manifest.finish(out)?;
        }
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default)]
pub struct CompareArgs {
    /// JSON file with default values for these flags.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Evaluation reports, one per model.
    #[arg(long, num_args = 1..)]
    pub reports: Vec<PathBuf>,
    /// Directory for comparison.json, accuracy.csv and mismatch.csv.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

pub fn compare(cli: CompareArgs) -> Result<ExitCode> {
    let a = merge(&cli, cli.config.as_deref())?;
    if a.reports.is_empty() {
        return Err(usage!("--reports needs at least one file"));
    }
    let out_dir = required(&a.out_dir, "out-dir")?;
    let mut manifest = RunManifest::start(serde_json::to_value(&a)?, None);
    let mut reports = Vec::new();
    for path in &a.reports {
        let bytes = read_input(path, "--reports")?;
        manifest.inputs.push(FileDigest::of(path, &bytes));
        let report: EvalReport =
            serde_json::from_slice(&bytes).map_err(|e| usage!("--reports {}: {e}", path.display()))?;
        reports.push(report);
    }
    let table = compare_models(&reports)?;
    let json_path = out_dir.join("comparison.json");
    manifest.outputs.push(write_output(&json_path, (table.to_json()? + "\n").as_bytes())?);
    manifest.outputs.push(write_output(&out_dir.join("accuracy.csv"), table.accuracy_csv().as_bytes())?);
    manifest.outputs.push(write_output(&out_dir.join("mismatch.csv"), table.mismatch_csv().as_bytes())?);
    manifest.finish(&json_path)?;
    for row in &table.rows {
        eprintln!(
            "{:<4} subclass {} (rank {}) major {:.4} (rank {})",
            row.model,
            row.mean.subclass.map_or("-".into(), |v| format!("{v:.4}")),
            row.ranks.subclass.map_or("-".into(), |r| r.to_string()),
            row.mean.major,
            row.ranks.major
        );
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default)]
pub struct SelfcheckArgs {
    /// JSON file with default values for these flags.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Random points per gradient check [default: 20].
    #[arg(long)]
    pub seeds: Option<u64>,
    /// Double one op's backward pass, to show the checks catch it.
    #[arg(long, hide = true)]
    pub inject_fault: Option<String>,
}

pub fn selfcheck(cli: SelfcheckArgs) -> Result<ExitCode> {
    let a = merge(&cli, cli.config.as_deref())?;
    let seeds = a.seeds.unwrap_or(20);
    if seeds == 0 {
        return Err(usage!("--seeds must be at least 1"));
    }
    let fault = match &a.inject_fault {
        Some(name) => {
            let op = selfcheck::parse_op(name).ok_or_else(|| usage!("--inject-fault: unknown op {name:?}"))?;
            Some(GradFault { op, factor: 2.0 })
        }
        None => None,
    };
    let results = selfcheck::run_all(seeds, fault)?;
    let mut stdout = std::io::stdout().lock();
    for r in &results {
        writeln!(
            stdout,
            "{:<4} {:<28} max_rel_error {:.3e}",
            if r.passed { "ok" } else { "FAIL" },
            r.name,
            r.max_rel_error
        )?;
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    if failed == 0 {
        eprintln!("selfcheck: all {} checks passed", results.len());
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("selfcheck: {failed} of {} checks failed", results.len());
        Ok(ExitCode::from(1))
    }
}
