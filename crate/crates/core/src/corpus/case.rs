use std::collections::HashSet;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Taxonomy;
use crate::error::{Error, Result};

/// One failure report with its gold subclass code.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FailureCase {
    pub id: String,
    pub text: String,
    pub subclass: String,
}

impl FailureCase {
    pub fn new(id: impl Into<String>, text: impl Into<String>, subclass: impl Into<String>) -> Self {
        Self { id: id.into(), text: text.into(), subclass: subclass.into() }
    }
}

/// Read a JSON Lines corpus, validating every record against `taxonomy`.
/// Whitespace-only lines are skipped; line numbers are physical (1-based).
pub fn read_corpus<R: Read>(reader: R, source: &Path, taxonomy: &Taxonomy) -> Result<Vec<FailureCase>> {
    let mut cases = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let case: FailureCase = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: source.to_path_buf(),
            line: line_no,
            message: e.to_string(),
        })?;
        if !taxonomy.contains(&case.subclass) {
            return Err(Error::UnknownSubclass { line: line_no, code: case.subclass });
        }
        if case.text.trim().is_empty() {
            return Err(Error::EmptyText { line: line_no, id: case.id });
        }
        if !seen.insert(case.id.clone()) {
            return Err(Error::DuplicateId { line: line_no, id: case.id });
        }
        cases.push(case);
    }
    Ok(cases)
}

pub fn load_corpus(path: &Path, taxonomy: &Taxonomy) -> Result<Vec<FailureCase>> {
    read_corpus(std::fs::File::open(path)?, path, taxonomy)
}

pub fn write_corpus<W: Write>(mut out: W, cases: &[FailureCase]) -> Result<()> {
    for case in cases {
        serde_json::to_writer(&mut out, case)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn corpus_to_jsonl(cases: &[FailureCase]) -> String {
    let mut buf = Vec::new();
    write_corpus(&mut buf, cases).expect("writing to memory");
    String::from_utf8(buf).expect("json is utf-8")
}
