use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One leaf of the failure taxonomy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaxonomyEntry {
    pub code: String,
    pub field: String,
    pub major: String,
    pub label: String,
    pub n_failures: usize,
    pub n_test: usize,
}

/// Subclass code → (field, major class, label) with the historical counts.
///
/// Field and major class of a case are always derived through this table,
/// never stored on the case itself.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Taxonomy {
    entries: Vec<TaxonomyEntry>,
    index: BTreeMap<String, usize>,
}

// (code, field, major, label, failures, test cases)
const DEFAULT_ROWS: &[(&str, &str, &str, &str, usize, usize)] = &[
    ("C-A1", "Communication", "service-related", "telecom service suspended", 510, 41),
    ("C-A2", "Communication", "service-related", "telecom service quality impaired", 122, 10),
    ("C-A3", "Communication", "service-related", "partial malfunction", 214, 17),
    ("C-B1", "Communication", "processing-related", "misclaim of charges", 78, 6),
    ("C-C1", "Communication", "information-related", "information leakage (mistakes)", 71, 6),
    ("C-C2", "Communication", "information-related", "data loss, incorrect registration", 7, 0),
    ("C-D1", "Communication", "equipment-related", "malfunction", 114, 9),
    ("C-D2", "Communication", "equipment-related", "safety problem", 33, 4),
    ("C-E1", "Communication", "cybercrime-related", "information leakage (crime)", 50, 4),
    ("C-E2", "Communication", "cybercrime-related", "information security crimes", 30, 3),
    ("C-F1", "Communication", "other", "other", 9, 0),
    ("F-A1", "Finance", "service-related", "all service stoppage", 38, 3),
    ("F-A2", "Finance", "service-related", "terminal stoppage", 193, 14),
    ("F-A3", "Finance", "service-related", "partial malfunction", 231, 17),
    ("F-E2", "Finance", "cybercrime-related", "information leakage (crime)", 37, 3),
    ("F-E3", "Finance", "cybercrime-related", "information security crimes", 24, 2),
];

/// The built-in Communication/Finance failure taxonomy.
///
/// Rows without a code, and coded rows with no recorded failures, are left
/// out since they carry no predictable label.
pub fn default_taxonomy() -> Taxonomy {
    let entries = DEFAULT_ROWS
        .iter()
        .map(|&(code, field, major, label, n_failures, n_test)| TaxonomyEntry {
            code: code.into(),
            field: field.into(),
            major: major.into(),
            label: label.into(),
            n_failures,
            n_test,
        })
        .collect();
    Taxonomy::new(entries).expect("built-in taxonomy is valid")
}

/// Prefix of a code up to (excluding) the first '-', or its first character.
fn field_prefix(code: &str) -> &str {
    match code.find('-') {
        Some(i) => &code[..i],
        None => code.get(..1).unwrap_or(""),
    }
}

impl Taxonomy {
    pub fn new(entries: Vec<TaxonomyEntry>) -> Result<Self> {
        let mut index = BTreeMap::new();
        let mut prefix_field: BTreeMap<&str, &str> = BTreeMap::new();
        let mut field_prefix_map: BTreeMap<&str, &str> = BTreeMap::new();
        for (i, e) in entries.iter().enumerate() {
            if e.code.is_empty() {
                return Err(Error::InvalidTaxonomy(format!("row {} has an empty code", i + 1)));
            }
            if index.insert(e.code.clone(), i).is_some() {
                return Err(Error::InvalidTaxonomy(format!("duplicate code {:?}", e.code)));
            }
            if e.n_test > e.n_failures {
                return Err(Error::InvalidTaxonomy(format!(
                    "{}: n_test {} exceeds n_failures {}",
                    e.code, e.n_test, e.n_failures
                )));
            }
            let prefix = field_prefix(&e.code);
            if let Some(f) = prefix_field.insert(prefix, &e.field) {
                if f != e.field {
                    return Err(Error::InvalidTaxonomy(format!(
                        "prefix {prefix:?} used by fields {f:?} and {:?}",
                        e.field
                    )));
                }
            }
            if let Some(p) = field_prefix_map.insert(&e.field, prefix) {
                if p != prefix {
                    return Err(Error::InvalidTaxonomy(format!(
                        "field {:?} uses prefixes {p:?} and {prefix:?}",
                        e.field
                    )));
                }
            }
        }
        Ok(Self { entries, index })
    }

    pub fn entries(&self) -> &[TaxonomyEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, code: &str) -> Option<&TaxonomyEntry> {
        self.index.get(code).map(|&i| &self.entries[i])
    }

    pub fn contains(&self, code: &str) -> bool {
        self.index.contains_key(code)
    }

    pub fn lookup(&self, code: &str) -> Result<&TaxonomyEntry> {
        self.get(code).ok_or_else(|| Error::UnknownCode(code.to_string()))
    }

    pub fn field_of(&self, code: &str) -> Result<&str> {
        Ok(&self.lookup(code)?.field)
    }

    pub fn major_of(&self, code: &str) -> Result<&str> {
        Ok(&self.lookup(code)?.major)
    }

    /// Distinct fields in first-appearance order.
    pub fn fields(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for e in &self.entries {
            if !out.contains(&e.field.as_str()) {
                out.push(&e.field);
            }
        }
        out
    }

    /// Per-code test counts from the `n_test` column.
    pub fn test_counts(&self) -> BTreeMap<String, usize> {
        self.entries.iter().map(|e| (e.code.clone(), e.n_test)).collect()
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let expected = ["code", "field", "major", "label", "n_failures", "n_test"];
        if headers.iter().ne(expected.iter().copied()) {
            return Err(Error::InvalidTaxonomy(format!(
                "header must be {}, found {}",
                expected.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let entries = rdr
            .deserialize::<TaxonomyEntry>()
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Self::new(entries)
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut wtr = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        for e in &self.entries {
            wtr.serialize(e)?;
        }
        let bytes = wtr.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}
