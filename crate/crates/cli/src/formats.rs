//! Ontology and dataset files.
//!
//! An ontology file lists one leaf code per line; blank lines and text after
//! `#` are ignored. A dataset is JSON lines, one admission per line:
//! `{"codes": ["AB1"], "tokens": [4, 17], "label": 1}`.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use codetext_core::data::AdmissionRecord;
use codetext_core::OntologyGraph;
use serde::{Deserialize, Serialize};

pub fn parse_ontology(text: &str) -> Result<Vec<String>> {
    let mut codes = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if line.split_whitespace().count() != 1 {
            bail!("line {}: expected a single code, got {line:?}", i + 1);
        }
        codes.push(line.to_string());
    }
    Ok(codes)
}

pub fn format_ontology(codes: &[String]) -> String {
    let mut out = format!("# codetext ontology, {} codes\n", codes.len());
    for c in codes {
        out.push_str(c);
        out.push('\n');
    }
    out
}

pub fn read_ontology(path: &Path) -> Result<(Vec<String>, OntologyGraph)> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let codes = parse_ontology(&text).with_context(|| format!("parsing {}", path.display()))?;
    let graph = OntologyGraph::build(&codes).with_context(|| format!("building ontology from {}", path.display()))?;
    Ok((codes, graph))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordLine {
    codes: Vec<String>,
    tokens: Vec<u32>,
    label: u8,
}

/// What a dataset is checked against while loading.
#[derive(Debug, Clone, Copy, Default)]
pub struct DatasetCheck<'a> {
    /// Every code must be one of this ontology's leaves.
    pub graph: Option<&'a OntologyGraph>,
    /// Every token must be below this vocabulary size.
    pub vocab_size: Option<usize>,
}

/// Parses a dataset; an empty text is an empty dataset.
pub fn parse_dataset(text: &str, check: DatasetCheck<'_>) -> Result<Vec<AdmissionRecord>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let r: RecordLine = serde_json::from_str(line).with_context(|| format!("line {}", i + 1))?;
        if r.label > 1 {
            bail!("line {}: label must be 0 or 1, got {}", i + 1, r.label);
        }
        if r.codes.is_empty() {
            bail!("line {}: record has no codes", i + 1);
        }
        if let Some(g) = check.graph {
            if let Some(c) = r.codes.iter().find(|c| g.leaf_id(c).is_none()) {
                bail!("line {}: unknown code {c:?}", i + 1);
            }
        }
        if let Some(v) = check.vocab_size {
            if let Some(t) = r.tokens.iter().find(|&&t| t as usize >= v) {
                bail!("line {}: token {t} outside the vocabulary of size {v}", i + 1);
            }
        }
        out.push(AdmissionRecord {
            codes: r.codes,
            tokens: r.tokens,
            label: r.label,
        });
    }
    Ok(out)
}

pub fn format_dataset(records: &[AdmissionRecord]) -> String {
    let mut out = String::new();
    for r in records {
        let line = RecordLine {
            codes: r.codes.clone(),
            tokens: r.tokens.clone(),
            label: r.label,
        };
        out.push_str(&serde_json::to_string(&line).expect("plain struct serializes"));
        out.push('\n');
    }
    out
}

pub fn read_dataset(path: &Path, check: DatasetCheck<'_>) -> Result<Vec<AdmissionRecord>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_dataset(&text, check).with_context(|| format!("parsing {}", path.display()))
}

/// Writes `contents`, creating parent directories.
pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}
