use std::collections::BTreeSet;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::Deserialize;

use super::{ConceptId, KnowledgeGraph, Relation};
use crate::error::{Error, Result};

/// Row accounting for one dump. `retained + filtered + malformed == total_rows`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ParseReport {
    pub total_rows: usize,
    pub retained: usize,
    /// Well-formed rows rejected by the language or relation filter.
    pub filtered: usize,
    pub malformed: usize,
}

impl ParseReport {
    pub fn skipped(&self) -> usize {
        self.filtered + self.malformed
    }
}

#[derive(Deserialize)]
struct Metadata {
    weight: Option<f64>,
}

/// Streams a tab-separated assertion dump
/// (`assertion \t relation \t start \t end \t metadata-json`), keeping rows
/// whose endpoints are both in `language` and whose relation is whitelisted.
/// Malformed rows are counted and skipped.
pub fn parse_dump(
    path: &Path,
    language: &str,
    relations: &BTreeSet<String>,
) -> Result<(KnowledgeGraph, ParseReport)> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_dump_reader(
        BufReader::with_capacity(1 << 20, file),
        path,
        language,
        relations,
    )
}

pub fn parse_dump_reader(
    mut reader: impl BufRead,
    path: &Path,
    language: &str,
    relations: &BTreeSet<String>,
) -> Result<(KnowledgeGraph, ParseReport)> {
    let mut kg = KnowledgeGraph::new(language);
    let mut report = ParseReport::default();
    let mut line = String::new();
    loop {
        line.clear();
        let n = reader
            .read_line(&mut line)
            .map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        let row = line.strip_suffix('\n').unwrap_or(&line);
        let row = row.strip_suffix('\r').unwrap_or(row);
        report.total_rows += 1;
        match classify(row, language, relations) {
            Row::Keep(r) => {
                report.retained += 1;
                kg.add_relation(r);
            }
            Row::Filtered => report.filtered += 1,
            Row::Malformed => report.malformed += 1,
        }
    }
    Ok((kg, report))
}

enum Row {
    Keep(Relation),
    Filtered,
    Malformed,
}

fn classify(row: &str, language: &str, relations: &BTreeSet<String>) -> Row {
    let mut fields = row.split('\t');
    let (Some(_assertion), Some(rel), Some(start), Some(end), Some(meta), None) = (
        fields.next(),
        fields.next(),
        fields.next(),
        fields.next(),
        fields.next(),
        fields.next(),
    ) else {
        return Row::Malformed;
    };
    let Some(name) = rel
        .strip_prefix("/r/")
        .filter(|n| !n.is_empty() && !n.contains('/'))
    else {
        return Row::Malformed;
    };
    let (Some(src), Some(dst)) = (ConceptId::from_uri(start), ConceptId::from_uri(end)) else {
        return Row::Malformed;
    };
    if src.language() != language || dst.language() != language || !relations.contains(name) {
        return Row::Filtered;
    }
    let weight = if meta.contains("\"weight\"") {
        match serde_json::from_str::<Metadata>(meta) {
            Ok(Metadata { weight: Some(w) }) if w.is_finite() && w > 0.0 => w,
            Ok(Metadata { weight: None }) => 1.0,
            _ => return Row::Malformed,
        }
    } else {
        // still has to be a JSON object
        match serde_json::from_str::<serde_json::Map<String, serde_json::Value>>(meta) {
            Ok(_) => 1.0,
            Err(_) => return Row::Malformed,
        }
    };
    Row::Keep(Relation {
        src,
        relation: name.to_string(),
        dst,
        weight,
    })
}
