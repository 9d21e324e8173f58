//! Text embedding tables.
//!
//! Two layouts are accepted, detected from the first line:
//! - `EMB <count> <dim>` followed by `<key> <v1> ... <vdim>` rows;
//! - word-vector text, `<key> <v1> ... <vdim>` per row, optionally preceded
//!   by a `<count> <dim>` line.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EmbeddingTable {
    pub dim: usize,
    pub vectors: BTreeMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, key: &str) -> Option<&[f64]> {
        self.vectors.get(key).map(Vec::as_slice)
    }
}

/// What the keys of an external embedding table refer to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KeySpace {
    /// Frame segment ids.
    Segment,
    /// Class labels.
    Class,
}

/// Loads an `EMB`-format table of externally produced embeddings.
pub fn load_external_embeddings(path: &Path, space: KeySpace) -> Result<EmbeddingTable> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut first = String::new();
    let mut reader = BufReader::new(file);
    reader
        .read_line(&mut first)
        .map_err(|e| Error::io(path, e))?;
    if !first.trim_end().starts_with("EMB ") && !first.trim().is_empty() {
        return Err(Error::parse(path, 1, "expected `EMB <count> <dim>` header"));
    }
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let (table, _) = read_embedding_table(BufReader::new(file), path, |_| true)?;
    if space == KeySpace::Segment {
        if let Some(bad) = table.vectors.keys().find(|k| k.parse::<u32>().is_err()) {
            return Err(Error::parse(
                path,
                0,
                format!("segment key `{bad}` is not an integer"),
            ));
        }
    }
    Ok(table)
}

/// Streams a table, keeping only rows whose key passes `keep`. Duplicate keys
/// and dimension changes are detected over all rows. Returns the table and
/// the number of data rows read.
pub fn read_embedding_table(
    reader: impl BufRead,
    path: &Path,
    mut keep: impl FnMut(&str) -> bool,
) -> Result<(EmbeddingTable, usize)> {
    let mut table = EmbeddingTable::default();
    let mut dim: Option<usize> = None;
    let mut declared_count: Option<usize> = None;
    let mut seen: HashSet<String> = HashSet::new();
    let mut rows = 0usize;

    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let lineno = idx + 1;
        let trimmed = line.trim_end();
        if trimmed.is_empty() {
            continue;
        }
        let mut fields = trimmed.split(' ');
        let key = fields.next().unwrap_or_default();
        if idx == 0 {
            if key == "EMB" {
                let nums: Vec<&str> = fields.collect();
                let (c, d) = parse_header(&nums)
                    .ok_or_else(|| Error::parse(path, lineno, "malformed EMB header"))?;
                declared_count = Some(c);
                dim = Some(d);
                continue;
            }
            let nums: Vec<&str> = trimmed.split(' ').collect();
            if let Some((c, d)) = parse_header(&nums) {
                declared_count = Some(c);
                dim = Some(d);
                continue;
            }
        }
        rows += 1;
        let values: Vec<f64> = fields
            .map(|s| {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::parse(path, lineno, format!("bad component `{s}`")))
            })
            .collect::<Result<_>>()?;
        match dim {
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(Error::Dimension(format!(
                    "{}:{lineno}: row `{key}` has {} components, expected {d}",
                    path.display(),
                    values.len()
                )))
            }
            _ => {}
        }
        if values.is_empty() {
            return Err(Error::parse(path, lineno, "row has no components"));
        }
        if !seen.insert(key.to_string()) {
            return Err(Error::DuplicateKey(key.to_string()));
        }
        if keep(key) {
            table.vectors.insert(key.to_string(), values);
        }
    }
    if let Some(c) = declared_count {
        if c != rows {
            return Err(Error::parse(
                path,
                1,
                format!("header declares {c} rows, found {rows}"),
            ));
        }
    }
    table.dim = dim.unwrap_or(0);
    Ok((table, rows))
}

fn parse_header(fields: &[&str]) -> Option<(usize, usize)> {
    match fields {
        [c, d] => Some((c.parse().ok()?, d.parse().ok()?)),
        _ => None,
    }
}
