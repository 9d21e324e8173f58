//! Common-sense knowledge graph: ConceptNet-style assertion dumps, n-hop
//! subgraph extraction, concept embeddings and grounding of global objects.

mod dump;
mod embed;
mod extract;
mod link;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use dump::{parse_dump, parse_dump_reader, ParseReport};
pub use embed::{load_numberbatch, spectral_embed, EmbeddingCoverage};
pub use extract::{extract_subgraph, ExtractReport, ExtractionSpec};
pub use link::{ensure_knowledge_layer, link_global_to_concepts, LinkReport};

/// Relations kept by default: the physically grounded part of ConceptNet.
pub const DEFAULT_RELATIONS: [&str; 7] = [
    "AtLocation",
    "UsedFor",
    "PartOf",
    "MadeOf",
    "LocatedNear",
    "IsA",
    "RelatedTo",
];

pub fn default_relations() -> BTreeSet<String> {
    DEFAULT_RELATIONS.iter().map(|s| s.to_string()).collect()
}

/// Normalized concept URI of the form `/c/<lang>/<term>`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ConceptId(String);

impl ConceptId {
    /// Parses `/c/<lang>/<term>[/...]`, dropping trailing path segments and
    /// lowercasing the term.
    pub fn from_uri(uri: &str) -> Option<ConceptId> {
        let rest = uri.strip_prefix("/c/")?;
        let mut parts = rest.split('/');
        let lang = parts.next()?;
        let term = parts.next()?;
        if lang.is_empty()
            || !lang.chars().all(|c| c.is_ascii_lowercase() || c == '-')
            || term.is_empty()
            || term.chars().any(char::is_whitespace)
        {
            return None;
        }
        Some(ConceptId(format!("/c/{lang}/{}", term.to_lowercase())))
    }

    /// Concept for a class label: trimmed, lowercased, whitespace runs
    /// replaced by underscores.
    pub fn from_label(label: &str, language: &str) -> Option<ConceptId> {
        let term = label
            .split_whitespace()
            .collect::<Vec<_>>()
            .join("_")
            .to_lowercase();
        if term.is_empty() || term.contains('/') {
            return None;
        }
        ConceptId::from_uri(&format!("/c/{language}/{term}"))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn language(&self) -> &str {
        self.0[3..].split('/').next().unwrap_or_default()
    }

    pub fn term(&self) -> &str {
        self.0[3..].split('/').nth(1).unwrap_or_default()
    }
}

impl fmt::Display for ConceptId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl TryFrom<String> for ConceptId {
    type Error = String;
    fn try_from(s: String) -> std::result::Result<Self, String> {
        ConceptId::from_uri(&s)
            .filter(|c| c.0 == s)
            .ok_or_else(|| format!("`{s}` is not a normalized concept id"))
    }
}

impl From<ConceptId> for String {
    fn from(c: ConceptId) -> String {
        c.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Relation {
    pub src: ConceptId,
    pub relation: String,
    pub dst: ConceptId,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KnowledgeGraph {
    pub language: String,
    pub concepts: BTreeSet<ConceptId>,
    pub relations: Vec<Relation>,
    #[serde(default)]
    pub embeddings: BTreeMap<ConceptId, Vec<f64>>,
}

impl KnowledgeGraph {
    pub fn new(language: impl Into<String>) -> Self {
        Self {
            language: language.into(),
            ..Self::default()
        }
    }

    pub fn embedding_dim(&self) -> Option<usize> {
        self.embeddings.values().next().map(Vec::len)
    }

    pub fn add_relation(&mut self, relation: Relation) {
        self.concepts.insert(relation.src.clone());
        self.concepts.insert(relation.dst.clone());
        self.relations.push(relation);
    }

    pub fn validate(&self) -> Result<()> {
        for r in &self.relations {
            if !self.concepts.contains(&r.src) || !self.concepts.contains(&r.dst) {
                return Err(Error::Schema(format!(
                    "relation {} -> {} has an unknown endpoint",
                    r.src, r.dst
                )));
            }
            if !(r.weight.is_finite() && r.weight > 0.0) {
                return Err(Error::Schema(format!("non-positive weight {}", r.weight)));
            }
        }
        let dim = self.embedding_dim();
        for (c, v) in &self.embeddings {
            if Some(v.len()) != dim || v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Dimension(format!("embedding for {c}")));
            }
            if !self.concepts.contains(c) {
                return Err(Error::Schema(format!("embedding for unknown concept {c}")));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Schema(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let kg: KnowledgeGraph =
            serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        kg.validate()?;
        Ok(kg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
