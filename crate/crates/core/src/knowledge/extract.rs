use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{default_relations, ConceptId, KnowledgeGraph};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractionSpec {
    pub seed_classes: Vec<String>,
    pub relation_whitelist: BTreeSet<String>,
    pub language: String,
    pub hops: u32,
    pub max_nodes: usize,
}

impl Default for ExtractionSpec {
    fn default() -> Self {
        Self {
            seed_classes: Vec::new(),
            relation_whitelist: default_relations(),
            language: "en".into(),
            hops: 1,
            max_nodes: 50_000,
        }
    }
}

impl ExtractionSpec {
    pub fn validate(&self) -> Result<()> {
        if self.seed_classes.is_empty() {
            return Err(Error::Config(
                "extraction needs at least one seed class".into(),
            ));
        }
        if self.max_nodes == 0 {
            return Err(Error::Config("max_nodes must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExtractReport {
    pub seeds: Vec<ConceptId>,
    /// Seed classes without a matching concept.
    pub missing_seeds: Vec<String>,
    /// Expansion stopped at `max_nodes`.
    pub truncated: bool,
    /// Nodes first reached at each hop, hop 0 being the seeds.
    pub per_hop: Vec<usize>,
}

/// Breadth-first expansion from the seed concepts over whitelisted
/// relations, traversed in both directions, for at most `hops` steps.
/// Frontiers are processed in sorted concept order so truncation at
/// `max_nodes` is deterministic.
pub fn extract_subgraph(
    kg: &KnowledgeGraph,
    spec: &ExtractionSpec,
) -> Result<(KnowledgeGraph, ExtractReport)> {
    spec.validate()?;
    let mut adjacency: BTreeMap<&ConceptId, BTreeSet<&ConceptId>> = BTreeMap::new();
    for r in &kg.relations {
        if r.src != r.dst && spec.relation_whitelist.contains(&r.relation) {
            adjacency.entry(&r.src).or_default().insert(&r.dst);
            adjacency.entry(&r.dst).or_default().insert(&r.src);
        }
    }

    let mut report = ExtractReport::default();
    let mut seeds = BTreeSet::new();
    for class in &spec.seed_classes {
        match ConceptId::from_label(class, &spec.language).filter(|c| kg.concepts.contains(c)) {
            Some(c) => {
                seeds.insert(c);
            }
            None => report.missing_seeds.push(class.clone()),
        }
    }

    let mut visited: BTreeSet<&ConceptId> = BTreeSet::new();
    let mut frontier: BTreeSet<&ConceptId> = BTreeSet::new();
    for s in &seeds {
        if visited.len() == spec.max_nodes {
            report.truncated = true;
            break;
        }
        let s = kg.concepts.get(s).expect("filtered to known concepts");
        visited.insert(s);
        frontier.insert(s);
    }
    report.seeds = visited.iter().map(|c| (*c).clone()).collect();
    report.per_hop.push(visited.len());

    'hops: for _ in 0..spec.hops {
        if frontier.is_empty() {
            break;
        }
        let mut next = BTreeSet::new();
        for node in &frontier {
            for nb in adjacency.get(node).into_iter().flatten() {
                if visited.contains(nb) {
                    continue;
                }
                if visited.len() == spec.max_nodes {
                    report.truncated = true;
                    report.per_hop.push(next.len());
                    break 'hops;
                }
                visited.insert(nb);
                next.insert(*nb);
            }
        }
        report.per_hop.push(next.len());
        frontier = next;
    }

    let mut sub = KnowledgeGraph::new(spec.language.clone());
    sub.concepts = visited.iter().map(|c| (*c).clone()).collect();
    sub.relations = kg
        .relations
        .iter()
        .filter(|r| {
            spec.relation_whitelist.contains(&r.relation)
                && sub.concepts.contains(&r.src)
                && sub.concepts.contains(&r.dst)
        })
        .cloned()
        .collect();
    sub.embeddings = kg
        .embeddings
        .iter()
        .filter(|(c, _)| sub.concepts.contains(*c))
        .map(|(c, v)| (c.clone(), v.clone()))
        .collect();
    Ok((sub, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knowledge::Relation;

    fn c(t: &str) -> ConceptId {
        ConceptId::from_uri(&format!("/c/en/{t}")).unwrap()
    }

    fn chain() -> KnowledgeGraph {
        let mut kg = KnowledgeGraph::new("en");
        for (a, b) in [("a", "b"), ("c", "b"), ("c", "d")] {
            kg.add_relation(Relation {
                src: c(a),
                relation: "RelatedTo".into(),
                dst: c(b),
                weight: 1.0,
            });
        }
        kg
    }

    fn spec(seeds: &[&str], hops: u32) -> ExtractionSpec {
        ExtractionSpec {
            seed_classes: seeds.iter().map(|s| s.to_string()).collect(),
            hops,
            ..ExtractionSpec::default()
        }
    }

    #[test]
    fn zero_hops_keeps_seeds_and_their_edges() {
        let (sub, rep) = extract_subgraph(&chain(), &spec(&["a", "b"], 0)).unwrap();
        assert_eq!(sub.concepts, [c("a"), c("b")].into());
        assert_eq!(sub.relations.len(), 1);
        assert!(!rep.truncated);
    }

    #[test]
    fn chain_two_hops() {
        let (sub, _) = extract_subgraph(&chain(), &spec(&["a"], 2)).unwrap();
        assert_eq!(sub.concepts, [c("a"), c("b"), c("c")].into());
        assert_eq!(sub.relations.len(), 2);
    }

    #[test]
    fn missing_seed_reported() {
        let (sub, rep) = extract_subgraph(&chain(), &spec(&["a", "sofa"], 1)).unwrap();
        assert_eq!(rep.missing_seeds, vec!["sofa".to_string()]);
        assert_eq!(sub.concepts.len(), 2);
        assert!(extract_subgraph(&chain(), &spec(&[], 1)).is_err());
    }

    #[test]
    fn truncation_flag() {
        let mut s = spec(&["a"], 3);
        s.max_nodes = 2;
        let (sub, rep) = extract_subgraph(&chain(), &s).unwrap();
        assert!(rep.truncated);
        assert_eq!(sub.concepts.len(), 2);
    }

    #[test]
    fn relation_filter_blocks_traversal() {
        let mut kg = chain();
        kg.add_relation(Relation {
            src: c("a"),
            relation: "Antonym".into(),
            dst: c("z"),
            weight: 1.0,
        });
        let (sub, _) = extract_subgraph(&kg, &spec(&["a"], 1)).unwrap();
        assert!(!sub.concepts.contains(&c("z")));
    }
}
