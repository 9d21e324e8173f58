use std::collections::{BTreeMap, BTreeSet};

use super::{ConceptId, KnowledgeGraph};
use crate::error::Result;
use crate::graph::{EdgeId, EdgeSpec, EdgeType, NodeId, NodeSpec, NodeType, SceneGraph};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LinkReport {
    pub added: Vec<EdgeId>,
    pub removed: Vec<EdgeId>,
    /// Labels without a matching concept.
    pub unmatched: BTreeSet<String>,
}

/// Makes sure every concept and relation of `kg` is present as a concept
/// node / `related` edge. Returns the concept -> node map.
pub fn ensure_knowledge_layer(
    graph: &mut SceneGraph,
    kg: &KnowledgeGraph,
) -> Result<BTreeMap<ConceptId, NodeId>> {
    let mut nodes: BTreeMap<ConceptId, NodeId> = BTreeMap::new();
    for n in graph.nodes_of_type(NodeType::Concept) {
        if let Some(c) = n.concept.as_deref().and_then(ConceptId::from_uri) {
            nodes.insert(c, n.id);
        }
    }
    for c in &kg.concepts {
        match nodes.get(c) {
            Some(id) => {
                let emb = kg.embeddings.get(c).cloned();
                graph.update_node(*id, |n| n.embedding = emb)?;
            }
            None => {
                let mut spec = NodeSpec::concept(c.as_str());
                spec.embedding = kg.embeddings.get(c).cloned();
                nodes.insert(c.clone(), graph.add_node(spec)?);
            }
        }
    }
    let mut existing: BTreeSet<(NodeId, NodeId, String)> = graph
        .edges_of_type(EdgeType::Related)
        .map(|e| (e.src, e.dst, e.kg_relation.clone().unwrap_or_default()))
        .collect();
    for r in &kg.relations {
        if r.src == r.dst {
            continue;
        }
        let key = (nodes[&r.src], nodes[&r.dst], r.relation.clone());
        if existing.insert(key.clone()) {
            let mut spec = EdgeSpec::new(key.0, key.1, EdgeType::Related);
            spec.kg_relation = Some(r.relation.clone());
            spec.features = Some(vec![r.weight]);
            graph.add_edge(spec)?;
        }
    }
    Ok(nodes)
}

/// Grounds every labeled global object in the concept matching its
/// normalized label. Stale groundings (label changed) are replaced.
pub fn link_global_to_concepts(graph: &mut SceneGraph, kg: &KnowledgeGraph) -> Result<LinkReport> {
    let concepts = ensure_knowledge_layer(graph, kg)?;
    let mut report = LinkReport::default();
    let globals: Vec<(NodeId, Option<String>)> = graph
        .nodes_of_type(NodeType::GlobalObject)
        .map(|n| (n.id, n.class_label.clone()))
        .collect();
    for (id, label) in globals {
        let target = label.as_deref().and_then(|l| {
            let hit =
                ConceptId::from_label(l, &kg.language).and_then(|c| concepts.get(&c).copied());
            if hit.is_none() {
                report.unmatched.insert(l.to_string());
            }
            hit
        });
        let current: Vec<(EdgeId, NodeId)> = graph
            .outgoing(id, EdgeType::GroundedIn)
            .map(|e| (e.id, e.dst))
            .collect();
        for (edge, dst) in &current {
            if Some(*dst) != target {
                graph.remove_edge(*edge)?;
                report.removed.push(*edge);
            }
        }
        if let Some(t) = target {
            if !current.iter().any(|(_, d)| *d == t) {
                report
                    .added
                    .push(graph.add_edge(EdgeSpec::new(id, t, EdgeType::GroundedIn))?);
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{bounds, voxelize, Point3};
    use crate::graph::Geometry;
    use crate::knowledge::Relation;

    fn global(graph: &mut SceneGraph, label: Option<&str>) -> NodeId {
        let pts = [Point3::new(0.0, 0.0, 0.0)];
        let mut spec = NodeSpec::object(
            NodeType::GlobalObject,
            Geometry {
                bbox: bounds(&pts).unwrap(),
                grid: voxelize(&pts, 0.05).unwrap(),
            },
        );
        spec.class_label = label.map(String::from);
        graph.add_node(spec).unwrap()
    }

    fn kg(terms: &[&str]) -> KnowledgeGraph {
        let mut kg = KnowledgeGraph::new("en");
        for t in terms {
            kg.concepts
                .insert(ConceptId::from_uri(&format!("/c/en/{t}")).unwrap());
        }
        kg
    }

    #[test]
    fn label_grounded() {
        let mut g = SceneGraph::new();
        let t = global(&mut g, Some("table"));
        let rep = link_global_to_concepts(&mut g, &kg(&["table", "cup"])).unwrap();
        assert_eq!(rep.added.len(), 1);
        assert_eq!(g.outgoing(t, EdgeType::GroundedIn).count(), 1);
        // idempotent
        let rep = link_global_to_concepts(&mut g, &kg(&["table", "cup"])).unwrap();
        assert!(rep.added.is_empty());
        assert_eq!(g.nodes_of_type(NodeType::Concept).count(), 2);
        g.validate().unwrap();
    }

    #[test]
    fn unlabeled_not_grounded() {
        let mut g = SceneGraph::new();
        global(&mut g, None);
        let rep = link_global_to_concepts(&mut g, &kg(&["table"])).unwrap();
        assert!(rep.added.is_empty() && rep.unmatched.is_empty());
    }

    #[test]
    fn relabel_moves_grounding() {
        let mut g = SceneGraph::new();
        let n = global(&mut g, Some("table"));
        let k = kg(&["table", "desk"]);
        link_global_to_concepts(&mut g, &k).unwrap();
        g.update_node(n, |s| s.class_label = Some("Desk".into()))
            .unwrap();
        let rep = link_global_to_concepts(&mut g, &k).unwrap();
        assert_eq!((rep.added.len(), rep.removed.len()), (1, 1));
        let dst = g.outgoing(n, EdgeType::GroundedIn).next().unwrap().dst;
        assert_eq!(g.node(dst).unwrap().concept.as_deref(), Some("/c/en/desk"));
    }

    #[test]
    fn hundred_labels_against_forty_concepts() {
        let vocab: Vec<String> = (0..60).map(|i| format!("thing {i}")).collect();
        let concept_terms: Vec<String> = (0..40).map(|i| format!("thing_{}", i * 2)).collect();
        let refs: Vec<&str> = concept_terms.iter().map(String::as_str).collect();
        let k = kg(&refs);
        let mut g = SceneGraph::new();
        let mut labeled = Vec::new();
        for i in 0..100 {
            let label = if i % 7 == 0 {
                vocab[i % 60].to_uppercase()
            } else {
                vocab[(i * 13) % 60].clone()
            };
            labeled.push((global(&mut g, Some(&label)), label));
        }
        link_global_to_concepts(&mut g, &k).unwrap();

        // oracle: normalize by hand, intersect with the concept term set
        let terms: BTreeSet<&str> = refs.iter().copied().collect();
        let expected: BTreeSet<(NodeId, String)> = labeled
            .iter()
            .filter_map(|(id, l)| {
                let t = l.to_lowercase().replace(' ', "_");
                terms
                    .contains(t.as_str())
                    .then(|| (*id, format!("/c/en/{t}")))
            })
            .collect();
        let got: BTreeSet<(NodeId, String)> = g
            .edges_of_type(EdgeType::GroundedIn)
            .map(|e| (e.src, g.node(e.dst).unwrap().concept.clone().unwrap()))
            .collect();
        assert_eq!(got, expected);
        assert!(!expected.is_empty());
    }

    #[test]
    fn relations_become_related_edges() {
        let mut k = kg(&[]);
        k.add_relation(Relation {
            src: ConceptId::from_uri("/c/en/cup").unwrap(),
            relation: "AtLocation".into(),
            dst: ConceptId::from_uri("/c/en/table").unwrap(),
            weight: 1.5,
        });
        let mut g = SceneGraph::new();
        ensure_knowledge_layer(&mut g, &k).unwrap();
        ensure_knowledge_layer(&mut g, &k).unwrap();
        let rel: Vec<_> = g.edges_of_type(EdgeType::Related).collect();
        assert_eq!(rel.len(), 1);
        assert_eq!(rel[0].kg_relation.as_deref(), Some("AtLocation"));
    }
}
