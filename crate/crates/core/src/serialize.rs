//! Canonical JSON exchange format for scene graphs.
//!
//! Layout: `{"nodes":[...],"edges":[...],"meta":{...}}` with nodes and edges
//! sorted by id, one element per line, and every float rounded to 9
//! significant digits. Serializing the same graph always yields the same
//! bytes; loading re-validates every graph invariant.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Aabb, Point3, VoxelGrid};
use crate::graph::{
    EdgeId, EdgeSpec, EdgeType, Geometry, NodeId, NodeSpec, NodeType, SceneEdge, SceneGraph,
    SceneNode,
};

pub const FORMAT: &str = "ssg-scene-graph";
pub const VERSION: u32 = 1;

/// Rounds to 9 significant digits.
pub fn round9(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.8e}").parse().expect("formatted float parses")
}

fn round_vec(v: &[f64]) -> Vec<f64> {
    v.iter().copied().map(round9).collect()
}

fn round3(p: &Point3) -> [f64; 3] {
    [round9(p.x), round9(p.y), round9(p.z)]
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphDoc {
    nodes: Vec<NodeDoc>,
    edges: Vec<EdgeDoc>,
    meta: MetaDoc,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MetaDoc {
    format: String,
    version: u32,
    next_node_id: u64,
    next_edge_id: u64,
    node_count: usize,
    edge_count: usize,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    info: BTreeMap<String, String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GeometryDoc {
    resolution: f64,
    min: [f64; 3],
    max: [f64; 3],
    cells: Vec<[i64; 3]>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeDoc {
    id: u64,
    #[serde(rename = "type")]
    node_type: NodeType,
    level: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    segment_id: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    concept: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    class_label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    class_scores: Option<Vec<f64>>,
    #[serde(default)]
    score_updates: u32,
    observation_count: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    descriptor: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    embedding: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    geometry: Option<GeometryDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeDoc {
    id: u64,
    #[serde(rename = "type")]
    edge_type: EdgeType,
    src: u64,
    dst: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    relation_label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kg_relation: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    features: Option<Vec<f64>>,
}

fn node_doc(n: &SceneNode) -> NodeDoc {
    NodeDoc {
        id: n.id.0,
        node_type: n.node_type,
        level: n.level,
        segment_id: n.segment_id,
        concept: n.concept.clone(),
        class_label: n.class_label.clone(),
        class_scores: n.class_scores.as_deref().map(round_vec),
        score_updates: n.score_updates,
        observation_count: n.observation_count,
        descriptor: n.descriptor.as_deref().map(round_vec),
        embedding: n.embedding.as_deref().map(round_vec),
        geometry: n.geometry.as_ref().map(|g| GeometryDoc {
            resolution: round9(g.grid.resolution()),
            min: round3(&g.bbox.min),
            max: round3(&g.bbox.max),
            cells: g.grid.cells().iter().copied().collect(),
        }),
    }
}

fn edge_doc(e: &SceneEdge) -> EdgeDoc {
    EdgeDoc {
        id: e.id.0,
        edge_type: e.edge_type,
        src: e.src.0,
        dst: e.dst.0,
        relation_label: e.relation_label.clone(),
        kg_relation: e.kg_relation.clone(),
        features: e.features.as_deref().map(round_vec),
    }
}

pub fn serialize_graph(graph: &SceneGraph) -> String {
    serialize_graph_with_info(graph, &BTreeMap::new())
}

/// Serializes with extra string metadata under `meta.info`.
pub fn serialize_graph_with_info(graph: &SceneGraph, info: &BTreeMap<String, String>) -> String {
    let (next_node_id, next_edge_id) = graph.id_counters();
    let meta = MetaDoc {
        format: FORMAT.into(),
        version: VERSION,
        next_node_id,
        next_edge_id,
        node_count: graph.node_count(),
        edge_count: graph.edge_count(),
        info: info.clone(),
    };
    let compact = |v: &dyn erased::Json| v.to_json();
    let mut out = String::from("{\"nodes\":[");
    let nodes: Vec<String> = graph.nodes().map(|n| compact(&node_doc(n))).collect();
    push_list(&mut out, &nodes);
    out.push_str("],\n\"edges\":[");
    let edges: Vec<String> = graph.edges().map(|e| compact(&edge_doc(e))).collect();
    push_list(&mut out, &edges);
    out.push_str("],\n\"meta\":");
    out.push_str(&compact(&meta));
    out.push_str("}\n");
    out
}

fn push_list(out: &mut String, items: &[String]) {
    for (i, item) in items.iter().enumerate() {
        out.push_str(if i == 0 { "\n" } else { ",\n" });
        out.push_str(item);
    }
    if !items.is_empty() {
        out.push('\n');
    }
}

mod erased {
    pub trait Json {
        fn to_json(&self) -> String;
    }

    impl<T: serde::Serialize> Json for T {
        fn to_json(&self) -> String {
            serde_json::to_string(self).expect("graph documents contain only finite floats")
        }
    }
}

/// Parses a serialized graph and checks all invariants. Returns the graph
/// and the `meta.info` map.
pub fn deserialize_graph_with_info(text: &str) -> Result<(SceneGraph, BTreeMap<String, String>)> {
    let doc: GraphDoc = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
    if doc.meta.format != FORMAT || doc.meta.version != VERSION {
        return Err(Error::Schema(format!(
            "unsupported format {} v{}",
            doc.meta.format, doc.meta.version
        )));
    }
    if doc.meta.node_count != doc.nodes.len() || doc.meta.edge_count != doc.edges.len() {
        return Err(Error::Schema("node/edge counts disagree with meta".into()));
    }
    let mut graph = SceneGraph::new();
    for n in doc.nodes {
        let geometry = match n.geometry {
            Some(g) => {
                let p = |a: [f64; 3]| Point3::new(a[0], a[1], a[2]);
                Some(Geometry {
                    bbox: Aabb::new(p(g.min), p(g.max))?,
                    grid: VoxelGrid::from_cells(g.resolution, g.cells)?,
                })
            }
            None => None,
        };
        let spec = NodeSpec {
            node_type: n.node_type,
            level: n.level,
            geometry,
            descriptor: n.descriptor,
            class_label: n.class_label,
            class_scores: n.class_scores,
            score_updates: n.score_updates,
            embedding: n.embedding,
            observation_count: n.observation_count,
            segment_id: n.segment_id,
            concept: n.concept,
        };
        graph.restore_node(SceneNode {
            id: NodeId(n.id),
            spec,
        })?;
    }
    for e in doc.edges {
        let spec = EdgeSpec {
            src: NodeId(e.src),
            dst: NodeId(e.dst),
            edge_type: e.edge_type,
            relation_label: e.relation_label,
            features: e.features,
            kg_relation: e.kg_relation,
        };
        graph.restore_edge(SceneEdge {
            id: EdgeId(e.id),
            spec,
        })?;
    }
    graph.restore_counters(doc.meta.next_node_id, doc.meta.next_edge_id);
    graph.validate()?;
    Ok((graph, doc.meta.info))
}

pub fn deserialize_graph(text: &str) -> Result<SceneGraph> {
    deserialize_graph_with_info(text).map(|x| x.0)
}

/// Equality of everything the exchange format preserves: ids, types,
/// labels, counters, voxel cells, and floats at 9 significant digits.
pub fn structurally_equal(a: &SceneGraph, b: &SceneGraph) -> bool {
    serialize_graph(a) == serialize_graph(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{bounds, voxelize};

    fn geom(offset: f64) -> Geometry {
        let pts = [
            Point3::new(offset, 0.1, 0.2),
            Point3::new(offset + 0.31, 0.27, 0.9),
        ];
        Geometry {
            bbox: bounds(&pts).unwrap(),
            grid: voxelize(&pts, 0.05).unwrap(),
        }
    }

    pub(crate) fn every_type_graph() -> SceneGraph {
        let mut g = SceneGraph::new();
        let ground = g.add_node(NodeSpec::new(NodeType::VirtualGround)).unwrap();
        let mut l = NodeSpec::object(NodeType::LocalObject, geom(0.0));
        l.segment_id = Some(4);
        l.descriptor = Some(vec![0.1, 1.0 / 3.0, 2e-7]);
        l.level = 1;
        let l = g.add_node(l).unwrap();
        let l2 = g
            .add_node(NodeSpec::object(NodeType::LocalObject, geom(1.0)))
            .unwrap();
        let mut gl = NodeSpec::object(NodeType::GlobalObject, geom(0.01));
        gl.class_label = Some("cup".into());
        gl.class_scores = Some(vec![0.25, 0.75]);
        gl.score_updates = 2;
        gl.observation_count = 3;
        gl.embedding = Some(vec![std::f64::consts::PI, -1.5]);
        let gl = g.add_node(gl).unwrap();
        let c1 = g.add_node(NodeSpec::concept("/c/en/cup")).unwrap();
        let c2 = g.add_node(NodeSpec::concept("/c/en/table")).unwrap();
        g.add_edge(EdgeSpec::new(ground, l, EdgeType::Supports))
            .unwrap();
        g.add_edge(
            EdgeSpec::new(l, l2, EdgeType::Proximal)
                .with_features(vec![1.0, 0.0, 0.1, 1.2, -0.3, 0.0]),
        )
        .unwrap();
        let mut contact = EdgeSpec::new(l, l2, EdgeType::Contact);
        contact.relation_label = Some("contact".into());
        g.add_edge(contact).unwrap();
        g.add_edge(EdgeSpec::new(l, gl, EdgeType::SameInstance))
            .unwrap();
        g.add_edge(EdgeSpec::new(gl, c1, EdgeType::GroundedIn))
            .unwrap();
        let mut rel = EdgeSpec::new(c1, c2, EdgeType::Related);
        rel.kg_relation = Some("AtLocation".into());
        g.add_edge(rel).unwrap();
        // removed ids must not come back after a round trip
        let tmp = g.add_node(NodeSpec::concept("/c/en/tmp")).unwrap();
        g.remove_node(tmp).unwrap();
        g
    }

    #[test]
    fn empty_graph() {
        let s = serialize_graph(&SceneGraph::new());
        assert!(s.starts_with("{\"nodes\":[],\n\"edges\":[],\n\"meta\":{"));
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["nodes"], serde_json::json!([]));
        assert_eq!(deserialize_graph(&s).unwrap(), SceneGraph::new());
    }

    #[test]
    fn round_trip_every_type() {
        let g = every_type_graph();
        let text = serialize_graph(&g);
        let back = deserialize_graph(&text).unwrap();
        assert!(structurally_equal(&g, &back));
        assert_eq!(serialize_graph(&back), text);
        assert_eq!(back.id_counters(), g.id_counters());
        let ids = |g: &SceneGraph| g.nodes().map(|n| n.id).collect::<Vec<_>>();
        assert_eq!(ids(&back), ids(&g));
        for (a, b) in g.nodes().zip(back.nodes()) {
            assert_eq!(a.node_type, b.node_type);
            assert_eq!(
                a.geometry.as_ref().map(|x| x.grid.cells().clone()),
                b.geometry.as_ref().map(|x| x.grid.cells().clone())
            );
        }
        let types = |g: &SceneGraph| {
            g.edges()
                .map(|e| (e.id, e.edge_type, e.src, e.dst))
                .collect::<Vec<_>>()
        };
        assert_eq!(types(&back), types(&g));
        assert_eq!(g.count_by_edge_type().len(), EdgeType::ALL.len());
        assert_eq!(g.count_by_node_type().len(), NodeType::ALL.len());
    }

    #[test]
    fn corrupted_edge_rejected() {
        let text = serialize_graph(&every_type_graph());
        let corrupted = text.replacen("\"src\":1,", "\"src\":999,", 1);
        assert_ne!(corrupted, text);
        assert!(matches!(
            deserialize_graph(&corrupted),
            Err(Error::DanglingEndpoint(_))
        ));
        assert!(deserialize_graph("{\"nodes\":[]}").is_err());
    }

    #[test]
    fn rounding() {
        assert_eq!(round9(1.0 / 3.0), 0.333333333);
        assert_eq!(round9(123456789012.0), 123456789000.0);
        assert_eq!(round9(0.05), 0.05);
        assert_eq!(round9(-2.5e-10), -2.5e-10);
    }
}
