//! Heterogeneous, layered scene graph.
//!
//! Nodes and edges are keyed by engine-assigned ids that are never reused,
//! even after removal. An adjacency index keyed by `(node, edge type)` is
//! maintained alongside the edge map, and the subgraph formed by `supports`
//! edges is kept acyclic.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Aabb, VoxelGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EdgeId(pub u64);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

impl fmt::Display for EdgeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeType {
    LocalObject,
    GlobalObject,
    Concept,
    VirtualGround,
}

impl NodeType {
    pub const ALL: [NodeType; 4] = [
        NodeType::LocalObject,
        NodeType::GlobalObject,
        NodeType::Concept,
        NodeType::VirtualGround,
    ];

    pub fn layer(self) -> Layer {
        match self {
            NodeType::LocalObject => Layer::Local,
            NodeType::GlobalObject | NodeType::VirtualGround => Layer::Global,
            NodeType::Concept => Layer::Knowledge,
        }
    }

    pub fn is_object(self) -> bool {
        matches!(self, NodeType::LocalObject | NodeType::GlobalObject)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            NodeType::LocalObject => "local_object",
            NodeType::GlobalObject => "global_object",
            NodeType::Concept => "concept",
            NodeType::VirtualGround => "virtual_ground",
        }
    }
}

/// Layer tag of a node: the current frame, persistent memory, or external knowledge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Layer {
    Local,
    Global,
    Knowledge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeType {
    Proximal,
    Contact,
    Supports,
    SameInstance,
    GroundedIn,
    Related,
}

impl EdgeType {
    pub const ALL: [EdgeType; 6] = [
        EdgeType::Proximal,
        EdgeType::Contact,
        EdgeType::Supports,
        EdgeType::SameInstance,
        EdgeType::GroundedIn,
        EdgeType::Related,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EdgeType::Proximal => "proximal",
            EdgeType::Contact => "contact",
            EdgeType::Supports => "supports",
            EdgeType::SameInstance => "same_instance",
            EdgeType::GroundedIn => "grounded_in",
            EdgeType::Related => "related",
        }
    }

    /// Cross-layer edges through which expectations reach the local layer.
    pub fn is_conduit(self) -> bool {
        matches!(self, EdgeType::SameInstance | EdgeType::GroundedIn)
    }

    pub fn is_geometric(self) -> bool {
        matches!(
            self,
            EdgeType::Proximal | EdgeType::Contact | EdgeType::Supports
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    pub bbox: Aabb,
    pub grid: VoxelGrid,
}

/// Everything a caller may set on a new node; the id is assigned by the graph.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSpec {
    pub node_type: NodeType,
    /// Hierarchy level: longest supports-path distance from the ground.
    pub level: u32,
    pub geometry: Option<Geometry>,
    pub descriptor: Option<Vec<f64>>,
    pub class_label: Option<String>,
    pub class_scores: Option<Vec<f64>>,
    /// Number of score vectors averaged into `class_scores`.
    pub score_updates: u32,
    /// External (e.g. vision-language) or knowledge-graph embedding.
    pub embedding: Option<Vec<f64>>,
    pub observation_count: u32,
    /// Frame-local segment id, for local objects.
    pub segment_id: Option<u32>,
    /// Normalized concept id, for concept nodes.
    pub concept: Option<String>,
}

impl NodeSpec {
    pub fn new(node_type: NodeType) -> Self {
        Self {
            node_type,
            level: 0,
            geometry: None,
            descriptor: None,
            class_label: None,
            class_scores: None,
            score_updates: 0,
            embedding: None,
            observation_count: 0,
            segment_id: None,
            concept: None,
        }
    }

    pub fn object(node_type: NodeType, geometry: Geometry) -> Self {
        Self {
            geometry: Some(geometry),
            ..Self::new(node_type)
        }
    }

    pub fn concept(id: impl Into<String>) -> Self {
        Self {
            concept: Some(id.into()),
            ..Self::new(NodeType::Concept)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let has_geometry = self.geometry.is_some();
        match self.node_type {
            NodeType::LocalObject | NodeType::GlobalObject if !has_geometry => {
                return Err(Error::InvalidNode(format!(
                    "{} node requires geometry",
                    self.node_type.as_str()
                )))
            }
            NodeType::Concept | NodeType::VirtualGround if has_geometry => {
                return Err(Error::InvalidNode(format!(
                    "{} node must not carry geometry",
                    self.node_type.as_str()
                )))
            }
            _ => {}
        }
        if let Some(scores) = &self.class_scores {
            check_distribution(scores).map_err(Error::InvalidNode)?;
        }
        for (name, v) in [
            ("descriptor", &self.descriptor),
            ("embedding", &self.embedding),
        ] {
            if let Some(v) = v {
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::InvalidNode(format!("{name} has non-finite entries")));
                }
            }
        }
        Ok(())
    }
}

/// Checks that `scores` is a finite probability vector summing to 1 ± 1e-6.
pub fn check_distribution(scores: &[f64]) -> std::result::Result<(), String> {
    if scores.is_empty() {
        return Err("empty class score vector".into());
    }
    if scores.iter().any(|s| !s.is_finite() || *s < 0.0) {
        return Err("class scores must be finite and non-negative".into());
    }
    let sum: f64 = scores.iter().sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(format!("class scores sum to {sum}, expected 1"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneNode {
    pub id: NodeId,
    pub spec: NodeSpec,
}

impl std::ops::Deref for SceneNode {
    type Target = NodeSpec;
    fn deref(&self) -> &NodeSpec {
        &self.spec
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeSpec {
    pub src: NodeId,
    pub dst: NodeId,
    pub edge_type: EdgeType,
    pub relation_label: Option<String>,
    pub features: Option<Vec<f64>>,
    /// Knowledge-graph relation name; only on `related` edges.
    pub kg_relation: Option<String>,
}

impl EdgeSpec {
    pub fn new(src: NodeId, dst: NodeId, edge_type: EdgeType) -> Self {
        Self {
            src,
            dst,
            edge_type,
            relation_label: None,
            features: None,
            kg_relation: None,
        }
    }

    pub fn with_features(mut self, features: Vec<f64>) -> Self {
        self.features = Some(features);
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneEdge {
    pub id: EdgeId,
    pub spec: EdgeSpec,
}

impl std::ops::Deref for SceneEdge {
    type Target = EdgeSpec;
    fn deref(&self) -> &EdgeSpec {
        &self.spec
    }
}

/// Scene graph with reader/writer access through ordinary borrows:
/// `&SceneGraph` may be shared across threads, mutation needs `&mut`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SceneGraph {
    nodes: BTreeMap<NodeId, SceneNode>,
    edges: BTreeMap<EdgeId, SceneEdge>,
    adjacency: BTreeMap<(NodeId, EdgeType), BTreeSet<EdgeId>>,
    next_node: u64,
    next_edge: u64,
}

impl SceneGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Next ids to be handed out; persisted so ids stay unique across sessions.
    pub fn id_counters(&self) -> (u64, u64) {
        (self.next_node, self.next_edge)
    }

    pub fn node(&self, id: NodeId) -> Option<&SceneNode> {
        self.nodes.get(&id)
    }

    pub fn edge(&self, id: EdgeId) -> Option<&SceneEdge> {
        self.edges.get(&id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &SceneNode> {
        self.nodes.values()
    }

    pub fn edges(&self) -> impl Iterator<Item = &SceneEdge> {
        self.edges.values()
    }

    pub fn nodes_of_type(&self, ty: NodeType) -> impl Iterator<Item = &SceneNode> {
        self.nodes.values().filter(move |n| n.node_type == ty)
    }

    pub fn edges_of_type(&self, ty: EdgeType) -> impl Iterator<Item = &SceneEdge> {
        self.edges.values().filter(move |e| e.edge_type == ty)
    }

    /// Edges of `ty` incident to `node`, in either direction.
    pub fn incident(&self, node: NodeId, ty: EdgeType) -> impl Iterator<Item = &SceneEdge> {
        self.adjacency
            .get(&(node, ty))
            .into_iter()
            .flat_map(|ids| ids.iter())
            .map(move |id| &self.edges[id])
    }

    pub fn outgoing(&self, node: NodeId, ty: EdgeType) -> impl Iterator<Item = &SceneEdge> {
        self.incident(node, ty).filter(move |e| e.src == node)
    }

    pub fn incoming(&self, node: NodeId, ty: EdgeType) -> impl Iterator<Item = &SceneEdge> {
        self.incident(node, ty).filter(move |e| e.dst == node)
    }

    /// Nodes with a supports edge into `node`.
    pub fn supporters(&self, node: NodeId) -> Vec<NodeId> {
        self.incoming(node, EdgeType::Supports)
            .map(|e| e.src)
            .collect()
    }

    pub fn find_edge(&self, src: NodeId, dst: NodeId, ty: EdgeType) -> Option<&SceneEdge> {
        self.outgoing(src, ty).find(|e| e.dst == dst)
    }

    pub fn ground(&self) -> Option<NodeId> {
        self.nodes_of_type(NodeType::VirtualGround)
            .map(|n| n.id)
            .next()
    }

    pub fn add_node(&mut self, spec: NodeSpec) -> Result<NodeId> {
        spec.validate()?;
        let id = NodeId(self.next_node);
        self.next_node += 1;
        self.nodes.insert(id, SceneNode { id, spec });
        Ok(id)
    }

    pub fn add_edge(&mut self, spec: EdgeSpec) -> Result<EdgeId> {
        self.check_edge(&spec)?;
        let id = EdgeId(self.next_edge);
        self.next_edge += 1;
        self.index_edge(SceneEdge { id, spec });
        Ok(id)
    }

    /// Applies `f` to a node and re-validates it; the change is rolled back on error.
    pub fn update_node(&mut self, id: NodeId, f: impl FnOnce(&mut NodeSpec)) -> Result<()> {
        let node = self.nodes.get_mut(&id).ok_or(Error::UnknownNode(id))?;
        let backup = node.spec.clone();
        f(&mut node.spec);
        if node.spec.node_type != backup.node_type {
            node.spec = backup;
            return Err(Error::InvalidNode("node type cannot change".into()));
        }
        if let Err(e) = node.spec.validate() {
            node.spec = backup;
            return Err(e);
        }
        Ok(())
    }

    pub fn set_level(&mut self, id: NodeId, level: u32) -> Result<()> {
        let node = self.nodes.get_mut(&id).ok_or(Error::UnknownNode(id))?;
        node.spec.level = level;
        Ok(())
    }

    pub fn set_relation_label(&mut self, id: EdgeId, label: Option<String>) -> Result<()> {
        let edge = self.edges.get_mut(&id).ok_or(Error::UnknownEdge(id))?;
        edge.spec.relation_label = label;
        Ok(())
    }

    pub fn remove_edge(&mut self, id: EdgeId) -> Result<SceneEdge> {
        let edge = self.edges.remove(&id).ok_or(Error::UnknownEdge(id))?;
        for end in [edge.src, edge.dst] {
            let key = (end, edge.edge_type);
            if let Some(set) = self.adjacency.get_mut(&key) {
                set.remove(&id);
                if set.is_empty() {
                    self.adjacency.remove(&key);
                }
            }
        }
        Ok(edge)
    }

    /// Removes a node together with every incident edge.
    pub fn remove_node(&mut self, id: NodeId) -> Result<SceneNode> {
        if !self.nodes.contains_key(&id) {
            return Err(Error::UnknownNode(id));
        }
        let incident: Vec<EdgeId> = EdgeType::ALL
            .iter()
            .flat_map(|ty| self.incident(id, *ty).map(|e| e.id))
            .collect();
        for e in incident {
            self.remove_edge(e)?;
        }
        Ok(self.nodes.remove(&id).expect("checked above"))
    }

    /// Removes every node of the given layer; returns how many were removed.
    pub fn remove_layer(&mut self, layer: Layer) -> usize {
        let ids: Vec<NodeId> = self
            .nodes
            .values()
            .filter(|n| n.node_type.layer() == layer)
            .map(|n| n.id)
            .collect();
        for id in &ids {
            self.remove_node(*id).expect("id collected from graph");
        }
        ids.len()
    }

    fn check_edge(&self, spec: &EdgeSpec) -> Result<()> {
        let src = self
            .nodes
            .get(&spec.src)
            .ok_or(Error::DanglingEndpoint(spec.src))?;
        let dst = self
            .nodes
            .get(&spec.dst)
            .ok_or(Error::DanglingEndpoint(spec.dst))?;
        if spec.src == spec.dst {
            return Err(Error::InvalidEdge(format!("self-loop on {}", spec.src)));
        }
        if spec.kg_relation.is_some() != (spec.edge_type == EdgeType::Related) {
            return Err(Error::InvalidEdge(
                "kg_relation must be set on related edges and only there".into(),
            ));
        }
        if let Some(f) = &spec.features {
            if f.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidEdge("non-finite edge features".into()));
            }
        }
        let (s, d) = (src.node_type, dst.node_type);
        use NodeType::*;
        let ok = match spec.edge_type {
            EdgeType::Proximal | EdgeType::Contact => s.is_object() && s == d,
            EdgeType::Supports => {
                d.is_object() && (s == d || (s == VirtualGround && d.is_object()))
            }
            EdgeType::SameInstance => s == LocalObject && d == GlobalObject,
            EdgeType::GroundedIn => s == GlobalObject && d == Concept,
            EdgeType::Related => s == Concept && d == Concept,
        };
        if !ok {
            return Err(Error::InvalidEdge(format!(
                "{} edge cannot connect {} to {}",
                spec.edge_type.as_str(),
                s.as_str(),
                d.as_str()
            )));
        }
        if spec.edge_type == EdgeType::Supports && self.reaches_via_supports(spec.dst, spec.src) {
            return Err(Error::SupportCycle {
                src: spec.src,
                dst: spec.dst,
            });
        }
        Ok(())
    }

    fn reaches_via_supports(&self, from: NodeId, to: NodeId) -> bool {
        let mut stack = vec![from];
        let mut seen = BTreeSet::new();
        while let Some(n) = stack.pop() {
            if n == to {
                return true;
            }
            if !seen.insert(n) {
                continue;
            }
            stack.extend(self.outgoing(n, EdgeType::Supports).map(|e| e.dst));
        }
        false
    }

    fn index_edge(&mut self, edge: SceneEdge) {
        let id = edge.id;
        for end in [edge.src, edge.dst] {
            self.adjacency
                .entry((end, edge.edge_type))
                .or_default()
                .insert(id);
        }
        self.edges.insert(id, edge);
    }

    /// Re-inserts a node under a known id (deserialization).
    pub(crate) fn restore_node(&mut self, node: SceneNode) -> Result<()> {
        node.spec.validate()?;
        if self.nodes.contains_key(&node.id) {
            return Err(Error::Schema(format!("duplicate node id {}", node.id)));
        }
        self.next_node = self.next_node.max(node.id.0 + 1);
        self.nodes.insert(node.id, node);
        Ok(())
    }

    pub(crate) fn restore_edge(&mut self, edge: SceneEdge) -> Result<()> {
        self.check_edge(&edge.spec)?;
        if self.edges.contains_key(&edge.id) {
            return Err(Error::Schema(format!("duplicate edge id {}", edge.id)));
        }
        self.next_edge = self.next_edge.max(edge.id.0 + 1);
        self.index_edge(edge);
        Ok(())
    }

    pub(crate) fn restore_counters(&mut self, next_node: u64, next_edge: u64) {
        self.next_node = self.next_node.max(next_node);
        self.next_edge = self.next_edge.max(next_edge);
    }

    /// Topological order of all nodes under supports edges, `None` on a cycle.
    pub fn support_topological_order(&self) -> Option<Vec<NodeId>> {
        let mut indegree: BTreeMap<NodeId, usize> = self.nodes.keys().map(|id| (*id, 0)).collect();
        for e in self.edges_of_type(EdgeType::Supports) {
            *indegree.get_mut(&e.dst).expect("endpoint exists") += 1;
        }
        let mut ready: Vec<NodeId> = indegree
            .iter()
            .filter(|(_, d)| **d == 0)
            .map(|(id, _)| *id)
            .collect();
        ready.reverse();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(n) = ready.pop() {
            order.push(n);
            for e in self.outgoing(n, EdgeType::Supports) {
                let d = indegree.get_mut(&e.dst).expect("endpoint exists");
                *d -= 1;
                if *d == 0 {
                    ready.push(e.dst);
                }
            }
        }
        (order.len() == self.nodes.len()).then_some(order)
    }

    /// Recomputes every node's level as its longest supports-path distance
    /// from a root. Roots (nodes without supporters) get level 0.
    pub fn recompute_levels(&mut self) -> Result<()> {
        let order = self
            .support_topological_order()
            .ok_or_else(|| Error::InvalidEdge("supports subgraph has a cycle".into()))?;
        let mut level: BTreeMap<NodeId, u32> = BTreeMap::new();
        for n in &order {
            let l = self
                .incoming(*n, EdgeType::Supports)
                .map(|e| level[&e.src] + 1)
                .max()
                .unwrap_or(0);
            level.insert(*n, l);
        }
        for (id, l) in level {
            self.nodes
                .get_mut(&id)
                .expect("ordered from graph")
                .spec
                .level = l;
        }
        Ok(())
    }

    /// Full invariant check, used by tests and after deserialization.
    pub fn validate(&self) -> Result<()> {
        let mut expected: BTreeMap<(NodeId, EdgeType), BTreeSet<EdgeId>> = BTreeMap::new();
        for n in self.nodes.values() {
            n.spec.validate()?;
            if n.id.0 >= self.next_node {
                return Err(Error::Schema(format!("node id {} beyond counter", n.id)));
            }
        }
        for e in self.edges.values() {
            for end in [e.src, e.dst] {
                if !self.nodes.contains_key(&end) {
                    return Err(Error::DanglingEndpoint(end));
                }
                expected.entry((end, e.edge_type)).or_default().insert(e.id);
            }
            if e.id.0 >= self.next_edge {
                return Err(Error::Schema(format!("edge id {} beyond counter", e.id)));
            }
        }
        if expected != self.adjacency {
            return Err(Error::Schema("adjacency index out of sync".into()));
        }
        if self.support_topological_order().is_none() {
            return Err(Error::Schema("supports subgraph has a cycle".into()));
        }
        Ok(())
    }

    pub fn count_by_node_type(&self) -> BTreeMap<NodeType, usize> {
        let mut out = BTreeMap::new();
        for n in self.nodes.values() {
            *out.entry(n.node_type).or_insert(0) += 1;
        }
        out
    }

    pub fn count_by_edge_type(&self) -> BTreeMap<EdgeType, usize> {
        let mut out = BTreeMap::new();
        for e in self.edges.values() {
            *out.entry(e.edge_type).or_insert(0) += 1;
        }
        out
    }
}
