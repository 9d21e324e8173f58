//! Typed feature graph fed to the network: local, global and concept nodes
//! with raw features, directed typed messages, and the local candidate
//! edges to classify.

use std::collections::{BTreeMap, HashMap};

use super::model::ModelConfig;
use crate::construct::EDGE_FEATURE_DIM;
use crate::error::{Error, Result};
use crate::graph::{EdgeId, EdgeType, NodeId, NodeType, SceneGraph, SceneNode};
use crate::segment::D_GEO;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeKind {
    Local,
    Global,
    Concept,
}

impl NodeKind {
    pub const ALL: [NodeKind; 3] = [NodeKind::Local, NodeKind::Global, NodeKind::Concept];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            NodeKind::Local => "local",
            NodeKind::Global => "global",
            NodeKind::Concept => "concept",
        }
    }

    fn of(t: NodeType) -> Option<NodeKind> {
        match t {
            NodeType::LocalObject => Some(NodeKind::Local),
            NodeType::GlobalObject => Some(NodeKind::Global),
            NodeType::Concept => Some(NodeKind::Concept),
            NodeType::VirtualGround => None,
        }
    }
}

/// Directed message channel; each has its own weight matrix per layer.
/// Symmetric relations share one channel for both directions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MessageType {
    Proximal,
    Contact,
    /// Supporter to supported.
    SupportsDown,
    /// Supported to supporter.
    SupportsUp,
    /// Global instance to its local observation.
    InstanceToLocal,
    InstanceToGlobal,
    /// Concept to the global object grounded in it.
    GroundedToGlobal,
    GroundedToConcept,
    Related,
}

impl MessageType {
    pub const COUNT: usize = 9;
    pub const ALL: [MessageType; 9] = [
        MessageType::Proximal,
        MessageType::Contact,
        MessageType::SupportsDown,
        MessageType::SupportsUp,
        MessageType::InstanceToLocal,
        MessageType::InstanceToGlobal,
        MessageType::GroundedToGlobal,
        MessageType::GroundedToConcept,
        MessageType::Related,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            MessageType::Proximal => "proximal",
            MessageType::Contact => "contact",
            MessageType::SupportsDown => "supports_down",
            MessageType::SupportsUp => "supports_up",
            MessageType::InstanceToLocal => "instance_to_local",
            MessageType::InstanceToGlobal => "instance_to_global",
            MessageType::GroundedToGlobal => "grounded_to_global",
            MessageType::GroundedToConcept => "grounded_to_concept",
            MessageType::Related => "related",
        }
    }

    pub fn is_conduit(self) -> bool {
        matches!(
            self,
            MessageType::InstanceToLocal
                | MessageType::InstanceToGlobal
                | MessageType::GroundedToGlobal
                | MessageType::GroundedToConcept
        )
    }

    /// Whether a message of this type may run from a `src` node to a `dst` node.
    pub fn connects(self, src: NodeKind, dst: NodeKind) -> bool {
        use NodeKind::*;
        match self {
            MessageType::Proximal
            | MessageType::Contact
            | MessageType::SupportsDown
            | MessageType::SupportsUp => src == dst && src != Concept,
            MessageType::InstanceToLocal => (src, dst) == (Global, Local),
            MessageType::InstanceToGlobal => (src, dst) == (Local, Global),
            MessageType::GroundedToGlobal => (src, dst) == (Concept, Global),
            MessageType::GroundedToConcept => (src, dst) == (Global, Concept),
            MessageType::Related => (src, dst) == (Concept, Concept),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointNode {
    pub kind: NodeKind,
    pub source: Option<NodeId>,
    pub features: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Message {
    pub src: usize,
    pub dst: usize,
    pub kind: MessageType,
}

/// A local edge to classify, oriented `src -> dst`.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub src: usize,
    pub dst: usize,
    pub features: Vec<f64>,
    pub edge: Option<EdgeId>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct JointGraph {
    pub nodes: Vec<JointNode>,
    pub messages: Vec<Message>,
    pub candidates: Vec<Candidate>,
}

impl JointGraph {
    pub fn index_of(&self, id: NodeId) -> Option<usize> {
        self.nodes.iter().position(|n| n.source == Some(id))
    }

    pub fn count_kind(&self, kind: NodeKind) -> usize {
        self.nodes.iter().filter(|n| n.kind == kind).count()
    }

    pub fn count_messages(&self) -> BTreeMap<MessageType, usize> {
        let mut out = BTreeMap::new();
        for m in &self.messages {
            *out.entry(m.kind).or_default() += 1;
        }
        out
    }

    /// The same graph with every cross-layer message removed.
    pub fn without_conduits(&self) -> JointGraph {
        JointGraph {
            nodes: self.nodes.clone(),
            messages: self
                .messages
                .iter()
                .copied()
                .filter(|m| !m.kind.is_conduit())
                .collect(),
            candidates: self.candidates.clone(),
        }
    }

    /// Relabels node `i` as `perm[i]`; messages and candidates follow.
    pub fn permuted(&self, perm: &[usize]) -> Result<JointGraph> {
        let n = self.nodes.len();
        let mut seen = vec![false; n];
        if perm.len() != n
            || perm
                .iter()
                .any(|&p| p >= n || std::mem::replace(&mut seen[p], true))
        {
            return Err(Error::Dimension(
                "not a permutation of the node indices".into(),
            ));
        }
        let mut nodes = vec![None; n];
        for (i, node) in self.nodes.iter().enumerate() {
            nodes[perm[i]] = Some(node.clone());
        }
        Ok(JointGraph {
            nodes: nodes.into_iter().map(|n| n.expect("bijection")).collect(),
            messages: self
                .messages
                .iter()
                .map(|m| Message {
                    src: perm[m.src],
                    dst: perm[m.dst],
                    kind: m.kind,
                })
                .collect(),
            candidates: self
                .candidates
                .iter()
                .map(|c| Candidate {
                    src: perm[c.src],
                    dst: perm[c.dst],
                    ..c.clone()
                })
                .collect(),
        })
    }

    pub fn validate(&self, config: &ModelConfig) -> Result<()> {
        let n = self.nodes.len();
        for (i, node) in self.nodes.iter().enumerate() {
            let want = config.input_dim(node.kind);
            if node.features.len() != want {
                return Err(Error::Dimension(format!(
                    "{} node {i} has {} features, model expects {want}",
                    node.kind.name(),
                    node.features.len()
                )));
            }
            if node.features.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("features of node {i}")));
            }
        }
        for m in &self.messages {
            if m.src >= n || m.dst >= n {
                return Err(Error::Dimension("message endpoint out of range".into()));
            }
            let (s, d) = (self.nodes[m.src].kind, self.nodes[m.dst].kind);
            if !m.kind.connects(s, d) {
                return Err(Error::Schema(format!(
                    "{} message from a {} node to a {} node",
                    m.kind.name(),
                    s.name(),
                    d.name()
                )));
            }
        }
        for c in &self.candidates {
            if c.src >= n || c.dst >= n || c.features.len() != EDGE_FEATURE_DIM {
                return Err(Error::Dimension("malformed candidate edge".into()));
            }
            if self.nodes[c.src].kind != NodeKind::Local
                || self.nodes[c.dst].kind != NodeKind::Local
            {
                return Err(Error::Schema(
                    "candidate edge between non-local nodes".into(),
                ));
            }
        }
        Ok(())
    }
}

fn optional_block(
    out: &mut Vec<f64>,
    value: Option<&Vec<f64>>,
    dim: usize,
    what: &str,
    node: &SceneNode,
) -> Result<()> {
    match value {
        Some(v) if v.len() == dim => out.extend_from_slice(v),
        Some(v) => {
            return Err(Error::Dimension(format!(
                "{what} of {} has length {}, expected {dim}",
                node.id,
                v.len()
            )))
        }
        None => out.extend(std::iter::repeat_n(0.0, dim)),
    }
    Ok(())
}

fn node_features(node: &SceneNode, kind: NodeKind, config: &ModelConfig) -> Result<Vec<f64>> {
    let mut f = Vec::with_capacity(config.input_dim(kind));
    match kind {
        NodeKind::Local | NodeKind::Global => {
            let d = node
                .descriptor
                .as_ref()
                .ok_or_else(|| Error::Dimension(format!("object {} has no descriptor", node.id)))?;
            if d.len() != D_GEO {
                return Err(Error::Dimension(format!(
                    "descriptor of {} has length {}, expected {D_GEO}",
                    node.id,
                    d.len()
                )));
            }
            f.extend_from_slice(d);
            if kind == NodeKind::Global {
                optional_block(
                    &mut f,
                    node.class_scores.as_ref(),
                    config.num_node_classes(),
                    "class scores",
                    node,
                )?;
            }
            if config.object_embedding_dim > 0 {
                optional_block(
                    &mut f,
                    node.embedding.as_ref(),
                    config.object_embedding_dim,
                    "embedding",
                    node,
                )?;
            }
        }
        NodeKind::Concept => {
            if config.concept_dim == 0 {
                f.push(0.0);
            } else {
                optional_block(
                    &mut f,
                    node.embedding.as_ref(),
                    config.concept_dim,
                    "concept embedding",
                    node,
                )?;
            }
        }
    }
    Ok(f)
}

/// Builds the typed feature graph from a scene graph holding any subset of
/// the local, global and knowledge layers. Nodes are ordered local, global,
/// concept, each by id; the virtual ground is left out. With
/// `conduits = false` cross-layer edges carry no messages.
pub fn assemble_joint_graph(
    graph: &SceneGraph,
    config: &ModelConfig,
    conduits: bool,
) -> Result<JointGraph> {
    let mut joint = JointGraph::default();
    let mut index: HashMap<NodeId, usize> = HashMap::new();
    for kind in NodeKind::ALL {
        for node in graph.nodes() {
            if NodeKind::of(node.node_type) == Some(kind) {
                index.insert(node.id, joint.nodes.len());
                joint.nodes.push(JointNode {
                    kind,
                    source: Some(node.id),
                    features: node_features(node, kind, config)?,
                });
            }
        }
    }
    for e in graph.edges() {
        let (Some(&s), Some(&d)) = (index.get(&e.src), index.get(&e.dst)) else {
            continue;
        };
        let (forward, backward) = match e.edge_type {
            EdgeType::Proximal => (MessageType::Proximal, MessageType::Proximal),
            EdgeType::Contact => (MessageType::Contact, MessageType::Contact),
            EdgeType::Supports => (MessageType::SupportsDown, MessageType::SupportsUp),
            EdgeType::SameInstance => (MessageType::InstanceToGlobal, MessageType::InstanceToLocal),
            EdgeType::GroundedIn => (
                MessageType::GroundedToConcept,
                MessageType::GroundedToGlobal,
            ),
            EdgeType::Related => (MessageType::Related, MessageType::Related),
        };
        if forward.is_conduit() && !conduits {
            continue;
        }
        joint.messages.push(Message {
            src: s,
            dst: d,
            kind: forward,
        });
        joint.messages.push(Message {
            src: d,
            dst: s,
            kind: backward,
        });
        let local = |i: usize| joint.nodes[i].kind == NodeKind::Local;
        if e.edge_type == EdgeType::Proximal && local(s) && local(d) {
            let features = e
                .features
                .clone()
                .filter(|f| f.len() == EDGE_FEATURE_DIM)
                .ok_or_else(|| {
                    Error::Dimension(format!("proximal edge {} lacks edge features", e.id))
                })?;
            joint.candidates.push(Candidate {
                src: s,
                dst: d,
                features,
                edge: Some(e.id),
            });
        }
    }
    joint.validate(config)?;
    Ok(joint)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construct::{build_local_graph, ConstructConfig};
    use crate::segment::split_segments;
    use crate::synth::{generate, SceneSpec};

    fn local_graph() -> SceneGraph {
        let s = generate(&SceneSpec {
            seed: 3,
            ..SceneSpec::default()
        })
        .unwrap();
        let split = split_segments(&s.frames[0], 0.05, 10).unwrap();
        build_local_graph(&split.observations, &ConstructConfig::default()).unwrap()
    }

    #[test]
    fn local_only_is_degenerate_but_valid() {
        let g = local_graph();
        let j = assemble_joint_graph(&g, &ModelConfig::default(), true).unwrap();
        assert_eq!(j.count_kind(NodeKind::Local), g.node_count() - 1);
        assert_eq!(j.count_kind(NodeKind::Global), 0);
        assert!(j.messages.iter().all(|m| !m.kind.is_conduit()));
        assert_eq!(
            j.candidates.len(),
            g.edges_of_type(EdgeType::Proximal).count()
        );
        // ground edges are dropped
        let ground_edges = g.incident(g.ground().unwrap(), EdgeType::Supports).count();
        let geometric: usize = [EdgeType::Proximal, EdgeType::Contact, EdgeType::Supports]
            .iter()
            .map(|t| g.edges_of_type(*t).count())
            .sum();
        assert_eq!(j.messages.len(), 2 * (geometric - ground_edges));
    }

    #[test]
    fn wrong_score_width_is_rejected() {
        let mut g = local_graph();
        let first = g.nodes_of_type(NodeType::LocalObject).next().unwrap().id;
        g.update_node(first, |n| n.descriptor = Some(vec![0.0; 3]))
            .unwrap();
        assert!(matches!(
            assemble_joint_graph(&g, &ModelConfig::default(), true),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn permutation_round_trip() {
        let j = assemble_joint_graph(&local_graph(), &ModelConfig::default(), true).unwrap();
        let n = j.nodes.len();
        let mut perm: Vec<usize> = (0..n).collect();
        rand::seq::SliceRandom::shuffle(
            &mut perm[..],
            &mut <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(5),
        );
        let p = j.permuted(&perm).unwrap();
        let mut inv = vec![0; n];
        for (i, &q) in perm.iter().enumerate() {
            inv[q] = i;
        }
        assert_eq!(p.permuted(&inv).unwrap(), j);
        assert!(j.permuted(&vec![0; n]).is_err());
    }
}
