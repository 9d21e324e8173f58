use super::joint::{assemble_joint_graph, NodeKind};
use super::model::ModelParams;
use super::network::{argmax, forward};
use crate::error::Result;
use crate::fusion::Enrichment;
use crate::graph::{EdgeId, EdgeType, NodeId, SceneGraph};

#[derive(Debug, Clone, PartialEq)]
pub struct NodePrediction {
    pub node: NodeId,
    pub class: usize,
    pub label: String,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgePrediction {
    pub edge: Option<EdgeId>,
    pub src: NodeId,
    pub dst: NodeId,
    pub class: usize,
    pub relation: String,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FramePrediction {
    pub nodes: Vec<NodePrediction>,
    pub edges: Vec<EdgePrediction>,
    /// Class scores for the global instance of each matched local node.
    pub enrichment: Vec<(NodeId, Enrichment)>,
}

/// Classifies the local layer of `graph`. With `use_context` false the
/// cross-layer edges carry no messages, which equals running on the local
/// graph alone.
pub fn predict_frame(
    params: &ModelParams,
    graph: &SceneGraph,
    use_context: bool,
) -> Result<FramePrediction> {
    let joint = assemble_joint_graph(graph, &params.config, use_context)?;
    let out = forward(params, &joint)?;
    let config = &params.config;
    let mut pred = FramePrediction::default();
    for (i, node) in joint.nodes.iter().enumerate() {
        if node.kind != NodeKind::Local {
            continue;
        }
        let (Some(id), Some(scores)) = (node.source, out.node_probs[i].clone()) else {
            continue;
        };
        let class = argmax(&scores);
        for e in graph.outgoing(id, EdgeType::SameInstance) {
            pred.enrichment
                .push((e.dst, Enrichment::Scores(scores.clone())));
        }
        pred.nodes.push(NodePrediction {
            node: id,
            class,
            label: config.node_classes[class].clone(),
            scores,
        });
    }
    for (c, scores) in joint.candidates.iter().zip(out.edge_probs) {
        let (Some(src), Some(dst)) = (joint.nodes[c.src].source, joint.nodes[c.dst].source) else {
            continue;
        };
        let class = argmax(&scores);
        pred.edges.push(EdgePrediction {
            edge: c.edge,
            src,
            dst,
            class,
            relation: config.edge_classes[class].clone(),
            scores,
        });
    }
    pred.enrichment.sort_by_key(|(id, _)| *id);
    Ok(pred)
}

/// Writes predicted scores and labels onto the local nodes and predicted
/// relations onto the candidate edges.
pub fn annotate_graph(graph: &mut SceneGraph, pred: &FramePrediction) -> Result<()> {
    for n in &pred.nodes {
        graph.update_node(n.node, |s| {
            s.class_scores = Some(n.scores.clone());
            s.class_label = Some(n.label.clone());
            s.score_updates = 1;
        })?;
    }
    for e in &pred.edges {
        if let Some(id) = e.edge {
            graph.set_relation_label(id, Some(e.relation.clone()))?;
        }
    }
    Ok(())
}
