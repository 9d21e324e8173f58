//! Supervised batches from labelled frames, optionally with a teacher-forced
//! global layer built from generator ground truth.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::joint::{assemble_joint_graph, NodeKind};
use super::model::ModelConfig;
use super::network::TrainBatch;
use crate::construct::{build_local_graph, ConstructConfig};
use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::geometry::DEFAULT_RESOLUTION;
use crate::graph::{EdgeSpec, EdgeType, NodeId, NodeSpec, NodeType, SceneGraph};
use crate::segment::{split_segments, DEFAULT_MIN_POINTS};
use crate::synth::{corrupt, SyntheticScene};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextMode {
    /// Local graph only.
    Off,
    /// Global nodes copied from the generator's ground truth, carrying
    /// one-hot class scores, linked to their observations by identity.
    GroundTruth,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchOptions {
    pub resolution: f64,
    pub min_points: usize,
    pub construct: ConstructConfig,
    pub context: ContextMode,
    /// Share of local class labels flipped before supervision.
    pub label_noise: f64,
    pub noise_seed: u64,
}

impl Default for BatchOptions {
    fn default() -> Self {
        Self {
            resolution: DEFAULT_RESOLUTION,
            min_points: DEFAULT_MIN_POINTS,
            construct: ConstructConfig::default(),
            context: ContextMode::Off,
            label_noise: 0.0,
            noise_seed: 0,
        }
    }
}

/// Ground-truth relations of one frame, by segment id.
#[derive(Debug, Clone, Default)]
pub struct RelationIndex {
    supports: BTreeSet<(u32, u32)>,
    contact: BTreeSet<(u32, u32)>,
    supporters: BTreeMap<u32, BTreeSet<u32>>,
}

impl RelationIndex {
    /// Pair label, first match wins: supports, supported_by, contact,
    /// same_supporter (a common supporter in the frame), none.
    pub fn label(&self, a: u32, b: u32) -> &'static str {
        if self.supports.contains(&(a, b)) {
            "supports"
        } else if self.supports.contains(&(b, a)) {
            "supported_by"
        } else if self.contact.contains(&(a.min(b), a.max(b))) {
            "contact"
        } else {
            match (self.supporters.get(&a), self.supporters.get(&b)) {
                (Some(x), Some(y)) if !x.is_disjoint(y) => "same_supporter",
                _ => "none",
            }
        }
    }
}

/// Indexes the `supports` and `contact` ground-truth relations of a frame;
/// other relation names are ignored.
pub fn relation_labels(frame: &Frame) -> RelationIndex {
    let mut idx = RelationIndex::default();
    for (a, b, r) in &frame.gt_relations {
        match r.as_str() {
            "supports" => {
                idx.supports.insert((*a, *b));
                idx.supporters.entry(*b).or_default().insert(*a);
            }
            "contact" => {
                idx.contact.insert((*a.min(b), *a.max(b)));
            }
            _ => {}
        }
    }
    idx
}

fn class_of(names: &[String], name: &str) -> Result<usize> {
    names
        .iter()
        .position(|n| n == name)
        .ok_or_else(|| Error::Schema(format!("class {name} is not in the model's class list")))
}

/// Adds the generator's objects as global nodes with one-hot class scores,
/// their supports / contact edges, and a `same_instance` edge from every
/// local node to the object its segment shows.
pub fn add_ground_truth_context(
    graph: &mut SceneGraph,
    scene: &SyntheticScene,
    identity: &BTreeMap<u32, usize>,
    node_classes: &[String],
) -> Result<Vec<NodeId>> {
    let ground = match graph.ground() {
        Some(g) => g,
        None => graph.add_node(NodeSpec::new(NodeType::VirtualGround))?,
    };
    let mut globals = Vec::with_capacity(scene.objects.len());
    for (obj, &src) in scene.objects.iter().zip(&scene.object_nodes) {
        let node = scene
            .ground_truth
            .node(src)
            .ok_or(Error::UnknownNode(src))?;
        let mut spec = node.spec.clone();
        let k = class_of(node_classes, &obj.class)?;
        let mut scores = vec![0.0; node_classes.len()];
        scores[k] = 1.0;
        spec.class_scores = Some(scores);
        spec.score_updates = 1;
        globals.push(graph.add_node(spec)?);
    }
    graph.add_edge(EdgeSpec::new(ground, globals[0], EdgeType::Supports))?;
    for &(a, b) in &scene.supports {
        graph.add_edge(EdgeSpec::new(globals[a], globals[b], EdgeType::Supports))?;
    }
    for &(a, b) in &scene.contacts {
        graph.add_edge(EdgeSpec::new(globals[a], globals[b], EdgeType::Contact))?;
    }
    let locals: Vec<(NodeId, Option<u32>)> = graph
        .nodes_of_type(NodeType::LocalObject)
        .map(|n| (n.id, n.segment_id))
        .collect();
    for (id, seg) in locals {
        if let Some(obj) = seg.and_then(|s| identity.get(&s)) {
            graph.add_edge(EdgeSpec::new(id, globals[*obj], EdgeType::SameInstance))?;
        }
    }
    Ok(globals)
}

/// One batch from a labelled frame. `context` supplies the scene and frame
/// index for [`ContextMode::GroundTruth`]. Labels come from `frame` (after
/// optional corruption); context scores always from the clean scene.
pub fn frame_batch(
    frame: &Frame,
    context: Option<(&SyntheticScene, usize)>,
    config: &ModelConfig,
    opts: &BatchOptions,
) -> Result<TrainBatch> {
    let split = split_segments(frame, opts.resolution, opts.min_points)?;
    let mut graph = build_local_graph(&split.observations, &opts.construct)?;
    if opts.context == ContextMode::GroundTruth {
        let (scene, fi) = context.ok_or_else(|| {
            Error::Config("ground-truth context needs the generating scene".into())
        })?;
        let identity = scene
            .identity
            .get(fi)
            .ok_or_else(|| Error::Config(format!("scene has no frame {fi}")))?;
        add_ground_truth_context(&mut graph, scene, identity, &config.node_classes)?;
    }
    let labelled = if opts.label_noise > 0.0 {
        corrupt(
            frame,
            opts.label_noise,
            opts.noise_seed ^ frame.frame_id.wrapping_mul(0x9e37_79b9_7f4a_7c15),
        )
    } else {
        frame.clone()
    };
    let joint = assemble_joint_graph(&graph, config, true)?;
    let segment_of = |i: usize| -> Option<u32> {
        joint.nodes[i]
            .source
            .and_then(|id| graph.node(id))
            .and_then(|n| n.segment_id)
    };
    let mut node_labels = Vec::new();
    for (i, n) in joint.nodes.iter().enumerate() {
        if n.kind != NodeKind::Local {
            continue;
        }
        if let Some(class) = segment_of(i).and_then(|s| labelled.gt_class.get(&s)) {
            node_labels.push((i, class_of(&config.node_classes, class)?));
        }
    }
    let relations = relation_labels(frame);
    let mut edge_labels = Vec::new();
    for (c, cand) in joint.candidates.iter().enumerate() {
        if let (Some(a), Some(b)) = (segment_of(cand.src), segment_of(cand.dst)) {
            edge_labels.push((c, class_of(&config.edge_classes, relations.label(a, b))?));
        }
    }
    Ok(TrainBatch {
        graph: joint,
        node_labels,
        edge_labels,
    })
}

/// One batch per frame of a generated scene.
pub fn scene_batches(
    scene: &SyntheticScene,
    config: &ModelConfig,
    opts: &BatchOptions,
) -> Result<Vec<TrainBatch>> {
    scene
        .frames
        .iter()
        .enumerate()
        .map(|(i, f)| frame_batch(f, Some((scene, i)), config, opts))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gnn::joint::MessageType;
    use crate::synth::{generate, SceneSpec};

    #[test]
    fn relation_precedence() {
        let frame = Frame {
            frame_id: 0,
            points: vec![],
            segment_ids: vec![],
            gt_class: BTreeMap::new(),
            gt_relations: vec![
                (1, 2, "supports".into()),
                (1, 3, "supports".into()),
                (3, 2, "contact".into()),
                (4, 5, "left_of".into()),
            ],
        };
        let r = relation_labels(&frame);
        assert_eq!(r.label(1, 2), "supports");
        assert_eq!(r.label(2, 1), "supported_by");
        assert_eq!(r.label(2, 3), "contact");
        assert_eq!(r.label(4, 5), "none");
        let mut f2 = frame.clone();
        f2.gt_relations.retain(|x| x.2 != "contact");
        assert_eq!(relation_labels(&f2).label(2, 3), "same_supporter");
    }

    #[test]
    fn context_batch_composition() {
        let scene = generate(&SceneSpec {
            seed: 5,
            frames: 2,
            dropout: 0.3,
            ..SceneSpec::default()
        })
        .unwrap();
        let config = ModelConfig::default();
        let off = scene_batches(&scene, &config, &BatchOptions::default()).unwrap();
        let on = scene_batches(
            &scene,
            &config,
            &BatchOptions {
                context: ContextMode::GroundTruth,
                ..BatchOptions::default()
            },
        )
        .unwrap();
        for (fi, (a, b)) in off.iter().zip(&on).enumerate() {
            let locals = scene.frames[fi].segments().len();
            assert_eq!(a.graph.count_kind(NodeKind::Local), locals);
            assert_eq!(b.graph.count_kind(NodeKind::Global), scene.objects.len());
            let conduits = b.graph.count_messages();
            assert_eq!(conduits[&MessageType::InstanceToLocal], locals);
            assert_eq!(a.node_labels, b.node_labels);
            assert_eq!(a.edge_labels, b.edge_labels);
            // local part identical
            assert_eq!(a.graph.nodes[..locals], b.graph.nodes[..locals]);
        }
    }

    #[test]
    fn noisy_labels_flip_exactly() {
        let scene = generate(&SceneSpec {
            seed: 8,
            num_supporters: 3,
            ..SceneSpec::default()
        })
        .unwrap();
        let config = ModelConfig::default();
        let clean = frame_batch(&scene.frames[0], None, &config, &BatchOptions::default()).unwrap();
        let noisy = frame_batch(
            &scene.frames[0],
            None,
            &config,
            &BatchOptions {
                label_noise: 0.3,
                noise_seed: 1,
                ..BatchOptions::default()
            },
        )
        .unwrap();
        let flips = clean
            .node_labels
            .iter()
            .zip(&noisy.node_labels)
            .filter(|(a, b)| a != b)
            .count();
        assert_eq!(
            flips,
            (0.3 * clean.node_labels.len() as f64).round() as usize
        );
    }
}
