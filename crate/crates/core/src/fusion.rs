//! Persistent global graph maintenance: instance matching, geometry and
//! descriptor fusion, and the `same_instance` conduits that let global
//! context reach the current frame.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::construct::{attach_ground, relate_pair, ConstructConfig, Shape};
use crate::error::{Error, Result};
use crate::geometry::voxel_iou;
use crate::graph::{
    check_distribution, EdgeId, EdgeSpec, EdgeType, Layer, NodeId, NodeSpec, NodeType, SceneGraph,
};
use crate::segment::CENTROID_Z;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    pub match_iou_threshold: f64,
    /// Weight of a new observation in the descriptor blend; `None` is the
    /// running mean (`1 / observation_count`).
    pub descriptor_blend: Option<f64>,
    /// Refuse matches between nodes carrying different class labels.
    pub class_gate: bool,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            match_iou_threshold: 0.25,
            descriptor_blend: None,
            class_gate: false,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(self.match_iou_threshold) {
            return Err(Error::Config("match_iou_threshold must be in [0,1]".into()));
        }
        if let Some(w) = self.descriptor_blend {
            if !unit(w) {
                return Err(Error::Config("descriptor_blend must be in [0,1]".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Assignment {
    pub local: NodeId,
    pub global: NodeId,
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatchResult {
    pub assignments: Vec<Assignment>,
    pub new_instances: Vec<NodeId>,
}

/// Greedy one-to-one matching of local objects to global objects in
/// descending IoU order. Pairs below the threshold (or with zero overlap)
/// never match; ties go to the lower `(global, local)` pair.
pub fn match_instances(
    local: &SceneGraph,
    global: &SceneGraph,
    config: &FusionConfig,
) -> Result<MatchResult> {
    config.validate()?;
    let locals: Vec<_> = local.nodes_of_type(NodeType::LocalObject).collect();
    let globals: Vec<_> = global.nodes_of_type(NodeType::GlobalObject).collect();

    let mut candidates: Vec<Assignment> = Vec::new();
    for l in &locals {
        let lg = l.geometry.as_ref().expect("objects carry geometry");
        let Some((llo, lhi)) = lg.grid.cell_bounds() else {
            continue;
        };
        for g in &globals {
            let gg = g.geometry.as_ref().expect("objects carry geometry");
            if gg.grid.resolution() != lg.grid.resolution() {
                return Err(Error::ResolutionMismatch(
                    lg.grid.resolution(),
                    gg.grid.resolution(),
                ));
            }
            let Some((glo, ghi)) = gg.grid.cell_bounds() else {
                continue;
            };
            if (0..3).any(|k| llo[k] > ghi[k] || glo[k] > lhi[k]) {
                continue;
            }
            if config.class_gate {
                if let (Some(a), Some(b)) = (&l.class_label, &g.class_label) {
                    if a != b {
                        continue;
                    }
                }
            }
            let iou = voxel_iou(&lg.grid, &gg.grid)?;
            if iou > 0.0 && iou >= config.match_iou_threshold {
                candidates.push(Assignment {
                    local: l.id,
                    global: g.id,
                    iou,
                });
            }
        }
    }
    candidates.sort_by(|a, b| {
        b.iou
            .total_cmp(&a.iou)
            .then(a.global.cmp(&b.global))
            .then(a.local.cmp(&b.local))
    });

    let mut used_local = BTreeSet::new();
    let mut used_global = BTreeSet::new();
    let mut result = MatchResult::default();
    for c in candidates {
        if used_local.contains(&c.local) || used_global.contains(&c.global) {
            continue;
        }
        used_local.insert(c.local);
        used_global.insert(c.global);
        result.assignments.push(c);
    }
    result.assignments.sort_by_key(|a| a.local);
    result.new_instances = locals
        .iter()
        .map(|l| l.id)
        .filter(|id| !used_local.contains(id))
        .collect();
    Ok(result)
}

/// What [`fuse_frame`] changed.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FuseOutcome {
    /// Local-graph node id -> id of its copy in the fused graph.
    pub local_to_joint: BTreeMap<NodeId, NodeId>,
    /// Local-graph node id -> global instance it was fused into or created as.
    pub instance_of: BTreeMap<NodeId, NodeId>,
    pub same_instance: Vec<EdgeId>,
    pub created: Vec<NodeId>,
    pub updated: Vec<NodeId>,
}

/// Fuses one local graph into the persistent graph.
///
/// The previous frame's local layer is dropped, the new local objects and
/// their edges are copied in, matched instances absorb the new geometry and
/// descriptor, unmatched locals become new global instances, and geometric
/// edges are recomputed for the affected global nodes only.
pub fn fuse_frame(
    global: &mut SceneGraph,
    local: &SceneGraph,
    matches: &MatchResult,
    fusion: &FusionConfig,
    construct: &ConstructConfig,
) -> Result<FuseOutcome> {
    fusion.validate()?;
    check_match(global, local, matches)?;

    global.remove_layer(Layer::Local);
    let ground = match global.ground() {
        Some(g) => g,
        None => global.add_node(NodeSpec::new(NodeType::VirtualGround))?,
    };

    let mut out = FuseOutcome::default();
    for n in local.nodes_of_type(NodeType::LocalObject) {
        let id = global.add_node(n.spec.clone())?;
        out.local_to_joint.insert(n.id, id);
    }
    let local_ground = local.ground();
    for e in local.edges() {
        let src = match out.local_to_joint.get(&e.src) {
            Some(id) => *id,
            None if Some(e.src) == local_ground => ground,
            None => continue,
        };
        let Some(&dst) = out.local_to_joint.get(&e.dst) else {
            continue;
        };
        let mut spec = e.spec.clone();
        spec.src = src;
        spec.dst = dst;
        global.add_edge(spec)?;
    }

    for a in &matches.assignments {
        let obs = local.node(a.local).expect("checked");
        let obs_geom = obs.geometry.clone().expect("objects carry geometry");
        let obs_desc = obs.descriptor.clone();
        global.update_node(a.global, |g| {
            let geom = g.geometry.as_mut().expect("objects carry geometry");
            geom.grid
                .union_with(&obs_geom.grid)
                .expect("resolution checked during matching");
            geom.bbox = geom.bbox.union(&obs_geom.bbox);
            g.observation_count += 1;
            if let Some(new) = &obs_desc {
                match &mut g.descriptor {
                    Some(d) if d.len() == new.len() => {
                        let w = fusion
                            .descriptor_blend
                            .unwrap_or(1.0 / g.observation_count as f64);
                        for (x, y) in d.iter_mut().zip(new) {
                            *x += w * (y - *x);
                        }
                    }
                    _ => g.descriptor = Some(new.clone()),
                }
            }
        })?;
        let e = global.add_edge(EdgeSpec::new(
            out.local_to_joint[&a.local],
            a.global,
            EdgeType::SameInstance,
        ))?;
        out.same_instance.push(e);
        out.instance_of.insert(a.local, a.global);
        out.updated.push(a.global);
    }

    for l in &matches.new_instances {
        let n = local.node(*l).expect("checked");
        let mut spec = NodeSpec::object(
            NodeType::GlobalObject,
            n.geometry.clone().expect("objects carry geometry"),
        );
        spec.descriptor = n.descriptor.clone();
        spec.observation_count = 1;
        spec.level = n.level;
        let id = global.add_node(spec)?;
        out.instance_of.insert(*l, id);
        out.created.push(id);
    }

    let affected: BTreeSet<NodeId> = out.updated.iter().chain(&out.created).copied().collect();
    refresh_global_edges(global, ground, &affected, construct)?;
    Ok(out)
}

fn check_match(global: &SceneGraph, local: &SceneGraph, m: &MatchResult) -> Result<()> {
    let is =
        |g: &SceneGraph, id: NodeId, ty: NodeType| g.node(id).is_some_and(|n| n.node_type == ty);
    let mut seen_local = BTreeSet::new();
    let mut seen_global = BTreeSet::new();
    for a in &m.assignments {
        if !is(local, a.local, NodeType::LocalObject) {
            return Err(Error::StaleMatch(format!("local node {} missing", a.local)));
        }
        if !is(global, a.global, NodeType::GlobalObject) {
            return Err(Error::StaleMatch(format!(
                "global node {} missing",
                a.global
            )));
        }
        if !seen_local.insert(a.local) || !seen_global.insert(a.global) {
            return Err(Error::StaleMatch("assignment is not one-to-one".into()));
        }
    }
    for l in &m.new_instances {
        if !is(local, *l, NodeType::LocalObject) {
            return Err(Error::StaleMatch(format!("local node {l} missing")));
        }
        if !seen_local.insert(*l) {
            return Err(Error::StaleMatch(format!("local node {l} listed twice")));
        }
    }
    if seen_local.len() != local.nodes_of_type(NodeType::LocalObject).count() {
        return Err(Error::StaleMatch(
            "match does not cover every local node".into(),
        ));
    }
    Ok(())
}

/// Recomputes proximal/contact/supports edges touching `affected` global
/// objects, then re-attaches the ground and refreshes levels.
fn refresh_global_edges(
    graph: &mut SceneGraph,
    ground: NodeId,
    affected: &BTreeSet<NodeId>,
    config: &ConstructConfig,
) -> Result<()> {
    let stale: BTreeSet<EdgeId> = affected
        .iter()
        .flat_map(|id| {
            [EdgeType::Proximal, EdgeType::Contact, EdgeType::Supports]
                .into_iter()
                .flat_map(|ty| {
                    graph
                        .incident(*id, ty)
                        .filter(|e| e.src != ground)
                        .map(|e| e.id)
                })
                .collect::<Vec<_>>()
        })
        .collect();
    for e in stale {
        graph.remove_edge(e)?;
    }
    let ground_edges: Vec<EdgeId> = graph
        .outgoing(ground, EdgeType::Supports)
        .filter(|e| {
            graph
                .node(e.dst)
                .is_some_and(|n| n.node_type == NodeType::GlobalObject)
        })
        .map(|e| e.id)
        .collect();
    for e in ground_edges {
        graph.remove_edge(e)?;
    }

    let globals: Vec<NodeId> = graph
        .nodes_of_type(NodeType::GlobalObject)
        .map(|n| n.id)
        .collect();
    let snapshot: BTreeMap<NodeId, (crate::graph::Geometry, f64)> = globals
        .iter()
        .map(|id| {
            let n = graph.node(*id).expect("listed");
            let geom = n.geometry.clone().expect("objects carry geometry");
            let cz = n
                .descriptor
                .as_ref()
                .and_then(|d| d.get(CENTROID_Z).copied())
                .unwrap_or_else(|| geom.bbox.center().z);
            (*id, (geom, cz))
        })
        .collect();
    let shape = |id: &NodeId| {
        let (g, cz) = &snapshot[id];
        Shape {
            grid: &g.grid,
            bbox: &g.bbox,
            centroid_z: *cz,
        }
    };
    for (i, a) in globals.iter().enumerate() {
        for b in &globals[i + 1..] {
            if !affected.contains(a) && !affected.contains(b) {
                continue;
            }
            let (sa, sb) = (shape(a), shape(b));
            let proposed =
                sa.bbox.center().distance(&sb.bbox.center()) <= config.edge_distance_threshold;
            relate_pair(graph, (*a, sa), (*b, sb), proposed, config)?;
        }
    }
    attach_ground(graph, ground, &globals, config.ground_z_quantile)?;
    graph.recompute_levels()
}

/// Expectation features pushed onto a global node after inference.
#[derive(Debug, Clone, PartialEq)]
pub enum Enrichment {
    /// Class probability vector, folded into the node's running mean.
    Scores(Vec<f64>),
    /// External embedding, replacing any previous one.
    Embedding(Vec<f64>),
}

/// Applies enrichments to global nodes. All updates are validated before
/// any is applied. `class_names[k]` names score component `k`.
pub fn enrich_global_features(
    graph: &mut SceneGraph,
    updates: &[(NodeId, Enrichment)],
    class_names: &[String],
) -> Result<()> {
    let mut embed_dim = graph
        .nodes_of_type(NodeType::GlobalObject)
        .find_map(|n| n.embedding.as_ref().map(Vec::len));
    for (id, up) in updates {
        let node = graph.node(*id).ok_or(Error::UnknownNode(*id))?;
        if node.node_type != NodeType::GlobalObject {
            return Err(Error::InvalidNode(format!("{id} is not a global object")));
        }
        match up {
            Enrichment::Scores(s) => {
                check_distribution(s).map_err(Error::InvalidNode)?;
                if s.len() != class_names.len() {
                    return Err(Error::Dimension(format!(
                        "{} scores for {} classes",
                        s.len(),
                        class_names.len()
                    )));
                }
                if let Some(old) = &node.class_scores {
                    if old.len() != s.len() {
                        return Err(Error::Dimension(format!(
                            "{id} holds {} scores, update has {}",
                            old.len(),
                            s.len()
                        )));
                    }
                }
            }
            Enrichment::Embedding(v) => {
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::NonFinite(format!("embedding for {id}")));
                }
                match embed_dim {
                    Some(d) if d != v.len() => {
                        return Err(Error::Dimension(format!(
                            "embedding of dim {} where {d} expected",
                            v.len()
                        )))
                    }
                    _ => embed_dim = Some(v.len()),
                }
            }
        }
    }
    for (id, up) in updates {
        graph.update_node(*id, |n| match up {
            Enrichment::Scores(s) => {
                let k = n.score_updates as f64 + 1.0;
                let mean = match n.class_scores.take() {
                    Some(old) => old.iter().zip(s).map(|(o, x)| o + (x - o) / k).collect(),
                    None => s.clone(),
                };
                n.class_label = argmax(&mean).map(|i| class_names[i].clone());
                n.class_scores = Some(renormalize(mean));
                n.score_updates += 1;
            }
            Enrichment::Embedding(v) => n.embedding = Some(v.clone()),
        })?;
    }
    Ok(())
}

// The running mean of distributions is a distribution; this only removes
// accumulated rounding so the stored vector keeps passing validation.
fn renormalize(mut v: Vec<f64>) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    if s > 0.0 && (s - 1.0).abs() > 1e-12 {
        v.iter_mut().for_each(|x| *x /= s);
    }
    v
}

/// Index of the largest component; the first one wins ties.
pub fn argmax(v: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, x) in v.iter().enumerate() {
        if best.is_none_or(|(_, b)| *x > b) {
            best = Some((i, *x));
        }
    }
    best.map(|b| b.0)
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::construct::build_local_graph;
    use crate::geometry::Point3;
    use crate::segment::SegmentObservation;

    fn cube(seg: u32, origin: [f64; 3], size: f64) -> SegmentObservation {
        let mut pts = Vec::new();
        let n = (size / 0.02).ceil() as usize;
        for i in 0..=n {
            for j in 0..=n {
                for k in 0..=n {
                    let f = |o: f64, t: usize| o + size * t as f64 / n as f64;
                    pts.push(Point3::new(
                        f(origin[0], i),
                        f(origin[1], j),
                        f(origin[2], k),
                    ));
                }
            }
        }
        SegmentObservation::from_points(seg, pts, 0.05, None).unwrap()
    }

    fn local(obs: &[SegmentObservation]) -> SceneGraph {
        build_local_graph(obs, &ConstructConfig::default()).unwrap()
    }

    fn step(global: &mut SceneGraph, obs: &[SegmentObservation]) -> (MatchResult, FuseOutcome) {
        let l = local(obs);
        let m = match_instances(&l, global, &FusionConfig::default()).unwrap();
        let out = fuse_frame(
            global,
            &l,
            &m,
            &FusionConfig::default(),
            &ConstructConfig::default(),
        )
        .unwrap();
        global.validate().unwrap();
        (m, out)
    }

    fn global_count(g: &SceneGraph) -> usize {
        g.nodes_of_type(NodeType::GlobalObject).count()
    }

    #[test]
    fn exact_copy_matches_with_iou_one() {
        let mut g = SceneGraph::new();
        let a = cube(1, [0.0, 0.0, 0.0], 0.3);
        step(&mut g, std::slice::from_ref(&a));
        let l = local(&[a]);
        let m = match_instances(&l, &g, &FusionConfig::default()).unwrap();
        assert_eq!(m.assignments.len(), 1);
        assert_eq!(m.assignments[0].iou, 1.0);
        assert!(m.new_instances.is_empty());
    }

    #[test]
    fn disjoint_local_is_new() {
        let mut g = SceneGraph::new();
        step(&mut g, &[cube(1, [0.0, 0.0, 0.0], 0.3)]);
        let l = local(&[cube(1, [3.0, 0.0, 0.0], 0.3)]);
        let m = match_instances(&l, &g, &FusionConfig::default()).unwrap();
        assert!(m.assignments.is_empty());
        assert_eq!(m.new_instances.len(), 1);
    }

    #[test]
    fn fusing_same_frame_twice() {
        let mut g = SceneGraph::new();
        let obs = [cube(1, [0.0, 0.0, 0.0], 0.3), cube(2, [1.0, 0.0, 0.0], 0.2)];
        step(&mut g, &obs);
        assert_eq!(global_count(&g), 2);
        let cells: Vec<usize> = g
            .nodes_of_type(NodeType::GlobalObject)
            .map(|n| n.geometry.as_ref().unwrap().grid.len())
            .collect();
        let (_, out) = step(&mut g, &obs);
        assert_eq!(global_count(&g), 2);
        assert_eq!(out.same_instance.len(), 2);
        for (n, c) in g.nodes_of_type(NodeType::GlobalObject).zip(cells) {
            assert_eq!(n.observation_count, 2);
            assert_eq!(n.geometry.as_ref().unwrap().grid.len(), c);
        }
        // only the latest frame's local layer is kept
        assert_eq!(g.nodes_of_type(NodeType::LocalObject).count(), 2);
    }

    #[test]
    fn disjoint_frames_add_up() {
        let mut g = SceneGraph::new();
        step(
            &mut g,
            &[cube(1, [0.0, 0.0, 0.0], 0.3), cube(2, [1.0, 0.0, 0.0], 0.2)],
        );
        step(&mut g, &[cube(1, [3.0, 0.0, 0.0], 0.3)]);
        assert_eq!(global_count(&g), 3);
    }

    #[test]
    fn each_local_has_one_conduit_or_new_instance() {
        let mut g = SceneGraph::new();
        step(&mut g, &[cube(1, [0.0, 0.0, 0.0], 0.3)]);
        let (m, out) = step(
            &mut g,
            &[cube(5, [0.0, 0.0, 0.0], 0.3), cube(6, [2.0, 0.0, 0.0], 0.3)],
        );
        assert_eq!(m.assignments.len() + m.new_instances.len(), 2);
        for (l, joint) in &out.local_to_joint {
            let conduits = g.incident(*joint, EdgeType::SameInstance).count();
            let is_new = m.new_instances.contains(l);
            assert!(conduits == 1 && !is_new || conduits == 0 && is_new);
        }
    }

    #[test]
    fn stale_match_rejected() {
        let mut g = SceneGraph::new();
        let l = local(&[cube(1, [0.0, 0.0, 0.0], 0.3)]);
        let stale = MatchResult {
            assignments: vec![],
            new_instances: vec![NodeId(77)],
        };
        assert!(matches!(
            fuse_frame(
                &mut g,
                &l,
                &stale,
                &FusionConfig::default(),
                &ConstructConfig::default()
            ),
            Err(Error::StaleMatch(_))
        ));
    }

    /// Exhaustive optimal assignment maximizing total IoU (bitmask DP).
    #[allow(clippy::needless_range_loop)]
    fn optimal_total(iou: &[Vec<f64>], thr: f64) -> f64 {
        let (nl, ng) = (iou.len(), iou[0].len());
        let mut best = vec![f64::NEG_INFINITY; 1 << ng];
        best[0] = 0.0;
        for row in iou.iter().take(nl) {
            let mut next = best.clone();
            for mask in 0..(1usize << ng) {
                if best[mask] == f64::NEG_INFINITY {
                    continue;
                }
                for (j, v) in row.iter().enumerate() {
                    if mask & (1 << j) == 0 && *v >= thr && *v > 0.0 {
                        let m2 = mask | (1 << j);
                        next[m2] = next[m2].max(best[mask] + v);
                    }
                }
            }
            best = next;
        }
        best.into_iter().fold(f64::NEG_INFINITY, f64::max)
    }

    #[test]
    fn greedy_equals_optimal_on_reobservations() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let origins: Vec<[f64; 3]> = (0..20)
            .map(|i| [i as f64 * 0.6, (i % 3) as f64 * 0.9, 0.0])
            .collect();
        let mut g = SceneGraph::new();
        let first: Vec<_> = origins
            .iter()
            .enumerate()
            .map(|(i, o)| cube(i as u32, *o, 0.3))
            .collect();
        step(&mut g, &first);
        let perturbed: Vec<_> = origins
            .iter()
            .enumerate()
            .map(|(i, o)| {
                let j = |r: &mut ChaCha8Rng| r.random_range(-0.06..0.06);
                cube(
                    100 + i as u32,
                    [o[0] + j(&mut rng), o[1] + j(&mut rng), o[2]],
                    0.3,
                )
            })
            .collect();
        let l = local(&perturbed);
        let m = match_instances(&l, &g, &FusionConfig::default()).unwrap();

        let locals: Vec<_> = l.nodes_of_type(NodeType::LocalObject).collect();
        let globals: Vec<_> = g.nodes_of_type(NodeType::GlobalObject).collect();
        let iou: Vec<Vec<f64>> = locals
            .iter()
            .map(|a| {
                globals
                    .iter()
                    .map(|b| {
                        voxel_iou(
                            &a.geometry.as_ref().unwrap().grid,
                            &b.geometry.as_ref().unwrap().grid,
                        )
                        .unwrap()
                    })
                    .collect()
            })
            .collect();
        let greedy_total: f64 = m.assignments.iter().map(|a| a.iou).sum();
        let optimal = optimal_total(&iou, 0.25);
        assert!(
            (greedy_total - optimal).abs() < 1e-12,
            "{greedy_total} vs {optimal}"
        );
        assert_eq!(m.assignments.len(), 20);
    }

    #[test]
    fn lowering_threshold_never_loses_matches() {
        let mut g = SceneGraph::new();
        step(
            &mut g,
            &[cube(1, [0.0, 0.0, 0.0], 0.3), cube(2, [1.0, 0.0, 0.0], 0.3)],
        );
        let l = local(&[
            cube(1, [0.1, 0.0, 0.0], 0.3),
            cube(2, [1.17, 0.0, 0.0], 0.3),
        ]);
        let mut last = usize::MAX;
        for thr in [0.9, 0.6, 0.4, 0.2, 0.05, 0.0] {
            let cfg = FusionConfig {
                match_iou_threshold: thr,
                ..FusionConfig::default()
            };
            let m = match_instances(&l, &g, &cfg).unwrap();
            assert!(m.assignments.iter().all(|a| a.iou >= thr));
            if last != usize::MAX {
                assert!(m.assignments.len() >= last);
            }
            last = m.assignments.len();
        }
    }

    fn fresh_global() -> (SceneGraph, NodeId) {
        let mut g = SceneGraph::new();
        step(&mut g, &[cube(1, [0.0, 0.0, 0.0], 0.3)]);
        let id = g.nodes_of_type(NodeType::GlobalObject).next().unwrap().id;
        (g, id)
    }

    fn names(k: usize) -> Vec<String> {
        (0..k).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn enrichment_argmax_and_mean() {
        let (mut g, id) = fresh_global();
        enrich_global_features(
            &mut g,
            &[(id, Enrichment::Scores(vec![0.7, 0.2, 0.1]))],
            &names(3),
        )
        .unwrap();
        assert_eq!(g.node(id).unwrap().class_label.as_deref(), Some("c0"));

        let (mut g, id) = fresh_global();
        for s in [vec![1.0, 0.0], vec![0.0, 1.0]] {
            enrich_global_features(&mut g, &[(id, Enrichment::Scores(s))], &names(2)).unwrap();
        }
        assert_eq!(
            g.node(id).unwrap().class_scores.as_deref(),
            Some(&[0.5, 0.5][..])
        );
    }

    #[test]
    fn enrichment_matches_fold_oracle() {
        let (mut g, id) = fresh_global();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut seq = Vec::new();
        for _ in 0..37 {
            let raw: Vec<f64> = (0..5).map(|_| rng.random::<f64>() + 1e-3).collect();
            let s: f64 = raw.iter().sum();
            let v: Vec<f64> = raw.iter().map(|x| x / s).collect();
            enrich_global_features(&mut g, &[(id, Enrichment::Scores(v.clone()))], &names(5))
                .unwrap();
            seq.push(v);
        }
        let mean: Vec<f64> = (0..5)
            .map(|k| seq.iter().map(|v| v[k]).sum::<f64>() / seq.len() as f64)
            .collect();
        let stored = g.node(id).unwrap().class_scores.clone().unwrap();
        for k in 0..5 {
            assert!((stored[k] - mean[k]).abs() < 1e-9);
        }
    }

    #[test]
    fn enrichment_errors() {
        let (mut g, id) = fresh_global();
        assert!(enrich_global_features(
            &mut g,
            &[(id, Enrichment::Scores(vec![0.7, 0.7]))],
            &names(2)
        )
        .is_err());
        assert!(
            enrich_global_features(&mut g, &[(id, Enrichment::Scores(vec![1.0]))], &names(2))
                .is_err()
        );
        enrich_global_features(
            &mut g,
            &[(id, Enrichment::Embedding(vec![1.0, 2.0]))],
            &names(2),
        )
        .unwrap();
        assert!(matches!(
            enrich_global_features(&mut g, &[(id, Enrichment::Embedding(vec![1.0]))], &names(2)),
            Err(Error::Dimension(_))
        ));
    }
}
