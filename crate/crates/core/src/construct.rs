//! Local scene-graph construction: distance-based edge proposals, voxel
//! contact, support inference and support-hierarchy levels.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{same_resolution, Aabb, Point3, VoxelGrid};
use crate::graph::{EdgeSpec, EdgeType, Geometry, NodeId, NodeSpec, NodeType, SceneGraph};
use crate::segment::SegmentObservation;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstructConfig {
    /// Maximum box-center distance for a proposed (proximal) edge, meters.
    pub edge_distance_threshold: f64,
    /// Chebyshev distance in cells under which two grids are in contact.
    pub contact_tolerance: u32,
    /// Minimum share of the supported footprint lying over the supporter.
    pub support_footprint_overlap: f64,
    /// Height band above the lowest observed cell, as a fraction of the
    /// frame's z-range, in which unsupported objects rest on the ground.
    pub ground_z_quantile: f64,
}

impl Default for ConstructConfig {
    fn default() -> Self {
        Self {
            edge_distance_threshold: 0.5,
            contact_tolerance: 1,
            support_footprint_overlap: 0.3,
            ground_z_quantile: 0.05,
        }
    }
}

impl ConstructConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !(self.edge_distance_threshold.is_finite() && self.edge_distance_threshold >= 0.0) {
            return Err(Error::Config("edge_distance_threshold must be >= 0".into()));
        }
        if !unit(self.support_footprint_overlap) {
            return Err(Error::Config(
                "support_footprint_overlap must be in [0,1]".into(),
            ));
        }
        if !unit(self.ground_z_quantile) {
            return Err(Error::Config("ground_z_quantile must be in [0,1]".into()));
        }
        Ok(())
    }
}

/// Geometry needed by the pairwise detectors, borrowed from either a
/// segment observation or a graph node.
#[derive(Debug, Clone, Copy)]
pub struct Shape<'a> {
    pub grid: &'a VoxelGrid,
    pub bbox: &'a Aabb,
    pub centroid_z: f64,
}

impl<'a> From<&'a SegmentObservation> for Shape<'a> {
    fn from(o: &'a SegmentObservation) -> Self {
        Shape {
            grid: &o.grid,
            bbox: &o.bbox,
            centroid_z: o.centroid_z(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SupportRelation {
    ASupportsB,
    BSupportsA,
    ContactOnly,
    None,
}

/// Candidate pairs `(i, j)`, `i < j` by segment id, whose box centers lie
/// within the threshold. Sorted ascending.
pub fn propose_edges(
    observations: &[SegmentObservation],
    config: &ConstructConfig,
) -> Vec<(u32, u32)> {
    let centers: Vec<(u32, Point3)> = observations
        .iter()
        .map(|o| (o.segment_id, o.bbox.center()))
        .collect();
    propose_pairs(&centers, config.edge_distance_threshold)
}

/// Spatially hashed all-pairs distance test over `(key, center)` items.
pub fn propose_pairs<K: Copy + Ord>(centers: &[(K, Point3)], threshold: f64) -> Vec<(K, K)> {
    let mut pairs = Vec::new();
    let within = |a: &Point3, b: &Point3| a.distance(b) <= threshold;
    if threshold <= 0.0 || centers.len() < 32 {
        for (i, (ka, ca)) in centers.iter().enumerate() {
            for (kb, cb) in &centers[i + 1..] {
                if within(ca, cb) {
                    pairs.push(ordered(*ka, *kb));
                }
            }
        }
    } else {
        let bucket = |p: &Point3| {
            [
                (p.x / threshold).floor() as i64,
                (p.y / threshold).floor() as i64,
                (p.z / threshold).floor() as i64,
            ]
        };
        let mut buckets: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
        for (i, (_, c)) in centers.iter().enumerate() {
            buckets.entry(bucket(c)).or_default().push(i);
        }
        for (i, (ka, ca)) in centers.iter().enumerate() {
            let b = bucket(ca);
            for dx in -1..=1 {
                for dy in -1..=1 {
                    for dz in -1..=1 {
                        let Some(list) = buckets.get(&[b[0] + dx, b[1] + dy, b[2] + dz]) else {
                            continue;
                        };
                        for &j in list {
                            if j > i && within(ca, &centers[j].1) {
                                pairs.push(ordered(*ka, centers[j].0));
                            }
                        }
                    }
                }
            }
        }
    }
    pairs.sort();
    pairs
}

fn ordered<K: Ord>(a: K, b: K) -> (K, K) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// True iff some cell of `a` lies within Chebyshev distance `tolerance` of
/// some cell of `b`.
pub fn detect_contact(a: &VoxelGrid, b: &VoxelGrid, tolerance: u32) -> Result<bool> {
    Ok(contact_cells(a, b, tolerance, true)? > 0)
}

/// Number of cells of the smaller grid touching the other grid.
pub fn contact_cell_count(a: &VoxelGrid, b: &VoxelGrid, tolerance: u32) -> Result<usize> {
    contact_cells(a, b, tolerance, false)
}

fn contact_cells(
    a: &VoxelGrid,
    b: &VoxelGrid,
    tolerance: u32,
    stop_at_first: bool,
) -> Result<usize> {
    same_resolution(a, b)?;
    let t = tolerance as i64;
    let (Some((alo, ahi)), Some((blo, bhi))) = (a.cell_bounds(), b.cell_bounds()) else {
        return Ok(0);
    };
    if (0..3).any(|k| alo[k] > bhi[k] + t || blo[k] > ahi[k] + t) {
        return Ok(0);
    }
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let mut count = 0;
    for c in small.cells() {
        let hit = (-t..=t).any(|dx| {
            (-t..=t).any(|dy| (-t..=t).any(|dz| large.contains(&[c[0] + dx, c[1] + dy, c[2] + dz])))
        });
        if hit {
            count += 1;
            if stop_at_first {
                break;
            }
        }
    }
    Ok(count)
}

/// Share of `supported`'s horizontal footprint lying over `supporter`'s.
pub fn footprint_overlap(supported: &VoxelGrid, supporter: &VoxelGrid) -> f64 {
    let fa = supported.footprint();
    if fa.is_empty() {
        return 0.0;
    }
    let fb = supporter.footprint();
    fa.intersection(&fb).count() as f64 / fa.len() as f64
}

pub fn infer_support(
    a: &SegmentObservation,
    b: &SegmentObservation,
    config: &ConstructConfig,
) -> Result<SupportRelation> {
    infer_support_shapes(a.into(), b.into(), config)
}

/// Contact plus strictly lower centroid plus enough footprint overlap makes
/// a supporter. Centroids closer than half a cell are a tie.
pub fn infer_support_shapes(
    a: Shape<'_>,
    b: Shape<'_>,
    config: &ConstructConfig,
) -> Result<SupportRelation> {
    if !detect_contact(a.grid, b.grid, config.contact_tolerance)? {
        return Ok(SupportRelation::None);
    }
    let dz = b.centroid_z - a.centroid_z;
    if dz.abs() < a.grid.resolution() / 2.0 {
        return Ok(SupportRelation::ContactOnly);
    }
    let (lower, upper, rel) = if dz > 0.0 {
        (a, b, SupportRelation::ASupportsB)
    } else {
        (b, a, SupportRelation::BSupportsA)
    };
    if footprint_overlap(upper.grid, lower.grid) >= config.support_footprint_overlap {
        Ok(rel)
    } else {
        Ok(SupportRelation::ContactOnly)
    }
}

pub const EDGE_FEATURE_DIM: usize = 6;

/// Relative configuration of `dst` seen from `src`: center offset (3),
/// center distance, signed vertical gap `dst.min.z - src.max.z`, and the
/// footprint overlap over the smaller footprint.
pub fn edge_features(src: Shape<'_>, dst: Shape<'_>) -> [f64; EDGE_FEATURE_DIM] {
    let (cs, cd) = (src.bbox.center(), dst.bbox.center());
    let fs = src.grid.footprint();
    let fd = dst.grid.footprint();
    let denom = fs.len().min(fd.len());
    let overlap = if denom == 0 {
        0.0
    } else {
        fs.intersection(&fd).count() as f64 / denom as f64
    };
    [
        cd.x - cs.x,
        cd.y - cs.y,
        cd.z - cs.z,
        cs.distance(&cd),
        dst.bbox.min.z - src.bbox.max.z,
        overlap,
    ]
}

/// Connects the ground to every object in `candidates` that has no other
/// supporter and whose lowest cell lies in the ground band.
pub(crate) fn attach_ground(
    graph: &mut SceneGraph,
    ground: NodeId,
    candidates: &[NodeId],
    quantile: f64,
) -> Result<()> {
    let lowest = |graph: &SceneGraph, id: NodeId| -> Option<(f64, f64)> {
        let g = &graph.node(id)?.geometry.as_ref()?.grid;
        let (lo, hi) = g.cell_bounds()?;
        let r = g.resolution();
        Some((lo[2] as f64 * r, (hi[2] + 1) as f64 * r))
    };
    let spans: Vec<(NodeId, f64, f64)> = candidates
        .iter()
        .filter_map(|id| lowest(graph, *id).map(|(lo, hi)| (*id, lo, hi)))
        .collect();
    let Some(zmin) = spans.iter().map(|s| s.1).min_by(f64::total_cmp) else {
        return Ok(());
    };
    let zmax = spans
        .iter()
        .map(|s| s.2)
        .max_by(f64::total_cmp)
        .unwrap_or(zmin);
    let band_top = zmin + quantile * (zmax - zmin);
    for (id, lo, _) in spans {
        let supported = graph
            .incoming(id, EdgeType::Supports)
            .any(|e| e.src != ground);
        if !supported
            && lo <= band_top + 1e-12
            && graph.find_edge(ground, id, EdgeType::Supports).is_none()
        {
            graph.add_edge(EdgeSpec::new(ground, id, EdgeType::Supports))?;
        }
    }
    Ok(())
}

/// Adds the proximal / contact / supports edges for one object pair.
pub(crate) fn relate_pair(
    graph: &mut SceneGraph,
    (ida, sa): (NodeId, Shape<'_>),
    (idb, sb): (NodeId, Shape<'_>),
    proposed: bool,
    config: &ConstructConfig,
) -> Result<()> {
    if proposed {
        graph.add_edge(
            EdgeSpec::new(ida, idb, EdgeType::Proximal)
                .with_features(edge_features(sa, sb).to_vec()),
        )?;
    }
    match infer_support_shapes(sa, sb, config)? {
        SupportRelation::ASupportsB => {
            graph.add_edge(
                EdgeSpec::new(ida, idb, EdgeType::Supports)
                    .with_features(edge_features(sa, sb).to_vec()),
            )?;
        }
        SupportRelation::BSupportsA => {
            graph.add_edge(
                EdgeSpec::new(idb, ida, EdgeType::Supports)
                    .with_features(edge_features(sb, sa).to_vec()),
            )?;
        }
        SupportRelation::ContactOnly => {
            graph.add_edge(
                EdgeSpec::new(ida, idb, EdgeType::Contact)
                    .with_features(edge_features(sa, sb).to_vec()),
            )?;
        }
        SupportRelation::None => {}
    }
    Ok(())
}

/// Builds the local graph of one frame: a virtual ground plus one
/// `local_object` node per observation, in ascending segment order.
pub fn build_local_graph(
    observations: &[SegmentObservation],
    config: &ConstructConfig,
) -> Result<SceneGraph> {
    config.validate()?;
    let mut obs: Vec<&SegmentObservation> = observations.iter().collect();
    obs.sort_by_key(|o| o.segment_id);
    if obs.windows(2).any(|w| w[0].segment_id == w[1].segment_id) {
        return Err(Error::InvalidNode(
            "duplicate segment id in observations".into(),
        ));
    }

    let mut graph = SceneGraph::new();
    let ground = graph.add_node(NodeSpec::new(NodeType::VirtualGround))?;
    let mut ids = Vec::with_capacity(obs.len());
    for o in &obs {
        let mut spec = NodeSpec::object(
            NodeType::LocalObject,
            Geometry {
                bbox: o.bbox,
                grid: o.grid.clone(),
            },
        );
        spec.descriptor = Some(o.descriptor.to_vec());
        spec.segment_id = Some(o.segment_id);
        spec.observation_count = 1;
        ids.push(graph.add_node(spec)?);
    }

    let proposed: BTreeMap<(u32, u32), ()> = propose_edges(observations, config)
        .into_iter()
        .map(|p| (p, ()))
        .collect();
    for i in 0..obs.len() {
        for j in i + 1..obs.len() {
            let key = (obs[i].segment_id, obs[j].segment_id);
            relate_pair(
                &mut graph,
                (ids[i], obs[i].into()),
                (ids[j], obs[j].into()),
                proposed.contains_key(&key),
                config,
            )?;
        }
    }
    attach_ground(&mut graph, ground, &ids, config.ground_z_quantile)?;
    graph.recompute_levels()?;
    Ok(graph)
}

/// The supporter a node would hang from in a tree view: most contact cells,
/// then lowest id.
pub fn primary_supporter(
    graph: &SceneGraph,
    node: NodeId,
    tolerance: u32,
) -> Result<Option<NodeId>> {
    let Some(n) = graph.node(node) else {
        return Err(Error::UnknownNode(node));
    };
    let mut best: Option<(usize, NodeId)> = None;
    for s in graph.supporters(node) {
        let count = match (
            &graph.node(s).and_then(|x| x.geometry.as_ref()),
            &n.geometry,
        ) {
            (Some(a), Some(b)) => contact_cell_count(&a.grid, &b.grid, tolerance)?,
            _ => 0,
        };
        let better = match best {
            None => true,
            Some((bc, bid)) => count > bc || (count == bc && s < bid),
        };
        if better {
            best = Some((count, s));
        }
    }
    Ok(best.map(|b| b.1))
}
