//! Seeded generator of tabletop scenes: a floor slab, a row of supporters
//! (tables, shelves) and small objects resting on them, optionally stacked
//! on boxes. Emits noisy point-sampled frames in the frame file format
//! with ground-truth classes, relations and cross-frame identities.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::geometry::{voxelize, Aabb, Point3, DEFAULT_RESOLUTION};
use crate::graph::{EdgeSpec, EdgeType, Geometry, NodeId, NodeSpec, NodeType, SceneGraph};
use crate::segment::geometric_descriptor;

pub const CLASSES: [&str; 7] = ["floor", "table", "shelf", "box", "cup", "book", "bottle"];
pub const SUPPORTER_CLASSES: [&str; 2] = ["table", "shelf"];
pub const OBJECT_CLASSES: [&str; 4] = ["box", "cup", "book", "bottle"];
pub const STACKABLE_CLASSES: [&str; 2] = ["book", "cup"];

/// Clearance between neighbouring objects on a supporter and to its edges.
const OBJECT_GAP: f64 = 0.15;
const EDGE_MARGIN: f64 = 0.02;
const SUPPORTER_GAP: f64 = 0.4;
const FLOOR_MARGIN: f64 = 0.3;

pub fn class_index(name: &str) -> Option<usize> {
    CLASSES.iter().position(|c| *c == name)
}

/// Inclusive per-axis size range of a class, meters (x, y, z).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SizeRange {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl SizeRange {
    const fn new(min: [f64; 3], max: [f64; 3]) -> Self {
        Self { min, max }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> [f64; 3] {
        std::array::from_fn(|a| {
            if self.max[a] > self.min[a] {
                rng.random_range(self.min[a]..=self.max[a])
            } else {
                self.min[a]
            }
        })
    }
}

pub fn default_sizes() -> BTreeMap<String, SizeRange> {
    [
        ("table", SizeRange::new([0.9, 0.6, 0.65], [1.4, 0.9, 0.8])),
        ("shelf", SizeRange::new([0.6, 0.35, 0.9], [1.0, 0.45, 1.3])),
        ("box", SizeRange::new([0.18, 0.15, 0.12], [0.3, 0.28, 0.25])),
        ("cup", SizeRange::new([0.07, 0.07, 0.08], [0.1, 0.1, 0.12])),
        (
            "book",
            SizeRange::new([0.14, 0.18, 0.03], [0.22, 0.26, 0.06]),
        ),
        (
            "bottle",
            SizeRange::new([0.06, 0.06, 0.2], [0.09, 0.09, 0.32]),
        ),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    pub seed: u64,
    pub num_supporters: usize,
    /// Inclusive range of objects placed directly on each supporter.
    pub objects_per_supporter: [usize; 2],
    /// Chance that a box carries a stacked book or cup.
    pub stack_probability: f64,
    /// Chance that a box gets a flush same-height neighbour.
    pub contact_pair_probability: f64,
    pub sizes: BTreeMap<String, SizeRange>,
    /// Per-coordinate Gaussian point noise, meters.
    pub noise_sigma: f64,
    pub frames: usize,
    /// Probability that a non-supporter object is missing from a frame.
    pub dropout: f64,
    /// Surface sampling spacing, meters.
    pub sample_spacing: f64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            num_supporters: 2,
            objects_per_supporter: [1, 3],
            stack_probability: 0.3,
            contact_pair_probability: 0.2,
            sizes: default_sizes(),
            noise_sigma: 0.0,
            frames: 1,
            dropout: 0.0,
            sample_spacing: DEFAULT_RESOLUTION * 0.6,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        for (name, p) in [
            ("dropout", self.dropout),
            ("stack_probability", self.stack_probability),
            ("contact_pair_probability", self.contact_pair_probability),
        ] {
            if !unit(p) {
                return Err(Error::Config(format!("{name} must be in [0,1], got {p}")));
            }
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::Config("noise_sigma must be >= 0".into()));
        }
        if !(self.sample_spacing.is_finite() && self.sample_spacing > 0.0) {
            return Err(Error::Config("sample_spacing must be > 0".into()));
        }
        let [lo, hi] = self.objects_per_supporter;
        if lo > hi {
            return Err(Error::Config("objects_per_supporter range is empty".into()));
        }
        for class in SUPPORTER_CLASSES.iter().chain(&OBJECT_CLASSES) {
            let r = self
                .sizes
                .get(*class)
                .ok_or_else(|| Error::Config(format!("missing size range for {class}")))?;
            for a in 0..3 {
                if !(r.min[a] > 0.0 && r.min[a] <= r.max[a] && r.max[a].is_finite()) {
                    return Err(Error::Config(format!("invalid size range for {class}")));
                }
            }
        }
        if let Some(class) = self
            .sizes
            .keys()
            .find(|k| class_index(k).is_none() || *k == "floor")
        {
            return Err(Error::Config(format!("unknown sized class {class}")));
        }
        // every object must fit on the smallest possible supporter top
        for s in SUPPORTER_CLASSES {
            let top = self.sizes[s].min;
            for o in OBJECT_CLASSES {
                let size = self.sizes[o].max;
                if size[0] + 2.0 * EDGE_MARGIN > top[0] || size[1] + 2.0 * EDGE_MARGIN > top[1] {
                    return Err(Error::InfeasibleScene(format!(
                        "a {o} may not fit on a {s}"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneObject {
    pub class: String,
    pub bbox: Aabb,
    /// Object index of the supporter; `None` rests on the virtual ground.
    pub supporter: Option<usize>,
}

impl SceneObject {
    pub fn is_supporter(&self) -> bool {
        self.class == "floor" || SUPPORTER_CLASSES.contains(&self.class.as_str())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub spec: SceneSpec,
    /// Object 0 is the floor.
    pub objects: Vec<SceneObject>,
    /// `(supporter, supported)` object indices.
    pub supports: Vec<(usize, usize)>,
    /// Flush side contacts, `a < b`.
    pub contacts: Vec<(usize, usize)>,
    pub frames: Vec<Frame>,
    /// Per frame: segment id -> object index.
    pub identity: Vec<BTreeMap<u32, usize>>,
    pub ground_truth: SceneGraph,
    /// Node of each object in `ground_truth`.
    pub object_nodes: Vec<NodeId>,
}

fn aabb(min: [f64; 3], size: [f64; 3]) -> Aabb {
    Aabb {
        min: Point3::new(min[0], min[1], min[2]),
        max: Point3::new(min[0] + size[0], min[1] + size[1], min[2] + size[2]),
    }
}

/// Splits `slack` into `parts` non-negative random shares.
fn random_partition(rng: &mut ChaCha8Rng, slack: f64, parts: usize) -> Vec<f64> {
    let mut cuts: Vec<f64> = (0..parts.saturating_sub(1))
        .map(|_| rng.random_range(0.0..=slack))
        .collect();
    cuts.sort_by(f64::total_cmp);
    let mut out = Vec::with_capacity(parts);
    let mut prev = 0.0;
    for c in cuts {
        out.push(c - prev);
        prev = c;
    }
    out.push(slack - prev);
    out
}

fn layout(spec: &SceneSpec, rng: &mut ChaCha8Rng) -> (Vec<SceneObject>, Vec<(usize, usize)>) {
    let mut objects = vec![SceneObject {
        class: "floor".into(),
        bbox: aabb([0.0; 3], [0.0; 3]),
        supporter: None,
    }];
    let mut contacts = Vec::new();
    let mut x = 0.0;
    for _ in 0..spec.num_supporters {
        let class = SUPPORTER_CLASSES[rng.random_range(0..SUPPORTER_CLASSES.len())];
        let size = spec.sizes[class].sample(rng);
        let sup = objects.len();
        let top = aabb([x, 0.0, 0.0], size);
        objects.push(SceneObject {
            class: class.into(),
            bbox: top,
            supporter: Some(0),
        });
        x += size[0] + SUPPORTER_GAP;

        // sample the row, then drop trailing groups until it fits
        let count = rng.random_range(spec.objects_per_supporter[0]..=spec.objects_per_supporter[1]);
        let mut groups: Vec<Vec<(&str, [f64; 3])>> = Vec::new();
        for _ in 0..count {
            let class = OBJECT_CLASSES[rng.random_range(0..OBJECT_CLASSES.len())];
            let s = spec.sizes[class].sample(rng);
            let mut group = vec![(class, s)];
            if class == "box" && rng.random_bool(spec.contact_pair_probability) {
                let mut twin = spec.sizes["box"].sample(rng);
                twin[2] = s[2];
                group.push(("box", twin));
            }
            groups.push(group);
        }
        let usable = size[0] - 2.0 * EDGE_MARGIN;
        let width = |g: &Vec<(&str, [f64; 3])>| g.iter().map(|(_, s)| s[0]).sum::<f64>();
        let depth_ok =
            |g: &Vec<(&str, [f64; 3])>| g.iter().all(|(_, s)| s[1] + 2.0 * EDGE_MARGIN <= size[1]);
        groups.retain(depth_ok);
        while !groups.is_empty() {
            let total: f64 =
                groups.iter().map(width).sum::<f64>() + OBJECT_GAP * (groups.len() - 1) as f64;
            if total <= usable {
                break;
            }
            groups.pop();
        }
        if groups.is_empty() {
            continue;
        }
        let total: f64 =
            groups.iter().map(width).sum::<f64>() + OBJECT_GAP * (groups.len() - 1) as f64;
        let shares = random_partition(rng, usable - total, groups.len() + 1);
        let mut gx = top.min.x + EDGE_MARGIN + shares[0];
        for (gi, group) in groups.iter().enumerate() {
            for (k, (class, s)) in group.iter().enumerate() {
                let y = top.min.y
                    + EDGE_MARGIN
                    + rng.random_range(0.0..=size[1] - 2.0 * EDGE_MARGIN - s[1]);
                let idx = objects.len();
                let bbox = aabb([gx, y, top.max.z], *s);
                objects.push(SceneObject {
                    class: (*class).into(),
                    bbox,
                    supporter: Some(sup),
                });
                if k > 0 {
                    contacts.push((idx - 1, idx));
                }
                gx += s[0];
                if *class == "box" && rng.random_bool(spec.stack_probability) {
                    let mut stacked = None;
                    for candidate in STACKABLE_CLASSES {
                        let ss = spec.sizes[candidate].sample(rng);
                        if ss[0] <= s[0] && ss[1] <= s[1] {
                            stacked = Some((candidate, ss));
                            break;
                        }
                    }
                    if let Some((c, ss)) = stacked {
                        let ox = bbox.min.x + rng.random_range(0.0..=s[0] - ss[0]);
                        let oy = bbox.min.y + rng.random_range(0.0..=s[1] - ss[1]);
                        objects.push(SceneObject {
                            class: c.into(),
                            bbox: aabb([ox, oy, bbox.max.z], ss),
                            supporter: Some(idx),
                        });
                    }
                }
            }
            gx += OBJECT_GAP + shares[gi + 1];
        }
    }
    // floor slab top surface at z = 0 under everything
    let max_x = objects[1..]
        .iter()
        .map(|o| o.bbox.max.x)
        .fold(0.0, f64::max);
    let max_y = objects[1..]
        .iter()
        .map(|o| o.bbox.max.y)
        .fold(0.0, f64::max);
    objects[0].bbox = Aabb {
        min: Point3::new(-FLOOR_MARGIN, -FLOOR_MARGIN, 0.0),
        max: Point3::new(max_x + FLOOR_MARGIN, max_y + FLOOR_MARGIN, 0.0),
    };
    (objects, contacts)
}

/// Jittered grid samples over one axis-aligned rectangle.
fn sample_face(
    rng: &mut ChaCha8Rng,
    spacing: f64,
    origin: [f64; 3],
    (u, v): (usize, usize),
    (lu, lv): (f64, f64),
    out: &mut Vec<Point3>,
) {
    let nu = (lu / spacing).ceil().max(1.0) as usize;
    let nv = (lv / spacing).ceil().max(1.0) as usize;
    let (du, dv) = (lu / nu as f64, lv / nv as f64);
    for i in 0..nu {
        for j in 0..nv {
            let mut p = origin;
            p[u] += (i as f64 + rng.random_range(0.0..1.0)) * du;
            p[v] += (j as f64 + rng.random_range(0.0..1.0)) * dv;
            out.push(Point3::new(p[0], p[1], p[2]));
        }
    }
}

/// Samples all six faces of a box; degenerate (flat) boxes only their top.
fn sample_box(rng: &mut ChaCha8Rng, spacing: f64, b: &Aabb) -> Vec<Point3> {
    let lo = b.min.to_array();
    let hi = b.max.to_array();
    let ext = [hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]];
    let mut out = Vec::new();
    if ext[2] <= 0.0 {
        sample_face(rng, spacing, lo, (0, 1), (ext[0], ext[1]), &mut out);
        return out;
    }
    for axis in 0..3 {
        let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
        for side in [lo[axis], hi[axis]] {
            let mut origin = lo;
            origin[axis] = side;
            sample_face(rng, spacing, origin, (u, v), (ext[u], ext[v]), &mut out);
        }
    }
    out
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

pub fn generate(spec: &SceneSpec) -> Result<SyntheticScene> {
    spec.validate()?;
    let (objects, contacts) = layout(spec, &mut stream(spec.seed, 0));
    let supports: Vec<(usize, usize)> = objects
        .iter()
        .enumerate()
        .filter_map(|(i, o)| o.supporter.map(|s| (s, i)))
        .collect();

    let noise = Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::Config(e.to_string()))?;
    let mut frames = Vec::with_capacity(spec.frames);
    let mut identity = Vec::with_capacity(spec.frames);
    for f in 0..spec.frames {
        let mut rng = stream(spec.seed, f as u64 + 1);
        let visible: Vec<usize> = (0..objects.len())
            .filter(|&i| objects[i].is_supporter() || !rng.random_bool(spec.dropout))
            .collect();
        let mut ids: Vec<u32> = (0..visible.len() as u32).collect();
        ids.shuffle(&mut rng);
        let seg_of: BTreeMap<usize, u32> =
            visible.iter().copied().zip(ids.iter().copied()).collect();

        let mut frame = Frame {
            frame_id: f as u64,
            points: Vec::new(),
            segment_ids: Vec::new(),
            gt_class: BTreeMap::new(),
            gt_relations: Vec::new(),
        };
        for &i in &visible {
            let seg = seg_of[&i];
            for p in sample_box(&mut rng, spec.sample_spacing, &objects[i].bbox) {
                let p = if spec.noise_sigma > 0.0 {
                    Point3::new(
                        p.x + noise.sample(&mut rng),
                        p.y + noise.sample(&mut rng),
                        p.z + noise.sample(&mut rng),
                    )
                } else {
                    p
                };
                frame.points.push(p);
                frame.segment_ids.push(seg);
            }
            frame.gt_class.insert(seg, objects[i].class.clone());
        }
        for &(a, b) in &supports {
            if let (Some(sa), Some(sb)) = (seg_of.get(&a), seg_of.get(&b)) {
                frame.gt_relations.push((*sa, *sb, "supports".into()));
            }
        }
        for &(a, b) in &contacts {
            if let (Some(sa), Some(sb)) = (seg_of.get(&a), seg_of.get(&b)) {
                frame
                    .gt_relations
                    .push((*sa.min(sb), *sa.max(sb), "contact".into()));
            }
        }
        frame.gt_relations.sort();
        identity.push(seg_of.iter().map(|(obj, seg)| (*seg, *obj)).collect());
        frames.push(frame);
    }

    let (ground_truth, object_nodes) = ground_truth_graph(spec, &objects, &supports, &contacts)?;
    Ok(SyntheticScene {
        spec: spec.clone(),
        objects,
        supports,
        contacts,
        frames,
        identity,
        ground_truth,
        object_nodes,
    })
}

fn ground_truth_graph(
    spec: &SceneSpec,
    objects: &[SceneObject],
    supports: &[(usize, usize)],
    contacts: &[(usize, usize)],
) -> Result<(SceneGraph, Vec<NodeId>)> {
    let mut graph = SceneGraph::new();
    let ground = graph.add_node(NodeSpec::new(NodeType::VirtualGround))?;
    let mut rng = stream(spec.seed, u64::MAX);
    let mut nodes = Vec::with_capacity(objects.len());
    for o in objects {
        let pts = sample_box(&mut rng, spec.sample_spacing, &o.bbox);
        let mut n = NodeSpec::object(
            NodeType::GlobalObject,
            Geometry {
                bbox: o.bbox,
                grid: voxelize(&pts, DEFAULT_RESOLUTION)?,
            },
        );
        n.descriptor = Some(geometric_descriptor(&pts)?.to_vec());
        n.class_label = Some(o.class.clone());
        n.observation_count = 1;
        nodes.push(graph.add_node(n)?);
    }
    graph.add_edge(EdgeSpec::new(ground, nodes[0], EdgeType::Supports))?;
    for &(a, b) in supports {
        graph.add_edge(EdgeSpec::new(nodes[a], nodes[b], EdgeType::Supports))?;
    }
    for &(a, b) in contacts {
        graph.add_edge(EdgeSpec::new(nodes[a], nodes[b], EdgeType::Contact))?;
    }
    graph.recompute_levels()?;
    Ok((graph, nodes))
}

/// Flips exactly `round(rate * labelled segments)` ground-truth labels to a
/// uniformly drawn different class.
pub fn corrupt(frame: &Frame, rate: f64, seed: u64) -> Frame {
    let mut out = frame.clone();
    let rate = rate.clamp(0.0, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let segs: Vec<u32> = frame.gt_class.keys().copied().collect();
    let k = (rate * segs.len() as f64).round() as usize;
    let chosen: BTreeSet<u32> = segs.choose_multiple(&mut rng, k).copied().collect();
    for seg in chosen {
        let label = out.gt_class.get_mut(&seg).expect("chosen from keys");
        let others: Vec<&str> = CLASSES.iter().copied().filter(|c| c != label).collect();
        *label = others[rng.random_range(0..others.len())].to_string();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construct::{build_local_graph, ConstructConfig};
    use crate::segment::{split_segments, DEFAULT_MIN_POINTS};

    fn single() -> SceneSpec {
        SceneSpec {
            num_supporters: 1,
            objects_per_supporter: [1, 1],
            stack_probability: 0.0,
            contact_pair_probability: 0.0,
            ..SceneSpec::default()
        }
    }

    #[test]
    fn one_supporter_one_object() {
        let s = generate(&single()).unwrap();
        let f = &s.frames[0];
        assert_eq!(f.segments().len(), 3);
        let supports = f.gt_relations.iter().filter(|r| r.2 == "supports").count();
        assert_eq!(supports, 2);
        f.validate().unwrap();
        let classes: BTreeSet<&str> = f.gt_class.values().map(String::as_str).collect();
        assert!(classes.contains("floor"));
    }

    #[test]
    fn full_dropout_keeps_supporters() {
        let s = generate(&SceneSpec {
            dropout: 1.0,
            frames: 3,
            seed: 9,
            ..SceneSpec::default()
        })
        .unwrap();
        for f in &s.frames {
            assert!(f
                .gt_class
                .values()
                .all(|c| c == "floor" || SUPPORTER_CLASSES.contains(&c.as_str())));
            assert_eq!(f.gt_class.len(), 1 + s.spec.num_supporters);
        }
    }

    #[test]
    fn reproducible_per_seed() {
        for seed in 0..100 {
            let spec = SceneSpec {
                seed,
                frames: 2,
                noise_sigma: 0.003,
                dropout: 0.3,
                ..SceneSpec::default()
            };
            let a = generate(&spec).unwrap();
            let b = generate(&spec).unwrap();
            for (fa, fb) in a.frames.iter().zip(&b.frames) {
                assert_eq!(fa.to_text(), fb.to_text());
            }
        }
    }

    #[test]
    fn identity_is_a_bijection_per_frame() {
        let s = generate(&SceneSpec {
            seed: 4,
            frames: 5,
            dropout: 0.5,
            ..SceneSpec::default()
        })
        .unwrap();
        for (f, ids) in s.frames.iter().zip(&s.identity) {
            assert_eq!(ids.keys().copied().collect::<BTreeSet<_>>(), f.segments());
            let objs: BTreeSet<usize> = ids.values().copied().collect();
            assert_eq!(objs.len(), ids.len());
            for (seg, obj) in ids {
                assert_eq!(f.gt_class[seg], s.objects[*obj].class);
            }
        }
    }

    #[test]
    fn infeasible_sizes_rejected() {
        let mut spec = SceneSpec::default();
        spec.sizes.get_mut("box").unwrap().max = [2.0, 2.0, 0.2];
        assert!(matches!(generate(&spec), Err(Error::InfeasibleScene(_))));
        spec = SceneSpec {
            dropout: 1.5,
            ..SceneSpec::default()
        };
        assert!(matches!(generate(&spec), Err(Error::Config(_))));
    }

    #[test]
    fn objects_rest_inside_their_supporters() {
        for seed in 0..30 {
            let s = generate(&SceneSpec {
                seed,
                ..SceneSpec::default()
            })
            .unwrap();
            for o in &s.objects[1..] {
                let sup = &s.objects[o.supporter.unwrap()].bbox;
                assert_eq!(o.bbox.min.z, sup.max.z);
                assert!(o.bbox.min.x >= sup.min.x - 1e-12 && o.bbox.max.x <= sup.max.x + 1e-12);
                assert!(o.bbox.min.y >= sup.min.y - 1e-12 && o.bbox.max.y <= sup.max.y + 1e-12);
            }
        }
    }

    #[test]
    fn noiseless_frames_recover_intended_supports() {
        for seed in 0..10 {
            let s = generate(&SceneSpec {
                seed,
                ..SceneSpec::default()
            })
            .unwrap();
            let f = &s.frames[0];
            let split = split_segments(f, DEFAULT_RESOLUTION, DEFAULT_MIN_POINTS).unwrap();
            assert!(split.dropped.is_empty());
            let g = build_local_graph(&split.observations, &ConstructConfig::default()).unwrap();
            let seg_of = |n: NodeId| g.node(n).unwrap().segment_id;
            let inferred: BTreeSet<(u32, u32)> = g
                .edges_of_type(EdgeType::Supports)
                .filter_map(|e| Some((seg_of(e.src)?, seg_of(e.dst)?)))
                .collect();
            for (a, b, r) in &f.gt_relations {
                if r == "supports" {
                    assert!(
                        inferred.contains(&(*a, *b)),
                        "seed {seed}: missing {a}->{b}"
                    );
                }
            }
        }
    }

    #[test]
    fn corruption_counts() {
        let s = generate(&SceneSpec {
            seed: 2,
            num_supporters: 3,
            ..SceneSpec::default()
        })
        .unwrap();
        let f = &s.frames[0];
        assert_eq!(corrupt(f, 0.0, 1).gt_class, f.gt_class);
        let all = corrupt(f, 1.0, 1);
        assert!(f.gt_class.iter().all(|(k, v)| all.gt_class[k] != *v));

        let mut ten = f.clone();
        ten.gt_class = (0..10).map(|i| (i, "cup".to_string())).collect();
        let c = corrupt(&ten, 0.3, 5);
        assert_eq!(c.gt_class.values().filter(|v| *v != "cup").count(), 3);
        assert_eq!(corrupt(&ten, 0.3, 5).gt_class, c.gt_class);
    }
}
