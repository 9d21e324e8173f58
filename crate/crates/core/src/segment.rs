//! Per-segment observations and handcrafted geometric descriptors.

use std::collections::BTreeMap;

use crate::eigen::symmetric_eigen;
use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::geometry::{bounds, voxelize, Aabb, Point3, VoxelGrid};

/// Length of [`geometric_descriptor`] output.
pub const D_GEO: usize = 11;

/// Index of `centroid_z` inside the descriptor.
pub const CENTROID_Z: usize = 0;

pub const DEFAULT_MIN_POINTS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentObservation {
    pub segment_id: u32,
    pub points: Vec<Point3>,
    pub grid: VoxelGrid,
    pub bbox: Aabb,
    pub descriptor: [f64; D_GEO],
    pub gt_class: Option<String>,
}

impl SegmentObservation {
    pub fn from_points(
        segment_id: u32,
        points: Vec<Point3>,
        resolution: f64,
        gt_class: Option<String>,
    ) -> Result<Self> {
        let grid = voxelize(&points, resolution)?;
        let bbox = bounds(&points)?;
        let descriptor = geometric_descriptor(&points)?;
        Ok(Self {
            segment_id,
            points,
            grid,
            bbox,
            descriptor,
            gt_class,
        })
    }

    pub fn centroid_z(&self) -> f64 {
        self.descriptor[CENTROID_Z]
    }
}

/// A segment filtered out for having too few points.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DroppedSegment {
    pub segment_id: u32,
    pub point_count: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SplitResult {
    pub observations: Vec<SegmentObservation>,
    pub dropped: Vec<DroppedSegment>,
}

/// Groups a frame's points by segment id (ascending), keeping file order
/// within each segment.
pub fn split_segments(frame: &Frame, resolution: f64, min_points: usize) -> Result<SplitResult> {
    frame.validate()?;
    let mut groups: BTreeMap<u32, Vec<Point3>> = BTreeMap::new();
    for (p, s) in frame.points.iter().zip(&frame.segment_ids) {
        groups.entry(*s).or_default().push(*p);
    }
    let mut out = SplitResult::default();
    for (segment_id, points) in groups {
        if points.len() < min_points.max(1) {
            out.dropped.push(DroppedSegment {
                segment_id,
                point_count: points.len(),
            });
            continue;
        }
        let gt = frame.gt_class.get(&segment_id).cloned();
        out.observations.push(SegmentObservation::from_points(
            segment_id, points, resolution, gt,
        )?);
    }
    Ok(out)
}

/// Population covariance eigenvalues, descending, clamped at zero.
pub fn covariance_eigenvalues(points: &[Point3]) -> [f64; 3] {
    let n = points.len() as f64;
    let mean = points.iter().fold([0.0; 3], |acc, p| {
        [acc[0] + p.x / n, acc[1] + p.y / n, acc[2] + p.z / n]
    });
    let mut cov = [0.0; 9];
    for p in points {
        let d = [p.x - mean[0], p.y - mean[1], p.z - mean[2]];
        for i in 0..3 {
            for j in 0..3 {
                cov[i * 3 + j] += d[i] * d[j] / n;
            }
        }
    }
    let (vals, _) = symmetric_eigen(&cov, 3);
    [vals[0].max(0.0), vals[1].max(0.0), vals[2].max(0.0)]
}

/// Handcrafted shape descriptor:
/// `[centroid_z, extent_x, extent_y, extent_z, box_volume, ln(1+n),
///   λ1, λ2/λ1, λ3/λ1, mean height above box bottom, footprint area]`.
///
/// Ratios with a zero `λ1` are 0.
pub fn geometric_descriptor(points: &[Point3]) -> Result<[f64; D_GEO]> {
    if points.is_empty() {
        return Err(Error::Geometry("descriptor of empty point set".into()));
    }
    let bbox = bounds(points)?;
    let [ex, ey, ez] = bbox.extents();
    let n = points.len() as f64;
    let centroid_z = points.iter().map(|p| p.z).sum::<f64>() / n;
    let mean_height = points.iter().map(|p| p.z - bbox.min.z).sum::<f64>() / n;
    let [l1, l2, l3] = covariance_eigenvalues(points);
    let ratio = |x: f64| if l1 > 0.0 { x / l1 } else { 0.0 };
    Ok([
        centroid_z,
        ex,
        ey,
        ez,
        ex * ey * ez,
        n.ln_1p(),
        l1,
        ratio(l2),
        ratio(l3),
        mean_height,
        ex * ey,
    ])
}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;

    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn random_points(rng: &mut ChaCha8Rng, n: usize, scale: [f64; 3]) -> Vec<Point3> {
        (0..n)
            .map(|_| {
                Point3::new(
                    rng.random::<f64>() * scale[0],
                    rng.random::<f64>() * scale[1],
                    rng.random::<f64>() * scale[2],
                )
            })
            .collect()
    }

    /// Eigenvalues of a symmetric 3x3 matrix from its characteristic
    /// polynomial, via the trigonometric cubic solution.
    fn cubic_eigenvalues(points: &[Point3]) -> [f64; 3] {
        let n = points.len() as f64;
        let (mut mx, mut my, mut mz) = (0.0, 0.0, 0.0);
        for p in points {
            mx += p.x;
            my += p.y;
            mz += p.z;
        }
        let (mx, my, mz) = (mx / n, my / n, mz / n);
        let (mut a, mut b, mut c, mut d, mut e, mut f) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        for p in points {
            let (x, y, z) = (p.x - mx, p.y - my, p.z - mz);
            a += x * x;
            b += y * y;
            c += z * z;
            d += x * y;
            e += y * z;
            f += x * z;
        }
        let (a, b, c, d, e, f) = (a / n, b / n, c / n, d / n, e / n, f / n);
        let p1 = d * d + e * e + f * f;
        let q = (a + b + c) / 3.0;
        let p2 = (a - q).powi(2) + (b - q).powi(2) + (c - q).powi(2) + 2.0 * p1;
        let p = (p2 / 6.0).sqrt();
        if p == 0.0 {
            return [q, q, q];
        }
        // B = (A - qI) / p, r = det(B) / 2
        let (ba, bb, bc) = ((a - q) / p, (b - q) / p, (c - q) / p);
        let (bd, be, bf) = (d / p, e / p, f / p);
        let det = ba * (bb * bc - be * be) - bd * (bd * bc - be * bf) + bf * (bd * be - bb * bf);
        let r = (det / 2.0).clamp(-1.0, 1.0);
        let phi = r.acos() / 3.0;
        let e1 = q + 2.0 * p * phi.cos();
        let e3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
        let e2 = 3.0 * q - e1 - e3;
        [e1, e2, e3]
    }

    #[test]
    fn single_point_descriptor() {
        let d = geometric_descriptor(&[Point3::new(1.0, 2.0, 3.0)]).unwrap();
        assert_eq!(d[CENTROID_Z], 3.0);
        assert_eq!(&d[1..5], &[0.0, 0.0, 0.0, 0.0]);
        assert_eq!(d[5], 2f64.ln());
        assert_eq!(&d[6..9], &[0.0, 0.0, 0.0]);
        assert_eq!(d[9], 0.0);
        assert_eq!(d[10], 0.0);
        assert!(geometric_descriptor(&[]).is_err());
    }

    #[test]
    fn box_extents_and_volume() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut pts = random_points(&mut rng, 5000, [1.0, 2.0, 3.0]);
        pts.push(Point3::new(0.0, 0.0, 0.0));
        pts.push(Point3::new(1.0, 2.0, 3.0));
        let d = geometric_descriptor(&pts).unwrap();
        assert!((d[1] - 1.0).abs() < 1e-12 && (d[2] - 2.0).abs() < 1e-12);
        assert!((d[3] - 3.0).abs() < 1e-12);
        assert!((d[4] - 6.0).abs() < 1e-9);
        assert!((d[10] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn collinear_points_have_zero_minor_eigenvalues() {
        let pts: Vec<Point3> = (0..20)
            .map(|i| Point3::new(i as f64 * 0.1, 0.0, 0.0))
            .collect();
        let d = geometric_descriptor(&pts).unwrap();
        assert!(d[6] > 0.0);
        assert!(d[7].abs() < 1e-12 && d[8].abs() < 1e-12);
    }

    #[test]
    fn eigenvalues_match_characteristic_polynomial() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in [3, 10, 100, 1000] {
            let pts = random_points(&mut rng, n, [0.4, 1.3, 0.7]);
            let got = covariance_eigenvalues(&pts);
            let want = cubic_eigenvalues(&pts);
            for k in 0..3 {
                assert!(
                    (got[k] - want[k]).abs() < 1e-8,
                    "n={n} k={k}: {} vs {}",
                    got[k],
                    want[k]
                );
            }
        }
    }

    fn frame_from(segs: &[(u32, usize)], rng: &mut ChaCha8Rng) -> Frame {
        let mut pairs = Vec::new();
        for &(s, n) in segs {
            for p in random_points(rng, n, [1.0, 1.0, 1.0]) {
                pairs.push((p, s));
            }
        }
        pairs.shuffle(rng);
        Frame {
            frame_id: 0,
            points: pairs.iter().map(|x| x.0).collect(),
            segment_ids: pairs.iter().map(|x| x.1).collect(),
            ..Frame::default()
        }
    }

    #[test]
    fn split_single_and_dropped() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let one = split_segments(&frame_from(&[(1, 100)], &mut rng), 0.05, 10).unwrap();
        assert_eq!(one.observations.len(), 1);
        let small = split_segments(&frame_from(&[(1, 5)], &mut rng), 0.05, 10).unwrap();
        assert!(small.observations.is_empty());
        assert_eq!(
            small.dropped,
            vec![DroppedSegment {
                segment_id: 1,
                point_count: 5
            }]
        );
    }

    #[test]
    fn split_matches_group_by_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let frame = frame_from(&[(3, 40), (1, 25), (9, 60), (4, 12)], &mut rng);
        let mut oracle: HashMap<u32, Vec<Point3>> = HashMap::new();
        for (p, s) in frame.points.iter().zip(&frame.segment_ids) {
            oracle.entry(*s).or_default().push(*p);
        }
        let split = split_segments(&frame, 0.05, 10).unwrap();
        assert_eq!(split.observations.len(), 4);
        for obs in &split.observations {
            let pts = &oracle[&obs.segment_id];
            assert_eq!(&obs.points, pts);
            assert_eq!(obs.grid, voxelize(pts, 0.05).unwrap());
            assert_eq!(obs.bbox, bounds(pts).unwrap());
        }
    }

    proptest! {
        #[test]
        fn split_is_a_partition(
            sizes in prop::collection::vec((0u32..20, 1usize..30), 1..8),
            min_points in 1usize..20,
            seed in 0u64..1000,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let frame = frame_from(&sizes, &mut rng);
            let split = split_segments(&frame, 0.1, min_points).unwrap();
            let kept: usize = split.observations.iter().map(|o| o.points.len()).sum();
            let dropped: usize = split.dropped.iter().map(|d| d.point_count).sum();
            prop_assert_eq!(kept + dropped, frame.points.len());
        }

        #[test]
        fn descriptor_invariances(
            seed in 0u64..1000,
            n in 1usize..60,
            shift in prop::array::uniform3(-5.0f64..5.0),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts = random_points(&mut rng, n, [0.5, 0.8, 0.3]);
            let base = geometric_descriptor(&pts).unwrap();
            prop_assert!(base.iter().all(|x| x.is_finite()));

            let mut shuffled = pts.clone();
            shuffled.shuffle(&mut rng);
            let perm = geometric_descriptor(&shuffled).unwrap();
            for k in 0..D_GEO {
                prop_assert!((perm[k] - base[k]).abs() <= 1e-9 * (1.0 + base[k].abs()));
            }

            let moved: Vec<Point3> = pts
                .iter()
                .map(|p| Point3::new(p.x + shift[0], p.y + shift[1], p.z + shift[2]))
                .collect();
            let t = geometric_descriptor(&moved).unwrap();
            prop_assert!((t[CENTROID_Z] - (base[CENTROID_Z] + shift[2])).abs() < 1e-9);
            prop_assert!((t[9] - base[9]).abs() < 1e-9);
            // eigenvalue components are translation invariant
            prop_assert!((t[6] - base[6]).abs() < 1e-9);
            if base[6] > 1e-6 {
                prop_assert!((t[7] - base[7]).abs() < 1e-6);
                prop_assert!((t[8] - base[8]).abs() < 1e-6);
            }
        }
    }
}
