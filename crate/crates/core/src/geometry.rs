//! Points, axis-aligned boxes and world-anchored sparse voxel grids.
//!
//! Voxel cells are indexed by `floor(coordinate / resolution)` in world
//! coordinates, so grids of different objects can be compared cell by cell
//! without resampling.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default voxel edge length in meters.
pub const DEFAULT_RESOLUTION: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        let (dx, dy, dz) = (self.x - other.x, self.y - other.y, self.z - other.z);
        (dx * dx + dy * dy + dz * dz).sqrt()
    }
}

/// Axis-aligned bounding box; `min <= max` component-wise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Point3,
    pub max: Point3,
}

impl Aabb {
    pub fn new(min: Point3, max: Point3) -> Result<Self> {
        if !min.is_finite() || !max.is_finite() {
            return Err(Error::Geometry("non-finite box corner".into()));
        }
        if min.x > max.x || min.y > max.y || min.z > max.z {
            return Err(Error::Geometry(format!(
                "box min {min:?} exceeds max {max:?}"
            )));
        }
        Ok(Self { min, max })
    }

    pub fn center(&self) -> Point3 {
        Point3::new(
            0.5 * (self.min.x + self.max.x),
            0.5 * (self.min.y + self.max.y),
            0.5 * (self.min.z + self.max.z),
        )
    }

    pub fn extents(&self) -> [f64; 3] {
        [
            self.max.x - self.min.x,
            self.max.y - self.min.y,
            self.max.z - self.min.z,
        ]
    }

    pub fn volume(&self) -> f64 {
        let [ex, ey, ez] = self.extents();
        ex * ey * ez
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        Aabb {
            min: Point3::new(
                self.min.x.min(other.min.x),
                self.min.y.min(other.min.y),
                self.min.z.min(other.min.z),
            ),
            max: Point3::new(
                self.max.x.max(other.max.x),
                self.max.y.max(other.max.y),
                self.max.z.max(other.max.z),
            ),
        }
    }
}

/// Component-wise bounds of a non-empty point list.
pub fn bounds(points: &[Point3]) -> Result<Aabb> {
    let (first, rest) = points
        .split_first()
        .ok_or_else(|| Error::Geometry("bounds of empty point set".into()))?;
    let mut min = *first;
    let mut max = *first;
    for p in rest {
        min.x = min.x.min(p.x);
        min.y = min.y.min(p.y);
        min.z = min.z.min(p.z);
        max.x = max.x.max(p.x);
        max.y = max.y.max(p.y);
        max.z = max.z.max(p.z);
    }
    Aabb::new(min, max)
}

pub type Cell = [i64; 3];

/// Set of occupied cells at a fixed resolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoxelGrid {
    resolution: f64,
    cells: BTreeSet<Cell>,
}

impl VoxelGrid {
    pub fn empty(resolution: f64) -> Result<Self> {
        check_resolution(resolution)?;
        Ok(Self {
            resolution,
            cells: BTreeSet::new(),
        })
    }

    pub fn from_cells(resolution: f64, cells: impl IntoIterator<Item = Cell>) -> Result<Self> {
        check_resolution(resolution)?;
        Ok(Self {
            resolution,
            cells: cells.into_iter().collect(),
        })
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn cells(&self) -> &BTreeSet<Cell> {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn contains(&self, cell: &Cell) -> bool {
        self.cells.contains(cell)
    }

    pub fn cell_of(&self, p: &Point3) -> Cell {
        cell_of(p, self.resolution)
    }

    pub fn cell_center(&self, cell: &Cell) -> Point3 {
        let r = self.resolution;
        Point3::new(
            (cell[0] as f64 + 0.5) * r,
            (cell[1] as f64 + 0.5) * r,
            (cell[2] as f64 + 0.5) * r,
        )
    }

    pub fn centers(&self) -> Vec<Point3> {
        self.cells.iter().map(|c| self.cell_center(c)).collect()
    }

    /// Inclusive integer bounds of the occupied cells, `None` when empty.
    pub fn cell_bounds(&self) -> Option<(Cell, Cell)> {
        let mut it = self.cells.iter();
        let first = *it.next()?;
        let (mut lo, mut hi) = (first, first);
        for c in it {
            for k in 0..3 {
                lo[k] = lo[k].min(c[k]);
                hi[k] = hi[k].max(c[k]);
            }
        }
        Some((lo, hi))
    }

    /// Horizontal projection of the occupied cells.
    pub fn footprint(&self) -> BTreeSet<[i64; 2]> {
        self.cells.iter().map(|c| [c[0], c[1]]).collect()
    }

    /// Adds every cell of `other`; returns the number of new cells.
    pub fn union_with(&mut self, other: &VoxelGrid) -> Result<usize> {
        same_resolution(self, other)?;
        let before = self.cells.len();
        self.cells.extend(other.cells.iter().copied());
        Ok(self.cells.len() - before)
    }

    pub fn intersection_count(&self, other: &VoxelGrid) -> Result<usize> {
        same_resolution(self, other)?;
        let (small, large) = if self.len() <= other.len() {
            (self, other)
        } else {
            (other, self)
        };
        Ok(small.cells.iter().filter(|c| large.contains(c)).count())
    }
}

fn check_resolution(resolution: f64) -> Result<()> {
    if resolution.is_finite() && resolution > 0.0 {
        Ok(())
    } else {
        Err(Error::Geometry(format!(
            "voxel resolution must be positive, got {resolution}"
        )))
    }
}

pub(crate) fn same_resolution(a: &VoxelGrid, b: &VoxelGrid) -> Result<()> {
    if a.resolution == b.resolution {
        Ok(())
    } else {
        Err(Error::ResolutionMismatch(a.resolution, b.resolution))
    }
}

fn cell_of(p: &Point3, resolution: f64) -> Cell {
    [
        (p.x / resolution).floor() as i64,
        (p.y / resolution).floor() as i64,
        (p.z / resolution).floor() as i64,
    ]
}

pub fn voxelize(points: &[Point3], resolution: f64) -> Result<VoxelGrid> {
    check_resolution(resolution)?;
    let mut cells = BTreeSet::new();
    for (i, p) in points.iter().enumerate() {
        if !p.is_finite() {
            return Err(Error::Geometry(format!("point {i} is not finite: {p:?}")));
        }
        cells.insert(cell_of(p, resolution));
    }
    Ok(VoxelGrid { resolution, cells })
}

/// Intersection over union of two grids. Two empty grids score 0.
pub fn voxel_iou(a: &VoxelGrid, b: &VoxelGrid) -> Result<f64> {
    let inter = a.intersection_count(b)?;
    let union = a.len() + b.len() - inter;
    if union == 0 {
        return Ok(0.0);
    }
    Ok(inter as f64 / union as f64)
}
