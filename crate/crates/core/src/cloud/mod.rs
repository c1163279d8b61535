//! Point-cloud data model, PLY I/O, sequence-stable tiling and exact KNN.

mod knn;
mod manifest;
mod ply;
mod tiling;

pub use knn::{KnnIndex, Positioned};
pub use manifest::{sequence_bbox, SequenceManifest};
pub use ply::{load_ply, read_ply, save_ply, write_ply, PlyFormat};
pub use tiling::{tile_frame, TileGrid, TiledFrame};

pub type Vec3 = [f64; 3];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub position: Vec3,
    pub color: [u8; 3],
}

impl Point {
    pub fn new(position: Vec3, color: [u8; 3]) -> Self {
        Self { position, color }
    }

    pub fn gray(&self) -> f64 {
        rgb_to_gray(self.color)
    }
}

/// One frame of a point-cloud video. Point order is significant and preserved
/// by PLY round-trips.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloudFrame {
    pub frame_index: usize,
    pub points: Vec<Point>,
}

impl PointCloudFrame {
    pub fn new(frame_index: usize, points: Vec<Point>) -> Self {
        Self {
            frame_index,
            points,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn positions(&self) -> Vec<Vec3> {
        self.points.iter().map(|p| p.position).collect()
    }

    pub fn bbox(&self) -> Option<Aabb> {
        Aabb::from_points(self.points.iter().map(|p| p.position))
    }
}

/// Luma conversion with the classic 0.299 / 0.587 / 0.114 weights.
pub fn rgb_to_gray(color: [u8; 3]) -> f64 {
    0.299 * f64::from(color[0]) + 0.587 * f64::from(color[1]) + 0.114 * f64::from(color[2])
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        Self { min, max }
    }

    pub fn from_points(points: impl IntoIterator<Item = Vec3>) -> Option<Self> {
        let mut it = points.into_iter();
        let first = it.next()?;
        let mut b = Aabb::new(first, first);
        for p in it {
            b.include(p);
        }
        Some(b)
    }

    pub fn include(&mut self, p: Vec3) {
        for a in 0..3 {
            self.min[a] = self.min[a].min(p[a]);
            self.max[a] = self.max[a].max(p[a]);
        }
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        let mut b = *self;
        b.include(other.min);
        b.include(other.max);
        b
    }

    pub fn contains(&self, p: Vec3) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }

    pub fn extent(&self) -> Vec3 {
        [
            self.max[0] - self.min[0],
            self.max[1] - self.min[1],
            self.max[2] - self.min[2],
        ]
    }

    pub fn diagonal(&self) -> f64 {
        norm(self.extent())
    }
}

pub(crate) fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn dist2(a: Vec3, b: Vec3) -> f64 {
    let d = sub(a, b);
    dot(d, d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn gray_reference_values() {
        assert_eq!(rgb_to_gray([255, 255, 255]), 255.0);
        assert_eq!(rgb_to_gray([0, 0, 0]), 0.0);
        assert!((rgb_to_gray([255, 0, 0]) - 76.245).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn gray_is_monotone_and_bounded(r: u8, g: u8, b: u8, ch in 0usize..3) {
            let c = [r, g, b];
            let y = rgb_to_gray(c);
            prop_assert!((0.0..=255.0 + 1e-9).contains(&y));
            if c[ch] < 255 {
                let mut up = c;
                up[ch] += 1;
                prop_assert!(rgb_to_gray(up) > y);
            }
        }
    }

    #[test]
    fn bbox_union_and_contains() {
        let a = Aabb::new([0.0; 3], [1.0; 3]);
        let b = Aabb::new([-1.0, 0.5, 0.5], [0.5, 2.0, 0.5]);
        let u = a.union(&b);
        assert_eq!(u.min, [-1.0, 0.0, 0.0]);
        assert_eq!(u.max, [1.0, 2.0, 1.0]);
        assert!(u.contains([1.0, 2.0, 1.0]));
        assert!(!a.contains([1.0 + 1e-9, 0.0, 0.0]));
    }
}
