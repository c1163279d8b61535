use super::{Aabb, PointCloudFrame, Vec3};
use crate::error::{Error, Result};

/// Uniform axis-aligned grid over a sequence-wide bounding box.
///
/// Cells are half-open `[lo, hi)` except along the max face of the box, which
/// belongs to the last cell. The cell of a point depends only on its position,
/// so tile `j` covers the same region in every frame of the sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TileGrid {
    pub dims: [usize; 3],
    pub bbox: Aabb,
}

impl TileGrid {
    pub fn new(dims: [usize; 3], bbox: Aabb) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::invalid(format!("grid dims must be >= 1, got {dims:?}")));
        }
        if (0..3).any(|a| !(bbox.max[a] >= bbox.min[a])) {
            return Err(Error::invalid("bounding box has max < min"));
        }
        Ok(Self { dims, bbox })
    }

    pub fn tile_count(&self) -> usize {
        self.dims.iter().product()
    }

    fn axis_cell(&self, axis: usize, c: f64) -> usize {
        let g = self.dims[axis];
        let extent = self.bbox.max[axis] - self.bbox.min[axis];
        if extent <= 0.0 || c >= self.bbox.max[axis] {
            return if extent <= 0.0 { 0 } else { g - 1 };
        }
        let u = (c - self.bbox.min[axis]) / extent * g as f64;
        (u.floor() as usize).min(g - 1)
    }

    /// Per-axis cell coordinates, or `None` when `p` lies outside the box.
    pub fn cell_coords(&self, p: Vec3) -> Option<[usize; 3]> {
        if !self.bbox.contains(p) {
            return None;
        }
        Some([0, 1, 2].map(|a| self.axis_cell(a, p[a])))
    }

    /// Flat tile id, x fastest.
    pub fn tile_of(&self, p: Vec3) -> Option<usize> {
        self.cell_coords(p)
            .map(|[x, y, z]| x + self.dims[0] * (y + self.dims[1] * z))
    }

    /// Bounds of tile `j`.
    pub fn tile_bounds(&self, j: usize) -> Aabb {
        let [gx, gy, _] = self.dims;
        let c = [j % gx, (j / gx) % gy, j / (gx * gy)];
        let mut min = [0.0; 3];
        let mut max = [0.0; 3];
        for a in 0..3 {
            let step = (self.bbox.max[a] - self.bbox.min[a]) / self.dims[a] as f64;
            min[a] = self.bbox.min[a] + step * c[a] as f64;
            max[a] = self.bbox.min[a] + step * (c[a] + 1) as f64;
        }
        Aabb::new(min, max)
    }
}

/// A frame partitioned into the tiles of a [`TileGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct TiledFrame {
    pub frame_index: usize,
    pub grid: [usize; 3],
    pub global_bbox: Aabb,
    /// `tiles[j]` lists indices into the frame's points, ascending.
    pub tiles: Vec<Vec<usize>>,
}

impl TiledFrame {
    pub fn tile_grid(&self) -> TileGrid {
        TileGrid {
            dims: self.grid,
            bbox: self.global_bbox,
        }
    }

    /// Tile id of every point, by point index.
    pub fn point_tiles(&self, n_points: usize) -> Vec<usize> {
        let mut out = vec![0; n_points];
        for (j, tile) in self.tiles.iter().enumerate() {
            for &i in tile {
                out[i] = j;
            }
        }
        out
    }
}

pub fn tile_frame(frame: &PointCloudFrame, grid: [usize; 3], global_bbox: Aabb) -> Result<TiledFrame> {
    let tg = TileGrid::new(grid, global_bbox)?;
    let mut tiles = vec![Vec::new(); tg.tile_count()];
    for (i, p) in frame.points.iter().enumerate() {
        let j = tg.tile_of(p.position).ok_or(Error::OutOfBounds { index: i })?;
        tiles[j].push(i);
    }
    Ok(TiledFrame {
        frame_index: frame.frame_index,
        grid,
        global_bbox,
        tiles,
    })
}
