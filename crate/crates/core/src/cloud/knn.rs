//! Exact k-nearest-neighbour search over a uniform hash grid.
//!
//! Results are ordered by ascending Euclidean distance with ties broken by
//! ascending point index, which makes them identical to a brute-force scan.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;

use super::{dist2, Aabb, Point, Vec3};
use crate::error::{Error, Result};

const BRUTE_FORCE_BELOW: usize = 64;

/// Anything with a 3-D position can be indexed.
pub trait Positioned: Sync {
    fn pos(&self) -> Vec3;
}

impl Positioned for Vec3 {
    fn pos(&self) -> Vec3 {
        *self
    }
}

impl Positioned for Point {
    fn pos(&self) -> Vec3 {
        self.position
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    d2: f64,
    index: u32,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.d2
            .total_cmp(&other.d2)
            .then(self.index.cmp(&other.index))
    }
}

#[derive(Debug)]
struct Grid {
    origin: Vec3,
    cell: Vec3,
    dims: [usize; 3],
    // point indices grouped by cell; cell c owns order[start[c]..start[c+1]]
    order: Vec<u32>,
    start: Vec<u32>,
}

impl Grid {
    fn build<P: Positioned>(points: &[P]) -> Grid {
        let bbox = Aabb::from_points(points.iter().map(P::pos)).expect("non-empty");
        let n = points.len();
        let edge = bbox.diagonal() / (n as f64).cbrt();
        let ext = bbox.extent();
        let mut dims = [1usize; 3];
        let mut cell = [1.0; 3];
        for a in 0..3 {
            if edge > 0.0 && ext[a] > 0.0 {
                dims[a] = ((ext[a] / edge).ceil() as usize).clamp(1, n);
                cell[a] = ext[a] / dims[a] as f64;
            }
        }
        let mut grid = Grid {
            origin: bbox.min,
            cell,
            dims,
            order: Vec::new(),
            start: Vec::new(),
        };
        let cells = dims[0] * dims[1] * dims[2];
        let mut start = vec![0u32; cells + 1];
        for p in points {
            start[grid.flat(grid.coords(p.pos())) + 1] += 1;
        }
        for c in 0..cells {
            start[c + 1] += start[c];
        }
        let mut fill = start.clone();
        let mut order = vec![0u32; n];
        for (i, p) in points.iter().enumerate() {
            let c = grid.flat(grid.coords(p.pos()));
            order[fill[c] as usize] = i as u32;
            fill[c] += 1;
        }
        grid.order = order;
        grid.start = start;
        grid
    }

    fn coords(&self, p: Vec3) -> [isize; 3] {
        [0, 1, 2].map(|a| {
            let u = ((p[a] - self.origin[a]) / self.cell[a]).floor();
            (u.max(0.0) as isize).min(self.dims[a] as isize - 1)
        })
    }

    fn flat(&self, c: [isize; 3]) -> usize {
        c[0] as usize + self.dims[0] * (c[1] as usize + self.dims[1] * c[2] as usize)
    }

    fn cell_points(&self, c: [isize; 3]) -> &[u32] {
        let f = self.flat(c);
        &self.order[self.start[f] as usize..self.start[f + 1] as usize]
    }

    /// Lower bound on the distance from `q` to any point in a cell outside the
    /// Chebyshev ring `r` around `center`; `None` once the ring covers the grid.
    fn outside_bound(&self, q: Vec3, center: [isize; 3], r: isize) -> Option<f64> {
        let mut best: Option<f64> = None;
        for a in 0..3 {
            let lo = center[a] - r;
            let hi = center[a] + r;
            if lo > 0 {
                let face = self.origin[a] + lo as f64 * self.cell[a];
                let d = (q[a] - face).max(0.0);
                best = Some(best.map_or(d, |b: f64| b.min(d)));
            }
            if hi < self.dims[a] as isize - 1 {
                let face = self.origin[a] + (hi + 1) as f64 * self.cell[a];
                let d = (face - q[a]).max(0.0);
                best = Some(best.map_or(d, |b: f64| b.min(d)));
            }
        }
        best
    }
}

/// KNN index borrowing its point set.
#[derive(Debug)]
pub struct KnnIndex<'a, P = Vec3> {
    points: &'a [P],
    grid: Option<Grid>,
}

impl<'a, P: Positioned> KnnIndex<'a, P> {
    pub fn new(points: &'a [P]) -> Self {
        let grid = (points.len() >= BRUTE_FORCE_BELOW).then(|| Grid::build(points));
        Self { points, grid }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &'a [P] {
        self.points
    }

    /// The `k` nearest points to `query`, nearest first.
    pub fn knn(&self, query: Vec3, k: usize) -> Result<Vec<usize>> {
        Ok(self.knn_dist2(query, k)?.into_iter().map(|(i, _)| i).collect())
    }

    /// Like [`knn`](Self::knn) but also returns squared distances.
    pub fn knn_dist2(&self, query: Vec3, k: usize) -> Result<Vec<(usize, f64)>> {
        if k == 0 || k > self.points.len() {
            return Err(Error::invalid(format!(
                "k = {k} must be in 1..={}",
                self.points.len()
            )));
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        let offer = |index: u32, heap: &mut BinaryHeap<Candidate>| {
            let c = Candidate {
                d2: dist2(query, self.points[index as usize].pos()),
                index,
            };
            if heap.len() < k {
                heap.push(c);
            } else if c < *heap.peek().unwrap() {
                heap.pop();
                heap.push(c);
            }
        };
        match &self.grid {
            None => {
                for i in 0..self.points.len() {
                    offer(i as u32, &mut heap);
                }
            }
            Some(grid) => {
                let center = grid.coords(query);
                let mut r: isize = 0;
                loop {
                    for_each_ring_cell(grid, center, r, |c| {
                        for &i in grid.cell_points(c) {
                            offer(i, &mut heap);
                        }
                    });
                    let Some(bound) = grid.outside_bound(query, center, r) else {
                        break;
                    };
                    if heap.len() == k {
                        let worst = heap.peek().unwrap().d2;
                        // conservative margin for rounding in the cell arithmetic
                        let b = (bound * (1.0 - 1e-12) - 1e-12).max(0.0);
                        if worst < b * b {
                            break;
                        }
                    }
                    r += 1;
                }
            }
        }
        let mut out = heap.into_vec();
        out.sort_unstable();
        Ok(out.into_iter().map(|c| (c.index as usize, c.d2)).collect())
    }

    /// Batched [`knn`](Self::knn), evaluated in parallel.
    pub fn knn_many(&self, queries: &[Vec3], k: usize) -> Result<Vec<Vec<usize>>> {
        queries.par_iter().map(|&q| self.knn(q, k)).collect()
    }

    /// Nearest point satisfying `accept`, found by widening the neighbour count.
    pub fn nearest_where(&self, query: Vec3, accept: impl Fn(usize) -> bool) -> Option<usize> {
        let n = self.points.len();
        let mut k = 8.min(n);
        loop {
            let found = self.knn(query, k).ok()?;
            if let Some(&i) = found.iter().find(|&&i| accept(i)) {
                return Some(i);
            }
            if k == n {
                return None;
            }
            k = (k * 4).min(n);
        }
    }
}

fn for_each_ring_cell(grid: &Grid, center: [isize; 3], r: isize, mut f: impl FnMut([isize; 3])) {
    let lo = [0, 1, 2].map(|a| (center[a] - r).max(0));
    let hi = [0, 1, 2].map(|a| (center[a] + r).min(grid.dims[a] as isize - 1));
    for z in lo[2]..=hi[2] {
        for y in lo[1]..=hi[1] {
            for x in lo[0]..=hi[0] {
                let c = [x, y, z];
                let cheb = (0..3).map(|a| (c[a] - center[a]).abs()).max().unwrap();
                if cheb == r {
                    f(c);
                }
            }
        }
    }
}
