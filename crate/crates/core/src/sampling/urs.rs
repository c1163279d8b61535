//! Uniform-random sampling.
//!
//! The tile's bounding box is split into `n_cubes` equal cells. Each occupied
//! cell contributes centre points; around every centre the `n / n_cubes`
//! nearest not-yet-taken points of the whole tile are collected. A centre is
//! the point of its cell nearest to a seeded uniform location inside the cell,
//! so identically seeded calls on slightly moved content pick corresponding
//! centres.

use rand::Rng;

use super::{check_count, SampledTile};
use crate::cloud::{dist2, Aabb, KnnIndex, Point, TileGrid, Vec3};
use crate::error::{Error, Result};

/// Factorisation `a·b·c = n_cubes` whose cell shape best matches `extent`.
pub fn cube_dims(n_cubes: usize, extent: Vec3) -> [usize; 3] {
    let diag = (extent[0].powi(2) + extent[1].powi(2) + extent[2].powi(2)).sqrt();
    let floor = if diag > 0.0 { diag * 1e-3 } else { 1.0 };
    let ext = extent.map(|e| e.max(floor));
    let scale = (n_cubes as f64 / (ext[0] * ext[1] * ext[2])).cbrt();
    let target = ext.map(|e| (e * scale).ln());
    let mut best = [n_cubes, 1, 1];
    let mut best_cost = f64::INFINITY;
    for a in (1..=n_cubes).filter(|a| n_cubes % a == 0) {
        let rest = n_cubes / a;
        for b in (1..=rest).filter(|b| rest % b == 0) {
            let dims = [a, b, rest / b];
            let cost: f64 = (0..3).map(|i| ((dims[i] as f64).ln() - target[i]).powi(2)).sum();
            if cost < best_cost - 1e-12 {
                best_cost = cost;
                best = dims;
            }
        }
    }
    best
}

/// Number of centres assigned to each cube.
///
/// Every cube starts with one; an empty cube hands its share to the nearest
/// occupied cube, and a cube holding fewer points than its share passes the
/// excess on to the nearest cube with room.
fn cube_quotas(grid: &TileGrid, counts: &[usize]) -> Vec<usize> {
    let m = counts.len();
    let centers: Vec<Vec3> = (0..m)
        .map(|j| {
            let b = grid.tile_bounds(j);
            [0, 1, 2].map(|a| 0.5 * (b.min[a] + b.max[a]))
        })
        .collect();
    let mut quota = vec![0usize; m];
    let nearest_with_room = |from: usize, quota: &[usize]| {
        (0..m)
            .filter(|&j| quota[j] < counts[j])
            .min_by(|&a, &b| {
                dist2(centers[from], centers[a])
                    .total_cmp(&dist2(centers[from], centers[b]))
                    .then(a.cmp(&b))
            })
            .expect("total points >= cube count")
    };
    for j in 0..m {
        let target = if quota[j] < counts[j] { j } else { nearest_with_room(j, &quota) };
        quota[target] += 1;
    }
    quota
}

pub fn urs_sample(points: &[Point], n: usize, n_cubes: usize, seed: u64) -> Result<SampledTile> {
    if n_cubes == 0 || n % n_cubes != 0 {
        return Err(Error::invalid(format!(
            "sample size {n} is not divisible by cube count {n_cubes}"
        )));
    }
    check_count(points.len(), n)?;
    let per_center = n / n_cubes;

    let bbox = Aabb::from_points(points.iter().map(|p| p.position)).expect("non-empty");
    let grid = TileGrid::new(cube_dims(n_cubes, bbox.extent()), bbox)?;
    let cube_of = |i: usize| grid.tile_of(points[i].position).expect("inside own bbox");
    let mut counts = vec![0usize; n_cubes];
    for i in 0..points.len() {
        counts[cube_of(i)] += 1;
    }
    let quota = cube_quotas(&grid, &counts);

    let index = KnnIndex::new(points);
    let mut rng = crate::seed::rng(seed);
    let mut is_center = vec![false; points.len()];
    let mut centers = Vec::with_capacity(n_cubes);
    for (cube, &q) in quota.iter().enumerate() {
        let b = grid.tile_bounds(cube);
        for _ in 0..q {
            let loc = [0, 1, 2].map(|a| {
                if b.max[a] > b.min[a] {
                    rng.gen_range(b.min[a]..b.max[a])
                } else {
                    b.min[a]
                }
            });
            let c = index
                .nearest_where(loc, |i| !is_center[i] && cube_of(i) == cube)
                .expect("quota never exceeds cube population");
            is_center[c] = true;
            centers.push(c);
        }
    }

    let mut taken = vec![false; points.len()];
    let mut selected = Vec::with_capacity(n);
    for &c in &centers {
        let mut got = 0;
        let mut k = per_center.min(points.len());
        'expand: loop {
            for i in index.knn(points[c].position, k)? {
                if !taken[i] {
                    taken[i] = true;
                    selected.push(i);
                    got += 1;
                    if got == per_center {
                        break 'expand;
                    }
                }
            }
            // every point within the k nearest is taken; look further out
            k = (k * 2).min(points.len());
        }
    }
    debug_assert_eq!(selected.len(), n);
    Ok(SampledTile {
        tile_id: 0,
        frame_index: 0,
        point_indices: selected,
        centers,
    })
}
