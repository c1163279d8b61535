//! Reference samplers: random (RS), farthest-point (FPS), inverse-density
//! (IDIS), curvature-based (GS) and voxel-centroid (VS).

use rand::Rng;

use super::{check_count, SampledTile, SamplingMethod};
use crate::cloud::{dist2, dot, Aabb, KnnIndex, Point, Vec3};
use crate::error::{Error, Result};

const DENSITY_K: usize = 16;
const NORMAL_K: usize = 16;

pub fn baseline_sample(points: &[Point], n: usize, method: SamplingMethod, seed: u64) -> Result<SampledTile> {
    check_count(points.len(), n)?;
    let point_indices = match method {
        SamplingMethod::Urs => {
            return Err(Error::invalid("URS is not a baseline sampler; use urs_sample"))
        }
        SamplingMethod::Rs => random(points.len(), n, seed),
        SamplingMethod::Fps => farthest(points, n, seed),
        SamplingMethod::Idis => inverse_density(points, n)?,
        SamplingMethod::Gs => curvature(points, n)?,
        SamplingMethod::Vs => voxel(points, n),
    };
    Ok(SampledTile {
        tile_id: 0,
        frame_index: 0,
        point_indices,
        centers: Vec::new(),
    })
}

fn random(len: usize, n: usize, seed: u64) -> Vec<usize> {
    let mut rng = crate::seed::rng(seed);
    let mut idx: Vec<usize> = (0..len).collect();
    for i in 0..n {
        let j = rng.gen_range(i..len);
        idx.swap(i, j);
    }
    idx.truncate(n);
    idx
}

fn farthest(points: &[Point], n: usize, seed: u64) -> Vec<usize> {
    let mut rng = crate::seed::rng(seed);
    let mut current = rng.gen_range(0..points.len());
    let mut nearest = vec![f64::INFINITY; points.len()];
    let mut out = Vec::with_capacity(n);
    loop {
        out.push(current);
        nearest[current] = f64::NEG_INFINITY;
        if out.len() == n {
            return out;
        }
        let c = points[current].position;
        let mut best = (f64::NEG_INFINITY, 0);
        for (i, (d, p)) in nearest.iter_mut().zip(points).enumerate() {
            *d = d.min(dist2(c, p.position));
            if *d > best.0 {
                best = (*d, i);
            }
        }
        current = best.1;
    }
}

/// Indices of the `n` largest scores; ties go to the lower index.
fn top_n(scores: &[f64], n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(n);
    idx
}

/// Neighbours of `i` excluding itself (the first hit at distance zero).
fn neighbours(index: &KnnIndex<'_, Point>, p: Vec3, k: usize) -> Result<Vec<(usize, f64)>> {
    let mut hits = index.knn_dist2(p, (k + 1).min(index.len()))?;
    hits.remove(0);
    Ok(hits)
}

fn inverse_density(points: &[Point], n: usize) -> Result<Vec<usize>> {
    let index = KnnIndex::new(points);
    let k = DENSITY_K.min(points.len() - 1);
    if k == 0 {
        return Ok((0..n).collect());
    }
    // mean neighbour distance; large means sparse
    let sparsity = points
        .iter()
        .map(|p| {
            let hits = neighbours(&index, p.position, k)?;
            Ok(hits.iter().map(|(_, d2)| d2.sqrt()).sum::<f64>() / k as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(top_n(&sparsity, n))
}

/// Eigenvector of the smallest eigenvalue of a symmetric 3×3 matrix (Jacobi).
pub(crate) fn smallest_eigenvector(mut a: [[f64; 3]; 3]) -> Vec3 {
    let mut v = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    for _ in 0..50 {
        let off = a[0][1].abs() + a[0][2].abs() + a[1][2].abs();
        if off < 1e-30 {
            break;
        }
        for (p, q) in [(0, 1), (0, 2), (1, 2)] {
            if a[p][q].abs() < 1e-300 {
                continue;
            }
            let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            for k in 0..3 {
                let akp = a[k][p];
                let akq = a[k][q];
                a[k][p] = c * akp - s * akq;
                a[k][q] = s * akp + c * akq;
            }
            for k in 0..3 {
                let apk = a[p][k];
                let aqk = a[q][k];
                a[p][k] = c * apk - s * aqk;
                a[q][k] = s * apk + c * aqk;
            }
            for row in v.iter_mut() {
                let vp = row[p];
                let vq = row[q];
                row[p] = c * vp - s * vq;
                row[q] = s * vp + c * vq;
            }
        }
    }
    let k = (0..3)
        .min_by(|&x, &y| a[x][x].total_cmp(&a[y][y]))
        .unwrap();
    [v[0][k], v[1][k], v[2][k]]
}

fn curvature(points: &[Point], n: usize) -> Result<Vec<usize>> {
    let index = KnnIndex::new(points);
    let k = NORMAL_K.min(points.len());
    let hoods = points
        .iter()
        .map(|p| index.knn(p.position, k))
        .collect::<Result<Vec<_>>>()?;
    let normals: Vec<Vec3> = hoods
        .iter()
        .map(|hood| {
            let mut mean = [0.0; 3];
            for &j in hood {
                for a in 0..3 {
                    mean[a] += points[j].position[a] / hood.len() as f64;
                }
            }
            let mut cov = [[0.0; 3]; 3];
            for &j in hood {
                let d = [0, 1, 2].map(|a| points[j].position[a] - mean[a]);
                for r in 0..3 {
                    for c in 0..3 {
                        cov[r][c] += d[r] * d[c];
                    }
                }
            }
            smallest_eigenvector(cov)
        })
        .collect();
    let scores: Vec<f64> = hoods
        .iter()
        .enumerate()
        .map(|(i, hood)| {
            let ni = normals[i];
            let mut mean = [0.0; 3];
            for &j in hood {
                let nj = normals[j];
                let sign = if dot(ni, nj) < 0.0 { -1.0 } else { 1.0 };
                for a in 0..3 {
                    mean[a] += sign * nj[a];
                }
            }
            let len = dot(mean, mean).sqrt();
            if len == 0.0 {
                return 1.0;
            }
            1.0 - (dot(ni, mean) / len).abs().min(1.0)
        })
        .collect();
    Ok(top_n(&scores, n))
}

fn voxel(points: &[Point], n: usize) -> Vec<usize> {
    let bbox = Aabb::from_points(points.iter().map(|p| p.position)).expect("non-empty");
    let diag = bbox.diagonal();
    let mut edge = if diag > 0.0 { diag / (n as f64).cbrt() } else { 1.0 };
    let key = |p: Vec3, edge: f64| -> [i64; 3] {
        [0, 1, 2].map(|a| ((p[a] - bbox.min[a]) / edge).floor() as i64)
    };
    let mut keyed: Vec<([i64; 3], usize)> = Vec::new();
    for _ in 0..200 {
        keyed = points
            .iter()
            .enumerate()
            .map(|(i, p)| (key(p.position, edge), i))
            .collect();
        keyed.sort_unstable();
        let occupied = 1 + keyed.windows(2).filter(|w| w[0].0 != w[1].0).count();
        if occupied >= n || diag == 0.0 {
            break;
        }
        edge *= 0.85;
    }
    // one representative per voxel: the member nearest the voxel centroid
    let mut reps: Vec<(usize, usize)> = Vec::new(); // (population, representative)
    for group in keyed.chunk_by(|a, b| a.0 == b.0) {
        let mut c = [0.0; 3];
        for &(_, i) in group {
            for a in 0..3 {
                c[a] += points[i].position[a] / group.len() as f64;
            }
        }
        let rep = group
            .iter()
            .map(|&(_, i)| i)
            .min_by(|&a, &b| {
                dist2(points[a].position, c)
                    .total_cmp(&dist2(points[b].position, c))
                    .then(a.cmp(&b))
            })
            .unwrap();
        reps.push((group.len(), rep));
    }
    reps.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut out: Vec<usize> = reps.iter().take(n).map(|&(_, i)| i).collect();
    if out.len() < n {
        let mut used = vec![false; points.len()];
        for &i in &out {
            used[i] = true;
        }
        out.extend((0..points.len()).filter(|&i| !used[i]).take(n - out.len()));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(coords: &[Vec3]) -> Vec<Point> {
        coords.iter().map(|&c| Point::new(c, [0; 3])).collect()
    }

    #[test]
    fn rs_exhausts_tile() {
        let p = pts(&[[0.0; 3], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]]);
        let mut s = baseline_sample(&p, 3, SamplingMethod::Rs, 5).unwrap().point_indices;
        s.sort_unstable();
        assert_eq!(s, vec![0, 1, 2]);
    }

    #[test]
    fn fps_square_picks_diagonal() {
        let p = pts(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [0.0, 1.0, 0.0]]);
        for seed in 0..8 {
            let s = baseline_sample(&p, 2, SamplingMethod::Fps, seed).unwrap().point_indices;
            assert_eq!((s[0] + 2) % 4, s[1], "seed {seed}: {s:?}");
        }
    }

    #[test]
    fn jacobi_recovers_plane_normal() {
        let cov = [[4.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 1.0]];
        let v = smallest_eigenvector(cov);
        assert!((v[1].abs() - 1.0).abs() < 1e-12);
        let rotated = [[2.0, 1.0, 0.0], [1.0, 2.0, 0.0], [0.0, 0.0, 5.0]];
        let v = smallest_eigenvector(rotated);
        assert!((v[0] + v[1]).abs() < 1e-9 && v[2].abs() < 1e-9);
    }

    #[test]
    fn gs_prefers_crease() {
        // two planes meeting at x = 0 form a crease
        let mut c = Vec::new();
        for i in -6..=6 {
            for j in 0..8 {
                let x = i as f64 * 0.1;
                c.push([x, x.abs(), j as f64 * 0.1]);
            }
        }
        let p = pts(&c);
        let s = baseline_sample(&p, 8, SamplingMethod::Gs, 0).unwrap().point_indices;
        let near_crease = s.iter().filter(|&&i| p[i].position[0].abs() <= 0.21).count();
        assert!(near_crease >= 6, "{near_crease}");
    }

    #[test]
    fn vs_returns_distinct_points() {
        let mut c = Vec::new();
        for i in 0..20 {
            for j in 0..20 {
                c.push([i as f64, j as f64, ((i * j) % 7) as f64]);
            }
        }
        let p = pts(&c);
        for n in [1, 17, 100, 400] {
            let mut s = baseline_sample(&p, n, SamplingMethod::Vs, 0).unwrap().point_indices;
            assert_eq!(s.len(), n);
            s.sort_unstable();
            s.dedup();
            assert_eq!(s.len(), n);
        }
    }

    #[test]
    fn urs_is_not_a_baseline() {
        let p = pts(&[[0.0; 3]]);
        assert!(baseline_sample(&p, 1, SamplingMethod::Urs, 0).is_err());
        assert!(matches!(
            baseline_sample(&p, 2, SamplingMethod::Rs, 0),
            Err(Error::InsufficientPoints { .. })
        ));
    }
}
