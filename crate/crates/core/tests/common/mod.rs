#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::Rng;
use voxport::cloud::{Point, Vec3};

pub fn random_points(n: usize, seed: u64) -> Vec<Point> {
    let mut rng = voxport::seed::rng(seed);
    (0..n)
        .map(|_| Point::new([rng.gen(), rng.gen(), rng.gen()], rng.gen()))
        .collect()
}

/// A unit-cube blob with random colours (frame t−1) and the same blob moved
/// by `delta` along x with its points in a fresh order (frame t).
pub fn translated_pair(n: usize, delta: f64, seed: u64) -> (Vec<Point>, Vec<Point>) {
    let prev = random_points(n, seed);
    let mut cur: Vec<Point> = prev
        .iter()
        .map(|p| {
            let mut q = *p;
            q.position[0] += delta;
            q
        })
        .collect();
    cur.shuffle(&mut voxport::seed::rng(seed ^ 0x5eed));
    (prev, cur)
}

pub fn dist2(a: Vec3, b: Vec3) -> f64 {
    (0..3).map(|k| (a[k] - b[k]).powi(2)).sum()
}

/// Indices sorted by (distance, index).
pub fn brute_knn(points: &[Vec3], q: Vec3, k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..points.len()).collect();
    idx.sort_by(|&a, &b| {
        dist2(points[a], q)
            .partial_cmp(&dist2(points[b], q))
            .unwrap()
            .then(a.cmp(&b))
    });
    idx.truncate(k);
    idx
}
