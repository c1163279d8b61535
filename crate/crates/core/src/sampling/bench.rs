//! Sampler comparison on a rigidly moved point set.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;

use super::{ifmi_curve, sample, DacvvContext, SamplingMethod};
use crate::cloud::Point;
use crate::error::Result;
use crate::memtrack;
use crate::seed::{self, tag};

/// DaCVV thresholds reported by the benchmark.
pub const THRESHOLDS: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

/// `n` points in the unit cube with random colours (frame t−1), and the same
/// points moved by `delta` along x in a fresh order (frame t).
pub fn translated_pair(n: usize, delta: f64, seed: u64) -> (Vec<Point>, Vec<Point>) {
    let mut rng = seed::rng(seed::derive(seed, &[tag::SCENE]));
    let prev: Vec<Point> = (0..n)
        .map(|_| Point::new([rng.gen(), rng.gen(), rng.gen()], rng.gen()))
        .collect();
    let mut cur: Vec<Point> = prev
        .iter()
        .map(|p| {
            let mut q = *p;
            q.position[0] += delta;
            q
        })
        .collect();
    cur.shuffle(&mut rng);
    (prev, cur)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub method: SamplingMethod,
    pub n_points: usize,
    /// Wall time of sampling frame t.
    pub time_ms: f64,
    /// Peak heap growth while sampling frame t; zero unless the
    /// [`memtrack::TrackingAllocator`] is installed.
    pub peak_bytes: usize,
    /// IFMI at each of `thresholds`.
    pub ifmi: Vec<f64>,
}

/// Samples both frames with every method (one shared seed per method) and
/// reports cost and IFMI.
pub fn run(
    prev: &[Point],
    cur: &[Point],
    n: usize,
    n_cubes: usize,
    methods: &[SamplingMethod],
    seed: u64,
    thresholds: &[f64],
) -> Result<Vec<BenchRow>> {
    let ctx = DacvvContext::from_points(cur)?;
    methods
        .iter()
        .map(|&m| {
            let s = seed::derive(seed, &[tag::SAMPLE]);
            let start = Instant::now();
            let (a, peak) = memtrack::measure(|| sample(cur, n, n_cubes, m, s));
            let time_ms = start.elapsed().as_secs_f64() * 1e3;
            let a = a?;
            let b = sample(prev, n, n_cubes, m, s)?;
            Ok(BenchRow {
                method: m,
                n_points: cur.len(),
                time_ms,
                peak_bytes: peak,
                ifmi: ifmi_curve(&a, cur, &b, prev, &ctx, thresholds)?,
            })
        })
        .collect()
}
