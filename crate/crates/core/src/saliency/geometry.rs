//! Per-tile geometry that does not depend on learned parameters: neighbour
//! lists, raw neighbourhood descriptors, random-sampling subsets and the
//! nearest-kept maps used for upsampling.

use std::sync::Arc;

use rand::seq::index::sample;

use super::EncoderConfig;
use crate::autodiff::Tensor;
use crate::cloud::{norm, sub, KnnIndex, Point, Vec3};
use crate::error::{Error, Result};
use crate::seed;

/// Width of the raw per-neighbour descriptor.
pub const DESCRIPTOR_WIDTH: usize = 14;

/// `p_i ⊕ p_k ⊕ (p_i − p_k) ⊕ ‖p_i − p_k‖ ⊕ d_i ⊕ d_k ⊕ (d_i − d_k) ⊕ |d_i − d_k|`.
pub fn neighbor_descriptor(p_i: Vec3, p_k: Vec3, d_i: f64, d_k: f64) -> [f64; DESCRIPTOR_WIDTH] {
    let diff = sub(p_i, p_k);
    [
        p_i[0],
        p_i[1],
        p_i[2],
        p_k[0],
        p_k[1],
        p_k[2],
        diff[0],
        diff[1],
        diff[2],
        norm(diff),
        d_i,
        d_k,
        d_i - d_k,
        (d_i - d_k).abs(),
    ]
}

/// Keeps `keep` of `count` indices uniformly at random, returned ascending.
pub fn rs_downsample(count: usize, keep: usize, seed: u64) -> Result<Vec<usize>> {
    if keep == 0 || keep > count {
        return Err(Error::invalid(format!("cannot keep {keep} of {count} points")));
    }
    let mut kept = sample(&mut seed::rng(seed), count, keep).into_vec();
    kept.sort_unstable();
    Ok(kept)
}

/// One encoder level: the LDC block runs on `n_in` points, then random
/// sampling keeps `kept`.
#[derive(Debug, Clone)]
pub struct LevelGeometry {
    pub n_in: usize,
    pub k: usize,
    /// `n_in × k` neighbour indices, nearest first (self included).
    pub neighbors: Arc<Vec<usize>>,
    /// `[n_in, k, 14]`.
    pub descriptors: Tensor,
    /// Indices into the `n_in` input points, ascending.
    pub kept: Arc<Vec<usize>>,
    /// For every input point, the position in `kept` of its nearest kept point.
    pub upsample: Arc<Vec<usize>>,
    pub positions: Vec<Vec3>,
    pub grays: Vec<f64>,
}

impl LevelGeometry {
    /// `grays` are expected in [0, 1].
    pub fn build(positions: &[Vec3], grays: &[f64], k: usize, keep: usize, seed: u64) -> Result<Self> {
        let n = positions.len();
        if grays.len() != n {
            return Err(Error::invalid("positions and grays differ in length"));
        }
        if k == 0 || k > n {
            return Err(Error::invalid(format!("K = {k} neighbours requested from {n} points")));
        }
        let index = KnnIndex::new(positions);
        let lists = index.knn_many(positions, k)?;
        let mut neighbors = Vec::with_capacity(n * k);
        let mut desc = Vec::with_capacity(n * k * DESCRIPTOR_WIDTH);
        for (i, list) in lists.iter().enumerate() {
            for &j in list {
                neighbors.push(j);
                desc.extend_from_slice(&neighbor_descriptor(positions[i], positions[j], grays[i], grays[j]));
            }
        }
        let kept = rs_downsample(n, keep, seed)?;
        let kept_pos: Vec<Vec3> = kept.iter().map(|&i| positions[i]).collect();
        let kept_index = KnnIndex::new(&kept_pos);
        let upsample = kept_index.knn_many(positions, 1)?.into_iter().map(|v| v[0]).collect();
        Ok(Self {
            n_in: n,
            k,
            neighbors: Arc::new(neighbors),
            descriptors: Tensor::new([n, k, DESCRIPTOR_WIDTH], desc)?,
            grays: kept.iter().map(|&i| grays[i]).collect(),
            positions: kept_pos,
            kept: Arc::new(kept),
            upsample: Arc::new(upsample),
        })
    }

    pub fn n_out(&self) -> usize {
        self.kept.len()
    }
}

/// Parameter-free inputs for encoding one sampled tile.
#[derive(Debug, Clone)]
pub struct TileGeometry {
    /// `[N, 6]`: position and colour scaled to [0, 1].
    pub input: Tensor,
    pub positions: Vec<Vec3>,
    pub levels: Vec<LevelGeometry>,
}

impl TileGeometry {
    /// Builds the cascade for `points`; `seed` drives the per-level random
    /// sampling. Neighbour counts are clamped to the points available at
    /// each level.
    pub fn build(points: &[Point], cfg: &EncoderConfig, seed: u64) -> Result<Self> {
        let counts = cfg.point_counts(points.len())?;
        let mut positions: Vec<Vec3> = points.iter().map(|p| p.position).collect();
        let mut grays: Vec<f64> = points.iter().map(|p| p.gray() / 255.0).collect();
        let mut input = Vec::with_capacity(points.len() * 6);
        for p in points {
            input.extend_from_slice(&p.position);
            input.extend(p.color.iter().map(|&c| f64::from(c) / 255.0));
        }
        let input = Tensor::new([points.len(), 6], input)?;
        let level0 = positions.clone();
        let mut levels = Vec::with_capacity(cfg.levels());
        for c in 1..=cfg.levels() {
            let k = cfg.k.min(positions.len());
            let lvl = LevelGeometry::build(
                &positions,
                &grays,
                k,
                counts[c],
                seed::derive(seed, &[seed::tag::RS_LEVEL, c as u64]),
            )?;
            positions = lvl.positions.clone();
            grays = lvl.grays.clone();
            levels.push(lvl);
        }
        Ok(Self {
            input,
            positions: level0,
            levels,
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}
