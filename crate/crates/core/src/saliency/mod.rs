//! Spatial and temporal saliency branches.
//!
//! The spatial branch encodes a sampled tile with a cascade of local
//! dilated-context (LDC) blocks, each followed by random sampling, and
//! decodes back to full resolution through nearest-neighbour upsampling and
//! skip links. The temporal branch reuses the LDC weights, and at every level
//! scales its features by a similarity-driven intensity computed against
//! the previous frame (the TC layer).
//!
//! Parameter names: `init.*`, `ldc.<c>.*`, `tc.<c>.*`, `dec.<c>.spatial.*`,
//! `dec.<c>.temporal.*`, with levels `c` counted from 1.

mod geometry;
mod layers;

pub use geometry::{neighbor_descriptor, rs_downsample, LevelGeometry, TileGeometry, DESCRIPTOR_WIDTH};
pub use layers::{
    attention_pool, decode, encode_frame, encode_pair, initial_features, init_params, ldc_forward,
    neighborhood_encode, tc_forward, Branch, PairEncoding,
};

use crate::error::{Error, Result};

/// Encoder shape: feature widths per level (level 0 is the initial
/// embedding), the random-sampling divisor applied after each LDC block, and
/// the neighbour count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncoderConfig {
    pub widths: Vec<usize>,
    pub divisors: Vec<usize>,
    pub k: usize,
}

impl EncoderConfig {
    pub fn paper() -> Self {
        Self {
            widths: vec![8, 32, 128, 256, 512, 1024],
            divisors: vec![4, 4, 4, 4, 2],
            k: 16,
        }
    }

    pub fn toy() -> Self {
        Self {
            widths: vec![8, 16, 32, 64, 128, 256],
            ..Self::paper()
        }
    }

    pub fn levels(&self) -> usize {
        self.divisors.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.len() != self.divisors.len() + 1 || self.divisors.is_empty() {
            return Err(Error::invalid(format!(
                "{} widths need {} sampling divisors, got {}",
                self.widths.len(),
                self.widths.len().saturating_sub(1),
                self.divisors.len()
            )));
        }
        if self.widths.iter().any(|&w| w < 2 || w % 2 != 0) {
            return Err(Error::invalid(format!("encoder widths must be even and >= 2: {:?}", self.widths)));
        }
        if self.divisors.contains(&0) || self.k == 0 {
            return Err(Error::invalid("sampling divisors and K must be positive"));
        }
        Ok(())
    }

    /// Points at every level for an input of `n` points.
    pub fn point_counts(&self, n: usize) -> Result<Vec<usize>> {
        self.validate()?;
        let mut counts = vec![n];
        for &d in &self.divisors {
            let next = counts.last().unwrap() / d;
            if next == 0 {
                return Err(Error::invalid(format!(
                    "{n} points cannot be sampled down {} levels with divisors {:?}",
                    self.levels(),
                    self.divisors
                )));
            }
            counts.push(next);
        }
        Ok(counts)
    }
}
