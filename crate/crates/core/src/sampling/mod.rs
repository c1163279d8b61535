//! Per-tile point samplers and the inter-frame consistency metrics used to
//! compare them.

pub mod bench;
mod baseline;
mod metrics;
mod urs;

use std::fmt;
use std::str::FromStr;

pub use baseline::baseline_sample;
pub use metrics::{dacvv, ifmi, ifmi_curve, max_pair_distance, DacvvContext};
pub use urs::{cube_dims, urs_sample};

use crate::cloud::Point;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SamplingMethod {
    Urs,
    Fps,
    Rs,
    Idis,
    Gs,
    Vs,
}

impl SamplingMethod {
    pub const ALL: [SamplingMethod; 6] = [
        SamplingMethod::Urs,
        SamplingMethod::Fps,
        SamplingMethod::Rs,
        SamplingMethod::Idis,
        SamplingMethod::Gs,
        SamplingMethod::Vs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SamplingMethod::Urs => "URS",
            SamplingMethod::Fps => "FPS",
            SamplingMethod::Rs => "RS",
            SamplingMethod::Idis => "IDIS",
            SamplingMethod::Gs => "GS",
            SamplingMethod::Vs => "VS",
        }
    }
}

impl fmt::Display for SamplingMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SamplingMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SamplingMethod::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::invalid(format!("unknown sampling method `{s}`")))
    }
}

/// The `N` points sampled from one tile of one frame.
///
/// Samplers return indices local to the point slice they were given; use
/// [`SampledTile::remap`] to lift them to frame indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampledTile {
    pub tile_id: usize,
    pub frame_index: usize,
    pub point_indices: Vec<usize>,
    /// Cube centres for URS (one per neighbourhood); empty for other methods.
    pub centers: Vec<usize>,
}

impl SampledTile {
    pub fn len(&self) -> usize {
        self.point_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.point_indices.is_empty()
    }

    /// Maps local indices through `tile_indices` (the tile's frame indices).
    pub fn remap(mut self, tile_id: usize, frame_index: usize, tile_indices: &[usize]) -> Self {
        for i in self.point_indices.iter_mut().chain(self.centers.iter_mut()) {
            *i = tile_indices[*i];
        }
        self.tile_id = tile_id;
        self.frame_index = frame_index;
        self
    }

    pub fn gather(&self, source: &[Point]) -> Result<Vec<Point>> {
        self.point_indices
            .iter()
            .map(|&i| {
                source.get(i).copied().ok_or_else(|| {
                    Error::invalid(format!("sample index {i} out of range ({})", source.len()))
                })
            })
            .collect()
    }
}

/// Dispatches to [`urs_sample`] or [`baseline_sample`].
pub fn sample(points: &[Point], n: usize, n_cubes: usize, method: SamplingMethod, seed: u64) -> Result<SampledTile> {
    match method {
        SamplingMethod::Urs => urs_sample(points, n, n_cubes, seed),
        m => baseline_sample(points, n, m, seed),
    }
}

fn check_count(have: usize, need: usize) -> Result<()> {
    if need == 0 {
        return Err(Error::invalid("sample size must be >= 1"));
    }
    if have < need {
        return Err(Error::InsufficientPoints { have, need });
    }
    Ok(())
}
