//! Head-state prediction with a single-layer LSTM.
//!
//! Each history window is z-scored per dimension before it enters the
//! network (angles are unwrapped first so a window crossing ±180° stays
//! continuous), and the readout is mapped back with the same statistics.

mod io;
mod lstm;

pub use io::{read_trajectories, write_trajectories, Trajectories};
pub use lstm::{
    init_lstm, lstm_cell, predict_batch, predict_head_state, train_trajectory, window_loss, TrainReport,
    TrajectoryConfig, Window,
};

use crate::cloud::Vec3;
use crate::error::{Error, Result};

/// Wraps an angle in degrees to (−180, 180].
pub fn normalize_angle(deg: f64) -> f64 {
    let r = deg.rem_euclid(360.0);
    if r > 180.0 {
        r - 360.0
    } else {
        r
    }
}

/// Head position and Euler angles `(α, β, γ)` in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadState {
    pub position: Vec3,
    pub angles: [f64; 3],
}

impl HeadState {
    /// Angles are wrapped to (−180, 180].
    pub fn new(position: Vec3, angles: [f64; 3]) -> Self {
        Self {
            position,
            angles: angles.map(normalize_angle),
        }
    }

    pub fn to_array(&self) -> [f64; 6] {
        let (p, a) = (self.position, self.angles);
        [p[0], p[1], p[2], a[0], a[1], a[2]]
    }

    pub fn from_array(v: [f64; 6]) -> Self {
        Self::new([v[0], v[1], v[2]], [v[3], v[4], v[5]])
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    pub fn position_error(&self, other: &HeadState) -> f64 {
        crate::cloud::norm(crate::cloud::sub(self.position, other.position))
    }
}

const VAR_FLOOR: f64 = 1e-6;

/// Per-dimension z-score statistics of one history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalizer {
    pub mean: [f64; 6],
    pub std: [f64; 6],
}

impl Normalizer {
    /// Statistics of `rows` (already unwrapped); variances are floored at 1e-6.
    pub fn fit(rows: &[[f64; 6]]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::invalid("empty head-state history"));
        }
        let n = rows.len() as f64;
        let mut mean = [0.0; 6];
        let mut std = [0.0; 6];
        for d in 0..6 {
            mean[d] = rows.iter().map(|r| r[d]).sum::<f64>() / n;
            let var = rows.iter().map(|r| (r[d] - mean[d]).powi(2)).sum::<f64>() / n;
            std[d] = var.max(VAR_FLOOR).sqrt();
        }
        Ok(Self { mean, std })
    }

    pub fn apply(&self, row: &[f64; 6]) -> [f64; 6] {
        std::array::from_fn(|d| (row[d] - self.mean[d]) / self.std[d])
    }

    pub fn invert(&self, z: &[f64; 6]) -> [f64; 6] {
        std::array::from_fn(|d| z[d] * self.std[d] + self.mean[d])
    }
}

/// Rows of `states` with angles unwrapped along the sequence.
pub fn unwrap_history(states: &[HeadState]) -> Vec<[f64; 6]> {
    let mut out: Vec<[f64; 6]> = Vec::with_capacity(states.len());
    for s in states {
        let mut row = s.to_array();
        if let Some(prev) = out.last() {
            for d in 3..6 {
                row[d] = prev[d] + normalize_angle(row[d] - prev[d]);
            }
        }
        out.push(row);
    }
    out
}

/// `next` with angles shifted by whole turns to lie within 180° of `last`.
pub fn unwrap_next(last: &[f64; 6], next: &HeadState) -> [f64; 6] {
    let mut row = next.to_array();
    for d in 3..6 {
        row[d] = last[d] + normalize_angle(row[d] - last[d]);
    }
    row
}
