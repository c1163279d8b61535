//! DaCVV point dissimilarity and IFMI inter-frame mapping intensity.

use rayon::prelude::*;

use super::SampledTile;
use crate::cloud::{dist2, norm, sub, Point, Vec3};
use crate::error::{Error, Result};

/// Normalisers taken from the reference tile (the frame-`t` tile).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DacvvContext {
    pub d_max: f64,
    pub c_max: f64,
}

impl DacvvContext {
    pub fn new(d_max: f64, c_max: f64) -> Result<Self> {
        if !(d_max > 0.0 && c_max > 0.0) || !d_max.is_finite() || !c_max.is_finite() {
            return Err(Error::invalid(format!(
                "degenerate DaCVV context: d_max = {d_max}, c_max = {c_max}"
            )));
        }
        Ok(Self { d_max, c_max })
    }

    /// Exact maximum coordinate and colour distances over `points`.
    pub fn from_points(points: &[Point]) -> Result<Self> {
        let pos: Vec<Vec3> = points.iter().map(|p| p.position).collect();
        let col: Vec<Vec3> = points.iter().map(|p| color_vec(p.color)).collect();
        Self::new(max_pair_distance(&pos), max_pair_distance(&col))
    }
}

fn color_vec(c: [u8; 3]) -> Vec3 {
    c.map(f64::from)
}

/// Diameter of a point set.
///
/// Points are visited by decreasing distance from the centroid; a pair `(i, j)`
/// can only beat the current best if `r_i + r_j` does, which prunes most
/// interior points.
pub fn max_pair_distance(points: &[Vec3]) -> f64 {
    if points.len() < 2 {
        return 0.0;
    }
    let n = points.len() as f64;
    let mut centroid = [0.0; 3];
    for p in points {
        for a in 0..3 {
            centroid[a] += p[a] / n;
        }
    }
    let mut by_radius: Vec<(f64, Vec3)> = points.iter().map(|&p| (norm(sub(p, centroid)), p)).collect();
    by_radius.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut best2 = 0.0f64;
    let r_max = by_radius[0].0;
    for i in 1..by_radius.len() {
        let (ri, pi) = by_radius[i];
        // later points pair with earlier ones at most r_i + r_max apart
        if ri + r_max <= best2.sqrt() * (1.0 - 1e-12) {
            break;
        }
        for &(rj, pj) in &by_radius[..i] {
            if ri + rj <= best2.sqrt() * (1.0 - 1e-12) {
                break;
            }
            best2 = best2.max(dist2(pi, pj));
        }
    }
    best2.sqrt()
}

/// `‖p_a − p_b‖ / d_max + ‖c_a − c_b‖ / c_max`.
pub fn dacvv(a: &Point, b: &Point, ctx: &DacvvContext) -> f64 {
    norm(sub(a.position, b.position)) / ctx.d_max
        + norm(sub(color_vec(a.color), color_vec(b.color))) / ctx.c_max
}

/// Smallest DaCVV from each current sample to any previous sample.
fn nearest_dacvv(current: &[Point], previous: &[Point], ctx: &DacvvContext) -> Vec<f64> {
    current
        .par_iter()
        .map(|a| {
            previous
                .iter()
                .map(|b| dacvv(a, b, ctx))
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

fn gather_pair(
    current: &SampledTile,
    current_src: &[Point],
    previous: &SampledTile,
    previous_src: &[Point],
) -> Result<(Vec<Point>, Vec<Point>)> {
    if current.tile_id != previous.tile_id {
        return Err(Error::invalid(format!(
            "IFMI needs corresponding tiles, got {} and {}",
            current.tile_id, previous.tile_id
        )));
    }
    if current.is_empty() {
        return Err(Error::invalid("IFMI of an empty sample"));
    }
    Ok((current.gather(current_src)?, previous.gather(previous_src)?))
}

/// Fraction of frame-`t` samples with some frame-`t−1` sample at DaCVV below
/// `threshold`.
pub fn ifmi(
    current: &SampledTile,
    current_src: &[Point],
    previous: &SampledTile,
    previous_src: &[Point],
    ctx: &DacvvContext,
    threshold: f64,
) -> Result<f64> {
    Ok(ifmi_curve(current, current_src, previous, previous_src, ctx, &[threshold])?[0])
}

/// [`ifmi`] at several thresholds, sharing one nearest-match pass.
pub fn ifmi_curve(
    current: &SampledTile,
    current_src: &[Point],
    previous: &SampledTile,
    previous_src: &[Point],
    ctx: &DacvvContext,
    thresholds: &[f64],
) -> Result<Vec<f64>> {
    if let Some(t) = thresholds.iter().find(|t| !(**t >= 0.0)) {
        return Err(Error::invalid(format!("threshold {t} must be >= 0")));
    }
    let (cur, prev) = gather_pair(current, current_src, previous, previous_src)?;
    let best = nearest_dacvv(&cur, &prev, ctx);
    Ok(thresholds
        .iter()
        .map(|&t| best.iter().filter(|&&d| d < t).count() as f64 / cur.len() as f64)
        .collect())
}
