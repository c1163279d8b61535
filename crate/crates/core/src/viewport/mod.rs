//! Viewing frusta, field-of-view labels and multi-user ground truth.
//!
//! Orientation convention: intrinsic `R = Rz(γ)·Ry(β)·Rx(α)`, angles in
//! degrees, right-handed; the head looks along `R·(0,0,1)` with `R·(1,0,0)`
//! to its right and `R·(0,1,0)` up. A viewport is an angular frustum with a
//! closed boundary and a near plane but no far plane.

mod labels;

pub use labels::{read_labels, write_labels, FovLabels};

use rand::Rng;
use rayon::prelude::*;

use crate::autodiff::{Activation, Graph, ParamStore, Tensor, Var};
use crate::cloud::{dot, sub, Point, Vec3};
use crate::error::{Error, Result};
use crate::trajectory::HeadState;

/// Angular tolerance (degrees) that keeps points constructed exactly on the
/// boundary inside despite rounding.
const BOUNDARY_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FovParams {
    pub h_half_deg: f64,
    pub v_half_deg: f64,
    pub near: f64,
}

impl Default for FovParams {
    fn default() -> Self {
        Self {
            h_half_deg: 55.0,
            v_half_deg: 55.0,
            near: 0.05,
        }
    }
}

impl FovParams {
    pub fn new(h_half_deg: f64, v_half_deg: f64, near: f64) -> Result<Self> {
        let ok = |a: f64| a > 0.0 && a < 90.0;
        if !ok(h_half_deg) || !ok(v_half_deg) || !(near > 0.0 && near.is_finite()) {
            return Err(Error::invalid(format!(
                "field of view needs half-angles in (0, 90) and near > 0, got {h_half_deg}, {v_half_deg}, {near}"
            )));
        }
        Ok(Self {
            h_half_deg,
            v_half_deg,
            near,
        })
    }
}

/// `Rz(γ)·Ry(β)·Rx(α)` as rows.
pub fn rotation(angles_deg: [f64; 3]) -> [[f64; 3]; 3] {
    let [a, b, g] = angles_deg.map(f64::to_radians);
    let (sa, ca) = a.sin_cos();
    let (sb, cb) = b.sin_cos();
    let (sg, cg) = g.sin_cos();
    let rx = [[1.0, 0.0, 0.0], [0.0, ca, -sa], [0.0, sa, ca]];
    let ry = [[cb, 0.0, sb], [0.0, 1.0, 0.0], [-sb, 0.0, cb]];
    let rz = [[cg, -sg, 0.0], [sg, cg, 0.0], [0.0, 0.0, 1.0]];
    matmul3(&matmul3(&rz, &ry), &rx)
}

fn matmul3(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    std::array::from_fn(|i| std::array::from_fn(|j| (0..3).map(|k| a[i][k] * b[k][j]).sum()))
}

fn column(m: &[[f64; 3]; 3], j: usize) -> Vec3 {
    [m[0][j], m[1][j], m[2][j]]
}

/// Euler angles `(α, β, 0)` that point the forward axis along `dir`.
pub fn look_angles(dir: Vec3) -> [f64; 3] {
    let n = crate::cloud::norm(dir);
    let d = dir.map(|v| v / n);
    [(-d[1]).clamp(-1.0, 1.0).asin().to_degrees(), d[0].atan2(d[2]).to_degrees(), 0.0]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frustum {
    pub apex: Vec3,
    pub forward: Vec3,
    pub right: Vec3,
    pub up: Vec3,
    pub fov: FovParams,
}

impl Frustum {
    pub fn from_head(state: &HeadState, fov: FovParams) -> Self {
        let r = rotation(state.angles);
        Self {
            apex: state.position,
            forward: column(&r, 2),
            right: column(&r, 0),
            up: column(&r, 1),
            fov,
        }
    }

    pub fn contains(&self, p: Vec3) -> bool {
        let v = sub(p, self.apex);
        let f = dot(v, self.forward);
        if f < self.fov.near {
            return false;
        }
        let h = dot(v, self.right).atan2(f).to_degrees().abs();
        let u = dot(v, self.up).atan2(f).to_degrees().abs();
        h <= self.fov.h_half_deg + BOUNDARY_EPS && u <= self.fov.v_half_deg + BOUNDARY_EPS
    }
}

/// 1 for points inside the frustum.
pub fn classify_in_fov(points: &[Point], frustum: &Frustum) -> Vec<u8> {
    points.par_iter().map(|p| u8::from(frustum.contains(p.position))).collect()
}

/// Per point, how many of the given viewers see it.
pub fn view_counts(points: &[Point], states: &[HeadState], fov: FovParams) -> Vec<usize> {
    let frusta: Vec<Frustum> = states.iter().map(|s| Frustum::from_head(s, fov)).collect();
    points
        .par_iter()
        .map(|p| frusta.iter().filter(|f| f.contains(p.position)).count())
        .collect()
}

/// Label 1 iff at least `freq_threshold` viewers see the point.
pub fn build_ground_truth(points: &[Point], states: &[HeadState], fov: FovParams, freq_threshold: usize) -> Result<Vec<u8>> {
    if states.is_empty() {
        return Err(Error::invalid("ground truth needs at least one viewer"));
    }
    Ok(view_counts(points, states, fov)
        .into_iter()
        .map(|c| u8::from(c >= freq_threshold))
        .collect())
}

/// One frame's viewers for [`overlap_coverage`].
pub struct CoverageFrame<'a> {
    pub points: &'a [Point],
    pub states: &'a [HeadState],
}

/// For `samples` random (frame, viewer) draws, the fraction of that viewer's
/// visible points seen by at least `b` viewers, averaged per `b = 1..=users`.
/// Draws where the viewer sees nothing are skipped.
pub fn overlap_coverage(frames: &[CoverageFrame<'_>], fov: FovParams, samples: usize, rng: &mut impl Rng) -> Result<Vec<(usize, f64)>> {
    let users = frames.first().map(|f| f.states.len()).unwrap_or(0);
    if users < 4 || frames.iter().any(|f| f.states.len() != users) {
        return Err(Error::invalid("overlap coverage needs at least 4 viewers in every frame"));
    }
    let counts: Vec<Vec<usize>> = frames.iter().map(|f| view_counts(f.points, f.states, fov)).collect();
    let mut sums = vec![0.0; users];
    let mut used = 0usize;
    for _ in 0..samples {
        let fi = rng.gen_range(0..frames.len());
        let ui = rng.gen_range(0..users);
        let fr = Frustum::from_head(&frames[fi].states[ui], fov);
        let seen: Vec<usize> = frames[fi]
            .points
            .iter()
            .zip(&counts[fi])
            .filter(|(p, _)| fr.contains(p.position))
            .map(|(_, &c)| c)
            .collect();
        if seen.is_empty() {
            continue;
        }
        used += 1;
        for (b, s) in sums.iter_mut().enumerate() {
            *s += seen.iter().filter(|&&c| c > b).count() as f64 / seen.len() as f64;
        }
    }
    let used = used.max(1) as f64;
    Ok(sums.into_iter().enumerate().map(|(b, s)| (b + 1, s / used)).collect())
}

/// White for label 1, black otherwise, at the original positions.
pub fn render_label_colors(points: &[Point], labels: &[u8]) -> Result<Vec<Point>> {
    if points.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} labels for {} points",
            labels.len(),
            points.len()
        )));
    }
    Ok(points
        .iter()
        .zip(labels)
        .map(|(p, &l)| Point::new(p.position, if l == 1 { [255; 3] } else { [0; 3] }))
        .collect())
}

/// Registers the F_L embedding: `fl.init` (6 → width) and `fl.embed`.
pub fn init_lstm_feature_params(width: usize, rng: &mut impl Rng) -> ParamStore {
    let mut p = ParamStore::new();
    p.add_dense("fl.init", 6, width, rng);
    p.add_dense("fl.embed", width, width, rng);
    p
}

/// F_L: the label-coloured points embedded like the other branches' input.
pub fn render_lstm_feature(g: &mut Graph, p: &ParamStore, points: &[Point], labels: &[u8]) -> Result<Var> {
    let colored = render_label_colors(points, labels)?;
    let mut input = Vec::with_capacity(colored.len() * 6);
    for q in &colored {
        input.extend_from_slice(&q.position);
        input.extend(q.color.iter().map(|&c| f64::from(c) / 255.0));
    }
    let x = g.input(Tensor::new([colored.len(), 6], input)?);
    let f = crate::saliency::initial_features(g, p, "fl.init", x)?;
    g.dense_named(p, "fl.embed", f, Activation::LeakyRelu(0.2))
}
