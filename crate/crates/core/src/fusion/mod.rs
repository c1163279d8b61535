//! Attention fusion, the classification head, the loss, and end-to-end
//! training.
//!
//! Per point, each branch gets a channelwise softmax mask computed from its
//! own features, `S = softmax(F·W)`, and the fused map is `S_a⊙a + S_b⊙b`.
//! The spatial and temporal maps are fused with `fuse.w1`/`fuse.w2` into
//! F_ST, then F_ST and the trajectory map F_L with `fuse.w3`/`fuse.w4` into
//! F_E. The head is `head.0` (d → 64, relu), `head.1` (64 → 32, relu) and
//! `head.2` (32 → 2) with a softmax; dropout sits after each hidden layer
//! in training.

mod pipeline;

pub use pipeline::{
    checkpoint, evaluate_split, predict_frames, prepare, train, EpochMetrics, FrameData, FramePrediction,
    PreparedData, TileItem, TrainOutcome,
};

use std::sync::Arc;

use rand::Rng;

use crate::autodiff::{Activation, Graph, ParamStore, Tensor, Var};
use crate::cloud::Point;
use crate::error::{Error, Result};
use crate::saliency::{decode, encode_pair, init_params, Branch, EncoderConfig, TileGeometry};
use crate::seed;
use crate::viewport::{init_lstm_feature_params, render_lstm_feature};

pub const HEAD_WIDTHS: [usize; 3] = [64, 32, 2];

/// Registers `fuse.w1..w4` (`[d, d]`, no bias) and the three head layers.
pub fn init_fusion_params(width: usize, rng: &mut impl Rng) -> ParamStore {
    let mut p = ParamStore::new();
    let limit = (3.0 / width as f64).sqrt();
    for i in 1..=4 {
        let w = (0..width * width).map(|_| rng.gen_range(-limit..=limit)).collect();
        p.insert(&format!("fuse.w{i}"), Tensor::new([width, width], w).expect("square fusion weight"));
    }
    let mut d_in = width;
    for (i, &d_out) in HEAD_WIDTHS.iter().enumerate() {
        p.add_dense(&format!("head.{i}"), d_in, d_out, rng);
        d_in = d_out;
    }
    p
}

/// Every trainable parameter of the viewport network (not the LSTM).
pub fn init_model(cfg: &EncoderConfig, seed: u64) -> Result<ParamStore> {
    let mut rng = seed::rng(seed::derive(seed, &[seed::tag::INIT]));
    let mut p = init_params(cfg, &mut rng)?;
    p.merge(init_lstm_feature_params(cfg.widths[0], &mut rng));
    p.merge(init_fusion_params(cfg.widths[0], &mut rng));
    Ok(p)
}

/// `softmax(a·Wa)⊙a + softmax(b·Wb)⊙b`, masks normalised per point over channels.
pub fn attention_fuse(g: &mut Graph, p: &ParamStore, a: Var, b: Var, wa: &str, wb: &str) -> Result<Var> {
    if g.shape(a) != g.shape(b) {
        return Err(Error::shape(format!(
            "cannot fuse {:?} with {:?}",
            g.shape(a),
            g.shape(b)
        )));
    }
    let sa = mask(g, p, a, wa)?;
    let sb = mask(g, p, b, wb)?;
    let ma = g.mul(sa, a)?;
    let mb = g.mul(sb, b)?;
    g.add(ma, mb)
}

/// `softmax(x·W)` along the channel axis.
pub fn mask(g: &mut Graph, p: &ParamStore, x: Var, w: &str) -> Result<Var> {
    let w = g.param(p, w)?;
    let s = g.matmul(x, w)?;
    let axis = g.shape(s).len() - 1;
    g.softmax(s, axis)
}

/// Dropout settings for a training-mode forward pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dropout {
    pub rate: f64,
    pub seed: u64,
}

/// Class probabilities `[N, 2]`. Dropout applies only when `dropout` is set.
pub fn classify(g: &mut Graph, p: &ParamStore, fused: Var, dropout: Option<Dropout>) -> Result<Var> {
    let mut rng = dropout.map(|d| seed::rng(d.seed));
    let mut x = fused;
    for i in 0..HEAD_WIDTHS.len() {
        let last = i + 1 == HEAD_WIDTHS.len();
        let act = if last { Activation::None } else { Activation::Relu };
        x = g.dense_named(p, &format!("head.{i}"), x, act)?;
        if let (false, Some(d), Some(rng)) = (last, dropout, rng.as_mut()) {
            x = g.dropout(x, d.rate, rng)?;
        }
    }
    let axis = g.shape(x).len() - 1;
    g.softmax(x, axis)
}

/// Argmax per row; an exact tie goes to class 0.
pub fn labels_from_probs(probs: &Tensor) -> Vec<u8> {
    (0..probs.rows())
        .map(|i| {
            let r = probs.row(i);
            u8::from(r[1] > r[0])
        })
        .collect()
}

/// `N / (2·n_c)` per class; a class that does not occur gets weight 1.
pub fn class_weights(labels: &[u8]) -> [f64; 2] {
    let n = labels.len() as f64;
    let pos = labels.iter().filter(|&&l| l == 1).count() as f64;
    let w = |count: f64| if count > 0.0 { n / (2.0 * count) } else { 1.0 };
    [w(n - pos), w(pos)]
}

/// Class-weighted cross-entropy, mean over points.
pub fn loss(g: &mut Graph, probs: Var, labels: &[u8], weights: [f64; 2]) -> Result<Var> {
    let labels: Vec<usize> = labels.iter().map(|&l| usize::from(l)).collect();
    g.weighted_nll(probs, Arc::new(labels), weights.to_vec())
}

/// Per-point classifier output.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub probs: Tensor,
    pub labels: Vec<u8>,
    /// Feature maps that fed the fused representation.
    pub branches: Vec<&'static str>,
}

/// Parameter-free inputs for one (t, t−1) tile pair.
#[derive(Debug, Clone)]
pub struct ItemInput {
    pub geom_t: TileGeometry,
    pub geom_prev: TileGeometry,
    /// Sampled points of frame `t`, in row order.
    pub points: Vec<Point>,
    /// Labels from predicted head states, rendered into F_L.
    pub fl_labels: Vec<u8>,
}

/// F_S, F_T, F_L → F_ST → F_E → class probabilities.
pub fn forward_item(g: &mut Graph, p: &ParamStore, item: &ItemInput, dropout: Option<Dropout>) -> Result<Var> {
    let enc = encode_pair(g, p, &item.geom_t, &item.geom_prev)?;
    let fs = decode(g, p, Branch::Spatial, &enc.spatial, &item.geom_t)?;
    let ft = decode(g, p, Branch::Temporal, &enc.temporal, &item.geom_t)?;
    let fst = attention_fuse(g, p, fs, ft, "fuse.w1", "fuse.w2")?;
    let fl = render_lstm_feature(g, p, &item.points, &item.fl_labels)?;
    let fe = attention_fuse(g, p, fst, fl, "fuse.w3", "fuse.w4")?;
    classify(g, p, fe, dropout)
}

/// Inference-mode prediction for one item.
pub fn predict_item(p: &ParamStore, item: &ItemInput) -> Result<Prediction> {
    let mut g = Graph::new();
    let probs = forward_item(&mut g, p, item, None)?;
    let probs = g.value(probs).clone();
    Ok(Prediction {
        labels: labels_from_probs(&probs),
        probs,
        branches: vec!["F_S", "F_T", "F_L"],
    })
}
