use std::sync::Arc;

use rand::Rng;

use super::geometry::{LevelGeometry, TileGeometry, DESCRIPTOR_WIDTH};
use super::EncoderConfig;
use crate::autodiff::{Activation, Graph, ParamStore, Tensor, Var};
use crate::error::{Error, Result};

const LEAKY: Activation = Activation::LeakyRelu(0.2);

/// Which decoder a feature stack goes through.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Spatial,
    Temporal,
}

impl Branch {
    fn name(self) -> &'static str {
        match self {
            Branch::Spatial => "spatial",
            Branch::Temporal => "temporal",
        }
    }
}

fn add_attention(store: &mut ParamStore, name: &str, d: usize, rng: &mut impl Rng) {
    let limit = (3.0 / d as f64).sqrt();
    let w = (0..d * d).map(|_| rng.gen_range(-limit..=limit)).collect();
    store.insert(name, Tensor::new([d, d], w).expect("square attention weight"));
}

/// Registers every encoder, TC and decoder parameter.
pub fn init_params(cfg: &EncoderConfig, rng: &mut impl Rng) -> Result<ParamStore> {
    cfg.validate()?;
    let mut p = ParamStore::new();
    p.add_dense("init", 6, cfg.widths[0], rng);
    for c in 1..=cfg.levels() {
        let (d_in, d_out) = (cfg.widths[c - 1], cfg.widths[c]);
        let h = d_out / 2;
        p.add_dense(&format!("ldc.{c}.r1.nb"), DESCRIPTOR_WIDTH, h, rng);
        add_attention(&mut p, &format!("ldc.{c}.r1.att"), h + d_in, rng);
        p.add_dense(&format!("ldc.{c}.r1.out"), h + d_in, h, rng);
        p.add_dense(&format!("ldc.{c}.r2.nb"), DESCRIPTOR_WIDTH, h, rng);
        add_attention(&mut p, &format!("ldc.{c}.r2.att"), 2 * h, rng);
        p.add_dense(&format!("ldc.{c}.r2.out"), 2 * h, d_out, rng);
        p.add_dense(&format!("ldc.{c}.sc"), d_in, d_out, rng);

        p.add_dense(&format!("tc.{c}.0"), 2 * d_out, d_out, rng);
        p.add_dense(&format!("tc.{c}.1"), d_out, 1, rng);

        for b in [Branch::Spatial, Branch::Temporal] {
            p.add_dense(&format!("dec.{c}.{}", b.name()), d_out + d_in, d_in, rng);
        }
    }
    Ok(p)
}

/// `FC(p ⊕ a)` for the `[N, 6]` position/colour input.
pub fn initial_features(g: &mut Graph, p: &ParamStore, prefix: &str, input: Var) -> Result<Var> {
    g.dense_named(p, prefix, input, Activation::None)
}

/// Enhanced neighbour features `[n, K, h + d]`: the encoded descriptor of
/// each neighbour concatenated with that neighbour's input feature.
pub fn neighborhood_encode(
    g: &mut Graph,
    p: &ParamStore,
    prefix: &str,
    descriptors: Var,
    features: Var,
    neighbors: &Arc<Vec<usize>>,
) -> Result<Var> {
    let ds = g.shape(descriptors).to_vec();
    if ds.len() != 3 || ds[2] != DESCRIPTOR_WIDTH {
        return Err(Error::shape(format!("descriptors {ds:?}, expected [n, K, {DESCRIPTOR_WIDTH}]")));
    }
    let (n, k) = (ds[0], ds[1]);
    if g.shape(features)[0] != n || neighbors.len() != n * k {
        return Err(Error::shape(format!(
            "{} features and {} neighbour slots for descriptors {ds:?}",
            g.shape(features)[0],
            neighbors.len()
        )));
    }
    let encoded = g.dense_named(p, prefix, descriptors, Activation::Relu)?;
    let d = g.shape(features)[1];
    let gathered = g.gather_rows(features, neighbors.clone())?;
    let gathered = g.reshape(gathered, &[n, k, d])?;
    g.concat(&[encoded, gathered])
}

/// `Σ_k f^k ⊙ softmax_k(f^k · W)` over `[n, K, D]`, giving `[n, D]`.
pub fn attention_pool(g: &mut Graph, p: &ParamStore, weight: &str, enhanced: Var) -> Result<Var> {
    let w = g.param(p, weight)?;
    let scores = g.matmul(enhanced, w)?;
    let att = g.softmax(scores, 1)?;
    let weighted = g.mul(enhanced, att)?;
    g.sum_axis(weighted, 1)
}

/// Two neighbourhood-encode/attention rounds plus a dense shortcut, summed
/// and passed through a leaky ReLU. Returns `[n_in, d_out]`.
pub fn ldc_forward(g: &mut Graph, p: &ParamStore, level: usize, features: Var, geom: &LevelGeometry) -> Result<Var> {
    let pre = format!("ldc.{level}");
    let desc = g.input(geom.descriptors.clone());
    let e1 = neighborhood_encode(g, p, &format!("{pre}.r1.nb"), desc, features, &geom.neighbors)?;
    let a1 = attention_pool(g, p, &format!("{pre}.r1.att"), e1)?;
    let mid = g.dense_named(p, &format!("{pre}.r1.out"), a1, LEAKY)?;
    let e2 = neighborhood_encode(g, p, &format!("{pre}.r2.nb"), desc, mid, &geom.neighbors)?;
    let a2 = attention_pool(g, p, &format!("{pre}.r2.att"), e2)?;
    let main = g.dense_named(p, &format!("{pre}.r2.out"), a2, Activation::None)?;
    let short = g.dense_named(p, &format!("{pre}.sc"), features, Activation::None)?;
    let sum = g.add(main, short)?;
    Ok(g.map(sum, LEAKY))
}

/// Temporal correlation at `level`: returns `(O_s · tc_t, O_s)` where
/// `O_s = G(γ(maxpool(tc_t) ⊕ maxpool(tc_prev)))`.
pub fn tc_forward(g: &mut Graph, p: &ParamStore, level: usize, tc_t: Var, tc_prev: Var) -> Result<(Var, Var)> {
    let (wt, wp) = (g.value(tc_t).cols(), g.value(tc_prev).cols());
    if wt != wp {
        return Err(Error::shape(format!(
            "temporal inputs {:?} and {:?} differ in width",
            g.shape(tc_t),
            g.shape(tc_prev)
        )));
    }
    let q_t = g.max_pool_rows(tc_t)?;
    let q_prev = g.max_pool_rows(tc_prev)?;
    let q = g.concat(&[q_t, q_prev])?;
    let q = g.reshape(q, &[1, 2 * wt])?;
    let hidden = g.dense_named(p, &format!("tc.{level}.0"), q, Activation::Relu)?;
    let s_sim = g.dense_named(p, &format!("tc.{level}.1"), hidden, Activation::None)?;
    let o_s = g.map(s_sim, Activation::SaliencyGate);
    let c_t = g.mul_scalar(tc_t, o_s)?;
    Ok((c_t, o_s))
}

/// Spatial encoder stack: level 0 is the initial embedding, level `c` is the
/// LDC output of level `c − 1` restricted to the randomly kept points.
pub fn encode_frame(g: &mut Graph, p: &ParamStore, geom: &TileGeometry) -> Result<Vec<Var>> {
    let input = g.input(geom.input.clone());
    let mut stack = vec![initial_features(g, p, "init", input)?];
    for (i, lvl) in geom.levels.iter().enumerate() {
        let x = ldc_forward(g, p, i + 1, *stack.last().unwrap(), lvl)?;
        stack.push(g.gather_rows(x, lvl.kept.clone())?);
    }
    Ok(stack)
}

/// Feature stacks for a (t, t−1) tile pair.
#[derive(Debug, Clone)]
pub struct PairEncoding {
    pub spatial: Vec<Var>,
    pub temporal: Vec<Var>,
    /// Per-level `O_s`, one-element tensors.
    pub intensities: Vec<Var>,
}

/// Runs the spatial encoder on both frames and the temporal branch on frame
/// `t`. The temporal branch shares the LDC weights and frame `t`'s sampling;
/// at level `c` it consumes the previous TC output, and the comparison input
/// is frame `t−1`'s level-`c` spatial encoding.
pub fn encode_pair(g: &mut Graph, p: &ParamStore, geom_t: &TileGeometry, geom_prev: &TileGeometry) -> Result<PairEncoding> {
    if geom_t.levels.len() != geom_prev.levels.len() {
        return Err(Error::invalid("tile pair encoded with different level counts"));
    }
    let spatial = encode_frame(g, p, geom_t)?;
    let prev = encode_frame(g, p, geom_prev)?;
    let mut temporal = vec![spatial[0]];
    let mut intensities = Vec::new();
    for (i, lvl) in geom_t.levels.iter().enumerate() {
        let c = i + 1;
        let tc_t = if c == 1 {
            spatial[1]
        } else {
            let x = ldc_forward(g, p, c, temporal[c - 1], lvl)?;
            g.gather_rows(x, lvl.kept.clone())?
        };
        let (out, o_s) = tc_forward(g, p, c, tc_t, prev[c])?;
        temporal.push(out);
        intensities.push(o_s);
    }
    Ok(PairEncoding {
        spatial,
        temporal,
        intensities,
    })
}

/// Mirrors the encoder: at every level each finer point takes its nearest
/// coarse feature, appends its skip feature and goes through a shared MLP.
/// Returns `[N, widths[0]]`.
pub fn decode(g: &mut Graph, p: &ParamStore, branch: Branch, stack: &[Var], geom: &TileGeometry) -> Result<Var> {
    if stack.len() != geom.levels.len() + 1 {
        return Err(Error::invalid(format!(
            "decoder needs {} feature levels, got {}",
            geom.levels.len() + 1,
            stack.len()
        )));
    }
    let mut z = *stack.last().unwrap();
    for c in (1..=geom.levels.len()).rev() {
        let up = g.gather_rows(z, geom.levels[c - 1].upsample.clone())?;
        let cat = g.concat(&[up, stack[c - 1]])?;
        z = g.dense_named(p, &format!("dec.{c}.{}", branch.name()), cat, LEAKY)?;
    }
    Ok(z)
}
