use rand::seq::index::sample;
use rand::Rng;

use super::{unwrap_history, unwrap_next, HeadState, Normalizer};
use crate::autodiff::{Activation, Adam, Graph, ParamStore, Tensor, Var};
use crate::error::{Error, Result};
use crate::seed;

const GATES: [(&str, Activation); 4] = [
    ("f", Activation::Sigmoid),
    ("i", Activation::Sigmoid),
    ("o", Activation::Sigmoid),
    ("c", Activation::Tanh),
];

/// Sizes and optimiser settings for trajectory training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryConfig {
    pub hidden: usize,
    pub window: usize,
    pub steps: usize,
    pub lr: f64,
    pub batch: usize,
    pub seed: u64,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            window: 16,
            steps: 2000,
            lr: 1e-2,
            batch: 16,
            seed: 0,
        }
    }
}

/// `lstm.{f,i,o,c}.{w,b}` over `[h, L]` and the `lstm.out.*` readout.
/// The forget bias starts at 1.
pub fn init_lstm(hidden: usize, rng: &mut impl Rng) -> ParamStore {
    let mut p = ParamStore::new();
    for (g, _) in GATES {
        p.add_dense(&format!("lstm.{g}"), hidden + 6, hidden, rng);
    }
    p.insert("lstm.f.b", Tensor::full([hidden], 1.0));
    p.add_dense("lstm.out", hidden, 6, rng);
    p
}

fn hidden_width(p: &ParamStore) -> Result<usize> {
    let w = p
        .get("lstm.f.w")
        .ok_or_else(|| Error::invalid("parameters lack `lstm.f.w`"))?;
    Ok(w.shape()[1])
}

/// One step over a batch: `h, c: [B, H]`, `x: [B, 6]`.
pub fn lstm_cell(g: &mut Graph, p: &ParamStore, h: Var, c: Var, x: Var) -> Result<(Var, Var)> {
    if g.shape(h) != g.shape(c) || g.shape(x)[0] != g.shape(h)[0] || g.value(x).cols() != 6 {
        return Err(Error::shape(format!(
            "cell state {:?}/{:?} with input {:?}",
            g.shape(h),
            g.shape(c),
            g.shape(x)
        )));
    }
    let hx = g.concat(&[h, x])?;
    let mut out = Vec::with_capacity(4);
    for (name, act) in GATES {
        out.push(g.dense_named(p, &format!("lstm.{name}"), hx, act)?);
    }
    let (f, i, o, cand) = (out[0], out[1], out[2], out[3]);
    let keep = g.mul(f, c)?;
    let write = g.mul(i, cand)?;
    let c_next = g.add(keep, write)?;
    let squashed = g.map(c_next, Activation::Tanh);
    let h_next = g.mul(o, squashed)?;
    Ok((h_next, c_next))
}

/// A normalised history and, when known, its normalised successor.
#[derive(Debug, Clone)]
pub struct Window {
    pub norm: Normalizer,
    pub inputs: Vec<[f64; 6]>,
    pub target: Option<[f64; 6]>,
}

impl Window {
    pub fn new(history: &[HeadState], next: Option<&HeadState>) -> Result<Self> {
        let rows = unwrap_history(history);
        let norm = Normalizer::fit(&rows)?;
        let target = next.map(|n| norm.apply(&unwrap_next(rows.last().unwrap(), n)));
        Ok(Self {
            inputs: rows.iter().map(|r| norm.apply(r)).collect(),
            norm,
            target,
        })
    }

    fn denormalize(&self, z: &[f64; 6]) -> HeadState {
        HeadState::from_array(self.norm.invert(z))
    }
}

/// Runs the cell over equal-length windows and returns the readout `[B, 6]`.
fn forward(g: &mut Graph, p: &ParamStore, windows: &[&Window]) -> Result<Var> {
    let hidden = hidden_width(p)?;
    let b = windows.len();
    let len = windows[0].inputs.len();
    if windows.iter().any(|w| w.inputs.len() != len) {
        return Err(Error::invalid("batched windows differ in length"));
    }
    let mut h = g.input(Tensor::zeros([b, hidden]));
    let mut c = g.input(Tensor::zeros([b, hidden]));
    for t in 0..len {
        let x: Vec<f64> = windows.iter().flat_map(|w| w.inputs[t]).collect();
        let x = g.input(Tensor::new([b, 6], x)?);
        (h, c) = lstm_cell(g, p, h, c, x)?;
    }
    g.dense_named(p, "lstm.out", h, Activation::None)
}

/// Mean squared error between the readout and the normalised targets.
pub fn window_loss(g: &mut Graph, p: &ParamStore, windows: &[&Window]) -> Result<Var> {
    if windows.is_empty() {
        return Err(Error::invalid("no training windows"));
    }
    let pred = forward(g, p, windows)?;
    let mut target = Vec::with_capacity(windows.len() * 6);
    for w in windows {
        target.extend(w.target.ok_or_else(|| Error::invalid("window without a target"))?);
    }
    let t = g.input(Tensor::new([windows.len(), 6], target)?);
    let d = g.sub(pred, t)?;
    let sq = g.mul(d, d)?;
    Ok(g.mean_all(sq))
}

/// Next state after each history; histories must share one length.
pub fn predict_batch(p: &ParamStore, histories: &[&[HeadState]]) -> Result<Vec<HeadState>> {
    if histories.is_empty() {
        return Ok(Vec::new());
    }
    let windows = histories
        .iter()
        .map(|h| Window::new(h, None))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&Window> = windows.iter().collect();
    let mut g = Graph::new();
    let out = forward(&mut g, p, &refs)?;
    let out = g.value(out);
    Ok(windows
        .iter()
        .enumerate()
        .map(|(i, w)| w.denormalize(&std::array::from_fn(|d| out.row(i)[d])))
        .collect())
}

pub fn predict_head_state(p: &ParamStore, history: &[HeadState]) -> Result<HeadState> {
    Ok(predict_batch(p, &[history])?[0])
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub initial_loss: f64,
    pub final_loss: f64,
    pub windows: usize,
}

fn full_loss(p: &ParamStore, windows: &[Window]) -> Result<f64> {
    let refs: Vec<&Window> = windows.iter().collect();
    let mut g = Graph::new();
    let l = window_loss(&mut g, p, &refs)?;
    g.value(l).item()
}

/// Cosine decay from `base` to `base / 100` over `total` steps.
pub(crate) fn cosine_lr(base: f64, step: usize, total: usize) -> f64 {
    let t = step as f64 / total.max(1) as f64;
    let floor = base / 100.0;
    floor + (base - floor) * 0.5 * (1.0 + (std::f64::consts::PI * t).cos())
}

/// Fits the LSTM on every `window`-long slice of `sequences` with its
/// successor as the target.
pub fn train_trajectory(sequences: &[Vec<HeadState>], cfg: &TrajectoryConfig) -> Result<(ParamStore, TrainReport)> {
    if cfg.window == 0 || cfg.hidden == 0 || cfg.batch == 0 {
        return Err(Error::invalid("window, hidden width and batch must be positive"));
    }
    let mut windows = Vec::new();
    for seq in sequences {
        if seq.len() <= cfg.window {
            return Err(Error::invalid(format!(
                "sequence of {} states is too short for window {}",
                seq.len(),
                cfg.window
            )));
        }
        for s in 0..seq.len() - cfg.window {
            windows.push(Window::new(&seq[s..s + cfg.window], Some(&seq[s + cfg.window]))?);
        }
    }
    if windows.is_empty() {
        return Err(Error::invalid("no training sequences"));
    }
    let mut params = init_lstm(cfg.hidden, &mut seed::rng(seed::derive(cfg.seed, &[seed::tag::INIT])));
    let initial_loss = full_loss(&params, &windows)?;
    let mut opt = Adam::new(cfg.lr);
    let mut rng = seed::rng(seed::derive(cfg.seed, &[seed::tag::BATCH]));
    let batch = cfg.batch.min(windows.len());
    for step in 0..cfg.steps {
        opt.lr = cosine_lr(cfg.lr, step, cfg.steps);
        let picked: Vec<&Window> = if batch == windows.len() {
            windows.iter().collect()
        } else {
            sample(&mut rng, windows.len(), batch).iter().map(|i| &windows[i]).collect()
        };
        let mut g = Graph::new();
        let l = window_loss(&mut g, &params, &picked)?;
        let grads = g.backward(l)?;
        opt.step(&mut params, &grads);
    }
    let final_loss = full_loss(&params, &windows)?;
    Ok((
        params,
        TrainReport {
            initial_loss,
            final_loss,
            windows: windows.len(),
        },
    ))
}
