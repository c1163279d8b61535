use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::{class_weights, forward_item, init_model, loss, predict_item, Dropout, ItemInput};
use crate::autodiff::{accumulate_grads, Adam, GradMap, Graph, ParamStore};
use crate::cloud::{tile_frame, KnnIndex, Point, PointCloudFrame, SequenceManifest};
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalReport, FrameEval};
use crate::saliency::TileGeometry;
use crate::sampling::urs_sample;
use crate::seed::{self, tag};
use crate::trajectory::{predict_batch, train_trajectory, HeadState, TrainReport, Trajectories};
use crate::viewport::build_ground_truth;

/// One sampled tile pair with its labels.
#[derive(Debug, Clone)]
pub struct TileItem {
    pub frame_index: usize,
    pub tile: usize,
    /// Frame-`t` point indices of the sampled rows.
    pub sample: Vec<usize>,
    pub input: ItemInput,
    pub gt: Vec<u8>,
}

/// Everything needed to train on or evaluate one frame.
#[derive(Debug, Clone)]
pub struct FrameData {
    pub frame_index: usize,
    pub points: Vec<Point>,
    pub tiles: Vec<Vec<usize>>,
    pub point_tiles: Vec<usize>,
    /// Ground truth from the recorded head states.
    pub gt: Vec<u8>,
    /// The same rule applied to LSTM-predicted head states.
    pub fl: Vec<u8>,
    /// `None` where either frame of the pair has fewer than N points in the tile.
    pub items: Vec<Option<TileItem>>,
}

impl FrameData {
    pub fn fallback_tiles(&self) -> usize {
        self.items.iter().filter(|i| i.is_none()).count()
    }
}

#[derive(Debug, Clone)]
pub struct PreparedData {
    pub train: Vec<FrameData>,
    pub test: Vec<FrameData>,
    pub lstm: ParamStore,
    pub lstm_report: Option<TrainReport>,
    pub tile_count: usize,
}

/// Loads a sequence, fits (or reuses) the trajectory model, and builds the
/// train/test items. The first frame only serves as `t − 1` context; the
/// next `train_frames` frames train and the following `test_frames` test.
pub fn prepare(manifest: &SequenceManifest, cfg: &PipelineConfig, lstm: Option<ParamStore>) -> Result<PreparedData> {
    cfg.validate()?;
    let traj_path = manifest
        .trajectories
        .as_ref()
        .ok_or_else(|| Error::invalid("manifest lacks `trajectories`"))?;
    let traj = Trajectories::load(traj_path)?;
    let frames = manifest.load_frames()?;
    let need = 1 + cfg.train_frames + cfg.test_frames;
    if frames.len() < need {
        return Err(Error::invalid(format!(
            "sequence has {} frames, the split needs {need}",
            frames.len()
        )));
    }
    let test_start = frames[1 + cfg.train_frames].frame_index;

    let (lstm, lstm_report) = match lstm {
        Some(p) => (p, None),
        None => {
            let seqs: Vec<Vec<HeadState>> = traj
                .users
                .values()
                .map(|m| m.range(..test_start).map(|(_, s)| *s).collect())
                .collect();
            let (p, r) = train_trajectory(&seqs, &cfg.trajectory_config())
                .map_err(|e| e.context("training the trajectory model"))?;
            (p, Some(r))
        }
    };

    let build = |range: std::ops::Range<usize>| -> Result<Vec<FrameData>> {
        range
            .map(|i| prepare_frame(&frames[i - 1], &frames[i], &traj, &lstm, manifest, cfg))
            .collect()
    };
    let train = build(1..1 + cfg.train_frames)?;
    let test = build(1 + cfg.train_frames..need)?;
    Ok(PreparedData {
        train,
        test,
        lstm,
        lstm_report,
        tile_count: cfg.tiles,
    })
}

fn predicted_states(traj: &Trajectories, lstm: &ParamStore, frame: usize, window: usize) -> Result<Vec<HeadState>> {
    if frame < window {
        return Err(Error::invalid(format!(
            "frame {frame} has fewer than {window} frames of head-state history"
        )));
    }
    let histories = traj
        .users
        .keys()
        .map(|&u| traj.history(u, frame - window, frame))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&[HeadState]> = histories.iter().map(Vec::as_slice).collect();
    predict_batch(lstm, &refs)
}

fn prepare_frame(
    prev: &PointCloudFrame,
    cur: &PointCloudFrame,
    traj: &Trajectories,
    lstm: &ParamStore,
    manifest: &SequenceManifest,
    cfg: &PipelineConfig,
) -> Result<FrameData> {
    let t = cur.frame_index;
    let ctx = |e: Error| e.context(format!("frame {t}"));
    let tiled_t = tile_frame(cur, cfg.grid, manifest.bbox).map_err(ctx)?;
    let tiled_p = tile_frame(prev, cfg.grid, manifest.bbox).map_err(ctx)?;
    let actual = traj.states_at(t).map_err(ctx)?;
    let predicted = predicted_states(traj, lstm, t, cfg.lstm.window).map_err(ctx)?;
    let gt = build_ground_truth(&cur.points, &actual, cfg.fov, cfg.freq_threshold)?;
    let fl = build_ground_truth(&cur.points, &predicted, cfg.fov, cfg.freq_threshold)?;

    let items = (0..cfg.tiles)
        .into_par_iter()
        .map(|j| {
            let (ti, pi) = (&tiled_t.tiles[j], &tiled_p.tiles[j]);
            if ti.len() < cfg.points || pi.len() < cfg.points {
                return Ok(None);
            }
            let s_seed = seed::derive(cfg.seed, &[tag::SAMPLE, j as u64]);
            let g_seed = seed::derive(cfg.seed, &[tag::RS_LEVEL, t as u64, j as u64]);
            let local_t: Vec<Point> = ti.iter().map(|&i| cur.points[i]).collect();
            let local_p: Vec<Point> = pi.iter().map(|&i| prev.points[i]).collect();
            let st = urs_sample(&local_t, cfg.points, cfg.cubes, s_seed)?.remap(j, t, ti);
            let sp = urs_sample(&local_p, cfg.points, cfg.cubes, s_seed)?.remap(j, prev.frame_index, pi);
            let pts_t = st.gather(&cur.points)?;
            let pts_p = sp.gather(&prev.points)?;
            let input = ItemInput {
                geom_t: TileGeometry::build(&pts_t, &cfg.encoder, g_seed)?,
                geom_prev: TileGeometry::build(&pts_p, &cfg.encoder, g_seed)?,
                fl_labels: st.point_indices.iter().map(|&i| fl[i]).collect(),
                points: pts_t,
            };
            Ok(Some(TileItem {
                frame_index: t,
                tile: j,
                gt: st.point_indices.iter().map(|&i| gt[i]).collect(),
                sample: st.point_indices,
                input,
            }))
        })
        .collect::<Result<Vec<_>>>()
        .map_err(ctx)?;

    Ok(FrameData {
        frame_index: t,
        point_tiles: tiled_t.point_tiles(cur.len()),
        points: cur.points.clone(),
        tiles: tiled_t.tiles,
        gt,
        fl,
        items,
    })
}

/// Full-frame labels for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FramePrediction {
    pub frame_index: usize,
    pub labels: Vec<u8>,
    pub fallback_tiles: usize,
}

/// Predicts every point of every frame. Sampled points take the network's
/// label; the rest copy their nearest sampled neighbour in the same tile.
/// Tiles without an item keep the F_L labels.
pub fn predict_frames(params: &ParamStore, frames: &[FrameData]) -> Result<Vec<FramePrediction>> {
    frames
        .iter()
        .map(|f| {
            let per_tile = f
                .items
                .par_iter()
                .map(|item| item.as_ref().map(|it| predict_item(params, &it.input)).transpose())
                .collect::<Result<Vec<_>>>()?;
            let mut labels = f.fl.clone();
            for ((item, pred), tile) in f.items.iter().zip(&per_tile).zip(&f.tiles) {
                let (Some(item), Some(pred)) = (item, pred) else { continue };
                let sampled: Vec<_> = item.input.points.iter().map(|p| p.position).collect();
                let index = KnnIndex::new(&sampled);
                for &i in tile {
                    let nearest = index.knn(f.points[i].position, 1)?[0];
                    labels[i] = pred.labels[nearest];
                }
            }
            Ok(FramePrediction {
                frame_index: f.frame_index,
                labels,
                fallback_tiles: f.fallback_tiles(),
            })
        })
        .collect()
}

/// Predicts and scores `frames` against their ground truth.
pub fn evaluate_split(params: &ParamStore, frames: &[FrameData], tile_count: usize, tau: f64) -> Result<EvalReport> {
    let preds = predict_frames(params, frames)?;
    score(&preds, frames, tile_count, tau)
}

pub(crate) fn score(preds: &[FramePrediction], frames: &[FrameData], tile_count: usize, tau: f64) -> Result<EvalReport> {
    let evals: Vec<FrameEval<'_>> = preds
        .iter()
        .zip(frames)
        .map(|(p, f)| FrameEval {
            frame_index: f.frame_index,
            pred: &p.labels,
            gt: &f.gt,
            point_tiles: &f.point_tiles,
        })
        .collect();
    evaluate(&evals, tile_count, tau)
}

/// One row of the metrics log.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub loss: f64,
    pub report: EvalReport,
}

impl EpochMetrics {
    pub const CSV_HEADER: &'static str = "epoch,loss,point_miou,tile_miou,oa,precision,recall";

    pub fn csv_row(&self) -> String {
        use crate::eval::fmt_opt;
        let r = &self.report;
        format!(
            "{},{},{},{},{},{},{}",
            self.epoch,
            self.loss,
            fmt_opt(r.point_miou),
            fmt_opt(r.tile_miou),
            fmt_opt(r.oa),
            fmt_opt(r.precision),
            fmt_opt(r.recall)
        )
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ParamStore,
    pub epochs: Vec<EpochMetrics>,
    pub step_losses: Vec<f64>,
}

/// Mean loss and gradients of one batch; items run on separate tapes.
fn batch_step(params: &ParamStore, batch: &[&TileItem], step: usize, cfg: &PipelineConfig) -> Result<(f64, GradMap)> {
    let all: Vec<u8> = batch.iter().flat_map(|it| it.gt.iter().copied()).collect();
    let weights = class_weights(&all);
    let results = batch
        .par_iter()
        .enumerate()
        .map(|(k, it)| {
            let mut g = Graph::new();
            let dropout = (cfg.dropout > 0.0).then(|| Dropout {
                rate: cfg.dropout,
                seed: seed::derive(cfg.seed, &[tag::DROPOUT, step as u64, k as u64]),
            });
            let probs = forward_item(&mut g, params, &it.input, dropout)?;
            let l = loss(&mut g, probs, &it.gt, weights)?;
            Ok((g.value(l).data()[0], g.backward(l)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let scale = 1.0 / batch.len() as f64;
    let mean = results.iter().map(|r| r.0).sum::<f64>() * scale;
    Ok((mean, accumulate_grads(results.iter().map(|r| &r.1), scale)))
}

/// Trains the viewport network for `cfg.steps` Adam steps. An epoch is one
/// shuffled pass over the training items; after each epoch (and after the
/// last step) the held-out frames are evaluated and `on_epoch` is called.
pub fn train(
    data: &PreparedData,
    cfg: &PipelineConfig,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<TrainOutcome> {
    let items: Vec<&TileItem> = data
        .train
        .iter()
        .flat_map(|f| f.items.iter().flatten())
        .collect();
    if items.is_empty() {
        return Err(Error::invalid(format!(
            "no training tile has {} points in both frames of its pair",
            cfg.points
        )));
    }
    let mut params = init_model(&cfg.encoder, cfg.seed)?;
    let mut adam = Adam::new(cfg.lr);
    let mut epochs = Vec::new();
    let mut step_losses = Vec::new();
    let mut epoch = 0;
    while step_losses.len() < cfg.steps {
        epoch += 1;
        let mut order: Vec<usize> = (0..items.len()).collect();
        order.shuffle(&mut seed::rng(seed::derive(cfg.seed, &[tag::BATCH, epoch as u64])));
        let mut losses = Vec::new();
        for chunk in order.chunks(cfg.batch) {
            if step_losses.len() == cfg.steps {
                break;
            }
            let batch: Vec<&TileItem> = chunk.iter().map(|&i| items[i]).collect();
            let step = step_losses.len();
            let (l, grads) = batch_step(&params, &batch, step, cfg).map_err(|e| {
                let tiles: Vec<String> = batch.iter().map(|it| format!("{}:{}", it.frame_index, it.tile)).collect();
                e.context(format!("training step {step} (frame:tile {})", tiles.join(" ")))
            })?;
            adam.step(&mut params, &grads);
            losses.push(l);
            step_losses.push(l);
        }
        let m = EpochMetrics {
            epoch,
            loss: losses.iter().sum::<f64>() / losses.len().max(1) as f64,
            report: evaluate_split(&params, &data.test, data.tile_count, cfg.tau)?,
        };
        on_epoch(&m);
        epochs.push(m);
    }
    Ok(TrainOutcome {
        params,
        epochs,
        step_losses,
    })
}

/// The trajectory parameters and the viewport network in one store.
pub fn checkpoint(outcome: &TrainOutcome, lstm: &ParamStore) -> ParamStore {
    let mut p = outcome.params.clone();
    p.merge(lstm.clone());
    p
}
