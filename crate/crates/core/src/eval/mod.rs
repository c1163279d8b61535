//! Overall accuracy, precision, recall, and point- and tile-level MIoU.
//!
//! Class 1 (in view) is the positive class. A ratio whose denominator is
//! zero is reported as `None` rather than 0; MIoU averages the IoU of the
//! classes that occur in either the prediction or the ground truth.

use std::io::Write;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn add(&mut self, o: &Confusion) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.tn += o.tn;
        self.fn_ += o.fn_;
    }

    fn record(&mut self, pred: bool, gt: bool) {
        match (pred, gt) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fn_ += 1,
        }
    }

    pub fn oa(&self) -> Option<f64> {
        ratio(self.tp + self.tn, self.total())
    }

    pub fn precision(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// IoU of the positive and the negative class.
    pub fn class_iou(&self) -> [Option<f64>; 2] {
        [
            ratio(self.tn, self.tn + self.fn_ + self.fp),
            ratio(self.tp, self.tp + self.fp + self.fn_),
        ]
    }

    pub fn miou(&self) -> Option<f64> {
        let present: Vec<f64> = self.class_iou().into_iter().flatten().collect();
        (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64)
    }
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Counts over paired binary labels (any nonzero value is positive).
pub fn confusion(pred: &[u8], gt: &[u8]) -> Result<Confusion> {
    if pred.len() != gt.len() {
        return Err(Error::invalid(format!(
            "{} predictions for {} ground-truth labels",
            pred.len(),
            gt.len()
        )));
    }
    let mut c = Confusion::default();
    for (&p, &g) in pred.iter().zip(gt) {
        c.record(p != 0, g != 0);
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointMetrics {
    pub oa: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub miou: f64,
}

pub fn point_metrics(c: &Confusion) -> Result<PointMetrics> {
    if c.total() == 0 {
        return Err(Error::invalid("metrics over zero points"));
    }
    Ok(PointMetrics {
        oa: c.oa().unwrap(),
        precision: c.precision(),
        recall: c.recall(),
        miou: c.miou().unwrap(),
    })
}

/// One tile of one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TileRow {
    pub tile: usize,
    pub points: usize,
    pub pred_fraction: f64,
    pub gt_fraction: f64,
    pub pred_label: bool,
    pub gt_label: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TileMetrics {
    pub counts: Confusion,
    pub miou: Option<f64>,
    pub rows: Vec<TileRow>,
    /// Tiles without points, left out of both sides.
    pub empty_tiles: Vec<usize>,
}

/// Tile labels: a tile is positive iff at least `tau` of its points are.
pub fn tile_metrics(pred: &[u8], gt: &[u8], point_tiles: &[usize], tile_count: usize, tau: f64) -> Result<TileMetrics> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::invalid(format!("tile threshold {tau} not in (0, 1]")));
    }
    if pred.len() != gt.len() || pred.len() != point_tiles.len() {
        return Err(Error::invalid(format!(
            "{} predictions, {} labels and {} tile ids",
            pred.len(),
            gt.len(),
            point_tiles.len()
        )));
    }
    let mut n = vec![0usize; tile_count];
    let mut np = vec![0usize; tile_count];
    let mut ng = vec![0usize; tile_count];
    for ((&p, &g), &t) in pred.iter().zip(gt).zip(point_tiles) {
        if t >= tile_count {
            return Err(Error::invalid(format!("tile id {t} >= {tile_count}")));
        }
        n[t] += 1;
        np[t] += usize::from(p != 0);
        ng[t] += usize::from(g != 0);
    }
    let mut out = TileMetrics {
        counts: Confusion::default(),
        miou: None,
        rows: Vec::new(),
        empty_tiles: Vec::new(),
    };
    for t in 0..tile_count {
        if n[t] == 0 {
            out.empty_tiles.push(t);
            continue;
        }
        let pf = np[t] as f64 / n[t] as f64;
        let gf = ng[t] as f64 / n[t] as f64;
        let row = TileRow {
            tile: t,
            points: n[t],
            pred_fraction: pf,
            gt_fraction: gf,
            pred_label: pf >= tau,
            gt_label: gf >= tau,
        };
        out.counts.record(row.pred_label, row.gt_label);
        out.rows.push(row);
    }
    out.miou = out.counts.miou();
    Ok(out)
}

/// One evaluated frame.
pub struct FrameEval<'a> {
    pub frame_index: usize,
    pub pred: &'a [u8],
    pub gt: &'a [u8],
    pub point_tiles: &'a [usize],
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub oa: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub point_miou: Option<f64>,
    pub tile_miou: Option<f64>,
    pub points: Confusion,
    pub tiles: Confusion,
    /// `(frame_index, row)` for every non-empty tile.
    pub tile_rows: Vec<(usize, TileRow)>,
    pub empty_tiles: usize,
}

/// Pools point and tile confusions over frames.
pub fn evaluate(frames: &[FrameEval<'_>], tile_count: usize, tau: f64) -> Result<EvalReport> {
    let mut points = Confusion::default();
    let mut tiles = Confusion::default();
    let mut rows = Vec::new();
    let mut empty = 0;
    for f in frames {
        points.add(&confusion(f.pred, f.gt)?);
        let tm = tile_metrics(f.pred, f.gt, f.point_tiles, tile_count, tau)?;
        tiles.add(&tm.counts);
        empty += tm.empty_tiles.len();
        rows.extend(tm.rows.into_iter().map(|r| (f.frame_index, r)));
    }
    Ok(EvalReport {
        oa: points.oa(),
        precision: points.precision(),
        recall: points.recall(),
        point_miou: points.miou(),
        tile_miou: tiles.miou(),
        points,
        tiles,
        tile_rows: rows,
        empty_tiles: empty,
    })
}

/// `NA` for absent values.
pub fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"))
}

impl EvalReport {
    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["oa", "precision", "recall", "point_miou", "tile_miou"])?;
        wtr.write_record([self.oa, self.precision, self.recall, self.point_miou, self.tile_miou].map(fmt_opt))?;
        wtr.flush()?;
        Ok(())
    }

    /// Per-tile breakdown pooled over frames.
    pub fn write_tile_csv(&self, tile_count: usize, w: impl Write) -> Result<()> {
        let mut per = vec![(0usize, 0usize, Confusion::default()); tile_count];
        for (_, r) in &self.tile_rows {
            let e = &mut per[r.tile];
            e.0 += 1;
            e.1 += r.points;
            e.2.record(r.pred_label, r.gt_label);
        }
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["tile", "frames", "points", "tp", "fp", "tn", "fn", "accuracy"])?;
        for (t, (frames, pts, c)) in per.iter().enumerate() {
            wtr.write_record([
                t.to_string(),
                frames.to_string(),
                pts.to_string(),
                c.tp.to_string(),
                c.fp.to_string(),
                c.tn.to_string(),
                c.fn_.to_string(),
                fmt_opt(c.oa()),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}
