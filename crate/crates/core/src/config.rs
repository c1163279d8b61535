//! Pipeline configuration as a flat `key = value` file.
//!
//! | key | meaning | toy default |
//! |---|---|---|
//! | `tiles` | tile count, must equal the grid product | 12 |
//! | `grid` | tiles along x, y, z | 2,3,2 |
//! | `points` | points sampled per tile (N) | 1024 |
//! | `cubes` | URS cubes per tile (N_c) | 64 |
//! | `batch` | tile pairs per training step (B) | 4 |
//! | `neighbors` | K | 16 |
//! | `widths` | encoder widths, level 0 first | 8,16,32,64,128,256 |
//! | `divisors` | random-sampling divisor per level | 4,4,4,4,2 |
//! | `fov_h`, `fov_v` | viewport half-angles, degrees | 55, 55 |
//! | `near` | near-plane distance | 0.05 |
//! | `tau` | in-view fraction that makes a tile positive | 0.1 |
//! | `freq_threshold` | viewers needed for a positive ground-truth label | 5 |
//! | `seed` | master seed | 0 |
//! | `steps`, `lr`, `dropout` | network training | 300, 0.01, 0.5 |
//! | `lstm_hidden`, `lstm_window`, `lstm_steps`, `lstm_lr`, `lstm_batch` | trajectory model | 64, 16, 1000, 0.01, 16 |
//! | `train_frames`, `test_frames` | frame split, after one context frame | 8, 2 |

use std::fmt::Display;
use std::path::Path;

use crate::error::{Error, Result};
use crate::kv::{parse_list, parse_one, KvFile};
use crate::saliency::EncoderConfig;
use crate::trajectory::TrajectoryConfig;
use crate::viewport::FovParams;

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub tiles: usize,
    pub grid: [usize; 3],
    pub points: usize,
    pub cubes: usize,
    pub batch: usize,
    pub encoder: EncoderConfig,
    pub fov: FovParams,
    pub tau: f64,
    pub freq_threshold: usize,
    pub seed: u64,
    pub steps: usize,
    pub lr: f64,
    pub dropout: f64,
    pub lstm: TrajectoryConfig,
    pub train_frames: usize,
    pub test_frames: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self::toy()
    }
}

const KEYS: &[&str] = &[
    "tiles",
    "grid",
    "points",
    "cubes",
    "batch",
    "neighbors",
    "widths",
    "divisors",
    "fov_h",
    "fov_v",
    "near",
    "tau",
    "freq_threshold",
    "seed",
    "steps",
    "lr",
    "dropout",
    "lstm_hidden",
    "lstm_window",
    "lstm_steps",
    "lstm_lr",
    "lstm_batch",
    "train_frames",
    "test_frames",
];

impl PipelineConfig {
    pub fn toy() -> Self {
        Self {
            tiles: 12,
            grid: [2, 3, 2],
            points: 1024,
            cubes: 64,
            batch: 4,
            encoder: EncoderConfig::toy(),
            fov: FovParams::default(),
            tau: 0.1,
            freq_threshold: 5,
            seed: 0,
            steps: 300,
            lr: 1e-2,
            dropout: 0.5,
            lstm: TrajectoryConfig {
                steps: 1000,
                ..TrajectoryConfig::default()
            },
            train_frames: 8,
            test_frames: 2,
        }
    }

    /// Sizes of the reference network: N = 12288, N_c = 512, full widths.
    pub fn paper() -> Self {
        Self {
            points: 12288,
            cubes: 512,
            encoder: EncoderConfig::paper(),
            ..Self::toy()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        if self.grid.iter().product::<usize>() != self.tiles {
            return Err(Error::invalid(format!(
                "grid {:?} has {} tiles, config says {}",
                self.grid,
                self.grid.iter().product::<usize>(),
                self.tiles
            )));
        }
        if self.cubes == 0 || self.points % self.cubes != 0 {
            return Err(Error::invalid(format!(
                "points ({}) must be a positive multiple of cubes ({})",
                self.points, self.cubes
            )));
        }
        self.encoder.point_counts(self.points)?;
        if self.batch == 0 || !(self.lr > 0.0) {
            return Err(Error::invalid("batch and lr must be positive"));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::invalid(format!("tau {} not in (0, 1]", self.tau)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid(format!("dropout {} not in [0, 1)", self.dropout)));
        }
        if self.freq_threshold == 0 {
            return Err(Error::invalid("freq_threshold must be at least 1"));
        }
        FovParams::new(self.fov.h_half_deg, self.fov.v_half_deg, self.fov.near)?;
        if self.train_frames == 0 || self.test_frames == 0 {
            return Err(Error::invalid("train_frames and test_frames must be positive"));
        }
        if self.lstm.window == 0 || self.lstm.hidden == 0 || self.lstm.batch == 0 {
            return Err(Error::invalid("lstm sizes must be positive"));
        }
        Ok(())
    }

    /// Overrides defaults from `text`; unknown keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let kv = KvFile::parse(text)?;
        let mut c = Self::toy();
        for (k, v, line) in &kv.entries {
            let (v, line) = (v.as_str(), *line);
            match k.as_str() {
                "tiles" => c.tiles = parse_one(v, line)?,
                "grid" => {
                    let g: Vec<usize> = parse_list(v, line, Some(3))?;
                    c.grid = [g[0], g[1], g[2]];
                }
                "points" => c.points = parse_one(v, line)?,
                "cubes" => c.cubes = parse_one(v, line)?,
                "batch" => c.batch = parse_one(v, line)?,
                "neighbors" => c.encoder.k = parse_one(v, line)?,
                "widths" => c.encoder.widths = parse_list(v, line, None)?,
                "divisors" => c.encoder.divisors = parse_list(v, line, None)?,
                "fov_h" => c.fov.h_half_deg = parse_one(v, line)?,
                "fov_v" => c.fov.v_half_deg = parse_one(v, line)?,
                "near" => c.fov.near = parse_one(v, line)?,
                "tau" => c.tau = parse_one(v, line)?,
                "freq_threshold" => c.freq_threshold = parse_one(v, line)?,
                "seed" => c.seed = parse_one(v, line)?,
                "steps" => c.steps = parse_one(v, line)?,
                "lr" => c.lr = parse_one(v, line)?,
                "dropout" => c.dropout = parse_one(v, line)?,
                "lstm_hidden" => c.lstm.hidden = parse_one(v, line)?,
                "lstm_window" => c.lstm.window = parse_one(v, line)?,
                "lstm_steps" => c.lstm.steps = parse_one(v, line)?,
                "lstm_lr" => c.lstm.lr = parse_one(v, line)?,
                "lstm_batch" => c.lstm.batch = parse_one(v, line)?,
                "train_frames" => c.train_frames = parse_one(v, line)?,
                "test_frames" => c.test_frames = parse_one(v, line)?,
                other => {
                    return Err(Error::Parse {
                        line,
                        msg: format!("unknown key `{other}` (known: {})", KEYS.join(", ")),
                    })
                }
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(Error::with_path(path))?;
        Self::parse(&text).map_err(|e| e.context(format!("config {}", path.display())))
    }

    pub fn to_text(&self) -> String {
        fn list<T: Display>(v: &[T]) -> String {
            v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
        }
        let rows: Vec<(&str, String)> = vec![
            ("tiles", self.tiles.to_string()),
            ("grid", list(&self.grid)),
            ("points", self.points.to_string()),
            ("cubes", self.cubes.to_string()),
            ("batch", self.batch.to_string()),
            ("neighbors", self.encoder.k.to_string()),
            ("widths", list(&self.encoder.widths)),
            ("divisors", list(&self.encoder.divisors)),
            ("fov_h", format!("{:?}", self.fov.h_half_deg)),
            ("fov_v", format!("{:?}", self.fov.v_half_deg)),
            ("near", format!("{:?}", self.fov.near)),
            ("tau", format!("{:?}", self.tau)),
            ("freq_threshold", self.freq_threshold.to_string()),
            ("seed", self.seed.to_string()),
            ("steps", self.steps.to_string()),
            ("lr", format!("{:?}", self.lr)),
            ("dropout", format!("{:?}", self.dropout)),
            ("lstm_hidden", self.lstm.hidden.to_string()),
            ("lstm_window", self.lstm.window.to_string()),
            ("lstm_steps", self.lstm.steps.to_string()),
            ("lstm_lr", format!("{:?}", self.lstm.lr)),
            ("lstm_batch", self.lstm.batch.to_string()),
            ("train_frames", self.train_frames.to_string()),
            ("test_frames", self.test_frames.to_string()),
        ];
        debug_assert_eq!(rows.len(), KEYS.len());
        rows.into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn trajectory_config(&self) -> TrajectoryConfig {
        TrajectoryConfig {
            seed: crate::seed::derive(self.seed, &[crate::seed::tag::TRAJECTORY]),
            ..self.lstm
        }
    }
}
