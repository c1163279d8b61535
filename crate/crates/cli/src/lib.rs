//! `voxport` command-line front end.
//!
//! Exit codes: 0 on success, 1 for invalid arguments or input data, 2 for
//! filesystem errors.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use voxport::autodiff::ParamStore;
use voxport::cloud::SequenceManifest;
use voxport::config::PipelineConfig;
use voxport::eval::{evaluate, FrameEval};
use voxport::fusion::{self, EpochMetrics};
use voxport::sampling::{bench, SamplingMethod};
use voxport::scene::{self, SceneSpec};
use voxport::trajectory::Trajectories;
use voxport::viewport::{build_ground_truth, FovLabels, FovParams};
use voxport::{Error, Result};

pub const THREADS_ENV: &str = "VOXPORT_THREADS";

#[derive(Debug, Parser)]
#[command(name = "voxport", version, about = "Point-cloud video viewport prediction")]
struct Cli {
    /// Master seed for every random stream.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads (default: available parallelism). VOXPORT_THREADS overrides.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Partition every frame into the manifest's tile grid.
    Tile(TileArgs),
    /// Time, memory and IFMI of the samplers on a translated point set.
    SampleBench(BenchArgs),
    /// Ground-truth FoV labels from recorded head states.
    GtGen(GtArgs),
    /// Train the trajectory model and the viewport network.
    Train(TrainArgs),
    /// Predict labels for the held-out frames.
    Predict(PredictArgs),
    /// Score predicted labels against ground truth.
    Eval(EvalArgs),
    /// Write a synthetic scene sequence.
    GenScene(SceneArgs),
}

#[derive(Debug, Args)]
struct TileArgs {
    #[arg(long)]
    manifest: PathBuf,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Comma-separated sampler names.
    #[arg(long, default_value = "urs,fps,rs,idis,gs,vs", value_delimiter = ',')]
    methods: Vec<String>,
    #[arg(long, default_value_t = 100_000)]
    points: usize,
    /// Sampled points (N).
    #[arg(long, default_value_t = 12288)]
    n: usize,
    /// URS cubes (N_c).
    #[arg(long, default_value_t = 512)]
    cubes: usize,
    /// Translation between the two frames.
    #[arg(long, default_value_t = 0.02)]
    shift: f64,
}

#[derive(Debug, Args)]
struct GtArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value_t = 5)]
    freq_threshold: usize,
    #[arg(long, default_value_t = 55.0)]
    fov_h: f64,
    #[arg(long, default_value_t = 55.0)]
    fov_v: f64,
    #[arg(long, default_value_t = 0.05)]
    near: f64,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Pipeline config; the toy preset when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config's step count.
    #[arg(long)]
    steps: Option<usize>,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Checkpoint written by `train`.
    #[arg(long)]
    model: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Supplies the tile grid and the frames.
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    tau: f64,
}

#[derive(Debug, Args)]
struct SceneArgs {
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    users: Option<usize>,
    /// Sphere displacement per frame, `x,y,z`.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    velocity: Option<Vec<f64>>,
    #[arg(long)]
    room_points: Option<usize>,
    #[arg(long)]
    moving_points: Option<usize>,
    /// Gaze wobble amplitude.
    #[arg(long)]
    noise: Option<f64>,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_io() {
                2
            } else {
                1
            }
        }
    }
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::InvalidArgument(format!("{THREADS_ENV}={v} is not a thread count"))),
        Err(_) => Ok(flag),
    }
}

fn execute(cli: Cli) -> Result<()> {
    if let Some(n) = thread_count(cli.threads)? {
        if n == 0 {
            return Err(Error::InvalidArgument("thread count must be positive".into()));
        }
        // A pool built by an earlier call in the same process stays in place.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    fs::create_dir_all(&cli.out).map_err(|e| path_err(&cli.out, e))?;
    let seed = cli.seed;
    let out = cli.out.as_path();
    match cli.command {
        Command::Tile(a) => tile(&a, out),
        Command::SampleBench(a) => sample_bench(&a, seed.unwrap_or(0), out),
        Command::GtGen(a) => gt_gen(&a, out),
        Command::Train(a) => train(&a, seed, out),
        Command::Predict(a) => predict(&a, seed, out),
        Command::Eval(a) => eval(&a, out),
        Command::GenScene(a) => gen_scene(&a, seed.unwrap_or(0), out),
    }
}

fn path_err(path: &Path, source: std::io::Error) -> Error {
    Error::PathIo {
        path: path.to_path_buf(),
        source,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| path_err(path, e))
}

fn finish(mut w: BufWriter<File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| path_err(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| path_err(path, e))
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<PipelineConfig> {
    let mut cfg = match path {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::toy(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn tile(a: &TileArgs, out: &Path) -> Result<()> {
    let m = SequenceManifest::load(&a.manifest)?;
    let mut csv = String::from("frame,tile,points\n");
    for f in m.load_frames()? {
        let tiled = m.tile(&f)?;
        for (j, t) in tiled.tiles.iter().enumerate() {
            csv += &format!("{},{j},{}\n", f.frame_index, t.len());
        }
    }
    let path = out.join("tiles.csv");
    write_text(&path, &csv)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn sample_bench(a: &BenchArgs, seed: u64, out: &Path) -> Result<()> {
    let methods = a
        .methods
        .iter()
        .map(|s| s.parse::<SamplingMethod>())
        .collect::<Result<Vec<_>>>()?;
    let (prev, cur) = bench::translated_pair(a.points, a.shift, seed);
    let rows = bench::run(&prev, &cur, a.n, a.cubes, &methods, seed, &bench::THRESHOLDS)?;

    let mut cost = String::from("method,n_points,time_ms,peak_bytes\n");
    let mut table = String::from("method");
    for t in bench::THRESHOLDS {
        table += &format!(",{t}");
    }
    table.push('\n');
    for r in &rows {
        cost += &format!("{},{},{:.3},{}\n", r.method, r.n_points, r.time_ms, r.peak_bytes);
        table += r.method.name();
        for v in &r.ifmi {
            table += &format!(",{v:.4}");
        }
        table.push('\n');
    }
    write_text(&out.join("sample_bench.csv"), &cost)?;
    write_text(&out.join("ifmi.csv"), &table)?;
    print!("{cost}\n{table}");
    Ok(())
}

fn load_trajectories(m: &SequenceManifest) -> Result<Trajectories> {
    let p = m
        .trajectories
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("manifest lacks `trajectories`".into()))?;
    Trajectories::load(p)
}

fn gt_gen(a: &GtArgs, out: &Path) -> Result<()> {
    let fov = FovParams::new(a.fov_h, a.fov_v, a.near)?;
    let m = SequenceManifest::load(&a.manifest)?;
    let traj = load_trajectories(&m)?;
    let mut labels = Vec::new();
    for f in m.load_frames()? {
        let states = traj.states_at(f.frame_index)?;
        let l = build_ground_truth(&f.points, &states, fov, a.freq_threshold)?;
        labels.push(FovLabels {
            frame_index: f.frame_index,
            labels: l,
        });
    }
    let path = out.join("labels.csv");
    FovLabels::save_all(&labels, &path)?;
    let pos: usize = labels.iter().map(FovLabels::positives).sum();
    let total: usize = labels.iter().map(|l| l.labels.len()).sum();
    println!(
        "wrote {} ({} frames, {:.1}% positive)",
        path.display(),
        labels.len(),
        100.0 * pos as f64 / total.max(1) as f64
    );
    Ok(())
}

fn train(a: &TrainArgs, seed: Option<u64>, out: &Path) -> Result<()> {
    let mut cfg = load_config(a.config.as_deref(), seed)?;
    if let Some(s) = a.steps {
        cfg.steps = s;
    }
    cfg.validate()?;
    let m = SequenceManifest::load(&a.manifest)?;
    let data = fusion::prepare(&m, &cfg, None)?;
    if let Some(r) = &data.lstm_report {
        println!(
            "trajectory model: {} windows, loss {:.4e} -> {:.4e}",
            r.windows, r.initial_loss, r.final_loss
        );
    }
    let metrics_path = out.join("metrics.csv");
    let mut log = create(&metrics_path)?;
    writeln!(log, "{}", EpochMetrics::CSV_HEADER).map_err(|e| path_err(&metrics_path, e))?;
    let mut write_err = None;
    let outcome = fusion::train(&data, &cfg, |m| {
        let row = m.csv_row();
        println!("{row}");
        if let Err(e) = writeln!(log, "{row}") {
            write_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = write_err {
        return Err(path_err(&metrics_path, e));
    }
    finish(log, &metrics_path)?;
    let model = out.join("model.vxpt");
    fusion::checkpoint(&outcome, &data.lstm).save(&model)?;
    write_text(&out.join("config.cfg"), &cfg.to_text())?;
    println!("wrote {} and {}", model.display(), metrics_path.display());
    Ok(())
}

fn predict(a: &PredictArgs, seed: Option<u64>, out: &Path) -> Result<()> {
    let cfg = load_config(a.config.as_deref(), seed)?;
    let ckpt = ParamStore::load(&a.model)?;
    let expected = fusion::init_model(&cfg.encoder, 0)?;
    ckpt.check_shapes(expected.iter().map(|(n, t)| (n, t.shape())))
        .map_err(|e| e.context(format!("checkpoint {} does not fit the config", a.model.display())))?;
    let lstm = ckpt.subset("lstm.");
    if lstm.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "checkpoint {} has no trajectory model",
            a.model.display()
        )));
    }
    let m = SequenceManifest::load(&a.manifest)?;
    let data = fusion::prepare(&m, &cfg, Some(lstm))?;
    let preds = fusion::predict_frames(&ckpt, &data.test)?;
    let labels: Vec<FovLabels> = preds
        .iter()
        .map(|p| FovLabels {
            frame_index: p.frame_index,
            labels: p.labels.clone(),
        })
        .collect();
    let path = out.join("predictions.csv");
    FovLabels::save_all(&labels, &path)?;
    let fallback: usize = preds.iter().map(|p| p.fallback_tiles).sum();
    println!(
        "wrote {} ({} frames, {fallback} tiles fell back to trajectory labels)",
        path.display(),
        preds.len()
    );
    Ok(())
}

fn eval(a: &EvalArgs, out: &Path) -> Result<()> {
    let m = SequenceManifest::load(&a.manifest)?;
    let pred = FovLabels::load_all(&a.pred)?;
    let gt = FovLabels::load_all(&a.gt)?;
    let frames = m.load_frames()?;
    let mut tiles = Vec::new();
    for p in &pred {
        let f = frames
            .iter()
            .find(|f| f.frame_index == p.frame_index)
            .ok_or_else(|| Error::InvalidArgument(format!("frame {} is not in the manifest", p.frame_index)))?;
        let g = gt
            .iter()
            .find(|g| g.frame_index == p.frame_index)
            .ok_or_else(|| Error::InvalidArgument(format!("no ground truth for frame {}", p.frame_index)))?;
        tiles.push((p, g, m.tile(f)?.point_tiles(f.len())));
    }
    let evals: Vec<FrameEval<'_>> = tiles
        .iter()
        .map(|(p, g, t)| FrameEval {
            frame_index: p.frame_index,
            pred: &p.labels,
            gt: &g.labels,
            point_tiles: t,
        })
        .collect();
    let tile_count = m.grid.iter().product();
    let report = evaluate(&evals, tile_count, a.tau)?;

    let path = out.join("eval.csv");
    let w = create(&path)?;
    report.write_csv(w)?;
    let tpath = out.join("eval_tiles.csv");
    let w = create(&tpath)?;
    report.write_tile_csv(tile_count, w)?;
    let text = fs::read_to_string(&path).map_err(|e| path_err(&path, e))?;
    print!("{text}");
    Ok(())
}

fn gen_scene(a: &SceneArgs, seed: u64, out: &Path) -> Result<()> {
    let mut spec = SceneSpec {
        seed,
        ..SceneSpec::default()
    };
    if let Some(v) = a.frames {
        spec.frames = v;
    }
    if let Some(v) = a.users {
        spec.users = v;
    }
    if let Some(v) = &a.velocity {
        spec.velocity = [v[0], v[1], v[2]];
    }
    if let Some(v) = a.room_points {
        spec.room_points = v;
    }
    if let Some(v) = a.moving_points {
        spec.moving_points = v;
    }
    if let Some(v) = a.noise {
        spec.noise = v;
    }
    let m = scene::gen_scene(&spec, out)?;
    println!(
        "wrote {} frames to {}",
        m.frames.len(),
        out.join(scene::MANIFEST_NAME).display()
    );
    Ok(())
}
