use std::fs;
use std::path::Path;

use voxport_cli::run;

fn voxport(out: &Path, args: &[&str]) -> i32 {
    let mut argv = vec!["voxport".to_string(), "--out".into(), out.display().to_string()];
    argv.extend(args.iter().map(|s| s.to_string()));
    run(argv)
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                files.push((rel, fs::read(&p).unwrap()));
            }
        }
    }
    files.sort();
    files
}

const SMALL_SCENE: &[&str] = &[
    "gen-scene",
    "--frames",
    "4",
    "--room-points",
    "5000",
    "--moving-points",
    "800",
];

#[test]
fn gen_scene_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let mut args = vec!["--seed", "7"];
    args.extend_from_slice(SMALL_SCENE);
    assert_eq!(voxport(&a, &args), 0);
    assert_eq!(voxport(&b, &args), 0);
    let (ta, tb) = (tree(&a), tree(&b));
    assert!(ta.iter().any(|(n, _)| n == "sequence.txt"));
    assert!(ta.iter().filter(|(n, _)| n.ends_with(".ply")).count() == 4);
    assert!(ta == tb);
}

#[test]
fn different_seeds_give_different_scenes() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let mut args = vec!["--seed", "1"];
    args.extend_from_slice(SMALL_SCENE);
    assert_eq!(voxport(&a, &args), 0);
    args[1] = "2";
    assert_eq!(voxport(&b, &args), 0);
    assert!(tree(&a) != tree(&b));
}

#[test]
fn usage_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(voxport(dir.path(), &["tile", "--bogus"]), 1);
    assert_eq!(voxport(dir.path(), &["no-such-command"]), 1);
    assert_eq!(voxport(dir.path(), &["sample-bench", "--methods", "urs,nope"]), 1);
    assert_eq!(voxport(dir.path(), &["--help"]), 0);
}

#[test]
fn missing_input_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.txt");
    let m = missing.display().to_string();
    assert_eq!(voxport(dir.path(), &["tile", "--manifest", &m]), 2);
    assert_eq!(voxport(dir.path(), &["gt-gen", "--manifest", &m]), 2);
}

#[test]
fn corrupt_manifest_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("sequence.txt");
    fs::write(&m, "this is not a manifest\n").unwrap();
    assert_eq!(voxport(dir.path(), &["tile", "--manifest", &m.display().to_string()]), 1);
}

#[test]
fn sample_bench_writes_one_row_per_method() {
    let dir = tempfile::tempdir().unwrap();
    let code = voxport(
        dir.path(),
        &["sample-bench", "--methods", "urs,rs,fps", "--points", "5000", "--n", "256", "--cubes", "16"],
    );
    assert_eq!(code, 0);
    let cost = fs::read_to_string(dir.path().join("sample_bench.csv")).unwrap();
    let lines: Vec<&str> = cost.lines().collect();
    assert_eq!(lines[0], "method,n_points,time_ms,peak_bytes");
    assert_eq!(lines.len(), 4);
    for l in &lines[1..] {
        let f: Vec<&str> = l.split(',').collect();
        assert_eq!(f.len(), 4);
        assert_eq!(f[1], "5000");
        assert!(f[2].parse::<f64>().unwrap() >= 0.0);
        f[3].parse::<u64>().unwrap();
    }
    let ifmi = fs::read_to_string(dir.path().join("ifmi.csv")).unwrap();
    let lines: Vec<&str> = ifmi.lines().collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[0].split(',').count(), 10);
    for l in &lines[1..] {
        for v in l.split(',').skip(1) {
            let v: f64 = v.parse().unwrap();
            assert!((0.0..=1.0).contains(&v));
        }
    }
}

#[test]
fn tile_and_gt_cover_every_point() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene");
    assert_eq!(voxport(&scene, SMALL_SCENE), 0);
    let m = scene.join("sequence.txt").display().to_string();
    assert_eq!(voxport(dir.path(), &["tile", "--manifest", &m]), 0);
    assert_eq!(voxport(dir.path(), &["gt-gen", "--manifest", &m]), 0);

    let tiles = fs::read_to_string(dir.path().join("tiles.csv")).unwrap();
    let mut per_frame = std::collections::BTreeMap::<u64, usize>::new();
    for l in tiles.lines().skip(1) {
        let f: Vec<&str> = l.split(',').collect();
        *per_frame.entry(f[0].parse().unwrap()).or_default() += f[2].parse::<usize>().unwrap();
    }
    let labels = fs::read_to_string(dir.path().join("labels.csv")).unwrap();
    let mut counted = std::collections::BTreeMap::<u64, usize>::new();
    for l in labels.lines().skip(1) {
        let f: Vec<&str> = l.split(',').collect();
        *counted.entry(f[0].parse().unwrap()).or_default() += 1;
        assert!(f[2] == "0" || f[2] == "1");
    }
    assert_eq!(per_frame.len(), 4);
    assert_eq!(per_frame, counted);
}

const TINY_CONFIG: &str = "\
grid = 2,1,1
tiles = 2
points = 256
cubes = 16
batch = 2
widths = 8,16,32,64
divisors = 4,4,4
steps = 4
lstm_steps = 50
lstm_window = 8
train_frames = 2
test_frames = 1
";

#[test]
fn train_predict_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene");
    let mut args = vec!["--seed", "3"];
    args.extend_from_slice(SMALL_SCENE);
    assert_eq!(voxport(&scene, &args), 0);
    let manifest = scene.join("sequence.txt").display().to_string();
    let cfg = dir.path().join("tiny.cfg");
    fs::write(&cfg, TINY_CONFIG).unwrap();
    let cfg = cfg.display().to_string();
    let run_dir = dir.path().join("run");

    assert_eq!(voxport(&run_dir, &["train", "--manifest", &manifest, "--config", &cfg]), 0);
    for f in ["model.vxpt", "metrics.csv", "config.cfg"] {
        assert!(run_dir.join(f).is_file(), "{f}");
    }
    let metrics = fs::read_to_string(run_dir.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 3, "header plus two epochs:\n{metrics}");

    let model = run_dir.join("model.vxpt").display().to_string();
    let saved_cfg = run_dir.join("config.cfg").display().to_string();
    let predict = ["predict", "--manifest", &manifest, "--config", &saved_cfg, "--model", &model];
    assert_eq!(voxport(&run_dir, &predict), 0);
    let first = fs::read(run_dir.join("predictions.csv")).unwrap();
    assert_eq!(voxport(&run_dir, &predict), 0);
    assert_eq!(first, fs::read(run_dir.join("predictions.csv")).unwrap());

    assert_eq!(voxport(&run_dir, &["gt-gen", "--manifest", &manifest]), 0);
    let pred = run_dir.join("predictions.csv").display().to_string();
    let gt = run_dir.join("labels.csv").display().to_string();
    assert_eq!(voxport(&run_dir, &["eval", "--manifest", &manifest, "--pred", &pred, "--gt", &gt]), 0);
    let report = fs::read_to_string(run_dir.join("eval.csv")).unwrap();
    assert!(report.lines().count() >= 2);
    assert!(run_dir.join("eval_tiles.csv").is_file());

    // A checkpoint built for other encoder widths is rejected.
    let wide = dir.path().join("wide.cfg");
    fs::write(&wide, TINY_CONFIG.replace("widths = 8,16,32,64", "widths = 8,16,32,128")).unwrap();
    let wide = wide.display().to_string();
    let bad = ["predict", "--manifest", &manifest, "--config", &wide, "--model", &model];
    assert_eq!(voxport(&run_dir, &bad), 1);
}
