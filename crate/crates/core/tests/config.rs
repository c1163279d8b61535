use std::path::PathBuf;

use proptest::prelude::*;
use voxport::config::PipelineConfig;

fn shipped(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

#[test]
fn shipped_configs_match_presets() {
    assert_eq!(PipelineConfig::load(&shipped("toy.cfg")).unwrap(), PipelineConfig::toy());
    assert_eq!(PipelineConfig::load(&shipped("paper.cfg")).unwrap(), PipelineConfig::paper());
}

#[test]
fn paper_sizes() {
    let c = PipelineConfig::paper();
    assert_eq!((c.points, c.cubes, c.batch, c.tiles, c.freq_threshold), (12288, 512, 4, 12, 5));
    assert_eq!(c.encoder.k, 16);
    assert_eq!(c.encoder.widths, vec![8, 32, 128, 256, 512, 1024]);
}

#[test]
fn invalid_configs_are_rejected() {
    for text in [
        "points = 1000\n",
        "grid = 2,2,2\n",
        "grid = 2,2\n",
        "widths = 8,16,32\n",
        "dropout = 1\n",
        "freq_threshold = 0\n",
        "fov_h = 95\n",
        "lr = -1\n",
        "what = 1\n",
        "points\n",
    ] {
        assert!(PipelineConfig::parse(text).is_err(), "{text:?} accepted");
    }
    let c = PipelineConfig::parse("# comment\n\nseed = 9\nwidths = 8,16,32\ndivisors = 4,4\n").unwrap();
    assert_eq!(c.seed, 9);
    assert_eq!(c.encoder.levels(), 2);
}

#[test]
fn missing_file_is_io_error() {
    let err = PipelineConfig::load(&shipped("nope.cfg")).unwrap_err();
    assert!(err.is_io());
}

proptest! {
    #[test]
    fn round_trip(
        seed in any::<u64>(),
        lr in 1e-6f64..1.0,
        tau in 1e-3f64..=1.0,
        dropout in 0.0f64..0.99,
        fov in 1.0f64..89.0,
        near in 1e-4f64..1.0,
        steps in 1usize..5000,
        thr in 1usize..40,
    ) {
        let mut c = PipelineConfig::toy();
        c.seed = seed;
        c.lr = lr;
        c.tau = tau;
        c.dropout = dropout;
        c.fov.h_half_deg = fov;
        c.fov.near = near;
        c.steps = steps;
        c.freq_threshold = thr;
        prop_assert_eq!(PipelineConfig::parse(&c.to_text()).unwrap(), c);
    }
}
