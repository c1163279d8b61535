mod common;

use proptest::prelude::*;
use rand::Rng;
use voxport::cloud::*;
use voxport::Error;

use common::{brute_knn, random_points};

fn frame(points: Vec<Point>) -> PointCloudFrame {
    PointCloudFrame::new(3, points)
}

#[test]
fn ply_round_trips_in_both_formats() {
    let f = frame(random_points(50, 1));
    for format in [PlyFormat::Ascii, PlyFormat::BinaryLittleEndian] {
        let mut buf = Vec::new();
        write_ply(&mut buf, &f, format).unwrap();
        let back = read_ply(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 50);
        for (a, b) in back.points.iter().zip(&f.points) {
            assert_eq!(a.color, b.color);
            for k in 0..3 {
                assert_eq!(a.position[k], b.position[k] as f32 as f64);
            }
        }
    }
}

#[test]
fn ply_errors() {
    let header = "ply\nformat ascii 1.0\nelement vertex 10\nproperty float x\nproperty float y\nproperty float z\nproperty uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n";
    let body: String = (0..7).map(|_| "0 0 0 1 2 3\n").collect();
    let err = read_ply(format!("{header}{body}").as_bytes()).unwrap_err();
    assert!(matches!(err, Error::CorruptFile(_)), "{err}");

    let bad = header.replace("element vertex 10", "element vertex ten");
    let err = read_ply(bad.as_bytes()).unwrap_err();
    assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");

    let no_color = header.replace("property uchar blue\n", "");
    assert!(matches!(read_ply(no_color.as_bytes()), Err(Error::UnsupportedFormat(_))));

    let err = load_ply("/nonexistent/x.ply").unwrap_err();
    assert!(err.is_io());
}

#[test]
fn knn_matches_brute_force_on_random_cases() {
    let mut rng = voxport::seed::rng(2);
    for case in 0..100 {
        let n = rng.gen_range(1..400);
        let pts: Vec<Vec3> = (0..n)
            .map(|_| [rng.gen::<f64>() * 3.0, rng.gen(), rng.gen::<f64>() * 0.2])
            .collect();
        let index = KnnIndex::new(&pts);
        let k = rng.gen_range(1..=n.min(20));
        let q = [rng.gen::<f64>() * 3.0, rng.gen(), rng.gen()];
        assert_eq!(index.knn(q, k).unwrap(), brute_knn(&pts, q, k), "case {case}");
    }
}

#[test]
fn knn_ties_break_by_index() {
    let pts: Vec<Vec3> = vec![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, 2.0]];
    let index = KnnIndex::new(&pts);
    assert_eq!(index.knn([0.0; 3], 3).unwrap(), vec![0, 1, 2]);
    assert!(index.knn([0.0; 3], 5).is_err());
}

#[test]
fn tiling_errors_on_points_outside_the_box() {
    let f = frame(vec![Point::new([0.5; 3], [0; 3]), Point::new([2.0, 0.5, 0.5], [0; 3])]);
    let err = tile_frame(&f, [2, 2, 2], Aabb::new([0.0; 3], [1.0; 3])).unwrap_err();
    assert!(matches!(err, Error::OutOfBounds { index: 1 }));
    assert!(tile_frame(&f, [0, 1, 1], Aabb::new([0.0; 3], [3.0; 3])).is_err());
}

#[test]
fn manifest_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let text = "grid = 2 3 2\nbbox = -2 0 -2 2 2.5 2\ntrajectories = t.csv\nframe = 7 a.ply\nframe = 8 b.ply\n";
    let m = SequenceManifest::parse(text, dir.path()).unwrap();
    assert_eq!(m.grid, [2, 3, 2]);
    assert_eq!(m.frames[1], (8, dir.path().join("b.ply")));
    let again = SequenceManifest::parse(&m.to_text(dir.path()), dir.path()).unwrap();
    assert_eq!(again, m);
    assert!(SequenceManifest::parse("bbox = 0 0 0 1 1 1\n", dir.path()).is_err());
}

proptest! {
    #[test]
    fn tiles_partition_the_frame(
        seed in any::<u64>(),
        n in 1usize..300,
        gx in 1usize..4, gy in 1usize..4, gz in 1usize..4,
    ) {
        let f = frame(random_points(n, seed));
        let bbox = Aabb::new([0.0; 3], [1.0; 3]);
        let tiled = tile_frame(&f, [gx, gy, gz], bbox).unwrap();
        prop_assert_eq!(tiled.tiles.len(), gx * gy * gz);
        let mut seen = vec![0; n];
        let grid = tiled.tile_grid();
        for (j, tile) in tiled.tiles.iter().enumerate() {
            prop_assert!(tile.windows(2).all(|w| w[0] < w[1]));
            let b = grid.tile_bounds(j);
            for &i in tile {
                seen[i] += 1;
                prop_assert!(b.contains(f.points[i].position));
            }
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
        let pt = tiled.point_tiles(n);
        for (j, tile) in tiled.tiles.iter().enumerate() {
            prop_assert!(tile.iter().all(|&i| pt[i] == j));
        }
    }

    #[test]
    fn ply_binary_round_trip_exact_for_f32(seed in any::<u64>(), n in 0usize..60) {
        let pts: Vec<Point> = random_points(n, seed)
            .into_iter()
            .map(|p| Point::new(p.position.map(|v| v as f32 as f64), p.color))
            .collect();
        let f = frame(pts);
        let mut buf = Vec::new();
        write_ply(&mut buf, &f, PlyFormat::BinaryLittleEndian).unwrap();
        prop_assert_eq!(read_ply(buf.as_slice()).unwrap().points, f.points);
    }
}
