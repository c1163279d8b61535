use rand::Rng;
use voxport::eval::*;

#[test]
fn confusion_basics() {
    let c = confusion(&[1; 7], &[1; 7]).unwrap();
    assert_eq!(c, Confusion { tp: 7, fp: 0, tn: 0, fn_: 0 });
    let gt = [1, 0, 1, 1, 0];
    let comp: Vec<u8> = gt.iter().map(|g| 1 - g).collect();
    let c = confusion(&comp, &gt).unwrap();
    assert_eq!((c.tp, c.tn), (0, 0));
    assert!(confusion(&[1], &[1, 0]).is_err());
}

#[test]
fn hand_counted_cases() {
    let c = confusion(&[1, 0, 1, 0], &[1, 1, 0, 0]).unwrap();
    assert_eq!(c, Confusion { tp: 1, fp: 1, tn: 1, fn_: 1 });
    let m = point_metrics(&c).unwrap();
    assert_eq!(m.miou, 1.0 / 3.0);

    let perfect = point_metrics(&confusion(&[1, 0, 1], &[1, 0, 1]).unwrap()).unwrap();
    assert_eq!((perfect.oa, perfect.precision, perfect.recall, perfect.miou), (1.0, Some(1.0), Some(1.0), 1.0));

    let all_pos = point_metrics(&confusion(&[1; 4], &[1, 1, 0, 0]).unwrap()).unwrap();
    assert_eq!((all_pos.recall, all_pos.oa), (Some(1.0), 0.5));

    let none = point_metrics(&confusion(&[0; 3], &[0; 3]).unwrap()).unwrap();
    assert_eq!((none.precision, none.recall, none.miou), (None, None, 1.0));
    assert!(point_metrics(&Confusion::default()).is_err());
}

fn random_labels(n: usize, rng: &mut impl Rng, p: f64) -> Vec<u8> {
    (0..n).map(|_| u8::from(rng.gen_bool(p))).collect()
}

/// Set-based IoU: intersection and union of the index sets of each class.
fn set_miou(pred: &[u8], gt: &[u8]) -> Option<f64> {
    let mut ious = Vec::new();
    for class in [0u8, 1] {
        let inter = pred.iter().zip(gt).filter(|(p, g)| **p == class && **g == class).count();
        let union = pred.iter().zip(gt).filter(|(p, g)| **p == class || **g == class).count();
        if union > 0 {
            ious.push(inter as f64 / union as f64);
        }
    }
    (!ious.is_empty()).then(|| ious.iter().sum::<f64>() / ious.len() as f64)
}

#[test]
fn point_metrics_match_brute_force() {
    let mut rng = voxport::seed::rng(1);
    for case in 0..200 {
        let n = rng.gen_range(1..1000);
        let p = [0.02, 0.5, 0.98][case % 3];
        let pred = random_labels(n, &mut rng, p);
        let q = rng.gen_range(0.0..1.0);
        let gt = random_labels(n, &mut rng, q);
        let c = confusion(&pred, &gt).unwrap();
        let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
        for i in 0..n {
            match (pred[i], gt[i]) {
                (1, 1) => tp += 1,
                (1, 0) => fp += 1,
                (0, 0) => tn += 1,
                _ => fn_ += 1,
            }
        }
        assert_eq!(c, Confusion { tp, fp, tn, fn_ });
        let m = point_metrics(&c).unwrap();
        assert_eq!(Some(m.miou), set_miou(&pred, &gt));
        assert_eq!(m.oa, (tp + tn) as f64 / n as f64);
        for v in [Some(m.oa), m.precision, m.recall, Some(m.miou)].into_iter().flatten() {
            assert!((0.0..=1.0).contains(&v));
        }
    }
}

#[test]
fn tile_metrics_match_brute_force() {
    let mut rng = voxport::seed::rng(2);
    for _ in 0..200 {
        let n = rng.gen_range(1..500);
        let tiles: Vec<usize> = (0..n).map(|_| rng.gen_range(0..12)).collect();
        let pred = random_labels(n, &mut rng, 0.3);
        let gt = random_labels(n, &mut rng, 0.3);
        let tau = rng.gen_range(0.01..1.0);
        let tm = tile_metrics(&pred, &gt, &tiles, 12, tau).unwrap();
        let (mut tp_, mut gp_) = (Vec::new(), Vec::new());
        for t in 0..12 {
            let idx: Vec<usize> = (0..n).filter(|&i| tiles[i] == t).collect();
            if idx.is_empty() {
                assert!(tm.empty_tiles.contains(&t));
                continue;
            }
            let frac = |l: &[u8]| idx.iter().filter(|&&i| l[i] == 1).count() as f64 / idx.len() as f64;
            tp_.push(u8::from(frac(&pred) >= tau));
            gp_.push(u8::from(frac(&gt) >= tau));
        }
        assert_eq!(tm.miou, set_miou(&tp_, &gp_));
    }
}

#[test]
fn tile_special_cases() {
    let tiles = [0, 0, 1, 1, 2];
    let l = [1, 0, 0, 1, 1];
    for tau in [0.01, 0.5, 1.0] {
        assert_eq!(tile_metrics(&l, &l, &tiles, 4, tau).unwrap().miou, Some(1.0));
    }
    // one tile: prediction at 0.2 < tau = 0.25, truth at 0.4
    let tiles = [0; 5];
    let tm = tile_metrics(&[1, 0, 0, 0, 0], &[1, 1, 0, 0, 0], &tiles, 1, 0.25).unwrap();
    assert_eq!(tm.miou, Some(0.0));
    // tau near zero: any positive point makes the tile positive
    let tm = tile_metrics(&[0, 0, 0, 1], &[0, 0, 0, 0], &[0, 0, 1, 1], 2, 1e-12).unwrap();
    assert_eq!(tm.rows.iter().map(|r| r.pred_label).collect::<Vec<_>>(), vec![false, true]);
    assert!(tile_metrics(&[1], &[1], &[0], 1, 0.0).is_err());
    assert!(tile_metrics(&[1], &[1], &[3], 2, 0.5).is_err());
}

#[test]
fn report_csv() {
    let (p1, g1, t1) = ([1u8, 0, 1, 0], [1u8, 1, 0, 0], [0usize, 0, 1, 1]);
    let r = evaluate(
        &[FrameEval { frame_index: 0, pred: &p1, gt: &g1, point_tiles: &t1 }],
        3,
        0.1,
    )
    .unwrap();
    assert_eq!(r.point_miou, Some(1.0 / 3.0));
    assert_eq!(r.empty_tiles, 1);
    let mut buf = Vec::new();
    r.write_csv(&mut buf).unwrap();
    let s = String::from_utf8(buf).unwrap();
    assert!(s.starts_with("oa,precision,recall,point_miou,tile_miou\n0.500000,0.500000,0.500000,0.333333,"));
    let mut buf = Vec::new();
    r.write_tile_csv(3, &mut buf).unwrap();
    let s = String::from_utf8(buf).unwrap();
    assert_eq!(s.lines().count(), 4);
    assert!(s.lines().nth(3).unwrap().ends_with(",NA"));
}
