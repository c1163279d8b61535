use std::sync::Arc;

use proptest::prelude::*;
use rand::Rng;
use voxport::autodiff::{grad_check, Activation, Adam, GradCheckOptions, GradMap, Graph, ParamStore, Tensor};

fn random(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = voxport::seed::rng(seed);
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap()
}

#[test]
fn dense_matches_naive_matmul() {
    let x = random(&[3, 4], 1);
    let w = random(&[4, 5], 2);
    let b = random(&[5], 3);
    let mut g = Graph::new();
    let (xv, wv, bv) = (g.input(x.clone()), g.input(w.clone()), g.input(b.clone()));
    let y = g.dense(xv, wv, bv, Activation::None).unwrap();
    for i in 0..3 {
        for j in 0..5 {
            let mut want = b.data()[j];
            for k in 0..4 {
                want += x.data()[i * 4 + k] * w.data()[k * 5 + j];
            }
            assert!((g.value(y).data()[i * 5 + j] - want).abs() < 1e-12);
        }
    }
}

#[test]
fn dense_shares_weights_over_leading_axes() {
    let x = random(&[2, 3, 4], 4);
    let w = random(&[4, 2], 5);
    let b = random(&[2], 6);
    let mut g = Graph::new();
    let (xv, wv, bv) = (g.input(x.clone()), g.input(w), g.input(b));
    let y = g.dense(xv, wv, bv, Activation::Relu).unwrap();
    assert_eq!(g.shape(y), &[2, 3, 2]);
    let flat = g.reshape(xv, &[6, 4]).unwrap();
    let y2 = g.dense(flat, wv, bv, Activation::Relu).unwrap();
    assert_eq!(g.value(y).data(), g.value(y2).data());
}

#[test]
fn softmax_matches_direct_formula() {
    let x = random(&[9], 7);
    let mut g = Graph::new();
    let xv = g.input(x.clone());
    let s = g.softmax(xv, 0).unwrap();
    let z: f64 = x.data().iter().map(|v| v.exp()).sum();
    for (p, v) in g.value(s).data().iter().zip(x.data()) {
        assert!((p - v.exp() / z).abs() < 1e-12);
    }
    assert_eq!(g.value(s).argmax_rows(), x.argmax_rows());
}

#[test]
fn max_pool_matches_scan() {
    let x = random(&[64, 8], 8);
    let mut g = Graph::new();
    let xv = g.input(x.clone());
    let m = g.max_pool_rows(xv).unwrap();
    for c in 0..8 {
        let want = (0..64).map(|r| x.data()[r * 8 + c]).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(g.value(m).data()[c], want);
    }
}

#[test]
fn max_pool_ignores_row_order() {
    let x = random(&[10, 3], 9);
    let mut rows: Vec<Vec<f64>> = (0..10).map(|r| x.row(r).to_vec()).collect();
    rows.reverse();
    rows.swap(2, 7);
    let y = Tensor::from_rows(&rows).unwrap();
    let mut g = Graph::new();
    let (a, b) = (g.input(x), g.input(y));
    let (ma, mb) = (g.max_pool_rows(a).unwrap(), g.max_pool_rows(b).unwrap());
    assert_eq!(g.value(ma), g.value(mb));
}

#[test]
fn forward_is_bit_deterministic() {
    let run = || {
        let mut rng = voxport::seed::rng(1);
        let mut p = ParamStore::new();
        p.add_dense("a", 4, 6, &mut rng);
        let mut g = Graph::new();
        let x = g.input(random(&[5, 4], 2));
        let y = g.dense_named(&p, "a", x, Activation::Tanh).unwrap();
        let s = g.softmax(y, 1).unwrap();
        g.value(s).data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
}

#[test]
fn dropout_is_seeded_and_inverted() {
    let mut g = Graph::new();
    let x = g.input(Tensor::full([1000], 1.0));
    let a = g.dropout(x, 0.5, &mut voxport::seed::rng(3)).unwrap();
    let b = g.dropout(x, 0.5, &mut voxport::seed::rng(3)).unwrap();
    assert_eq!(g.value(a), g.value(b));
    assert!(g.value(a).data().iter().all(|&v| v == 0.0 || v == 2.0));
    let mean = g.value(a).data().iter().sum::<f64>() / 1000.0;
    assert!((mean - 1.0).abs() < 0.15);
}

#[test]
fn adam_zero_gradient_leaves_params() {
    let mut p = ParamStore::new();
    p.insert("w", random(&[3, 3], 1));
    let before = p.clone();
    let mut grads = GradMap::new();
    grads.insert("w".into(), Tensor::zeros([3, 3]));
    let mut opt = Adam::new(1e-2);
    for _ in 0..10 {
        opt.step(&mut p, &grads);
    }
    assert_eq!(p, before);
}

#[test]
fn adam_constant_gradient_step_is_lr_sign() {
    let mut p = ParamStore::new();
    p.insert("w", Tensor::vector(vec![0.0, 0.0]));
    let mut grads = GradMap::new();
    grads.insert("w".into(), Tensor::vector(vec![3.0, -0.25]));
    let mut opt = Adam::new(1e-2);
    let mut prev = p.get("w").unwrap().data().to_vec();
    for _ in 0..500 {
        opt.step(&mut p, &grads);
        let now = p.get("w").unwrap().data().to_vec();
        if opt.steps() == 500 {
            assert!((now[0] - prev[0] + 1e-2).abs() < 1e-6);
            assert!((now[1] - prev[1] - 1e-2).abs() < 1e-6);
        }
        prev = now;
    }
}

#[test]
fn adam_quadratic_bowl() {
    let mut p = ParamStore::new();
    p.insert("x", Tensor::vector(vec![4.0, -4.0]));
    let scales = Tensor::vector(vec![1.0, 1.0]);
    let loss_and_grad = |p: &ParamStore| {
        let mut g = Graph::new();
        let x = g.param(p, "x").unwrap();
        let sq = g.mul(x, x).unwrap();
        let k = g.input(scales.clone());
        let w = g.mul(sq, k).unwrap();
        let l = g.sum_all(w);
        (g.value(l).item().unwrap(), g.backward(l).unwrap())
    };
    let mut opt = Adam::new(0.05);
    let mut losses = Vec::new();
    for _ in 0..200 {
        let (l, grads) = loss_and_grad(&p);
        losses.push(l);
        opt.step(&mut p, &grads);
    }
    let (last, _) = loss_and_grad(&p);
    losses.push(last);
    assert!(losses[10..].windows(2).all(|w| w[1] <= w[0]), "{losses:?}");
    assert!(last < 1e-3, "{last}");
}

#[test]
fn checkpoint_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut p = ParamStore::new();
    p.add_dense("ldc.1.a", 14, 4, &mut voxport::seed::rng(1));
    let path = dir.path().join("m.ckpt");
    p.save(&path).unwrap();
    assert_eq!(ParamStore::load(&path).unwrap(), p);
    std::fs::write(&path, b"VXPT\x01\0\0\0").unwrap();
    assert!(ParamStore::load(&path).is_err());
    let missing = ParamStore::load(&dir.path().join("nope")).unwrap_err();
    assert!(missing.is_io());
}

#[test]
fn gather_and_concat_grad_check() {
    let mut p = ParamStore::new();
    p.insert("a", random(&[5, 3], 1));
    p.insert("b", random(&[5, 2], 2));
    let idx = Arc::new(vec![4, 4, 1, 0, 2, 2, 2]);
    let rep = grad_check(&p, GradCheckOptions { fraction: 1.0, ..Default::default() }, |g, p| {
        let a = g.param(p, "a")?;
        let b = g.param(p, "b")?;
        let c = g.concat(&[a, b])?;
        let c = g.gather_rows(c, idx.clone())?;
        let t = g.map(c, Activation::Tanh);
        let sq = g.mul(t, c)?;
        Ok(g.sum_all(sq))
    })
    .unwrap();
    assert!(rep.max_rel_error < 1e-6, "{rep:?}");
}

proptest! {
    #[test]
    fn softmax_slices_sum_to_one(v in prop::collection::vec(-50.0f64..50.0, 2..40), axis in 0usize..2) {
        let n = v.len() / 2 * 2;
        let x = Tensor::new([2, n / 2], v[..n].to_vec()).unwrap();
        let mut g = Graph::new();
        let xv = g.input(x);
        let s = g.softmax(xv, axis).unwrap();
        let sums = g.sum_axis(s, axis).unwrap();
        for &t in g.value(sums).data() {
            prop_assert!((t - 1.0).abs() < 1e-9);
        }
        prop_assert!(g.value(s).all_finite());
    }

    #[test]
    fn gates_stay_in_range(s in -700.0f64..700.0) {
        let y = Activation::Sigmoid.apply(s);
        prop_assert!((0.0..=1.0).contains(&y));
        let o = Activation::SaliencyGate.apply(s);
        prop_assert!((1.0..=2.0).contains(&o));
    }
}
