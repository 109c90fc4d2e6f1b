mod common;

use common::*;
use unispoof_core::gradcheck::grad_check;
use unispoof_core::heads::{
    arcface_loss, bce_loss, cosine_logits, frm_embed, init_frm, new_uad_head, uad_forward,
    ArcFaceParams, FrmConfig, UadHeadConfig,
};
use unispoof_core::hilo::HiLoConfig;
use unispoof_core::nn::{Bound, Init, ParamStore};
use unispoof_core::rng::SplitMix64;
use unispoof_core::{Error, Tape, Tensor};

#[test]
fn arcface_two_class_fixture_matches_direct_formula() {
    let emb = Tensor::new(&[1, 2], vec![1.0, 0.0]).unwrap();
    let w = Tensor::new(
        &[2, 2],
        vec![0.9, (1.0f64 - 0.81).sqrt(), 0.1, (1.0f64 - 0.01).sqrt()],
    )
    .unwrap();
    let p = ArcFaceParams::new(2, 2);
    let got = arcface_value(&emb, &w, &[0], &p);
    let want = arcface_oracle(&[vec![0.9, 0.1]], &[0], 32.0, 0.5);
    assert!((got - want).abs() <= 1e-9, "{got} vs {want}");
}

#[test]
fn zero_margin_unit_scale_is_cross_entropy() {
    let mut rng = SplitMix64::new(40);
    let p = ArcFaceParams {
        classes: 5,
        embed_dim: 6,
        scale: 1.0,
        margin: 0.0,
    };
    for _ in 0..50 {
        let emb = unit_rows(&rand_tensor(&[4, 6], &mut rng, 1.0));
        let w = rand_tensor(&[5, 6], &mut rng, 1.0);
        let labels: Vec<usize> = (0..4).map(|_| rng.below(5) as usize).collect();
        let got = arcface_value(&emb, &w, &labels, &p);
        let wn = unit_rows(&w);
        let mut want = 0.0;
        for (i, &y) in labels.iter().enumerate() {
            let logits: Vec<f64> = wn
                .data()
                .chunks(6)
                .map(|r| {
                    r.iter()
                        .zip(&emb.data()[i * 6..(i + 1) * 6])
                        .map(|(a, b)| a * b)
                        .sum()
                })
                .collect();
            let z: f64 = logits.iter().map(|l| l.exp()).sum();
            want += z.ln() - logits[y];
        }
        want /= 4.0;
        assert!((got - want).abs() <= 1e-7, "{got} vs {want}");
    }
}

#[test]
fn single_class_loss_is_zero() {
    let mut rng = SplitMix64::new(41);
    let emb = unit_rows(&rand_tensor(&[3, 4], &mut rng, 1.0));
    let w = rand_tensor(&[1, 4], &mut rng, 1.0);
    let got = arcface_value(&emb, &w, &[0, 0, 0], &ArcFaceParams::new(1, 4));
    assert!(got.abs() <= 1e-12, "{got}");
}

#[test]
fn loss_non_decreasing_in_margin_for_correct_samples() {
    let mut rng = SplitMix64::new(42);
    let mut fixtures = 0;
    while fixtures < 20 {
        let emb = unit_rows(&rand_tensor(&[1, 5], &mut rng, 1.0));
        let w = rand_tensor(&[4, 5], &mut rng, 1.0);
        let mut tape = Tape::new();
        let (e, wv) = (tape.leaf(&emb), tape.leaf(&w));
        let c = cosine_logits(&mut tape, e, wv).unwrap();
        let cos = tape.value(c).to_vec();
        let y = (0..4).max_by(|&a, &b| cos[a].total_cmp(&cos[b])).unwrap();
        fixtures += 1;
        let mut prev = f64::NEG_INFINITY;
        for k in 0..6 {
            let p = ArcFaceParams {
                margin: 0.1 * k as f64,
                ..ArcFaceParams::new(4, 5)
            };
            let l = arcface_value(&emb, &w, &[y], &p);
            assert!(l >= prev - 1e-12, "m={} {l} < {prev}", p.margin);
            prev = l;
        }
    }
}

#[test]
fn decision_invariant_to_embedding_scale() {
    let mut rng = SplitMix64::new(43);
    let raw = rand_tensor(&[3, 6], &mut rng, 1.0);
    let w = rand_tensor(&[4, 6], &mut rng, 1.0);
    let logits = |alpha: f64| {
        let mut tape = Tape::new();
        let x = tape
            .constant(&[3, 6], raw.data().iter().map(|v| v * alpha).collect())
            .unwrap();
        let e = tape.l2_normalize(x, 1e-12);
        let wv = tape.leaf(&w);
        let c = cosine_logits(&mut tape, e, wv).unwrap();
        tape.value(c).to_vec()
    };
    let (a, b) = (logits(1.0), logits(7.5));
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() <= 1e-12);
    }
}

#[test]
fn label_out_of_range() {
    let mut tape: Tape<f64> = Tape::new();
    let e = tape.constant(&[1, 2], vec![1.0, 0.0]).unwrap();
    let w = tape.constant(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
    assert_eq!(
        arcface_loss(&mut tape, e, w, &[2], &ArcFaceParams::new(2, 2)).unwrap_err(),
        Error::LabelOutOfRange {
            label: 2,
            classes: 2
        }
    );
}

#[test]
fn arcface_gradient() {
    let mut rng = SplitMix64::new(44);
    let emb = rand_tensor(&[3, 5], &mut rng, 1.0);
    let w = rand_tensor(&[4, 5], &mut rng, 1.0);
    let p = ArcFaceParams::new(4, 5);
    let report = grad_check(
        |tape, v| {
            let e = tape.l2_normalize(v[0], 1e-12);
            arcface_loss(tape, e, v[1], &[0, 3, 1], &p)
        },
        &[emb, w],
        1e-6,
        None,
        0,
    )
    .unwrap();
    assert!(report.max_rel_err <= 1e-5, "{report:?}");
}

#[test]
fn bce_identities() {
    assert!((bce_value(&[0.5, 0.5], &[1.0, 0.0]) - 2f64.ln()).abs() <= 1e-12);
    assert!(bce_value(&[1.0 - 1e-7], &[1.0]) < 1e-6);
    let pred = [0.2, 0.7, 0.95, 0.4];
    let labels = [1.0, 0.0, 1.0, 1.0];
    let each: f64 = pred
        .iter()
        .zip(&labels)
        .map(|(&p, &y)| bce_value(&[p], &[y]))
        .sum::<f64>()
        / 4.0;
    assert!((bce_value(&pred, &labels) - each).abs() <= 1e-12);
    let flip_p: Vec<f64> = pred.iter().map(|p| 1.0 - p).collect();
    let flip_y: Vec<f64> = labels.iter().map(|y| 1.0 - y).collect();
    assert!((bce_value(&pred, &labels) - bce_value(&flip_p, &flip_y)).abs() <= 1e-12);
    // saturated predictions stay finite
    assert!(bce_value(&[0.0, 1.0], &[1.0, 0.0]).is_finite());
}

#[test]
fn frm_embedding_is_unit_and_deterministic() {
    let cfg = FrmConfig {
        in_dim: 16,
        embed_dim: 8,
    };
    let mut store: ParamStore<f64> = ParamStore::new();
    init_frm(&mut Init::new(&mut store, 3), &cfg);
    assert_eq!(store.numel(), cfg.param_count());
    let mut rng = SplitMix64::new(45);
    let one = rand_tensor(&[1, 2, 2, 16], &mut rng, 1.0);
    let two = Tensor::new(&[2, 2, 2, 16], [one.data(), one.data()].concat()).unwrap();
    let mut tape = Tape::new();
    let p = store.bind(&mut tape, |_| false);
    let x = tape.leaf(&two);
    let e = frm_embed(&mut tape, &p, x).unwrap();
    assert_eq!(tape.shape(e), &[2, 8]);
    let v = tape.value(e);
    for r in v.chunks(8) {
        let n: f64 = r.iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!((n - 1.0).abs() <= 1e-6);
    }
    let cos: f64 = v[..8].iter().zip(&v[8..]).map(|(a, b)| a * b).sum();
    assert_eq!(v[..8], v[8..]);
    assert!((cos - 1.0).abs() <= 1e-12);
}

#[test]
fn frm_full_scale_shape() {
    let cfg = FrmConfig {
        in_dim: 1024,
        embed_dim: 1024,
    };
    let mut store: ParamStore<f32> = ParamStore::new();
    init_frm(&mut Init::new(&mut store, 1), &cfg);
    let mut tape = Tape::new();
    let p = store.bind(&mut tape, |_| false);
    let x = tape
        .constant(&[1, 7, 7, 1024], vec![0.01; 49 * 1024])
        .unwrap();
    let e = frm_embed(&mut tape, &p, x).unwrap();
    assert_eq!(tape.shape(e), &[1, 1024]);
}

#[test]
fn arcface_full_scale_count() {
    assert_eq!(ArcFaceParams::new(10_572, 1024).param_count(), 10_825_728);
}

#[test]
fn uad_full_scale_count_in_band_and_matches_allocation() {
    let cfg = UadHeadConfig::for_tap(14, 512, HiLoConfig::paper(512));
    let n = cfg.param_count();
    assert!((1_000_000..=1_500_000).contains(&n), "{n}");
    let store: ParamStore<f32> = new_uad_head(&cfg, 0).unwrap();
    assert_eq!(store.numel(), n);

    let mut tape = Tape::new();
    let p = store.bind(&mut tape, |_| false);
    let x = tape
        .constant(&[2, 14, 14, 512], vec![0.01; 2 * 196 * 512])
        .unwrap();
    let y = uad_forward(&mut tape, &p, &cfg, x).unwrap();
    assert_eq!(tape.shape(y), &[2]);
}

#[test]
fn uad_final_tap_falls_back_to_unit_window() {
    let cfg = UadHeadConfig::for_tap(7, 1024, HiLoConfig::paper(1024));
    assert_eq!((cfg.hilo.window, cfg.pool), (1, 1));
    let store: ParamStore<f32> = new_uad_head(&cfg, 0).unwrap();
    let mut tape = Tape::new();
    let p = store.bind(&mut tape, |_| false);
    let x = tape
        .constant(&[1, 7, 7, 1024], vec![0.01; 49 * 1024])
        .unwrap();
    let y = uad_forward(&mut tape, &p, &cfg, x).unwrap();
    assert_eq!(tape.shape(y), &[1]);
}

fn desk_head() -> (UadHeadConfig, ParamStore<f64>) {
    let cfg = UadHeadConfig::for_tap(4, 64, HiLoConfig::desk(64));
    let store = new_uad_head(&cfg, 9).unwrap();
    (cfg, store)
}

#[test]
fn uad_desk_forward_range_determinism_and_equivariance() {
    let (cfg, store) = desk_head();
    let mut rng = SplitMix64::new(46);
    let x = rand_tensor(&[3, 4, 4, 64], &mut rng, 3.0);
    let run = |x: &Tensor<f64>| {
        let mut tape = Tape::new();
        let p = store.bind(&mut tape, |_| false);
        let xv = tape.leaf(x);
        let y = uad_forward(&mut tape, &p, &cfg, xv).unwrap();
        tape.value(y).to_vec()
    };
    let y = run(&x);
    assert!(y.iter().all(|&v| v > 0.0 && v < 1.0));
    assert_eq!(y, run(&x));
    let per = 16 * 64;
    let swapped: Vec<f64> = [2usize, 1, 0]
        .iter()
        .flat_map(|&b| x.data()[b * per..(b + 1) * per].to_vec())
        .collect();
    let ys = run(&Tensor::new(&[3, 4, 4, 64], swapped).unwrap());
    assert_eq!(ys, vec![y[2], y[1], y[0]]);
}

#[test]
fn uad_desk_gradient() {
    let (cfg, store) = desk_head();
    let names: Vec<String> = store.iter().map(|(n, _)| n.to_string()).collect();
    let mut inputs: Vec<Tensor<f64>> = store.iter().map(|(_, t)| t.clone()).collect();
    let mut rng = SplitMix64::new(47);
    inputs.push(rand_tensor(&[2, 4, 4, 64], &mut rng, 1.0));
    let report = grad_check(
        |tape, v| {
            let p = Bound::from_pairs(names.iter().cloned().zip(v.iter().copied()));
            let y = uad_forward(tape, &p, &cfg, *v.last().unwrap())?;
            bce_loss(tape, y, &[1.0, 0.0])
        },
        &inputs,
        1e-5,
        Some(600),
        1,
    )
    .unwrap();
    assert!(report.max_rel_err <= 1e-4, "{report:?}");
}

#[test]
fn uad_rejects_wrong_tap_shape() {
    let (cfg, store) = desk_head();
    let mut tape = Tape::new();
    let p = store.bind(&mut tape, |_| false);
    let x = tape.constant(&[1, 4, 4, 32], vec![0.0; 512]).unwrap();
    assert!(matches!(
        uad_forward(&mut tape, &p, &cfg, x),
        Err(Error::ShapeMismatch { .. })
    ));
}
