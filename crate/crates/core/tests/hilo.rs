mod common;

use common::*;
use unispoof_core::gradcheck::grad_check;
use unispoof_core::hilo::{hilo_attend, init_hilo, HiLoConfig};
use unispoof_core::nn::{Bound, Init, ParamStore};
use unispoof_core::rng::SplitMix64;
use unispoof_core::{Error, Tape, Tensor};

#[test]
fn lo_only_with_unit_window_is_global_attention() {
    let cfg = HiLoConfig {
        channels: 8,
        total_heads: 2,
        hi_heads: 0,
        window: 1,
    };
    let store = hilo_params(&cfg, 3);
    let mut rng = SplitMix64::new(4);
    let x = rand_tensor(&[2, 4, 4, 8], &mut rng, 1.0);
    let got = run_hilo(&cfg, &store, &x);
    // plain global multi-head attention with separate q and kv projections
    let mut want = Vec::new();
    for img in x.data().chunks(16 * 8) {
        let t = token_rows(img, 8);
        let q = project_rows(&t, &store, "h.l_q", 8);
        let kv = project_rows(&t, &store, "h.l_kv", 16);
        let a = naive_mha(&q, &channel_slice(&kv, 0, 8), &channel_slice(&kv, 8, 8), 2, |_, _| true);
        want.extend(project_rows(&a, &store, "h.l_proj", 8).concat());
    }
    let err = max_abs_diff(&got, &want);
    assert!(err <= 1e-6, "{err}");
}

#[test]
fn hi_only_with_covering_window_is_global_attention() {
    let cfg = HiLoConfig {
        channels: 8,
        total_heads: 4,
        hi_heads: 4,
        window: 4,
    };
    let store = hilo_params(&cfg, 5);
    let mut rng = SplitMix64::new(6);
    let x = rand_tensor(&[2, 4, 4, 8], &mut rng, 1.0);
    let got = run_hilo(&cfg, &store, &x);
    let mut want = Vec::new();
    for img in x.data().chunks(16 * 8) {
        let qkv = project_rows(&token_rows(img, 8), &store, "h.h_qkv", 24);
        let a = naive_mha(
            &channel_slice(&qkv, 0, 8),
            &channel_slice(&qkv, 8, 8),
            &channel_slice(&qkv, 16, 8),
            4,
            |_, _| true,
        );
        want.extend(project_rows(&a, &store, "h.h_proj", 8).concat());
    }
    let err = max_abs_diff(&got, &want);
    assert!(err <= 1e-6, "{err}");
}

#[test]
fn mixed_split_matches_reference_with_hi_channels_first() {
    for (cfg, h, w) in [
        (HiLoConfig::desk(8), 4, 4),
        (HiLoConfig::desk(16), 4, 6),
        (HiLoConfig::paper(16), 6, 6),
        (
            HiLoConfig {
                channels: 12,
                total_heads: 3,
                hi_heads: 1,
                window: 3,
            },
            6,
            3,
        ),
    ] {
        let err = hilo_oracle_gap(cfg, 2, h, w, 11);
        assert!(err <= 1e-6, "{cfg:?}: {err}");
    }
}

#[test]
fn channel_split_sizes() {
    let c = HiLoConfig::paper(512);
    assert_eq!((c.head_dim(), c.hi_dim(), c.lo_dim()), (64, 256, 256));
    let c = HiLoConfig::desk(64);
    assert_eq!((c.head_dim(), c.hi_dim(), c.lo_dim()), (16, 32, 32));
    let mut store: ParamStore<f64> = ParamStore::new();
    init_hilo(&mut Init::new(&mut store, 0), "h", &c);
    assert_eq!(store.numel(), c.param_count());
    assert_eq!(store.get("h.h_proj.weight").unwrap().shape(), &[32, 32]);
    assert_eq!(store.get("h.l_kv.weight").unwrap().shape(), &[64, 64]);
}

#[test]
fn divisibility_errors() {
    let cfg = HiLoConfig::desk(8);
    let store = hilo_params(&cfg, 1);
    let mut tape = Tape::new();
    let p = store.bind(&mut tape, |_| false);
    let x = tape.constant(&[1, 3, 4, 8], vec![0.1; 96]).unwrap();
    assert!(matches!(
        hilo_attend(&mut tape, &p, "h", x, &cfg),
        Err(Error::NonDivisibleWindow { .. })
    ));
    let bad = HiLoConfig {
        total_heads: 3,
        ..cfg
    };
    let x = tape.constant(&[1, 4, 4, 8], vec![0.1; 128]).unwrap();
    assert!(matches!(
        hilo_attend(&mut tape, &p, "h", x, &bad),
        Err(Error::HeadDivisibility { .. })
    ));
}

#[test]
fn batch_permutation_is_equivariant() {
    let cfg = HiLoConfig::desk(8);
    let store = hilo_params(&cfg, 21);
    let mut rng = SplitMix64::new(22);
    let x = rand_tensor(&[3, 4, 4, 8], &mut rng, 1.0);
    let per = 128;
    let perm = [2usize, 0, 1];
    let xp: Vec<f64> = perm
        .iter()
        .flat_map(|&b| x.data()[b * per..(b + 1) * per].to_vec())
        .collect();
    let y = run_hilo(&cfg, &store, &x);
    let yp = run_hilo(&cfg, &store, &Tensor::new(&[3, 4, 4, 8], xp).unwrap());
    for (slot, &b) in perm.iter().enumerate() {
        assert_eq!(
            &yp[slot * per..(slot + 1) * per],
            &y[b * per..(b + 1) * per]
        );
    }
}

#[test]
fn gradient_through_both_paths() {
    let cfg = HiLoConfig::desk(8);
    let store = hilo_params(&cfg, 31);
    let names: Vec<String> = store.iter().map(|(n, _)| n.to_string()).collect();
    let mut inputs: Vec<Tensor<f64>> = store.iter().map(|(_, t)| t.clone()).collect();
    let mut rng = SplitMix64::new(32);
    inputs.push(rand_tensor(&[1, 4, 4, 8], &mut rng, 1.0));
    let probe = rand_tensor(&[1, 4, 4, 8], &mut rng, 1.0);
    let report = grad_check(
        |tape, vars| {
            let p = Bound::from_pairs(names.iter().cloned().zip(vars.iter().copied()));
            let y = hilo_attend(tape, &p, "h", *vars.last().unwrap(), &cfg)?;
            let pr = tape.leaf(&probe);
            let m = tape.mul(y, pr)?;
            Ok(tape.sum(m))
        },
        &inputs,
        1e-5,
        None,
        0,
    )
    .unwrap();
    assert!(report.max_rel_err <= 1e-4, "{report:?}");
}
