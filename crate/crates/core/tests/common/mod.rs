//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use unispoof_core::augment::{moire_synthesize, MoireSpec};
use unispoof_core::heads::{arcface_loss, bce_loss, ArcFaceParams};
use unispoof_core::hilo::{hilo_attend, init_hilo, HiLoConfig};
use unispoof_core::image::Image;
use unispoof_core::nn::{Init, ParamStore};
use unispoof_core::rng::SplitMix64;
use unispoof_core::{Tape, Tensor};

pub fn rand_tensor(shape: &[usize], rng: &mut SplitMix64, scale: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.uniform(-scale, scale)).collect()).unwrap()
}

/// `x · w + b` for a single row, `w` stored `[in, out]`.
pub fn affine(x: &[f64], w: &[f64], b: Option<&[f64]>, fout: usize) -> Vec<f64> {
    let fin = x.len();
    (0..fout)
        .map(|o| {
            let mut s = b.map_or(0.0, |b| b[o]);
            for i in 0..fin {
                s += x[i] * w[i * fout + o];
            }
            s
        })
        .collect()
}

/// Naive multi-head attention with a pair filter; rows are tokens.
pub fn naive_mha(
    q: &[Vec<f64>],
    k: &[Vec<f64>],
    v: &[Vec<f64>],
    heads: usize,
    allowed: impl Fn(usize, usize) -> bool,
) -> Vec<Vec<f64>> {
    let dim = q[0].len();
    let hd = dim / heads;
    let scale = 1.0 / (hd as f64).sqrt();
    let mut out = vec![vec![0.0; dim]; q.len()];
    for (i, qi) in q.iter().enumerate() {
        for h in 0..heads {
            let r = h * hd..(h + 1) * hd;
            let keys: Vec<usize> = (0..k.len()).filter(|&j| allowed(i, j)).collect();
            let logits: Vec<f64> = keys
                .iter()
                .map(|&j| {
                    qi[r.clone()]
                        .iter()
                        .zip(&k[j][r.clone()])
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
                        * scale
                })
                .collect();
            let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = logits.iter().map(|l| (l - mx).exp()).collect();
            let z: f64 = e.iter().sum();
            for (w, &j) in e.iter().zip(&keys) {
                for c in r.clone() {
                    out[i][c] += w / z * v[j][c];
                }
            }
        }
    }
    out
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn attn_params(d: usize, seed: u64, with_table: Option<(usize, usize)>) -> ParamStore<f64> {
    let mut rng = SplitMix64::new(seed);
    let mut store = ParamStore::new();
    store.insert("a.qkv.weight", rand_tensor(&[d, 3 * d], &mut rng, 0.5));
    store.insert("a.qkv.bias", rand_tensor(&[3 * d], &mut rng, 0.5));
    store.insert("a.proj.weight", rand_tensor(&[d, d], &mut rng, 0.5));
    store.insert("a.proj.bias", rand_tensor(&[d], &mut rng, 0.5));
    if let Some((window, heads)) = with_table {
        let side = 2 * window - 1;
        store.insert(
            "a.relative_position_bias_table",
            rand_tensor(&[side * side, heads], &mut rng, 0.5),
        );
    }
    store
}

/// Direct per-token evaluation of windowed attention for one image.
pub fn oracle_attention(
    x: &Tensor<f64>,
    store: &ParamStore<f64>,
    heads: usize,
    allowed: impl Fn(usize, usize) -> bool,
) -> Vec<f64> {
    let d = *x.shape().last().unwrap();
    let rows: Vec<&[f64]> = x.data().chunks(d).collect();
    let w = store.get("a.qkv.weight").unwrap().data();
    let b = store.get("a.qkv.bias").unwrap().data();
    let qkv: Vec<Vec<f64>> = rows.iter().map(|r| affine(r, w, Some(b), 3 * d)).collect();
    let q: Vec<Vec<f64>> = qkv.iter().map(|r| r[..d].to_vec()).collect();
    let k: Vec<Vec<f64>> = qkv.iter().map(|r| r[d..2 * d].to_vec()).collect();
    let v: Vec<Vec<f64>> = qkv.iter().map(|r| r[2 * d..].to_vec()).collect();
    let att = naive_mha(&q, &k, &v, heads, allowed);
    let pw = store.get("a.proj.weight").unwrap().data();
    let pb = store.get("a.proj.bias").unwrap().data();
    att.iter()
        .flat_map(|r| affine(r, pw, Some(pb), d))
        .collect()
}

pub fn hilo_params(cfg: &HiLoConfig, seed: u64) -> ParamStore<f64> {
    let mut store = ParamStore::new();
    init_hilo(&mut Init::new(&mut store, seed), "h", cfg);
    // re-draw at a larger scale so attention weights are far from uniform
    let mut rng = SplitMix64::new(seed ^ 0x55);
    let names: Vec<String> = store.iter().map(|(n, _)| n.to_string()).collect();
    for n in names {
        let shape = store.get(&n).unwrap().shape().to_vec();
        store.insert(n, rand_tensor(&shape, &mut rng, 0.6));
    }
    store
}

pub fn run_hilo(cfg: &HiLoConfig, store: &ParamStore<f64>, x: &Tensor<f64>) -> Vec<f64> {
    let mut tape = Tape::new();
    let p = store.bind(&mut tape, |_| false);
    let xv = tape.leaf(x);
    let y = hilo_attend(&mut tape, &p, "h", xv, cfg).unwrap();
    assert_eq!(tape.shape(y), x.shape());
    tape.value(y).to_vec()
}

pub fn token_rows(t: &[f64], d: usize) -> Vec<Vec<f64>> {
    t.chunks(d).map(|r| r.to_vec()).collect()
}

pub fn project_rows(xs: &[Vec<f64>], store: &ParamStore<f64>, name: &str, fout: usize) -> Vec<Vec<f64>> {
    let w = store.get(&format!("{name}.weight")).unwrap().data();
    let b = store.get(&format!("{name}.bias")).unwrap().data();
    xs.iter().map(|r| affine(r, w, Some(b), fout)).collect()
}

pub fn channel_slice(xs: &[Vec<f64>], start: usize, len: usize) -> Vec<Vec<f64>> {
    xs.iter().map(|r| r[start..start + len].to_vec()).collect()
}

/// Per-image reference: Hi-Fi attention restricted to s×s windows, Lo-Fi
/// queries against keys/values of the explicitly averaged map.
pub fn hilo_oracle(cfg: &HiLoConfig, store: &ParamStore<f64>, img: &[f64], h: usize, w: usize) -> Vec<f64> {
    let d = cfg.channels;
    let s = cfg.window;
    let (hd, ld) = (cfg.hi_dim(), cfg.lo_dim());
    let x = token_rows(img, d);
    let mut out = vec![vec![0.0; d]; h * w];
    if hd > 0 {
        let qkv = project_rows(&x, store, "h.h_qkv", 3 * hd);
        let win = |t: usize| ((t / w) / s, (t % w) / s);
        let a = naive_mha(
            &channel_slice(&qkv, 0, hd),
            &channel_slice(&qkv, hd, hd),
            &channel_slice(&qkv, 2 * hd, hd),
            cfg.hi_heads,
            |i, j| win(i) == win(j),
        );
        for (o, r) in out.iter_mut().zip(project_rows(&a, store, "h.h_proj", hd)) {
            o[..hd].copy_from_slice(&r);
        }
    }
    if ld > 0 {
        let q = project_rows(&x, store, "h.l_q", ld);
        let (ph, pw) = (h / s, w / s);
        let mut pooled = vec![vec![0.0; d]; ph * pw];
        for t in 0..h * w {
            let cell = ((t / w) / s) * pw + (t % w) / s;
            for c in 0..d {
                pooled[cell][c] += x[t][c] / (s * s) as f64;
            }
        }
        let kv = project_rows(&pooled, store, "h.l_kv", 2 * ld);
        let a = naive_mha(
            &q,
            &channel_slice(&kv, 0, ld),
            &channel_slice(&kv, ld, ld),
            cfg.lo_heads(),
            |_, _| true,
        );
        for (o, r) in out.iter_mut().zip(project_rows(&a, store, "h.l_proj", ld)) {
            o[hd..].copy_from_slice(&r);
        }
    }
    out.concat()
}

pub fn hilo_oracle_gap(cfg: HiLoConfig, n: usize, h: usize, w: usize, seed: u64) -> f64 {
    let store = hilo_params(&cfg, seed);
    let mut rng = SplitMix64::new(seed + 1);
    let x = rand_tensor(&[n, h, w, cfg.channels], &mut rng, 1.0);
    let got = run_hilo(&cfg, &store, &x);
    let per = h * w * cfg.channels;
    let want: Vec<f64> = (0..n)
        .flat_map(|b| hilo_oracle(&cfg, &store, &x.data()[b * per..(b + 1) * per], h, w))
        .collect();
    max_abs_diff(&got, &want)
}

pub fn arcface_value(emb: &Tensor<f64>, w: &Tensor<f64>, labels: &[usize], p: &ArcFaceParams) -> f64 {
    let mut tape = Tape::new();
    let e = tape.leaf(emb);
    let wv = tape.leaf(w);
    let l = arcface_loss(&mut tape, e, wv, labels, p).unwrap();
    tape.value(l)[0]
}

pub fn unit_rows(t: &Tensor<f64>) -> Tensor<f64> {
    let d = *t.shape().last().unwrap();
    let mut data = t.data().to_vec();
    for r in data.chunks_mut(d) {
        let n = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        r.iter_mut().for_each(|v| *v /= n);
    }
    Tensor::new(t.shape(), data).unwrap()
}

/// Eq.-style evaluation straight from cosines, with arccos and cos.
pub fn arcface_oracle(cos: &[Vec<f64>], labels: &[usize], s: f64, m: f64) -> f64 {
    let mut total = 0.0;
    for (row, &y) in cos.iter().zip(labels) {
        let theta = row[y].clamp(-1.0 + 1e-7, 1.0 - 1e-7).acos();
        let num = (s * (theta + m).cos()).exp();
        let rest: f64 = row
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != y)
            .map(|(_, c)| (s * c).exp())
            .sum();
        total += -(num / (num + rest)).ln();
    }
    total / labels.len() as f64
}

pub fn bce_value(pred: &[f64], labels: &[f64]) -> f64 {
    let mut tape = Tape::new();
    let p = tape.constant(&[pred.len()], pred.to_vec()).unwrap();
    let l = bce_loss(&mut tape, p, labels).unwrap();
    tape.value(l)[0]
}

/// Tries every midpoint threshold with plain counting loops.
pub fn brute_eer(genuine: &[f64], impostor: &[f64]) -> (f64, f64) {
    let mut all: Vec<f64> = genuine.iter().chain(impostor).copied().collect();
    all.sort_by(|a, b| a.partial_cmp(b).unwrap());
    all.dedup();
    let mut cands = Vec::new();
    if all.len() == 1 {
        cands.push(all[0]);
    }
    for i in 1..all.len() {
        cands.push((all[i - 1] + all[i]) / 2.0);
    }
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for &t in &cands {
        let mut frr = 0.0;
        for &g in genuine {
            if g < t {
                frr += 1.0;
            }
        }
        let mut far = 0.0;
        for &s in impostor {
            if s >= t {
                far += 1.0;
            }
        }
        frr /= genuine.len() as f64;
        far /= impostor.len() as f64;
        let gap = (far - frr).abs();
        // strict comparison keeps the lowest threshold among ties
        if gap < best.0 {
            best = (gap, (far + frr) / 2.0, t);
        }
    }
    (best.1, best.2)
}

pub fn noise_image(h: usize, w: usize, seed: u64) -> Image {
    let mut rng = SplitMix64::new(seed);
    Image::new(
        h,
        w,
        (0..h * w * 3).map(|_| rng.next_f64() as f32).collect(),
    )
    .unwrap()
}

pub fn in_range(img: &Image) -> bool {
    img.data.iter().all(|v| (0.0..=1.0).contains(v))
}

/// Power spectrum of a real plane by row then column DFTs.
pub fn power_spectrum(plane: &[f64], n: usize) -> Vec<f64> {
    use std::f64::consts::PI;
    let twiddle: Vec<(f64, f64)> = (0..n)
        .map(|k| {
            let a = -2.0 * PI * k as f64 / n as f64;
            (a.cos(), a.sin())
        })
        .collect();
    let dft = |input: &[(f64, f64)]| -> Vec<(f64, f64)> {
        (0..n)
            .map(|k| {
                input
                    .iter()
                    .enumerate()
                    .fold((0.0, 0.0), |(re, im), (t, &(a, b))| {
                        let (c, s) = twiddle[(k * t) % n];
                        (re + a * c - b * s, im + a * s + b * c)
                    })
            })
            .collect()
    };
    let mut rows = Vec::with_capacity(n * n);
    for r in plane.chunks(n) {
        let row: Vec<(f64, f64)> = r.iter().map(|&v| (v, 0.0)).collect();
        rows.extend(dft(&row));
    }
    let mut power = vec![0.0; n * n];
    for c in 0..n {
        let col: Vec<(f64, f64)> = (0..n).map(|r| rows[r * n + c]).collect();
        for (r, (re, im)) in dft(&col).into_iter().enumerate() {
            power[r * n + c] = re * re + im * im;
        }
    }
    power
}

/// Radial frequency (cycles per pixel) with the most power in the moiré
/// pattern laid over flat gray, averaged over `seeds` draws.
pub fn moire_radial_peak(n: usize, spec: &MoireSpec, seeds: u64) -> f64 {
    let img = Image::filled(n, n, 0.5);
    let signed = |k: usize| if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
    let mut radial = vec![0.0; n];
    for seed in 0..seeds {
        let out = moire_synthesize(&img, spec, seed);
        let diff: Vec<f64> = (0..n * n)
            .map(|i| (out.data[i * 3] - img.data[i * 3]) as f64)
            .collect();
        let power = power_spectrum(&diff, n);
        for ky in 0..n {
            for kx in 0..n {
                let bin = signed(ky).hypot(signed(kx)).round() as usize;
                if bin < n {
                    radial[bin] += power[ky * n + kx];
                }
            }
        }
    }
    let peak = (1..n).max_by(|&a, &b| radial[a].total_cmp(&radial[b])).unwrap();
    peak as f64 / n as f64
}
