//! Gradient checks over every differentiable op and a small end-to-end
//! model, in 64-bit.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::error::Result;
use crate::gradcheck::{grad_check, GradCheckReport};
use crate::heads::{arcface_loss, bce_loss, new_uad_head, uad_forward, ArcFaceParams};
use crate::hilo::{hilo_attend, init_hilo, HiLoConfig};
use crate::model::{ModelConfig, Tap};
use crate::nn::{Bound, Init, ParamStore};
use crate::rng::SplitMix64;
use crate::swin::{encode, Layouts, SwinConfig};
use crate::tape::{PoolMode, Tape, Var};
use crate::tensor::Tensor;

/// Relative error every case must stay under.
pub const TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteCase {
    pub name: String,
    pub report: GradCheckReport,
}

impl SuiteCase {
    pub fn passed(&self) -> bool {
        self.report.max_rel_err <= TOLERANCE
    }
}

fn rand(shape: &[usize], rng: &mut SplitMix64, lo: f64, hi: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.uniform(lo, hi)).collect()).expect("sized")
}

/// Random magnitudes in `[0.2, 1]` with random sign, clear of ReLU's kink.
fn away_from_zero(shape: &[usize], rng: &mut SplitMix64) -> Tensor<f64> {
    let mut t = rand(shape, rng, 0.2, 1.0);
    for v in t.data_mut() {
        if rng.next_f64() < 0.5 {
            *v = -*v;
        }
    }
    t
}

/// Weighted sum with fixed random weights so every output coordinate
/// receives a distinct upstream gradient.
fn probe(tape: &mut Tape<f64>, y: Var, seed: u64) -> Result<Var> {
    let shape = tape.shape(y).to_vec();
    let w = rand(&shape, &mut SplitMix64::new(seed), -1.0, 1.0);
    let wv = tape.leaf(&w);
    let m = tape.mul(y, wv)?;
    Ok(tape.sum(m))
}

type CaseFn = fn(&mut SplitMix64) -> Result<GradCheckReport>;

fn check<F>(f: F, inputs: &[Tensor<f64>], max_coords: Option<usize>) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    grad_check(f, inputs, 1e-6, max_coords, 0)
}

/// The end-to-end loss is O(10) with s=32, so a 1e-6 step drowns small
/// coordinates in rounding error.
const E2E_STEP: f64 = 1e-4;

fn unary(rng: &mut SplitMix64, op: fn(&mut Tape<f64>, Var) -> Var) -> Result<GradCheckReport> {
    let x = away_from_zero(&[3, 5], rng);
    check(|t, v| { let y = op(t, v[0]); probe(t, y, 1) }, &[x], None)
}

fn binary(
    rng: &mut SplitMix64,
    op: fn(&mut Tape<f64>, Var, Var) -> Result<Var>,
) -> Result<GradCheckReport> {
    let a = rand(&[3, 4], rng, -1.0, 1.0);
    let b = rand(&[3, 4], rng, -1.0, 1.0);
    check(|t, v| { let y = op(t, v[0], v[1])?; probe(t, y, 2) }, &[a, b], None)
}

fn cases() -> Vec<(&'static str, CaseFn)> {
    vec![
        ("add", |r| binary(r, |t, a, b| t.add(a, b))),
        ("sub", |r| binary(r, |t, a, b| t.sub(a, b))),
        ("mul", |r| binary(r, |t, a, b| t.mul(a, b))),
        ("add_bcast", |r| {
            let a = rand(&[2, 3, 4], r, -1.0, 1.0);
            let b = rand(&[4], r, -1.0, 1.0);
            check(|t, v| { let y = t.add_bcast(v[0], v[1])?; probe(t, y, 3) }, &[a, b], None)
        }),
        ("scale", |r| unary(r, |t, x| t.scale(x, -1.7))),
        ("add_scalar", |r| unary(r, |t, x| t.add_scalar(x, 0.3))),
        ("matmul", |r| {
            let a = rand(&[3, 4], r, -1.0, 1.0);
            let b = rand(&[4, 2], r, -1.0, 1.0);
            check(|t, v| { let y = t.matmul(v[0], v[1])?; probe(t, y, 4) }, &[a, b], None)
        }),
        ("bmm", |r| {
            let a = rand(&[2, 3, 4], r, -1.0, 1.0);
            let b = rand(&[2, 4, 5], r, -1.0, 1.0);
            check(|t, v| { let y = t.bmm(v[0], v[1], false)?; probe(t, y, 5) }, &[a, b], None)
        }),
        ("bmm_transposed", |r| {
            let a = rand(&[2, 3, 4], r, -1.0, 1.0);
            let b = rand(&[2, 5, 4], r, -1.0, 1.0);
            check(|t, v| { let y = t.bmm(v[0], v[1], true)?; probe(t, y, 6) }, &[a, b], None)
        }),
        ("linear", |r| {
            let x = rand(&[2, 3, 4], r, -1.0, 1.0);
            let w = rand(&[4, 5], r, -1.0, 1.0);
            let b = rand(&[5], r, -1.0, 1.0);
            check(
                |t, v| { let y = t.linear(v[0], v[1], Some(v[2]))?; probe(t, y, 7) },
                &[x, w, b],
                None,
            )
        }),
        ("gather", |r| {
            let x = rand(&[6], r, -1.0, 1.0);
            let index: alloc::sync::Arc<[usize]> = vec![5, 0, 0, 3, 2, 5, 1, 5].into();
            check(
                |t, v| { let y = t.gather(v[0], index.clone(), &[2, 4])?; probe(t, y, 8) },
                &[x],
                None,
            )
        }),
        ("permute", |r| {
            let x = rand(&[2, 3, 4], r, -1.0, 1.0);
            check(|t, v| { let y = t.permute(v[0], &[2, 0, 1])?; probe(t, y, 9) }, &[x], None)
        }),
        ("reshape", |r| {
            let x = rand(&[2, 6], r, -1.0, 1.0);
            check(|t, v| { let y = t.reshape(v[0], &[3, 4])?; probe(t, y, 10) }, &[x], None)
        }),
        ("concat_last", |r| {
            let a = rand(&[2, 3, 2], r, -1.0, 1.0);
            let b = rand(&[2, 3, 4], r, -1.0, 1.0);
            check(|t, v| { let y = t.concat_last(v[0], v[1])?; probe(t, y, 11) }, &[a, b], None)
        }),
        ("layer_norm", |r| {
            let x = rand(&[3, 5], r, -2.0, 2.0);
            let g = rand(&[5], r, 0.5, 1.5);
            let b = rand(&[5], r, -0.5, 0.5);
            check(
                |t, v| { let y = t.layer_norm(v[0], v[1], v[2], 1e-5)?; probe(t, y, 12) },
                &[x, g, b],
                None,
            )
        }),
        ("softmax", |r| unary(r, |t, x| t.softmax(x))),
        ("gelu", |r| unary(r, |t, x| t.gelu(x))),
        ("relu", |r| unary(r, |t, x| t.relu(x))),
        ("sigmoid", |r| unary(r, |t, x| t.sigmoid(x))),
        ("l2_normalize", |r| unary(r, |t, x| t.l2_normalize(x, 1e-12))),
        ("conv2d", |r| {
            let x = rand(&[2, 5, 5, 3], r, -1.0, 1.0);
            let w = rand(&[3, 3, 3, 4], r, -1.0, 1.0);
            let b = rand(&[4], r, -1.0, 1.0);
            check(
                |t, v| { let y = t.conv2d(v[0], v[1], v[2], 1, 1)?; probe(t, y, 13) },
                &[x, w, b],
                None,
            )
        }),
        ("conv2d_strided", |r| {
            let x = rand(&[1, 8, 8, 3], r, -1.0, 1.0);
            let w = rand(&[4, 4, 3, 5], r, -1.0, 1.0);
            let b = rand(&[5], r, -1.0, 1.0);
            check(
                |t, v| { let y = t.conv2d(v[0], v[1], v[2], 4, 0)?; probe(t, y, 14) },
                &[x, w, b],
                None,
            )
        }),
        ("max_pool", |r| {
            let x = rand(&[2, 4, 4, 3], r, -1.0, 1.0);
            check(
                |t, v| { let y = t.pool2d(v[0], 2, PoolMode::Max)?; probe(t, y, 15) },
                &[x],
                None,
            )
        }),
        ("avg_pool", |r| {
            let x = rand(&[2, 4, 4, 3], r, -1.0, 1.0);
            check(
                |t, v| { let y = t.pool2d(v[0], 2, PoolMode::Avg)?; probe(t, y, 16) },
                &[x],
                None,
            )
        }),
        ("mean_axis", |r| {
            let x = rand(&[2, 3, 4], r, -1.0, 1.0);
            check(|t, v| { let y = t.mean_axis(v[0], 1)?; probe(t, y, 17) }, &[x], None)
        }),
        ("sum", |r| {
            let x = rand(&[2, 3], r, -1.0, 1.0);
            check(|t, v| Ok(t.sum(v[0])), &[x], None)
        }),
        ("mean", |r| {
            let x = rand(&[2, 3], r, -1.0, 1.0);
            check(|t, v| Ok(t.mean(v[0])), &[x], None)
        }),
        ("cross_entropy", |r| {
            let x = rand(&[3, 5], r, -2.0, 2.0);
            check(|t, v| t.cross_entropy(v[0], &[4, 0, 2]), &[x], None)
        }),
        ("bce", |r| {
            let x = rand(&[4], r, 0.05, 0.95);
            check(|t, v| bce_loss(t, v[0], &[1.0, 0.0, 0.0, 1.0]), &[x], None)
        }),
        ("arc_margin", |r| {
            let x = rand(&[3, 4], r, -0.9, 0.9);
            check(
                |t, v| { let y = t.arc_margin(v[0], &[1, 3, 0], 0.5)?; probe(t, y, 18) },
                &[x],
                None,
            )
        }),
        ("map_custom", |r| {
            unary(r, |t, x| t.map_custom(x, |v| v * v * v, |v| 3.0 * v * v))
        }),
        ("arcface_loss", |r| {
            let e = rand(&[3, 6], r, -1.0, 1.0);
            let w = rand(&[4, 6], r, -1.0, 1.0);
            let p = ArcFaceParams::new(4, 6);
            check(
                |t, v| {
                    let e = t.l2_normalize(v[0], 1e-12);
                    arcface_loss(t, e, v[1], &[0, 3, 1], &p)
                },
                &[e, w],
                None,
            )
        }),
        ("hilo", |r| {
            let cfg = HiLoConfig {
                channels: 8,
                total_heads: 4,
                hi_heads: 2,
                window: 2,
            };
            let mut store = ParamStore::new();
            init_hilo(&mut Init::new(&mut store, 3), "h", &cfg);
            let names: Vec<String> = store.iter().map(|(k, _)| k.to_string()).collect();
            let mut inputs: Vec<Tensor<f64>> = store.iter().map(|(_, t)| t.clone()).collect();
            inputs.push(rand(&[2, 4, 4, 8], r, -1.0, 1.0));
            check(
                |t, v| {
                    let p = Bound::from_pairs(names.iter().cloned().zip(v.iter().copied()));
                    let y = hilo_attend(t, &p, "h", *v.last().expect("input"), &cfg)?;
                    probe(t, y, 19)
                },
                &inputs,
                Some(400),
            )
        }),
        ("end_to_end", end_to_end),
    ]
}

/// Encoder with depths (1,1,2,1), the embedding head with ArcFace
/// (s=32, m=0.5) on the final map and a spoof head with BCE on the second
/// Stage-3 block.
fn end_to_end(rng: &mut SplitMix64) -> Result<GradCheckReport> {
    let model = ModelConfig {
        backbone: SwinConfig {
            image_size: 16,
            patch_size: 2,
            embed_dim: 4,
            depths: [1, 1, 2, 1],
            heads: [1, 2, 2, 4],
            window: 2,
            mlp_ratio: 2.0,
            use_relative_bias: true,
        },
        embed_dim: 8,
        hilo: HiLoConfig {
            channels: 16,
            total_heads: 4,
            hi_heads: 2,
            window: 2,
        },
        arcface_scale: 32.0,
        arcface_margin: 0.5,
    };
    let tap = Tap::Block(1);
    let head_cfg = model.uad_head(tap)?;
    let layouts = Layouts::new(&model.backbone)?;
    let mut store: ParamStore<f64> = model.init_frm_model(3, 11)?;
    store.merge(new_uad_head(&head_cfg, 12)?);
    // random non-zero biases and tables so every path carries gradient
    for (name, t) in store.iter_mut() {
        if name.ends_with(".bias") || name.contains("relative_position") {
            for v in t.data_mut() {
                *v = rng.uniform(-0.1, 0.1);
            }
        }
    }
    let names: Vec<String> = store.iter().map(|(k, _)| k.to_string()).collect();
    let mut inputs: Vec<Tensor<f64>> = store.iter().map(|(_, t)| t.clone()).collect();
    inputs.push(rand(&[2, 16, 16, 3], rng, 0.0, 1.0));
    let arc = model.arcface(3);
    grad_check(
        |t, v| {
            let p = Bound::from_pairs(names.iter().cloned().zip(v.iter().copied()));
            let feats = encode(t, &p, &model.backbone, &layouts, *v.last().expect("image"))?;
            let emb = crate::heads::frm_embed(t, &p, feats.final_map)?;
            let w = p.get("arcface.weight")?;
            let face = arcface_loss(t, emb, w, &[2, 0], &arc)?;
            let prob = uad_forward(t, &p, &head_cfg, feats.stage3_blocks[1])?;
            let spoof = bce_loss(t, prob, &[1.0, 0.0])?;
            t.add(face, spoof)
        },
        &inputs,
        E2E_STEP,
        Some(600),
        0,
    )
}

/// Names of every case, in run order.
pub fn case_names() -> Vec<&'static str> {
    cases().into_iter().map(|(n, _)| n).collect()
}

/// Runs every case with inputs drawn from `seed`.
pub fn run_suite(seed: u64) -> Result<Vec<SuiteCase>> {
    let mut rng = SplitMix64::new(seed);
    cases()
        .into_iter()
        .map(|(name, f)| {
            Ok(SuiteCase {
                name: name.to_string(),
                report: f(&mut rng)?,
            })
        })
        .collect()
}
