//! Hierarchical shifted-window transformer encoder.
//!
//! Four stages of transformer blocks over an N×h×w×C token map. Even
//! blocks attend inside regular windows, odd blocks inside windows of a
//! grid cyclically shifted by half a window. Stages are joined by 2×2
//! patch merging. The encoder exposes every Stage-3 block output and the
//! normalized final map.

mod config;
pub mod window;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

pub use config::{StageGeom, SwinConfig};
pub use window::{build_window_layout, WindowLayout};

use crate::attention::multi_head_attention;
use crate::error::{Error, Result};
use crate::nn::{
    layer_norm, linear, linear_params, narrow_last, Bound, Init, ParamStore, INIT_STD,
};
use crate::scalar::Real;
use crate::tape::{Tape, Var};

/// Additive logit for blocked pairs in shifted windows.
pub const MASK_NEG: f64 = -1e9;

pub const PREFIX: &str = "backbone.";

/// Encoder outputs at the head tap points.
#[derive(Debug, Clone, PartialEq)]
pub struct StageFeatures {
    /// One `N×h₃×w₃×C₃` map per Stage-3 block, in block order.
    pub stage3_blocks: Vec<Var>,
    /// Normalized `N×h₄×w₄×C₄` output of the last stage.
    pub final_map: Var,
}

fn block_prefix(stage: usize, block: usize) -> String {
    format!("backbone.layers.{stage}.blocks.{block}")
}

/// Fresh backbone weights (truncated normal σ = 0.02, zero biases and
/// relative-bias tables, unit layer-norm gains).
pub fn init_backbone<T: Real>(cfg: &SwinConfig, seed: u64) -> Result<ParamStore<T>> {
    cfg.validate()?;
    let mut store = ParamStore::new();
    let mut init = Init::new(&mut store, seed);
    let c0 = cfg.embed_dim;
    let patch = cfg.patch_size * cfg.patch_size * 3;
    init.linear("backbone.patch_embed.proj", patch, c0, true, INIT_STD);
    init.layer_norm("backbone.patch_embed.norm", c0);
    for (i, st) in cfg.stages().into_iter().enumerate() {
        let d = st.dim;
        let hidden = cfg.mlp_hidden(d);
        for j in 0..cfg.depths[i] {
            let p = block_prefix(i, j);
            init.layer_norm(&format!("{p}.norm1"), d);
            init.linear(&format!("{p}.attn.qkv"), d, 3 * d, true, INIT_STD);
            if cfg.use_relative_bias {
                let side = 2 * st.window - 1;
                init.zeros(
                    &format!("{p}.attn.relative_position_bias_table"),
                    &[side * side, st.heads],
                );
            }
            init.linear(&format!("{p}.attn.proj"), d, d, true, INIT_STD);
            init.layer_norm(&format!("{p}.norm2"), d);
            init.linear(&format!("{p}.mlp.fc1"), d, hidden, true, INIT_STD);
            init.linear(&format!("{p}.mlp.fc2"), hidden, d, true, INIT_STD);
        }
        if i < 3 {
            let p = format!("backbone.layers.{i}.downsample");
            init.layer_norm(&format!("{p}.norm"), 4 * d);
            init.linear(&format!("{p}.reduction"), 4 * d, 2 * d, false, INIT_STD);
        }
    }
    init.layer_norm("backbone.norm", cfg.stage_dim(3));
    Ok(store)
}

/// Exact backbone parameter count, computed from the configuration alone.
pub fn backbone_param_count(cfg: &SwinConfig) -> usize {
    let mut total = linear_params(cfg.patch_size * cfg.patch_size * 3, cfg.embed_dim, true);
    total += 2 * cfg.embed_dim;
    for (i, st) in cfg.stages().into_iter().enumerate() {
        let d = st.dim;
        let hidden = cfg.mlp_hidden(d);
        let rel = if cfg.use_relative_bias {
            (2 * st.window - 1) * (2 * st.window - 1) * st.heads
        } else {
            0
        };
        let block = 2 * d
            + linear_params(d, 3 * d, true)
            + rel
            + linear_params(d, d, true)
            + 2 * d
            + linear_params(d, hidden, true)
            + linear_params(hidden, d, true);
        total += cfg.depths[i] * block;
        if i < 3 {
            total += 2 * 4 * d + linear_params(4 * d, 2 * d, false);
        }
    }
    total + 2 * cfg.stage_dim(3)
}

/// Maps `[0, 1]` pixels to `[-1, 1]` before the patch projection.
fn center_pixels<T: Real>(tape: &mut Tape<T>, image: Var) -> Var {
    let two = T::cst(2.0);
    tape.map_custom(image, |v| v * two - T::one(), |_| two)
}

/// Splits each `p×p×3` patch into a row and projects it to `C′` channels.
pub fn patch_embed<T: Real>(
    tape: &mut Tape<T>,
    p: &Bound,
    image: Var,
    patch: usize,
) -> Result<Var> {
    let s = tape.shape(image).to_vec();
    if s.len() != 4 || s[3] != 3 {
        return Err(Error::InvalidShape {
            op: "patch_embed",
            shape: s,
            reason: "expected N×H×W×3",
        });
    }
    let (n, h, w) = (s[0], s[1], s[2]);
    if patch == 0 || h % patch != 0 || w % patch != 0 || h != w {
        return Err(Error::NonDivisibleImage { size: h, patch });
    }
    let (gh, gw) = (h / patch, w / patch);
    let plen = patch * patch * 3;
    let mut index = Vec::with_capacity(n * h * w * 3);
    for b in 0..n {
        for gy in 0..gh {
            for gx in 0..gw {
                for py in 0..patch {
                    for px in 0..patch {
                        let base = ((b * h + gy * patch + py) * w + gx * patch + px) * 3;
                        index.extend(base..base + 3);
                    }
                }
            }
        }
    }
    let patches = tape.gather(image, index.into(), &[n, gh, gw, plen])?;
    let proj = linear(tape, p, "backbone.patch_embed.proj", patches)?;
    layer_norm(tape, p, "backbone.patch_embed.norm", proj)
}

/// `[(2M−1)², H]` table → `[B·H, M², M²]` bias, ordered (window, head, q, k).
fn relative_bias_index(window: usize, heads: usize, batch_windows: usize) -> Vec<usize> {
    let n = window * window;
    let side = 2 * window - 1;
    let mut per_head = Vec::with_capacity(n * n);
    for q in 0..n {
        let (qy, qx) = (q / window, q % window);
        for k in 0..n {
            let (ky, kx) = (k / window, k % window);
            let dy = qy + window - 1 - ky;
            let dx = qx + window - 1 - kx;
            per_head.push(dy * side + dx);
        }
    }
    let mut index = Vec::with_capacity(batch_windows * heads * n * n);
    for _ in 0..batch_windows {
        for h in 0..heads {
            index.extend(per_head.iter().map(|&r| r * heads + h));
        }
    }
    index
}

/// Additive mask `[N·nW·H, M², M²]` for a shifted layout; `None` when unshifted.
pub fn shift_mask<T: Real>(layout: &WindowLayout, heads: usize, batch: usize) -> Option<Vec<T>> {
    let mask = layout.mask.as_ref()?;
    let n = layout.tokens_per_window();
    let nw = layout.num_windows();
    let neg = T::cst(MASK_NEG);
    let mut out = Vec::with_capacity(batch * nw * heads * n * n);
    for _ in 0..batch {
        for win in 0..nw {
            let m = &mask[win * n * n..(win + 1) * n * n];
            for _ in 0..heads {
                out.extend(m.iter().map(|&ok| if ok { T::zero() } else { neg }));
            }
        }
    }
    Some(out)
}

/// Window multi-head self-attention on an `N×h×w×D` map (no residual).
pub fn window_attention<T: Real>(
    tape: &mut Tape<T>,
    p: &Bound,
    prefix: &str,
    x: Var,
    layout: &WindowLayout,
    heads: usize,
) -> Result<Var> {
    let s = tape.shape(x).to_vec();
    let (n, d) = (s[0], s[3]);
    if heads == 0 || d % heads != 0 {
        return Err(Error::HeadDivisibility { heads, dim: d });
    }
    if [s[1], s[2]] != layout.grid {
        return Err(Error::ShapeMismatch {
            op: "window_attention",
            lhs: s,
            rhs: layout.grid.to_vec(),
        });
    }
    let tokens = layout.tokens_per_window();
    let bw = n * layout.num_windows();
    let xw = tape.gather(
        x,
        window::partition_index(layout, n, d).into(),
        &[bw, tokens, d],
    )?;
    let qkv = linear(tape, p, &format!("{prefix}.qkv"), xw)?;
    let q = narrow_last(tape, qkv, 0, d)?;
    let k = narrow_last(tape, qkv, d, d)?;
    let v = narrow_last(tape, qkv, 2 * d, d)?;

    let mut bias = None;
    if let Some(table) = p.try_get(&format!("{prefix}.relative_position_bias_table")) {
        let idx = relative_bias_index(layout.window, heads, bw);
        bias = Some(tape.gather(table, idx.into(), &[bw * heads, tokens, tokens])?);
    }
    if let Some(mask) = shift_mask::<T>(layout, heads, n) {
        let m = tape.constant(&[bw * heads, tokens, tokens], mask)?;
        bias = Some(match bias {
            Some(b) => tape.add(b, m)?,
            None => m,
        });
    }
    let attn = multi_head_attention(tape, q, k, v, heads, bias)?;
    let out = linear(tape, p, &format!("{prefix}.proj"), attn)?;
    tape.gather(out, window::reverse_index(layout, n, d).into(), &s)
}

/// Pre-norm transformer block: `x + WMSA(LN(x))`, then `+ FFN(LN(·))`.
pub fn swin_block<T: Real>(
    tape: &mut Tape<T>,
    p: &Bound,
    prefix: &str,
    x: Var,
    layout: &WindowLayout,
    heads: usize,
) -> Result<Var> {
    let xn = layer_norm(tape, p, &format!("{prefix}.norm1"), x)?;
    let a = window_attention(tape, p, &format!("{prefix}.attn"), xn, layout, heads)?;
    let x = tape.add(x, a)?;
    let y = layer_norm(tape, p, &format!("{prefix}.norm2"), x)?;
    let y = linear(tape, p, &format!("{prefix}.mlp.fc1"), y)?;
    let y = tape.gelu(y);
    let y = linear(tape, p, &format!("{prefix}.mlp.fc2"), y)?;
    tape.add(x, y)
}

/// Concatenates each 2×2 neighbourhood (4D channels), normalizes and
/// projects to 2D channels.
pub fn patch_merge<T: Real>(tape: &mut Tape<T>, p: &Bound, prefix: &str, x: Var) -> Result<Var> {
    let s = tape.shape(x).to_vec();
    let (n, h, w, d) = (s[0], s[1], s[2], s[3]);
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::OddGrid { grid: [h, w] });
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut index = Vec::with_capacity(n * h * w * d);
    for b in 0..n {
        for y in 0..oh {
            for xx in 0..ow {
                for (dy, dx) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                    let base = ((b * h + 2 * y + dy) * w + 2 * xx + dx) * d;
                    index.extend(base..base + d);
                }
            }
        }
    }
    let cat = tape.gather(x, index.into(), &[n, oh, ow, 4 * d])?;
    let normed = layer_norm(tape, p, &format!("{prefix}.norm"), cat)?;
    linear(tape, p, &format!("{prefix}.reduction"), normed)
}

/// Precomputed window layouts for every stage (regular, shifted).
#[derive(Debug, Clone)]
pub struct Layouts {
    stages: Vec<(WindowLayout, WindowLayout)>,
}

impl Layouts {
    pub fn new(cfg: &SwinConfig) -> Result<Self> {
        cfg.validate()?;
        let stages = cfg
            .stages()
            .into_iter()
            .map(|st| {
                Ok((
                    build_window_layout([st.grid, st.grid], st.window, false)?,
                    build_window_layout([st.grid, st.grid], st.window, st.shift > 0)?,
                ))
            })
            .collect::<Result<_>>()?;
        Ok(Self { stages })
    }

    /// Even blocks use the regular layout, odd blocks the shifted one.
    pub fn for_block(&self, stage: usize, block: usize) -> &WindowLayout {
        let (regular, shifted) = &self.stages[stage];
        if block % 2 == 0 {
            regular
        } else {
            shifted
        }
    }
}

/// Runs the full encoder on `image[N×H×W×3]`.
pub fn encode<T: Real>(
    tape: &mut Tape<T>,
    p: &Bound,
    cfg: &SwinConfig,
    layouts: &Layouts,
    image: Var,
) -> Result<StageFeatures> {
    let s = tape.shape(image);
    if s.len() != 4 || s[1] != cfg.image_size || s[2] != cfg.image_size {
        return Err(Error::InvalidShape {
            op: "encode",
            shape: s.to_vec(),
            reason: "image does not match the configured size",
        });
    }
    let image = center_pixels(tape, image);
    let mut x = patch_embed(tape, p, image, cfg.patch_size)?;
    let mut stage3 = Vec::with_capacity(cfg.depths[2]);
    for i in 0..4 {
        for j in 0..cfg.depths[i] {
            let layout = layouts.for_block(i, j);
            x = swin_block(tape, p, &block_prefix(i, j), x, layout, cfg.heads[i])?;
            if i == 2 {
                stage3.push(x);
            }
        }
        if i < 3 {
            x = patch_merge(tape, p, &format!("backbone.layers.{i}.downsample"), x)?;
        }
    }
    let final_map = layer_norm(tape, p, "backbone.norm", x)?;
    Ok(StageFeatures {
        stage3_blocks: stage3,
        final_map,
    })
}

/// Runs the encoder only up to Stage-3 block `upto` (inclusive) when the
/// later blocks are not needed; returns the tapped map.
pub fn encode_to_stage3_block<T: Real>(
    tape: &mut Tape<T>,
    p: &Bound,
    cfg: &SwinConfig,
    layouts: &Layouts,
    image: Var,
    upto: usize,
) -> Result<Var> {
    if upto >= cfg.depths[2] {
        return Err(Error::InvalidConfig(format!(
            "stage-3 block {upto} out of range (depth {})",
            cfg.depths[2]
        )));
    }
    let image = center_pixels(tape, image);
    let mut x = patch_embed(tape, p, image, cfg.patch_size)?;
    for i in 0..3 {
        let last = if i == 2 { upto + 1 } else { cfg.depths[i] };
        for j in 0..last {
            x = swin_block(
                tape,
                p,
                &block_prefix(i, j),
                x,
                layouts.for_block(i, j),
                cfg.heads[i],
            )?;
        }
        if i < 2 {
            x = patch_merge(tape, p, &format!("backbone.layers.{i}.downsample"), x)?;
        }
    }
    Ok(x)
}
