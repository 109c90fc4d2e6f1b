//! Task heads: face embedding with the additive angular margin loss, and
//! the HiLo + CNN live/spoof classifier.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilo::{hilo_attend, init_hilo, HiLoConfig};
use crate::nn::{linear, linear_params, Bound, Init, ParamStore, INIT_STD};
use crate::scalar::Real;
use crate::tape::{PoolMode, Tape, Var};

pub const FRM_PREFIX: &str = "frm.";
pub const ARCFACE_PREFIX: &str = "arcface.";
pub const UAD_PREFIX: &str = "uad.";

/// Clamp applied to predicted probabilities inside the BCE loss.
pub const BCE_EPS: f64 = 1e-7;
const NORM_EPS: f64 = 1e-12;

/// Embedding head: global average pool → linear → L2 normalize.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrmConfig {
    pub in_dim: usize,
    pub embed_dim: usize,
}

impl FrmConfig {
    pub fn param_count(&self) -> usize {
        linear_params(self.in_dim, self.embed_dim, true)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArcFaceParams {
    pub classes: usize,
    pub embed_dim: usize,
    pub scale: f64,
    pub margin: f64,
}

impl ArcFaceParams {
    pub fn new(classes: usize, embed_dim: usize) -> Self {
        Self {
            classes,
            embed_dim,
            scale: 32.0,
            margin: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.scale <= 0.0 || !(0.0..core::f64::consts::FRAC_PI_2).contains(&self.margin) {
            return Err(Error::InvalidConfig(format!(
                "arcface needs s > 0 and 0 <= m < pi/2 (s={}, m={})",
                self.scale, self.margin
            )));
        }
        if self.classes == 0 {
            return Err(Error::InvalidConfig(
                "arcface needs at least one class".into(),
            ));
        }
        Ok(())
    }

    /// Class-weight matrix size, `classes × embed_dim`.
    pub fn param_count(&self) -> usize {
        self.classes * self.embed_dim
    }
}

pub fn init_frm<T: Real>(init: &mut Init<'_, T>, cfg: &FrmConfig) {
    init.linear("frm.fc", cfg.in_dim, cfg.embed_dim, true, INIT_STD);
}

pub fn init_arcface<T: Real>(init: &mut Init<'_, T>, p: &ArcFaceParams) {
    init.trunc_normal("arcface.weight", &[p.classes, p.embed_dim], INIT_STD);
}

/// Unit-norm embeddings `[N×E]` from a final map `[N×h×w×C]`.
pub fn frm_embed<T: Real>(tape: &mut Tape<T>, p: &Bound, final_map: Var) -> Result<Var> {
    let s = tape.shape(final_map).to_vec();
    if s.len() != 4 {
        return Err(Error::InvalidShape {
            op: "frm_embed",
            shape: s,
            reason: "expected N×h×w×C",
        });
    }
    let flat = tape.reshape(final_map, &[s[0], s[1] * s[2], s[3]])?;
    let pooled = tape.mean_axis(flat, 1)?;
    let e = linear(tape, p, "frm.fc", pooled)?;
    Ok(tape.l2_normalize(e, T::cst(NORM_EPS)))
}

/// Cosine logits `⟨emb, Ŵ_j⟩` with row-normalized class weights.
pub fn cosine_logits<T: Real>(tape: &mut Tape<T>, emb: Var, weight: Var) -> Result<Var> {
    let wn = tape.l2_normalize(weight, T::cst(NORM_EPS));
    let wt = tape.permute(wn, &[1, 0])?;
    tape.matmul(emb, wt)
}

/// Mean additive-angular-margin softmax loss.
///
/// The labelled logit becomes `cos(θ_y + m)` (margin always applied),
/// every logit is scaled by `s`, and the result is the mean negative
/// log-softmax of the labelled entry.
pub fn arcface_loss<T: Real>(
    tape: &mut Tape<T>,
    emb: Var,
    weight: Var,
    labels: &[usize],
    params: &ArcFaceParams,
) -> Result<Var> {
    params.validate()?;
    let cos = cosine_logits(tape, emb, weight)?;
    let classes = tape.shape(cos)[1];
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::LabelOutOfRange {
            label: bad,
            classes,
        });
    }
    let margined = tape.arc_margin(cos, labels, T::cst(params.margin))?;
    let logits = tape.scale(margined, T::cst(params.scale));
    tape.cross_entropy(logits, labels)
}

/// Mean binary cross-entropy; label 1 = bona fide, 0 = spoof.
pub fn bce_loss<T: Real>(tape: &mut Tape<T>, pred: Var, labels: &[T]) -> Result<Var> {
    tape.bce(pred, labels, T::cst(BCE_EPS))
}

/// Geometry of a spoof head attached to one tap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UadHeadConfig {
    pub grid: [usize; 2],
    pub hilo: HiLoConfig,
    pub conv1: usize,
    pub conv2: usize,
    pub fc: usize,
    pub pool: usize,
}

impl UadHeadConfig {
    /// Head for a `grid×grid×channels` tap. The HiLo window and the max-pool
    /// fall back to 1 when the grid is not divisible by them.
    pub fn for_tap(grid: usize, channels: usize, hilo_template: HiLoConfig) -> Self {
        let hilo = HiLoConfig {
            channels,
            window: if grid % hilo_template.window == 0 {
                hilo_template.window
            } else {
                1
            },
            ..hilo_template
        };
        Self {
            grid: [grid, grid],
            hilo,
            conv1: 64,
            conv2: 32,
            fc: 128,
            pool: if grid % 2 == 0 { 2 } else { 1 },
        }
    }

    pub fn flat_dim(&self) -> usize {
        (self.grid[0] / self.pool) * (self.grid[1] / self.pool) * self.conv2
    }

    pub fn param_count(&self) -> usize {
        let c = self.hilo.channels;
        self.hilo.param_count()
            + 9 * c * self.conv1
            + self.conv1
            + 9 * self.conv1 * self.conv2
            + self.conv2
            + linear_params(self.flat_dim(), self.fc, true)
            + linear_params(self.fc, 1, true)
    }
}

/// Head weights under `uad.`; convolutions and dense layers use He-scaled
/// truncated normals.
pub fn init_uad<T: Real>(init: &mut Init<'_, T>, cfg: &UadHeadConfig) {
    let c = cfg.hilo.channels;
    init_hilo(init, "uad.hilo", &cfg.hilo);
    let he = |fan_in: usize| num_traits::Float::sqrt(2.0 / fan_in as f64);
    init.conv("uad.conv1", 3, c, cfg.conv1, he(9 * c));
    init.conv("uad.conv2", 3, cfg.conv1, cfg.conv2, he(9 * cfg.conv1));
    init.linear("uad.fc", cfg.flat_dim(), cfg.fc, true, he(cfg.flat_dim()));
    init.linear("uad.out", cfg.fc, 1, true, INIT_STD);
}

/// HiLo → conv3×3(64, ReLU) → conv3×3(32, ReLU) → max-pool → fc(128, ReLU)
/// → linear(1) → sigmoid. Returns `[N]` probabilities of bona fide.
pub fn uad_forward<T: Real>(
    tape: &mut Tape<T>,
    p: &Bound,
    cfg: &UadHeadConfig,
    feat: Var,
) -> Result<Var> {
    let logit = uad_logit(tape, p, cfg, feat)?;
    Ok(tape.sigmoid(logit))
}

/// Pre-sigmoid score `[N]`.
pub fn uad_logit<T: Real>(
    tape: &mut Tape<T>,
    p: &Bound,
    cfg: &UadHeadConfig,
    feat: Var,
) -> Result<Var> {
    let s = tape.shape(feat).to_vec();
    if s.len() != 4 || [s[1], s[2]] != cfg.grid || s[3] != cfg.hilo.channels {
        return Err(Error::ShapeMismatch {
            op: "uad_forward",
            lhs: s,
            rhs: alloc::vec![cfg.grid[0], cfg.grid[1], cfg.hilo.channels],
        });
    }
    let n = s[0];
    let x = hilo_attend(tape, p, "uad.hilo", feat, &cfg.hilo)?;
    let x = conv(tape, p, "uad.conv1", x)?;
    let x = tape.relu(x);
    let x = conv(tape, p, "uad.conv2", x)?;
    let x = tape.relu(x);
    let x = if cfg.pool > 1 {
        tape.pool2d(x, cfg.pool, PoolMode::Max)?
    } else {
        x
    };
    let x = tape.reshape(x, &[n, cfg.flat_dim()])?;
    let x = linear(tape, p, "uad.fc", x)?;
    let x = tape.relu(x);
    let x = linear(tape, p, "uad.out", x)?;
    tape.reshape(x, &[n])
}

fn conv<T: Real>(tape: &mut Tape<T>, p: &Bound, prefix: &str, x: Var) -> Result<Var> {
    let w = p.get(&format!("{prefix}.weight"))?;
    let b = p.get(&format!("{prefix}.bias"))?;
    tape.conv2d(x, w, b, 1, 1)
}

/// Fresh spoof-head weights.
pub fn new_uad_head<T: Real>(cfg: &UadHeadConfig, seed: u64) -> Result<ParamStore<T>> {
    cfg.hilo.validate()?;
    let mut store = ParamStore::new();
    init_uad(&mut Init::new(&mut store, seed), cfg);
    Ok(store)
}

/// Labels as reals for [`bce_loss`].
pub fn labels_as_real<T: Real>(labels: &[u8]) -> Vec<T> {
    labels.iter().map(|&l| T::cst(l as f64)).collect()
}
