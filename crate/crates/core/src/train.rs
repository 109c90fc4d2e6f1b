//! Training loops and evaluation drivers.
//!
//! All loops are single-threaded and deterministic: data order comes from
//! seeded shuffles and every weight initialization from a derived seed.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::heads::{
    arcface_loss, bce_loss, frm_embed, new_uad_head, uad_forward, UadHeadConfig,
};
use crate::image::{batch_tensor, Image};
use crate::metrics::{attack_report, MetricsReport, ScoreRecord};
use crate::model::{ModelConfig, Tap};
use crate::nn::{Bound, ParamStore};
use crate::optim::sgd_step;
use crate::rng::{derive_seed, derive_seed_str, SplitMix64};
use crate::swin::{encode, encode_to_stage3_block, Layouts, PREFIX};
use crate::synth::{Label, Sample, Split, VerificationPair};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch: usize,
    pub max_epochs: usize,
    /// Non-improving validation epochs tolerated before stopping.
    pub patience: usize,
    pub seed: u64,
    pub freeze_backbone: bool,
    pub tap: Tap,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            batch: 64,
            max_epochs: 20,
            patience: 5,
            seed: 0,
            freeze_backbone: true,
            tap: Tap::Block(5),
        }
    }
}

impl TrainConfig {
    /// Face-matching settings for the 64px desk model.
    pub fn desk_frm() -> Self {
        Self {
            lr: 1e-4,
            batch: 4,
            freeze_backbone: false,
            tap: Tap::Final,
            ..Self::default()
        }
    }

    /// Spoof-head settings for the 64px desk model.
    pub fn desk_uad() -> Self {
        Self {
            lr: 0.05,
            batch: 8,
            max_epochs: 150,
            patience: 30,
            ..Self::default()
        }
    }

    pub fn validate(&self, model: &ModelConfig) -> Result<()> {
        if !(self.lr > 0.0) || self.batch == 0 {
            return Err(Error::InvalidConfig(format!(
                "need lr > 0 and batch >= 1 (lr={}, batch={})",
                self.lr, self.batch
            )));
        }
        model.tap_shape(self.tap)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean minibatch loss over the epoch.
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct History {
    /// Training-set loss of the initial weights.
    pub initial_train_loss: f64,
    pub epochs: Vec<EpochStats>,
    /// Epoch whose weights were kept (0 = initial weights).
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl History {
    pub fn final_train_loss(&self) -> f64 {
        self.epochs
            .last()
            .map_or(self.initial_train_loss, |e| e.train_loss)
    }
}

/// Tracks the best validation loss and decides when to stop.
struct EarlyStop<T> {
    patience: usize,
    best_loss: f64,
    best_epoch: usize,
    best: T,
    waited: usize,
}

impl<T: Clone> EarlyStop<T> {
    fn new(patience: usize, initial_loss: f64, initial: &T) -> Self {
        Self {
            patience,
            best_loss: initial_loss,
            best_epoch: 0,
            best: initial.clone(),
            waited: 0,
        }
    }

    /// Records an epoch; returns true when training should stop.
    fn update(&mut self, epoch: usize, loss: f64, state: &T) -> bool {
        if loss < self.best_loss {
            self.best_loss = loss;
            self.best_epoch = epoch;
            self.best = state.clone();
            self.waited = 0;
            false
        } else {
            self.waited += 1;
            self.waited > self.patience
        }
    }
}

fn check_finite(loss: f64, epoch: usize) -> Result<f64> {
    if loss.is_finite() {
        Ok(loss)
    } else {
        Err(Error::Diverged { epoch })
    }
}

/// SHA-256 over names, shapes and little-endian values of every parameter
/// whose name starts with `prefix`.
pub fn params_digest(store: &ParamStore<f32>, prefix: &str) -> [u8; 32] {
    let mut h = Sha256::new();
    for (name, t) in store.iter().filter(|(n, _)| n.starts_with(prefix)) {
        h.update((name.len() as u64).to_le_bytes());
        h.update(name.as_bytes());
        h.update((t.shape().len() as u64).to_le_bytes());
        for &d in t.shape() {
            h.update((d as u64).to_le_bytes());
        }
        for v in t.data() {
            h.update(v.to_le_bytes());
        }
    }
    h.finalize().into()
}

pub fn hex_digest(bytes: &[u8; 32]) -> String {
    use core::fmt::Write;
    let mut s = String::with_capacity(64);
    for b in bytes {
        let _ = write!(s, "{b:02x}");
    }
    s
}

/// Result of face-embedding training.
#[derive(Debug, Clone)]
pub struct FrmRun {
    /// Backbone, `frm.*` and `arcface.*` weights (best epoch).
    pub params: ParamStore<f32>,
    /// Identity id of each ArcFace class.
    pub class_ids: Vec<usize>,
    pub history: History,
}

struct FrmData<'a> {
    images: Vec<&'a Image>,
    labels: Vec<usize>,
}

fn frm_split<'a>(samples: &'a [Sample], split: Split, class_of: &BTreeMap<usize, usize>) -> FrmData<'a> {
    let mut d = FrmData {
        images: Vec::new(),
        labels: Vec::new(),
    };
    for s in samples {
        if s.record.label == Label::Live && s.record.split == split {
            if let Some(&c) = class_of.get(&s.record.identity_id) {
                d.images.push(&s.image);
                d.labels.push(c);
            }
        }
    }
    d
}

fn frm_loss(
    tape: &mut Tape<f32>,
    bound: &Bound,
    model: &ModelConfig,
    layouts: &Layouts,
    classes: usize,
    images: &[&Image],
    labels: &[usize],
) -> Result<Var> {
    let x = batch_tensor::<f32>(images)?;
    let xv = tape.leaf(&x);
    let feats = encode(tape, bound, &model.backbone, layouts, xv)?;
    let emb = frm_embed(tape, bound, feats.final_map)?;
    let w = bound.get("arcface.weight")?;
    arcface_loss(tape, emb, w, labels, &model.arcface(classes))
}

fn frm_eval_loss(
    params: &ParamStore<f32>,
    model: &ModelConfig,
    layouts: &Layouts,
    classes: usize,
    data: &FrmData<'_>,
    batch: usize,
) -> Result<f64> {
    let mut total = 0.0;
    for idx in (0..data.images.len()).collect::<Vec<_>>().chunks(batch) {
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape, |_| false);
        let imgs: Vec<_> = idx.iter().map(|&i| data.images[i]).collect();
        let labels: Vec<_> = idx.iter().map(|&i| data.labels[i]).collect();
        let l = frm_loss(&mut tape, &bound, model, layouts, classes, &imgs, &labels)?;
        total += tape.value(l)[0] as f64 * idx.len() as f64;
    }
    Ok(total / data.images.len() as f64)
}

/// Trains backbone, embedding head and ArcFace weights on live training
/// images, early-stopping on the validation loss and restoring the best
/// weights.
pub fn train_frm(cfg: &TrainConfig, model: &ModelConfig, samples: &[Sample]) -> Result<FrmRun> {
    cfg.validate(model)?;
    let class_ids: Vec<usize> = {
        let mut ids: Vec<usize> = samples
            .iter()
            .filter(|s| s.record.label == Label::Live && s.record.split == Split::Train)
            .map(|s| s.record.identity_id)
            .collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    };
    if class_ids.len() < 2 {
        return Err(Error::TooFewIdentities(class_ids.len()));
    }
    let class_of: BTreeMap<usize, usize> =
        class_ids.iter().enumerate().map(|(c, &id)| (id, c)).collect();
    let train = frm_split(samples, Split::Train, &class_of);
    let val = frm_split(samples, Split::Val, &class_of);
    let classes = class_ids.len();
    let layouts = Layouts::new(&model.backbone)?;

    let mut params: ParamStore<f32> = model.init_frm_model(classes, cfg.seed)?;
    let initial = frm_eval_loss(&params, model, &layouts, classes, &train, cfg.batch)?;
    check_finite(initial, 0)?;
    let monitor = |p: &ParamStore<f32>, train_loss: f64| -> Result<f64> {
        if val.images.is_empty() {
            Ok(train_loss)
        } else {
            frm_eval_loss(p, model, &layouts, classes, &val, cfg.batch)
        }
    };
    let initial_monitor = monitor(&params, initial)?;
    let mut stop = EarlyStop::new(cfg.patience, initial_monitor, &params);
    let mut epochs = Vec::new();
    let mut stopped_early = false;
    let lr = cfg.lr as f32;
    let mut rng = SplitMix64::new(derive_seed_str(cfg.seed, "frm.order"));
    for epoch in 1..=cfg.max_epochs {
        let mut order: Vec<usize> = (0..train.images.len()).collect();
        rng.shuffle(&mut order);
        let mut sum = 0.0;
        for idx in order.chunks(cfg.batch) {
            let mut tape = Tape::new();
            let bound = params.bind(&mut tape, |_| true);
            let imgs: Vec<_> = idx.iter().map(|&i| train.images[i]).collect();
            let labels: Vec<_> = idx.iter().map(|&i| train.labels[i]).collect();
            let l = frm_loss(&mut tape, &bound, model, &layouts, classes, &imgs, &labels)?;
            let lv = check_finite(tape.value(l)[0] as f64, epoch)?;
            sum += lv * idx.len() as f64;
            tape.backward(l)?;
            params.collect_grads(&tape, &bound)?;
            sgd_step(params.iter_mut(), lr)?;
        }
        let train_loss = sum / train.images.len() as f64;
        let val_loss = if val.images.is_empty() {
            None
        } else {
            Some(check_finite(monitor(&params, train_loss)?, epoch)?)
        };
        epochs.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
        });
        if stop.update(epoch, val_loss.unwrap_or(train_loss), &params) {
            stopped_early = true;
            break;
        }
    }
    Ok(FrmRun {
        params: stop.best,
        class_ids,
        history: History {
            initial_train_loss: initial,
            epochs,
            best_epoch: stop.best_epoch,
            stopped_early,
        },
    })
}

/// Unit embeddings of `images`, computed in chunks of `batch`.
pub fn embed_images(
    params: &ParamStore<f32>,
    model: &ModelConfig,
    images: &[&Image],
    batch: usize,
) -> Result<Vec<Vec<f32>>> {
    let layouts = Layouts::new(&model.backbone)?;
    let mut out = Vec::with_capacity(images.len());
    for chunk in images.chunks(batch.max(1)) {
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape, |_| false);
        let x = batch_tensor::<f32>(chunk)?;
        let xv = tape.leaf(&x);
        let feats = encode(&mut tape, &bound, &model.backbone, &layouts, xv)?;
        let e = frm_embed(&mut tape, &bound, feats.final_map)?;
        out.extend(tape.value(e).chunks(model.embed_dim).map(|r| r.to_vec()));
    }
    Ok(out)
}

/// Cosine similarity of the two embeddings of each pair. Pair ids are
/// `<sample a>:<sample b>`, label 1 for genuine pairs.
pub fn verify(
    params: &ParamStore<f32>,
    model: &ModelConfig,
    samples: &[Sample],
    pairs: &[VerificationPair],
    batch: usize,
) -> Result<Vec<ScoreRecord>> {
    let mut needed: Vec<usize> = pairs.iter().flat_map(|p| [p.a, p.b]).collect();
    needed.sort_unstable();
    needed.dedup();
    let images: Vec<_> = needed.iter().map(|&i| &samples[i].image).collect();
    let emb = embed_images(params, model, &images, batch)?;
    let slot: BTreeMap<usize, usize> = needed.iter().enumerate().map(|(k, &i)| (i, k)).collect();
    Ok(pairs
        .iter()
        .map(|p| {
            let (a, b) = (&emb[slot[&p.a]], &emb[slot[&p.b]]);
            let dot: f64 = a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum();
            ScoreRecord {
                id: format!(
                    "{}:{}",
                    samples[p.a].record.sample_id, samples[p.b].record.sample_id
                ),
                score: dot.clamp(-1.0, 1.0),
                label: u8::from(p.genuine),
            }
        })
        .collect())
}

/// Tapped backbone features of a sample set, `[N×h×w×C]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TapFeatures {
    pub tap: Tap,
    pub features: Tensor<f32>,
}

impl TapFeatures {
    fn rows(&self, idx: &[usize]) -> Result<Tensor<f32>> {
        let s = self.features.shape();
        let per: usize = s[1..].iter().product();
        let mut data = Vec::with_capacity(idx.len() * per);
        for &i in idx {
            data.extend_from_slice(&self.features.data()[i * per..(i + 1) * per]);
        }
        Tensor::new(&[idx.len(), s[1], s[2], s[3]], data)
    }
}

/// Runs the backbone once over `images` and keeps the requested taps.
pub fn extract_features(
    backbone: &ParamStore<f32>,
    model: &ModelConfig,
    images: &[&Image],
    taps: &[Tap],
    batch: usize,
) -> Result<Vec<TapFeatures>> {
    let layouts = Layouts::new(&model.backbone)?;
    let mut data: Vec<Vec<f32>> = taps.iter().map(|_| Vec::new()).collect();
    let only_block = match taps {
        [Tap::Block(i)] => Some(*i),
        _ => None,
    };
    for chunk in images.chunks(batch.max(1)) {
        let mut tape = Tape::new();
        let bound = backbone.bind(&mut tape, |_| false);
        let x = batch_tensor::<f32>(chunk)?;
        let xv = tape.leaf(&x);
        if let Some(i) = only_block {
            let f = encode_to_stage3_block(&mut tape, &bound, &model.backbone, &layouts, xv, i)?;
            data[0].extend_from_slice(tape.value(f));
            continue;
        }
        let feats = encode(&mut tape, &bound, &model.backbone, &layouts, xv)?;
        for (k, tap) in taps.iter().enumerate() {
            let v = match *tap {
                Tap::Block(i) => *feats.stage3_blocks.get(i).ok_or_else(|| {
                    Error::InvalidConfig(format!("tap {i} out of range"))
                })?,
                Tap::Final => feats.final_map,
            };
            data[k].extend_from_slice(tape.value(v));
        }
    }
    taps.iter()
        .zip(data)
        .map(|(&tap, d)| {
            let (grid, ch) = model.tap_shape(tap)?;
            Ok(TapFeatures {
                tap,
                features: Tensor::new(&[images.len(), grid, grid, ch], d)?,
            })
        })
        .collect()
}

/// Result of spoof-head training.
#[derive(Debug, Clone)]
pub struct UadRun {
    pub tap: Tap,
    pub head: ParamStore<f32>,
    /// Backbone after training; unchanged when frozen.
    pub backbone: ParamStore<f32>,
    pub history: History,
    pub backbone_hash_before: String,
    pub backbone_hash_after: String,
    /// Bona fide probabilities on the test split.
    pub test_scores: Vec<ScoreRecord>,
    pub report: MetricsReport,
}

/// Sample indices and bona fide targets of one split.
fn uad_split(samples: &[Sample], split: Split) -> (Vec<usize>, Vec<f32>) {
    samples
        .iter()
        .enumerate()
        .filter(|(_, s)| s.record.split == split)
        .map(|(i, s)| (i, s.record.label.target() as f32))
        .unzip()
}

fn require_both_labels(targets: &[f32]) -> Result<()> {
    if !targets.contains(&1.0) {
        return Err(Error::SingleClass("training split has no bona fide samples"));
    }
    if !targets.contains(&0.0) {
        return Err(Error::SingleClass("training split has no spoof samples"));
    }
    Ok(())
}

/// Where a head batch gets its input map from.
enum HeadInput<'a> {
    Cached(&'a TapFeatures),
    Images(&'a [Sample]),
}

struct HeadTrainer<'a> {
    cfg: &'a TrainConfig,
    model: &'a ModelConfig,
    head_cfg: UadHeadConfig,
    layouts: Layouts,
    input: HeadInput<'a>,
}

impl HeadTrainer<'_> {
    /// Probabilities for a batch, with gradients flowing to `trainable`.
    fn forward(
        &self,
        tape: &mut Tape<f32>,
        params: &ParamStore<f32>,
        trainable: bool,
        idx: &[usize],
    ) -> Result<(Var, Bound)> {
        let bound = params.bind(tape, |_| trainable);
        let feat = match &self.input {
            HeadInput::Cached(f) => {
                let t = f.rows(idx)?;
                tape.leaf(&t)
            }
            HeadInput::Images(samples) => {
                let imgs: Vec<_> = idx.iter().map(|&i| &samples[i].image).collect();
                let x = batch_tensor::<f32>(&imgs)?;
                let xv = tape.leaf(&x);
                match self.cfg.tap {
                    Tap::Block(i) => encode_to_stage3_block(
                        tape,
                        &bound,
                        &self.model.backbone,
                        &self.layouts,
                        xv,
                        i,
                    )?,
                    Tap::Final => {
                        encode(tape, &bound, &self.model.backbone, &self.layouts, xv)?.final_map
                    }
                }
            }
        };
        let pred = uad_forward(tape, &bound, &self.head_cfg, feat)?;
        Ok((pred, bound))
    }
}

fn eval_probs(t: &HeadTrainer<'_>, params: &ParamStore<f32>, idx: &[usize]) -> Result<Vec<f32>> {
    let mut out = Vec::with_capacity(idx.len());
    for chunk in idx.chunks(t.cfg.batch) {
        let mut tape = Tape::new();
        let (p, _) = t.forward(&mut tape, params, false, chunk)?;
        out.extend_from_slice(tape.value(p));
    }
    Ok(out)
}

fn mean_bce(probs: &[f32], targets: &[f32]) -> f64 {
    let eps = crate::heads::BCE_EPS;
    probs
        .iter()
        .zip(targets)
        .map(|(&p, &y)| {
            let p = (p as f64).clamp(eps, 1.0 - eps);
            -(y as f64 * p.ln() + (1.0 - y as f64) * (1.0 - p).ln())
        })
        .sum::<f64>()
        / probs.len().max(1) as f64
}

/// Trains a spoof head at `cfg.tap` on top of `backbone`.
///
/// With `freeze_backbone` the backbone weights are never bound as
/// trainable and tapped features are computed once; otherwise the backbone
/// is fine-tuned jointly. `features`, when given, must hold the tap for
/// every sample in order.
pub fn train_uad(
    cfg: &TrainConfig,
    model: &ModelConfig,
    backbone: &ParamStore<f32>,
    samples: &[Sample],
    features: Option<&TapFeatures>,
) -> Result<UadRun> {
    cfg.validate(model)?;
    let head_cfg = model.uad_head(cfg.tap)?;
    let (train_idx, train_y) = uad_split(samples, Split::Train);
    require_both_labels(&train_y)?;
    let (val_idx, val_y) = uad_split(samples, Split::Val);
    let (test_idx, test_y) = uad_split(samples, Split::Test);

    let backbone = backbone.subset(PREFIX);
    let before = hex_digest(&params_digest(&backbone, PREFIX));

    let owned_features;
    let input = if cfg.freeze_backbone {
        let f = match features {
            Some(f) if f.tap == cfg.tap && f.features.shape()[0] == samples.len() => f,
            Some(_) => {
                return Err(Error::InvalidConfig(
                    "cached features do not match the tap or sample count".into(),
                ))
            }
            None => {
                let images: Vec<_> = samples.iter().map(|s| &s.image).collect();
                owned_features =
                    extract_features(&backbone, model, &images, &[cfg.tap], cfg.batch)?
                        .pop()
                        .expect("one tap requested");
                &owned_features
            }
        };
        HeadInput::Cached(f)
    } else {
        HeadInput::Images(samples)
    };
    let trainer = HeadTrainer {
        cfg,
        model,
        head_cfg,
        layouts: Layouts::new(&model.backbone)?,
        input,
    };

    // head first, then (when fine-tuning) the backbone
    let mut params: ParamStore<f32> =
        new_uad_head(&head_cfg, derive_seed(derive_seed_str(cfg.seed, "uad"), tap_code(cfg.tap)))?;
    if !cfg.freeze_backbone {
        params.merge(backbone.clone());
    }

    let initial = mean_bce(&eval_probs(&trainer, &params, &train_idx)?, &train_y);
    check_finite(initial, 0)?;
    let val_loss = |p: &ParamStore<f32>| -> Result<Option<f64>> {
        if val_idx.is_empty() {
            return Ok(None);
        }
        Ok(Some(mean_bce(&eval_probs(&trainer, p, &val_idx)?, &val_y)))
    };
    let mut stop = EarlyStop::new(cfg.patience, val_loss(&params)?.unwrap_or(initial), &params);
    let mut epochs = Vec::new();
    let mut stopped_early = false;
    let mut rng = SplitMix64::new(derive_seed(derive_seed_str(cfg.seed, "uad.order"), tap_code(cfg.tap)));
    let lr = cfg.lr as f32;
    for epoch in 1..=cfg.max_epochs {
        let mut order: Vec<usize> = (0..train_idx.len()).collect();
        rng.shuffle(&mut order);
        let mut sum = 0.0;
        for chunk in order.chunks(cfg.batch) {
            let idx: Vec<usize> = chunk.iter().map(|&k| train_idx[k]).collect();
            let y: Vec<f32> = chunk.iter().map(|&k| train_y[k]).collect();
            let mut tape = Tape::new();
            let (pred, bound) = trainer.forward(&mut tape, &params, true, &idx)?;
            let loss = bce_loss(&mut tape, pred, &y)?;
            let lv = check_finite(tape.value(loss)[0] as f64, epoch)?;
            sum += lv * idx.len() as f64;
            tape.backward(loss)?;
            params.collect_grads(&tape, &bound)?;
            sgd_step(params.iter_mut(), lr)?;
        }
        let train_loss = sum / train_idx.len() as f64;
        let vl = val_loss(&params)?;
        if let Some(v) = vl {
            check_finite(v, epoch)?;
        }
        epochs.push(EpochStats {
            epoch,
            train_loss,
            val_loss: vl,
        });
        if stop.update(epoch, vl.unwrap_or(train_loss), &params) {
            stopped_early = true;
            break;
        }
    }
    let params = stop.best;
    let head = params.subset(crate::heads::UAD_PREFIX);
    let backbone_after = if cfg.freeze_backbone {
        backbone
    } else {
        params.subset(PREFIX)
    };
    let after = hex_digest(&params_digest(&backbone_after, PREFIX));
    if cfg.freeze_backbone {
        assert_eq!(before, after, "frozen backbone changed during head training");
    }

    let eval_params = {
        let mut p = head.clone();
        if !cfg.freeze_backbone {
            p.merge(backbone_after.clone());
        }
        p
    };
    let probs = eval_probs(&trainer, &eval_params, &test_idx)?;
    let test_scores: Vec<ScoreRecord> = test_idx
        .iter()
        .zip(&probs)
        .zip(&test_y)
        .map(|((&i, &p), &y)| ScoreRecord {
            id: samples[i].record.sample_id.clone(),
            score: p as f64,
            label: y as u8,
        })
        .collect();
    let report = attack_report(&test_scores, 0.5)?;
    Ok(UadRun {
        tap: cfg.tap,
        head,
        backbone: backbone_after,
        history: History {
            initial_train_loss: initial,
            epochs,
            best_epoch: stop.best_epoch,
            stopped_early,
        },
        backbone_hash_before: before,
        backbone_hash_after: after,
        test_scores,
        report,
    })
}

fn tap_code(tap: Tap) -> u64 {
    match tap {
        Tap::Block(i) => i as u64,
        Tap::Final => u64::MAX,
    }
}

/// One row of a block sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub tap: Tap,
    pub best_epoch: usize,
    pub report: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    /// Highest test accuracy; the earliest tap wins ties.
    pub best_tap: Tap,
}

impl SweepReport {
    pub fn from_rows(rows: Vec<SweepRow>) -> Result<Self> {
        let best = rows
            .iter()
            .fold(None::<&SweepRow>, |best, r| match best {
                Some(b) if b.report.accuracy >= r.report.accuracy => Some(b),
                _ => Some(r),
            })
            .ok_or_else(|| Error::InvalidConfig("empty sweep".into()))?;
        let best_tap = best.tap;
        Ok(Self { rows, best_tap })
    }
}

/// One frozen-backbone head per Stage-3 block plus the final map, all with
/// the same hyperparameters. Features for all taps come from a single
/// backbone pass.
pub fn sweep_blocks(
    cfg: &TrainConfig,
    model: &ModelConfig,
    backbone: &ParamStore<f32>,
    samples: &[Sample],
) -> Result<SweepReport> {
    let taps = model.taps();
    let images: Vec<_> = samples.iter().map(|s| &s.image).collect();
    let feats = extract_features(&backbone.subset(PREFIX), model, &images, &taps, cfg.batch)?;
    let mut rows = Vec::with_capacity(taps.len());
    for f in &feats {
        let c = TrainConfig {
            tap: f.tap,
            freeze_backbone: true,
            ..*cfg
        };
        let run = train_uad(&c, model, backbone, samples, Some(f))?;
        rows.push(SweepRow {
            tap: f.tap,
            best_epoch: run.history.best_epoch,
            report: run.report,
        });
    }
    SweepReport::from_rows(rows)
}
