//! `unispoof` subcommands.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use unispoof_core::augment::{color_jitter, moire_synthesize, sdsc, spsc};
use unispoof_core::gradsuite::{case_names, run_suite, TOLERANCE};
use unispoof_core::heads::FRM_PREFIX;
use unispoof_core::image::Mask;
use unispoof_core::metrics::{attack_report, verification_report, MetricsReport, ScoreRecord};
use unispoof_core::model::{count_params, ModelConfig, ParamTable, Tap};
use unispoof_core::nn::ParamStore;
use unispoof_core::swin::PREFIX;
use unispoof_core::synth::{build_dataset, sample_pairs, Label, Sample, SampleRecord, SpoofKind, Split};
use unispoof_core::train::{
    extract_features, hex_digest, params_digest, train_frm, train_uad, verify, History,
    SweepReport, SweepRow, TrainConfig,
};

use crate::checkpoint::Checkpoint;
use crate::config::{default_out, ModelChoice, RunConfig};
use crate::dataset::{read_dataset, write_dataset};
use crate::error::{CliError, Result};
use crate::imageio::{read_image, read_mask, write_image};
use crate::report::{write_json, write_report};
use crate::scores::{read_scores, write_scores};
use crate::threads::{worker_pool, Workers};

#[derive(Parser, Debug)]
#[command(
    name = "unispoof",
    version,
    about = "Face matching and unified spoof detection on a shifted-window transformer"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every subcommand.
#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// JSON run configuration; flags override its values
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Global seed for data, initialization and shuffling [default: config value, else 0]
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// Run directory [default: runs/<subcommand>]
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Model preset, swin-desk or swin-base-paper [default: config value, else swin-desk]
    #[arg(long, value_name = "NAME")]
    pub preset: Option<String>,
    /// Leave the creation time out of reports
    #[arg(long)]
    pub no_timestamp: bool,
}

/// Spoof-head placement flags.
#[derive(Args, Debug, Clone, Default)]
pub struct HeadFlags {
    /// Stage-3 block index or `final` [default: config value, else 5]
    #[arg(long, value_name = "{0..17|final}")]
    pub tap: Option<Tap>,
    /// Keep backbone weights fixed while training the head [default: config value, else true]
    #[arg(long, value_name = "BOOL")]
    pub freeze: Option<bool>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Render the synthetic dataset with its spoofs, masks and manifest
    GenData {
        #[command(flatten)]
        common: Common,
    },
    /// Apply one spoof augmentation to an image
    Augment {
        #[command(flatten)]
        common: Common,
        /// Input image (.ppm or .png)
        #[arg(long, value_name = "PATH")]
        input: PathBuf,
        /// Face-region mask for sdsc (.pgm or .png) [default: centered ellipse]
        #[arg(long, value_name = "PATH")]
        mask: Option<PathBuf>,
        /// Augmentation to apply
        #[arg(long, value_enum, default_value_t = AugmentKind::Spsc)]
        kind: AugmentKind,
    },
    /// Train backbone, embedding head and ArcFace weights on live images
    TrainFrm {
        #[command(flatten)]
        common: Common,
        /// Dataset directory from gen-data [default: render in memory from the config]
        #[arg(long, value_name = "DIR")]
        data: Option<PathBuf>,
    },
    /// Train a spoof head on a tapped backbone block
    TrainUad {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        head: HeadFlags,
        /// Checkpoint from train-frm
        #[arg(long, value_name = "PATH")]
        backbone: PathBuf,
        /// Dataset directory from gen-data [default: render in memory from the config]
        #[arg(long, value_name = "DIR")]
        data: Option<PathBuf>,
    },
    /// Train one frozen-backbone spoof head per Stage-3 block and the final map
    SweepBlocks {
        #[command(flatten)]
        common: Common,
        /// Checkpoint from train-frm
        #[arg(long, value_name = "PATH")]
        backbone: PathBuf,
        /// Dataset directory from gen-data [default: render in memory from the config]
        #[arg(long, value_name = "DIR")]
        data: Option<PathBuf>,
    },
    /// Score genuine and impostor test pairs by embedding cosine similarity
    Verify {
        #[command(flatten)]
        common: Common,
        /// Checkpoint from train-frm
        #[arg(long, value_name = "PATH")]
        checkpoint: PathBuf,
        /// Dataset directory from gen-data [default: render in memory from the config]
        #[arg(long, value_name = "DIR")]
        data: Option<PathBuf>,
    },
    /// Compute metrics from a score file
    Eval {
        #[command(flatten)]
        common: Common,
        /// CSV with header pair_or_sample_id,score,label
        #[arg(long, value_name = "PATH")]
        scores: PathBuf,
        /// Score semantics
        #[arg(long, value_enum, default_value_t = EvalKind::Attack)]
        kind: EvalKind,
        /// Bona fide decision threshold for attack scores
        #[arg(long, value_name = "T", default_value_t = 0.5)]
        threshold: f64,
    },
    /// Finite-difference gradient checks in 64-bit
    Gradcheck {
        #[command(flatten)]
        common: Common,
        /// Run every case
        #[arg(long, conflicts_with = "case")]
        all: bool,
        /// Run only the named case, repeatable [default: none]
        #[arg(long, value_name = "NAME")]
        case: Vec<String>,
    },
    /// Per-component parameter counts, computed from the configuration
    CountParams {
        #[command(flatten)]
        common: Common,
        /// ArcFace classes
        #[arg(long, value_name = "N", default_value_t = 10_572)]
        classes: usize,
        /// Spoof-head tap used for the head count
        #[arg(long, value_name = "{0..17|final}", default_value = "5")]
        tap: Tap,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum AugmentKind {
    Spsc,
    Sdsc,
    Jitter,
    Moire,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalKind {
    Attack,
    Verification,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::GenData { .. } => "gen-data",
            Command::Augment { .. } => "augment",
            Command::TrainFrm { .. } => "train-frm",
            Command::TrainUad { .. } => "train-uad",
            Command::SweepBlocks { .. } => "sweep-blocks",
            Command::Verify { .. } => "verify",
            Command::Eval { .. } => "eval",
            Command::Gradcheck { .. } => "gradcheck",
            Command::CountParams { .. } => "count-params",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::GenData { common }
            | Command::Augment { common, .. }
            | Command::TrainFrm { common, .. }
            | Command::TrainUad { common, .. }
            | Command::SweepBlocks { common, .. }
            | Command::Verify { common, .. }
            | Command::Eval { common, .. }
            | Command::Gradcheck { common, .. }
            | Command::CountParams { common, .. } => common,
        }
    }
}

/// Parses `args` and runs the subcommand. Returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Everything a subcommand needs after flags and config are merged.
struct Ctx {
    command: &'static str,
    cfg: RunConfig,
    model: ModelConfig,
    out: PathBuf,
    timestamp: bool,
}

impl Ctx {
    fn new(cmd: &Command, head: Option<&HeadFlags>) -> Result<Self> {
        let common = cmd.common();
        let mut cfg = match &common.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = common.seed {
            cfg.seed = seed;
        }
        cfg = cfg.clone().with_seed(cfg.seed);
        if let Some(name) = &common.preset {
            cfg.model = ModelChoice::Preset(name.clone());
        }
        if let Some(h) = head {
            if let Some(tap) = h.tap {
                cfg.uad.tap = tap;
            }
            if let Some(f) = h.freeze {
                cfg.uad.freeze_backbone = f;
            }
        }
        let model = cfg.model.resolve()?;
        let out = common.out.clone().unwrap_or_else(|| default_out(cmd.name()));
        Ok(Self {
            command: cmd.name(),
            cfg,
            model,
            out,
            timestamp: !common.no_timestamp,
        })
    }

    /// Full validation, for commands that build data or train.
    fn validate(&self) -> Result<()> {
        self.cfg.validate().map(|_| ())
    }

    fn open_out(&self) -> Result<()> {
        fs::create_dir_all(&self.out).map_err(|e| CliError::io(&self.out, e))?;
        write_json(&self.out.join("config.json"), &self.cfg.resolved()?)
    }

    fn report<T: Serialize>(&self, result: &T) -> Result<PathBuf> {
        write_report(&self.out, self.command, &self.cfg, self.timestamp, result)
    }

    fn samples(&self, data: Option<&Path>) -> Result<Vec<Sample>> {
        let samples = match data {
            Some(dir) => read_dataset(dir)?,
            None => build_dataset(&self.cfg.dataset, &self.cfg.augment)?,
        };
        let want = self.model.backbone.image_size;
        if let Some(s) = samples.iter().find(|s| s.image.h != want || s.image.w != want) {
            return Err(CliError::Usage(format!(
                "sample {} is {}x{}, the model expects {want}x{want}",
                s.record.sample_id, s.image.h, s.image.w
            )));
        }
        Ok(samples)
    }
}

pub fn run(cmd: Command) -> Result<()> {
    match &cmd {
        Command::GenData { .. } => gen_data(&Ctx::new(&cmd, None)?),
        Command::Augment {
            input, mask, kind, ..
        } => augment(&Ctx::new(&cmd, None)?, input, mask.as_deref(), *kind),
        Command::TrainFrm { data, .. } => train_frm_cmd(&Ctx::new(&cmd, None)?, data.as_deref()),
        Command::TrainUad {
            head,
            backbone,
            data,
            ..
        } => train_uad_cmd(&Ctx::new(&cmd, Some(head))?, backbone, data.as_deref()),
        Command::SweepBlocks { backbone, data, .. } => {
            sweep_cmd(&Ctx::new(&cmd, None)?, backbone, data.as_deref())
        }
        Command::Verify {
            checkpoint, data, ..
        } => verify_cmd(&Ctx::new(&cmd, None)?, checkpoint, data.as_deref()),
        Command::Eval {
            scores,
            kind,
            threshold,
            ..
        } => eval_cmd(&Ctx::new(&cmd, None)?, scores, *kind, *threshold),
        Command::Gradcheck { all, case, .. } => gradcheck_cmd(&Ctx::new(&cmd, None)?, *all, case),
        Command::CountParams { classes, tap, .. } => {
            count_params_cmd(&Ctx::new(&cmd, None)?, *classes, *tap)
        }
    }
}

#[derive(Serialize)]
struct SplitCounts {
    split: Split,
    live: usize,
    spsc: usize,
    sdsc: usize,
    identities: usize,
}

fn split_counts(records: &[SampleRecord]) -> Vec<SplitCounts> {
    [Split::Train, Split::Val, Split::Test]
        .into_iter()
        .map(|split| {
            let rows: Vec<_> = records.iter().filter(|r| r.split == split).collect();
            let kind = |k| rows.iter().filter(|r| r.spoof_kind == k).count();
            let mut ids: Vec<usize> = rows.iter().map(|r| r.identity_id).collect();
            ids.sort_unstable();
            ids.dedup();
            SplitCounts {
                split,
                live: rows.iter().filter(|r| r.label == Label::Live).count(),
                spsc: kind(SpoofKind::Spsc),
                sdsc: kind(SpoofKind::Sdsc),
                identities: ids.len(),
            }
        })
        .collect()
}

fn gen_data(ctx: &Ctx) -> Result<()> {
    ctx.validate()?;
    ctx.open_out()?;
    let samples = write_dataset(&ctx.out, &ctx.cfg.dataset, &ctx.cfg.augment)?;
    let records: Vec<_> = samples.into_iter().map(|s| s.record).collect();
    let counts = split_counts(&records);
    for c in &counts {
        println!(
            "{:<5} live {:>4}  spsc {:>3}  sdsc {:>3}  identities {:>3}",
            c.split.as_str(),
            c.live,
            c.spsc,
            c.sdsc,
            c.identities
        );
    }
    ctx.report(&json!({ "records": records.len(), "splits": counts }))?;
    Ok(())
}

fn augment(ctx: &Ctx, input: &Path, mask: Option<&Path>, kind: AugmentKind) -> Result<()> {
    ctx.cfg.augment.validate()?;
    ctx.open_out()?;
    let img = read_image(input)?;
    let aug = &ctx.cfg.augment;
    let seed = ctx.cfg.seed;
    let mut branch = None;
    let out = match kind {
        AugmentKind::Spsc => {
            let (o, b) = spsc(&img, aug, seed);
            branch = Some(b);
            o
        }
        AugmentKind::Jitter => color_jitter(&img, &aug.jitter, seed),
        AugmentKind::Moire => moire_synthesize(&img, &aug.moire, seed),
        AugmentKind::Sdsc => {
            let m = match mask {
                Some(p) => read_mask(p)?,
                None => Mask::ellipse(img.h, img.w),
            };
            sdsc(&img, &m, &aug.sdsc, seed)?
        }
    };
    let path = ctx.out.join("augmented.ppm");
    write_image(&path, &out)?;
    let l1 = img
        .data
        .iter()
        .zip(&out.data)
        .map(|(a, b)| (a - b).abs() as f64)
        .sum::<f64>()
        / img.data.len() as f64;
    ctx.report(&json!({
        "input": input,
        "output": "augmented.ppm",
        "kind": format!("{kind:?}").to_lowercase(),
        "branch": branch,
        "mean_abs_change": l1,
    }))?;
    Ok(())
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    initial_train_loss: f64,
    best_train_loss: f64,
    final_train_loss: f64,
    /// `1 − best / initial`.
    loss_reduction: f64,
    best_epoch: usize,
    stopped_early: bool,
    epochs: &'a History,
}

fn summarize(h: &History) -> TrainSummary<'_> {
    let best = h
        .epochs
        .iter()
        .map(|e| e.train_loss)
        .fold(h.initial_train_loss, f64::min);
    TrainSummary {
        initial_train_loss: h.initial_train_loss,
        best_train_loss: best,
        final_train_loss: h.final_train_loss(),
        loss_reduction: 1.0 - best / h.initial_train_loss,
        best_epoch: h.best_epoch,
        stopped_early: h.stopped_early,
        epochs: h,
    }
}

/// Verification scores and metrics on the configured test pairs.
fn verification(
    ctx: &Ctx,
    params: &ParamStore<f32>,
    model: &ModelConfig,
    samples: &[Sample],
) -> Result<(Vec<ScoreRecord>, MetricsReport)> {
    let records: Vec<_> = samples.iter().map(|s| s.record.clone()).collect();
    let p = ctx.cfg.pairs;
    let pairs = sample_pairs(&records, p.genuine, p.impostor, ctx.cfg.seed)?;
    let scores = verify(params, model, samples, &pairs, ctx.cfg.eval_batch)?;
    let report = verification_report(&scores)?;
    Ok((scores, report))
}

fn train_frm_cmd(ctx: &Ctx, data: Option<&Path>) -> Result<()> {
    ctx.validate()?;
    ctx.open_out()?;
    let samples = ctx.samples(data)?;
    let run = train_frm(&ctx.cfg.frm, &ctx.model, &samples)?;
    let (scores, metrics) = verification(ctx, &run.params, &ctx.model, &samples)?;
    write_scores(&ctx.out.join("scores.csv"), &scores)?;
    Checkpoint {
        model: ctx.model.clone(),
        params: run.params.clone(),
        meta: json!({
            "kind": "frm",
            "class_ids": run.class_ids,
            "history": run.history,
        }),
    }
    .save(&ctx.out.join("frm.ckpt"))?;
    let summary = summarize(&run.history);
    println!(
        "loss {:.4} -> {:.4} (best epoch {}), verification EER {:.4}, accuracy {:.4}",
        summary.initial_train_loss,
        summary.best_train_loss,
        summary.best_epoch,
        metrics.eer,
        metrics.accuracy
    );
    ctx.report(&json!({
        "training": summary,
        "classes": run.class_ids.len(),
        "verification": metrics,
        "backbone_hash": hex_digest(&params_digest(&run.params, PREFIX)),
    }))?;
    Ok(())
}

fn load_backbone(path: &Path, model: &ModelConfig) -> Result<Checkpoint> {
    let ckpt = Checkpoint::load(path)?;
    if &ckpt.model != model {
        return Err(CliError::Usage(format!(
            "{}: checkpoint model differs from the configured model",
            path.display()
        )));
    }
    if ckpt.params.numel_with_prefix(PREFIX) == 0 {
        return Err(CliError::format(path, "checkpoint has no backbone weights"));
    }
    Ok(ckpt)
}

fn train_uad_cmd(ctx: &Ctx, backbone: &Path, data: Option<&Path>) -> Result<()> {
    ctx.validate()?;
    let ckpt = load_backbone(backbone, &ctx.model)?;
    ctx.open_out()?;
    let samples = ctx.samples(data)?;
    let cfg = &ctx.cfg.uad;
    let run = train_uad(cfg, &ctx.model, &ckpt.params, &samples, None)?;
    write_scores(&ctx.out.join("scores.csv"), &run.test_scores)?;

    let mut params = run.head.clone();
    if !cfg.freeze_backbone {
        params.merge(run.backbone.clone());
    }
    Checkpoint {
        model: ctx.model.clone(),
        params,
        meta: json!({
            "kind": "uad",
            "tap": run.tap,
            "freeze_backbone": cfg.freeze_backbone,
            "backbone_hash_before": run.backbone_hash_before,
            "backbone_hash_after": run.backbone_hash_after,
            "history": run.history,
        }),
    }
    .save(&ctx.out.join("uad.ckpt"))?;

    // face matching with the backbone as it stands after head training
    let frm_after = if ckpt.params.numel_with_prefix(FRM_PREFIX) > 0 {
        let mut p = ckpt.params.clone();
        p.merge(run.backbone.clone());
        Some(verification(ctx, &p, &ctx.model, &samples)?.1)
    } else {
        None
    };
    let r = &run.report;
    println!(
        "tap {}: accuracy {:.4}, APCER {:.4}, BPCER {:.4}, EER {:.4}",
        run.tap,
        r.accuracy,
        r.apcer.unwrap_or(f64::NAN),
        r.bpcer.unwrap_or(f64::NAN),
        r.eer
    );
    ctx.report(&json!({
        "tap": run.tap,
        "freeze_backbone": cfg.freeze_backbone,
        "backbone_hash_before": run.backbone_hash_before,
        "backbone_hash_after": run.backbone_hash_after,
        "training": summarize(&run.history),
        "attack": run.report,
        "verification_after": frm_after,
    }))?;
    Ok(())
}

/// Frozen-backbone heads for every tap, spread over the worker pool.
pub fn sweep_parallel(
    cfg: &TrainConfig,
    model: &ModelConfig,
    backbone: &ParamStore<f32>,
    samples: &[Sample],
    batch: usize,
    workers: &Workers,
) -> Result<SweepReport> {
    let taps = model.taps();
    let images: Vec<_> = samples.iter().map(|s| &s.image).collect();
    let feats = extract_features(&backbone.subset(PREFIX), model, &images, &taps, batch)?;
    let one = |f: &unispoof_core::train::TapFeatures| -> Result<SweepRow> {
        let c = TrainConfig {
            tap: f.tap,
            freeze_backbone: true,
            ..*cfg
        };
        let run = train_uad(&c, model, backbone, samples, Some(f))?;
        Ok(SweepRow {
            tap: f.tap,
            best_epoch: run.history.best_epoch,
            report: run.report,
        })
    };
    let rows: Result<Vec<SweepRow>> = match workers {
        Workers::Sequential => feats.iter().map(one).collect(),
        Workers::Pool(pool) => pool.install(|| feats.par_iter().map(one).collect()),
    };
    Ok(SweepReport::from_rows(rows?)?)
}

fn sweep_cmd(ctx: &Ctx, backbone: &Path, data: Option<&Path>) -> Result<()> {
    ctx.validate()?;
    let ckpt = load_backbone(backbone, &ctx.model)?;
    let workers = worker_pool()?;
    ctx.open_out()?;
    let samples = ctx.samples(data)?;
    let sweep = sweep_parallel(
        &ctx.cfg.uad,
        &ctx.model,
        &ckpt.params,
        &samples,
        ctx.cfg.eval_batch,
        &workers,
    )?;
    let mut w = csv::Writer::from_path(ctx.out.join("sweep.csv"))
        .map_err(|e| CliError::format(&ctx.out.join("sweep.csv"), e))?;
    w.write_record(["tap", "accuracy", "apcer", "bpcer", "eer", "best_epoch"])
        .and_then(|_| {
            sweep.rows.iter().try_for_each(|r| {
                let f = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
                w.write_record([
                    r.tap.to_string(),
                    r.report.accuracy.to_string(),
                    f(r.report.apcer),
                    f(r.report.bpcer),
                    r.report.eer.to_string(),
                    r.best_epoch.to_string(),
                ])
            })
        })
        .map_err(|e| CliError::Failed(e.to_string()))?;
    w.flush().map_err(|e| CliError::io(&ctx.out, e))?;
    for r in &sweep.rows {
        println!("tap {:>5}: accuracy {:.4}  EER {:.4}", r.tap.to_string(), r.report.accuracy, r.report.eer);
    }
    println!("best tap: {}", sweep.best_tap);
    ctx.report(&sweep)?;
    Ok(())
}

fn verify_cmd(ctx: &Ctx, checkpoint: &Path, data: Option<&Path>) -> Result<()> {
    ctx.validate()?;
    let ckpt = load_backbone(checkpoint, &ctx.model)?;
    if ckpt.params.numel_with_prefix(FRM_PREFIX) == 0 {
        return Err(CliError::format(checkpoint, "checkpoint has no embedding head"));
    }
    ctx.open_out()?;
    let samples = ctx.samples(data)?;
    let (scores, metrics) = verification(ctx, &ckpt.params, &ctx.model, &samples)?;
    write_scores(&ctx.out.join("scores.csv"), &scores)?;
    println!("EER {:.4} at {:.4}, accuracy {:.4}", metrics.eer, metrics.eer_threshold, metrics.accuracy);
    ctx.report(&json!({ "pairs": scores.len(), "verification": metrics }))?;
    Ok(())
}

fn eval_cmd(ctx: &Ctx, scores: &Path, kind: EvalKind, threshold: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&threshold) && kind == EvalKind::Attack {
        return Err(CliError::Usage(format!("threshold {threshold} outside [0, 1]")));
    }
    let records = read_scores(scores)?;
    let report = match kind {
        EvalKind::Attack => attack_report(&records, threshold)?,
        EvalKind::Verification => verification_report(&records)?,
    };
    ctx.open_out()?;
    println!("{}", serde_json::to_string_pretty(&report).expect("plain struct"));
    ctx.report(&json!({ "scores": scores, "kind": format!("{kind:?}").to_lowercase(), "metrics": report }))?;
    Ok(())
}

#[derive(Serialize)]
struct CaseRow {
    name: String,
    max_rel_err: f64,
    checked: usize,
    passed: bool,
}

fn gradcheck_cmd(ctx: &Ctx, all: bool, only: &[String]) -> Result<()> {
    if !all && only.is_empty() {
        return Err(CliError::Usage("pass --all or at least one --case NAME".into()));
    }
    let known = case_names();
    if let Some(bad) = only.iter().find(|c| !known.contains(&c.as_str())) {
        return Err(CliError::Usage(format!(
            "unknown case {bad:?}; cases: {}",
            known.join(", ")
        )));
    }
    let rows: Vec<CaseRow> = run_suite(0)?
        .into_iter()
        .filter(|c| all || only.contains(&c.name))
        .map(|c| CaseRow {
            passed: c.passed(),
            name: c.name,
            max_rel_err: c.report.max_rel_err,
            checked: c.report.checked,
        })
        .collect();
    for r in &rows {
        println!(
            "{:<16} {:>10.3e} {:>5}  {}",
            r.name,
            r.max_rel_err,
            r.checked,
            if r.passed { "ok" } else { "FAIL" }
        );
    }
    ctx.open_out()?;
    let failed = rows.iter().filter(|r| !r.passed).count();
    ctx.report(&json!({ "tolerance": TOLERANCE, "cases": rows, "failed": failed }))?;
    if failed > 0 {
        return Err(CliError::Failed(format!(
            "{failed} case(s) above relative error {TOLERANCE}"
        )));
    }
    Ok(())
}

fn count_params_cmd(ctx: &Ctx, classes: usize, tap: Tap) -> Result<()> {
    let table: ParamTable = count_params(&ctx.model, classes, tap)?;
    for r in &table.rows {
        println!("{:<10} {:>12}", r.component, r.params);
    }
    println!("{:<10} {:>12}", "total", table.total);
    ctx.open_out()?;
    ctx.report(&json!({ "classes": classes, "tap": tap, "params": table }))?;
    Ok(())
}
