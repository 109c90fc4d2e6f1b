//! Verification and presentation-attack metrics.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A scored pair (cosine similarity, label 1 = genuine) or sample (bona
/// fide probability, label 1 = bona fide).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub id: String,
    pub score: f64,
    pub label: u8,
}

/// Equal error rate over all thresholds at midpoints of the sorted unique
/// scores. FAR counts impostors scoring `≥ t`, FRR counts genuine scores
/// below `t`. Returns `(eer, threshold)`; among thresholds with the same
/// `|FAR − FRR|` the lowest wins.
pub fn compute_eer(genuine: &[f64], impostor: &[f64]) -> Result<(f64, f64)> {
    if genuine.is_empty() {
        return Err(Error::EmptyScores("genuine"));
    }
    if impostor.is_empty() {
        return Err(Error::EmptyScores("impostor"));
    }
    let mut g = genuine.to_vec();
    let mut im = impostor.to_vec();
    g.sort_by(f64::total_cmp);
    im.sort_by(f64::total_cmp);
    let mut all: Vec<f64> = g.iter().chain(&im).copied().collect();
    all.sort_by(f64::total_cmp);
    all.dedup();
    let candidates: Vec<f64> = if all.len() == 1 {
        all
    } else {
        all.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    };
    let (ng, ni) = (g.len() as f64, im.len() as f64);
    let mut best: Option<(f64, f64, f64)> = None;
    for t in candidates {
        let frr = g.partition_point(|&s| s < t) as f64 / ng;
        let far = (im.len() - im.partition_point(|&s| s < t)) as f64 / ni;
        let gap = (far - frr).abs();
        if best.is_none_or(|(bg, _, _)| gap < bg) {
            best = Some((gap, 0.5 * (far + frr), t));
        }
    }
    let (_, eer, t) = best.expect("at least one candidate threshold");
    Ok((eer, t))
}

/// Attack / bona fide error rates at `threshold`; a sample is accepted as
/// bona fide when its score is `≥ threshold`. Returns
/// `(apcer, bpcer, accuracy)`.
pub fn compute_apcer_bpcer(records: &[ScoreRecord], threshold: f64) -> Result<(f64, f64, f64)> {
    let (mut attacks, mut bona) = (0usize, 0usize);
    let (mut accepted_attacks, mut rejected_bona) = (0usize, 0usize);
    for r in records {
        let accept = r.score >= threshold;
        if r.label == 1 {
            bona += 1;
            rejected_bona += usize::from(!accept);
        } else {
            attacks += 1;
            accepted_attacks += usize::from(accept);
        }
    }
    if attacks == 0 {
        return Err(Error::SingleClass("no attack samples"));
    }
    if bona == 0 {
        return Err(Error::SingleClass("no bona fide samples"));
    }
    let apcer = accepted_attacks as f64 / attacks as f64;
    let bpcer = rejected_bona as f64 / bona as f64;
    let accuracy = 1.0 - (accepted_attacks + rejected_bona) as f64 / records.len() as f64;
    Ok((apcer, bpcer, accuracy))
}

/// Accuracy of the `score ≥ t ⇒ positive` decision.
pub fn accuracy_at(records: &[ScoreRecord], t: f64) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    let ok = records
        .iter()
        .filter(|r| (r.score >= t) == (r.label == 1))
        .count();
    ok as f64 / records.len() as f64
}

/// Everything reported for one evaluated score set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub eer: f64,
    pub eer_threshold: f64,
    /// Absent for verification pairs.
    pub apcer: Option<f64>,
    pub bpcer: Option<f64>,
    /// Threshold used for `accuracy`, `apcer` and `bpcer`.
    pub threshold: f64,
    pub n_scores: usize,
    pub n_positive: usize,
    pub n_negative: usize,
}

fn split_scores(records: &[ScoreRecord]) -> (Vec<f64>, Vec<f64>) {
    let pos = records.iter().filter(|r| r.label == 1).map(|r| r.score).collect();
    let neg = records.iter().filter(|r| r.label != 1).map(|r| r.score).collect();
    (pos, neg)
}

/// Spoof-detection report at a fixed decision threshold.
pub fn attack_report(records: &[ScoreRecord], threshold: f64) -> Result<MetricsReport> {
    let (apcer, bpcer, accuracy) = compute_apcer_bpcer(records, threshold)?;
    let (pos, neg) = split_scores(records);
    let (eer, eer_threshold) = compute_eer(&pos, &neg)?;
    Ok(MetricsReport {
        accuracy,
        eer,
        eer_threshold,
        apcer: Some(apcer),
        bpcer: Some(bpcer),
        threshold,
        n_scores: records.len(),
        n_positive: pos.len(),
        n_negative: neg.len(),
    })
}

/// Verification report; accuracy is measured at the EER threshold.
pub fn verification_report(records: &[ScoreRecord]) -> Result<MetricsReport> {
    let (pos, neg) = split_scores(records);
    let (eer, t) = compute_eer(&pos, &neg)?;
    Ok(MetricsReport {
        accuracy: accuracy_at(records, t),
        eer,
        eer_threshold: t,
        apcer: None,
        bpcer: None,
        threshold: t,
        n_scores: records.len(),
        n_positive: pos.len(),
        n_negative: neg.len(),
    })
}
