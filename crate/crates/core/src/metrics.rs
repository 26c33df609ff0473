//! Frame accuracy, FPR-anchored threshold tuning and utterance-level
//! evaluation reports.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::audio::Label;
use crate::neural::PosteriorTrajectory;

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("{0} is empty")]
    EmptySet(&'static str),
    #[error("target FPR must be in [0, 1], got {0}")]
    InvalidTarget(f64),
    #[error("malformed posterior dump at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Scores at or above the threshold are whisper verdicts; the same rule
/// decides frames at the fixed 0.5 threshold.
pub fn is_whisper_verdict(score: f64, threshold: f64) -> bool {
    score >= threshold
}

/// Fraction of frames, pooled over all utterances, whose `p >= 0.5` verdict
/// matches the utterance label.
pub fn frame_accuracy(trajs: &[(PosteriorTrajectory, Label)]) -> Result<f64, MetricsError> {
    let mut correct = 0usize;
    let mut total = 0usize;
    for (traj, label) in trajs {
        correct += traj
            .p_whisper
            .iter()
            .filter(|&&p| is_whisper_verdict(p, 0.5) == label.is_whisper())
            .count();
        total += traj.len();
    }
    if total == 0 {
        return Err(MetricsError::EmptySet("frame set"));
    }
    Ok(correct as f64 / total as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub threshold: f64,
    pub target_fpr: f64,
    pub achieved_fpr: f64,
    /// Identifier of the data the threshold was tuned on.
    pub tuned_on: String,
    /// Inference module whose scores the threshold applies to.
    pub module: String,
}

/// Picks the smallest candidate threshold whose false-positive fraction on
/// `negative_scores` is at most `target_fpr`. Candidates are 0, every
/// observed score and the next float above the largest score, which always
/// yields zero false positives.
pub fn tune_threshold(negative_scores: &[f64], target_fpr: f64, tuned_on: &str, module: &str) -> Result<OperatingPoint, MetricsError> {
    if negative_scores.is_empty() {
        return Err(MetricsError::EmptySet("negative score set"));
    }
    if !(0.0..=1.0).contains(&target_fpr) {
        return Err(MetricsError::InvalidTarget(target_fpr));
    }
    let mut sorted = negative_scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let max = sorted[n - 1];
    let mut candidates = Vec::with_capacity(n + 2);
    candidates.push(0.0);
    candidates.extend_from_slice(&sorted);
    candidates.push(next_up(max));
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    for t in candidates {
        // Count of negatives with score >= t.
        let fp = n - sorted.partition_point(|&s| s < t);
        let fpr = fp as f64 / n as f64;
        if fp as f64 <= target_fpr * n as f64 {
            return Ok(OperatingPoint {
                threshold: t,
                target_fpr,
                achieved_fpr: fpr,
                tuned_on: tuned_on.to_string(),
                module: module.to_string(),
            });
        }
    }
    unreachable!("the threshold above the maximum admits no false positives")
}

fn next_up(x: f64) -> f64 {
    if x.is_nan() || x == f64::INFINITY {
        return x;
    }
    if x == 0.0 {
        return f64::from_bits(1);
    }
    let bits = x.to_bits();
    f64::from_bits(if x > 0.0 { bits + 1 } else { bits - 1 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredUtterance {
    pub utterance_id: String,
    pub label: Label,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Counts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn recall(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn fpr(&self) -> Option<f64> {
        ratio(self.fp, self.fp + self.tn)
    }

    pub fn precision(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn f1(&self) -> Option<f64> {
        let (p, r) = (self.precision()?, self.recall()?);
        if p + r == 0.0 {
            Some(0.0)
        } else {
            Some(2.0 * p * r / (p + r))
        }
    }

    pub fn accuracy(&self) -> Option<f64> {
        ratio(self.tp + self.tn, self.total())
    }
}

fn ratio(a: usize, b: usize) -> Option<f64> {
    (b > 0).then(|| a as f64 / b as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub utterance_id: String,
    pub label: Label,
    pub score: f64,
    pub predicted: Label,
}

/// Utterance-level results at one operating point. Undefined ratios (empty
/// denominators) are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub module: String,
    pub frame_accuracy: Option<f64>,
    pub recall: Option<f64>,
    pub fpr: Option<f64>,
    pub precision: Option<f64>,
    pub f1: Option<f64>,
    pub accuracy: Option<f64>,
    pub counts: Counts,
    pub operating_point: OperatingPoint,
    pub verdicts: Vec<Verdict>,
}

pub fn confusion(scores: &[ScoredUtterance], threshold: f64) -> Counts {
    let mut c = Counts::default();
    for s in scores {
        match (s.label.is_whisper(), is_whisper_verdict(s.score, threshold)) {
            (true, true) => c.tp += 1,
            (true, false) => c.fn_ += 1,
            (false, true) => c.fp += 1,
            (false, false) => c.tn += 1,
        }
    }
    c
}

/// Applies the operating point to every scored utterance. Verdicts are
/// listed in utterance-id order so the report does not depend on input
/// order.
pub fn evaluate(scores: &[ScoredUtterance], op: &OperatingPoint) -> EvalReport {
    let counts = confusion(scores, op.threshold);
    let mut verdicts: Vec<Verdict> = scores
        .iter()
        .map(|s| Verdict {
            utterance_id: s.utterance_id.clone(),
            label: s.label,
            score: s.score,
            predicted: if is_whisper_verdict(s.score, op.threshold) {
                Label::Whisper
            } else {
                Label::Normal
            },
        })
        .collect();
    verdicts.sort_by(|a, b| a.utterance_id.cmp(&b.utterance_id).then(a.score.total_cmp(&b.score)));
    EvalReport {
        module: op.module.clone(),
        frame_accuracy: None,
        recall: counts.recall(),
        fpr: counts.fpr(),
        precision: counts.precision(),
        f1: counts.f1(),
        accuracy: counts.accuracy(),
        counts,
        operating_point: op.clone(),
        verdicts,
    }
}

pub const POSTERIOR_DUMP_HEADER: &str = "frame_index,p_whisper";

/// Writes one `frame_index,p_whisper` row per frame after a header line.
pub fn posterior_dump(traj: &PosteriorTrajectory, path: &Path) -> Result<(), MetricsError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{POSTERIOR_DUMP_HEADER}")?;
    for (i, p) in traj.p_whisper.iter().enumerate() {
        writeln!(out, "{i},{p}")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_posterior_dump(path: &Path) -> Result<Vec<f64>, MetricsError> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut values = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let parse_err = |message: String| MetricsError::Parse { line: i + 1, message };
        if i == 0 {
            if line.trim() != POSTERIOR_DUMP_HEADER {
                return Err(parse_err(format!("expected header {POSTERIOR_DUMP_HEADER:?}")));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let (idx, p) = line.split_once(',').ok_or_else(|| parse_err("expected two columns".into()))?;
        let idx: usize = idx.trim().parse().map_err(|e| parse_err(format!("frame index: {e}")))?;
        if idx != values.len() {
            return Err(parse_err(format!("expected frame index {}, found {idx}", values.len())));
        }
        values.push(p.trim().parse().map_err(|e| parse_err(format!("posterior: {e}")))?);
    }
    Ok(values)
}
