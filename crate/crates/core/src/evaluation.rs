//! Matching detector alerts against labeled slouch intervals.
//!
//! There is no natural negative unit in continuous monitoring, so only
//! true positives, false positives and false negatives are counted and the
//! single reported rate is sensitivity, `TP / (TP + FN)`.
//!
//! Matching is greedy and one-to-one: alerts are visited in time order and
//! each claims the earliest unmatched interval whose span, widened by
//! `slack_ms` on both sides, contains the alert's onset.

use std::fmt;

use thiserror::Error;

use crate::detection::{EventKind, PostureEvent};

/// Default widening of truth intervals when matching alert onsets.
pub const DEFAULT_SLACK_MS: u64 = 1000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("UnsortedInput: {0}")]
    UnsortedInput(String),
    #[error("InvalidInterval: interval {index} has start {start_ms} >= end {end_ms}")]
    InvalidInterval { index: usize, start_ms: u64, end_ms: u64 },
    #[error("NoPositives: sensitivity is undefined when TP + FN = 0")]
    NoPositives,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TruthLabel {
    Slouch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TruthInterval {
    pub start_ms: u64,
    pub end_ms: u64,
    pub label: TruthLabel,
}

impl TruthInterval {
    pub fn slouch(start_ms: u64, end_ms: u64) -> Self {
        Self { start_ms, end_ms, label: TruthLabel::Slouch }
    }

    fn contains_with_slack(&self, t: u64, slack_ms: u64) -> bool {
        t + slack_ms >= self.start_ms && t <= self.end_ms.saturating_add(slack_ms)
    }

    pub fn shifted(&self, offset_ms: u64) -> Self {
        Self {
            start_ms: self.start_ms + offset_ms,
            end_ms: self.end_ms + offset_ms,
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfusionStats {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub positives: usize,
    /// `None` when there were no positives.
    pub sensitivity: Option<f64>,
}

impl ConfusionStats {
    pub fn from_counts(true_positives: usize, false_positives: usize, false_negatives: usize) -> Self {
        let positives = true_positives + false_negatives;
        let sensitivity = (positives > 0).then(|| true_positives as f64 / positives as f64);
        Self { true_positives, false_positives, false_negatives, positives, sensitivity }
    }

    pub fn total_alerts(&self) -> usize {
        self.true_positives + self.false_positives
    }

    /// Two-row confusion block with counts and rates.
    pub fn table(&self) -> String {
        let sens = match self.sensitivity {
            Some(s) => format!("{s:.4} ({:.2}%)", s * 100.0),
            None => "undefined".to_string(),
        };
        format!(
            "{:<16}{:>6}    {:<16}{:>6}\n{:<16}{:>6}    {:<16}{:>6}\n{:<16}{}\n",
            "False Positive",
            self.false_positives,
            "False Negative",
            self.false_negatives,
            "True Positive",
            self.true_positives,
            "Positives",
            self.positives,
            "Sensitivity",
            sens
        )
    }

    pub const CSV_HEADER: &'static str =
        "true_positives,false_positives,false_negatives,positives,sensitivity";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.true_positives,
            self.false_positives,
            self.false_negatives,
            self.positives,
            self.sensitivity.map_or(String::new(), |s| format!("{s:.6}"))
        )
    }
}

impl fmt::Display for ConfusionStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.table())
    }
}

pub fn sensitivity(stats: &ConfusionStats) -> Result<f64, EvalError> {
    let positives = stats.true_positives + stats.false_negatives;
    if positives == 0 {
        return Err(EvalError::NoPositives);
    }
    Ok(stats.true_positives as f64 / positives as f64)
}

pub fn validate_truth(truth: &[TruthInterval]) -> Result<(), EvalError> {
    for (index, iv) in truth.iter().enumerate() {
        if iv.start_ms >= iv.end_ms {
            return Err(EvalError::InvalidInterval {
                index,
                start_ms: iv.start_ms,
                end_ms: iv.end_ms,
            });
        }
    }
    for (i, pair) in truth.windows(2).enumerate() {
        if pair[1].start_ms < pair[0].end_ms {
            return Err(EvalError::UnsortedInput(format!(
                "truth interval {} starts at {} ms, before interval {} ends at {} ms",
                i + 1,
                pair[1].start_ms,
                i,
                pair[0].end_ms
            )));
        }
    }
    Ok(())
}

/// Scores the `VibrateOn` events of `events` against `truth`. Other event
/// kinds are ignored.
pub fn match_events(
    events: &[PostureEvent],
    truth: &[TruthInterval],
    slack_ms: u64,
) -> Result<ConfusionStats, EvalError> {
    let onsets: Vec<u64> = events
        .iter()
        .filter(|e| e.kind == EventKind::VibrateOn)
        .map(|e| e.timestamp_ms)
        .collect();
    match_onsets(&onsets, truth, slack_ms)
}

/// Same as [`match_events`] on bare alert onset times.
pub fn match_onsets(
    onsets: &[u64],
    truth: &[TruthInterval],
    slack_ms: u64,
) -> Result<ConfusionStats, EvalError> {
    validate_truth(truth)?;
    if let Some(i) = onsets.windows(2).position(|w| w[1] < w[0]) {
        return Err(EvalError::UnsortedInput(format!(
            "alert {} at {} ms precedes alert {} at {} ms",
            i + 1,
            onsets[i + 1],
            i,
            onsets[i]
        )));
    }

    let mut matched = vec![false; truth.len()];
    let mut tp = 0;
    let mut fp = 0;
    // Widened intervals can overlap, so a plain two-pointer walk is not enough;
    // `first_open` only skips intervals that no later alert can reach.
    let mut first_open = 0;
    for &t in onsets {
        while first_open < truth.len() && truth[first_open].end_ms.saturating_add(slack_ms) < t {
            first_open += 1;
        }
        let hit = (first_open..truth.len())
            .take_while(|&j| truth[j].start_ms <= t + slack_ms)
            .find(|&j| !matched[j] && truth[j].contains_with_slack(t, slack_ms));
        match hit {
            Some(j) => {
                matched[j] = true;
                tp += 1;
            }
            None => fp += 1,
        }
    }
    let fn_ = matched.iter().filter(|m| !**m).count();
    Ok(ConfusionStats::from_counts(tp, fp, fn_))
}

/// Counts from the two-hour single-wearer trial that the detector design was
/// validated on, together with the sensitivity printed alongside them.
pub mod reference_trial {
    pub const TRUE_POSITIVES: usize = 47;
    pub const FALSE_POSITIVES: usize = 6;
    pub const FALSE_NEGATIVES: usize = 8;
    pub const POSITIVES: usize = 55;
    /// Sensitivity as printed, in percent. Not derivable from the counts.
    pub const PRINTED_SENSITIVITY_PCT: f64 = 85.1;
}

/// Stats recomputed from the reference trial's counts.
pub fn reference_trial_stats() -> ConfusionStats {
    use reference_trial::*;
    ConfusionStats::from_counts(TRUE_POSITIVES, FALSE_POSITIVES, FALSE_NEGATIVES)
}

/// Human-readable comparison of the printed reference sensitivity with the
/// value implied by its own counts.
pub fn reference_trial_note() -> String {
    use reference_trial::*;
    let stats = reference_trial_stats();
    let computed = stats.sensitivity.unwrap_or(f64::NAN) * 100.0;
    let consistent = (computed - PRINTED_SENSITIVITY_PCT).abs() < 0.05;
    format!(
        "Reference trial counts: TP={} FP={} FN={} Positives={}\n\
         Sensitivity from counts: {}/{} = {:.6} ({:.2}%)\n\
         Printed sensitivity: {:.1}% -> {}\n",
        stats.true_positives,
        stats.false_positives,
        stats.false_negatives,
        POSITIVES,
        stats.true_positives,
        stats.positives,
        computed / 100.0,
        computed,
        PRINTED_SENSITIVITY_PCT,
        if consistent {
            "consistent with the counts"
        } else {
            "INCONSISTENT with the counts (reported value is not TP/(TP+FN))"
        }
    )
}
