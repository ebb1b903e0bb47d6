//! Note-level transcription scoring: COn, COnP, and COnPOff
//! precision/recall/F1 under an optimal one-to-one matching.
//!
//! A reference/estimate pair is a COn candidate when onsets agree within the
//! onset tolerance; COnP additionally requires pitch agreement; COnPOff
//! additionally requires offsets to agree within
//! `max(offset_min_tolerance, offset_ratio * reference duration)`. All
//! tolerances are inclusive. Scores come from a maximum-cardinality
//! bipartite matching over the valid pairs, so overlapping candidates never
//! shortchange the F1.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::notes::{NoteEvent, NoteSequence};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("empty corpus: no (reference, estimate) pairs")]
    EmptyCorpus,
    #[error("invalid eval config: {0}")]
    InvalidConfig(String),
}

/// Match strictness level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    COn,
    COnP,
    COnPOff,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::COn, Level::COnP, Level::COnPOff];

    pub fn name(&self) -> &'static str {
        match self {
            Level::COn => "COn",
            Level::COnP => "COnP",
            Level::COnPOff => "COnPOff",
        }
    }
}

/// Matching tolerances. Defaults: 50 ms onsets, offsets within 50 ms or 20%
/// of the reference note duration (whichever is higher), pitch within 50
/// cents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub onset_tolerance: f64,
    pub offset_min_tolerance: f64,
    pub offset_ratio: f64,
    pub pitch_tolerance_cents: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            onset_tolerance: 0.05,
            offset_min_tolerance: 0.05,
            offset_ratio: 0.2,
            pitch_tolerance_cents: 50.0,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        let fields = [
            ("onset_tolerance", self.onset_tolerance),
            ("offset_min_tolerance", self.offset_min_tolerance),
            ("offset_ratio", self.offset_ratio),
            ("pitch_tolerance_cents", self.pitch_tolerance_cents),
        ];
        for (name, value) in fields {
            if !(value.is_finite() && value > 0.0) {
                return Err(EvalError::InvalidConfig(format!(
                    "{name} = {value} must be positive"
                )));
            }
        }
        Ok(())
    }

    /// Offset tolerance for a reference note of the given duration.
    pub fn offset_tolerance_for(&self, ref_duration: f64) -> f64 {
        self.offset_min_tolerance.max(self.offset_ratio * ref_duration)
    }

    fn pair_valid(&self, reference: &NoteEvent, estimate: &NoteEvent, level: Level) -> bool {
        if (reference.onset - estimate.onset).abs() > self.onset_tolerance {
            return false;
        }
        if matches!(level, Level::COnP | Level::COnPOff) {
            let cents = 100.0 * (reference.pitch as f64 - estimate.pitch as f64);
            if cents.abs() > self.pitch_tolerance_cents {
                return false;
            }
        }
        if matches!(level, Level::COnPOff) {
            let tolerance = self.offset_tolerance_for(reference.duration());
            if (reference.offset - estimate.offset).abs() > tolerance {
                return false;
            }
        }
        true
    }
}

/// Precision/recall/F1 triple for one level.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// One value per match level.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PerLevel<T> {
    pub con: T,
    pub conp: T,
    pub conpoff: T,
}

impl<T> PerLevel<T> {
    pub fn get(&self, level: Level) -> &T {
        match level {
            Level::COn => &self.con,
            Level::COnP => &self.conp,
            Level::COnPOff => &self.conpoff,
        }
    }

    fn get_mut(&mut self, level: Level) -> &mut T {
        match level {
            Level::COn => &mut self.con,
            Level::COnP => &mut self.conp,
            Level::COnPOff => &mut self.conpoff,
        }
    }
}

/// Scores plus the matchings that produced them.
///
/// `n_ref`/`n_est` are note counts for a single track and unweighted means
/// for corpus reports (where `matches` is empty).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    pub scores: PerLevel<MetricScores>,
    pub matches: PerLevel<Vec<(usize, usize)>>,
    pub n_ref: f64,
    pub n_est: f64,
}

/// Maximum-cardinality one-to-one matching over the level's valid pairs,
/// found with augmenting paths. Returned as `(ref_index, est_index)` pairs
/// sorted by reference index; deterministic for fixed inputs.
pub fn match_valid(
    reference: &NoteSequence,
    estimate: &NoteSequence,
    config: &EvalConfig,
    level: Level,
) -> Vec<(usize, usize)> {
    match_valid_events(reference.notes(), estimate.notes(), config, level)
}

/// [`match_valid`] over bare note slices, for callers whose references do
/// not satisfy the monophonic sequence invariant (e.g. loosely annotated
/// ground truth with overlapping notes).
pub fn match_valid_events(
    ref_notes: &[NoteEvent],
    est_notes: &[NoteEvent],
    config: &EvalConfig,
    level: Level,
) -> Vec<(usize, usize)> {
    let adjacency: Vec<Vec<usize>> = ref_notes
        .iter()
        .map(|r| {
            est_notes
                .iter()
                .enumerate()
                .filter(|(_, e)| config.pair_valid(r, e, level))
                .map(|(j, _)| j)
                .collect()
        })
        .collect();

    // Kuhn's algorithm: grow the matching one reference note at a time.
    let mut est_owner: Vec<Option<usize>> = vec![None; est_notes.len()];
    for r in 0..ref_notes.len() {
        let mut visited = vec![false; est_notes.len()];
        augment(r, &adjacency, &mut est_owner, &mut visited);
    }

    let mut pairs: Vec<(usize, usize)> = est_owner
        .iter()
        .enumerate()
        .filter_map(|(e, owner)| owner.map(|r| (r, e)))
        .collect();
    pairs.sort_unstable();
    pairs
}

fn augment(
    r: usize,
    adjacency: &[Vec<usize>],
    est_owner: &mut Vec<Option<usize>>,
    visited: &mut Vec<bool>,
) -> bool {
    for &e in &adjacency[r] {
        if visited[e] {
            continue;
        }
        visited[e] = true;
        if est_owner[e].is_none() || augment(est_owner[e].unwrap(), adjacency, est_owner, visited) {
            est_owner[e] = Some(r);
            return true;
        }
    }
    false
}

fn prf(n_matched: usize, n_ref: usize, n_est: usize) -> MetricScores {
    let precision = if n_est == 0 { 0.0 } else { n_matched as f64 / n_est as f64 };
    let recall = if n_ref == 0 { 0.0 } else { n_matched as f64 / n_ref as f64 };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    MetricScores { precision, recall, f1 }
}

/// Scores one estimate against one reference at all three levels.
pub fn score(reference: &NoteSequence, estimate: &NoteSequence, config: &EvalConfig) -> EvalReport {
    let mut report = EvalReport {
        n_ref: reference.len() as f64,
        n_est: estimate.len() as f64,
        ..Default::default()
    };
    for level in Level::ALL {
        let pairs = match_valid(reference, estimate, config, level);
        *report.scores.get_mut(level) = prf(pairs.len(), reference.len(), estimate.len());
        *report.matches.get_mut(level) = pairs;
    }
    report
}

/// Corpus-level report: the unweighted mean of per-track scores and counts,
/// one track per (reference, estimate) pair. The match lists are empty.
pub fn score_corpus(
    pairs: &[(NoteSequence, NoteSequence)],
    config: &EvalConfig,
) -> Result<EvalReport, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    let reports: Vec<EvalReport> = pairs
        .iter()
        .map(|(reference, estimate)| score(reference, estimate, config))
        .collect();
    let k = reports.len() as f64;
    let mut corpus = EvalReport::default();
    for level in Level::ALL {
        let mean = MetricScores {
            precision: reports.iter().map(|r| r.scores.get(level).precision).sum::<f64>() / k,
            recall: reports.iter().map(|r| r.scores.get(level).recall).sum::<f64>() / k,
            f1: reports.iter().map(|r| r.scores.get(level).f1).sum::<f64>() / k,
        };
        *corpus.scores.get_mut(level) = mean;
    }
    corpus.n_ref = reports.iter().map(|r| r.n_ref).sum::<f64>() / k;
    corpus.n_est = reports.iter().map(|r| r.n_est).sum::<f64>() / k;
    Ok(corpus)
}

fn json_count(value: f64) -> String {
    if value.fract() == 0.0 && value.abs() < 1e15 {
        format!("{}", value as i64)
    } else {
        format!("{value:.6}")
    }
}

/// Report as one-line JSON with 6-decimal floats:
/// `{"COn": {"precision": ..., "recall": ..., "f1": ...}, ..., "n_ref": ..., "n_est": ...}`.
pub fn report_to_json(report: &EvalReport) -> String {
    let mut out = String::from("{");
    for level in Level::ALL {
        let s = report.scores.get(level);
        out.push_str(&format!(
            "\"{}\":{{\"precision\":{:.6},\"recall\":{:.6},\"f1\":{:.6}}},",
            level.name(),
            s.precision,
            s.recall,
            s.f1
        ));
    }
    out.push_str(&format!(
        "\"n_ref\":{},\"n_est\":{}}}\n",
        json_count(report.n_ref),
        json_count(report.n_est)
    ));
    out
}
