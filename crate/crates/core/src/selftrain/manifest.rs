//! Dataset and per-iteration manifests.
//!
//! Iteration manifests live at `runs/<run_id>/iter<k>/manifest.json` and
//! record the teacher/student chain, every output file with its content
//! hash, the quantization settings the labels went through, and the label
//! quality against gold annotations where available. Output paths are
//! stored relative to the run directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::eval::{EvalReport, Level, MetricScores};
use crate::fsutil::{atomic_write, sha256_file};
use crate::quantize::QuantizationConfig;

use super::runner::{GridSource, TrainingMode};
use super::SelfTrainError;

/// Teacher/student identity of the initial pseudo-label set (iteration 0).
pub const INITIAL_LABELS_IDENT: &str = "initial-pseudo-labels";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetRole {
    Unlabeled,
    Labeled,
    Test,
}

/// One track: id plus whichever of audio, precomputed contour, and gold
/// notes exist for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub track_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contour_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_notes_path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub role: DatasetRole,
    pub entries: Vec<DatasetEntry>,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<(), SelfTrainError> {
        if self.entries.is_empty() {
            return Err(SelfTrainError::DatasetInvalid("no entries".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for entry in &self.entries {
            if entry.track_id.is_empty() {
                return Err(SelfTrainError::DatasetInvalid("empty track_id".into()));
            }
            if !seen.insert(&entry.track_id) {
                return Err(SelfTrainError::DatasetInvalid(format!(
                    "duplicate track_id `{}`",
                    entry.track_id
                )));
            }
        }
        Ok(())
    }
}

/// Per-track record of one iteration: the contour that was quantized (a
/// dataset input or a prediction under the run directory), the label file
/// it produced, and content hashes of both for resume validation. Output
/// paths are relative to the run directory; input paths are absolute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackRecord {
    pub track_id: String,
    pub bpm: f64,
    pub contour_path: PathBuf,
    pub contour_sha256: String,
    pub label_path: PathBuf,
    pub label_sha256: String,
}

/// Marker that the labels consumed downstream are pipeline output, never
/// raw predictions, plus the exact settings used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostProcessing {
    pub stages: Vec<String>,
    pub quantization: QuantizationConfig,
    pub grid_source: GridSource,
}

pub(crate) fn pipeline_stages() -> Vec<String> {
    ["quantize_pitch", "rhythm_quantize", "remove_fragments", "correct_octaves", "segment_notes"]
        .map(String::from)
        .to_vec()
}

/// Flattened evaluation scores stored in manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualitySummary {
    pub con: MetricScores,
    pub conp: MetricScores,
    pub conpoff: MetricScores,
    pub n_ref: f64,
    pub n_est: f64,
}

impl From<&EvalReport> for QualitySummary {
    fn from(report: &EvalReport) -> Self {
        Self {
            con: *report.scores.get(Level::COn),
            conp: *report.scores.get(Level::COnP),
            conpoff: *report.scores.get(Level::COnPOff),
            n_ref: report.n_ref,
            n_est: report.n_est,
        }
    }
}

/// Full record of one self-training iteration.
///
/// `teacher` is the previous iteration's `student`; both are
/// [`INITIAL_LABELS_IDENT`] at iteration 0, where the pseudo-label set
/// itself plays both roles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationManifest {
    pub iteration: u32,
    pub teacher: String,
    pub student: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub student_model: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_sha256: Option<String>,
    pub pseudo_label_dir: PathBuf,
    pub rng_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<TrainingMode>,
    pub labels: Vec<TrackRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quality: Option<QualitySummary>,
    pub post_processing: PostProcessing,
    pub config_digest: String,
    pub started_at: String,
    pub finished_at: String,
}

impl IterationManifest {
    pub fn path_for(run_dir: &Path, iteration: u32) -> PathBuf {
        run_dir.join(format!("iter{iteration}")).join("manifest.json")
    }

    pub fn save(&self, run_dir: &Path) -> Result<(), SelfTrainError> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        atomic_write(&Self::path_for(run_dir, self.iteration), text.as_bytes())?;
        Ok(())
    }

    pub fn load(run_dir: &Path, iteration: u32) -> Result<Self, SelfTrainError> {
        let bytes = std::fs::read(Self::path_for(run_dir, iteration))?;
        Ok(serde_json::from_slice(&bytes)?)
    }

    /// True when every recorded output file still exists with the recorded
    /// content hash.
    pub fn outputs_intact(&self, run_dir: &Path) -> bool {
        for record in &self.labels {
            if !hash_matches(run_dir, &record.label_path, &record.label_sha256)
                || !hash_matches(run_dir, &record.contour_path, &record.contour_sha256)
            {
                return false;
            }
        }
        if let (Some(path), Some(sha)) = (&self.student_model, &self.model_sha256) {
            if !hash_matches(run_dir, path, sha) {
                return false;
            }
        }
        true
    }
}

fn hash_matches(run_dir: &Path, relative: &Path, expected: &str) -> bool {
    sha256_file(&run_dir.join(relative)).map(|h| h == expected).unwrap_or(false)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_rejects_duplicate_ids() {
        let manifest = DatasetManifest {
            role: DatasetRole::Unlabeled,
            entries: vec![
                DatasetEntry {
                    track_id: "a".into(),
                    audio_path: None,
                    contour_path: None,
                    gold_notes_path: None,
                },
                DatasetEntry {
                    track_id: "a".into(),
                    audio_path: None,
                    contour_path: None,
                    gold_notes_path: None,
                },
            ],
        };
        assert!(matches!(
            manifest.validate(),
            Err(SelfTrainError::DatasetInvalid(_))
        ));
    }

    #[test]
    fn manifest_round_trips_through_json() {
        let manifest = IterationManifest {
            iteration: 0,
            teacher: INITIAL_LABELS_IDENT.into(),
            student: INITIAL_LABELS_IDENT.into(),
            student_model: None,
            model_sha256: None,
            pseudo_label_dir: "iter0/labels".into(),
            rng_seed: 42,
            mode: None,
            labels: vec![],
            quality: None,
            post_processing: PostProcessing {
                stages: pipeline_stages(),
                quantization: QuantizationConfig::default(),
                grid_source: GridSource::FixedBpm(120.0),
            },
            config_digest: "abc".into(),
            started_at: "2024-01-01T00:00:00Z".into(),
            finished_at: "2024-01-01T00:00:01Z".into(),
        };
        let dir = tempfile::tempdir().unwrap();
        manifest.save(dir.path()).unwrap();
        let back = IterationManifest::load(dir.path(), 0).unwrap();
        assert_eq!(back, manifest);
    }

    #[test]
    fn outputs_intact_detects_tampering() {
        let dir = tempfile::tempdir().unwrap();
        let label = dir.path().join("iter0/labels/a.notes.json");
        atomic_write(&label, b"{}").unwrap();
        let contour = dir.path().join("iter0/contours/a.contour.csv");
        atomic_write(&contour, b"csv").unwrap();
        let record = TrackRecord {
            track_id: "a".into(),
            bpm: 120.0,
            contour_path: "iter0/contours/a.contour.csv".into(),
            contour_sha256: crate::fsutil::sha256_hex(b"csv"),
            label_path: "iter0/labels/a.notes.json".into(),
            label_sha256: crate::fsutil::sha256_hex(b"{}"),
        };
        let manifest = IterationManifest {
            iteration: 0,
            teacher: INITIAL_LABELS_IDENT.into(),
            student: INITIAL_LABELS_IDENT.into(),
            student_model: None,
            model_sha256: None,
            pseudo_label_dir: "iter0/labels".into(),
            rng_seed: 0,
            mode: None,
            labels: vec![record],
            quality: None,
            post_processing: PostProcessing {
                stages: pipeline_stages(),
                quantization: QuantizationConfig::default(),
                grid_source: GridSource::EstimateFromContour,
            },
            config_digest: "d".into(),
            started_at: String::new(),
            finished_at: String::new(),
        };
        assert!(manifest.outputs_intact(dir.path()));
        std::fs::write(&label, b"{tampered}").unwrap();
        assert!(!manifest.outputs_intact(dir.path()));
    }
}
