//! Teacher-student self-training orchestration.
//!
//! Neural training, pitch prediction, and audio augmentation live behind
//! external commands with strict file contracts; this module owns the loop:
//! generate note-level pseudo labels from contour predictions, re-quantize
//! teacher predictions into hard labels each iteration, invoke the train
//! command, and record everything in per-iteration manifests so runs are
//! deterministic and resumable.
//!
//! External command contracts:
//!
//! - **predict**: receives a text file of `track_id<TAB>input_path` lines
//!   and an output directory; writes `<track_id>.contour.csv` per track in
//!   the contour CSV schema. An optional `{model}` placeholder receives the
//!   current teacher's model artifact.
//! - **train**: receives a label-manifest file of
//!   `track_id<TAB>audio_path<TAB>notes_json_path` lines, an output model
//!   path, and a seed; exits 0 on success.
//! - **augment**: receives an input audio path, an output audio path, and a
//!   seed; exits 0 on success.

mod manifest;
mod runner;
mod template;

pub use manifest::{
    DatasetEntry, DatasetManifest, DatasetRole, IterationManifest, PostProcessing,
    QualitySummary, TrackRecord, INITIAL_LABELS_IDENT,
};
pub use runner::{GridSource, RunOptions, SelfTrainer, TrainingMode};
pub use template::{AugmenterSpec, CommandTemplate, ExternalModelSpec};

use thiserror::Error;

use crate::eval::EvalError;
use crate::quantize::QuantizeError;
use crate::tempo::TempoError;

#[derive(Debug, Error)]
pub enum SelfTrainError {
    #[error("invalid command template: {0}")]
    Template(String),
    #[error("{phase} command failed ({status}): {command}\n{stderr}")]
    CommandFailed {
        phase: String,
        command: String,
        status: String,
        stderr: String,
    },
    #[error("{phase} command exited 0 but did not produce {path}")]
    MissingOutput { phase: String, path: String },
    #[error("track {track}: output violates the {schema} schema: {source}")]
    SchemaViolation {
        track: String,
        schema: String,
        source: Box<dyn std::error::Error + Send + Sync>,
    },
    #[error("track {track}: missing input: {what}")]
    MissingInput { track: String, what: String },
    #[error("stale manifest: {0}")]
    StaleManifest(String),
    #[error("noisy-student mode requires an enabled augmenter")]
    AugmenterRequired,
    #[error("invalid dataset manifest: {0}")]
    DatasetInvalid(String),
    #[error("invalid run options: {0}")]
    InvalidOptions(String),
    #[error("track {track}: tempo estimation failed: {source}")]
    Tempo { track: String, source: TempoError },
    #[error("track {track}: quantization failed: {source}")]
    Quantize { track: String, source: QuantizeError },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("manifest JSON: {0}")]
    Json(#[from] serde_json::Error),
}

impl SelfTrainError {
    pub(crate) fn schema_violation(
        track: &str,
        schema: &str,
        source: impl std::error::Error + Send + Sync + 'static,
    ) -> Self {
        SelfTrainError::SchemaViolation {
            track: track.to_string(),
            schema: schema.to_string(),
            source: Box::new(source),
        }
    }
}

