//! The self-training loop: initial pseudo-label generation, per-iteration
//! teacher prediction + re-quantization + student training, resumable
//! execution over validated manifests.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::contour::parse_contour_csv;
use crate::eval::{score_corpus, EvalConfig};
use crate::fsutil::{atomic_write, derive_seed, sha256_file, sha256_hex};
use crate::notes::NoteSequence;
use crate::quantize::{convert, QuantizationConfig};
use crate::tempo::{envelope_from_contour, estimate_tempo, BeatGrid};

use super::manifest::{
    pipeline_stages, DatasetEntry, DatasetManifest, IterationManifest, PostProcessing,
    QualitySummary, TrackRecord, INITIAL_LABELS_IDENT,
};
use super::template::{run_shell, AugmenterSpec, ExternalModelSpec};
use super::SelfTrainError;

/// Teacher-student flavor: `TS` trains the student on original audio, `NS`
/// (noisy student) perturbs the student's audio with the augment command
/// while the teacher always sees the original input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrainingMode {
    TS,
    NS,
}

impl fmt::Display for TrainingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrainingMode::TS => "TS",
            TrainingMode::NS => "NS",
        })
    }
}

impl FromStr for TrainingMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "TS" | "ts" => Ok(TrainingMode::TS),
            "NS" | "ns" => Ok(TrainingMode::NS),
            other => Err(format!("unknown mode `{other}`, expected TS or NS")),
        }
    }
}

/// Where each track's beat grid comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridSource {
    /// One tempo for every track.
    FixedBpm(f64),
    /// Estimate per track from the contour-derived onset envelope.
    EstimateFromContour,
}

/// Knobs for a self-training run.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub run_dir: PathBuf,
    pub mode: TrainingMode,
    pub seed: u64,
    /// Concurrent external-command invocations within one phase.
    pub jobs: usize,
    pub quantization: QuantizationConfig,
    pub grid_source: GridSource,
    pub eval_config: EvalConfig,
    /// Fixed timestamp written into manifests instead of the wall clock;
    /// lets identical inputs produce byte-identical manifests.
    pub fixed_timestamp: Option<String>,
}

impl RunOptions {
    pub fn new(run_dir: impl Into<PathBuf>) -> Self {
        Self {
            run_dir: run_dir.into(),
            mode: TrainingMode::NS,
            seed: 0,
            jobs: 1,
            quantization: QuantizationConfig::default(),
            grid_source: GridSource::EstimateFromContour,
            eval_config: EvalConfig::default(),
            fixed_timestamp: None,
        }
    }
}

/// A contour ready for quantization plus its provenance: the file it was
/// read from (absolute for dataset inputs, run-dir-relative for predict
/// output) and that file's content hash.
struct TrackContour {
    entry_index: usize,
    contour: crate::contour::PitchContour,
    source_path: PathBuf,
    source_sha256: String,
}

pub struct SelfTrainer {
    data: DatasetManifest,
    pitch_model: ExternalModelSpec,
    student_model: ExternalModelSpec,
    augmenter: Option<AugmenterSpec>,
    options: RunOptions,
    config_digest: String,
}

impl SelfTrainer {
    /// Validates the dataset, command templates, and options, and
    /// fingerprints every input (file contents included) for resumability.
    pub fn new(
        data: DatasetManifest,
        pitch_model: ExternalModelSpec,
        student_model: ExternalModelSpec,
        augmenter: Option<AugmenterSpec>,
        options: RunOptions,
    ) -> Result<Self, SelfTrainError> {
        data.validate()?;
        pitch_model.validate()?;
        student_model.validate()?;
        if let Some(a) = &augmenter {
            a.validate()?;
        }
        if options.jobs == 0 {
            return Err(SelfTrainError::InvalidOptions("jobs must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&options.quantization.confidence_floor) {
            return Err(SelfTrainError::InvalidOptions(format!(
                "confidence_floor {} not in [0, 1]",
                options.quantization.confidence_floor
            )));
        }
        if !(options.quantization.octave_context_seconds.is_finite()
            && options.quantization.octave_context_seconds > 0.0)
        {
            return Err(SelfTrainError::InvalidOptions(format!(
                "octave_context_seconds {} must be positive",
                options.quantization.octave_context_seconds
            )));
        }
        let config_digest =
            compute_config_digest(&data, &pitch_model, &student_model, &augmenter, &options)?;
        Ok(Self {
            data,
            pitch_model,
            student_model,
            augmenter,
            options,
            config_digest,
        })
    }

    pub fn config_digest(&self) -> &str {
        &self.config_digest
    }

    fn run_dir(&self) -> &Path {
        &self.options.run_dir
    }

    fn now(&self) -> String {
        self.options.fixed_timestamp.clone().unwrap_or_else(|| {
            chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
        })
    }

    /// Runs iteration 0: obtain a contour for every track (precomputed file
    /// or pitch-model prediction), convert each through the full
    /// quantization pipeline, write notes JSON per track, and record the
    /// iteration manifest.
    pub fn generate_initial_labels(&self) -> Result<IterationManifest, SelfTrainError> {
        let started_at = self.now();

        // Tracks without a precomputed contour go through the pitch model.
        let mut to_predict = Vec::new();
        for (i, entry) in self.data.entries.iter().enumerate() {
            if entry.contour_path.is_none() {
                let audio = entry.audio_path.as_ref().ok_or_else(|| {
                    SelfTrainError::MissingInput {
                        track: entry.track_id.clone(),
                        what: "audio_path or contour_path".into(),
                    }
                })?;
                to_predict.push((i, audio.clone()));
            }
        }

        let mut predicted = std::collections::HashMap::new();
        if !to_predict.is_empty() {
            let model = self.pitch_model.model_artifact.clone();
            predicted = self.run_predict(0, &self.pitch_model, model.as_deref(), &to_predict, "pitch-predict")?;
        }

        let mut tracks = Vec::with_capacity(self.data.entries.len());
        for (i, entry) in self.data.entries.iter().enumerate() {
            let track = match &entry.contour_path {
                Some(path) => {
                    let bytes = std::fs::read(path)?;
                    let contour = parse_contour_csv(&bytes)
                        .map_err(|e| SelfTrainError::schema_violation(&entry.track_id, "contour CSV", e))?
                        .with_track_id(&entry.track_id);
                    TrackContour {
                        entry_index: i,
                        contour,
                        source_path: std::path::absolute(path)?,
                        source_sha256: sha256_hex(&bytes),
                    }
                }
                None => predicted.remove(&i).expect("predicted above"),
            };
            tracks.push(track);
        }

        let labeled = self.quantize_and_write(0, &tracks)?;
        let quality = self.quality_vs_gold(&labeled)?;

        let manifest = IterationManifest {
            iteration: 0,
            teacher: INITIAL_LABELS_IDENT.into(),
            student: INITIAL_LABELS_IDENT.into(),
            student_model: None,
            model_sha256: None,
            pseudo_label_dir: PathBuf::from("iter0/labels"),
            rng_seed: self.options.seed,
            mode: None,
            labels: labeled.into_iter().map(|(record, _)| record).collect(),
            quality,
            post_processing: self.post_processing(),
            config_digest: self.config_digest.clone(),
            started_at,
            finished_at: self.now(),
        };
        manifest.save(self.run_dir())?;
        Ok(manifest)
    }

    /// Runs iteration `k >= 1` on top of a validated previous iteration.
    ///
    /// At k = 1 the initial pseudo labels are the teacher and are used
    /// directly; from k = 2 on, the previous student predicts fresh
    /// contours on the original inputs and those pass through the full
    /// quantization pipeline before training.
    pub fn run_iteration(
        &self,
        k: u32,
        prev: &IterationManifest,
    ) -> Result<IterationManifest, SelfTrainError> {
        if k == 0 {
            return Err(SelfTrainError::InvalidOptions("iteration must be >= 1".into()));
        }
        if prev.iteration != k - 1 {
            return Err(SelfTrainError::StaleManifest(format!(
                "previous manifest is iteration {}, expected {}",
                prev.iteration,
                k - 1
            )));
        }
        if prev.config_digest != self.config_digest {
            return Err(SelfTrainError::StaleManifest(
                "inputs changed since the previous iteration was produced".into(),
            ));
        }
        if !prev.outputs_intact(self.run_dir()) {
            return Err(SelfTrainError::StaleManifest(format!(
                "iteration {} outputs are missing or modified",
                prev.iteration
            )));
        }
        let augmenter = match self.options.mode {
            TrainingMode::NS => Some(
                self.augmenter
                    .as_ref()
                    .filter(|a| a.enabled)
                    .ok_or(SelfTrainError::AugmenterRequired)?,
            ),
            TrainingMode::TS => None,
        };
        let train_command = self.student_model.train_command.as_ref().ok_or_else(|| {
            SelfTrainError::Template("student model spec has no train_command".into())
        })?;

        let started_at = self.now();
        let iter_rel = PathBuf::from(format!("iter{k}"));

        let (pseudo_label_dir, labeled) = if k == 1 {
            (prev.pseudo_label_dir.clone(), self.load_labeled(&prev.labels)?)
        } else {
            let teacher_model = prev.student_model.as_ref().ok_or_else(|| {
                SelfTrainError::StaleManifest(format!(
                    "iteration {} has no student model to act as teacher",
                    prev.iteration
                ))
            })?;
            let teacher_model = self.run_dir().join(teacher_model);

            // The teacher predicts on the original input of every track.
            let mut inputs = Vec::with_capacity(self.data.entries.len());
            for (i, entry) in self.data.entries.iter().enumerate() {
                let path = entry
                    .audio_path
                    .as_ref()
                    .or(entry.contour_path.as_ref())
                    .ok_or_else(|| SelfTrainError::MissingInput {
                        track: entry.track_id.clone(),
                        what: "audio_path or contour_path".into(),
                    })?;
                inputs.push((i, path.clone()));
            }
            let mut predicted =
                self.run_predict(k, &self.student_model, Some(&teacher_model), &inputs, "teacher-predict")?;
            let mut tracks = Vec::with_capacity(self.data.entries.len());
            for i in 0..self.data.entries.len() {
                tracks.push(predicted.remove(&i).expect("all tracks predicted"));
            }
            (iter_rel.join("labels"), self.quantize_and_write(k, &tracks)?)
        };

        // Student inputs: augmented audio in NS mode, original audio in TS.
        let train_audio = match augmenter {
            Some(augmenter) => self.augment_all(k, augmenter)?,
            None => self
                .data
                .entries
                .iter()
                .map(|entry| {
                    entry.audio_path.clone().ok_or_else(|| SelfTrainError::MissingInput {
                        track: entry.track_id.clone(),
                        what: "audio_path".into(),
                    })
                })
                .collect::<Result<Vec<_>, _>>()?,
        };

        let mut tsv = String::new();
        for (entry, audio, (record, _)) in
            zip3(&self.data.entries, &train_audio, &labeled)
        {
            tsv.push_str(&format!(
                "{}\t{}\t{}\n",
                entry.track_id,
                audio.display(),
                self.run_dir().join(&record.label_path).display()
            ));
        }
        let label_manifest = self.run_dir().join(&iter_rel).join("train_labels.tsv");
        atomic_write(&label_manifest, tsv.as_bytes())?;

        let model_rel = iter_rel.join("model.bin");
        let model_abs = self.run_dir().join(&model_rel);
        let train_seed = derive_seed(self.options.seed, &format!("train:iter{k}"));
        let command = train_command.render(&[
            ("label_manifest", &label_manifest.display().to_string()),
            ("output_model", &model_abs.display().to_string()),
            ("seed", &train_seed.to_string()),
        ]);
        run_shell("train", &command)?;
        let model_sha = sha256_file(&model_abs).map_err(|_| SelfTrainError::MissingOutput {
            phase: "train".into(),
            path: model_abs.display().to_string(),
        })?;

        let quality = self.quality_vs_gold(&labeled)?;
        let manifest = IterationManifest {
            iteration: k,
            teacher: prev.student.clone(),
            student: format!("model:iter{k}#{}", &model_sha[..16]),
            student_model: Some(model_rel),
            model_sha256: Some(model_sha),
            pseudo_label_dir,
            rng_seed: train_seed,
            mode: Some(self.options.mode),
            labels: labeled.into_iter().map(|(record, _)| record).collect(),
            quality,
            post_processing: self.post_processing(),
            config_digest: self.config_digest.clone(),
            started_at,
            finished_at: self.now(),
        };
        manifest.save(self.run_dir())?;
        Ok(manifest)
    }

    /// Runs iteration 0 through `n_iterations`, reusing any iteration whose
    /// on-disk manifest validates against the current inputs (same config
    /// digest, intact output hashes, unbroken teacher chain). Writes the
    /// per-iteration quality curve when gold annotations exist.
    pub fn run(&self, n_iterations: u32) -> Result<Vec<IterationManifest>, SelfTrainError> {
        if n_iterations < 1 {
            return Err(SelfTrainError::InvalidOptions(
                "n_iterations must be >= 1".into(),
            ));
        }
        let mut manifests = Vec::with_capacity(n_iterations as usize + 1);
        let first = match self.validated_manifest(0, INITIAL_LABELS_IDENT) {
            Some(m) => m,
            None => self.generate_initial_labels()?,
        };
        manifests.push(first);
        for k in 1..=n_iterations {
            let prev = manifests.last().unwrap().clone();
            let next = match self.validated_manifest(k, &prev.student) {
                Some(m) => m,
                None => self.run_iteration(k, &prev)?,
            };
            manifests.push(next);
        }
        self.write_quality_curve(&manifests)?;
        Ok(manifests)
    }

    /// Loads iteration `k`'s manifest and accepts it only if it matches the
    /// current configuration and chain and all its outputs are intact.
    fn validated_manifest(&self, k: u32, expected_teacher: &str) -> Option<IterationManifest> {
        let manifest = IterationManifest::load(self.run_dir(), k).ok()?;
        (manifest.iteration == k
            && manifest.teacher == expected_teacher
            && manifest.config_digest == self.config_digest
            && manifest.outputs_intact(self.run_dir()))
        .then_some(manifest)
    }

    fn post_processing(&self) -> PostProcessing {
        PostProcessing {
            stages: pipeline_stages(),
            quantization: self.options.quantization.clone(),
            grid_source: self.options.grid_source,
        }
    }

    /// Invokes a predict command over the given `(entry_index, input_path)`
    /// list and parses the contour it must write for each track.
    fn run_predict(
        &self,
        k: u32,
        spec: &ExternalModelSpec,
        model: Option<&Path>,
        inputs: &[(usize, PathBuf)],
        phase: &str,
    ) -> Result<std::collections::HashMap<usize, TrackContour>, SelfTrainError> {
        let iter_dir = self.run_dir().join(format!("iter{k}"));
        let out_dir = iter_dir.join("contours");
        std::fs::create_dir_all(&out_dir)?;

        let mut list = String::new();
        for (i, path) in inputs {
            list.push_str(&format!(
                "{}\t{}\n",
                self.data.entries[*i].track_id,
                path.display()
            ));
        }
        let list_path = iter_dir.join("predict_inputs.tsv");
        atomic_write(&list_path, list.as_bytes())?;

        let mut substitutions = vec![
            ("input_list", list_path.display().to_string()),
            ("output_dir", out_dir.display().to_string()),
        ];
        if let Some(model) = model {
            substitutions.push(("model", model.display().to_string()));
        }
        let rendered: Vec<(&str, &str)> = substitutions
            .iter()
            .map(|(name, value)| (*name, value.as_str()))
            .collect();
        run_shell(phase, &spec.predict_command.render(&rendered))?;

        let mut out = std::collections::HashMap::new();
        for (i, _) in inputs {
            let track_id = &self.data.entries[*i].track_id;
            let rel = PathBuf::from(format!("iter{k}/contours/{track_id}.contour.csv"));
            let abs = self.run_dir().join(&rel);
            let bytes = std::fs::read(&abs)
                .map_err(|e| SelfTrainError::schema_violation(track_id, "contour CSV", e))?;
            let contour = parse_contour_csv(&bytes)
                .map_err(|e| SelfTrainError::schema_violation(track_id, "contour CSV", e))?
                .with_track_id(track_id);
            out.insert(
                *i,
                TrackContour {
                    entry_index: *i,
                    contour,
                    source_path: rel,
                    source_sha256: sha256_hex(&bytes),
                },
            );
        }
        Ok(out)
    }

    /// Converts each contour through the full pipeline and writes one notes
    /// JSON per track under `iter<k>/labels/`.
    fn quantize_and_write(
        &self,
        k: u32,
        tracks: &[TrackContour],
    ) -> Result<Vec<(TrackRecord, NoteSequence)>, SelfTrainError> {
        let mut out = Vec::with_capacity(tracks.len());
        for track in tracks {
            let entry = &self.data.entries[track.entry_index];
            let grid = self.resolve_grid(&entry.track_id, &track.contour)?;
            let notes = convert(&track.contour, &grid, &self.options.quantization)
                .map_err(|source| SelfTrainError::Quantize {
                    track: entry.track_id.clone(),
                    source,
                })?;
            let json = notes.to_json();
            let rel = PathBuf::from(format!("iter{k}/labels/{}.notes.json", entry.track_id));
            atomic_write(&self.run_dir().join(&rel), json.as_bytes())?;
            let record = TrackRecord {
                track_id: entry.track_id.clone(),
                bpm: grid.bpm(),
                contour_path: track.source_path.clone(),
                contour_sha256: track.source_sha256.clone(),
                label_path: rel,
                label_sha256: sha256_hex(json.as_bytes()),
            };
            out.push((record, notes));
        }
        Ok(out)
    }

    fn resolve_grid(
        &self,
        track_id: &str,
        contour: &crate::contour::PitchContour,
    ) -> Result<BeatGrid, SelfTrainError> {
        let grid = match self.options.grid_source {
            GridSource::FixedBpm(bpm) => BeatGrid::new(bpm, contour.hop()),
            GridSource::EstimateFromContour => estimate_tempo(&envelope_from_contour(contour)),
        };
        grid.map_err(|source| SelfTrainError::Tempo {
            track: track_id.to_string(),
            source,
        })
    }

    /// Re-reads label files recorded by a previous iteration.
    fn load_labeled(
        &self,
        records: &[TrackRecord],
    ) -> Result<Vec<(TrackRecord, NoteSequence)>, SelfTrainError> {
        records
            .iter()
            .map(|record| {
                let bytes = std::fs::read(self.run_dir().join(&record.label_path))?;
                let text = String::from_utf8_lossy(&bytes);
                let notes = NoteSequence::from_json(&text).map_err(|e| {
                    SelfTrainError::schema_violation(&record.track_id, "notes JSON", e)
                })?;
                Ok((record.clone(), notes))
            })
            .collect()
    }

    /// Augments every track's audio with a per-track seed derived from the
    /// global seed and the track id. Invocations run concurrently up to the
    /// configured job bound.
    fn augment_all(
        &self,
        k: u32,
        augmenter: &AugmenterSpec,
    ) -> Result<Vec<PathBuf>, SelfTrainError> {
        let out_dir = self.run_dir().join(format!("iter{k}/augmented"));
        std::fs::create_dir_all(&out_dir)?;

        let mut jobs_spec = Vec::with_capacity(self.data.entries.len());
        for entry in &self.data.entries {
            let input = entry.audio_path.as_ref().ok_or_else(|| {
                SelfTrainError::MissingInput {
                    track: entry.track_id.clone(),
                    what: "audio_path".into(),
                }
            })?;
            let ext = input
                .extension()
                .map(|e| e.to_string_lossy().into_owned())
                .unwrap_or_else(|| "dat".into());
            let output = out_dir.join(format!("{}.{}", entry.track_id, ext));
            let seed = derive_seed(self.options.seed, &entry.track_id);
            jobs_spec.push((input.clone(), output, seed));
        }

        parallel_try_for_each(&jobs_spec, self.options.jobs, |(input, output, seed)| {
            let command = augmenter.command.render(&[
                ("input_audio", &input.display().to_string()),
                ("output_audio", &output.display().to_string()),
                ("seed", &seed.to_string()),
            ]);
            run_shell("augment", &command)?;
            if !output.exists() {
                return Err(SelfTrainError::MissingOutput {
                    phase: "augment".into(),
                    path: output.display().to_string(),
                });
            }
            Ok(())
        })?;

        Ok(jobs_spec.into_iter().map(|(_, output, _)| output).collect())
    }

    /// Scores each track's pseudo labels against its gold annotation, when
    /// any entry carries one.
    fn quality_vs_gold(
        &self,
        labeled: &[(TrackRecord, NoteSequence)],
    ) -> Result<Option<QualitySummary>, SelfTrainError> {
        let mut pairs = Vec::new();
        for (entry, (_, notes)) in self.data.entries.iter().zip(labeled) {
            let Some(gold_path) = &entry.gold_notes_path else { continue };
            let bytes = std::fs::read(gold_path)?;
            let text = String::from_utf8_lossy(&bytes);
            let gold = NoteSequence::from_json(&text).map_err(|e| {
                SelfTrainError::schema_violation(&entry.track_id, "notes JSON", e)
            })?;
            pairs.push((gold, notes.clone()));
        }
        if pairs.is_empty() {
            return Ok(None);
        }
        let report = score_corpus(&pairs, &self.options.eval_config)?;
        Ok(Some(QualitySummary::from(&report)))
    }

    fn write_quality_curve(
        &self,
        manifests: &[IterationManifest],
    ) -> Result<(), SelfTrainError> {
        if manifests.iter().all(|m| m.quality.is_none()) {
            return Ok(());
        }
        #[derive(Serialize)]
        struct Point<'a> {
            iteration: u32,
            quality: &'a Option<QualitySummary>,
        }
        #[derive(Serialize)]
        struct Curve<'a> {
            iterations: Vec<Point<'a>>,
        }
        let curve = Curve {
            iterations: manifests
                .iter()
                .map(|m| Point { iteration: m.iteration, quality: &m.quality })
                .collect(),
        };
        let mut text = serde_json::to_string_pretty(&curve)?;
        text.push('\n');
        atomic_write(&self.run_dir().join("quality_curve.json"), text.as_bytes())?;
        Ok(())
    }
}

fn zip3<'a, A, B, C>(
    a: &'a [A],
    b: &'a [B],
    c: &'a [C],
) -> impl Iterator<Item = (&'a A, &'a B, &'a C)> {
    a.iter().zip(b).zip(c).map(|((x, y), z)| (x, y, z))
}

/// Runs `f` over the items with at most `jobs` worker threads, stopping at
/// the first error.
fn parallel_try_for_each<T: Sync>(
    items: &[T],
    jobs: usize,
    f: impl Fn(&T) -> Result<(), SelfTrainError> + Sync,
) -> Result<(), SelfTrainError> {
    let jobs = jobs.min(items.len()).max(1);
    if jobs == 1 {
        return items.iter().try_for_each(f);
    }
    let next = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let failure: Mutex<Option<SelfTrainError>> = Mutex::new(None);
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                if stop.load(Ordering::Relaxed) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                if let Err(e) = f(&items[i]) {
                    let mut slot = failure.lock().unwrap();
                    if slot.is_none() {
                        *slot = Some(e);
                    }
                    stop.store(true, Ordering::Relaxed);
                    break;
                }
            });
        }
    });
    match failure.into_inner().unwrap() {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn compute_config_digest(
    data: &DatasetManifest,
    pitch_model: &ExternalModelSpec,
    student_model: &ExternalModelSpec,
    augmenter: &Option<AugmenterSpec>,
    options: &RunOptions,
) -> Result<String, SelfTrainError> {
    #[derive(Serialize)]
    struct EntryFingerprint<'a> {
        track_id: &'a str,
        audio_sha256: Option<String>,
        contour_sha256: Option<String>,
        gold_sha256: Option<String>,
    }
    #[derive(Serialize)]
    struct Fingerprint<'a> {
        entries: Vec<EntryFingerprint<'a>>,
        pitch_model: &'a ExternalModelSpec,
        pitch_model_sha256: Option<String>,
        student_model: &'a ExternalModelSpec,
        augmenter: &'a Option<AugmenterSpec>,
        mode: TrainingMode,
        seed: u64,
        quantization: &'a QuantizationConfig,
        grid_source: GridSource,
    }

    let hash_input = |entry: &DatasetEntry, path: &Option<PathBuf>| -> Result<Option<String>, SelfTrainError> {
        match path {
            None => Ok(None),
            Some(p) => sha256_file(p).map(Some).map_err(|_| SelfTrainError::MissingInput {
                track: entry.track_id.clone(),
                what: format!("unreadable file {}", p.display()),
            }),
        }
    };

    let mut entries = Vec::with_capacity(data.entries.len());
    for entry in &data.entries {
        entries.push(EntryFingerprint {
            track_id: &entry.track_id,
            audio_sha256: hash_input(entry, &entry.audio_path)?,
            contour_sha256: hash_input(entry, &entry.contour_path)?,
            gold_sha256: hash_input(entry, &entry.gold_notes_path)?,
        });
    }
    let pitch_model_sha256 = match &pitch_model.model_artifact {
        Some(path) => Some(sha256_file(path).map_err(|_| SelfTrainError::MissingInput {
            track: "<pitch model>".into(),
            what: format!("unreadable model artifact {}", path.display()),
        })?),
        None => None,
    };

    let fingerprint = Fingerprint {
        entries,
        pitch_model,
        pitch_model_sha256,
        student_model,
        augmenter,
        mode: options.mode,
        seed: options.seed,
        quantization: &options.quantization,
        grid_source: options.grid_source,
    };
    Ok(sha256_hex(&serde_json::to_vec(&fingerprint)?))
}
