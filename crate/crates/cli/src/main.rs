//! `connote` command line: contour-to-note conversion, tempo estimation,
//! transcription scoring, self-training orchestration, and MIDI export.
//!
//! Exit codes: 0 on success, 1 on any domain error (bad input file, failed
//! external command, ...), 2 on usage errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{ArgGroup, Args, Parser, Subcommand};

use connote::contour::{parse_contour_csv, PitchContour};
use connote::eval::{report_to_json, score, score_corpus, EvalConfig};
use connote::fsutil::atomic_write;
use connote::midi::write_smf;
use connote::notes::NoteSequence;
use connote::quantize::{convert, QuantizationConfig};
use connote::selftrain::{
    AugmenterSpec, DatasetManifest, ExternalModelSpec, GridSource, RunOptions, SelfTrainer,
    TrainingMode,
};
use connote::tempo::{
    envelope_from_contour, estimate_tempo, parse_envelope_csv, BeatFraction, BeatGrid,
    OnsetEnvelope, BPM_MAX, BPM_MIN,
};

#[derive(Parser)]
#[command(name = "connote", version, about = "Singing transcription toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a pitch contour CSV into a note-level transcription
    Convert(ConvertArgs),
    /// Estimate a global tempo from an onset envelope or a contour
    Tempo(TempoArgs),
    /// Score an estimated transcription against a reference
    Eval(EvalArgs),
    /// Run iterative teacher-student self-training over external commands
    Selftrain(SelftrainArgs),
    /// Export a note-level transcription as a Standard MIDI File
    ExportMidi(ExportMidiArgs),
}

fn parse_fraction(s: &str) -> Result<BeatFraction, String> {
    s.parse::<BeatFraction>().map_err(|e| e.to_string())
}

fn parse_mode(s: &str) -> Result<TrainingMode, String> {
    s.parse()
}

fn parse_unit_interval(s: &str) -> Result<f64, String> {
    let value: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(format!("{value} is not in [0, 1]"))
    }
}

fn parse_positive(s: &str) -> Result<f64, String> {
    let value: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(format!("{value} is not positive"))
    }
}

#[derive(Args)]
struct QuantArgs {
    /// Treat frames below this confidence as unvoiced [default: 0.5]
    #[arg(long, value_parser = parse_unit_interval)]
    confidence_floor: Option<f64>,
    /// Median filter sizes as beat fractions [default: 1/32,1/16,1/12]
    #[arg(long, value_delimiter = ',', value_parser = parse_fraction)]
    filters: Option<Vec<BeatFraction>>,
    /// Drop voiced runs shorter than this beat fraction [default: 1/16]
    #[arg(long, value_parser = parse_fraction)]
    fragment_fraction: Option<BeatFraction>,
    /// Context window in seconds for octave correction [default: 2.0]
    #[arg(long, value_parser = parse_positive)]
    octave_context: Option<f64>,
}

impl QuantArgs {
    fn to_config(&self) -> QuantizationConfig {
        let mut config = QuantizationConfig::default();
        if let Some(floor) = self.confidence_floor {
            config.confidence_floor = floor;
        }
        if let Some(filters) = &self.filters {
            config.filter_fractions = filters.clone();
        }
        if let Some(fraction) = self.fragment_fraction {
            config.min_fragment_fraction = fraction;
        }
        if let Some(seconds) = self.octave_context {
            config.octave_context_seconds = seconds;
        }
        config
    }
}

#[derive(Args)]
struct ConvertArgs {
    /// Input contour CSV (time_sec,f0_hz,confidence)
    #[arg(long)]
    contour: PathBuf,
    /// Output notes JSON path
    #[arg(long)]
    out: PathBuf,
    /// Tempo in BPM; skips estimation
    #[arg(long, conflicts_with = "envelope")]
    bpm: Option<f64>,
    /// Onset-strength envelope CSV (time_sec,strength) for tempo estimation
    #[arg(long)]
    envelope: Option<PathBuf>,
    /// Track id written into the output [default: contour file stem]
    #[arg(long)]
    track_id: Option<String>,
    /// Override the hop inferred from the time column (seconds)
    #[arg(long)]
    hop: Option<f64>,
    #[command(flatten)]
    quant: QuantArgs,
}

#[derive(Args)]
#[command(group = ArgGroup::new("source").args(["envelope", "contour"]).required(true))]
struct TempoArgs {
    /// Onset-strength envelope CSV (time_sec,strength)
    #[arg(long)]
    envelope: Option<PathBuf>,
    /// Pitch contour CSV to derive an envelope from
    #[arg(long)]
    contour: Option<PathBuf>,
}

#[derive(Args)]
#[command(group = ArgGroup::new("input").args(["reference", "corpus"]).required(true))]
struct EvalArgs {
    /// Reference notes JSON
    #[arg(long = "ref", requires = "est")]
    reference: Option<PathBuf>,
    /// Estimated notes JSON
    #[arg(long, requires = "reference")]
    est: Option<PathBuf>,
    /// TSV corpus manifest, one "track_id, ref_path, est_path" line per track
    #[arg(long, conflicts_with_all = ["reference", "est"])]
    corpus: Option<PathBuf>,
    /// Onset tolerance in seconds [default: 0.05]
    #[arg(long)]
    onset_tolerance: Option<f64>,
    /// Offset tolerance floor in seconds [default: 0.05]
    #[arg(long)]
    offset_min_tolerance: Option<f64>,
    /// Offset tolerance as a fraction of reference duration [default: 0.2]
    #[arg(long)]
    offset_ratio: Option<f64>,
    /// Pitch tolerance in cents [default: 50]
    #[arg(long)]
    pitch_tolerance: Option<f64>,
}

#[derive(Args)]
struct SelftrainArgs {
    /// Run configuration JSON (dataset, model specs, augmenter)
    #[arg(long)]
    config: PathBuf,
    /// Directory for iteration manifests and outputs
    #[arg(long)]
    run_dir: PathBuf,
    /// Number of self-training iterations after iteration 0
    #[arg(long, default_value_t = 3)]
    iterations: u32,
    /// TS (basic teacher-student) or NS (noisy student)
    #[arg(long, default_value = "NS", value_parser = parse_mode)]
    mode: TrainingMode,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Concurrent external-command invocations per phase
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Fixed tempo for every track instead of per-track estimation
    #[arg(long)]
    bpm: Option<f64>,
}

#[derive(Args)]
struct ExportMidiArgs {
    /// Input notes JSON
    #[arg(long)]
    notes: PathBuf,
    /// Tempo written into the file
    #[arg(long)]
    bpm: f64,
    /// Output .mid path
    #[arg(long)]
    out: PathBuf,
}

/// Everything `selftrain` needs beyond command-line flags.
#[derive(serde::Deserialize)]
struct SelftrainConfig {
    dataset: DatasetManifest,
    pitch_model: ExternalModelSpec,
    student_model: ExternalModelSpec,
    #[serde(default)]
    augmenter: Option<AugmenterSpec>,
    #[serde(default)]
    quantization: Option<QuantizationConfig>,
    #[serde(default)]
    evaluation: Option<EvalConfig>,
    #[serde(default)]
    grid_source: Option<GridSource>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Convert(args) => cmd_convert(args),
        Command::Tempo(args) => cmd_tempo(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Selftrain(args) => cmd_selftrain(args),
        Command::ExportMidi(args) => cmd_export_midi(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            eprintln!("error: {error:#}");
            ExitCode::from(1)
        }
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn load_contour(path: &Path) -> Result<PitchContour> {
    let bytes = read_bytes(path)?;
    let contour =
        parse_contour_csv(&bytes).with_context(|| format!("parsing {}", path.display()))?;
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(contour.with_track_id(stem))
}

fn load_notes(path: &Path) -> Result<NoteSequence> {
    let bytes = read_bytes(path)?;
    let text = String::from_utf8(bytes)
        .with_context(|| format!("{} is not valid UTF-8", path.display()))?;
    NoteSequence::from_json(&text).with_context(|| format!("parsing {}", path.display()))
}

fn check_bpm(bpm: f64) -> Result<f64> {
    if !bpm.is_finite() || !(BPM_MIN..=BPM_MAX).contains(&bpm) {
        bail!("bpm {bpm} outside [{BPM_MIN}, {BPM_MAX}]");
    }
    Ok(bpm)
}

fn cmd_convert(args: ConvertArgs) -> Result<()> {
    let mut contour = load_contour(&args.contour)?;
    if let Some(track_id) = args.track_id {
        contour = contour.with_track_id(track_id);
    }
    if let Some(hop) = args.hop {
        contour = contour.with_hop(hop)?;
    }

    let bpm = match (args.bpm, &args.envelope) {
        (Some(bpm), _) => check_bpm(bpm)?,
        (None, Some(path)) => {
            let envelope = parse_envelope_csv(&read_bytes(path)?)
                .with_context(|| format!("parsing {}", path.display()))?;
            estimate_tempo(&envelope)?.bpm()
        }
        (None, None) => estimate_tempo(&envelope_from_contour(&contour))?.bpm(),
    };
    let grid = BeatGrid::new(bpm, contour.hop())?;

    let notes = convert(&contour, &grid, &args.quant.to_config())?;
    atomic_write(&args.out, notes.to_json().as_bytes())
        .with_context(|| format!("writing {}", args.out.display()))?;
    println!("{}: {} notes, bpm {:.2}", args.out.display(), notes.len(), bpm);
    Ok(())
}

fn cmd_tempo(args: TempoArgs) -> Result<()> {
    let envelope: OnsetEnvelope = match (&args.envelope, &args.contour) {
        (Some(path), _) => parse_envelope_csv(&read_bytes(path)?)
            .with_context(|| format!("parsing {}", path.display()))?,
        (None, Some(path)) => envelope_from_contour(&load_contour(path)?),
        (None, None) => unreachable!("clap group enforces one source"),
    };
    let grid = estimate_tempo(&envelope)?;
    println!("{{\"bpm\":{:.6}}}", grid.bpm());
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let mut config = EvalConfig::default();
    if let Some(v) = args.onset_tolerance {
        config.onset_tolerance = v;
    }
    if let Some(v) = args.offset_min_tolerance {
        config.offset_min_tolerance = v;
    }
    if let Some(v) = args.offset_ratio {
        config.offset_ratio = v;
    }
    if let Some(v) = args.pitch_tolerance {
        config.pitch_tolerance_cents = v;
    }
    config.validate()?;

    let report = if let Some(corpus) = &args.corpus {
        let text = String::from_utf8(read_bytes(corpus)?)
            .with_context(|| format!("{} is not valid UTF-8", corpus.display()))?;
        let mut pairs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                bail!(
                    "{} line {}: expected track_id<TAB>ref_path<TAB>est_path",
                    corpus.display(),
                    i + 1
                );
            }
            pairs.push((
                load_notes(Path::new(fields[1]))?,
                load_notes(Path::new(fields[2]))?,
            ));
        }
        score_corpus(&pairs, &config)?
    } else {
        let reference = load_notes(args.reference.as_ref().expect("clap group"))?;
        let estimate = load_notes(args.est.as_ref().expect("requires ref"))?;
        score(&reference, &estimate, &config)
    };
    print!("{}", report_to_json(&report));
    Ok(())
}

fn cmd_selftrain(args: SelftrainArgs) -> Result<()> {
    let text = String::from_utf8(read_bytes(&args.config)?)
        .with_context(|| format!("{} is not valid UTF-8", args.config.display()))?;
    let config: SelftrainConfig = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", args.config.display()))?;

    let mut options = RunOptions::new(&args.run_dir);
    options.mode = args.mode;
    options.seed = args.seed;
    options.jobs = args.jobs;
    if let Some(quant) = config.quantization {
        options.quantization = quant;
    }
    if let Some(eval) = config.evaluation {
        options.eval_config = eval;
    }
    if let Some(grid) = config.grid_source {
        options.grid_source = grid;
    }
    if let Some(bpm) = args.bpm {
        options.grid_source = GridSource::FixedBpm(check_bpm(bpm)?);
    }

    let trainer = SelfTrainer::new(
        config.dataset,
        config.pitch_model,
        config.student_model,
        config.augmenter,
        options,
    )?;
    let manifests = trainer.run(args.iterations)?;
    for manifest in &manifests {
        let quality = manifest
            .quality
            .as_ref()
            .map(|q| format!(", COnP f1 {:.4}", q.conp.f1))
            .unwrap_or_default();
        println!(
            "iter {}: teacher {} -> student {}{}",
            manifest.iteration, manifest.teacher, manifest.student, quality
        );
    }
    let curve = args.run_dir.join("quality_curve.json");
    if curve.exists() {
        println!("quality curve: {}", curve.display());
    }
    Ok(())
}

fn cmd_export_midi(args: ExportMidiArgs) -> Result<()> {
    let notes = load_notes(&args.notes)?;
    let bpm = check_bpm(args.bpm)?;
    let bytes = write_smf(&notes, bpm);
    atomic_write(&args.out, &bytes)
        .with_context(|| format!("writing {}", args.out.display()))?;
    println!("{}: {} notes at {:.2} bpm", args.out.display(), notes.len(), bpm);
    Ok(())
}
