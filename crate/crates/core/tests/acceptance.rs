//! Acceptance suite: property-based and exact small-scale checks for every
//! subsystem, each with an explicit runtime budget. Run with
//! `cargo test --test acceptance -- --nocapture` to see per-criterion lines.

use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use connote::contour::{parse_contour_csv, write_contour_csv, PitchContour, PitchFrame};
use connote::eval::{match_valid, score, EvalConfig, Level};
use connote::midi::{read_smf, write_smf, TICKS_PER_QUARTER};
use connote::notes::{hz_from_midi, midi_from_hz, NoteEvent, NoteSequence, MIDI_MAX, MIDI_MIN};
use connote::quantize::{
    convert, correct_octaves, quantize_pitch, remove_fragments, render_contour, rhythm_quantize,
    segment_notes, QuantizationConfig,
};
use connote::selftrain::{
    AugmenterSpec, CommandTemplate, DatasetEntry, DatasetManifest, DatasetRole,
    ExternalModelSpec, GridSource, RunOptions, SelfTrainer, TrainingMode, INITIAL_LABELS_IDENT,
};
use connote::tempo::{estimate_tempo, BeatFraction, BeatGrid, OnsetEnvelope};

fn finish(criterion: &str, started: Instant, budget_secs: f64) {
    let elapsed = started.elapsed().as_secs_f64();
    assert!(
        elapsed < budget_secs,
        "{criterion} exceeded its {budget_secs} s budget: {elapsed:.2} s"
    );
    println!("acceptance {criterion}: PASS ({elapsed:.2}s)");
}

/// Criterion 1: semitone rounding matches an independent nearest-pitch scan
/// for every integer frequency from 60 to 1200 Hz.
#[test]
fn criterion_1_pitch_quantization_oracle() {
    let started = Instant::now();

    // Oracle: scan all MIDI candidates for the smallest absolute distance
    // in log-frequency, ties resolved upward.
    fn nearest_midi(hz: f64) -> i32 {
        let exact = 69.0 + 12.0 * (hz / 440.0).log2();
        let mut best = 0i32;
        let mut best_gap = f64::INFINITY;
        for candidate in 0..=150 {
            let gap = (exact - candidate as f64).abs();
            if gap < best_gap || (gap == best_gap && candidate > best) {
                best_gap = gap;
                best = candidate;
            }
        }
        best
    }

    let mut mismatches = 0;
    for hz in 60..=1200u32 {
        let hz = hz as f64;
        let got = midi_from_hz(hz);
        if got != nearest_midi(hz) {
            mismatches += 1;
        }
        // Half-semitone bound before clamping.
        let exact = 69.0 + 12.0 * (hz / 440.0).log2();
        assert!((got as f64 - exact).abs() <= 0.5 + 1e-12);
    }
    assert_eq!(mismatches, 0);
    finish("1 pitch-quantization-oracle", started, 1.0);
}

/// Criterion 2: the hand-derived filter-size triple at 120 BPM / 10 ms hop,
/// plus odd-and-positive windows over 1,000 random grids.
#[test]
fn criterion_2_filter_size_table() {
    let started = Instant::now();

    let grid = BeatGrid::new(120.0, 0.010).unwrap();
    let fractions = [
        BeatFraction::THIRTY_SECOND,
        BeatFraction::SIXTEENTH,
        BeatFraction::TWELFTH,
    ];
    let windows: Vec<usize> = fractions
        .iter()
        .map(|&f| grid.frames_for_beat_fraction(f))
        .collect();
    assert_eq!(windows, vec![1, 3, 5]);

    let mut rng = StdRng::seed_from_u64(0x5eed_0002);
    for _ in 0..1000 {
        let bpm = rng.gen_range(30.0..=300.0);
        let hop = rng.gen_range(0.001..=0.05);
        let grid = BeatGrid::new(bpm, hop).unwrap();
        for &fraction in &fractions {
            let window = grid.frames_for_beat_fraction(fraction);
            assert!(window >= 1, "window {window} at bpm {bpm} hop {hop}");
            assert_eq!(window % 2, 1, "window {window} at bpm {bpm} hop {hop}");
        }
    }
    finish("2 filter-size-table", started, 1.0);
}

fn random_contour(rng: &mut StdRng) -> (PitchContour, BeatGrid) {
    let hop = [0.005, 0.008, 0.010, 0.016, 0.020][rng.gen_range(0..5)];
    let bpm = rng.gen_range(30.0..=300.0);
    let total = rng.gen_range(200..800);
    let mut frames = Vec::with_capacity(total);
    while frames.len() < total {
        let run = rng.gen_range(1..=60).min(total - frames.len());
        if rng.gen_bool(0.7) {
            let midi = rng.gen_range(40..=90);
            let detune = (rng.gen_range(-45.0..45.0) / 1200.0f64).exp2();
            let f0 = hz_from_midi(midi) * detune;
            let confidence = rng.gen_range(0.0..=1.0);
            frames.extend(std::iter::repeat_n(PitchFrame { f0, confidence }, run));
        } else {
            frames.extend(std::iter::repeat_n(PitchFrame { f0: 0.0, confidence: 0.0 }, run));
        }
    }
    let contour = PitchContour::new(hop, frames, "rand").unwrap();
    let grid = BeatGrid::new(bpm, hop).unwrap();
    (contour, grid)
}

/// Criterion 3: after conversion, every surviving note is at least the
/// fragment threshold long (minus half a hop of slack), over 200 random
/// contours.
#[test]
fn criterion_3_fragment_guarantee() {
    let started = Instant::now();
    let config = QuantizationConfig::default();
    let mut rng = StdRng::seed_from_u64(0x5eed_0003);
    let mut total_notes = 0usize;
    for _ in 0..200 {
        let (contour, grid) = random_contour(&mut rng);
        let floor = (60.0 / grid.bpm()) / 16.0 - contour.hop() / 2.0;
        let notes = convert(&contour, &grid, &config).unwrap();
        total_notes += notes.len();
        for note in notes.notes() {
            assert!(
                note.duration() >= floor,
                "note of {:.4} s under floor {:.4} s (bpm {}, hop {})",
                note.duration(),
                floor,
                grid.bpm(),
                contour.hop()
            );
        }
    }
    assert!(total_notes > 0, "trivially empty corpus");
    finish("3 fragment-guarantee", started, 5.0);
}

/// Criterion 4: octave correction preserves pitch class and never leaves
/// the MIDI range, over 200 random contours.
#[test]
fn criterion_4_octave_rule_safety() {
    let started = Instant::now();
    let config = QuantizationConfig::default();
    let mut rng = StdRng::seed_from_u64(0x5eed_0004);
    for _ in 0..200 {
        let (contour, grid) = random_contour(&mut rng);
        let q = quantize_pitch(&contour, &config);
        let q = rhythm_quantize(&q, &grid, &config).unwrap();
        let before = remove_fragments(&q, &grid, &config).unwrap();
        let after = correct_octaves(&before, &config);
        for (a, b) in before.labels().iter().zip(after.labels()) {
            match (a.pitch(), b.pitch()) {
                (None, None) => {}
                (Some(x), Some(y)) => {
                    assert_eq!(x % 12, y % 12, "pitch class changed: {x} -> {y}");
                    assert!((MIDI_MIN..=MIDI_MAX).contains(&y));
                }
                _ => panic!("voicing changed"),
            }
        }
    }
    finish("4 octave-rule-safety", started, 5.0);
}

fn random_sequence(rng: &mut StdRng, max_notes: usize) -> NoteSequence {
    let count = rng.gen_range(0..=max_notes);
    let mut t = 0.0;
    let mut notes = Vec::with_capacity(count);
    for _ in 0..count {
        let onset = t + rng.gen_range(0.0..0.2);
        let offset = onset + rng.gen_range(0.05..0.8);
        t = offset;
        notes.push(NoteEvent {
            onset,
            offset,
            pitch: rng.gen_range(55..=70),
        });
    }
    NoteSequence::new("rand", notes).unwrap()
}

fn brute_force_cardinality(
    reference: &[NoteEvent],
    estimate: &[NoteEvent],
    config: &EvalConfig,
    level: Level,
) -> usize {
    fn valid(config: &EvalConfig, r: &NoteEvent, e: &NoteEvent, level: Level) -> bool {
        if (r.onset - e.onset).abs() > config.onset_tolerance {
            return false;
        }
        if matches!(level, Level::COnP | Level::COnPOff)
            && (100.0 * (r.pitch as f64 - e.pitch as f64)).abs() > config.pitch_tolerance_cents
        {
            return false;
        }
        if matches!(level, Level::COnPOff) {
            let tol = config.offset_tolerance_for(r.offset - r.onset);
            if (r.offset - e.offset).abs() > tol {
                return false;
            }
        }
        true
    }
    fn recurse(
        r: usize,
        reference: &[NoteEvent],
        estimate: &[NoteEvent],
        used: &mut [bool],
        config: &EvalConfig,
        level: Level,
    ) -> usize {
        if r == reference.len() {
            return 0;
        }
        let mut best = recurse(r + 1, reference, estimate, used, config, level);
        for e in 0..estimate.len() {
            if !used[e] && valid(config, &reference[r], &estimate[e], level) {
                used[e] = true;
                best = best.max(1 + recurse(r + 1, reference, estimate, used, config, level));
                used[e] = false;
            }
        }
        best
    }
    let mut used = vec![false; estimate.len()];
    recurse(0, reference, estimate, &mut used, config, level)
}

/// Criterion 5: on 500 random small instances the matcher's F1 equals the
/// exhaustive all-matchings optimum exactly, and the three levels are
/// monotone.
#[test]
fn criterion_5_metric_oracle_equivalence() {
    let started = Instant::now();
    let config = EvalConfig::default();
    let mut rng = StdRng::seed_from_u64(0x5eed_0005);
    for _ in 0..500 {
        let reference = random_sequence(&mut rng, 8);
        let estimate = random_sequence(&mut rng, 8);
        let report = score(&reference, &estimate, &config);
        for level in Level::ALL {
            let cardinality =
                brute_force_cardinality(reference.notes(), estimate.notes(), &config, level);
            // Same P/R/F1 arithmetic over the oracle cardinality.
            let precision = if estimate.is_empty() {
                0.0
            } else {
                cardinality as f64 / estimate.len() as f64
            };
            let recall = if reference.is_empty() {
                0.0
            } else {
                cardinality as f64 / reference.len() as f64
            };
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            let got = report.scores.get(level);
            assert_eq!(got.precision, precision, "{}", level.name());
            assert_eq!(got.recall, recall, "{}", level.name());
            assert_eq!(got.f1, f1, "{}", level.name());
        }
        assert!(report.scores.conpoff.f1 <= report.scores.conp.f1);
        assert!(report.scores.conp.f1 <= report.scores.con.f1);
    }
    finish("5 metric-oracle-equivalence", started, 30.0);
}

/// Criterion 6: inclusive onset boundary at exactly 50 ms, and the offset
/// tolerance formula at three hand-picked durations.
#[test]
fn criterion_6_threshold_boundaries() {
    let started = Instant::now();
    let config = EvalConfig::default();

    for (delta, expect_match) in [(0.049, true), (0.050, true), (0.051, false)] {
        let reference =
            NoteSequence::new("r", vec![NoteEvent { onset: 0.0, offset: 1.0, pitch: 60 }])
                .unwrap();
        let estimate = NoteSequence::new(
            "e",
            vec![NoteEvent { onset: delta, offset: 1.0 + delta, pitch: 60 }],
        )
        .unwrap();
        let matched = !match_valid(&reference, &estimate, &config, Level::COn).is_empty();
        assert_eq!(matched, expect_match, "onset delta {delta}");
    }

    for (duration, expected) in [(0.1, 0.05), (0.25, 0.05), (1.0, 0.2)] {
        let got = config.offset_tolerance_for(duration);
        assert_eq!(got, f64::max(0.05, 0.2 * duration));
        assert!((got - expected).abs() < 1e-12, "duration {duration}");
    }
    finish("6 threshold-boundaries", started, 1.0);
}

/// Shared stub-command fixture for criterion 7.
struct StubRun {
    _tmp: tempfile::TempDir,
    root: PathBuf,
    data: DatasetManifest,
    log: PathBuf,
}

fn blip_corpus() -> (StubRun, Vec<NoteSequence>, Vec<PitchContour>) {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().to_path_buf();
    let fixtures = root.join("fixtures");
    fs::create_dir_all(&fixtures).unwrap();
    let log = root.join("calls.log");
    fs::write(&log, "").unwrap();

    let hop = 0.01;
    let mut rng = StdRng::seed_from_u64(0x5eed_0007);
    let mut entries = Vec::new();
    let mut golds = Vec::new();
    let mut corrupted = Vec::new();
    for track in 0..4 {
        let track_id = format!("track{track}");
        // Five notes per track, 0.4-0.6 s each, pitches stepping by at most
        // 7 semitones, separated by 0.1 s gaps or back to back.
        let mut notes = Vec::new();
        let mut t = 0.1;
        let mut pitch = rng.gen_range(58..=66);
        for i in 0..5 {
            let frames = rng.gen_range(40..=60);
            let duration = frames as f64 * hop;
            notes.push(NoteEvent {
                onset: t,
                offset: t + duration,
                pitch: pitch as u8,
            });
            t += duration;
            if i % 2 == 0 {
                t += 0.1;
            }
            pitch += if pitch > 70 { -rng.gen_range(2..=7) } else { rng.gen_range(2..=7) };
        }
        let gold = NoteSequence::new(&track_id, notes).unwrap();

        // Corrupt the rendered contour with two single-frame pitch blips
        // per note, at least 10 frames from the note edges.
        let clean = render_contour(&gold, hop);
        let mut frames: Vec<PitchFrame> = clean.frames().to_vec();
        for note in gold.notes() {
            let start = (note.onset / hop).round() as usize;
            let end = (note.offset / hop).round() as usize;
            for _ in 0..2 {
                let at = rng.gen_range(start + 10..end - 10);
                frames[at].f0 = hz_from_midi(note.pitch as i32 + 3);
            }
        }
        let noisy = PitchContour::new(hop, frames, &track_id).unwrap();

        let gold_path = fixtures.join(format!("{track_id}.gold.json"));
        fs::write(&gold_path, gold.to_json()).unwrap();
        let contour_path = fixtures.join(format!("{track_id}.contour.csv"));
        fs::write(&contour_path, write_contour_csv(&noisy)).unwrap();
        let audio_path = fixtures.join(format!("{track_id}.wav"));
        fs::write(&audio_path, format!("audio {track_id}")).unwrap();

        entries.push(DatasetEntry {
            track_id: track_id.clone(),
            audio_path: Some(audio_path),
            contour_path: Some(contour_path),
            gold_notes_path: Some(gold_path),
        });
        golds.push(gold);
        corrupted.push(noisy);
    }

    // Stub commands: predict re-emits the fixture contours, train copies
    // the label manifest into the model file, augment copies audio.
    fs::write(
        root.join("predict.sh"),
        format!(
            "#!/bin/sh\nset -e\necho predict >> \"{}\"\nout=\"$2\"\n\
             while IFS=\"$(printf '\\t')\" read -r id path; do\n\
             cp \"{}/$id.contour.csv\" \"$out/$id.contour.csv\"\ndone < \"$1\"\n",
            log.display(),
            fixtures.display()
        ),
    )
    .unwrap();
    fs::write(
        root.join("train.sh"),
        format!("#!/bin/sh\nset -e\necho train >> \"{}\"\ncat \"$1\" > \"$2\"\n", log.display()),
    )
    .unwrap();
    fs::write(
        root.join("augment.sh"),
        format!("#!/bin/sh\nset -e\necho augment >> \"{}\"\ncp \"$1\" \"$2\"\n", log.display()),
    )
    .unwrap();

    let run = StubRun {
        _tmp: tmp,
        root,
        data: DatasetManifest { role: DatasetRole::Unlabeled, entries },
        log,
    };
    (run, golds, corrupted)
}

fn stub_trainer(fx: &StubRun) -> SelfTrainer {
    let mut options = RunOptions::new(fx.root.join("runs/acceptance"));
    options.mode = TrainingMode::NS;
    options.seed = 7;
    options.jobs = 2;
    options.grid_source = GridSource::FixedBpm(120.0);
    options.fixed_timestamp = Some("2024-01-01T00:00:00Z".into());
    SelfTrainer::new(
        fx.data.clone(),
        ExternalModelSpec {
            predict_command: CommandTemplate::new(format!(
                "sh {}/predict.sh {{input_list}} {{output_dir}}",
                fx.root.display()
            )),
            train_command: None,
            model_artifact: None,
        },
        ExternalModelSpec {
            predict_command: CommandTemplate::new(format!(
                "sh {}/predict.sh {{input_list}} {{output_dir}} {{model}}",
                fx.root.display()
            )),
            train_command: Some(CommandTemplate::new(format!(
                "sh {}/train.sh {{label_manifest}} {{output_model}} {{seed}}",
                fx.root.display()
            ))),
            model_artifact: None,
        },
        Some(AugmenterSpec {
            command: CommandTemplate::new(format!(
                "sh {}/augment.sh {{input_audio}} {{output_audio}} {{seed}}",
                fx.root.display()
            )),
            enabled: true,
        }),
        options,
    )
    .unwrap()
}

fn read_tree(dir: &std::path::Path) -> std::collections::BTreeMap<PathBuf, Vec<u8>> {
    let mut out = std::collections::BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(current) = stack.pop() {
        for entry in fs::read_dir(&current).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    out
}

/// Criterion 7: a 3-iteration stub run keeps the teacher chain intact and
/// reruns byte-identically; on a blip-corrupted corpus, quantized
/// iteration-0 labels beat raw-contour segmentation against gold.
#[test]
fn criterion_7_self_training_chain() {
    let started = Instant::now();
    let (fx, golds, corrupted) = blip_corpus();
    let trainer = stub_trainer(&fx);

    let manifests = trainer.run(3).unwrap();
    assert_eq!(manifests.len(), 4);
    assert_eq!(manifests[0].teacher, INITIAL_LABELS_IDENT);
    assert_eq!(manifests[1].teacher, INITIAL_LABELS_IDENT);
    for k in 1..manifests.len() {
        assert_eq!(manifests[k].teacher, manifests[k - 1].student, "chain at {k}");
    }

    // With the identity stub teacher, re-quantized labels never degrade.
    let q0 = manifests[0].quality.as_ref().unwrap().conp.f1;
    for manifest in &manifests[1..] {
        assert!(manifest.quality.as_ref().unwrap().conp.f1 >= q0);
    }

    // Byte-identical rerun with no further command invocations.
    let run_dir = fx.root.join("runs/acceptance");
    let before = read_tree(&run_dir);
    let calls_before = fs::read_to_string(&fx.log).unwrap();
    stub_trainer(&fx).run(3).unwrap();
    assert_eq!(read_tree(&run_dir), before, "rerun changed run artifacts");
    assert_eq!(fs::read_to_string(&fx.log).unwrap(), calls_before, "rerun invoked commands");

    // Label quality: quantized pseudo labels vs raw contour segmentation.
    let config = QuantizationConfig::default();
    let eval_config = EvalConfig::default();
    let raw_pairs: Vec<(NoteSequence, NoteSequence)> = golds
        .iter()
        .zip(&corrupted)
        .map(|(gold, noisy)| {
            (gold.clone(), segment_notes(&quantize_pitch(noisy, &config)))
        })
        .collect();
    let raw = connote::eval::score_corpus(&raw_pairs, &eval_config).unwrap();
    let quantized = manifests[0].quality.as_ref().expect("gold labels present");
    assert!(
        quantized.con.f1 > raw.scores.con.f1,
        "quantized COn {} should beat raw {}",
        quantized.con.f1,
        raw.scores.con.f1
    );
    assert!(quantized.conp.f1 > raw.scores.conp.f1);
    assert_eq!(quantized.con.f1, 1.0, "blips fully removed on this corpus");

    finish("7 self-training-chain", started, 30.0);
}

/// Criterion 8: impulse trains at 60/100/120 BPM recovered within 1 BPM,
/// and the estimate is invariant under positive envelope scaling.
#[test]
fn criterion_8_tempo_estimator() {
    let started = Instant::now();
    let hop = 0.01;

    let impulse_train = |bpm: f64, seconds: f64| -> OnsetEnvelope {
        let frames = (seconds / hop).round() as usize;
        let period = (60.0 / bpm / hop).round() as usize;
        OnsetEnvelope {
            hop,
            strength: (0..frames)
                .map(|t| if t % period == 0 { 1.0 } else { 0.0 })
                .collect(),
        }
    };

    for bpm in [60.0, 100.0, 120.0] {
        let grid = estimate_tempo(&impulse_train(bpm, 10.0)).unwrap();
        assert!(
            (grid.bpm() - bpm).abs() <= 1.0,
            "expected {bpm}, got {}",
            grid.bpm()
        );
    }

    let base = impulse_train(100.0, 8.0);
    let reference = estimate_tempo(&base).unwrap().bpm();
    let mut rng = StdRng::seed_from_u64(0x5eed_0008);
    for _ in 0..100 {
        let scale = 10f64.powf(rng.gen_range(-3.0..3.0));
        let scaled = OnsetEnvelope {
            hop,
            strength: base.strength.iter().map(|v| v * scale).collect(),
        };
        assert_eq!(estimate_tempo(&scaled).unwrap().bpm(), reference);
    }
    finish("8 tempo-estimator", started, 10.0);
}

/// Criterion 9: contour CSV, notes JSON, and SMF round trips stay within
/// their stated tolerances on 100 random instances each.
#[test]
fn criterion_9_format_round_trips() {
    let started = Instant::now();
    let mut rng = StdRng::seed_from_u64(0x5eed_0009);

    // Contour CSV: fields within 1e-6 after write/parse.
    for _ in 0..100 {
        let hop = rng.gen_range(1000..50_000) as f64 * 1e-6;
        let frames: Vec<PitchFrame> = (0..rng.gen_range(2..300))
            .map(|_| {
                if rng.gen_bool(0.8) {
                    PitchFrame {
                        f0: rng.gen_range(20.0..5000.0),
                        confidence: rng.gen_range(0.0..=1.0),
                    }
                } else {
                    PitchFrame { f0: 0.0, confidence: rng.gen_range(0.0..=1.0) }
                }
            })
            .collect();
        let contour = PitchContour::new(hop, frames, "rt").unwrap();
        let back = parse_contour_csv(&write_contour_csv(&contour)).unwrap();
        assert_eq!(back.len(), contour.len());
        assert!((back.hop() - contour.hop()).abs() <= 1e-6);
        for (a, b) in back.frames().iter().zip(contour.frames()) {
            assert!((a.f0 - b.f0).abs() <= 1e-6);
            assert!((a.confidence - b.confidence).abs() <= 1e-6);
        }
    }

    // Notes JSON: onsets/offsets within 1e-6, pitch exact.
    for _ in 0..100 {
        let sequence = random_sequence(&mut rng, 40);
        let back = NoteSequence::from_json(&sequence.to_json()).unwrap();
        assert_eq!(back.len(), sequence.len());
        for (a, b) in back.notes().iter().zip(sequence.notes()) {
            assert!((a.onset - b.onset).abs() <= 1e-6);
            assert!((a.offset - b.offset).abs() <= 1e-6);
            assert_eq!(a.pitch, b.pitch);
        }
    }

    // SMF: onsets/offsets within one tick, pitch exact.
    for _ in 0..100 {
        let sequence = random_sequence(&mut rng, 40);
        let bpm = rng.gen_range(30.0..=300.0);
        let tick = 60.0 / (bpm * TICKS_PER_QUARTER as f64);
        let (back, back_bpm) = read_smf(&write_smf(&sequence, bpm)).unwrap();
        assert!((back_bpm - bpm).abs() < 0.5);
        assert_eq!(back.len(), sequence.len());
        for (a, b) in back.notes().iter().zip(sequence.notes()) {
            assert!((a.onset - b.onset).abs() <= tick, "onset {} vs {}", a.onset, b.onset);
            assert!((a.offset - b.offset).abs() <= tick);
            assert_eq!(a.pitch, b.pitch);
        }
    }

    finish("9 format-round-trips", started, 10.0);
}
