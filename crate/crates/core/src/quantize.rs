//! Conversion from frame-level pitch contours to note-level sequences.
//!
//! The pipeline has four stages, applied in order by [`convert`]:
//!
//! 1. [`quantize_pitch`] — round voiced frames to the nearest MIDI note,
//!    gate on confidence.
//! 2. [`rhythm_quantize`] — smooth the label sequence with a cascade of
//!    tempo-scaled median filters so fragments snap to beat-based units.
//! 3. [`remove_fragments`] — drop voiced runs too short to be sung notes.
//! 4. [`correct_octaves`] — fold runs that sit an octave or more away from
//!    their local context back toward it.
//!
//! [`segment_notes`] then turns maximal constant-label runs into
//! [`NoteEvent`]s.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contour::{PitchContour, PitchFrame};
use crate::notes::{midi_from_hz, hz_from_midi, NoteEvent, NoteSequence, MIDI_MAX, MIDI_MIN};
use crate::tempo::{BeatFraction, BeatGrid};

/// Minimum semitone gap before the octave rule considers a run an outlier.
const OCTAVE_TRIGGER_SEMITONES: i32 = 11;
/// Maximum number of +-12 shifts applied to a single run.
const OCTAVE_MAX_SHIFTS: usize = 2;

#[derive(Debug, Error)]
pub enum QuantizeError {
    #[error("hop mismatch: contour {contour} s vs beat grid {grid} s")]
    HopMismatch { contour: f64, grid: f64 },
}

/// Per-frame class: unvoiced, or a MIDI pitch.
///
/// `Unvoiced` orders below every pitch, so silence competes in median
/// windows as a class strictly below the pitch range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Label {
    Unvoiced,
    Pitch(u8),
}

impl Label {
    pub fn is_voiced(&self) -> bool {
        matches!(self, Label::Pitch(_))
    }

    pub fn pitch(&self) -> Option<u8> {
        match self {
            Label::Pitch(p) => Some(*p),
            Label::Unvoiced => None,
        }
    }
}

/// Frame-level label sequence produced by pitch quantization.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedContour {
    hop: f64,
    labels: Vec<Label>,
    track_id: String,
}

impl QuantizedContour {
    pub fn new(hop: f64, labels: Vec<Label>, track_id: impl Into<String>) -> Self {
        Self {
            hop,
            labels,
            track_id: track_id.into(),
        }
    }

    pub fn hop(&self) -> f64 {
        self.hop
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn track_id(&self) -> &str {
        &self.track_id
    }
}

/// Tunables for the contour-to-note pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizationConfig {
    /// Median-filter sizes as beat fractions, applied in order.
    pub filter_fractions: Vec<BeatFraction>,
    /// Voiced runs shorter than this fraction of a beat are removed.
    pub min_fragment_fraction: BeatFraction,
    /// Frames with confidence below this are treated as unvoiced.
    pub confidence_floor: f64,
    /// Context window (seconds each side) for the octave rule.
    pub octave_context_seconds: f64,
}

impl Default for QuantizationConfig {
    fn default() -> Self {
        Self {
            filter_fractions: vec![
                BeatFraction::THIRTY_SECOND,
                BeatFraction::SIXTEENTH,
                BeatFraction::TWELFTH,
            ],
            min_fragment_fraction: BeatFraction::SIXTEENTH,
            confidence_floor: 0.5,
            octave_context_seconds: 2.0,
        }
    }
}

/// Rounds each voiced frame to the nearest MIDI note number, clamped to
/// `[MIDI_MIN, MIDI_MAX]`. Frames that are unvoiced (`f0 == 0`) or fall
/// below the confidence floor become [`Label::Unvoiced`].
pub fn quantize_pitch(contour: &PitchContour, config: &QuantizationConfig) -> QuantizedContour {
    let labels = contour
        .frames()
        .iter()
        .map(|frame| {
            if !frame.is_voiced() || frame.confidence < config.confidence_floor {
                Label::Unvoiced
            } else {
                let midi = midi_from_hz(frame.f0).clamp(MIDI_MIN as i32, MIDI_MAX as i32);
                Label::Pitch(midi as u8)
            }
        })
        .collect();
    QuantizedContour::new(contour.hop(), labels, contour.track_id())
}

/// Median filter with replicate (clamped) edge padding. Window must be odd.
fn median_filter(labels: &[Label], window: usize) -> Vec<Label> {
    debug_assert_eq!(window % 2, 1, "median windows are odd");
    if window <= 1 || labels.len() <= 1 {
        return labels.to_vec();
    }
    let half = window / 2;
    let n = labels.len();
    let mut out = Vec::with_capacity(n);
    let mut buf = Vec::with_capacity(window);
    for i in 0..n {
        buf.clear();
        for k in 0..window {
            // Index clamped into range: replicate padding at both edges.
            let idx = (i + k).saturating_sub(half).min(n - 1);
            buf.push(labels[idx]);
        }
        buf.sort_unstable();
        out.push(buf[half]);
    }
    out
}

pub(crate) fn median_cascade(labels: &[Label], windows: &[usize]) -> Vec<Label> {
    let mut current = labels.to_vec();
    for &w in windows {
        current = median_filter(&current, w);
    }
    current
}

/// Smooths the label sequence with one median filter per configured beat
/// fraction, each sized by [`BeatGrid::frames_for_beat_fraction`]. Output
/// length equals input length.
pub fn rhythm_quantize(
    q: &QuantizedContour,
    grid: &BeatGrid,
    config: &QuantizationConfig,
) -> Result<QuantizedContour, QuantizeError> {
    check_hop(q, grid)?;
    let windows: Vec<usize> = config
        .filter_fractions
        .iter()
        .map(|&f| grid.frames_for_beat_fraction(f))
        .collect();
    let labels = median_cascade(q.labels(), &windows);
    Ok(QuantizedContour::new(q.hop(), labels, q.track_id()))
}

/// Relabels as unvoiced every maximal voiced run strictly shorter than
/// `min_fragment_fraction` of a beat. Runs exactly at the threshold are
/// kept.
pub fn remove_fragments(
    q: &QuantizedContour,
    grid: &BeatGrid,
    config: &QuantizationConfig,
) -> Result<QuantizedContour, QuantizeError> {
    check_hop(q, grid)?;
    let threshold = grid.beat_seconds() * config.min_fragment_fraction.value();
    let mut labels = q.labels().to_vec();
    for (start, end, label) in runs(q.labels()) {
        if label.is_voiced() && ((end - start) as f64) * q.hop() < threshold {
            labels[start..end].fill(Label::Unvoiced);
        }
    }
    Ok(QuantizedContour::new(q.hop(), labels, q.track_id()))
}

/// Shifts voiced runs that sit an octave or more away from their local
/// median pitch back toward it, one octave at a time.
///
/// For each maximal voiced run at pitch `p`, the context is the median of
/// voiced labels within `octave_context_seconds` on either side of the run
/// (the run itself excluded), computed on the input labels. While the gap
/// `|p - m|` is at least 11 semitones, a 12-semitone shift toward `m`
/// strictly reduces it, and the shifted pitch stays in range, the run moves
/// an octave; at most two shifts per run. Runs with no voiced context are
/// left alone. Pitch class is always preserved.
pub fn correct_octaves(q: &QuantizedContour, config: &QuantizationConfig) -> QuantizedContour {
    let input = q.labels();
    let mut output = input.to_vec();
    let context_frames = (config.octave_context_seconds / q.hop()).round() as usize;

    for (start, end, label) in runs(input) {
        let Some(run_pitch) = label.pitch() else { continue };

        let lo = start.saturating_sub(context_frames);
        let hi = (end + context_frames).min(input.len());
        let mut context: Vec<u8> = input[lo..start]
            .iter()
            .chain(&input[end..hi])
            .filter_map(|l| l.pitch())
            .collect();
        if context.is_empty() {
            continue;
        }
        context.sort_unstable();
        let median = context[(context.len() - 1) / 2] as i32;

        let mut pitch = run_pitch as i32;
        for _ in 0..OCTAVE_MAX_SHIFTS {
            let gap = pitch - median;
            if gap.abs() < OCTAVE_TRIGGER_SEMITONES {
                break;
            }
            let shifted = if gap > 0 { pitch - 12 } else { pitch + 12 };
            if (shifted - median).abs() >= gap.abs() {
                break;
            }
            if shifted < MIDI_MIN as i32 || shifted > MIDI_MAX as i32 {
                break;
            }
            pitch = shifted;
        }
        if pitch != run_pitch as i32 {
            output[start..end].fill(Label::Pitch(pitch as u8));
        }
    }
    QuantizedContour::new(q.hop(), output, q.track_id())
}

/// Turns each maximal run of identical voiced labels into one note:
/// onset at the run's first frame, offset one hop past its last frame.
/// Adjacent runs with different pitches yield back-to-back notes.
pub fn segment_notes(q: &QuantizedContour) -> NoteSequence {
    let mut notes = Vec::new();
    for (start, end, label) in runs(q.labels()) {
        if let Some(pitch) = label.pitch() {
            notes.push(NoteEvent {
                onset: start as f64 * q.hop(),
                offset: end as f64 * q.hop(),
                pitch,
            });
        }
    }
    NoteSequence::new(q.track_id(), notes)
        .expect("runs are disjoint, ordered, and in pitch range")
}

/// Full contour-to-notes pipeline: pitch quantization, rhythm quantization,
/// fragment removal, octave correction, segmentation.
pub fn convert(
    contour: &PitchContour,
    grid: &BeatGrid,
    config: &QuantizationConfig,
) -> Result<NoteSequence, QuantizeError> {
    let q = quantize_pitch(contour, config);
    let q = rhythm_quantize(&q, grid, config)?;
    let q = remove_fragments(&q, grid, config)?;
    let q = correct_octaves(&q, config);
    Ok(segment_notes(&q))
}

/// Renders a note sequence back to a synthetic contour at the given hop:
/// frames whose midpoint falls inside a note get that note's frequency at
/// confidence 1.0, all others are unvoiced. Inverse of [`segment_notes`]
/// for frame-aligned sequences.
pub fn render_contour(notes: &NoteSequence, hop: f64) -> PitchContour {
    let last_offset = notes.notes().last().map(|n| n.offset).unwrap_or(0.0);
    let n_frames = ((last_offset / hop).round() as usize).max(1);
    let mut frames = vec![PitchFrame { f0: 0.0, confidence: 0.0 }; n_frames];
    for note in notes.notes() {
        let start = (note.onset / hop).round() as usize;
        let end = ((note.offset / hop).round() as usize).min(n_frames);
        for frame in &mut frames[start.min(n_frames)..end] {
            *frame = PitchFrame {
                f0: hz_from_midi(note.pitch as i32),
                confidence: 1.0,
            };
        }
    }
    PitchContour::new(hop, frames, notes.track_id()).expect("rendered contour is valid")
}

fn check_hop(q: &QuantizedContour, grid: &BeatGrid) -> Result<(), QuantizeError> {
    if (q.hop() - grid.hop()).abs() > 1e-9 {
        return Err(QuantizeError::HopMismatch {
            contour: q.hop(),
            grid: grid.hop(),
        });
    }
    Ok(())
}

/// Iterator over maximal runs of identical labels as `(start, end, label)`
/// half-open index ranges.
fn runs(labels: &[Label]) -> impl Iterator<Item = (usize, usize, Label)> + '_ {
    let mut start = 0;
    std::iter::from_fn(move || {
        if start >= labels.len() {
            return None;
        }
        let label = labels[start];
        let mut end = start + 1;
        while end < labels.len() && labels[end] == label {
            end += 1;
        }
        let run = (start, end, label);
        start = end;
        Some(run)
    })
}
