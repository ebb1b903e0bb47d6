//! Note events and monophonic note sequences, plus the notes JSON format.
//!
//! A [`NoteSequence`] is the end product of the quantization pipeline and the
//! input to the evaluation metrics: an ordered, non-overlapping list of
//! (onset, offset, MIDI pitch) events for a single vocal track.

use thiserror::Error;

/// Lowest MIDI pitch the toolkit produces (two octaves below middle C).
pub const MIDI_MIN: u8 = 36;
/// Highest MIDI pitch the toolkit produces.
pub const MIDI_MAX: u8 = 95;

/// MIDI note number nearest to the given frequency, unclamped.
///
/// Rounds half-up on the semitone scale (A4 = 440 Hz = MIDI 69).
pub fn midi_from_hz(hz: f64) -> i32 {
    (69.0 + 12.0 * (hz / 440.0).log2() + 0.5).floor() as i32
}

/// Frequency in Hz of a MIDI note number.
pub fn hz_from_midi(midi: i32) -> f64 {
    440.0 * ((midi as f64 - 69.0) / 12.0).exp2()
}

#[derive(Debug, Error)]
pub enum NotesError {
    #[error("invalid notes JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("note {index}: {reason}")]
    InvalidNote { index: usize, reason: String },
}

/// One sung note: half-open interval `[onset, offset)` in seconds at an
/// integer MIDI pitch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoteEvent {
    pub onset: f64,
    pub offset: f64,
    pub pitch: u8,
}

impl NoteEvent {
    pub fn duration(&self) -> f64 {
        self.offset - self.onset
    }
}

/// Monophonic note sequence sorted by onset.
///
/// Invariants, enforced at construction: every note has `offset > onset` and
/// a pitch in `[MIDI_MIN, MIDI_MAX]`, and consecutive notes do not overlap
/// (`notes[i].offset <= notes[i+1].onset`).
#[derive(Debug, Clone, PartialEq)]
pub struct NoteSequence {
    track_id: String,
    notes: Vec<NoteEvent>,
}

impl NoteSequence {
    pub fn new(track_id: impl Into<String>, notes: Vec<NoteEvent>) -> Result<Self, NotesError> {
        for (index, note) in notes.iter().enumerate() {
            if !note.onset.is_finite() || !note.offset.is_finite() {
                return Err(NotesError::InvalidNote {
                    index,
                    reason: "non-finite onset or offset".into(),
                });
            }
            if note.offset <= note.onset {
                return Err(NotesError::InvalidNote {
                    index,
                    reason: format!("offset {} <= onset {}", note.offset, note.onset),
                });
            }
            if note.pitch < MIDI_MIN || note.pitch > MIDI_MAX {
                return Err(NotesError::InvalidNote {
                    index,
                    reason: format!("pitch {} outside [{MIDI_MIN}, {MIDI_MAX}]", note.pitch),
                });
            }
            if index > 0 && notes[index - 1].offset > note.onset {
                return Err(NotesError::InvalidNote {
                    index,
                    reason: format!(
                        "overlaps previous note (prev offset {} > onset {})",
                        notes[index - 1].offset,
                        note.onset
                    ),
                });
            }
        }
        Ok(Self {
            track_id: track_id.into(),
            notes,
        })
    }

    pub fn empty(track_id: impl Into<String>) -> Self {
        Self {
            track_id: track_id.into(),
            notes: Vec::new(),
        }
    }

    pub fn track_id(&self) -> &str {
        &self.track_id
    }

    pub fn notes(&self) -> &[NoteEvent] {
        &self.notes
    }

    pub fn len(&self) -> usize {
        self.notes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.notes.is_empty()
    }

    /// Serializes to the notes JSON interchange format.
    ///
    /// Layout is fixed: `{"track_id": ..., "notes": [{"onset_sec": ...,
    /// "offset_sec": ..., "midi_pitch": ...}, ...]}` with onset/offset
    /// printed at exactly 6 decimal digits and a trailing newline.
    pub fn to_json(&self) -> String {
        let mut out = String::with_capacity(64 + 64 * self.notes.len());
        out.push_str("{\"track_id\":");
        out.push_str(&serde_json::to_string(&self.track_id).expect("string serializes"));
        out.push_str(",\"notes\":[");
        for (i, note) in self.notes.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            out.push_str(&format!(
                "{{\"onset_sec\":{:.6},\"offset_sec\":{:.6},\"midi_pitch\":{}}}",
                note.onset, note.offset, note.pitch
            ));
        }
        out.push_str("]}\n");
        out
    }

    pub fn from_json(text: &str) -> Result<Self, NotesError> {
        #[derive(serde::Deserialize)]
        struct RawNote {
            onset_sec: f64,
            offset_sec: f64,
            midi_pitch: i64,
        }
        #[derive(serde::Deserialize)]
        struct RawSequence {
            track_id: String,
            notes: Vec<RawNote>,
        }
        let raw: RawSequence = serde_json::from_str(text)?;
        let mut notes = Vec::with_capacity(raw.notes.len());
        for (index, n) in raw.notes.into_iter().enumerate() {
            if n.midi_pitch < 0 || n.midi_pitch > 127 {
                return Err(NotesError::InvalidNote {
                    index,
                    reason: format!("midi_pitch {} not a MIDI note number", n.midi_pitch),
                });
            }
            notes.push(NoteEvent {
                onset: n.onset_sec,
                offset: n.offset_sec,
                pitch: n.midi_pitch as u8,
            });
        }
        Self::new(raw.track_id, notes)
    }
}
