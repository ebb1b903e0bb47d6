//! # connote
//!
//! Singing transcription toolkit: converts frame-level vocal pitch contours
//! into note-level transcriptions, scores transcriptions with the
//! COn/COnP/COnPOff metric family, and orchestrates iterative
//! teacher-student self-training over pluggable external models.
//!
//! The core conversion snaps a contour to musical time in four steps: pitch
//! quantization to semitones, rhythm quantization with a cascade of
//! tempo-scaled median filters (1/32, 1/16, 1/12 beat by default), removal
//! of fragments shorter than 1/16 beat, and a context-median octave
//! correction. See [`quantize::convert`].
//!
//! ```
//! use connote::contour::parse_contour_csv;
//! use connote::quantize::{convert, QuantizationConfig};
//! use connote::tempo::BeatGrid;
//!
//! // One second of 440 Hz at a 10 ms hop.
//! let mut csv = String::from("time_sec,f0_hz,confidence\n");
//! for i in 0..100 {
//!     csv.push_str(&format!("{:.6},440.000000,1.000000\n", i as f64 * 0.01));
//! }
//! let contour = parse_contour_csv(csv.as_bytes()).unwrap();
//! let grid = BeatGrid::new(120.0, contour.hop()).unwrap();
//! let notes = convert(&contour, &grid, &QuantizationConfig::default()).unwrap();
//! assert_eq!(notes.len(), 1);
//! assert_eq!(notes.notes()[0].pitch, 69); // A4
//! ```

pub mod contour;
pub mod eval;
pub mod fsutil;
pub mod midi;
pub mod notes;
pub mod quantize;
pub mod selftrain;
pub mod tempo;

pub use contour::{parse_contour_csv, write_contour_csv, PitchContour, PitchFrame};
pub use eval::{score, score_corpus, EvalConfig, EvalReport};
pub use notes::{NoteEvent, NoteSequence};
pub use quantize::{convert, QuantizationConfig};
pub use tempo::{estimate_tempo, BeatGrid};
