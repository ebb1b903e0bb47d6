//! Frame-level pitch contours and their CSV interchange format.
//!
//! A contour is the raw output of a vocal pitch estimator: one `(f0,
//! confidence)` pair per analysis frame at a uniform hop. Contours travel
//! between external models and this toolkit as CSV with the fixed header
//! `time_sec,f0_hz,confidence`, `\n` line endings, and values printed at
//! exactly 6 decimal digits.

use thiserror::Error;

/// Lowest f0 accepted as voiced, in Hz.
pub const F0_MIN_HZ: f64 = 20.0;
/// Highest f0 accepted as voiced, in Hz.
pub const F0_MAX_HZ: f64 = 5000.0;

/// Spacing deviation (seconds) tolerated before a time column is rejected
/// as non-uniform.
pub const HOP_TOLERANCE_SEC: f64 = 1e-6;

/// Hop assumed when a file carries a single row and no spacing can be
/// inferred.
pub const SINGLE_ROW_HOP_SEC: f64 = 0.01;

#[derive(Debug, Error)]
pub enum ContourError {
    #[error("empty input: no data rows")]
    EmptyInput,
    #[error("line {line}: malformed row: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("non-uniform hop: {0}")]
    NonUniformHop(String),
    #[error("out of range: {0}")]
    RangeViolation(String),
}

/// One analysis frame. `f0 == 0.0` encodes an unvoiced frame; voiced frames
/// carry an f0 in `[F0_MIN_HZ, F0_MAX_HZ]` and a confidence in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PitchFrame {
    pub f0: f64,
    pub confidence: f64,
}

impl PitchFrame {
    pub fn is_voiced(&self) -> bool {
        self.f0 > 0.0
    }

    fn validate(&self, index: usize) -> Result<(), ContourError> {
        let in_band = self.f0 == 0.0 || (F0_MIN_HZ..=F0_MAX_HZ).contains(&self.f0);
        if !self.f0.is_finite() || !in_band {
            return Err(ContourError::RangeViolation(format!(
                "frame {index}: f0 {} must be 0 or in [{F0_MIN_HZ}, {F0_MAX_HZ}] Hz",
                self.f0
            )));
        }
        if !self.confidence.is_finite() || !(0.0..=1.0).contains(&self.confidence) {
            return Err(ContourError::RangeViolation(format!(
                "frame {index}: confidence {} must be in [0, 1]",
                self.confidence
            )));
        }
        Ok(())
    }
}

/// Uniformly-sampled pitch contour for one track.
///
/// Immutable after construction; `frames` is non-empty and `hop` is a
/// positive, finite number of seconds per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PitchContour {
    hop: f64,
    frames: Vec<PitchFrame>,
    track_id: String,
}

impl PitchContour {
    pub fn new(
        hop: f64,
        frames: Vec<PitchFrame>,
        track_id: impl Into<String>,
    ) -> Result<Self, ContourError> {
        if !(hop.is_finite() && hop > 0.0) {
            return Err(ContourError::RangeViolation(format!(
                "hop {hop} must be positive and finite"
            )));
        }
        if frames.is_empty() {
            return Err(ContourError::EmptyInput);
        }
        for (i, frame) in frames.iter().enumerate() {
            frame.validate(i)?;
        }
        Ok(Self {
            hop,
            frames,
            track_id: track_id.into(),
        })
    }

    pub fn hop(&self) -> f64 {
        self.hop
    }

    pub fn frames(&self) -> &[PitchFrame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        false // non-empty by invariant
    }

    pub fn duration(&self) -> f64 {
        self.frames.len() as f64 * self.hop
    }

    pub fn track_id(&self) -> &str {
        &self.track_id
    }

    pub fn with_track_id(mut self, track_id: impl Into<String>) -> Self {
        self.track_id = track_id.into();
        self
    }

    /// Replaces the inferred hop, e.g. when the caller knows the true frame
    /// rate of the upstream estimator.
    pub fn with_hop(mut self, hop: f64) -> Result<Self, ContourError> {
        if !(hop.is_finite() && hop > 0.0) {
            return Err(ContourError::RangeViolation(format!(
                "hop {hop} must be positive and finite"
            )));
        }
        self.hop = hop;
        Ok(self)
    }
}

/// Parses a fixed-width CSV whose first column is a uniformly-spaced time
/// axis. Returns the inferred hop (median inter-row delta) and the remaining
/// columns of each row. Shared by the contour and envelope formats.
pub(crate) fn parse_uniform_csv<const N: usize>(
    bytes: &[u8],
    header: &str,
) -> Result<(f64, Vec<[f64; N]>), ContourError> {
    let text = std::str::from_utf8(bytes).map_err(|_| ContourError::MalformedRow {
        line: 0,
        reason: "input is not valid UTF-8".into(),
    })?;
    let mut lines = text.lines().enumerate();
    let (_, first) = lines.next().ok_or(ContourError::EmptyInput)?;
    if first.trim_end_matches('\r') != header {
        return Err(ContourError::MalformedRow {
            line: 1,
            reason: format!("expected header `{header}`, got `{first}`"),
        });
    }

    let mut times = Vec::new();
    let mut rows = Vec::new();
    for (idx, line) in lines {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != N + 1 {
            return Err(ContourError::MalformedRow {
                line: idx + 1,
                reason: format!("expected {} fields, got {}", N + 1, fields.len()),
            });
        }
        let mut parsed = [0.0f64; N];
        let time: f64 = fields[0].trim().parse().map_err(|_| ContourError::MalformedRow {
            line: idx + 1,
            reason: format!("non-numeric field `{}`", fields[0]),
        })?;
        for (slot, field) in parsed.iter_mut().zip(&fields[1..]) {
            *slot = field.trim().parse().map_err(|_| ContourError::MalformedRow {
                line: idx + 1,
                reason: format!("non-numeric field `{field}`"),
            })?;
        }
        times.push(time);
        rows.push(parsed);
    }

    if rows.is_empty() {
        return Err(ContourError::EmptyInput);
    }
    let hop = infer_hop(&times)?;
    Ok((hop, rows))
}

fn infer_hop(times: &[f64]) -> Result<f64, ContourError> {
    if times.len() == 1 {
        return Ok(SINGLE_ROW_HOP_SEC);
    }
    let mut deltas = Vec::with_capacity(times.len() - 1);
    for (i, pair) in times.windows(2).enumerate() {
        let delta = pair[1] - pair[0];
        if delta <= 0.0 {
            return Err(ContourError::NonUniformHop(format!(
                "time not strictly increasing between rows {} and {}",
                i + 1,
                i + 2
            )));
        }
        deltas.push(delta);
    }
    let mut sorted = deltas.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let hop = sorted[sorted.len() / 2];
    for (i, delta) in deltas.iter().enumerate() {
        if (delta - hop).abs() > HOP_TOLERANCE_SEC {
            return Err(ContourError::NonUniformHop(format!(
                "spacing {delta:.9} s at row {} deviates from median {hop:.9} s by more than {HOP_TOLERANCE_SEC} s",
                i + 1
            )));
        }
    }
    Ok(hop)
}

/// Parses contour CSV bytes (`time_sec,f0_hz,confidence`).
///
/// The hop is inferred as the median inter-row time delta; spacing must be
/// uniform within [`HOP_TOLERANCE_SEC`]. The returned contour carries an
/// empty track id — attach one with [`PitchContour::with_track_id`].
pub fn parse_contour_csv(bytes: &[u8]) -> Result<PitchContour, ContourError> {
    let (hop, rows) = parse_uniform_csv::<2>(bytes, "time_sec,f0_hz,confidence")?;
    let frames = rows
        .into_iter()
        .map(|[f0, confidence]| PitchFrame { f0, confidence })
        .collect();
    PitchContour::new(hop, frames, "")
}

/// Writes a contour in canonical CSV form: fixed header, `\n` endings, all
/// values at exactly 6 decimal digits, times reconstructed as `index * hop`.
pub fn write_contour_csv(contour: &PitchContour) -> Vec<u8> {
    let mut out = String::with_capacity(32 * (contour.len() + 1));
    out.push_str("time_sec,f0_hz,confidence\n");
    for (i, frame) in contour.frames().iter().enumerate() {
        out.push_str(&format!(
            "{:.6},{:.6},{:.6}\n",
            i as f64 * contour.hop(),
            frame.f0,
            frame.confidence
        ));
    }
    out.into_bytes()
}
