//! Global tempo per track and the beat-to-frame arithmetic used by the
//! rhythm quantizer.
//!
//! Tempo is a single BPM value per track (no tempo curves). It is either
//! supplied directly or estimated from an onset-strength envelope by
//! autocorrelation weighted with a log-normal prior around 120 BPM.

use std::fmt;
use std::str::FromStr;

use serde::{de, Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::contour::{parse_uniform_csv, ContourError, PitchContour};
use crate::notes::midi_from_hz;

/// Slowest tempo the estimator reports.
pub const BPM_MIN: f64 = 30.0;
/// Fastest tempo the estimator reports.
pub const BPM_MAX: f64 = 300.0;
/// Center of the log-normal tempo prior.
pub const TEMPO_PRIOR_BPM: f64 = 120.0;
/// Width of the tempo prior in octaves (log2 units).
pub const TEMPO_PRIOR_SIGMA_OCTAVES: f64 = 1.0;
/// Shortest envelope (seconds) the estimator accepts.
pub const MIN_ENVELOPE_SEC: f64 = 4.0;

#[derive(Debug, Error)]
pub enum TempoError {
    #[error("invalid beat grid: {0}")]
    InvalidGrid(String),
    #[error("envelope too short: {got:.3} s, need at least {need} s")]
    EnvelopeTooShort { got: f64, need: f64 },
    #[error("degenerate envelope: all values are zero")]
    DegenerateEnvelope,
}

/// Positive rational fraction of a beat, e.g. 1/32 for a median-filter size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BeatFraction {
    num: u32,
    den: u32,
}

impl BeatFraction {
    pub const THIRTY_SECOND: BeatFraction = BeatFraction { num: 1, den: 32 };
    pub const SIXTEENTH: BeatFraction = BeatFraction { num: 1, den: 16 };
    pub const TWELFTH: BeatFraction = BeatFraction { num: 1, den: 12 };

    pub fn new(num: u32, den: u32) -> Result<Self, TempoError> {
        if num == 0 || den == 0 {
            return Err(TempoError::InvalidGrid(format!(
                "beat fraction {num}/{den} must be positive"
            )));
        }
        Ok(Self { num, den })
    }

    pub fn value(&self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl fmt::Display for BeatFraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl FromStr for BeatFraction {
    type Err = TempoError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || TempoError::InvalidGrid(format!("cannot parse beat fraction `{s}`"));
        let (num, den) = match s.split_once('/') {
            Some((n, d)) => (
                n.trim().parse().map_err(|_| bad())?,
                d.trim().parse().map_err(|_| bad())?,
            ),
            None => (s.trim().parse().map_err(|_| bad())?, 1),
        };
        BeatFraction::new(num, den)
    }
}

impl Serialize for BeatFraction {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BeatFraction {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(de::Error::custom)
    }
}

/// Tempo plus the frame hop it is paired with: everything the rhythm
/// quantizer needs to turn beat fractions into odd filter windows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeatGrid {
    bpm: f64,
    hop: f64,
}

impl BeatGrid {
    pub fn new(bpm: f64, hop: f64) -> Result<Self, TempoError> {
        if !bpm.is_finite() || !(BPM_MIN..=BPM_MAX).contains(&bpm) {
            return Err(TempoError::InvalidGrid(format!(
                "bpm {bpm} outside [{BPM_MIN}, {BPM_MAX}]"
            )));
        }
        if !(hop.is_finite() && hop > 0.0) {
            return Err(TempoError::InvalidGrid(format!(
                "hop {hop} must be positive and finite"
            )));
        }
        Ok(Self { bpm, hop })
    }

    pub fn bpm(&self) -> f64 {
        self.bpm
    }

    pub fn hop(&self) -> f64 {
        self.hop
    }

    pub fn beat_seconds(&self) -> f64 {
        60.0 / self.bpm
    }

    /// Median-filter window length, in frames, covering the given fraction
    /// of a beat: the nearest odd integer to `beat_seconds * fraction / hop`,
    /// never below 1. A value exactly between two odd integers rounds up.
    pub fn frames_for_beat_fraction(&self, fraction: BeatFraction) -> usize {
        let span = self.beat_seconds() * fraction.value() / self.hop;
        let steps = ((span - 1.0) / 2.0 + 0.5).floor() as i64;
        (2 * steps.max(0) + 1) as usize
    }
}

/// Onset-strength sequence at a uniform hop, the input to tempo estimation.
#[derive(Debug, Clone, PartialEq)]
pub struct OnsetEnvelope {
    pub hop: f64,
    pub strength: Vec<f64>,
}

/// Parses an envelope CSV (`time_sec,strength`), same formatting rules as
/// the contour CSV.
pub fn parse_envelope_csv(bytes: &[u8]) -> Result<OnsetEnvelope, ContourError> {
    let (hop, rows) = parse_uniform_csv::<1>(bytes, "time_sec,strength")?;
    let mut strength = Vec::with_capacity(rows.len());
    for (i, [value]) in rows.into_iter().enumerate() {
        if !value.is_finite() || value < 0.0 {
            return Err(ContourError::RangeViolation(format!(
                "row {}: strength {value} must be >= 0",
                i + 1
            )));
        }
        strength.push(value);
    }
    Ok(OnsetEnvelope { hop, strength })
}

pub fn write_envelope_csv(envelope: &OnsetEnvelope) -> Vec<u8> {
    let mut out = String::with_capacity(24 * (envelope.strength.len() + 1));
    out.push_str("time_sec,strength\n");
    for (i, value) in envelope.strength.iter().enumerate() {
        out.push_str(&format!("{:.6},{:.6}\n", i as f64 * envelope.hop, value));
    }
    out.into_bytes()
}

/// Onset-strength envelope derived from a contour, for when no
/// audio-derived envelope is available: the absolute semitone step between
/// consecutive voiced frames, plus 1.0 at each unvoiced-to-voiced
/// transition. `envelope[0]` is always 0.
pub fn envelope_from_contour(contour: &PitchContour) -> OnsetEnvelope {
    let frames = contour.frames();
    let mut strength = vec![0.0; frames.len()];
    for t in 1..frames.len() {
        let prev = &frames[t - 1];
        let cur = &frames[t];
        let mut s = 0.0;
        if prev.is_voiced() && cur.is_voiced() {
            s += (midi_from_hz(cur.f0) - midi_from_hz(prev.f0)).abs() as f64;
        }
        if !prev.is_voiced() && cur.is_voiced() {
            s += 1.0;
        }
        strength[t] = s;
    }
    OnsetEnvelope {
        hop: contour.hop(),
        strength,
    }
}

/// Estimates a global tempo from an onset-strength envelope.
///
/// The envelope is mean-removed and autocorrelated; each candidate lag is
/// weighted by a log-normal prior centered at [`TEMPO_PRIOR_BPM`] with
/// [`TEMPO_PRIOR_SIGMA_OCTAVES`] width, and the lag with the highest
/// weighted score wins. Lags are searched over [`BPM_MIN`]..[`BPM_MAX`].
/// Deterministic; ties resolve to the smaller lag (faster tempo).
pub fn estimate_tempo(envelope: &OnsetEnvelope) -> Result<BeatGrid, TempoError> {
    let hop = envelope.hop;
    if !(hop.is_finite() && hop > 0.0) {
        return Err(TempoError::InvalidGrid(format!(
            "hop {hop} must be positive and finite"
        )));
    }
    let n = envelope.strength.len();
    let seconds = n as f64 * hop;
    if seconds < MIN_ENVELOPE_SEC {
        return Err(TempoError::EnvelopeTooShort {
            got: seconds,
            need: MIN_ENVELOPE_SEC,
        });
    }
    if envelope.strength.iter().all(|&v| v == 0.0) {
        return Err(TempoError::DegenerateEnvelope);
    }

    let mean = envelope.strength.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = envelope.strength.iter().map(|v| v - mean).collect();

    let lag_min = ((60.0 / (BPM_MAX * hop)).ceil() as usize).max(1);
    let lag_max = ((60.0 / (BPM_MIN * hop)).floor() as usize).min(n - 1);
    if lag_min > lag_max {
        return Err(TempoError::EnvelopeTooShort {
            got: seconds,
            need: MIN_ENVELOPE_SEC,
        });
    }

    let mut best_lag = lag_min;
    let mut best_score = f64::NEG_INFINITY;
    for lag in lag_min..=lag_max {
        let mut acf = 0.0;
        for t in 0..n - lag {
            acf += centered[t] * centered[t + lag];
        }
        let bpm = 60.0 / (lag as f64 * hop);
        let octaves = (bpm / TEMPO_PRIOR_BPM).log2() / TEMPO_PRIOR_SIGMA_OCTAVES;
        let score = acf * (-0.5 * octaves * octaves).exp();
        if score > best_score {
            best_score = score;
            best_lag = lag;
        }
    }

    let bpm = (60.0 / (best_lag as f64 * hop)).clamp(BPM_MIN, BPM_MAX);
    BeatGrid::new(bpm, hop)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn impulse_train(period_sec: f64, hop: f64, total_sec: f64) -> OnsetEnvelope {
        let n = (total_sec / hop).round() as usize;
        let period = (period_sec / hop).round() as usize;
        let strength = (0..n)
            .map(|t| if t % period == 0 { 1.0 } else { 0.0 })
            .collect();
        OnsetEnvelope { hop, strength }
    }

    /// Independent scan for the strongest autocorrelation lag in the
    /// 30..=300 BPM band, ignoring the prior.
    fn brute_force_peak_lag(envelope: &OnsetEnvelope) -> usize {
        let n = envelope.strength.len();
        let mean = envelope.strength.iter().sum::<f64>() / n as f64;
        let e: Vec<f64> = envelope.strength.iter().map(|v| v - mean).collect();
        let lag_min = ((60.0 / (300.0 * envelope.hop)).ceil() as usize).max(1);
        let lag_max = ((60.0 / (30.0 * envelope.hop)).floor() as usize).min(n - 1);
        let mut best = (lag_min, f64::NEG_INFINITY);
        for lag in lag_min..=lag_max {
            let mut acf = 0.0;
            for t in 0..n - lag {
                acf += e[t] * e[t + lag];
            }
            if acf > best.1 {
                best = (lag, acf);
            }
        }
        best.0
    }

    #[test]
    fn window_sizes_at_120_bpm_10ms_hop() {
        let grid = BeatGrid::new(120.0, 0.010).unwrap();
        assert_eq!(grid.frames_for_beat_fraction(BeatFraction::THIRTY_SECOND), 1);
        assert_eq!(grid.frames_for_beat_fraction(BeatFraction::SIXTEENTH), 3);
        assert_eq!(grid.frames_for_beat_fraction(BeatFraction::TWELFTH), 5);
    }

    #[test]
    fn window_tie_rounds_up() {
        // 60/120 * 1/25 / 0.001 = 20 frames: exactly between 19 and 21.
        let grid = BeatGrid::new(120.0, 0.001).unwrap();
        assert_eq!(
            grid.frames_for_beat_fraction(BeatFraction::new(1, 25).unwrap()),
            21
        );
    }

    #[test]
    fn impulse_train_at_120_bpm() {
        let env = impulse_train(0.5, 0.01, 10.0);
        let peak = brute_force_peak_lag(&env);
        assert_eq!(peak, 50);
        let grid = estimate_tempo(&env).unwrap();
        assert!((grid.bpm() - 120.0).abs() <= 1.0, "got {}", grid.bpm());
    }

    #[test]
    fn impulse_train_at_60_bpm_beats_the_prior() {
        let env = impulse_train(1.0, 0.01, 10.0);
        let peak = brute_force_peak_lag(&env);
        assert_eq!(peak, 100);
        let grid = estimate_tempo(&env).unwrap();
        assert!((grid.bpm() - 60.0).abs() <= 1.0, "got {}", grid.bpm());
    }

    #[test]
    fn all_zero_envelope_is_degenerate() {
        let env = OnsetEnvelope { hop: 0.01, strength: vec![0.0; 1000] };
        assert!(matches!(
            estimate_tempo(&env),
            Err(TempoError::DegenerateEnvelope)
        ));
    }

    #[test]
    fn short_envelope_is_rejected() {
        let env = OnsetEnvelope { hop: 0.01, strength: vec![1.0; 100] };
        assert!(matches!(
            estimate_tempo(&env),
            Err(TempoError::EnvelopeTooShort { .. })
        ));
    }

    #[test]
    fn bpm_bounds_are_enforced() {
        assert!(BeatGrid::new(20.0, 0.01).is_err());
        assert!(BeatGrid::new(400.0, 0.01).is_err());
        assert!(BeatGrid::new(120.0, 0.0).is_err());
    }

    #[test]
    fn envelope_from_constant_contour_is_silent() {
        use crate::contour::{PitchContour, PitchFrame};
        let frames = vec![PitchFrame { f0: 440.0, confidence: 1.0 }; 50];
        let c = PitchContour::new(0.01, frames, "t").unwrap();
        let env = envelope_from_contour(&c);
        assert!(env.strength.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn envelope_marks_voicing_onset() {
        use crate::contour::{PitchContour, PitchFrame};
        let mut frames = vec![PitchFrame { f0: 0.0, confidence: 0.0 }; 10];
        frames.extend(vec![PitchFrame { f0: 440.0, confidence: 1.0 }; 10]);
        let c = PitchContour::new(0.01, frames, "t").unwrap();
        let env = envelope_from_contour(&c);
        let nonzero: Vec<usize> = env
            .strength
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(nonzero, vec![10]);
        assert_eq!(env.strength[10], 1.0);
    }

    #[test]
    fn envelope_sees_pitch_steps() {
        use crate::contour::{PitchContour, PitchFrame};
        let mut frames = vec![PitchFrame { f0: 440.0, confidence: 1.0 }; 10];
        frames.extend(vec![PitchFrame { f0: 493.883, confidence: 1.0 }; 10]); // up 2 semitones
        let c = PitchContour::new(0.01, frames, "t").unwrap();
        let env = envelope_from_contour(&c);
        assert!(env.strength[10] >= 2.0);
    }

    #[test]
    fn envelope_csv_round_trip() {
        let env = OnsetEnvelope { hop: 0.01, strength: vec![0.0, 1.0, 0.5, 2.25] };
        let bytes = write_envelope_csv(&env);
        let back = parse_envelope_csv(&bytes).unwrap();
        assert!((back.hop - env.hop).abs() <= 1e-6);
        assert_eq!(back.strength.len(), 4);
        for (a, b) in back.strength.iter().zip(&env.strength) {
            assert!((a - b).abs() <= 1e-6);
        }
    }

    #[test]
    fn envelope_csv_rejects_negative_strength() {
        let csv = b"time_sec,strength\n0.00,-1.0\n";
        assert!(matches!(
            parse_envelope_csv(csv),
            Err(ContourError::RangeViolation(_))
        ));
    }

    proptest! {
        #[test]
        fn window_is_odd_and_positive(
            bpm in 30.0f64..=300.0,
            hop in 0.001f64..0.05,
            num in 1u32..8,
            den in 1u32..64,
        ) {
            let grid = BeatGrid::new(bpm, hop).unwrap();
            let w = grid.frames_for_beat_fraction(BeatFraction::new(num, den).unwrap());
            prop_assert!(w >= 1);
            prop_assert_eq!(w % 2, 1);
        }

        #[test]
        fn window_monotone_in_fraction_and_bpm(
            bpm_lo in 30.0f64..150.0,
            bpm_delta in 0.0f64..150.0,
            hop in 0.001f64..0.05,
            den in 2u32..64,
        ) {
            let bpm_hi = (bpm_lo + bpm_delta).min(300.0);
            let grid_lo = BeatGrid::new(bpm_lo, hop).unwrap();
            let grid_hi = BeatGrid::new(bpm_hi, hop).unwrap();
            let small = BeatFraction::new(1, den).unwrap();
            let large = BeatFraction::new(1, den / 2 + 1).unwrap();
            // Non-decreasing in the fraction at fixed tempo.
            if small.value() <= large.value() {
                prop_assert!(
                    grid_lo.frames_for_beat_fraction(small) <= grid_lo.frames_for_beat_fraction(large)
                );
            }
            // Non-increasing in bpm at a fixed fraction.
            prop_assert!(
                grid_hi.frames_for_beat_fraction(small) <= grid_lo.frames_for_beat_fraction(small)
            );
        }

        #[test]
        fn tempo_estimate_is_scale_invariant(scale in 1e-3f64..1e3) {
            let base = impulse_train(0.6, 0.01, 8.0);
            let scaled = OnsetEnvelope {
                hop: base.hop,
                strength: base.strength.iter().map(|v| v * scale).collect(),
            };
            let a = estimate_tempo(&base).unwrap();
            let b = estimate_tempo(&scaled).unwrap();
            prop_assert_eq!(a.bpm(), b.bpm());
        }
    }
}
