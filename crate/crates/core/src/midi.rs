//! Standard MIDI File export of note sequences, plus a minimal reader used
//! to verify round trips.
//!
//! Files are format 0, 480 ticks per quarter note, one tempo meta event,
//! note-on velocity 80 on channel 0. Ticks come from
//! `round(seconds * bpm / 60 * 480)`, so a re-imported file reproduces
//! onsets and offsets within one tick.

use thiserror::Error;

use crate::notes::{NoteEvent, NoteSequence, NotesError};

/// Ticks per quarter note in exported files.
pub const TICKS_PER_QUARTER: u16 = 480;
/// Note-on velocity in exported files.
pub const NOTE_VELOCITY: u8 = 80;

#[derive(Debug, Error)]
pub enum MidiError {
    #[error("malformed SMF: {0}")]
    Malformed(String),
    #[error("unsupported SMF feature: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Notes(#[from] NotesError),
}

pub fn seconds_to_ticks(seconds: f64, bpm: f64) -> u32 {
    (seconds * bpm / 60.0 * TICKS_PER_QUARTER as f64).round() as u32
}

pub fn ticks_to_seconds(ticks: u32, us_per_quarter: u32) -> f64 {
    ticks as f64 * us_per_quarter as f64 / (TICKS_PER_QUARTER as f64 * 1e6)
}

fn push_vlq(out: &mut Vec<u8>, mut value: u32) {
    let mut stack = [0u8; 4];
    let mut n = 0;
    loop {
        stack[n] = (value & 0x7f) as u8;
        value >>= 7;
        n += 1;
        if value == 0 {
            break;
        }
    }
    for i in (0..n).rev() {
        let mut byte = stack[i];
        if i > 0 {
            byte |= 0x80;
        }
        out.push(byte);
    }
}

/// Serializes a note sequence as a format-0 SMF at the given tempo.
///
/// `bpm` must be positive and finite; note-off events sort before note-on
/// events at the same tick so back-to-back notes never overlap.
pub fn write_smf(notes: &NoteSequence, bpm: f64) -> Vec<u8> {
    assert!(bpm.is_finite() && bpm > 0.0, "bpm must be positive");

    // (tick, kind) where kind 0 = note-off, 1 = note-on.
    let mut events: Vec<(u32, u8, u8)> = Vec::with_capacity(notes.len() * 2);
    for note in notes.notes() {
        events.push((seconds_to_ticks(note.onset, bpm), 1, note.pitch));
        events.push((seconds_to_ticks(note.offset, bpm), 0, note.pitch));
    }
    events.sort_by_key(|&(tick, kind, _)| (tick, kind));

    let mut track = Vec::new();
    let us_per_quarter = (60_000_000.0 / bpm).round() as u32;
    push_vlq(&mut track, 0);
    track.extend([0xff, 0x51, 0x03]);
    track.extend(&us_per_quarter.to_be_bytes()[1..]);

    let mut cursor = 0u32;
    for (tick, kind, pitch) in events {
        push_vlq(&mut track, tick - cursor);
        cursor = tick;
        match kind {
            1 => track.extend([0x90, pitch, NOTE_VELOCITY]),
            _ => track.extend([0x80, pitch, 0x00]),
        }
    }
    push_vlq(&mut track, 0);
    track.extend([0xff, 0x2f, 0x00]);

    let mut out = Vec::with_capacity(22 + track.len());
    out.extend(b"MThd");
    out.extend(6u32.to_be_bytes());
    out.extend(0u16.to_be_bytes());
    out.extend(1u16.to_be_bytes());
    out.extend(TICKS_PER_QUARTER.to_be_bytes());
    out.extend(b"MTrk");
    out.extend((track.len() as u32).to_be_bytes());
    out.extend(track);
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], MidiError> {
        if self.pos + n > self.bytes.len() {
            return Err(MidiError::Malformed("unexpected end of file".into()));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8, MidiError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, MidiError> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, MidiError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn vlq(&mut self) -> Result<u32, MidiError> {
        let mut value = 0u32;
        for _ in 0..4 {
            let byte = self.u8()?;
            value = (value << 7) | (byte & 0x7f) as u32;
            if byte & 0x80 == 0 {
                return Ok(value);
            }
        }
        Err(MidiError::Malformed("variable-length quantity too long".into()))
    }
}

/// Reads the first track of an SMF back into a note sequence.
///
/// Handles the event subset [`write_smf`] emits plus running status; the
/// first tempo meta event sets the tick-to-seconds mapping (120 BPM when
/// absent). Returns the sequence and the file's tempo in BPM.
pub fn read_smf(bytes: &[u8]) -> Result<(NoteSequence, f64), MidiError> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(4)? != b"MThd" {
        return Err(MidiError::Malformed("missing MThd chunk".into()));
    }
    let header_len = c.u32()?;
    if header_len < 6 {
        return Err(MidiError::Malformed("MThd too short".into()));
    }
    let _format = c.u16()?;
    let n_tracks = c.u16()?;
    if n_tracks == 0 {
        return Err(MidiError::Malformed("no tracks".into()));
    }
    let division = c.u16()?;
    if division & 0x8000 != 0 {
        return Err(MidiError::Unsupported("SMPTE time division".into()));
    }
    if division == 0 {
        return Err(MidiError::Malformed("zero time division".into()));
    }
    c.take(header_len as usize - 6)?;

    if c.take(4)? != b"MTrk" {
        return Err(MidiError::Malformed("missing MTrk chunk".into()));
    }
    let track_len = c.u32()? as usize;
    let track_end = c.pos + track_len;

    let mut us_per_quarter: Option<u32> = None;
    let mut tick = 0u32;
    let mut running_status: Option<u8> = None;
    // pitch -> onset tick for currently sounding notes.
    let mut open: std::collections::HashMap<u8, u32> = std::collections::HashMap::new();
    // (onset tick, offset tick, pitch)
    let mut raw_notes: Vec<(u32, u32, u8)> = Vec::new();

    loop {
        if c.pos >= track_end {
            return Err(MidiError::Malformed("track ended without end-of-track".into()));
        }
        tick = tick
            .checked_add(c.vlq()?)
            .ok_or_else(|| MidiError::Malformed("tick overflow".into()))?;
        let mut status = c.u8()?;
        if status < 0x80 {
            // Running status: reuse previous and rewind the data byte.
            status = running_status
                .ok_or_else(|| MidiError::Malformed("data byte without status".into()))?;
            c.pos -= 1;
        }
        match status {
            0xff => {
                let meta = c.u8()?;
                let len = c.vlq()? as usize;
                let data = c.take(len)?;
                match meta {
                    0x2f => break,
                    0x51 if len == 3 => {
                        let us = u32::from_be_bytes([0, data[0], data[1], data[2]]);
                        us_per_quarter.get_or_insert(us);
                    }
                    _ => {}
                }
            }
            0xf0 | 0xf7 => {
                let len = c.vlq()? as usize;
                c.take(len)?;
            }
            _ => {
                running_status = Some(status);
                match status & 0xf0 {
                    0x90 => {
                        let pitch = c.u8()?;
                        let velocity = c.u8()?;
                        if velocity > 0 {
                            if open.insert(pitch, tick).is_some() {
                                return Err(MidiError::Malformed(format!(
                                    "overlapping note-on for pitch {pitch}"
                                )));
                            }
                        } else if let Some(onset) = open.remove(&pitch) {
                            raw_notes.push((onset, tick, pitch));
                        }
                    }
                    0x80 => {
                        let pitch = c.u8()?;
                        let _velocity = c.u8()?;
                        if let Some(onset) = open.remove(&pitch) {
                            raw_notes.push((onset, tick, pitch));
                        }
                    }
                    0xa0 | 0xb0 | 0xe0 => {
                        c.take(2)?;
                    }
                    0xc0 | 0xd0 => {
                        c.take(1)?;
                    }
                    _ => {
                        return Err(MidiError::Malformed(format!(
                            "unexpected status byte {status:#04x}"
                        )));
                    }
                }
            }
        }
    }

    if !open.is_empty() {
        return Err(MidiError::Malformed("note-on without matching note-off".into()));
    }

    let us_per_quarter = us_per_quarter.unwrap_or(500_000);
    let scale = us_per_quarter as f64 / (division as f64 * 1e6);
    raw_notes.sort_unstable();
    let notes = raw_notes
        .into_iter()
        .map(|(onset, offset, pitch)| NoteEvent {
            onset: onset as f64 * scale,
            offset: offset as f64 * scale,
            pitch,
        })
        .collect();
    let sequence = NoteSequence::new("", notes)?;
    Ok((sequence, 60_000_000.0 / us_per_quarter as f64))
}
