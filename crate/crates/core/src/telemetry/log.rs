//! `.exolog` recording and replay.
//!
//! A log is nothing more than encoded frames written back to back, opened in
//! append mode. Readers skip damaged entries and resynchronise on the next
//! frame whose magic and CRC check out.

use std::fs::{File, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::time::{Duration, Instant};

use super::{decode_prefix, encode_frame_into, DecodeError, EncodeError, TelemetryFrame, MAGIC};

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error("log i/o: {0}")]
    Io(#[from] io::Error),
    #[error(transparent)]
    Encode(#[from] EncodeError),
}

pub struct LogWriter {
    out: BufWriter<File>,
    scratch: Vec<u8>,
    frames: u64,
}

impl LogWriter {
    /// Opens `path` for appending, creating it if needed.
    pub fn append(path: impl AsRef<Path>) -> Result<Self, LogError> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(LogWriter { out: BufWriter::new(file), scratch: Vec::with_capacity(512), frames: 0 })
    }

    pub fn write(&mut self, frame: &TelemetryFrame) -> Result<(), LogError> {
        self.scratch.clear();
        encode_frame_into(frame, &mut self.scratch)?;
        self.out.write_all(&self.scratch)?;
        self.frames += 1;
        Ok(())
    }

    pub fn frames_written(&self) -> u64 {
        self.frames
    }

    pub fn flush(&mut self) -> Result<(), LogError> {
        self.out.flush()?;
        Ok(())
    }
}

impl Drop for LogWriter {
    fn drop(&mut self) {
        let _ = self.out.flush();
    }
}

/// Appends every frame of `frames` to the log at `path`.
pub fn record<'a>(
    frames: impl IntoIterator<Item = &'a TelemetryFrame>,
    path: impl AsRef<Path>,
) -> Result<u64, LogError> {
    let mut w = LogWriter::append(path)?;
    for f in frames {
        w.write(f)?;
    }
    w.flush()?;
    Ok(w.frames_written())
}

/// Iterates the frames of an in-memory log image.
pub struct LogReader {
    buf: Vec<u8>,
    pos: usize,
    damaged: u64,
}

impl LogReader {
    pub fn open(path: impl AsRef<Path>) -> io::Result<Self> {
        Ok(Self::from_bytes(std::fs::read(path)?))
    }

    pub fn from_bytes(buf: Vec<u8>) -> Self {
        LogReader { buf, pos: 0, damaged: 0 }
    }

    /// Damaged entries skipped so far.
    pub fn damaged(&self) -> u64 {
        self.damaged
    }

    fn resync(&mut self, from: usize) {
        let mut i = from;
        while i + 1 < self.buf.len() {
            if self.buf[i..i + 2] == MAGIC && decode_prefix(&self.buf[i..]).is_ok() {
                self.pos = i;
                return;
            }
            i += 1;
        }
        self.pos = self.buf.len();
    }
}

impl Iterator for LogReader {
    type Item = TelemetryFrame;

    fn next(&mut self) -> Option<TelemetryFrame> {
        while self.pos < self.buf.len() {
            match decode_prefix(&self.buf[self.pos..]) {
                Ok((frame, len)) => {
                    self.pos += len;
                    return Some(frame);
                }
                Err(DecodeError::UnknownStream(_)) | Err(DecodeError::BadPayload { .. }) => {
                    // structurally intact: skip exactly this entry
                    let len = u16::from_le_bytes([self.buf[self.pos + 15], self.buf[self.pos + 16]]);
                    self.damaged += 1;
                    self.pos += super::HEADER_LEN + len as usize + super::CRC_LEN;
                }
                Err(_) => {
                    self.damaged += 1;
                    let from = self.pos + 1;
                    self.resync(from);
                }
            }
        }
        None
    }
}

/// Reads a whole log, returning its frames and the damaged-entry count.
pub fn read_log(path: impl AsRef<Path>) -> io::Result<(Vec<TelemetryFrame>, u64)> {
    let mut r = LogReader::open(path)?;
    let frames: Vec<_> = r.by_ref().collect();
    Ok((frames, r.damaged()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Pacing {
    AsFastAsPossible,
    /// Reproduce original inter-frame timing, scaled by `speed` (1.0 = real time).
    Realtime { speed: f64 },
}

/// Replaying iterator; paced replay blocks until each frame's due time.
pub struct Replay {
    reader: LogReader,
    pacing: Pacing,
    origin: Option<(Instant, u64)>,
}

impl Replay {
    pub fn damaged(&self) -> u64 {
        self.reader.damaged()
    }
}

impl Iterator for Replay {
    type Item = TelemetryFrame;

    fn next(&mut self) -> Option<TelemetryFrame> {
        let frame = self.reader.next()?;
        if let Pacing::Realtime { speed } = self.pacing {
            let (start, t0) = *self.origin.get_or_insert((Instant::now(), frame.timestamp_us));
            let offset_us = frame.timestamp_us.saturating_sub(t0) as f64 / speed.max(1e-9);
            sleep_until(start + Duration::from_nanos((offset_us * 1e3) as u64));
        }
        Some(frame)
    }
}

/// Sleeps coarsely, then spins out the last millisecond.
fn sleep_until(deadline: Instant) {
    loop {
        let now = Instant::now();
        if now >= deadline {
            return;
        }
        let left = deadline - now;
        if left > Duration::from_millis(1) {
            std::thread::sleep(left - Duration::from_millis(1));
        } else {
            std::thread::yield_now();
        }
    }
}

pub fn replay(path: impl AsRef<Path>, pacing: Pacing) -> io::Result<Replay> {
    Ok(Replay { reader: LogReader::open(path)?, pacing, origin: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::telemetry::{encode_frame, Payload, PressurePayload, HEADER_LEN};

    fn frames(n: u32) -> Vec<TelemetryFrame> {
        (0..n)
            .map(|i| {
                TelemetryFrame::new(i, i as u64 * 5000, Payload::Pressure(PressurePayload { kpa: i as f32 }))
            })
            .collect()
    }

    #[test]
    fn damaged_entry_is_skipped() {
        let fs = frames(20);
        let mut bytes = Vec::new();
        for f in &fs {
            bytes.extend(encode_frame(f).unwrap());
        }
        let flen = fs[0].encoded_len();
        bytes[7 * flen + HEADER_LEN + 1] ^= 0xFF;
        let mut r = LogReader::from_bytes(bytes);
        let got: Vec<_> = r.by_ref().collect();
        assert_eq!(got.len(), 19);
        assert_eq!(r.damaged(), 1);
        assert!(got.iter().all(|f| f.seq != 7));
    }

    #[test]
    fn damaged_length_field_resyncs() {
        let fs = frames(10);
        let mut bytes = Vec::new();
        for f in &fs {
            bytes.extend(encode_frame(f).unwrap());
        }
        let flen = fs[0].encoded_len();
        bytes[3 * flen + 15] = 0xFF;
        let mut r = LogReader::from_bytes(bytes);
        let got: Vec<_> = r.by_ref().collect();
        assert_eq!(got.len(), 9);
        assert_eq!(r.damaged(), 1);
    }

    #[test]
    fn torn_tail_counts_as_damage() {
        let fs = frames(3);
        let mut bytes = Vec::new();
        for f in &fs {
            bytes.extend(encode_frame(f).unwrap());
        }
        bytes.truncate(bytes.len() - 2);
        let mut r = LogReader::from_bytes(bytes);
        assert_eq!(r.by_ref().count(), 2);
        assert_eq!(r.damaged(), 1);
    }

    #[test]
    fn append_mode_accumulates() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.exolog");
        let fs = frames(5);
        record(&fs[..2], &path).unwrap();
        record(&fs[2..], &path).unwrap();
        let (got, damaged) = read_log(&path).unwrap();
        assert_eq!(got, fs);
        assert_eq!(damaged, 0);
    }
}
