//! Telemetry frames and their wire encoding.
//!
//! Every frame on a socket or in a `.exolog` file has the layout
//!
//! ```text
//! 0xE5 0x0B | stream u8 | seq u32 LE | t_us u64 LE | len u16 LE | payload | crc32 u32 LE
//! ```
//!
//! where the CRC-32 (IEEE) covers every preceding byte of the frame.
//! Payload bodies are little-endian and fixed-size per stream except for
//! `EVENT`, which carries UTF-8 JSON.

pub mod bus;
pub mod json;
pub mod log;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{ControlMode, ValveCommand};
use crate::kinematics::Quaternion;

pub use bus::{Publisher, SeqTracker, Subscriber, TelemetryBus};
pub use log::{read_log, record, replay, LogReader, LogWriter, Pacing, Replay};

pub const MAGIC: [u8; 2] = [0xE5, 0x0B];
pub const HEADER_LEN: usize = 17;
pub const CRC_LEN: usize = 4;
pub const MAX_PAYLOAD: usize = u16::MAX as usize;

/// EMG samples per channel per frame: 10 ms at 2 kHz.
pub const EMG_BLOCK: usize = 20;
pub const EMG_CHANNELS: usize = 3;
pub const IMU_PAYLOAD_LEN: usize = 3 * 16 + 3;
pub const EMG_PAYLOAD_LEN: usize = EMG_CHANNELS * EMG_BLOCK * 4;

/// Nominal live rates, Hz.
pub const IMU_RATE_HZ: f64 = 100.0;
pub const PRESSURE_RATE_HZ: f64 = 200.0;
pub const CTRL_RATE_HZ: f64 = 200.0;
pub const EMG_FRAME_RATE_HZ: f64 = 100.0;
pub const EMG_SAMPLE_RATE_HZ: f64 = 2000.0;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EncodeError {
    #[error("payload of {0} bytes exceeds 65535")]
    PayloadTooLarge(usize),
    #[error("invalid payload: {0}")]
    InvalidPayload(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DecodeError {
    #[error("bad magic {0:#04x} {1:#04x}")]
    BadMagic(u8, u8),
    #[error("crc mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    BadCrc { stored: u32, computed: u32 },
    #[error("truncated frame: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("unknown stream id {0}")]
    UnknownStream(u8),
    #[error("malformed {stream:?} payload: {reason}")]
    BadPayload { stream: StreamId, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
#[repr(u8)]
pub enum StreamId {
    Imu = 1,
    Pressure = 2,
    Emg = 3,
    Ctrl = 4,
    Event = 5,
}

impl StreamId {
    pub const ALL: [StreamId; 5] =
        [StreamId::Imu, StreamId::Pressure, StreamId::Emg, StreamId::Ctrl, StreamId::Event];

    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            1 => Some(StreamId::Imu),
            2 => Some(StreamId::Pressure),
            3 => Some(StreamId::Emg),
            4 => Some(StreamId::Ctrl),
            5 => Some(StreamId::Event),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            StreamId::Imu => "imu",
            StreamId::Pressure => "pressure",
            StreamId::Emg => "emg",
            StreamId::Ctrl => "ctrl",
            StreamId::Event => "event",
        }
    }
}

/// Quaternion as carried on the wire: `[w, x, y, z]` in single precision.
pub type WireQuat = [f32; 4];

pub fn quat_to_wire(q: Quaternion) -> WireQuat {
    [q.w as f32, q.x as f32, q.y as f32, q.z as f32]
}

pub fn quat_from_wire(q: WireQuat) -> Quaternion {
    Quaternion::new(q[0] as f64, q[1] as f64, q[2] as f64, q[3] as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImuPayload {
    pub q_torso: WireQuat,
    pub q_upper_arm: WireQuat,
    pub q_forearm: WireQuat,
    pub calib: [u8; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PressurePayload {
    /// Gauge pressure, kPa.
    pub kpa: f32,
}

/// One 10 ms block of the three deltoid channels, millivolts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmgPayload {
    pub ad: [f32; EMG_BLOCK],
    pub md: [f32; EMG_BLOCK],
    pub pd: [f32; EMG_BLOCK],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CtrlPayload {
    pub valves: ValveCommand,
    pub mode: ControlMode,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Imu(ImuPayload),
    Pressure(PressurePayload),
    Emg(EmgPayload),
    Ctrl(CtrlPayload),
    /// UTF-8 JSON document.
    Event(Vec<u8>),
}

impl Payload {
    pub fn stream(&self) -> StreamId {
        match self {
            Payload::Imu(_) => StreamId::Imu,
            Payload::Pressure(_) => StreamId::Pressure,
            Payload::Emg(_) => StreamId::Emg,
            Payload::Ctrl(_) => StreamId::Ctrl,
            Payload::Event(_) => StreamId::Event,
        }
    }

    pub fn event_json<T: Serialize>(value: &T) -> Payload {
        Payload::Event(serde_json::to_vec(value).expect("serializable event"))
    }

    fn encoded_len(&self) -> usize {
        match self {
            Payload::Imu(_) => IMU_PAYLOAD_LEN,
            Payload::Pressure(_) => 4,
            Payload::Emg(_) => EMG_PAYLOAD_LEN,
            Payload::Ctrl(_) => 2,
            Payload::Event(b) => b.len(),
        }
    }

    fn write(&self, out: &mut Vec<u8>) {
        match self {
            Payload::Imu(p) => {
                for q in [&p.q_torso, &p.q_upper_arm, &p.q_forearm] {
                    for c in q {
                        out.extend_from_slice(&c.to_le_bytes());
                    }
                }
                out.extend_from_slice(&p.calib);
            }
            Payload::Pressure(p) => out.extend_from_slice(&p.kpa.to_le_bytes()),
            Payload::Emg(p) => {
                for ch in [&p.ad, &p.md, &p.pd] {
                    for s in ch {
                        out.extend_from_slice(&s.to_le_bytes());
                    }
                }
            }
            Payload::Ctrl(p) => {
                out.push(p.valves.to_bits());
                out.push(p.mode.to_u8());
            }
            Payload::Event(b) => out.extend_from_slice(b),
        }
    }

    fn read(stream: StreamId, body: &[u8]) -> Result<Payload, DecodeError> {
        let bad = |reason: String| DecodeError::BadPayload { stream, reason };
        let f32_at = |i: usize| f32::from_le_bytes(body[i..i + 4].try_into().unwrap());
        match stream {
            StreamId::Imu => {
                if body.len() != IMU_PAYLOAD_LEN {
                    return Err(bad(format!("length {} != {IMU_PAYLOAD_LEN}", body.len())));
                }
                let quat = |k: usize| -> Result<WireQuat, DecodeError> {
                    let q = [f32_at(k * 16), f32_at(k * 16 + 4), f32_at(k * 16 + 8), f32_at(k * 16 + 12)];
                    let norm = q.iter().map(|&c| (c as f64) * (c as f64)).sum::<f64>().sqrt();
                    if !norm.is_finite() || (norm - 1.0).abs() > 1e-3 {
                        return Err(bad(format!("quaternion {k} norm {norm}")));
                    }
                    Ok(q)
                };
                Ok(Payload::Imu(ImuPayload {
                    q_torso: quat(0)?,
                    q_upper_arm: quat(1)?,
                    q_forearm: quat(2)?,
                    calib: [body[48], body[49], body[50]],
                }))
            }
            StreamId::Pressure => {
                if body.len() != 4 {
                    return Err(bad(format!("length {} != 4", body.len())));
                }
                Ok(Payload::Pressure(PressurePayload { kpa: f32_at(0) }))
            }
            StreamId::Emg => {
                if body.len() != EMG_PAYLOAD_LEN {
                    return Err(bad(format!(
                        "length {} != {EMG_PAYLOAD_LEN} ({EMG_BLOCK} samples x {EMG_CHANNELS} channels)",
                        body.len()
                    )));
                }
                let block = |ch: usize| {
                    let mut b = [0f32; EMG_BLOCK];
                    for (i, s) in b.iter_mut().enumerate() {
                        *s = f32_at((ch * EMG_BLOCK + i) * 4);
                    }
                    b
                };
                Ok(Payload::Emg(EmgPayload { ad: block(0), md: block(1), pd: block(2) }))
            }
            StreamId::Ctrl => {
                if body.len() != 2 {
                    return Err(bad(format!("length {} != 2", body.len())));
                }
                if body[0] & 0xF0 != 0 {
                    return Err(bad(format!("reserved valve bits set: {:#04x}", body[0])));
                }
                let mode = ControlMode::from_u8(body[1])
                    .ok_or_else(|| bad(format!("unknown mode {}", body[1])))?;
                Ok(Payload::Ctrl(CtrlPayload { valves: ValveCommand::from_bits(body[0]), mode }))
            }
            StreamId::Event => {
                std::str::from_utf8(body).map_err(|e| bad(e.to_string()))?;
                Ok(Payload::Event(body.to_vec()))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TelemetryFrame {
    pub seq: u32,
    pub timestamp_us: u64,
    pub payload: Payload,
}

impl TelemetryFrame {
    pub fn new(seq: u32, timestamp_us: u64, payload: Payload) -> Self {
        TelemetryFrame { seq, timestamp_us, payload }
    }

    pub fn stream(&self) -> StreamId {
        self.payload.stream()
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + self.payload.encoded_len() + CRC_LEN
    }
}

pub fn encode_frame(frame: &TelemetryFrame) -> Result<Vec<u8>, EncodeError> {
    let mut out = Vec::with_capacity(frame.encoded_len());
    encode_frame_into(frame, &mut out)?;
    Ok(out)
}

/// Appends the encoding of `frame` to `out`.
pub fn encode_frame_into(frame: &TelemetryFrame, out: &mut Vec<u8>) -> Result<(), EncodeError> {
    let len = frame.payload.encoded_len();
    if len > MAX_PAYLOAD {
        return Err(EncodeError::PayloadTooLarge(len));
    }
    if let Payload::Event(b) = &frame.payload {
        if std::str::from_utf8(b).is_err() {
            return Err(EncodeError::InvalidPayload("event payload is not UTF-8".into()));
        }
    }
    let start = out.len();
    out.extend_from_slice(&MAGIC);
    out.push(frame.stream() as u8);
    out.extend_from_slice(&frame.seq.to_le_bytes());
    out.extend_from_slice(&frame.timestamp_us.to_le_bytes());
    out.extend_from_slice(&(len as u16).to_le_bytes());
    frame.payload.write(out);
    let crc = crc32fast::hash(&out[start..]);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(())
}

/// Decodes the frame at the start of `bytes`; trailing bytes are ignored.
pub fn decode_frame(bytes: &[u8]) -> Result<TelemetryFrame, DecodeError> {
    decode_prefix(bytes).map(|(f, _)| f)
}

/// Decodes the frame at the start of `bytes` and reports its encoded length.
pub fn decode_prefix(bytes: &[u8]) -> Result<(TelemetryFrame, usize), DecodeError> {
    if bytes.len() < 2 {
        return Err(DecodeError::Truncated { needed: HEADER_LEN, available: bytes.len() });
    }
    if bytes[..2] != MAGIC {
        return Err(DecodeError::BadMagic(bytes[0], bytes[1]));
    }
    if bytes.len() < HEADER_LEN {
        return Err(DecodeError::Truncated { needed: HEADER_LEN, available: bytes.len() });
    }
    let len = u16::from_le_bytes([bytes[15], bytes[16]]) as usize;
    let total = HEADER_LEN + len + CRC_LEN;
    if bytes.len() < total {
        return Err(DecodeError::Truncated { needed: total, available: bytes.len() });
    }
    let body_end = HEADER_LEN + len;
    let stored = u32::from_le_bytes(bytes[body_end..total].try_into().unwrap());
    let computed = crc32fast::hash(&bytes[..body_end]);
    if stored != computed {
        return Err(DecodeError::BadCrc { stored, computed });
    }
    let stream = StreamId::from_u8(bytes[2]).ok_or(DecodeError::UnknownStream(bytes[2]))?;
    let seq = u32::from_le_bytes(bytes[3..7].try_into().unwrap());
    let timestamp_us = u64::from_le_bytes(bytes[7..15].try_into().unwrap());
    let payload = Payload::read(stream, &bytes[HEADER_LEN..body_end])?;
    Ok((TelemetryFrame { seq, timestamp_us, payload }, total))
}
