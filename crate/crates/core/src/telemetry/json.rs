//! JSON mirror of telemetry frames for the console transport:
//! `{"stream": "...", "seq": n, "t_us": n, "payload": {...}}` with
//! quaternions as `[w, x, y, z]` arrays.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{
    CtrlPayload, EmgPayload, ImuPayload, Payload, PressurePayload, StreamId, TelemetryFrame,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JsonFrame {
    pub stream: StreamId,
    pub seq: u32,
    pub t_us: u64,
    pub payload: Value,
}

#[derive(Debug, thiserror::Error)]
pub enum JsonFrameError {
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub fn to_json(frame: &TelemetryFrame) -> JsonFrame {
    let payload = match &frame.payload {
        Payload::Imu(p) => serde_json::to_value(p),
        Payload::Pressure(p) => serde_json::to_value(p),
        Payload::Emg(p) => serde_json::to_value(p),
        Payload::Ctrl(p) => serde_json::to_value(p),
        Payload::Event(b) => Ok(serde_json::from_slice(b)
            .unwrap_or_else(|_| json!(String::from_utf8_lossy(b).into_owned()))),
    }
    .expect("payload types serialize infallibly");
    JsonFrame { stream: frame.stream(), seq: frame.seq, t_us: frame.timestamp_us, payload }
}

pub fn to_json_string(frame: &TelemetryFrame) -> String {
    serde_json::to_string(&to_json(frame)).expect("json frame")
}

pub fn from_json(j: &JsonFrame) -> Result<TelemetryFrame, JsonFrameError> {
    let payload = match j.stream {
        StreamId::Imu => Payload::Imu(serde_json::from_value::<ImuPayload>(j.payload.clone())?),
        StreamId::Pressure => {
            Payload::Pressure(serde_json::from_value::<PressurePayload>(j.payload.clone())?)
        }
        StreamId::Emg => Payload::Emg(serde_json::from_value::<EmgPayload>(j.payload.clone())?),
        StreamId::Ctrl => Payload::Ctrl(serde_json::from_value::<CtrlPayload>(j.payload.clone())?),
        StreamId::Event => Payload::Event(serde_json::to_vec(&j.payload)?),
    };
    Ok(TelemetryFrame::new(j.seq, j.t_us, payload))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::{ControlMode, ValveCommand};

    #[test]
    fn imu_mirror_shape() {
        let f = TelemetryFrame::new(
            3,
            10_000,
            Payload::Imu(ImuPayload {
                q_torso: [1.0, 0.0, 0.0, 0.0],
                q_upper_arm: [0.5, 0.5, 0.5, 0.5],
                q_forearm: [1.0, 0.0, 0.0, 0.0],
                calib: [3, 3, 2],
            }),
        );
        let v: Value = serde_json::from_str(&to_json_string(&f)).unwrap();
        assert_eq!(v["stream"], "imu");
        assert_eq!(v["seq"], 3);
        assert_eq!(v["t_us"], 10_000);
        assert_eq!(v["payload"]["q_upper_arm"], json!([0.5, 0.5, 0.5, 0.5]));
        assert_eq!(from_json(&to_json(&f)).unwrap(), f);
    }

    #[test]
    fn ctrl_and_event_roundtrip() {
        let c = TelemetryFrame::new(
            1,
            5,
            Payload::Ctrl(CtrlPayload { valves: ValveCommand::VENT, mode: ControlMode::Venting }),
        );
        assert_eq!(from_json(&to_json(&c)).unwrap(), c);
        let e = TelemetryFrame::new(0, 0, Payload::Event(br#"{"kind":"block"}"#.to_vec()));
        let j = to_json(&e);
        assert_eq!(j.payload["kind"], "block");
        assert_eq!(from_json(&j).unwrap(), e);
    }
}
