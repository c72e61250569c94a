//! Encode frames, record them to a log, damage one entry, read back.
//!
//! Run with `cargo run --example telemetry_roundtrip`.

use exobench::controller::{ControlMode, ValveCommand};
use exobench::telemetry::json::to_json_string;
use exobench::telemetry::log::{read_log, LogWriter};
use exobench::telemetry::{encode_frame, CtrlPayload, Payload, PressurePayload, SeqTracker, StreamId, TelemetryFrame};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("demo.exolog");

    let ctrl = TelemetryFrame::new(
        1,
        5000,
        Payload::Ctrl(CtrlPayload { valves: ValveCommand::INFLATE, mode: ControlMode::Inflating }),
    );
    let bytes = encode_frame(&ctrl)?;
    println!("ctrl frame: {}", bytes.iter().map(|b| format!("{b:02x}")).collect::<String>());

    let mut log = LogWriter::append(&path)?;
    for i in 0..100u32 {
        let f = TelemetryFrame::new(i, i as u64 * 5000, Payload::Pressure(PressurePayload { kpa: i as f32 * 0.5 }));
        log.write(&f)?;
    }
    log.write(&TelemetryFrame::new(0, 500_000, Payload::event_json(&serde_json::json!({"kind": "note", "text": "done"}))))?;
    log.flush()?;
    drop(log);

    // flip one payload byte of frame 40
    let mut raw = std::fs::read(&path)?;
    let flen = TelemetryFrame::new(0, 0, Payload::Pressure(PressurePayload { kpa: 0.0 })).encoded_len();
    raw[40 * flen + 17] ^= 0x5A;
    std::fs::write(&path, raw)?;

    let (frames, damaged) = read_log(&path)?;
    println!("read {} frames, {} damaged", frames.len(), damaged);

    let mut seq = SeqTracker::new();
    for f in &frames {
        seq.observe(f);
    }
    println!("pressure frames missing by sequence number: {}", seq.missing(StreamId::Pressure));
    println!("last frame as JSON: {}", to_json_string(frames.last().unwrap()));
    Ok(())
}
