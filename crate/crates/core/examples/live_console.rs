//! A live session served over websocket, driven by a scripted console.
//!
//! Starts the server on a free port, connects as the console, runs one
//! dynamic trial at four times real speed and prints what comes back.
//!
//! Run with `cargo run --example live_console`.

use std::time::{Duration, Instant};

use exobench::session::config::{Condition, ExoVersion, Plane, Power, Task, TrialSpec};
use exobench::session::live::{ConsoleMessage, LiveRunner, Phase, TrialAction, TrialCmd};
use exobench::session::serve::{ServeOptions, Server};
use exobench::session::synth::make_participant;
use exobench::session::Config;
use tungstenite::Message;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = Config::default();
    let participant = make_participant(&cfg, 1, "S01")?;
    let plan = vec![TrialSpec {
        task: Task::DynamicLift,
        plane: Some(Plane::Abduction),
        condition: Condition::worn(ExoVersion::V2, Power::On),
        reps: 1,
        rest_s: 30,
        index: 0,
    }];
    let runner = LiveRunner::new(cfg, participant, plan, 1, None)?;
    let server = Server::start(runner, ServeOptions { speed: 4.0, ..ServeOptions::local(0) })?;
    println!("serving on ws://{}", server.ws_addr());

    let (mut ws, _) = tungstenite::connect(format!("ws://{}", server.ws_addr()))?;
    let cmd = ConsoleMessage::TrialCmd(TrialCmd { id: 1, action: TrialAction::Start });
    println!("-> {}", cmd.to_json());
    ws.send(Message::Text(cmd.to_json()))?;

    let mut telemetry = 0usize;
    let mut last_target = None;
    let deadline = Instant::now() + Duration::from_secs(20);
    while Instant::now() < deadline {
        let Message::Text(text) = ws.read()? else { continue };
        match ConsoleMessage::parse(&text)? {
            ConsoleMessage::Telemetry(_) => telemetry += 1,
            ConsoleMessage::Target(t) => last_target = Some(t.target_deg),
            ConsoleMessage::TrialState(s) => {
                println!("<- {text}");
                if s.phase == Phase::Complete || s.phase == Phase::Resting {
                    break;
                }
            }
            other => println!("<- {}", other.kind()),
        }
    }
    println!("telemetry messages: {telemetry}, last target {:?}", last_target.map(|t| format!("{t:.1} deg")));
    ws.close(None)?;
    server.shutdown();
    Ok(())
}
