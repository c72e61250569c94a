//! Live trial execution driven by console commands.
//!
//! [`LiveRunner`] owns the rig simulation for one participant and advances it
//! on a session clock. All operator input arrives as [`ConsoleMessage`]s and
//! is applied in order; every reply and state change is a `trial_state`
//! message, which is the only source of truth the console displays.

use serde::{Deserialize, Serialize};

use crate::comfort::{ComfortSubmission, DirectionResponse, QuestForm, TorsoTemplate};
use crate::telemetry::json::{to_json, JsonFrame};
use crate::telemetry::{Payload, TelemetryBus, TelemetryFrame};

use super::config::{Config, ExoVersion, Task, TrialSpec};
use super::store::{ParticipantManifest, SessionStore};
use super::synth::{FrameSink, LogSink, SeqCounters, SyntheticParticipant, TrialSim};
use super::trial::{trial_tags, StopReason, TrialRecord};
use super::SessionError;

// ----------------------------------------------------------------------------
// messages

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialAction {
    Start,
    Stop,
    /// Skip the next planned trial without running it.
    Advance,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialCmd {
    pub id: u64,
    pub action: TrialAction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Idle,
    Running,
    /// Waiting for a survey submission.
    Survey,
    Resting,
    Complete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialState {
    /// Id of the command this answers, if any.
    pub id: Option<u64>,
    pub accepted: bool,
    pub error: Option<String>,
    pub phase: Phase,
    /// Active trial, or the next one when idle or resting.
    pub trial: Option<String>,
    /// Session clock, s.
    pub t_s: f64,
    pub rest_remaining_s: f64,
    pub last_stop: Option<StopReason>,
    pub last_endurance_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetBody {
    /// Trial time, s.
    pub t_s: f64,
    pub target_deg: f64,
    pub threshold_deg: Option<f64>,
}

/// Envelope of everything exchanged with the console:
/// `{"kind": "...", "body": {...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "body", rename_all = "snake_case")]
pub enum ConsoleMessage {
    Telemetry(JsonFrame),
    Target(TargetBody),
    TrialCmd(TrialCmd),
    TrialState(TrialState),
    ComfortSubmit(ComfortSubmission),
    QuestSubmit(QuestForm),
    DirectionSubmit(DirectionResponse),
}

impl ConsoleMessage {
    pub fn parse(text: &str) -> Result<Self, SessionError> {
        serde_json::from_str(text).map_err(|e| SessionError::Format(format!("console message: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("console messages serialize")
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ConsoleMessage::Telemetry(_) => "telemetry",
            ConsoleMessage::Target(_) => "target",
            ConsoleMessage::TrialCmd(_) => "trial_cmd",
            ConsoleMessage::TrialState(_) => "trial_state",
            ConsoleMessage::ComfortSubmit(_) => "comfort_submit",
            ConsoleMessage::QuestSubmit(_) => "quest_submit",
            ConsoleMessage::DirectionSubmit(_) => "direction_submit",
        }
    }
}

// ----------------------------------------------------------------------------
// runner

/// Publishes frames on the bus and, when recording, appends them to the log.
struct LiveSink<'a> {
    bus: &'a TelemetryBus,
    seq: &'a mut SeqCounters,
    log: Option<&'a mut LogSink>,
}

impl FrameSink for LiveSink<'_> {
    fn put(&mut self, t_s: f64, payload: Payload) -> Result<(), SessionError> {
        let f = self.seq.frame(t_s, payload.clone());
        self.bus.deliver(&f);
        if let Some(l) = self.log.as_deref_mut() {
            l.put(t_s, payload)?;
        }
        Ok(())
    }
}

struct Active {
    sim: TrialSim,
    log: Option<LogSink>,
    start_s: f64,
}

pub struct LiveRunner {
    cfg: Config,
    participant: SyntheticParticipant,
    plan: Vec<TrialSpec>,
    cursor: usize,
    seed: u64,
    store: Option<SessionStore>,
    manifest: ParticipantManifest,
    bus: TelemetryBus,
    seq: SeqCounters,
    clock: f64,
    phase: Phase,
    rest_until: f64,
    active: Option<Active>,
    last_stop: Option<StopReason>,
    last_endurance: Option<f64>,
    outbox: Vec<ConsoleMessage>,
}

impl LiveRunner {
    /// `store`, when given, must already hold the study manifest; trial logs
    /// and the participant manifest are written there as trials close.
    pub fn new(
        cfg: Config,
        participant: SyntheticParticipant,
        plan: Vec<TrialSpec>,
        seed: u64,
        store: Option<SessionStore>,
    ) -> Result<Self, SessionError> {
        if let Some(s) = &store {
            s.prepare_participant(&participant.id)?;
        }
        let manifest = ParticipantManifest {
            participant: participant.id.clone(),
            body_mass_kg: participant.body_mass_kg,
            handedness: participant.side,
            load_kg: participant.plant.load_mass,
            trials: Vec::new(),
            comfort: Vec::new(),
            quest: Vec::new(),
            directions: Vec::new(),
        };
        let phase = if plan.is_empty() { Phase::Complete } else { Phase::Idle };
        let runner = LiveRunner {
            cfg,
            participant,
            plan,
            cursor: 0,
            seed,
            store,
            manifest,
            bus: TelemetryBus::new(),
            seq: SeqCounters::default(),
            clock: 0.0,
            phase,
            rest_until: 0.0,
            active: None,
            last_stop: None,
            last_endurance: None,
            outbox: Vec::new(),
        };
        runner.persist()?;
        Ok(runner)
    }

    pub fn bus(&self) -> &TelemetryBus {
        &self.bus
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn manifest(&self) -> &ParticipantManifest {
        &self.manifest
    }

    fn current(&self) -> Option<&TrialSpec> {
        self.plan.get(self.cursor)
    }

    pub fn state(&self, id: Option<u64>, error: Option<String>) -> TrialState {
        TrialState {
            id,
            accepted: error.is_none(),
            error,
            phase: self.phase,
            trial: self.current().map(|s| s.id()),
            t_s: self.clock,
            rest_remaining_s: (self.rest_until - self.clock).max(0.0),
            last_stop: self.last_stop,
            last_endurance_s: self.last_endurance,
        }
    }

    fn broadcast_state(&mut self) {
        let s = self.state(None, None);
        self.outbox.push(ConsoleMessage::TrialState(s));
    }

    /// Messages produced since the last call (state changes and targets).
    pub fn drain_outbox(&mut self) -> Vec<ConsoleMessage> {
        std::mem::take(&mut self.outbox)
    }

    /// Applies one console message and returns the direct reply.
    pub fn handle(&mut self, msg: ConsoleMessage) -> ConsoleMessage {
        let state = match msg {
            ConsoleMessage::TrialCmd(cmd) => {
                let r = self.command(cmd.action);
                self.state(Some(cmd.id), r.err().map(|e| e.to_string()))
            }
            ConsoleMessage::ComfortSubmit(c) => {
                let r = self.submit(Some((Task::ComfortProbe, c.version)), |m| {
                    c.validate(&TorsoTemplate::canonical())?;
                    m.comfort.retain(|x| x.version != c.version);
                    m.comfort.push(c);
                    Ok(())
                });
                self.state(None, r.err().map(|e| e.to_string()))
            }
            ConsoleMessage::QuestSubmit(q) => {
                let r = self.submit(Some((Task::Quest, q.version)), |m| {
                    q.scores.validate()?;
                    m.quest.retain(|x| x.version != q.version);
                    m.quest.push(q);
                    Ok(())
                });
                self.state(None, r.err().map(|e| e.to_string()))
            }
            ConsoleMessage::DirectionSubmit(d) => {
                let r = self.submit(None, |m| {
                    m.directions.retain(|x| x.version != d.version);
                    m.directions.push(d);
                    Ok(())
                });
                self.state(None, r.err().map(|e| e.to_string()))
            }
            other => self.state(None, Some(format!("'{}' is not accepted from the console", other.kind()))),
        };
        ConsoleMessage::TrialState(state)
    }

    /// Parses and applies a raw console message; malformed input and unknown
    /// kinds produce a rejected `trial_state`.
    pub fn handle_text(&mut self, text: &str) -> ConsoleMessage {
        match ConsoleMessage::parse(text) {
            Ok(m) => self.handle(m),
            Err(e) => {
                let id = serde_json::from_str::<serde_json::Value>(text).ok().and_then(|v| v["body"]["id"].as_u64());
                ConsoleMessage::TrialState(self.state(id, Some(e.to_string())))
            }
        }
    }

    fn reject<T>(&self, why: impl Into<String>) -> Result<T, SessionError> {
        Err(SessionError::Rejected(why.into()))
    }

    fn command(&mut self, action: TrialAction) -> Result<(), SessionError> {
        match (action, self.phase) {
            (_, Phase::Complete) => self.reject("all planned trials are done"),
            (TrialAction::Start, Phase::Running | Phase::Survey) => self.reject("a trial is already running"),
            (TrialAction::Start, Phase::Resting) => {
                self.reject(format!("rest timer running: {:.1} s remaining", self.rest_until - self.clock))
            }
            (TrialAction::Start, Phase::Idle) => self.start(),
            (TrialAction::Stop, Phase::Running) => {
                let active = self.active.as_mut().expect("running implies active");
                let mut sink = LiveSink { bus: &self.bus, seq: &mut self.seq, log: active.log.as_mut() };
                active.sim.voluntary_stop(&mut sink)?;
                self.close_active()
            }
            (TrialAction::Stop, _) => self.reject("no trial is running"),
            (TrialAction::Advance, Phase::Running) => self.reject("stop the running trial first"),
            (TrialAction::Advance, _) => {
                self.cursor += 1;
                self.phase = if self.cursor >= self.plan.len() { Phase::Complete } else { Phase::Idle };
                self.rest_until = self.clock;
                self.broadcast_state();
                Ok(())
            }
        }
    }

    fn start(&mut self) -> Result<(), SessionError> {
        let spec = self.current().cloned().expect("idle implies a next trial");
        if !spec.task.is_recorded() {
            self.phase = Phase::Survey;
            self.broadcast_state();
            return Ok(());
        }
        let log = match &self.store {
            Some(s) => Some(LogSink::create(&s.log_path(&self.participant.id, &spec.id()))?),
            None => None,
        };
        let sim = TrialSim::new(&self.cfg, &self.participant, &spec, self.seed)?;
        self.active = Some(Active { sim, log, start_s: self.clock });
        self.phase = Phase::Running;
        self.broadcast_state();
        Ok(())
    }

    fn submit<F>(&mut self, closes: Option<(Task, ExoVersion)>, apply: F) -> Result<(), SessionError>
    where
        F: FnOnce(&mut ParticipantManifest) -> Result<(), SessionError>,
    {
        apply(&mut self.manifest)?;
        self.persist()?;
        // a matching submission closes an open survey step
        if let (Phase::Survey, Some((task, version))) = (self.phase, closes) {
            let spec = self.current().cloned().expect("survey implies a trial");
            if spec.task == task && spec.condition.version == Some(version) {
                self.cursor += 1;
                self.phase = if self.cursor >= self.plan.len() { Phase::Complete } else { Phase::Idle };
                self.broadcast_state();
            }
        }
        Ok(())
    }

    fn persist(&self) -> Result<(), SessionError> {
        match &self.store {
            Some(s) => s.write_participant(&self.manifest),
            None => Ok(()),
        }
    }

    fn close_active(&mut self) -> Result<(), SessionError> {
        let Active { sim, log, start_s } = self.active.take().expect("active trial");
        let truth = sim.outcome().cloned().expect("closed trial has an outcome");
        if let Some(l) = log {
            l.finish()?;
        }
        let spec = sim.spec().clone();
        self.manifest.trials.push(TrialRecord {
            id: spec.id(),
            spec: spec.clone(),
            start_s,
            stop_s: start_s + truth.duration_s,
            stop_reason: truth.stop_reason,
            endurance_s: truth.endurance_s,
            log: self.store.as_ref().map(|_| SessionStore::log_rel_path(&spec.id())),
            derived: Vec::new(),
            tags: trial_tags(&spec),
        });
        self.persist()?;
        self.last_stop = Some(truth.stop_reason);
        self.last_endurance = truth.endurance_s;
        self.cursor += 1;
        self.rest_until = self.clock + spec.rest_s as f64;
        self.phase = if self.cursor >= self.plan.len() {
            Phase::Complete
        } else if spec.rest_s > 0 {
            Phase::Resting
        } else {
            Phase::Idle
        };
        self.broadcast_state();
        Ok(())
    }

    /// Advances the session clock by `dt` seconds.
    pub fn advance(&mut self, dt: f64) -> Result<(), SessionError> {
        let t_end = self.clock + dt;
        if let Some(a) = self.active.as_mut() {
            let trial_end = t_end - a.start_s;
            let mut sink = LiveSink { bus: &self.bus, seq: &mut self.seq, log: a.log.as_mut() };
            let done = a.sim.run_until(trial_end, &mut sink)?;
            if let Some(target) = a.sim.target() {
                let threshold = (a.sim.spec().task == Task::StaticHold).then_some(self.cfg.protocol.static_threshold_deg);
                self.outbox.push(ConsoleMessage::Target(TargetBody {
                    t_s: a.sim.time(),
                    target_deg: target,
                    threshold_deg: threshold,
                }));
            }
            if let Some(t) = done {
                self.clock = a.start_s + t.duration_s;
                self.close_active()?;
            }
        }
        self.clock = self.clock.max(t_end);
        if self.phase == Phase::Resting && self.clock >= self.rest_until {
            self.phase = Phase::Idle;
            self.broadcast_state();
        }
        Ok(())
    }
}

/// JSON telemetry message for a frame.
pub fn telemetry_message(f: &TelemetryFrame) -> ConsoleMessage {
    ConsoleMessage::Telemetry(to_json(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::session::config::{Condition, Plane, Power};
    use crate::session::synth::make_participant;
    use crate::telemetry::StreamId;

    fn spec(task: Task, plane: Option<Plane>, c: Condition, reps: u32, rest: u32) -> TrialSpec {
        TrialSpec { task, plane, condition: c, reps, rest_s: rest, index: 0 }
    }

    fn runner(plan: Vec<TrialSpec>) -> LiveRunner {
        let cfg = Config::default();
        let p = make_participant(&cfg, 1, "S01").unwrap();
        LiveRunner::new(cfg, p, plan, 1, None).unwrap()
    }

    fn cmd(r: &mut LiveRunner, id: u64, action: TrialAction) -> TrialState {
        match r.handle(ConsoleMessage::TrialCmd(TrialCmd { id, action })) {
            ConsoleMessage::TrialState(s) => s,
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn message_envelope() {
        let m = ConsoleMessage::TrialCmd(TrialCmd { id: 7, action: TrialAction::Start });
        assert_eq!(m.to_json(), r#"{"kind":"trial_cmd","body":{"id":7,"action":"start"}}"#);
        assert_eq!(ConsoleMessage::parse(&m.to_json()).unwrap(), m);
        assert!(ConsoleMessage::parse(r#"{"kind":"launch","body":{}}"#).is_err());
        assert!(ConsoleMessage::parse(r#"{"kind":"trial_cmd","body":{"id":1,"action":"start","x":1}}"#).is_err());
    }

    #[test]
    fn echo_ids_and_rest_gate() {
        let dyn_v1 = spec(Task::DynamicLift, Some(Plane::Abduction), Condition::worn(ExoVersion::V1, Power::On), 1, 120);
        let mut r = runner(vec![dyn_v1.clone(), dyn_v1]);
        let s = cmd(&mut r, 41, TrialAction::Start);
        assert!(s.accepted && s.id == Some(41) && s.phase == Phase::Running);
        let s = cmd(&mut r, 42, TrialAction::Start);
        assert!(!s.accepted && s.id == Some(42));
        r.advance(20.0).unwrap();
        assert_eq!(r.phase(), Phase::Resting);
        assert_eq!(r.manifest().trials[0].stop_reason, StopReason::Completed);
        let s = cmd(&mut r, 43, TrialAction::Start);
        assert!(!s.accepted && s.error.unwrap().contains("rest"));
        let stop_s = r.manifest().trials[0].stop_s;
        assert!(stop_s < 20.0);
        let remaining = r.state(None, None).rest_remaining_s;
        assert!((remaining - (stop_s + 120.0 - 20.0)).abs() < 1e-9);
        r.advance(remaining - 1.0).unwrap();
        assert_eq!(r.phase(), Phase::Resting);
        r.advance(1.0).unwrap();
        assert_eq!(r.phase(), Phase::Idle);
        let s = cmd(&mut r, 44, TrialAction::Start);
        assert!(s.accepted);
        let gap = r.clock() - r.manifest().trials[0].stop_s;
        assert!(gap >= 120.0 - 1e-9, "{gap}");
    }

    #[test]
    fn stop_during_static_hold_is_voluntary() {
        let st = spec(Task::StaticHold, Some(Plane::Abduction), Condition::worn(ExoVersion::V1, Power::Off), 1, 180);
        let mut r = runner(vec![st]);
        let sub = r.bus().subscribe_filtered(100_000, Some(vec![StreamId::Imu]));
        cmd(&mut r, 1, TrialAction::Start);
        r.advance(5.0).unwrap();
        assert_eq!(sub.len(), 500);
        let s = cmd(&mut r, 2, TrialAction::Stop);
        assert!(s.accepted);
        assert_eq!(s.last_stop, Some(StopReason::VoluntaryStop));
        assert!((s.last_endurance_s.unwrap() - 5.0).abs() < 1e-6);
        assert_eq!(s.phase, Phase::Complete);
    }

    #[test]
    fn surveys_close_their_step() {
        let probe = spec(Task::ComfortProbe, None, Condition::worn(ExoVersion::V2, Power::On), 1, 0);
        let mut r = runner(vec![probe]);
        cmd(&mut r, 1, TrialAction::Start);
        assert_eq!(r.phase(), Phase::Survey);
        let bad = r.handle_text(r#"{"kind":"comfort_submit","body":{"participant":"S01","version":"v2","marks":[{"cells":[5,4],"intensity":1}]}}"#);
        assert!(matches!(bad, ConsoleMessage::TrialState(TrialState { accepted: false, .. })));
        let ok = r.handle_text(r#"{"kind":"comfort_submit","body":{"participant":"S01","version":"v2","marks":[{"cells":[4,5],"intensity":2}]}}"#);
        assert!(matches!(ok, ConsoleMessage::TrialState(TrialState { accepted: true, .. })));
        assert_eq!(r.phase(), Phase::Complete);
        assert_eq!(r.manifest().comfort.len(), 1);
    }

    #[test]
    fn unknown_kind_is_rejected_with_id() {
        let mut r = runner(vec![]);
        match r.handle_text(r#"{"kind":"self_destruct","body":{"id":9}}"#) {
            ConsoleMessage::TrialState(s) => {
                assert!(!s.accepted);
                assert_eq!(s.id, Some(9));
            }
            other => panic!("{other:?}"),
        }
    }
}
