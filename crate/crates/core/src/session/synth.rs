//! Synthetic participants and sessions.
//!
//! Each virtual participant gets individual anthropometrics, strength,
//! fatigability, free range of motion and EMG characteristics. Trials run
//! the plant, controller and effort model in closed loop and write the
//! resulting telemetry to ordinary `.exolog` files, so analysis sees exactly
//! what a recorded session would contain.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::comfort::{
    ComfortSubmission, Direction, DirectionResponse, Intensity, PressureMark, QuestForm, QuestItem, QuestScores,
    Region, TorsoTemplate,
};
use crate::controller::{ControlMode, HysteresisController, PressureMap, PressureRegulator, SafetyLimits, ValveCommand};
use crate::emg::EMG_FS;
use crate::kinematics::{shoulder_elevation, Quaternion, Side};
use crate::plant::{
    assist_torque, step_arm, step_pneumatics, ActuatorState, ArmPlantState, HumanEffortModel, PlantParams,
    CONTROL_DECIMATION, GRAVITY, PHYSICS_DT,
};
use crate::telemetry::log::LogWriter;
use crate::telemetry::{
    quat_from_wire, quat_to_wire, CtrlPayload, EmgPayload, ImuPayload, Payload, PressurePayload,
    TelemetryFrame, EMG_BLOCK,
};

use super::config::{compute_load, Config, ExoVersion, Plane, Task, TrialSpec};
use super::plan::{make_plan, RandomizationPlan};
use super::store::{write_json, ParticipantManifest, SessionStore, StudyManifest, STORE_FORMAT};
use super::trial::{pick_place_score, trial_tags, DynamicSchedule, StaticCriteria, StaticHoldFsm, StopReason, TrialRecord};
use super::SessionError;

pub const IMU_RATE_HZ: f64 = 100.0;
pub const EMG_BLOCK_RATE_HZ: f64 = EMG_FS / EMG_BLOCK as f64;

// ----------------------------------------------------------------------------
// pose synthesis

fn normalize3(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

/// Segment orientations that realize the given joint angles.
///
/// `saz_deg` follows the azimuth convention (0 forward, +90 lateral toward
/// `side`); `torso_yaw_deg` turns the whole body about the vertical.
pub fn pose_quaternions(sel_deg: f64, saz_deg: f64, efe_deg: f64, torso_yaw_deg: f64, side: Side) -> [Quaternion; 3] {
    let q_torso = Quaternion::from_axis_angle([0.0, 0.0, 1.0], torso_yaw_deg);
    let (se, ce) = sel_deg.to_radians().sin_cos();
    let (sa, ca) = saz_deg.to_radians().sin_cos();
    let u = [se * ca, side.lateral_sign() * se * sa, -ce];
    // rotation carrying the neutral axis -Z onto u
    let axis = [u[1], -u[0], 0.0];
    let q_local = if axis[0].hypot(axis[1]) < 1e-12 {
        if u[2] < 0.0 { Quaternion::IDENTITY } else { Quaternion::from_axis_angle([1.0, 0.0, 0.0], 180.0) }
    } else {
        Quaternion::from_axis_angle(normalize3(axis), sel_deg)
    };
    let q_arm = q_torso * q_local;
    let q_fore = q_arm * Quaternion::from_axis_angle([0.0, 1.0, 0.0], efe_deg);
    [q_torso, q_arm, q_fore]
}

// ----------------------------------------------------------------------------
// EMG synthesis

/// Gaussian noise shaped by a two-pole resonator whose centre frequency and
/// output RMS can change sample by sample.
#[derive(Debug, Clone)]
pub struct EmgChannelSynth {
    fs: f64,
    bandwidth_hz: f64,
    y1: f64,
    y2: f64,
}

impl EmgChannelSynth {
    pub fn new(fs: f64, bandwidth_hz: f64) -> Self {
        EmgChannelSynth { fs, bandwidth_hz, y1: 0.0, y2: 0.0 }
    }

    /// Next sample with output RMS `rms` around `center_hz`.
    pub fn sample<R: Rng>(&mut self, rng: &mut R, center_hz: f64, rms: f64) -> f64 {
        let r = (-PI * self.bandwidth_hz / self.fs).exp();
        let c = (2.0 * PI * center_hz / self.fs).cos();
        let a1 = 2.0 * r * c;
        let a2 = -r * r;
        // stationary variance of y = a1 y1 + a2 y2 + x for unit-variance x
        let var = (1.0 - a2) / ((1.0 + a2) * ((1.0 - a2).powi(2) - a1 * a1));
        let x: f64 = StandardNormal.sample(rng);
        let y = a1 * self.y1 + a2 * self.y2 + x;
        self.y2 = self.y1;
        self.y1 = y;
        y * rms / var.sqrt()
    }
}

/// Per-muscle EMG characteristics of one participant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmgTraits {
    /// RMS at full drive, mV, per AD/MD/PD.
    pub full_scale_mv: [f64; 3],
    /// Fresh median frequency, Hz.
    pub mdf_hz: [f64; 3],
}

#[derive(Debug, Clone)]
struct EmgBank {
    ch: [EmgChannelSynth; 3],
    traits: EmgTraits,
    fatigue_shift: f64,
    floor: f64,
    mains_mv: f64,
    n: u64,
}

impl EmgBank {
    fn new(traits: EmgTraits, cfg: &Config) -> Self {
        let mk = || EmgChannelSynth::new(EMG_FS, 80.0);
        EmgBank {
            ch: [mk(), mk(), mk()],
            traits,
            fatigue_shift: cfg.synthetic.emg_fatigue_shift,
            floor: cfg.synthetic.emg_noise_floor,
            mains_mv: cfg.synthetic.mains_mv,
            n: 0,
        }
    }

    /// One 2 kHz sample per channel. `drive` is the per-muscle activation in
    /// [0, 1]; `capacity` the remaining fatigue capacity.
    fn sample<R: Rng>(&mut self, rng: &mut R, drive: [f64; 3], capacity: f64) -> [f64; 3] {
        let mains = self.mains_mv * (2.0 * PI * 50.0 * self.n as f64 / EMG_FS).sin();
        self.n += 1;
        let mut out = [0.0; 3];
        for m in 0..3 {
            let fc = self.traits.mdf_hz[m] * (1.0 - self.fatigue_shift * (1.0 - capacity));
            let rms = self.traits.full_scale_mv[m] * (self.floor + drive[m].max(0.0));
            out[m] = self.ch[m].sample(rng, fc, rms) + mains;
        }
        out
    }
}

// ----------------------------------------------------------------------------
// participants

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticParticipant {
    pub id: String,
    pub body_mass_kg: f64,
    pub side: Side,
    pub plant: PlantParams,
    pub effort: HumanEffortModel,
    pub free_elevation_rom_deg: f64,
    pub free_haa_rom_deg: f64,
    pub emg: EmgTraits,
    pub quest_bias: f64,
}

fn hash_str(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

fn rng_for(seed: u64, a: &str, b: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ hash_str(a).rotate_left(17) ^ hash_str(b))
}

fn gauss<R: Rng>(rng: &mut R, mean: f64, sd: f64) -> f64 {
    if sd <= 0.0 {
        return mean;
    }
    Normal::new(mean, sd).expect("finite sd").sample(rng)
}

pub fn make_participant(cfg: &Config, seed: u64, id: &str) -> Result<SyntheticParticipant, SessionError> {
    let mut rng = rng_for(seed, id, "participant");
    let s = &cfg.synthetic;
    let mass = gauss(&mut rng, cfg.cohort.body_mass_mean_kg, cfg.cohort.body_mass_sd_kg).clamp(40.0, 120.0);
    let load = compute_load(mass)?;
    let base = cfg.plant;
    // upper limb as 5 % of body mass, scaled around the configured arm
    let arm_mass = base.arm_mass * mass / 70.0;
    let mut plant = PlantParams { arm_mass, load_mass: load, ..base };
    plant.inertia = arm_mass * plant.hand_dist.powi(2) / 3.0 + load * plant.hand_dist.powi(2);
    let effort = HumanEffortModel {
        tau_max: gauss(&mut rng, s.effort.tau_max, s.tau_max_sd).max(0.6 * s.effort.tau_max),
        fatigue_rate: gauss(&mut rng, s.effort.fatigue_rate, s.fatigue_rate_sd).max(0.3 * s.effort.fatigue_rate),
        capacity: 1.0,
        ..s.effort
    };
    let emg = EmgTraits {
        full_scale_mv: [0; 3].map(|_| s.emg_full_scale_mv * rng.gen_range(0.7..1.3)),
        mdf_hz: [0; 3].map(|_| gauss(&mut rng, s.emg_mdf_hz, 5.0)),
    };
    Ok(SyntheticParticipant {
        id: id.to_string(),
        body_mass_kg: mass,
        side: cfg.participant.handedness,
        plant,
        effort,
        free_elevation_rom_deg: gauss(&mut rng, s.elevation_free_rom_deg, s.rom_sd_deg),
        free_haa_rom_deg: gauss(&mut rng, s.haa_free_rom_deg, s.rom_sd_deg),
        emg,
        quest_bias: gauss(&mut rng, 0.0, 0.3),
    })
}

// ----------------------------------------------------------------------------
// frame sinks

/// Destination of synthesized telemetry.
pub trait FrameSink {
    fn put(&mut self, t_s: f64, payload: Payload) -> Result<(), SessionError>;
}

/// Per-stream sequence counters.
#[derive(Debug, Clone, Default)]
pub struct SeqCounters([u32; 5]);

impl SeqCounters {
    pub fn frame(&mut self, t_s: f64, payload: Payload) -> TelemetryFrame {
        let idx = payload.stream() as usize - 1;
        let f = TelemetryFrame::new(self.0[idx], (t_s * 1e6).round() as u64, payload);
        self.0[idx] = self.0[idx].wrapping_add(1);
        f
    }
}

/// Writes frames to a fresh log file.
pub struct LogSink {
    w: LogWriter,
    seq: SeqCounters,
}

impl LogSink {
    pub fn create(path: &Path) -> Result<Self, SessionError> {
        if path.exists() {
            std::fs::remove_file(path).map_err(|e| SessionError::Io { path: path.to_path_buf(), source: e })?;
        }
        Ok(LogSink { w: LogWriter::append(path)?, seq: SeqCounters::default() })
    }

    pub fn finish(mut self) -> Result<(), SessionError> {
        self.w.flush()?;
        Ok(())
    }
}

impl FrameSink for LogSink {
    fn put(&mut self, t_s: f64, payload: Payload) -> Result<(), SessionError> {
        let f = self.seq.frame(t_s, payload);
        self.w.write(&f)?;
        Ok(())
    }
}

/// Keeps frames in memory.
#[derive(Debug, Default)]
pub struct VecSink {
    pub frames: Vec<TelemetryFrame>,
    seq: SeqCounters,
}

impl FrameSink for VecSink {
    fn put(&mut self, t_s: f64, payload: Payload) -> Result<(), SessionError> {
        let f = self.seq.frame(t_s, payload);
        self.frames.push(f);
        Ok(())
    }
}

fn put_event(sink: &mut dyn FrameSink, t_s: f64, v: serde_json::Value) -> Result<(), SessionError> {
    sink.put(t_s, Payload::event_json(&v))
}

/// Writes an IMU frame and returns the upper-arm orientation as transmitted.
fn put_imu(sink: &mut dyn FrameSink, t_s: f64, q: [Quaternion; 3]) -> Result<Quaternion, SessionError> {
    let p = ImuPayload {
        q_torso: quat_to_wire(q[0]),
        q_upper_arm: quat_to_wire(q[1]),
        q_forearm: quat_to_wire(q[2]),
        calib: [3, 3, 3],
    };
    let arm = quat_from_wire(p.q_upper_arm);
    sink.put(t_s, Payload::Imu(p))?;
    Ok(arm)
}

#[derive(Debug, Clone)]
struct EmgBlock {
    buf: [[f32; EMG_BLOCK]; 3],
    fill: usize,
    start_s: f64,
}

impl EmgBlock {
    fn new() -> Self {
        EmgBlock { buf: [[0.0; EMG_BLOCK]; 3], fill: 0, start_s: 0.0 }
    }

    fn push(&mut self, t_s: f64, s: [f64; 3], sink: &mut dyn FrameSink) -> Result<(), SessionError> {
        if self.fill == 0 {
            self.start_s = t_s;
        }
        for m in 0..3 {
            self.buf[m][self.fill] = s[m] as f32;
        }
        self.fill += 1;
        if self.fill == EMG_BLOCK {
            self.fill = 0;
            sink.put(self.start_s, Payload::Emg(EmgPayload { ad: self.buf[0], md: self.buf[1], pd: self.buf[2] }))?;
        }
        Ok(())
    }
}

// ----------------------------------------------------------------------------
// trial simulation

/// What the generator produced for one trial, beyond the log itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialTruth {
    pub duration_s: f64,
    pub stop_reason: StopReason,
    pub endurance_s: Option<f64>,
    pub blocks: Option<usize>,
    /// Configured motion amplitude, deg.
    pub commanded_rom_deg: Option<f64>,
}

fn drive_split(cfg: &Config, plane: Plane, drive: f64) -> [f64; 3] {
    let w = cfg.synthetic.weights(plane);
    [drive * w.ad, drive * w.md, drive * w.pd]
}

#[derive(Debug, Clone)]
struct ClosedLoop {
    params: PlantParams,
    model: HumanEffortModel,
    tau_ref: f64,
    map: PressureMap,
    reg: PressureRegulator,
    act: ActuatorState,
    arm: ArmPlantState,
    cmd: ValveCommand,
    assist: bool,
}

impl ClosedLoop {
    fn new(cfg: &Config, p: &SyntheticParticipant, spec: &TrialSpec, start_deg: f64) -> Result<Self, SessionError> {
        let plane = spec.plane.unwrap_or(Plane::Abduction);
        let gain = spec.condition.version.map_or(0.0, |v| cfg.synthetic.gain(v, plane));
        let assist = spec.condition.powered() && gain > 0.0;
        let mut params = p.plant;
        if assist {
            params.assist_gain = gain;
        }
        if spec.task != Task::StaticHold {
            params.load_mass = 0.0;
            params.inertia = params.arm_mass * params.hand_dist.powi(2) / 3.0;
        }
        let ctrl = HysteresisController::new(0.0, cfg.controller.band_kpa)
            .map_err(|e| SessionError::InvalidConfig(e.to_string()))?;
        let reg = PressureRegulator::new(
            ctrl,
            SafetyLimits { p_max: cfg.controller.safety_p_max_kpa, margin: cfg.controller.safety_margin_kpa },
        );
        Ok(ClosedLoop {
            params,
            model: p.effort,
            tau_ref: p.effort.tau_max,
            map: cfg.controller.pressure_map,
            reg,
            act: ActuatorState::default(),
            arm: ArmPlantState::at_rest(start_deg, plane.elevation_plane()),
            cmd: ValveCommand::CLOSED,
            assist,
        })
    }

    /// Advances one physics step toward `target`. Returns normalized drive.
    fn step(&mut self, k: usize, target: f64, sink: &mut dyn FrameSink, t: f64) -> Result<f64, SessionError> {
        if k % CONTROL_DECIMATION == 0 {
            let sp = if self.assist { self.map.setpoint_for(target) } else { 0.0 };
            self.reg.set_setpoint(sp);
            self.cmd = self.reg.tick(self.act.pressure).map_err(|e| SessionError::InvalidConfig(e.to_string()))?;
            sink.put(t, Payload::Pressure(PressurePayload { kpa: self.act.pressure as f32 }))?;
            let mode = if self.reg.fault.is_some() { ControlMode::Venting } else { self.reg.ctrl.mode };
            sink.put(t, Payload::Ctrl(CtrlPayload { valves: self.cmd, mode }))?;
        }
        self.act = step_pneumatics(self.act, self.cmd, PHYSICS_DT, &self.params)?;
        let tau_a = if self.assist { assist_torque(self.act.pressure, self.arm.theta, &self.params) } else { 0.0 };
        let tau_m = self.model.muscle_torque(target, &self.arm, tau_a, &self.params);
        self.arm = step_arm(self.arm, tau_a, tau_m, &self.params, PHYSICS_DT)?;
        self.model.deplete(tau_m, PHYSICS_DT);
        Ok(tau_m / self.tau_ref)
    }
}

const IMU_EVERY: usize = 10;
const EMG_PER_STEP: usize = 2;
const FREE_REP_S: f64 = 6.0;

fn angle_noise<R: Rng>(rng: &mut R) -> f64 {
    gauss(rng, 0.0, 0.15)
}

/// Smooth 0 → 1 → 0 excursion over one repetition (raised cosine).
fn excursion(phase: f64) -> f64 {
    0.5 - 0.5 * (2.0 * PI * phase).cos()
}

#[derive(Debug, Clone)]
enum SimKind {
    Static { lp: ClosedLoop, fsm: StaticHoldFsm },
    Dynamic { lp: ClosedLoop, sched: DynamicSchedule },
    Free { rom: f64, horizontal: bool, supported: bool, dur: f64, drive: f64 },
    PickPlace { times: Vec<f64>, next: usize, az_span: f64, dur: f64 },
    Mvc { dur: f64 },
}

/// One trial of one virtual participant, advanced tick by tick. Physics
/// trials tick at 1 kHz, kinematic ones at the EMG rate.
#[derive(Debug, Clone)]
pub struct TrialSim {
    cfg: Config,
    p: SyntheticParticipant,
    spec: TrialSpec,
    rng: ChaCha8Rng,
    emg: EmgBank,
    block: EmgBlock,
    kind: SimKind,
    k: usize,
    started: bool,
    done: Option<TrialTruth>,
}

impl TrialSim {
    pub fn new(cfg: &Config, p: &SyntheticParticipant, spec: &TrialSpec, seed: u64) -> Result<Self, SessionError> {
        let mut rng = rng_for(seed, &p.id, &spec.id());
        let plane = spec.plane.unwrap_or(Plane::Abduction);
        let kind = match spec.task {
            Task::StaticHold => SimKind::Static {
                lp: ClosedLoop::new(cfg, p, spec, cfg.protocol.static_target_deg)?,
                fsm: StaticHoldFsm::new(StaticCriteria::from_protocol(&cfg.protocol)),
            },
            Task::DynamicLift => {
                let sched = DynamicSchedule::new(
                    cfg.protocol.trajectory.clone(),
                    spec.reps,
                    spec.condition.powered(),
                    cfg.controller.pressure_map,
                )?;
                SimKind::Dynamic { lp: ClosedLoop::new(cfg, p, spec, sched.target(0.0))?, sched }
            }
            Task::Transparency => {
                let horizontal = plane == Plane::HorizontalAdduction;
                let rom = if horizontal {
                    p.free_haa_rom_deg - cfg.synthetic.haa_restriction(spec.condition.version) + gauss(&mut rng, 0.0, 1.5)
                } else {
                    p.free_elevation_rom_deg + gauss(&mut rng, 0.0, 1.5)
                };
                SimKind::Free {
                    rom,
                    horizontal,
                    supported: horizontal && spec.condition.version.is_none(),
                    dur: FREE_REP_S * spec.reps as f64 + 2.0,
                    drive: 0.0,
                }
            }
            Task::PickPlace => {
                let dur = cfg.protocol.pick_place_s;
                let v2 = spec.condition.version == Some(ExoVersion::V2);
                let bonus = if v2 { cfg.synthetic.pick_place_v2_bonus } else { 0.0 };
                let rate = cfg.synthetic.pick_place_rate_per_min * dur / 60.0 + bonus;
                let n = gauss(&mut rng, rate, 2.0).round().max(0.0) as usize;
                let mut times: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..dur)).collect();
                times.sort_by(f64::total_cmp);
                SimKind::PickPlace { times, next: 0, az_span: if v2 { 100.0 } else { 85.0 }, dur }
            }
            Task::Mvc => SimKind::Mvc { dur: cfg.protocol.mvc_duration_s },
            Task::ComfortProbe | Task::Quest => {
                return Err(SessionError::InvalidConfig(format!("{} has no telemetry", spec.task.name())))
            }
        };
        Ok(TrialSim {
            cfg: cfg.clone(),
            p: p.clone(),
            spec: spec.clone(),
            rng,
            emg: EmgBank::new(p.emg, cfg),
            block: EmgBlock::new(),
            kind,
            k: 0,
            started: false,
            done: None,
        })
    }

    pub fn spec(&self) -> &TrialSpec {
        &self.spec
    }

    /// Tick length, s.
    pub fn dt(&self) -> f64 {
        match self.kind {
            SimKind::Static { .. } | SimKind::Dynamic { .. } => PHYSICS_DT,
            _ => 1.0 / EMG_FS,
        }
    }

    /// Trial time of the next tick, s.
    pub fn time(&self) -> f64 {
        self.k as f64 * self.dt()
    }

    /// Angle the participant is asked to track, when the task has one.
    pub fn target(&self) -> Option<f64> {
        match &self.kind {
            SimKind::Static { .. } => Some(self.cfg.protocol.static_target_deg),
            SimKind::Dynamic { sched, .. } => Some(sched.target(self.time())),
            _ => None,
        }
    }

    /// Current elevation of the simulated arm, deg.
    pub fn elevation(&self) -> Option<f64> {
        match &self.kind {
            SimKind::Static { lp, .. } | SimKind::Dynamic { lp, .. } => Some(lp.arm.theta),
            _ => None,
        }
    }

    pub fn outcome(&self) -> Option<&TrialTruth> {
        self.done.as_ref()
    }

    fn finish(&mut self, sink: &mut dyn FrameSink, truth: TrialTruth) -> Result<TrialTruth, SessionError> {
        if let SimKind::PickPlace { times, next, .. } = &mut self.kind {
            for (i, &t) in times.iter().enumerate().skip(*next).filter(|(_, &t)| t <= truth.duration_s) {
                put_event(sink, t, serde_json::json!({"kind": "block_transfer", "n": i + 1}))?;
            }
            *next = times.len();
        }
        put_event(
            sink,
            truth.duration_s,
            serde_json::json!({
                "kind": "trial_stop",
                "trial": self.spec.id(),
                "reason": truth.stop_reason,
                "at_s": truth.duration_s,
            }),
        )?;
        self.done = Some(truth.clone());
        Ok(truth)
    }

    fn truth_at(&self, t: f64, reason: StopReason) -> TrialTruth {
        let (endurance_s, blocks, commanded_rom_deg) = match &self.kind {
            SimKind::Static { .. } => (Some(t), None, None),
            SimKind::Dynamic { .. } => (None, None, Some(self.cfg.protocol.trajectory.peak())),
            SimKind::Free { rom, .. } => (None, None, Some(*rom)),
            SimKind::PickPlace { times, .. } => (None, Some(pick_place_score(times, t)), None),
            SimKind::Mvc { .. } => (None, None, None),
        };
        TrialTruth { duration_s: t, stop_reason: reason, endurance_s, blocks, commanded_rom_deg }
    }

    /// Ends the trial now on operator request.
    pub fn voluntary_stop(&mut self, sink: &mut dyn FrameSink) -> Result<TrialTruth, SessionError> {
        if let Some(d) = &self.done {
            return Ok(d.clone());
        }
        let truth = self.truth_at(self.time(), StopReason::VoluntaryStop);
        self.finish(sink, truth)
    }

    /// Advances one tick. Returns the outcome once the trial has ended.
    pub fn step(&mut self, sink: &mut dyn FrameSink) -> Result<Option<TrialTruth>, SessionError> {
        if let Some(d) = &self.done {
            return Ok(Some(d.clone()));
        }
        if !self.started {
            self.started = true;
            put_event(sink, 0.0, serde_json::json!({"kind": "trial_start", "trial": self.spec.id()}))?;
        }
        let t = self.time();
        let k = self.k;
        let plane = self.spec.plane.unwrap_or(Plane::Abduction);
        let side = self.p.side;
        let imu_every_emg = (EMG_FS / IMU_RATE_HZ) as usize;
        let TrialSim { cfg, p, rng, emg, block, kind, .. } = self;
        let mut stop: Option<(f64, StopReason)> = None;
        match kind {
            SimKind::Static { lp, fsm } => {
                if k % IMU_EVERY == 0 {
                    let q = pose_quaternions(lp.arm.theta + angle_noise(rng), plane.azimuth_deg(), 10.0, 0.0, side);
                    let measured = shoulder_elevation(put_imu(sink, t, q)?)?;
                    if let Some(o) = fsm.feed(t, measured)? {
                        stop = Some((o.at_s, o.reason));
                    }
                }
                if stop.is_none() {
                    let d = lp.step(k, cfg.protocol.static_target_deg, sink, t)?;
                    let cap = lp.model.capacity;
                    for j in 0..EMG_PER_STEP {
                        block.push(t + j as f64 / EMG_FS, emg.sample(rng, drive_split(cfg, plane, d), cap), sink)?;
                    }
                }
            }
            SimKind::Dynamic { lp, sched } => {
                if sched.is_complete(t) {
                    stop = Some((sched.duration(), StopReason::Completed));
                } else {
                    if k % IMU_EVERY == 0 {
                        let q = pose_quaternions(lp.arm.theta + angle_noise(rng), plane.azimuth_deg(), 10.0, 0.0, side);
                        put_imu(sink, t, q)?;
                    }
                    let d = lp.step(k, sched.target(t), sink, t)?;
                    let cap = lp.model.capacity;
                    for j in 0..EMG_PER_STEP {
                        block.push(t + j as f64 / EMG_FS, emg.sample(rng, drive_split(cfg, plane, d), cap), sink)?;
                    }
                }
            }
            SimKind::Free { rom, horizontal, supported, dur, drive } => {
                if t + 1e-9 >= *dur {
                    stop = Some((*dur, StopReason::Completed));
                } else {
                    let reps_s = FREE_REP_S * self.spec.reps as f64;
                    let e = excursion(((t - 1.0).clamp(0.0, reps_s) / FREE_REP_S).fract());
                    let (sel, saz) = if *horizontal { (90.0, 90.0 - *rom * e) } else { (*rom * e, plane.azimuth_deg()) };
                    if k % imu_every_emg == 0 {
                        let q = pose_quaternions(sel + angle_noise(rng), saz + angle_noise(rng), 15.0, 0.0, side);
                        put_imu(sink, t, q)?;
                        let arm_only = p.plant.gravity_moment() - p.plant.load_mass * GRAVITY * p.plant.hand_dist;
                        *drive = if *supported {
                            0.1
                        } else {
                            (sel.to_radians().sin() * arm_only / p.effort.tau_max).max(0.0)
                        };
                    }
                    block.push(t, emg.sample(rng, drive_split(cfg, plane, *drive), 1.0), sink)?;
                }
            }
            SimKind::PickPlace { times, next, az_span, dur } => {
                if t + 1e-9 >= *dur {
                    stop = Some((*dur, StopReason::Completed));
                } else {
                    let cyc = (t / 3.0).fract();
                    let sel = 35.0 + 20.0 * excursion(cyc);
                    let saz = 60.0 - *az_span * excursion(cyc * 0.5 + 0.25);
                    if k % imu_every_emg == 0 {
                        put_imu(sink, t, pose_quaternions(sel + angle_noise(rng), saz, 45.0, 0.0, side))?;
                        while *next < times.len() && times[*next] <= t {
                            put_event(sink, times[*next], serde_json::json!({"kind": "block_transfer", "n": *next + 1}))?;
                            *next += 1;
                        }
                    }
                    let d = 0.25 * sel.to_radians().sin();
                    block.push(t, emg.sample(rng, drive_split(cfg, Plane::Oblique, d), 1.0), sink)?;
                }
            }
            SimKind::Mvc { dur } => {
                if t + 1e-9 >= *dur {
                    stop = Some((*dur, StopReason::Completed));
                } else {
                    if k % imu_every_emg == 0 {
                        put_imu(sink, t, pose_quaternions(90.0 + angle_noise(rng), 45.0, 10.0, 0.0, side))?;
                    }
                    // ramp up over 1 s, sustain, ramp down over the last second
                    let d = (t.min(*dur - t)).clamp(0.0, 1.0);
                    block.push(t, emg.sample(rng, [d; 3], 1.0), sink)?;
                }
            }
        }
        match stop {
            Some((at, reason)) => {
                let truth = self.truth_at(at, reason);
                self.finish(sink, truth).map(Some)
            }
            None => {
                self.k += 1;
                Ok(None)
            }
        }
    }

    /// Ticks until trial time `t_end` or the end of the trial.
    pub fn run_until(&mut self, t_end: f64, sink: &mut dyn FrameSink) -> Result<Option<TrialTruth>, SessionError> {
        while self.done.is_none() && self.time() < t_end {
            self.step(sink)?;
        }
        Ok(self.done.clone())
    }

    pub fn run(&mut self, sink: &mut dyn FrameSink) -> Result<TrialTruth, SessionError> {
        loop {
            if let Some(t) = self.step(sink)? {
                return Ok(t);
            }
        }
    }
}

/// Runs one trial to completion and writes its log.
pub fn simulate_trial(
    cfg: &Config,
    p: &SyntheticParticipant,
    spec: &TrialSpec,
    seed: u64,
    log_path: &Path,
) -> Result<TrialTruth, SessionError> {
    let mut sink = LogSink::create(log_path)?;
    let truth = TrialSim::new(cfg, p, spec, seed)?.run(&mut sink)?;
    sink.finish()?;
    Ok(truth)
}

// ----------------------------------------------------------------------------
// surveys

/// Fills roughly `frac` of a region's cells, lowest cell indices first.
fn region_mark(t: &TorsoTemplate, r: Region, frac: f64, intensity: Intensity) -> Option<PressureMark> {
    let m = t.mask(r);
    let k = ((frac.clamp(0.0, 1.0)) * m.len() as f64).round() as usize;
    (k > 0).then(|| PressureMark { cells: m[..k].to_vec(), intensity })
}

pub fn synth_comfort<R: Rng>(id: &str, v: ExoVersion, rng: &mut R) -> ComfortSubmission {
    let t = TorsoTemplate::canonical();
    // (light, uncomfortable) coverage per region
    let base: [(Region, f64, f64); 4] = match v {
        ExoVersion::V1 => [(Region::UpperArm, 0.19, 0.03), (Region::Armpit, 0.30, 0.05), (Region::Flank, 0.10, 0.0), (Region::Torso, 0.05, 0.0)],
        ExoVersion::V2 => [(Region::UpperArm, 0.28, 0.05), (Region::Armpit, 0.15, 0.02), (Region::Flank, 0.12, 0.0), (Region::Torso, 0.08, 0.0)],
    };
    let mut marks = Vec::new();
    for (r, light, unc) in base {
        let jitter = |x: f64, rng: &mut R| (x * rng.gen_range(0.6..1.4)).min(1.0);
        let (l, u) = (jitter(light, rng), jitter(unc, rng));
        marks.extend(region_mark(&t, r, l + u, Intensity::Light));
        marks.extend(region_mark(&t, r, u, Intensity::Uncomfortable));
    }
    ComfortSubmission { participant: id.to_string(), version: v, marks }
}

pub fn synth_quest<R: Rng>(p: &SyntheticParticipant, v: ExoVersion, rng: &mut R) -> QuestForm {
    let mut s = QuestScores::uniform(0.0);
    for it in QuestItem::ALL {
        let lift = match (v, it) {
            (ExoVersion::V1, _) => 0.0,
            (ExoVersion::V2, QuestItem::EaseOfUse | QuestItem::Effectiveness) => 0.7,
            (ExoVersion::V2, QuestItem::Comfort | QuestItem::Safety) => 0.5,
            (ExoVersion::V2, _) => 0.2,
        };
        let raw = 3.2 + p.quest_bias + lift + gauss(rng, 0.0, 0.4);
        s.set(it, raw.round().clamp(0.0, 5.0));
    }
    QuestForm { participant: p.id.clone(), version: v, scores: s }
}

pub fn synth_direction<R: Rng>(id: &str, v: ExoVersion, rng: &mut R) -> DirectionResponse {
    let u: f64 = rng.gen();
    let direction = match v {
        ExoVersion::V1 => if u < 0.7 { Direction::Side } else if u < 0.9 { Direction::Oblique } else { Direction::Front },
        ExoVersion::V2 => if u < 0.6 { Direction::Front } else if u < 0.9 { Direction::Oblique } else { Direction::Side },
    };
    DirectionResponse { participant: id.to_string(), version: v, direction }
}

// ----------------------------------------------------------------------------
// sessions

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantTruth {
    pub participant: SyntheticParticipant,
    pub trials: Vec<(String, TrialTruth)>,
}

#[derive(Debug, Clone)]
pub struct SimulationSummary {
    pub store: SessionStore,
    pub plan: RandomizationPlan,
    pub truth: Vec<ParticipantTruth>,
}

pub fn participant_ids(cfg: &Config) -> Vec<String> {
    (1..=cfg.cohort.n_participants).map(|i| format!("{}{:02}", cfg.cohort.id_prefix, i)).collect()
}

fn simulate_participant(
    cfg: &Config,
    seed: u64,
    store: &SessionStore,
    plan: &RandomizationPlan,
    id: &str,
) -> Result<ParticipantTruth, SessionError> {
    let p = make_participant(cfg, seed, id)?;
    store.prepare_participant(id)?;
    let pp = plan.for_participant(id).ok_or_else(|| SessionError::InvalidConfig(format!("no plan for {id}")))?;
    let mut rng = rng_for(seed, id, "surveys");
    let mut m = ParticipantManifest {
        participant: id.to_string(),
        body_mass_kg: p.body_mass_kg,
        handedness: p.side,
        load_kg: p.plant.load_mass,
        trials: Vec::new(),
        comfort: Vec::new(),
        quest: Vec::new(),
        directions: Vec::new(),
    };
    let mut truths = Vec::new();
    let mut clock = 0.0;
    for spec in &pp.trials {
        let id_t = spec.id();
        let v = spec.condition.version;
        match spec.task {
            Task::ComfortProbe => {
                let v = v.ok_or_else(|| SessionError::InvalidConfig("comfort probe needs a version".into()))?;
                m.directions.push(synth_direction(id, v, &mut rng));
                m.comfort.push(synth_comfort(id, v, &mut rng));
                continue;
            }
            Task::Quest => {
                let v = v.ok_or_else(|| SessionError::InvalidConfig("quest needs a version".into()))?;
                m.quest.push(synth_quest(&p, v, &mut rng));
                continue;
            }
            _ => {}
        }
        let rel = SessionStore::log_rel_path(&id_t);
        let truth = simulate_trial(cfg, &p, spec, seed, &store.participant_dir(id).join(&rel))?;
        m.trials.push(TrialRecord {
            id: id_t.clone(),
            spec: spec.clone(),
            start_s: clock,
            stop_s: clock + truth.duration_s,
            stop_reason: truth.stop_reason,
            endurance_s: truth.endurance_s,
            log: Some(rel),
            derived: Vec::new(),
            tags: trial_tags(spec),
        });
        clock += truth.duration_s + spec.rest_s as f64;
        truths.push((id_t, truth));
    }
    store.write_participant(&m)?;
    let gt = ParticipantTruth { participant: p, trials: truths };
    write_json(&store.participant_dir(id).join("ground_truth.json"), &gt)?;
    Ok(gt)
}

/// Generates a complete synthetic session under `root`, one thread per participant.
pub fn simulate_session(cfg: &Config, seed: u64, root: &Path) -> Result<SimulationSummary, SessionError> {
    cfg.validate()?;
    let ids = participant_ids(cfg);
    let plan = make_plan(seed, &ids, &cfg.protocol)?;
    let store = SessionStore::create(
        root,
        &StudyManifest { format: STORE_FORMAT, seed, config: cfg.clone(), plan: plan.clone(), participants: ids.clone() },
    )?;
    let results: Vec<Result<ParticipantTruth, SessionError>> = std::thread::scope(|s| {
        let handles: Vec<_> = ids
            .iter()
            .map(|id| {
                let (store, plan) = (&store, &plan);
                s.spawn(move || simulate_participant(cfg, seed, store, plan, id))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("participant thread panicked")).collect()
    });
    let truth = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(SimulationSummary { store, plan, truth })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::{angle_series, shoulder_azimuth};

    #[test]
    fn poses_reproduce_angles() {
        for side in [Side::Right, Side::Left] {
            for (sel, saz, efe) in [(90.0, 90.0, 10.0), (45.0, 0.0, 60.0), (120.0, -30.0, 5.0), (30.0, 45.0, 90.0)] {
                let q = pose_quaternions(sel, saz, efe, 25.0, side);
                let a = angle_series([(0.0, q)], side).unwrap()[0];
                assert!((a.sel - sel).abs() < 1e-9, "{sel} {}", a.sel);
                assert!((a.saz.unwrap() - saz).abs() < 1e-9, "{saz} {:?}", a.saz);
                assert!((a.efe - efe).abs() < 1e-9);
                assert!((shoulder_azimuth(q[0], q[1], a.sel, side).unwrap() - saz).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn resonator_rms_and_center() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = EmgChannelSynth::new(EMG_FS, 80.0);
        let x: Vec<f64> = (0..200_000).map(|_| s.sample(&mut rng, 100.0, 0.5)).collect();
        let rms = (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt();
        assert!((rms - 0.5).abs() < 0.02, "{rms}");
    }

    #[test]
    fn participants_are_reproducible() {
        let cfg = Config::default();
        assert_eq!(make_participant(&cfg, 4, "S01").unwrap(), make_participant(&cfg, 4, "S01").unwrap());
        assert_ne!(make_participant(&cfg, 4, "S01").unwrap(), make_participant(&cfg, 4, "S02").unwrap());
    }
}
