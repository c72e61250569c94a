//! Pneumatic chamber and single-DOF arm plant.
//!
//! The chamber is a first-order lag toward the supply pressure when
//! inflating and toward atmosphere when venting. The arm is a rigid
//! pendulum about the shoulder, elevation `theta` in degrees (0° hanging),
//! loaded by gravity and driven by muscle and actuator torque. Integration is
//! semi-implicit Euler at a 1 kHz physics tick.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{
    AngleTrajectory, HysteresisController, PressureMap, PressureRegulator, SafetyLimits,
    ValveCommand, DEFAULT_BAND_KPA,
};

pub const GRAVITY: f64 = 9.81;
/// Physics tick, s.
pub const PHYSICS_DT: f64 = 1e-3;
/// Largest step accepted by [`step_arm`], s.
pub const MAX_ARM_DT: f64 = 2e-3;
/// Controller runs every 5th physics tick (200 Hz).
pub const CONTROL_DECIMATION: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlantError {
    #[error("non-finite plant state or input")]
    NonFiniteState,
    #[error("invalid plant parameters: {0}")]
    InvalidParams(String),
    #[error("time step {0} s outside (0, {MAX_ARM_DT}]")]
    BadTimeStep(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActuatorState {
    /// Gauge pressure, kPa.
    pub pressure: f64,
    pub valve_cmd: ValveCommand,
}

impl Default for ActuatorState {
    fn default() -> Self {
        ActuatorState { pressure: 0.0, valve_cmd: ValveCommand::CLOSED }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElevationPlane {
    /// Abduction.
    Coronal,
    /// Flexion.
    Sagittal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmPlantState {
    /// Elevation, deg.
    pub theta: f64,
    /// Angular velocity, deg/s.
    pub omega: f64,
    pub plane: ElevationPlane,
}

impl ArmPlantState {
    pub fn at_rest(theta: f64, plane: ElevationPlane) -> Self {
        ArmPlantState { theta, omega: 0.0, plane }
    }
}

/// Angle weighting applied to actuator torque.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AssistProfile {
    /// `max(0, sin(theta + shift))`, which peaks at 1 for `theta = 90° - shift`.
    ShiftedSine { shift_deg: f64 },
    /// Angle-independent weighting of 1.
    Flat,
}

impl Default for AssistProfile {
    fn default() -> Self {
        AssistProfile::ShiftedSine { shift_deg: 20.0 }
    }
}

impl AssistProfile {
    pub fn weight(&self, theta_deg: f64) -> f64 {
        match *self {
            AssistProfile::ShiftedSine { shift_deg } => {
                (theta_deg + shift_deg).to_radians().sin().max(0.0)
            }
            AssistProfile::Flat => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantParams {
    /// kg
    pub arm_mass: f64,
    /// Shoulder to arm centre of mass, m.
    pub arm_com_dist: f64,
    /// Shoulder to hand (load point), m.
    pub hand_dist: f64,
    /// kg
    pub load_mass: f64,
    /// kg·m² about the shoulder.
    pub inertia: f64,
    /// N·m·s/rad
    pub viscous_damping: f64,
    /// s
    pub fill_tau: f64,
    /// s
    pub vent_tau: f64,
    /// kPa
    pub supply_pressure: f64,
    /// N·m/kPa at unit profile weight.
    pub assist_gain: f64,
    pub assist_profile: AssistProfile,
    /// kPa
    pub p_max: f64,
}

impl Default for PlantParams {
    fn default() -> Self {
        let arm_mass = 3.5;
        let hand_dist = 0.6;
        let load_mass = 1.6;
        PlantParams {
            arm_mass,
            arm_com_dist: 0.3,
            hand_dist,
            load_mass,
            // uniform rod about one end plus point load at the hand
            inertia: arm_mass * hand_dist * hand_dist / 3.0 + load_mass * hand_dist * hand_dist,
            viscous_damping: 0.5,
            fill_tau: 1.0,
            vent_tau: 1.0,
            supply_pressure: 100.0,
            assist_gain: 0.30,
            assist_profile: AssistProfile::default(),
            p_max: 70.0,
        }
    }
}

impl PlantParams {
    pub fn validate(&self) -> Result<(), PlantError> {
        let positive = [
            ("arm_mass", self.arm_mass),
            ("arm_com_dist", self.arm_com_dist),
            ("hand_dist", self.hand_dist),
            ("inertia", self.inertia),
            ("viscous_damping", self.viscous_damping),
            ("fill_tau", self.fill_tau),
            ("vent_tau", self.vent_tau),
            ("supply_pressure", self.supply_pressure),
            ("assist_gain", self.assist_gain),
            ("p_max", self.p_max),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(PlantError::InvalidParams(format!("{name} must be > 0, got {v}")));
            }
        }
        if !(self.load_mass >= 0.0) || !self.load_mass.is_finite() {
            return Err(PlantError::InvalidParams(format!(
                "load_mass must be >= 0, got {}",
                self.load_mass
            )));
        }
        Ok(())
    }

    pub fn with_load(mut self, load_mass: f64) -> Self {
        self.load_mass = load_mass;
        self
    }

    /// Gravity torque amplitude (torque at 90°), N·m.
    pub fn gravity_moment(&self) -> f64 {
        (self.arm_mass * self.arm_com_dist + self.load_mass * self.hand_dist) * GRAVITY
    }
}

/// Advances the chamber pressure by `dt` under `cmd`, using the exact
/// solution of the first-order lag. The exhaust path dumps the chamber like
/// the vent path.
pub fn step_pneumatics(
    state: ActuatorState,
    cmd: ValveCommand,
    dt: f64,
    params: &PlantParams,
) -> Result<ActuatorState, PlantError> {
    if !state.pressure.is_finite() || !dt.is_finite() {
        return Err(PlantError::NonFiniteState);
    }
    if !(dt > 0.0) {
        return Err(PlantError::BadTimeStep(dt));
    }
    let p = state.pressure;
    let venting = cmd.vent_open || cmd.exhaust_open;
    let next = if cmd.inflate_open && cmd.pump_on && !venting {
        let target = params.supply_pressure;
        target - (target - p) * (-dt / params.fill_tau).exp()
    } else if venting && !cmd.inflate_open {
        p * (-dt / params.vent_tau).exp()
    } else {
        p
    };
    Ok(ActuatorState { pressure: next.clamp(0.0, params.p_max), valve_cmd: cmd })
}

/// `(m_arm·g·r_com + m_load·g·r_hand)·sin(theta)`, N·m.
pub fn gravity_torque(theta_deg: f64, params: &PlantParams) -> f64 {
    params.gravity_moment() * theta_deg.to_radians().sin()
}

/// `assist_gain · pressure · w(theta)`, N·m.
pub fn assist_torque(pressure: f64, theta_deg: f64, params: &PlantParams) -> f64 {
    params.assist_gain * pressure * params.assist_profile.weight(theta_deg)
}

/// Semi-implicit Euler step of `I·θ̈ = τ_muscle + τ_assist − τ_gravity − b·θ̇`
/// with hard joint limits at 0° and 180°.
pub fn step_arm(
    state: ArmPlantState,
    tau_assist: f64,
    tau_muscle: f64,
    params: &PlantParams,
    dt: f64,
) -> Result<ArmPlantState, PlantError> {
    if !(dt > 0.0 && dt <= MAX_ARM_DT) {
        return Err(PlantError::BadTimeStep(dt));
    }
    if ![state.theta, state.omega, tau_assist, tau_muscle].iter().all(|v| v.is_finite()) {
        return Err(PlantError::NonFiniteState);
    }
    let omega_rad = state.omega.to_radians();
    let net = tau_muscle + tau_assist
        - gravity_torque(state.theta, params)
        - params.viscous_damping * omega_rad;
    let omega_rad = omega_rad + dt * net / params.inertia;
    let mut omega = omega_rad.to_degrees();
    let mut theta = state.theta + dt * omega;
    if theta <= 0.0 {
        theta = 0.0;
        omega = omega.max(0.0);
    } else if theta >= 180.0 {
        theta = 180.0;
        omega = omega.min(0.0);
    }
    Ok(ArmPlantState { theta, omega, plane: state.plane })
}

/// Kinetic plus gravitational potential energy, J (zero at rest hanging).
pub fn arm_energy(state: &ArmPlantState, params: &PlantParams) -> f64 {
    let w = state.omega.to_radians();
    0.5 * params.inertia * w * w + params.gravity_moment() * (1.0 - state.theta.to_radians().cos())
}

// ---------------------------------------------------------------------------
// Human effort
// ---------------------------------------------------------------------------

/// Minimal voluntary-effort model: PD tracking around an internal estimate
/// of the net static load, with torque capacity that depletes in proportion
/// to normalized demand and recovers toward 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HumanEffortModel {
    /// N·m/rad
    pub kp: f64,
    /// N·m·s/rad
    pub kd: f64,
    /// Fresh maximal shoulder torque, N·m.
    pub tau_max: f64,
    /// 1/s per unit normalized torque.
    pub fatigue_rate: f64,
    /// 1/s
    pub recovery_rate: f64,
    /// Remaining capacity in [0, 1].
    pub capacity: f64,
}

impl Default for HumanEffortModel {
    fn default() -> Self {
        HumanEffortModel {
            kp: 150.0,
            kd: 15.0,
            tau_max: 40.0,
            fatigue_rate: 0.01,
            recovery_rate: 0.001,
            capacity: 1.0,
        }
    }
}

impl HumanEffortModel {
    pub fn validate(&self) -> Result<(), PlantError> {
        if !(self.tau_max > 0.0) {
            return Err(PlantError::InvalidParams("tau_max must be > 0".into()));
        }
        if !(0.0..=1.0).contains(&self.capacity) {
            return Err(PlantError::InvalidParams("capacity must lie in [0, 1]".into()));
        }
        if self.fatigue_rate < 0.0 || self.recovery_rate < 0.0 {
            return Err(PlantError::InvalidParams("rates must be >= 0".into()));
        }
        Ok(())
    }

    /// Saturated muscle torque toward `target` given the arm state and the
    /// actuator torque the participant feels.
    pub fn muscle_torque(
        &self,
        target: f64,
        arm: &ArmPlantState,
        tau_assist: f64,
        params: &PlantParams,
    ) -> f64 {
        let feedforward = gravity_torque(arm.theta, params) - tau_assist;
        let err = (target - arm.theta).to_radians();
        let demand = feedforward + self.kp * err - self.kd * arm.omega.to_radians();
        demand.clamp(0.0, self.tau_max * self.capacity)
    }

    /// Integrates capacity over `dt` at muscle torque `tau`.
    pub fn deplete(&mut self, tau: f64, dt: f64) {
        let load = tau / self.tau_max;
        let dc = -self.fatigue_rate * load + self.recovery_rate * (1.0 - self.capacity);
        self.capacity = (self.capacity + dt * dc).clamp(0.0, 1.0);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoldResult {
    /// Time at which the stop criterion fired (or the cap), s.
    pub endurance: f64,
    /// Sample interval of the series, s.
    pub sample_dt: f64,
    pub muscle_torque_series: Vec<f64>,
    pub theta_series: Vec<f64>,
    pub pressure_series: Vec<f64>,
    pub capacity_series: Vec<f64>,
}

/// Options for [`simulate_human_hold`] beyond the core arguments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HoldOptions {
    pub plane: ElevationPlane,
    /// Angle drop that ends the trial, deg.
    pub drop_threshold: f64,
    /// How long the drop must persist, s.
    pub debounce: f64,
    /// Output sample rate, Hz.
    pub sample_rate: f64,
    pub pressure_map: PressureMap,
    pub band: f64,
}

impl Default for HoldOptions {
    fn default() -> Self {
        HoldOptions {
            plane: ElevationPlane::Coronal,
            drop_threshold: 10.0,
            debounce: 0.5,
            sample_rate: 100.0,
            pressure_map: PressureMap::default(),
            band: DEFAULT_BAND_KPA,
        }
    }
}

/// Closed-loop simulation of a static hold at `target` degrees with or
/// without actuator support, until the elevation stays more than
/// `drop_threshold` below target for `debounce` seconds or `cap` elapses.
pub fn simulate_human_hold(
    target: f64,
    assist_on: bool,
    model: HumanEffortModel,
    params: &PlantParams,
    cap: f64,
) -> Result<HoldResult, PlantError> {
    simulate_human_hold_with(target, assist_on, model, params, cap, HoldOptions::default())
}

pub fn simulate_human_hold_with(
    target: f64,
    assist_on: bool,
    mut model: HumanEffortModel,
    params: &PlantParams,
    cap: f64,
    opts: HoldOptions,
) -> Result<HoldResult, PlantError> {
    params.validate()?;
    model.validate()?;
    if !(cap > 0.0) || !(target > 0.0 && target < 180.0) {
        return Err(PlantError::InvalidParams(format!("bad cap {cap} or target {target}")));
    }
    let setpoint = if assist_on { opts.pressure_map.setpoint_for(target) } else { 0.0 };
    let ctrl = HysteresisController::new(setpoint, opts.band)
        .map_err(|e| PlantError::InvalidParams(e.to_string()))?;
    let mut reg = PressureRegulator::new(
        ctrl,
        SafetyLimits { p_max: params.p_max, ..SafetyLimits::default() },
    );

    let mut act = ActuatorState::default();
    let mut arm = ArmPlantState::at_rest(target, opts.plane);
    let steps = (cap / PHYSICS_DT).round() as usize;
    let sample_every = ((1.0 / opts.sample_rate) / PHYSICS_DT).round().max(1.0) as usize;
    let debounce_steps = (opts.debounce / PHYSICS_DT).round() as usize;

    let mut out = HoldResult {
        endurance: cap,
        sample_dt: sample_every as f64 * PHYSICS_DT,
        muscle_torque_series: Vec::new(),
        theta_series: Vec::new(),
        pressure_series: Vec::new(),
        capacity_series: Vec::new(),
    };
    let mut cmd = ValveCommand::CLOSED;
    let mut below = 0usize;
    for k in 0..steps {
        if k % CONTROL_DECIMATION == 0 {
            cmd = reg.tick(act.pressure).map_err(|_| PlantError::NonFiniteState)?;
        }
        act = step_pneumatics(act, cmd, PHYSICS_DT, params)?;
        let tau_a = assist_torque(act.pressure, arm.theta, params);
        let tau_m = model.muscle_torque(target, &arm, tau_a, params);
        if k % sample_every == 0 {
            out.muscle_torque_series.push(tau_m);
            out.theta_series.push(arm.theta);
            out.pressure_series.push(act.pressure);
            out.capacity_series.push(model.capacity);
        }
        arm = step_arm(arm, tau_a, tau_m, params, PHYSICS_DT)?;
        model.deplete(tau_m, PHYSICS_DT);

        if arm.theta < target - opts.drop_threshold {
            below += 1;
            if below >= debounce_steps {
                out.endurance = (k + 1) as f64 * PHYSICS_DT;
                return Ok(out);
            }
        } else {
            below = 0;
        }
    }
    Ok(out)
}

/// Result of tracking a trajectory with the effort model in the loop.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingResult {
    pub sample_dt: f64,
    pub target_series: Vec<f64>,
    pub theta_series: Vec<f64>,
    pub muscle_torque_series: Vec<f64>,
    pub pressure_series: Vec<f64>,
    pub setpoint_series: Vec<f64>,
}

/// Follows `traj` for `reps` repetitions. When `assist_on`, the pressure
/// setpoint is scheduled from the target angle through `pressure_map`;
/// otherwise the setpoint stays at 0 kPa.
pub fn simulate_tracking(
    traj: &AngleTrajectory,
    reps: usize,
    assist_on: bool,
    mut model: HumanEffortModel,
    params: &PlantParams,
    opts: HoldOptions,
) -> Result<TrackingResult, PlantError> {
    params.validate()?;
    model.validate()?;
    let ctrl = HysteresisController::new(0.0, opts.band)
        .map_err(|e| PlantError::InvalidParams(e.to_string()))?;
    let mut reg = PressureRegulator::new(
        ctrl,
        SafetyLimits { p_max: params.p_max, ..SafetyLimits::default() },
    );
    let rep_len = traj.duration();
    let total = rep_len * reps as f64;
    let steps = (total / PHYSICS_DT).round() as usize;
    let sample_every = ((1.0 / opts.sample_rate) / PHYSICS_DT).round().max(1.0) as usize;
    let start = traj.setpoint(0.0);
    let mut arm = ArmPlantState::at_rest(start, opts.plane);
    let mut act = ActuatorState::default();
    let mut cmd = ValveCommand::CLOSED;
    let mut out = TrackingResult {
        sample_dt: sample_every as f64 * PHYSICS_DT,
        target_series: Vec::new(),
        theta_series: Vec::new(),
        muscle_torque_series: Vec::new(),
        pressure_series: Vec::new(),
        setpoint_series: Vec::new(),
    };
    for k in 0..steps {
        let t = k as f64 * PHYSICS_DT;
        let target = traj.setpoint(t % rep_len);
        if k % CONTROL_DECIMATION == 0 {
            let sp = if assist_on { opts.pressure_map.setpoint_for(target) } else { 0.0 };
            reg.set_setpoint(sp);
            cmd = reg.tick(act.pressure).map_err(|_| PlantError::NonFiniteState)?;
        }
        act = step_pneumatics(act, cmd, PHYSICS_DT, params)?;
        let tau_a = assist_torque(act.pressure, arm.theta, params);
        let tau_m = model.muscle_torque(target, &arm, tau_a, params);
        if k % sample_every == 0 {
            out.target_series.push(target);
            out.theta_series.push(arm.theta);
            out.muscle_torque_series.push(tau_m);
            out.pressure_series.push(act.pressure);
            out.setpoint_series.push(reg.ctrl.setpoint);
        }
        arm = step_arm(arm, tau_a, tau_m, params, PHYSICS_DT)?;
        model.deplete(tau_m, PHYSICS_DT);
    }
    Ok(out)
}
