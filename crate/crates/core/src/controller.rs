//! Bang-bang pressure regulation with hysteresis.
//!
//! The regulator runs at a fixed tick rate (200 Hz by default) and drives a
//! logical valve set: one inflate path fed by the pumps, one vent path and
//! the pump exhaust. The mode machine only leaves `Holding` when the measured
//! pressure exits the dead band around the setpoint, and returns to
//! `Holding` once the setpoint itself is reached.
//!
//! ```
//! use exobench::controller::{HysteresisController, ControlMode};
//!
//! let ctrl = HysteresisController::new(70.0, 2.0).unwrap();
//! let (ctrl, cmd) = ctrl.tick(60.0).unwrap();
//! assert_eq!(ctrl.mode, ControlMode::Inflating);
//! assert!(cmd.inflate_open && cmd.pump_on);
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default controller tick rate, Hz.
pub const CONTROL_RATE_HZ: f64 = 200.0;
/// Default hysteresis half-width, kPa.
pub const DEFAULT_BAND_KPA: f64 = 2.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControllerError {
    #[error("non-finite controller input: {0}")]
    NonFiniteInput(f64),
    #[error("invalid controller configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),
}

/// Logical valve state applied to the pneumatic circuit.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ValveCommand {
    pub inflate_open: bool,
    pub vent_open: bool,
    pub pump_on: bool,
    pub exhaust_open: bool,
}

impl ValveCommand {
    pub const CLOSED: ValveCommand = ValveCommand {
        inflate_open: false,
        vent_open: false,
        pump_on: false,
        exhaust_open: false,
    };

    pub const INFLATE: ValveCommand = ValveCommand {
        inflate_open: true,
        vent_open: false,
        pump_on: true,
        exhaust_open: false,
    };

    pub const VENT: ValveCommand = ValveCommand {
        inflate_open: false,
        vent_open: true,
        pump_on: false,
        exhaust_open: false,
    };

    /// Fault override: everything closed except the exhaust.
    pub const EXHAUST: ValveCommand = ValveCommand {
        inflate_open: false,
        vent_open: false,
        pump_on: false,
        exhaust_open: true,
    };

    /// `!(inflate && vent)` and `exhaust => !pump`.
    pub fn is_valid(&self) -> bool {
        !(self.inflate_open && self.vent_open) && !(self.exhaust_open && self.pump_on)
    }

    /// Packs the four flags into the low nibble (bit 0 inflate .. bit 3 exhaust).
    pub fn to_bits(self) -> u8 {
        (self.inflate_open as u8)
            | (self.vent_open as u8) << 1
            | (self.pump_on as u8) << 2
            | (self.exhaust_open as u8) << 3
    }

    pub fn from_bits(bits: u8) -> Self {
        ValveCommand {
            inflate_open: bits & 1 != 0,
            vent_open: bits & 2 != 0,
            pump_on: bits & 4 != 0,
            exhaust_open: bits & 8 != 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlMode {
    Inflating,
    Venting,
    Holding,
}

impl ControlMode {
    pub fn command(self) -> ValveCommand {
        match self {
            ControlMode::Inflating => ValveCommand::INFLATE,
            ControlMode::Venting => ValveCommand::VENT,
            ControlMode::Holding => ValveCommand::CLOSED,
        }
    }

    pub fn to_u8(self) -> u8 {
        match self {
            ControlMode::Holding => 0,
            ControlMode::Inflating => 1,
            ControlMode::Venting => 2,
        }
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(ControlMode::Holding),
            1 => Some(ControlMode::Inflating),
            2 => Some(ControlMode::Venting),
            _ => None,
        }
    }
}

/// Bang-bang regulator state. A pure value: `tick` returns the successor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HysteresisController {
    /// Target pressure, kPa.
    pub setpoint: f64,
    /// Half-width of the dead band, kPa.
    pub band: f64,
    pub mode: ControlMode,
    pub tick_rate: f64,
}

impl HysteresisController {
    pub fn new(setpoint: f64, band: f64) -> Result<Self, ControllerError> {
        if !(band > 0.0) || !band.is_finite() {
            return Err(ControllerError::InvalidConfig(format!("band must be > 0, got {band}")));
        }
        if !setpoint.is_finite() {
            return Err(ControllerError::NonFiniteInput(setpoint));
        }
        Ok(HysteresisController {
            setpoint,
            band,
            mode: ControlMode::Holding,
            tick_rate: CONTROL_RATE_HZ,
        })
    }

    pub fn with_tick_rate(mut self, tick_rate: f64) -> Result<Self, ControllerError> {
        if !(tick_rate > 0.0) || !tick_rate.is_finite() {
            return Err(ControllerError::InvalidConfig(format!(
                "tick rate must be > 0, got {tick_rate}"
            )));
        }
        self.tick_rate = tick_rate;
        Ok(self)
    }

    /// Changes the setpoint; the mode is kept and re-evaluated on the next tick.
    pub fn with_setpoint(mut self, setpoint: f64) -> Self {
        self.setpoint = setpoint;
        self
    }

    pub fn period(&self) -> f64 {
        1.0 / self.tick_rate
    }

    pub fn tick(self, p_meas: f64) -> Result<(Self, ValveCommand), ControllerError> {
        bang_bang_tick(self, p_meas)
    }
}

/// One controller step. Band edges are strict: a reading exactly at
/// `setpoint ± band` keeps the controller holding.
pub fn bang_bang_tick(
    ctrl: HysteresisController,
    p_meas: f64,
) -> Result<(HysteresisController, ValveCommand), ControllerError> {
    if !p_meas.is_finite() {
        return Err(ControllerError::NonFiniteInput(p_meas));
    }
    let mode = match ctrl.mode {
        ControlMode::Holding if p_meas < ctrl.setpoint - ctrl.band => ControlMode::Inflating,
        ControlMode::Holding if p_meas > ctrl.setpoint + ctrl.band => ControlMode::Venting,
        ControlMode::Inflating if p_meas >= ctrl.setpoint => ControlMode::Holding,
        ControlMode::Venting if p_meas <= ctrl.setpoint => ControlMode::Holding,
        m => m,
    };
    let next = HysteresisController { mode, ..ctrl };
    Ok((next, mode.command()))
}

// ---------------------------------------------------------------------------
// Setpoint trajectories
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPhase {
    pub duration: f64,
    pub start: f64,
    pub end: f64,
}

/// Piecewise-linear elevation target, degrees over seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleTrajectory {
    pub phases: Vec<TrajectoryPhase>,
}

impl Default for AngleTrajectory {
    /// Lift 0→90° in 7 s, hold 2 s, lower 90→0° in 7 s.
    fn default() -> Self {
        AngleTrajectory {
            phases: vec![
                TrajectoryPhase { duration: 7.0, start: 0.0, end: 90.0 },
                TrajectoryPhase { duration: 2.0, start: 90.0, end: 90.0 },
                TrajectoryPhase { duration: 7.0, start: 90.0, end: 0.0 },
            ],
        }
    }
}

impl AngleTrajectory {
    pub fn new(phases: Vec<TrajectoryPhase>) -> Result<Self, ControllerError> {
        let traj = AngleTrajectory { phases };
        traj.validate()?;
        Ok(traj)
    }

    pub fn validate(&self) -> Result<(), ControllerError> {
        if self.phases.is_empty() {
            return Err(ControllerError::InvalidTrajectory("no phases".into()));
        }
        for (i, ph) in self.phases.iter().enumerate() {
            if !(ph.duration > 0.0) || !ph.duration.is_finite() {
                return Err(ControllerError::InvalidTrajectory(format!(
                    "phase {i} duration must be > 0"
                )));
            }
            if !ph.start.is_finite() || !ph.end.is_finite() {
                return Err(ControllerError::InvalidTrajectory(format!("phase {i} not finite")));
            }
        }
        for (i, w) in self.phases.windows(2).enumerate() {
            if (w[0].end - w[1].start).abs() > 1e-9 {
                return Err(ControllerError::InvalidTrajectory(format!(
                    "discontinuity between phases {i} and {}",
                    i + 1
                )));
            }
        }
        Ok(())
    }

    pub fn duration(&self) -> f64 {
        self.phases.iter().map(|p| p.duration).sum()
    }

    /// Peak target over the whole trajectory.
    pub fn peak(&self) -> f64 {
        self.phases
            .iter()
            .flat_map(|p| [p.start, p.end])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn setpoint(&self, t: f64) -> f64 {
        trajectory_setpoint(self, t)
    }
}

/// Target angle at time `t`; negative times clamp to the start, times past
/// the end return the final value.
pub fn trajectory_setpoint(traj: &AngleTrajectory, t: f64) -> f64 {
    let mut t0 = 0.0;
    let t = t.max(0.0);
    for ph in &traj.phases {
        if t <= t0 + ph.duration {
            let frac = (t - t0) / ph.duration;
            return ph.start + frac * (ph.end - ph.start);
        }
        t0 += ph.duration;
    }
    traj.phases.last().map(|p| p.end).unwrap_or(0.0)
}

/// Static angle-to-pressure setpoint map: linear from 0° → 0 kPa to
/// `ref_angle` → `ref_pressure`, clamped to `[0, p_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PressureMap {
    pub ref_angle: f64,
    pub ref_pressure: f64,
    pub p_max: f64,
}

impl Default for PressureMap {
    fn default() -> Self {
        PressureMap { ref_angle: 90.0, ref_pressure: 70.0, p_max: 70.0 }
    }
}

impl PressureMap {
    pub fn setpoint_for(&self, theta_target: f64) -> f64 {
        (theta_target / self.ref_angle * self.ref_pressure).clamp(0.0, self.p_max)
    }
}

// ---------------------------------------------------------------------------
// Safety
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SafetyLimits {
    pub p_max: f64,
    pub margin: f64,
}

impl Default for SafetyLimits {
    fn default() -> Self {
        SafetyLimits { p_max: 70.0, margin: 3.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverpressureFault {
    pub measured: f64,
    pub limit: f64,
}

impl std::fmt::Display for OverpressureFault {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "overpressure: {:.2} kPa > {:.2} kPa", self.measured, self.limit)
    }
}

/// Returns the exhaust override and a fault when `p_meas > p_max + margin`.
pub fn safety_clamp(p_meas: f64, limits: SafetyLimits) -> Option<(ValveCommand, OverpressureFault)> {
    let limit = limits.p_max + limits.margin;
    if p_meas > limit || p_meas.is_nan() {
        Some((ValveCommand::EXHAUST, OverpressureFault { measured: p_meas, limit }))
    } else {
        None
    }
}

/// Controller plus latched safety supervisor, as run by the control unit.
/// Once a fault latches, the exhaust override is held until `reset_fault`.
#[derive(Debug, Clone, PartialEq)]
pub struct PressureRegulator {
    pub ctrl: HysteresisController,
    pub limits: SafetyLimits,
    pub fault: Option<OverpressureFault>,
}

impl PressureRegulator {
    pub fn new(ctrl: HysteresisController, limits: SafetyLimits) -> Self {
        PressureRegulator { ctrl, limits, fault: None }
    }

    pub fn set_setpoint(&mut self, setpoint: f64) {
        self.ctrl = self.ctrl.with_setpoint(setpoint);
    }

    pub fn tick(&mut self, p_meas: f64) -> Result<ValveCommand, ControllerError> {
        if self.fault.is_some() {
            return Ok(ValveCommand::EXHAUST);
        }
        if let Some((cmd, fault)) = safety_clamp(p_meas, self.limits) {
            self.fault = Some(fault);
            return Ok(cmd);
        }
        let (ctrl, cmd) = self.ctrl.tick(p_meas)?;
        self.ctrl = ctrl;
        Ok(cmd)
    }

    pub fn reset_fault(&mut self) {
        self.fault = None;
        self.ctrl.mode = ControlMode::Holding;
    }
}
