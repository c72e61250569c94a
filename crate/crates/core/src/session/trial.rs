//! Trial state machines and trial records.

use serde::{Deserialize, Serialize};

use crate::controller::{AngleTrajectory, PressureMap};

use super::config::{Plane, ProtocolConfig, Task, TrialSpec};
use super::SessionError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    VoluntaryStop,
    AngleDrop,
    TimeCap,
    Completed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopOutcome {
    pub reason: StopReason,
    /// Trial time at which the stop fired, s.
    pub at_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StaticCriteria {
    pub target_deg: f64,
    pub threshold_deg: f64,
    pub cap_s: f64,
    pub debounce_s: f64,
    /// Longest tolerated gap between elevation samples, s.
    pub stream_timeout_s: f64,
}

impl Default for StaticCriteria {
    fn default() -> Self {
        StaticCriteria { target_deg: 90.0, threshold_deg: 80.0, cap_s: 600.0, debounce_s: 0.5, stream_timeout_s: 1.0 }
    }
}

impl StaticCriteria {
    pub fn from_protocol(p: &ProtocolConfig) -> Self {
        StaticCriteria {
            target_deg: p.static_target_deg,
            threshold_deg: p.static_threshold_deg,
            cap_s: p.static_cap_s,
            debounce_s: p.static_debounce_s,
            ..StaticCriteria::default()
        }
    }
}

/// Small slack so a debounce measured on a sampled clock is not lost to rounding.
const TIME_EPS: f64 = 1e-9;

/// Endurance hold: stops on operator request, a debounced drop below the
/// threshold, or the time cap. Endurance is the trial time at the stop.
#[derive(Debug, Clone, PartialEq)]
pub struct StaticHoldFsm {
    pub criteria: StaticCriteria,
    below_since: Option<f64>,
    last_t: Option<f64>,
    outcome: Option<StopOutcome>,
}

impl StaticHoldFsm {
    pub fn new(criteria: StaticCriteria) -> Self {
        StaticHoldFsm { criteria, below_since: None, last_t: None, outcome: None }
    }

    pub fn outcome(&self) -> Option<StopOutcome> {
        self.outcome
    }

    fn finish(&mut self, reason: StopReason, at_s: f64) -> StopOutcome {
        let o = StopOutcome { reason, at_s };
        self.outcome = Some(o);
        o
    }

    /// Consumes one elevation sample at trial time `t`.
    pub fn feed(&mut self, t: f64, sel_deg: f64) -> Result<Option<StopOutcome>, SessionError> {
        if let Some(o) = self.outcome {
            return Ok(Some(o));
        }
        if let Some(last) = self.last_t {
            if t - last > self.criteria.stream_timeout_s {
                return Err(SessionError::StreamLost { last_s: last, now_s: t });
            }
        }
        self.last_t = Some(t);
        if t + TIME_EPS >= self.criteria.cap_s {
            return Ok(Some(self.finish(StopReason::TimeCap, self.criteria.cap_s)));
        }
        if sel_deg < self.criteria.threshold_deg {
            let since = *self.below_since.get_or_insert(t);
            if t - since + TIME_EPS >= self.criteria.debounce_s {
                return Ok(Some(self.finish(StopReason::AngleDrop, t)));
            }
        } else {
            self.below_since = None;
        }
        Ok(None)
    }

    /// Checks the stream watchdog and the cap without a new sample.
    pub fn poll(&mut self, now: f64) -> Result<Option<StopOutcome>, SessionError> {
        if let Some(o) = self.outcome {
            return Ok(Some(o));
        }
        if now + TIME_EPS >= self.criteria.cap_s {
            return Ok(Some(self.finish(StopReason::TimeCap, self.criteria.cap_s)));
        }
        let last = self.last_t.unwrap_or(0.0);
        if now - last > self.criteria.stream_timeout_s {
            return Err(SessionError::StreamLost { last_s: last, now_s: now });
        }
        Ok(None)
    }

    pub fn voluntary_stop(&mut self, t: f64) -> StopOutcome {
        match self.outcome {
            Some(o) => o,
            None => self.finish(StopReason::VoluntaryStop, t),
        }
    }
}

/// Target and pressure schedule of a repeated lift.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicSchedule {
    pub trajectory: AngleTrajectory,
    pub reps: u32,
    pub powered: bool,
    pub map: PressureMap,
}

impl DynamicSchedule {
    pub fn new(trajectory: AngleTrajectory, reps: u32, powered: bool, map: PressureMap) -> Result<Self, SessionError> {
        trajectory.validate().map_err(|e| SessionError::InvalidConfig(e.to_string()))?;
        if reps == 0 {
            return Err(SessionError::InvalidConfig("reps must be >= 1".into()));
        }
        Ok(DynamicSchedule { trajectory, reps, powered, map })
    }

    pub fn duration(&self) -> f64 {
        self.trajectory.duration() * self.reps as f64
    }

    pub fn target(&self, t: f64) -> f64 {
        if t >= self.duration() {
            return self.trajectory.setpoint(self.trajectory.duration());
        }
        self.trajectory.setpoint(t.max(0.0) % self.trajectory.duration())
    }

    pub fn setpoint(&self, t: f64) -> f64 {
        if self.powered {
            self.map.setpoint_for(self.target(t))
        } else {
            0.0
        }
    }

    pub fn is_complete(&self, t: f64) -> bool {
        t + TIME_EPS >= self.duration()
    }
}

/// Blocks transferred within `[0, duration_s]`.
pub fn pick_place_score(event_times_s: &[f64], duration_s: f64) -> usize {
    event_times_s.iter().filter(|&&t| (0.0..=duration_s).contains(&t)).count()
}

/// Closed trial as stored in the session manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub id: String,
    pub spec: TrialSpec,
    /// Session clock at start and stop, s.
    pub start_s: f64,
    pub stop_s: f64,
    pub stop_reason: StopReason,
    pub endurance_s: Option<f64>,
    /// Telemetry log relative to the participant directory.
    pub log: Option<String>,
    pub derived: Vec<String>,
    #[serde(default)]
    pub tags: Vec<String>,
}

impl TrialRecord {
    pub fn duration(&self) -> f64 {
        self.stop_s - self.start_s
    }
}

/// Tags attached to trials that need special handling in analysis.
pub fn trial_tags(spec: &TrialSpec) -> Vec<String> {
    let mut tags = Vec::new();
    if spec.task == Task::Transparency && spec.plane == Some(Plane::HorizontalAdduction) && spec.condition.version.is_none() {
        tags.push("arm_weight_supported".to_string());
    }
    tags
}
