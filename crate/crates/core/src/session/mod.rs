//! Study sessions: configuration, randomization, trial execution, storage,
//! synthesis of virtual participants and offline analysis.

use std::path::PathBuf;

use thiserror::Error;

pub mod analysis;
pub mod config;
pub mod live;
pub mod plan;
pub mod report;
pub mod serve;
pub mod store;
pub mod synth;
pub mod trial;

pub use config::{Condition, Config, ExoVersion, Plane, Power, Task, TrialSpec};
pub use live::{ConsoleMessage, LiveRunner, Phase, TrialAction, TrialCmd, TrialState};
pub use plan::{make_plan, required_trials, ParticipantPlan, RandomizationPlan};
pub use store::{resolve_session_dir, ParticipantManifest, SessionStore, StudyManifest, DATA_DIR_ENV};
pub use synth::{simulate_session, SimulationSummary};
pub use trial::{StaticCriteria, StaticHoldFsm, StopOutcome, StopReason, TrialRecord};

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("body mass {0} kg is not a plausible positive value")]
    InvalidMass(f64),
    #[error("telemetry stream lost: last sample at {last_s:.3} s, now {now_s:.3} s")]
    StreamLost { last_s: f64, now_s: f64 },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed session data: {0}")]
    Format(String),
    #[error("{} is not a session directory (no study.json)", .0.display())]
    NotASession(PathBuf),
    #[error("unknown report format '{0}' (expected csv or json)")]
    UnknownFormat(String),
    #[error("command rejected: {0}")]
    Rejected(String),
    #[error("missing trials: {}", .0.join(", "))]
    MissingTrials(Vec<String>),
    #[error(transparent)]
    Log(#[from] crate::telemetry::log::LogError),
    #[error(transparent)]
    Plant(#[from] crate::plant::PlantError),
    #[error(transparent)]
    Kinematics(#[from] crate::kinematics::KinematicsError),
    #[error(transparent)]
    Emg(#[from] crate::emg::EmgError),
    #[error(transparent)]
    Stats(#[from] crate::stats::StatsError),
    #[error(transparent)]
    Comfort(#[from] crate::comfort::ComfortError),
}
