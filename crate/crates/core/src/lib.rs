pub mod comfort;
pub mod controller;
pub mod emg;
pub mod kinematics;
pub mod plant;
pub mod session;
pub mod stats;
pub mod telemetry;
