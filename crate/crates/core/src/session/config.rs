//! Protocol vocabulary and the TOML configuration file.
//!
//! A config has sections `[plant]`, `[controller]`, `[protocol]`,
//! `[participant]`, `[cohort]` and `[synthetic]`; every field has a default,
//! so an empty file is a valid config.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::controller::{AngleTrajectory, PressureMap, TrajectoryPhase};
use crate::kinematics::Side;
use crate::plant::{ElevationPlane, HumanEffortModel, PlantParams};

use super::SessionError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExoVersion {
    V1,
    V2,
}

impl ExoVersion {
    pub const BOTH: [ExoVersion; 2] = [ExoVersion::V1, ExoVersion::V2];

    pub fn name(self) -> &'static str {
        match self {
            ExoVersion::V1 => "v1",
            ExoVersion::V2 => "v2",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Power {
    Off,
    On,
}

/// Worn device (or none) and whether it is powered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Condition {
    pub version: Option<ExoVersion>,
    pub power: Power,
}

impl Condition {
    pub const NONE: Condition = Condition { version: None, power: Power::Off };

    pub fn new(version: Option<ExoVersion>, power: Power) -> Result<Self, SessionError> {
        if version.is_none() && power == Power::On {
            return Err(SessionError::InvalidConfig("condition 'none' cannot be powered".into()));
        }
        Ok(Condition { version, power })
    }

    pub fn worn(v: ExoVersion, power: Power) -> Self {
        Condition { version: Some(v), power }
    }

    pub fn powered(&self) -> bool {
        self.power == Power::On
    }

    /// `none`, `v1_off`, `v1_on`, `v2_off` or `v2_on`.
    pub fn label(&self) -> String {
        match self.version {
            None => "none".into(),
            Some(v) => format!("{}_{}", v.name(), if self.powered() { "on" } else { "off" }),
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for Condition {
    type Err = SessionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let c = match s {
            "none" => Condition::NONE,
            "v1_off" => Condition::worn(ExoVersion::V1, Power::Off),
            "v1_on" => Condition::worn(ExoVersion::V1, Power::On),
            "v2_off" => Condition::worn(ExoVersion::V2, Power::Off),
            "v2_on" => Condition::worn(ExoVersion::V2, Power::On),
            other => return Err(SessionError::InvalidConfig(format!("unknown condition '{other}'"))),
        };
        Ok(c)
    }
}

impl TryFrom<String> for Condition {
    type Error = SessionError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Condition> for String {
    fn from(c: Condition) -> String {
        c.label()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Mvc,
    ComfortProbe,
    StaticHold,
    DynamicLift,
    Transparency,
    PickPlace,
    Quest,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Mvc => "mvc",
            Task::ComfortProbe => "comfort_probe",
            Task::StaticHold => "static_hold",
            Task::DynamicLift => "dynamic_lift",
            Task::Transparency => "transparency",
            Task::PickPlace => "pick_place",
            Task::Quest => "quest",
        }
    }

    /// Tasks that produce a telemetry log.
    pub fn is_recorded(self) -> bool {
        !matches!(self, Task::ComfortProbe | Task::Quest)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Plane {
    Abduction,
    Flexion,
    Oblique,
    HorizontalAdduction,
}

impl Plane {
    pub fn name(self) -> &'static str {
        match self {
            Plane::Abduction => "abduction",
            Plane::Flexion => "flexion",
            Plane::Oblique => "oblique",
            Plane::HorizontalAdduction => "horizontal_adduction",
        }
    }

    /// Gravity plane used by the arm model.
    pub fn elevation_plane(self) -> ElevationPlane {
        match self {
            Plane::Flexion => ElevationPlane::Sagittal,
            _ => ElevationPlane::Coronal,
        }
    }

    /// Shoulder azimuth of the elevation plane, deg (0 forward, 90 lateral).
    pub fn azimuth_deg(self) -> f64 {
        match self {
            Plane::Abduction => 90.0,
            Plane::Flexion => 0.0,
            Plane::Oblique => 45.0,
            Plane::HorizontalAdduction => 90.0,
        }
    }
}

/// One protocol step.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TrialSpec {
    pub task: Task,
    pub plane: Option<Plane>,
    pub condition: Condition,
    pub reps: u32,
    pub rest_s: u32,
    /// Repeat index for tasks run more than once with the same settings.
    #[serde(default)]
    pub index: u32,
}

impl TrialSpec {
    /// Stable identifier used for file names, e.g. `static_hold-abduction-v1_on`.
    pub fn id(&self) -> String {
        let mut s = self.task.name().to_string();
        if let Some(p) = self.plane {
            s.push('-');
            s.push_str(p.name());
        }
        if self.task != Task::Mvc {
            s.push('-');
            s.push_str(&self.condition.label());
        }
        if self.task == Task::Mvc || self.index > 0 {
            s.push_str(&format!("-{}", self.index + 1));
        }
        s
    }
}

// ----------------------------------------------------------------------------
// config sections

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    pub band_kpa: f64,
    pub safety_p_max_kpa: f64,
    pub safety_margin_kpa: f64,
    pub pressure_map: PressureMap,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            band_kpa: crate::controller::DEFAULT_BAND_KPA,
            safety_p_max_kpa: 70.0,
            safety_margin_kpa: 3.0,
            pressure_map: PressureMap::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolConfig {
    pub mvc_trials: u32,
    pub mvc_duration_s: f64,
    pub static_planes: Vec<Plane>,
    pub static_target_deg: f64,
    pub static_threshold_deg: f64,
    pub static_cap_s: f64,
    pub static_debounce_s: f64,
    pub static_rest_s: u32,
    pub dynamic_planes: Vec<Plane>,
    pub dynamic_reps: u32,
    pub dynamic_rest_s: u32,
    pub trajectory: AngleTrajectory,
    pub transparency_elevation_planes: Vec<Plane>,
    pub transparency_horizontal: bool,
    pub transparency_reps: u32,
    pub pick_place: bool,
    pub pick_place_s: f64,
    pub comfort_probe: bool,
    pub quest: bool,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            mvc_trials: 3,
            mvc_duration_s: 5.0,
            static_planes: vec![Plane::Abduction, Plane::Flexion],
            static_target_deg: 90.0,
            static_threshold_deg: 80.0,
            static_cap_s: 600.0,
            static_debounce_s: 0.5,
            static_rest_s: 180,
            dynamic_planes: vec![Plane::Abduction, Plane::Flexion, Plane::Oblique],
            dynamic_reps: 3,
            dynamic_rest_s: 120,
            trajectory: AngleTrajectory::default(),
            transparency_elevation_planes: vec![Plane::Abduction, Plane::Flexion],
            transparency_horizontal: true,
            transparency_reps: 3,
            pick_place: true,
            pick_place_s: 60.0,
            comfort_probe: true,
            quest: true,
        }
    }
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<(), SessionError> {
        let bad = |m: &str| Err(SessionError::InvalidConfig(m.to_string()));
        if self.dynamic_reps == 0 || self.transparency_reps == 0 {
            return bad("reps must be >= 1");
        }
        if self.mvc_trials != 0 && self.mvc_trials != 3 {
            return bad("mvc_trials must be 3 (or 0 to skip)");
        }
        if !(self.static_threshold_deg < self.static_target_deg) {
            return bad("static threshold must lie below the target");
        }
        if !(self.static_cap_s > 0.0 && self.static_debounce_s >= 0.0 && self.pick_place_s > 0.0) {
            return bad("durations must be positive");
        }
        if self.static_planes.contains(&Plane::HorizontalAdduction)
            || self.dynamic_planes.contains(&Plane::HorizontalAdduction)
        {
            return bad("horizontal adduction is only a transparency plane");
        }
        self.trajectory.validate().map_err(|e| SessionError::InvalidConfig(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParticipantConfig {
    pub id: String,
    pub body_mass_kg: f64,
    pub handedness: Side,
}

impl Default for ParticipantConfig {
    fn default() -> Self {
        ParticipantConfig { id: "P01".into(), body_mass_kg: 64.7, handedness: Side::Right }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CohortConfig {
    pub n_participants: usize,
    pub id_prefix: String,
    pub body_mass_mean_kg: f64,
    pub body_mass_sd_kg: f64,
}

impl Default for CohortConfig {
    fn default() -> Self {
        CohortConfig { n_participants: 8, id_prefix: "S".into(), body_mass_mean_kg: 64.7, body_mass_sd_kg: 8.0 }
    }
}

/// Actuator torque gain (N·m/kPa) a version delivers in each plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlaneGains {
    pub abduction: f64,
    pub flexion: f64,
    pub oblique: f64,
}

impl PlaneGains {
    pub fn get(&self, p: Plane) -> f64 {
        match p {
            Plane::Abduction => self.abduction,
            Plane::Flexion => self.flexion,
            Plane::Oblique => self.oblique,
            Plane::HorizontalAdduction => 0.0,
        }
    }
}

impl Default for PlaneGains {
    fn default() -> Self {
        PlaneGains { abduction: 0.06, flexion: 0.06, oblique: 0.06 }
    }
}

/// Share of the net shoulder drive seen by each deltoid head, per plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MuscleWeights {
    pub ad: f64,
    pub md: f64,
    pub pd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub v1_gain: PlaneGains,
    pub v2_gain: PlaneGains,
    /// Horizontal adduction lost while wearing each version, deg.
    pub haa_restriction_v1_deg: f64,
    pub haa_restriction_v2_deg: f64,
    pub haa_free_rom_deg: f64,
    pub elevation_free_rom_deg: f64,
    pub rom_sd_deg: f64,
    pub effort: HumanEffortModel,
    pub tau_max_sd: f64,
    pub fatigue_rate_sd: f64,
    pub muscle_weights: BTreeMap<Plane, MuscleWeights>,
    /// Resting median frequency of the synthetic EMG, Hz.
    pub emg_mdf_hz: f64,
    /// Fractional MDF drop at zero remaining capacity.
    pub emg_fatigue_shift: f64,
    /// Envelope amplitude at full drive, mV.
    pub emg_full_scale_mv: f64,
    pub emg_noise_floor: f64,
    pub mains_mv: f64,
    pub pick_place_rate_per_min: f64,
    pub pick_place_v2_bonus: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        let mut w = BTreeMap::new();
        w.insert(Plane::Abduction, MuscleWeights { ad: 0.55, md: 0.9, pd: 0.35 });
        w.insert(Plane::Flexion, MuscleWeights { ad: 0.9, md: 0.5, pd: 0.15 });
        w.insert(Plane::Oblique, MuscleWeights { ad: 0.75, md: 0.75, pd: 0.25 });
        w.insert(Plane::HorizontalAdduction, MuscleWeights { ad: 0.6, md: 0.3, pd: 0.1 });
        SyntheticConfig {
            v1_gain: PlaneGains { abduction: 0.08, flexion: 0.04, oblique: 0.06 },
            v2_gain: PlaneGains { abduction: 0.06, flexion: 0.09, oblique: 0.07 },
            haa_restriction_v1_deg: 40.0,
            haa_restriction_v2_deg: 10.0,
            haa_free_rom_deg: 130.0,
            elevation_free_rom_deg: 150.0,
            rom_sd_deg: 4.0,
            effort: HumanEffortModel::default(),
            tau_max_sd: 4.0,
            fatigue_rate_sd: 0.0015,
            muscle_weights: w,
            emg_mdf_hz: 95.0,
            emg_fatigue_shift: 0.35,
            emg_full_scale_mv: 1.0,
            emg_noise_floor: 0.02,
            mains_mv: 0.02,
            pick_place_rate_per_min: 20.0,
            pick_place_v2_bonus: 1.5,
        }
    }
}

impl SyntheticConfig {
    pub fn gain(&self, v: ExoVersion, p: Plane) -> f64 {
        match v {
            ExoVersion::V1 => self.v1_gain.get(p),
            ExoVersion::V2 => self.v2_gain.get(p),
        }
    }

    pub fn haa_restriction(&self, v: Option<ExoVersion>) -> f64 {
        match v {
            None => 0.0,
            Some(ExoVersion::V1) => self.haa_restriction_v1_deg,
            Some(ExoVersion::V2) => self.haa_restriction_v2_deg,
        }
    }

    pub fn weights(&self, p: Plane) -> MuscleWeights {
        self.muscle_weights.get(&p).copied().unwrap_or(MuscleWeights { ad: 0.6, md: 0.6, pd: 0.2 })
    }
}

/// Reference lines drawn next to measured ROMs, deg.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NormativeRom {
    pub abduction: f64,
    pub flexion: f64,
    pub horizontal_adduction: f64,
}

impl Default for NormativeRom {
    fn default() -> Self {
        NormativeRom { abduction: 120.0, flexion: 120.0, horizontal_adduction: 130.0 }
    }
}

impl NormativeRom {
    pub fn get(&self, p: Plane) -> Option<f64> {
        match p {
            Plane::Abduction => Some(self.abduction),
            Plane::Flexion => Some(self.flexion),
            Plane::HorizontalAdduction => Some(self.horizontal_adduction),
            Plane::Oblique => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub plant: PlantParams,
    pub controller: ControllerConfig,
    pub protocol: ProtocolConfig,
    pub participant: ParticipantConfig,
    pub cohort: CohortConfig,
    pub synthetic: SyntheticConfig,
    pub normative_rom: NormativeRom,
}

impl Config {
    pub fn from_toml_str(s: &str) -> Result<Self, SessionError> {
        let c: Config = toml::from_str(s).map_err(|e| SessionError::InvalidConfig(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, SessionError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SessionError::Io { path: path.to_path_buf(), source: e })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), SessionError> {
        self.plant.validate().map_err(|e| SessionError::InvalidConfig(e.to_string()))?;
        self.synthetic.effort.validate().map_err(|e| SessionError::InvalidConfig(e.to_string()))?;
        self.protocol.validate()?;
        if !(self.participant.body_mass_kg > 0.0) {
            return Err(SessionError::InvalidConfig("participant body mass must be > 0".into()));
        }
        if self.cohort.n_participants == 0 {
            return Err(SessionError::InvalidConfig("cohort needs at least one participant".into()));
        }
        Ok(())
    }
}

/// Shorthand for a lift-hold-lower trajectory.
pub fn lift_trajectory(peak_deg: f64, rise_s: f64, hold_s: f64, fall_s: f64) -> AngleTrajectory {
    AngleTrajectory {
        phases: vec![
            TrajectoryPhase { duration: rise_s, start: 0.0, end: peak_deg },
            TrajectoryPhase { duration: hold_s, start: peak_deg, end: peak_deg },
            TrajectoryPhase { duration: fall_s, start: peak_deg, end: 0.0 },
        ],
    }
}

/// External load for the static task: 2.5 % of body mass.
pub fn compute_load(body_mass_kg: f64) -> Result<f64, SessionError> {
    if !(body_mass_kg > 0.0) || !body_mass_kg.is_finite() {
        return Err(SessionError::InvalidMass(body_mass_kg));
    }
    Ok(0.025 * body_mass_kg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_default() {
        let c = Config::from_toml_str("").unwrap();
        assert_eq!(c, Config::default());
        assert_eq!(Config::from_toml_str(&c.to_toml_string()).unwrap(), c);
    }

    #[test]
    fn sections_parse() {
        let c = Config::from_toml_str(
            "[participant]\nid = \"P07\"\nbody_mass_kg = 80.0\nhandedness = \"left\"\n\
             [protocol]\nstatic_planes = [\"abduction\"]\ndynamic_reps = 2\n\
             [controller]\nband_kpa = 1.5\n",
        )
        .unwrap();
        assert_eq!(c.participant.handedness, Side::Left);
        assert_eq!(c.protocol.static_planes, vec![Plane::Abduction]);
        assert_eq!(c.controller.band_kpa, 1.5);
        assert!(Config::from_toml_str("[protocol]\nbogus = 1\n").is_err());
        assert!(Config::from_toml_str("[protocol]\ndynamic_planes = [\"horizontal_adduction\"]\n").is_err());
    }

    #[test]
    fn condition_labels() {
        for s in ["none", "v1_off", "v1_on", "v2_off", "v2_on"] {
            assert_eq!(s.parse::<Condition>().unwrap().label(), s);
        }
        assert!(Condition::new(None, Power::On).is_err());
        assert_eq!(serde_json::to_string(&Condition::worn(ExoVersion::V2, Power::On)).unwrap(), "\"v2_on\"");
    }

    #[test]
    fn load_from_mass() {
        assert!((compute_load(64.7).unwrap() - 1.6175).abs() < 1e-12);
        assert_eq!(compute_load(100.0).unwrap(), 2.5);
        assert!(matches!(compute_load(0.0), Err(SessionError::InvalidMass(_))));
    }

    #[test]
    fn trial_ids() {
        let s = TrialSpec {
            task: Task::StaticHold,
            plane: Some(Plane::Abduction),
            condition: Condition::worn(ExoVersion::V1, Power::On),
            reps: 1,
            rest_s: 180,
            index: 0,
        };
        assert_eq!(s.id(), "static_hold-abduction-v1_on");
        let m = TrialSpec { task: Task::Mvc, plane: None, condition: Condition::NONE, reps: 1, rest_s: 0, index: 2 };
        assert_eq!(m.id(), "mvc-3");
    }
}
