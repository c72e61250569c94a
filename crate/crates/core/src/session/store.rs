//! On-disk session layout.
//!
//! ```text
//! <root>/study.json                      config, plan and participant list
//! <root>/<participant>/session.json      trial records and survey submissions
//! <root>/<participant>/trials/<id>.exolog
//! <root>/<participant>/derived/*.csv
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::comfort::{ComfortSubmission, DirectionResponse, QuestForm};
use crate::kinematics::Side;

use super::config::Config;
use super::plan::RandomizationPlan;
use super::trial::TrialRecord;
use super::SessionError;

pub const STORE_FORMAT: u32 = 1;
/// Environment variable naming the default store root.
pub const DATA_DIR_ENV: &str = "EXOBENCH_DATA_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyManifest {
    pub format: u32,
    pub seed: u64,
    pub config: Config,
    pub plan: RandomizationPlan,
    pub participants: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantManifest {
    pub participant: String,
    pub body_mass_kg: f64,
    pub handedness: Side,
    pub load_kg: f64,
    pub trials: Vec<TrialRecord>,
    #[serde(default)]
    pub comfort: Vec<ComfortSubmission>,
    #[serde(default)]
    pub quest: Vec<QuestForm>,
    #[serde(default)]
    pub directions: Vec<DirectionResponse>,
}

impl ParticipantManifest {
    pub fn trial(&self, id: &str) -> Option<&TrialRecord> {
        self.trials.iter().find(|t| t.id == id)
    }
}

#[derive(Debug, Clone)]
pub struct SessionStore {
    root: PathBuf,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SessionError + '_ {
    move |source| SessionError::Io { path: path.to_path_buf(), source }
}

pub(crate) fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<(), SessionError> {
    let mut text = serde_json::to_string_pretty(v).map_err(|e| SessionError::Format(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

pub(crate) fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, SessionError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| SessionError::Format(format!("{}: {e}", path.display())))
}

/// Resolves a session path: absolute paths and paths that exist are used as
/// given, anything else is looked up under `$EXOBENCH_DATA_DIR`.
pub fn resolve_session_dir(arg: &Path) -> PathBuf {
    if arg.is_absolute() || arg.exists() {
        return arg.to_path_buf();
    }
    match std::env::var_os(DATA_DIR_ENV) {
        Some(root) => Path::new(&root).join(arg),
        None => arg.to_path_buf(),
    }
}

impl SessionStore {
    pub fn create(root: impl Into<PathBuf>, manifest: &StudyManifest) -> Result<Self, SessionError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(io_err(&root))?;
        let store = SessionStore { root };
        write_json(&store.study_path(), manifest)?;
        Ok(store)
    }

    pub fn open(root: impl Into<PathBuf>) -> Result<Self, SessionError> {
        let root = root.into();
        let store = SessionStore { root };
        if !store.study_path().is_file() {
            return Err(SessionError::NotASession(store.root.clone()));
        }
        Ok(store)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn study_path(&self) -> PathBuf {
        self.root.join("study.json")
    }

    pub fn study(&self) -> Result<StudyManifest, SessionError> {
        let m: StudyManifest = read_json(&self.study_path())?;
        if m.format != STORE_FORMAT {
            return Err(SessionError::Format(format!("unsupported store format {}", m.format)));
        }
        Ok(m)
    }

    pub fn participant_dir(&self, id: &str) -> PathBuf {
        self.root.join(id)
    }

    /// Creates `trials/` and `derived/` for a participant.
    pub fn prepare_participant(&self, id: &str) -> Result<PathBuf, SessionError> {
        let dir = self.participant_dir(id);
        for sub in ["trials", "derived"] {
            let p = dir.join(sub);
            fs::create_dir_all(&p).map_err(io_err(&p))?;
        }
        Ok(dir)
    }

    pub fn log_rel_path(trial_id: &str) -> String {
        format!("trials/{trial_id}.exolog")
    }

    pub fn log_path(&self, participant: &str, trial_id: &str) -> PathBuf {
        self.participant_dir(participant).join(Self::log_rel_path(trial_id))
    }

    pub fn derived_dir(&self, participant: &str) -> PathBuf {
        self.participant_dir(participant).join("derived")
    }

    pub fn write_participant(&self, m: &ParticipantManifest) -> Result<(), SessionError> {
        let dir = self.prepare_participant(&m.participant)?;
        write_json(&dir.join("session.json"), m)
    }

    pub fn read_participant(&self, id: &str) -> Result<ParticipantManifest, SessionError> {
        read_json(&self.participant_dir(id).join("session.json"))
    }

    /// Participants listed in the study manifest that have a manifest on disk.
    pub fn participants(&self) -> Result<Vec<String>, SessionError> {
        Ok(self
            .study()?
            .participants
            .into_iter()
            .filter(|p| self.participant_dir(p).join("session.json").is_file())
            .collect())
    }
}
