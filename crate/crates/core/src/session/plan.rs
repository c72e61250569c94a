//! Seeded per-participant randomization of the protocol.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{Condition, ExoVersion, Plane, Power, ProtocolConfig, Task, TrialSpec};
use super::SessionError;

/// Rest after each MVC contraction, s.
pub const MVC_REST_S: u32 = 60;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParticipantPlan {
    pub participant: String,
    pub version_order: [ExoVersion; 2],
    pub trials: Vec<TrialSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandomizationPlan {
    pub seed: u64,
    pub participants: Vec<ParticipantPlan>,
}

impl RandomizationPlan {
    pub fn for_participant(&self, id: &str) -> Option<&ParticipantPlan> {
        self.participants.iter().find(|p| p.participant == id)
    }
}

fn spec(task: Task, plane: Option<Plane>, condition: Condition, reps: u32, rest_s: u32) -> TrialSpec {
    TrialSpec { task, plane, condition, reps, rest_s, index: 0 }
}

fn version_trials(p: &ProtocolConfig, v: ExoVersion) -> Vec<Vec<TrialSpec>> {
    let both = [Power::Off, Power::On];
    let mut blocks = Vec::new();
    let statics: Vec<TrialSpec> = p
        .static_planes
        .iter()
        .flat_map(|&pl| both.map(|pw| spec(Task::StaticHold, Some(pl), Condition::worn(v, pw), 1, p.static_rest_s)))
        .collect();
    blocks.push(statics);
    let dynamics: Vec<TrialSpec> = p
        .dynamic_planes
        .iter()
        .flat_map(|&pl| {
            both.map(|pw| spec(Task::DynamicLift, Some(pl), Condition::worn(v, pw), p.dynamic_reps, p.dynamic_rest_s))
        })
        .collect();
    blocks.push(dynamics);
    let mut transp: Vec<TrialSpec> = p
        .transparency_elevation_planes
        .iter()
        .map(|&pl| spec(Task::Transparency, Some(pl), Condition::worn(v, Power::Off), p.transparency_reps, 0))
        .collect();
    if p.transparency_horizontal {
        transp.push(spec(
            Task::Transparency,
            Some(Plane::HorizontalAdduction),
            Condition::worn(v, Power::On),
            p.transparency_reps,
            0,
        ));
    }
    blocks.push(transp);
    if p.pick_place {
        blocks.push(vec![spec(Task::PickPlace, None, Condition::worn(v, Power::On), 1, 0)]);
    }
    blocks
}

fn baseline_trials(p: &ProtocolConfig) -> Vec<TrialSpec> {
    let mut v: Vec<TrialSpec> = p
        .transparency_elevation_planes
        .iter()
        .map(|&pl| spec(Task::Transparency, Some(pl), Condition::NONE, p.transparency_reps, 0))
        .collect();
    if p.transparency_horizontal {
        v.push(spec(Task::Transparency, Some(Plane::HorizontalAdduction), Condition::NONE, p.transparency_reps, 0));
    }
    v
}

fn mvc_trials(p: &ProtocolConfig) -> Vec<TrialSpec> {
    (0..p.mvc_trials)
        .map(|i| TrialSpec { index: i, ..spec(Task::Mvc, None, Condition::NONE, 1, MVC_REST_S) })
        .collect()
}

/// Every trial one participant must complete, in canonical order.
pub fn required_trials(p: &ProtocolConfig) -> Vec<TrialSpec> {
    let mut out = mvc_trials(p);
    out.extend(baseline_trials(p));
    for v in ExoVersion::BOTH {
        if p.comfort_probe {
            out.push(spec(Task::ComfortProbe, None, Condition::worn(v, Power::On), 1, 0));
        }
        out.extend(version_trials(p, v).into_iter().flatten());
        if p.quest {
            out.push(spec(Task::Quest, None, Condition::worn(v, Power::Off), 1, 0));
        }
    }
    out
}

fn participant_seed(seed: u64, id: &str) -> u64 {
    // FNV-1a over the id, so plans do not depend on participant list order
    let h = id.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3));
    seed ^ h
}

/// MVC first, then the unworn transparency baseline, then one block per
/// version in random order. Within a version, task blocks keep protocol
/// order and their conditions are shuffled.
pub fn make_plan(seed: u64, participants: &[String], protocol: &ProtocolConfig) -> Result<RandomizationPlan, SessionError> {
    protocol.validate()?;
    if participants.is_empty() {
        return Err(SessionError::InvalidConfig("no participants".into()));
    }
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::with_capacity(participants.len());
    for id in participants {
        if !seen.insert(id) {
            return Err(SessionError::InvalidConfig(format!("duplicate participant '{id}'")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(participant_seed(seed, id));
        let mut versions = ExoVersion::BOTH;
        versions.shuffle(&mut rng);
        let mut trials = mvc_trials(protocol);
        let mut base = baseline_trials(protocol);
        base.shuffle(&mut rng);
        trials.extend(base);
        for v in versions {
            if protocol.comfort_probe {
                trials.push(spec(Task::ComfortProbe, None, Condition::worn(v, Power::On), 1, 0));
            }
            for mut block in version_trials(protocol, v) {
                block.shuffle(&mut rng);
                trials.extend(block);
            }
            if protocol.quest {
                trials.push(spec(Task::Quest, None, Condition::worn(v, Power::Off), 1, 0));
            }
        }
        out.push(ParticipantPlan { participant: id.clone(), version_order: versions, trials });
    }
    Ok(RandomizationPlan { seed, participants: out })
}
