//! Offline analysis of a stored session.
//!
//! Every number here is recomputed from the telemetry logs and the survey
//! submissions in the participant manifests. Trials are decoded in parallel;
//! results are assembled into a tidy table and passed through the stats
//! engine outcome by outcome.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::comfort::{
    aggregate_group, compare_maps, direction_tally, quest_delta, score_all, DirectionCounts, QuestItem,
    QuestItemDelta, Region, RegionComparison, RegionScores, TorsoTemplate,
};
use crate::emg::{self, activation_window, ActivationWindow, EmgConfig, Muscle, MvcProfile, RawEmg, EMG_FS};
use crate::kinematics::{angle_series, segment_rom, AngleSample, Quaternion, Segmentation};
use crate::stats::{analyze_outcome, CompareOptions, OutcomeAnalysis, TidyRow};
use crate::telemetry::{quat_from_wire, read_log, Payload, EMG_BLOCK};

use super::config::{Config, ExoVersion, Plane, Task};
use super::plan::required_trials;
use super::store::{ParticipantManifest, SessionStore};
use super::trial::{StaticCriteria, StaticHoldFsm, TrialRecord};
use super::SessionError;

// ----------------------------------------------------------------------------
// log decoding

/// Streams of one trial log, on the trial clock.
#[derive(Debug, Clone)]
pub struct DecodedTrial {
    pub imu: Vec<(f64, [Quaternion; 3])>,
    pub emg: RawEmg,
    pub pressure: Vec<(f64, f64)>,
    pub events: Vec<(f64, serde_json::Value)>,
    /// Damaged frames skipped by the reader.
    pub damaged: u64,
    /// EMG blocks missing from the sequence, filled with zeros.
    pub emg_gaps: u64,
}

impl DecodedTrial {
    pub fn event_times(&self, kind: &str) -> Vec<f64> {
        self.events.iter().filter(|(_, v)| v["kind"] == kind).map(|(t, _)| *t).collect()
    }
}

pub fn decode_trial(path: &Path) -> Result<DecodedTrial, SessionError> {
    let (frames, damaged) = read_log(path).map_err(|e| SessionError::Io { path: path.to_path_buf(), source: e })?;
    let mut imu = Vec::new();
    let mut pressure = Vec::new();
    let mut events = Vec::new();
    let mut ch: [Vec<f64>; 3] = Default::default();
    let mut next_emg_seq: Option<u32> = None;
    let mut emg_gaps = 0u64;
    for f in frames {
        let t = f.timestamp_us as f64 * 1e-6;
        match f.payload {
            Payload::Imu(p) => {
                imu.push((t, [quat_from_wire(p.q_torso), quat_from_wire(p.q_upper_arm), quat_from_wire(p.q_forearm)]))
            }
            Payload::Pressure(p) => pressure.push((t, p.kpa as f64)),
            Payload::Emg(p) => {
                if let Some(expect) = next_emg_seq {
                    let missing = f.seq.wrapping_sub(expect) as u64;
                    if missing > 0 && missing < 1 << 20 {
                        emg_gaps += missing;
                        for c in ch.iter_mut() {
                            c.extend(std::iter::repeat(0.0).take(missing as usize * EMG_BLOCK));
                        }
                    }
                }
                next_emg_seq = Some(f.seq.wrapping_add(1));
                for (c, block) in ch.iter_mut().zip([p.ad, p.md, p.pd]) {
                    c.extend(block.iter().map(|&v| v as f64));
                }
            }
            Payload::Ctrl(_) => {}
            Payload::Event(bytes) => {
                let v: serde_json::Value = serde_json::from_slice(&bytes)
                    .map_err(|e| SessionError::Format(format!("{}: bad event: {e}", path.display())))?;
                events.push((t, v));
            }
        }
    }
    let emg = RawEmg { fs: EMG_FS, channels: ch };
    Ok(DecodedTrial { imu, emg, pressure, events, damaged, emg_gaps })
}

// ----------------------------------------------------------------------------
// per-trial metrics

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MuscleMetrics {
    pub muscle: Muscle,
    pub pct_mvc: f64,
    pub mdf_delta_pct: Option<f64>,
    pub mdf_slope_pct_per_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialDerived {
    pub participant: String,
    pub trial: String,
    pub task: Task,
    pub plane: Option<Plane>,
    pub condition: String,
    pub endurance_s: Option<f64>,
    pub emg: Vec<MuscleMetrics>,
    pub rom_deg: Option<f64>,
    pub reps_found: Option<usize>,
    pub blocks: Option<usize>,
    pub tags: Vec<String>,
}

/// Endurance from the logged elevation: the stop FSM replayed over the IMU
/// stream, falling back to the logged stop event when the FSM never fired.
pub fn replay_endurance(d: &DecodedTrial, criteria: StaticCriteria) -> Result<Option<f64>, SessionError> {
    let mut fsm = StaticHoldFsm::new(StaticCriteria { stream_timeout_s: f64::INFINITY, ..criteria });
    for (t, q) in &d.imu {
        let sel = crate::kinematics::shoulder_elevation(q[1])?;
        if let Some(o) = fsm.feed(*t, sel)? {
            return Ok(Some(o.at_s));
        }
    }
    Ok(d.events.iter().rev().find(|(_, v)| v["kind"] == "trial_stop").and_then(|(_, v)| v["at_s"].as_f64()))
}

fn rom_series(samples: &[AngleSample], plane: Plane) -> Vec<f64> {
    if plane == Plane::HorizontalAdduction {
        samples.iter().map(|s| 90.0 - s.saz.unwrap_or(90.0)).collect()
    } else {
        samples.iter().map(|s| s.sel).collect()
    }
}

fn imu_dt(d: &DecodedTrial) -> f64 {
    match (d.imu.first(), d.imu.last()) {
        (Some(a), Some(b)) if d.imu.len() > 1 => (b.0 - a.0) / (d.imu.len() - 1) as f64,
        _ => 0.01,
    }
}

fn emg_metrics(
    raw: &RawEmg,
    mvc: &MvcProfile,
    window: ActivationWindow,
    cfg: &EmgConfig,
) -> Result<(Vec<MuscleMetrics>, Vec<emg::ChannelMetrics>), SessionError> {
    let full = emg::trial_metrics(raw, mvc, window, cfg)?;
    let opt = |v: f64| v.is_finite().then_some(v);
    let m = full
        .iter()
        .map(|c| MuscleMetrics {
            muscle: c.channel,
            pct_mvc: c.median_activation_pct,
            mdf_delta_pct: opt(c.mdf_delta_pct),
            mdf_slope_pct_per_s: opt(c.mdf_slope_pct_per_s),
        })
        .collect();
    Ok((m, full))
}

struct TrialJob<'a> {
    participant: &'a ParticipantManifest,
    record: &'a TrialRecord,
}

fn write_csv_file<F>(path: &Path, f: F) -> Result<(), SessionError>
where
    F: FnOnce(BufWriter<File>) -> Result<(), SessionError>,
{
    let file = File::create(path).map_err(|e| SessionError::Io { path: path.to_path_buf(), source: e })?;
    f(BufWriter::new(file))
}

/// Which logs a participant's analysis needs and which are missing.
pub fn missing_trials(cfg: &Config, m: &ParticipantManifest, store: &SessionStore) -> Vec<String> {
    let mut out = Vec::new();
    for spec in required_trials(&cfg.protocol) {
        let id = spec.id();
        let present = match spec.task {
            Task::ComfortProbe => m.comfort.iter().any(|c| Some(c.version) == spec.condition.version),
            Task::Quest => m.quest.iter().any(|q| Some(q.version) == spec.condition.version),
            _ => m
                .trial(&id)
                .and_then(|r| r.log.as_ref())
                .is_some_and(|l| store.participant_dir(&m.participant).join(l).is_file()),
        };
        if !present {
            let what = if spec.task == Task::Mvc { format!("{id} (MVC reference)") } else { id };
            out.push(format!("{}/{what}", m.participant));
        }
    }
    out
}

// ----------------------------------------------------------------------------
// report bundle

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComfortReport {
    pub n: usize,
    pub v1: RegionScores,
    pub v2: RegionScores,
    pub comparisons: Vec<RegionComparison>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedOutcome {
    pub outcome: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub participants: Vec<String>,
    pub normative_rom: super::config::NormativeRom,
    pub mvc: BTreeMap<String, MvcProfile>,
    pub trials: Vec<TrialDerived>,
    pub tidy: Vec<TidyRow>,
    pub outcomes: Vec<OutcomeAnalysis>,
    pub skipped: Vec<SkippedOutcome>,
    pub comfort: Option<ComfortReport>,
    pub quest: Vec<QuestItemDelta>,
    pub directions: BTreeMap<ExoVersion, DirectionCounts>,
}

impl SessionReport {
    pub fn outcome(&self, name: &str) -> Option<&OutcomeAnalysis> {
        self.outcomes.iter().find(|o| o.outcome == name)
    }
}

pub const POOLED_OFF: &str = "off";

pub fn outcome_name(parts: &[&str]) -> String {
    parts.join(".")
}

/// Adds the pooled unassisted baseline: for each subject and outcome with
/// both `v1_off` and `v2_off`, a row `off` holding their mean.
pub fn pool_off(rows: &mut Vec<TidyRow>) {
    let mut acc: BTreeMap<(String, String), (Option<f64>, Option<f64>)> = BTreeMap::new();
    for r in rows.iter() {
        let e = acc.entry((r.subject.clone(), r.outcome.clone())).or_default();
        match r.condition.as_str() {
            "v1_off" => e.0 = Some(r.value),
            "v2_off" => e.1 = Some(r.value),
            _ => {}
        }
    }
    for ((subject, outcome), v) in acc {
        if let (Some(a), Some(b)) = v {
            rows.push(TidyRow { subject, condition: POOLED_OFF.into(), outcome, value: 0.5 * (a + b) });
        }
    }
}

/// Analyzed conditions and comparisons for an outcome, from its name.
pub fn outcome_design(outcome: &str) -> (Vec<&'static str>, Vec<(&'static str, &'static str)>) {
    let parts: Vec<&str> = outcome.split('.').collect();
    let haa = parts.get(2) == Some(&Plane::HorizontalAdduction.name());
    match parts[0] {
        "static_hold" | "dynamic_lift" => {
            (vec![POOLED_OFF, "v1_on", "v2_on"], vec![(POOLED_OFF, "v1_on"), (POOLED_OFF, "v2_on")])
        }
        "transparency" if haa && parts[1] == "rom_deg" => (
            vec!["none", "v1_on", "v2_on"],
            vec![("none", "v1_on"), ("none", "v2_on"), ("v1_on", "v2_on")],
        ),
        "transparency" if haa => (vec!["v1_on", "v2_on"], vec![("v1_on", "v2_on")]),
        "transparency" => (
            vec!["none", "v1_off", "v2_off"],
            vec![("none", "v1_off"), ("none", "v2_off"), ("v1_off", "v2_off")],
        ),
        "pick_place" => (vec!["v1_on", "v2_on"], vec![("v1_on", "v2_on")]),
        _ => (vec!["v1", "v2"], vec![("v1", "v2")]),
    }
}

fn tidy_rows_for(d: &TrialDerived) -> Vec<TidyRow> {
    let mut rows = Vec::new();
    let task = d.task.name();
    let plane = d.plane.map_or("", |p| p.name());
    let mut push = |outcome: String, value: f64| {
        rows.push(TidyRow { subject: d.participant.clone(), condition: d.condition.clone(), outcome, value })
    };
    if let Some(e) = d.endurance_s {
        push(outcome_name(&[task, "endurance_s", plane]), e);
    }
    let effort_excluded = d.tags.iter().any(|t| t == "arm_weight_supported");
    if !effort_excluded && d.task != Task::PickPlace {
        for m in &d.emg {
            push(outcome_name(&[task, "pct_mvc", plane, m.muscle.name()]), m.pct_mvc);
            if let (Task::StaticHold, Some(x)) = (d.task, m.mdf_delta_pct) {
                push(outcome_name(&[task, "mdf_delta_pct", plane, m.muscle.name()]), x);
            }
        }
    }
    if let Some(r) = d.rom_deg {
        push(outcome_name(&[task, "rom_deg", plane]), r);
    }
    if let Some(b) = d.blocks {
        push(outcome_name(&[task, "blocks"]), b as f64);
    }
    rows
}

// ----------------------------------------------------------------------------
// driver

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalysisOptions {
    pub emg: EmgConfig,
    pub stats: CompareOptions,
    pub segmentation: Segmentation,
    /// Write per-trial CSVs under each participant's `derived/`.
    pub write_derived: bool,
    pub threads: usize,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            emg: EmgConfig::default(),
            stats: CompareOptions::default(),
            segmentation: Segmentation::default(),
            write_derived: true,
            threads: std::thread::available_parallelism().map_or(4, |n| n.get()),
        }
    }
}

fn analyze_trial(
    job: &TrialJob,
    mvc: &MvcProfile,
    static_windows: &BTreeMap<(String, Plane), ActivationWindow>,
    cfg: &Config,
    store: &SessionStore,
    opts: &AnalysisOptions,
    decoded: Option<DecodedTrial>,
) -> Result<TrialDerived, SessionError> {
    let m = job.participant;
    let r = job.record;
    let dir = store.participant_dir(&m.participant);
    let d = match decoded {
        Some(d) => d,
        None => decode_trial(&dir.join(r.log.as_ref().expect("checked by missing_trials")))?,
    };
    let mut out = TrialDerived {
        participant: m.participant.clone(),
        trial: r.id.clone(),
        task: r.spec.task,
        plane: r.spec.plane,
        condition: r.spec.condition.label(),
        endurance_s: None,
        emg: Vec::new(),
        rom_deg: None,
        reps_found: None,
        blocks: None,
        tags: r.tags.clone(),
    };
    let derived = store.derived_dir(&m.participant);
    let mut full = Vec::new();
    match r.spec.task {
        Task::StaticHold => {
            out.endurance_s = replay_endurance(&d, StaticCriteria::from_protocol(&cfg.protocol))?;
            let plane = r.spec.plane.unwrap_or(Plane::Abduction);
            let w = static_windows[&(m.participant.clone(), plane)];
            (out.emg, full) = emg_metrics(&d.emg, mvc, w, &opts.emg)?;
        }
        Task::DynamicLift | Task::Transparency => {
            let w = ActivationWindow { duration: d.emg.duration(), offset: 0.0 };
            (out.emg, full) = emg_metrics(&d.emg, mvc, w, &opts.emg)?;
            if r.spec.task == Task::Transparency {
                let plane = r.spec.plane.unwrap_or(Plane::Abduction);
                let samples = angle_series(d.imu.iter().copied(), m.handedness)?;
                let reps = segment_rom(&rom_series(&samples, plane), imu_dt(&d), opts.segmentation)?;
                out.rom_deg = Some(reps.iter().map(|x| x.rom).sum::<f64>() / reps.len() as f64);
                out.reps_found = Some(reps.len());
                if opts.write_derived {
                    write_csv_file(&derived.join(format!("{}_angles.csv", r.id)), |w| {
                        crate::kinematics::write_angle_csv(w, &samples)
                            .map_err(|e| SessionError::Format(e.to_string()))
                    })?;
                }
            }
        }
        Task::PickPlace => {
            out.blocks = Some(super::trial::pick_place_score(&d.event_times("block_transfer"), cfg.protocol.pick_place_s));
        }
        Task::Mvc | Task::ComfortProbe | Task::Quest => {}
    }
    if opts.write_derived && !full.is_empty() {
        write_csv_file(&derived.join(format!("{}_emg.csv", r.id)), |w| Ok(emg::write_metrics_csv(w, &full)?))?;
        if r.spec.task == Task::StaticHold {
            write_csv_file(&derived.join(format!("{}_mdf.csv", r.id)), |w| Ok(emg::write_epoch_csv(w, &full)?))?;
        }
    }
    Ok(out)
}

fn run_parallel<T: Send, F>(n: usize, threads: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T + Sync,
{
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<T>>> = Mutex::new((0..n).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..threads.clamp(1, n.max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let v = f(i);
                slots.lock().expect("result slots")[i] = Some(v);
            });
        }
    });
    slots.into_inner().expect("result slots").into_iter().map(|v| v.expect("every job ran")).collect()
}

/// Full analysis of the session under `store`.
pub fn analyze_session(store: &SessionStore, opts: &AnalysisOptions) -> Result<SessionReport, SessionError> {
    let study = store.study()?;
    let cfg = &study.config;
    let ids = store.participants()?;
    if ids.is_empty() {
        return Err(SessionError::MissingTrials(study.participants.iter().map(|p| format!("{p}/session.json")).collect()));
    }
    let manifests = ids.iter().map(|id| store.read_participant(id)).collect::<Result<Vec<_>, _>>()?;
    let missing: Vec<String> = manifests.iter().flat_map(|m| missing_trials(cfg, m, store)).collect();
    if !missing.is_empty() {
        return Err(SessionError::MissingTrials(missing));
    }

    // MVC references and static-hold EMG lengths
    let pre_jobs: Vec<TrialJob> = manifests
        .iter()
        .flat_map(|m| {
            m.trials
                .iter()
                .filter(|r| matches!(r.spec.task, Task::Mvc | Task::StaticHold))
                .map(move |r| TrialJob { participant: m, record: r })
        })
        .collect();
    let pre = run_parallel(pre_jobs.len(), opts.threads, |i| {
        let j = &pre_jobs[i];
        decode_trial(&store.participant_dir(&j.participant.participant).join(j.record.log.as_ref().expect("present")))
    });
    let mut mvc_raw: BTreeMap<String, Vec<RawEmg>> = BTreeMap::new();
    let mut static_lengths: BTreeMap<(String, Plane), Vec<f64>> = BTreeMap::new();
    let mut static_decoded: BTreeMap<(String, String), DecodedTrial> = BTreeMap::new();
    for (j, d) in pre_jobs.iter().zip(pre) {
        let d = d?;
        let p = j.participant.participant.clone();
        if j.record.spec.task == Task::Mvc {
            mvc_raw.entry(p).or_default().push(d.emg);
        } else {
            let plane = j.record.spec.plane.unwrap_or(Plane::Abduction);
            static_lengths.entry((p.clone(), plane)).or_default().push(d.emg.duration());
            static_decoded.insert((p, j.record.id.clone()), d);
        }
    }
    let mut mvc = BTreeMap::new();
    for (p, trials) in &mvc_raw {
        mvc.insert(p.clone(), MvcProfile::from_raw_trials(trials, &opts.emg)?);
    }
    let mut windows = BTreeMap::new();
    for (k, lens) in &static_lengths {
        windows.insert(k.clone(), activation_window(lens)?);
    }

    let jobs: Vec<TrialJob> = manifests
        .iter()
        .flat_map(|m| {
            m.trials
                .iter()
                .filter(|r| r.spec.task != Task::Mvc && r.spec.task.is_recorded())
                .map(move |r| TrialJob { participant: m, record: r })
        })
        .collect();
    let decoded = Mutex::new(static_decoded);
    let results = run_parallel(jobs.len(), opts.threads, |i| {
        let j = &jobs[i];
        let pre = decoded.lock().expect("decoded cache").remove(&(j.participant.participant.clone(), j.record.id.clone()));
        analyze_trial(j, &mvc[&j.participant.participant], &windows, cfg, store, opts, pre)
    });
    let trials = results.into_iter().collect::<Result<Vec<_>, _>>()?;

    // tidy table
    let mut tidy: Vec<TidyRow> = trials.iter().flat_map(tidy_rows_for).collect();
    let template = TorsoTemplate::canonical();
    let mut comfort_scores: BTreeMap<ExoVersion, Vec<RegionScores>> = BTreeMap::new();
    for m in &manifests {
        for c in &m.comfort {
            c.validate(&template)?;
            let s = score_all(&c.marks, &template)?;
            for r in Region::ALL {
                tidy.push(TidyRow {
                    subject: m.participant.clone(),
                    condition: c.version.name().into(),
                    outcome: outcome_name(&["comfort", r.name()]),
                    value: s[&r],
                });
            }
            comfort_scores.entry(c.version).or_default().push(s);
        }
        for q in &m.quest {
            q.scores.validate()?;
            for it in QuestItem::ALL {
                tidy.push(TidyRow {
                    subject: m.participant.clone(),
                    condition: q.version.name().into(),
                    outcome: outcome_name(&["quest", it.name()]),
                    value: q.scores.get(it),
                });
            }
        }
    }
    pool_off(&mut tidy);
    tidy.sort_by(|a, b| {
        (a.outcome.as_str(), a.subject.as_str(), a.condition.as_str()).cmp(&(
            b.outcome.as_str(),
            b.subject.as_str(),
            b.condition.as_str(),
        ))
    });

    // statistics
    let mut names: Vec<&str> = tidy.iter().map(|r| r.outcome.as_str()).collect();
    names.dedup();
    let mut outcomes = Vec::new();
    let mut skipped = Vec::new();
    for name in names {
        let (conds, pairs) = outcome_design(name);
        match analyze_outcome(&tidy, name, Some(&conds), Some(&pairs), opts.stats) {
            Ok(a) => outcomes.push(a),
            Err(e) => skipped.push(SkippedOutcome { outcome: name.to_string(), reason: e.to_string() }),
        }
    }

    let comfort = match (comfort_scores.get(&ExoVersion::V1), comfort_scores.get(&ExoVersion::V2)) {
        (Some(a), Some(b)) => {
            let (v1, v2) = (aggregate_group(a)?, aggregate_group(b)?);
            Some(ComfortReport { n: a.len().min(b.len()), comparisons: compare_maps(&v1, &v2), v1, v2 })
        }
        _ => None,
    };
    let quest_of = |v: ExoVersion| -> Vec<_> {
        manifests.iter().flat_map(|m| m.quest.iter().filter(move |q| q.version == v).map(|q| q.scores)).collect()
    };
    let (q1, q2) = (quest_of(ExoVersion::V1), quest_of(ExoVersion::V2));
    let quest = if q1.is_empty() || q2.is_empty() { Vec::new() } else { quest_delta(&q1, &q2)? };
    let all_dirs: Vec<_> = manifests.iter().flat_map(|m| m.directions.iter().cloned()).collect();
    let directions = if all_dirs.is_empty() { BTreeMap::new() } else { direction_tally(&all_dirs)? };

    let mut trials = trials;
    trials.sort_by(|a, b| (&a.participant, &a.trial).cmp(&(&b.participant, &b.trial)));
    if opts.write_derived {
        for m in &manifests {
            let mut m2 = m.clone();
            for r in m2.trials.iter_mut() {
                r.derived = ["emg", "mdf", "angles"]
                    .iter()
                    .map(|k| format!("derived/{}_{k}.csv", r.id))
                    .filter(|rel| store.participant_dir(&m.participant).join(rel).is_file())
                    .collect();
            }
            if &m2 != m {
                store.write_participant(&m2)?;
            }
        }
    }
    Ok(SessionReport {
        participants: ids,
        normative_rom: cfg.normative_rom.clone(),
        mvc,
        trials,
        tidy,
        outcomes,
        skipped,
        comfort,
        quest,
        directions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(s: &str, c: &str, v: f64) -> TidyRow {
        TidyRow { subject: s.into(), condition: c.into(), outcome: "x".into(), value: v }
    }

    #[test]
    fn pooled_baseline_is_mean_of_unassisted() {
        let mut rows = vec![row("a", "v1_off", 10.0), row("a", "v2_off", 10.0), row("b", "v1_off", 4.0), row("b", "v2_off", 8.0)];
        pool_off(&mut rows);
        let off: Vec<f64> = rows.iter().filter(|r| r.condition == POOLED_OFF).map(|r| r.value).collect();
        assert_eq!(off, vec![10.0, 6.0]);
    }

    #[test]
    fn pooling_needs_both_versions() {
        let mut rows = vec![row("a", "v1_off", 10.0), row("a", "v1_on", 12.0)];
        pool_off(&mut rows);
        assert_eq!(rows.len(), 2);
    }

    #[test]
    fn designs() {
        assert_eq!(outcome_design("static_hold.endurance_s.abduction").1.len(), 2);
        assert_eq!(outcome_design("transparency.rom_deg.horizontal_adduction").0, vec!["none", "v1_on", "v2_on"]);
        assert_eq!(outcome_design("transparency.pct_mvc.horizontal_adduction.AD").0, vec!["v1_on", "v2_on"]);
        assert_eq!(outcome_design("transparency.rom_deg.flexion").0, vec!["none", "v1_off", "v2_off"]);
        assert_eq!(outcome_design("comfort.upper_arm").1, vec![("v1", "v2")]);
    }
}
