//! Session pipeline on the reduced protocol: reproducibility, analysis purity,
//! report export, missing-data reporting, paced replay and the CLI.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use exobench::session::analysis::{analyze_session, AnalysisOptions};
use exobench::session::config::Task;
use exobench::session::report::{export_report, ReportFormat, CSV_FILES};
use exobench::session::synth::participant_ids;
use exobench::session::{simulate_session, Config, SessionError, SessionStore, DATA_DIR_ENV};
use exobench::telemetry::log::{replay, LogWriter, Pacing};
use exobench::telemetry::{ImuPayload, Payload, TelemetryFrame};

const QUICK: &str = include_str!("../configs/quick.toml");

fn quick() -> Config {
    Config::from_toml_str(QUICK).unwrap()
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn quick_session_end_to_end() {
    let cfg = quick();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let sim = simulate_session(&cfg, 11, a.path()).unwrap();
    simulate_session(&cfg, 11, b.path()).unwrap();
    let (ta, tb) = (tree(a.path()), tree(b.path()));
    assert_eq!(ta.keys().collect::<Vec<_>>(), tb.keys().collect::<Vec<_>>());
    for (k, v) in &ta {
        assert!(tb[k] == *v, "{} differs between identical runs", k.display());
    }

    // analysis reads only the store, so repeating it changes nothing
    let opts = AnalysisOptions { write_derived: false, ..AnalysisOptions::default() };
    let r1 = analyze_session(&sim.store, &opts).unwrap();
    let r2 = analyze_session(&sim.store, &opts).unwrap();
    assert_eq!(r1, r2);
    let out = tempfile::tempdir().unwrap();
    let (d1, d2) = (out.path().join("one"), out.path().join("two"));
    export_report(&r1, &d1, ReportFormat::Csv).unwrap();
    export_report(&r2, &d2, ReportFormat::Csv).unwrap();
    for f in CSV_FILES {
        assert_eq!(fs::read(d1.join(f)).unwrap(), fs::read(d2.join(f)).unwrap(), "{f}");
    }
    export_report(&r1, &d1, ReportFormat::Json).unwrap();
    export_report(&r2, &d2, ReportFormat::Json).unwrap();
    assert_eq!(fs::read(d1.join("report.json")).unwrap(), fs::read(d2.join("report.json")).unwrap());

    // endurance re-derived from the logs agrees with the generator
    let debounce = cfg.protocol.static_debounce_s;
    let mut compared = 0;
    for pt in &sim.truth {
        for (trial, truth) in &pt.trials {
            let Some(want) = truth.endurance_s else { continue };
            let got = r1
                .trials
                .iter()
                .find(|t| t.participant == pt.participant.id && &t.trial == trial)
                .and_then(|t| t.endurance_s)
                .unwrap();
            assert!((got - want).abs() <= debounce, "{}/{trial}: {got} vs {want}", pt.participant.id);
            compared += 1;
        }
    }
    assert!(compared >= cfg.cohort.n_participants * 8, "{compared}");

    // dropping an MVC trial is reported by name
    let id = &sim.truth[0].participant.id;
    let mut m = sim.store.read_participant(id).unwrap();
    m.trials.retain(|t| t.spec.task != Task::Mvc || t.spec.index != 1);
    sim.store.write_participant(&m).unwrap();
    match analyze_session(&sim.store, &opts) {
        Err(SessionError::MissingTrials(list)) => {
            assert_eq!(list.len(), 1, "{list:?}");
            assert!(list[0].starts_with(id.as_str()) && list[0].contains("MVC"), "{list:?}");
        }
        other => panic!("expected MissingTrials, got {other:?}"),
    }
}

#[test]
fn paced_replay_keeps_imu_spacing() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("imu.bin");
    let mut w = LogWriter::append(&path).unwrap();
    let q = [1.0, 0.0, 0.0, 0.0];
    for i in 0..100u32 {
        let p = Payload::Imu(ImuPayload { q_torso: q, q_upper_arm: q, q_forearm: q, calib: [3; 3] });
        w.write(&TelemetryFrame::new(i, 5_000_000 + i as u64 * 10_000, p)).unwrap();
    }
    w.flush().unwrap();
    drop(w);

    let mut arrivals = Vec::new();
    for _ in replay(&path, Pacing::Realtime { speed: 1.0 }).unwrap() {
        arrivals.push(Instant::now());
    }
    assert_eq!(arrivals.len(), 100);
    let gaps: Vec<f64> = arrivals.windows(2).map(|w| (w[1] - w[0]).as_secs_f64() * 1e3).collect();
    let worst = gaps.iter().map(|g| (g - 10.0).abs()).fold(0.0, f64::max);
    assert!(worst <= 2.0, "worst interval error {worst:.3} ms");
}

#[test]
fn cli_uses_the_data_dir() {
    let data = tempfile::tempdir().unwrap();
    let cwd = tempfile::tempdir().unwrap();
    let mut cfg = quick();
    cfg.cohort.n_participants = 3;
    let cfg_path = data.path().join("tiny.toml");
    fs::write(&cfg_path, cfg.to_toml_string()).unwrap();

    let run = |args: &[&str]| {
        let out = Command::new(env!("CARGO_BIN_EXE_exobench"))
            .args(args)
            .env(DATA_DIR_ENV, data.path())
            .current_dir(cwd.path())
            .output()
            .unwrap();
        assert!(out.status.success(), "exobench {args:?}: {}", String::from_utf8_lossy(&out.stderr));
        String::from_utf8(out.stdout).unwrap()
    };
    run(&["simulate", "--config", cfg_path.to_str().unwrap(), "--seed", "5", "--out", "tiny"]);
    assert!(data.path().join("tiny/study.json").is_file());
    assert!(!cwd.path().join("tiny").exists());

    let listed = run(&["report", "tiny", "--format", "csv"]);
    for f in CSV_FILES {
        let p = data.path().join("tiny/report").join(f);
        assert!(p.is_file() && listed.contains(f), "{f}");
    }
    let results = run(&["stats", data.path().join("tiny/report/tidy.csv").to_str().unwrap()]);
    assert!(results.starts_with("outcome,"), "{results}");

    let store = SessionStore::open(data.path().join("tiny")).unwrap();
    let first = &participant_ids(&cfg)[0];
    let log = store.log_path(first, "mvc-1");
    let summary = run(&["replay", log.to_str().unwrap(), "--summary"]);
    assert!(summary.lines().any(|l| l.starts_with("emg\t")), "{summary}");
}
