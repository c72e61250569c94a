//! `exobench` command-line front end.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use exobench::session::analysis::{analyze_session, outcome_design, AnalysisOptions, SessionReport, SkippedOutcome};
use exobench::session::live::LiveRunner;
use exobench::session::report::{export_report, ReportFormat};
use exobench::session::store::STORE_FORMAT;
use exobench::session::serve::{ServeOptions, Server};
use exobench::session::synth::{make_participant, participant_ids};
use exobench::session::{
    make_plan, resolve_session_dir, simulate_session, Config, SessionError, SessionStore, StudyManifest, DATA_DIR_ENV,
};
use exobench::stats::{analyze_outcome, read_tidy, write_results_csv, CompareOptions, TidyRow};
use exobench::telemetry::json::to_json_string;
use exobench::telemetry::log::{replay, Pacing};

#[derive(Parser)]
#[command(name = "exobench", version, about = "Shoulder exosuit test rig: simulation, replay and analysis")]
struct Cli {
    /// Root for relative session paths.
    #[arg(long, global = true, env = DATA_DIR_ENV)]
    data_dir: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic session of virtual participants.
    Simulate {
        /// TOML configuration; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Output session directory (default: session-<seed> under the data dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the frames of a telemetry log as JSON lines.
    Replay {
        log: PathBuf,
        /// Reproduce recorded timing at this speed (1 = real time).
        #[arg(long)]
        speed: Option<f64>,
        /// Print per-stream counts instead of frames.
        #[arg(long)]
        summary: bool,
    },
    /// Analyze a session and write derived files and report/report.json.
    Analyze {
        session: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Run the nonparametric chain on a tidy CSV and print results as CSV.
    Stats { tidy: PathBuf },
    /// Export a session report.
    Report {
        session: PathBuf,
        #[arg(long, default_value = "csv")]
        format: String,
        /// Output directory (default: <session>/report).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve a live session to the operator console.
    Serve {
        #[arg(long, default_value_t = 8765)]
        port: u16,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Participant id from the configured cohort (default: the first).
        #[arg(long)]
        participant: Option<String>,
        /// Record into this session directory.
        #[arg(long)]
        session: Option<PathBuf>,
        /// Simulation seconds per wall-clock second.
        #[arg(long, default_value_t = 1.0)]
        speed: f64,
        /// Listen on all interfaces instead of loopback.
        #[arg(long)]
        public: bool,
    },
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Stats(#[from] exobench::stats::StatsError),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{0}")]
    Usage(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

fn session_path(data_dir: &Option<PathBuf>, arg: &Path) -> PathBuf {
    match data_dir {
        Some(root) if !arg.is_absolute() && !arg.exists() => root.join(arg),
        _ => resolve_session_dir(arg),
    }
}

fn load_config(path: &Option<PathBuf>) -> Result<Config, CliError> {
    Ok(match path {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    })
}

fn print_skipped(skipped: &[SkippedOutcome]) {
    for s in skipped {
        eprintln!("skipped {}: {}", s.outcome, s.reason);
    }
}

fn print_summary(r: &SessionReport) {
    println!("participants: {}", r.participants.join(", "));
    println!("{:<48} {:>8} {:>8} {:>10} {:>8} {:>8}", "outcome", "ref", "cond", "HL", "p", "p_fdr");
    for o in &r.outcomes {
        for c in &o.comparisons {
            println!(
                "{:<48} {:>8} {:>8} {:>10.3} {:>8.4} {:>8.4}",
                o.outcome, c.reference, c.condition, c.hl_estimate, c.p_raw, c.p_fdr
            );
        }
    }
}

fn stats_table(rows: &[TidyRow]) -> Result<Vec<exobench::stats::OutcomeAnalysis>, CliError> {
    let mut names: Vec<&str> = Vec::new();
    for r in rows {
        if !names.contains(&r.outcome.as_str()) {
            names.push(&r.outcome);
        }
    }
    let opts = CompareOptions::default();
    let mut out = Vec::new();
    for name in names {
        // session outcome names get their study design; anything else is
        // analyzed across all conditions present
        let (conds, pairs) = outcome_design(name);
        let present = |c: &str| rows.iter().any(|r| r.outcome == name && r.condition == c);
        let a = if conds.iter().all(|c| present(c)) {
            analyze_outcome(rows, name, Some(&conds), Some(&pairs), opts)
        } else {
            analyze_outcome(rows, name, None, None, opts)
        };
        match a {
            Ok(a) => out.push(a),
            Err(e) => eprintln!("skipped {name}: {e}"),
        }
    }
    Ok(out)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let data_dir = cli.data_dir;
    match cli.cmd {
        Cmd::Simulate { config, seed, out } => {
            let cfg = load_config(&config)?;
            let out = out.unwrap_or_else(|| PathBuf::from(format!("session-{seed}")));
            let root = session_path(&data_dir, &out);
            let t0 = Instant::now();
            let sim = simulate_session(&cfg, seed, &root)?;
            println!(
                "simulated {} participants into {} in {:.1} s",
                sim.truth.len(),
                sim.store.root().display(),
                t0.elapsed().as_secs_f64()
            );
        }
        Cmd::Replay { log, speed, summary } => {
            let pacing = match speed {
                Some(s) if s > 0.0 => Pacing::Realtime { speed: s },
                Some(s) => return Err(CliError::Usage(format!("speed must be positive, got {s}"))),
                None => Pacing::AsFastAsPossible,
            };
            let frames = replay(&log, pacing).map_err(io_err(&log))?;
            let stdout = io::stdout();
            let mut w = BufWriter::new(stdout.lock());
            let mut counts = std::collections::BTreeMap::new();
            for f in frames {
                if summary {
                    *counts.entry(f.stream().name()).or_insert(0u64) += 1;
                } else if writeln!(w, "{}", to_json_string(&f)).is_err() {
                    // closed pipe
                    return Ok(());
                }
            }
            for (s, n) in counts {
                let _ = writeln!(w, "{s}\t{n}");
            }
        }
        Cmd::Analyze { session, threads } => {
            let store = SessionStore::open(session_path(&data_dir, &session))?;
            let mut opts = AnalysisOptions::default();
            if let Some(t) = threads {
                opts.threads = t.max(1);
            }
            let t0 = Instant::now();
            let report = analyze_session(&store, &opts)?;
            let paths = export_report(&report, &store.root().join("report"), ReportFormat::Json)?;
            print_summary(&report);
            print_skipped(&report.skipped);
            eprintln!("analyzed in {:.1} s; wrote {}", t0.elapsed().as_secs_f64(), paths[0].display());
        }
        Cmd::Stats { tidy } => {
            let f = File::open(&tidy).map_err(io_err(&tidy))?;
            let rows = read_tidy(f)?;
            let analyses = stats_table(&rows)?;
            let mut buf = Vec::new();
            write_results_csv(&mut buf, &analyses)?;
            match io::stdout().lock().write_all(&buf) {
                Err(e) if e.kind() != io::ErrorKind::BrokenPipe => return Err(io_err(Path::new("stdout"))(e)),
                _ => {}
            }
        }
        Cmd::Report { session, format, out } => {
            let format: ReportFormat = format.parse()?;
            let store = SessionStore::open(session_path(&data_dir, &session))?;
            let opts = AnalysisOptions { write_derived: false, ..AnalysisOptions::default() };
            let report = analyze_session(&store, &opts)?;
            let dir = out.unwrap_or_else(|| store.root().join("report"));
            for p in export_report(&report, &dir, format)? {
                println!("{}", p.display());
            }
            print_skipped(&report.skipped);
        }
        Cmd::Serve { port, config, seed, participant, session, speed, public } => {
            let cfg = load_config(&config)?;
            let ids = participant_ids(&cfg);
            let id = participant.unwrap_or_else(|| ids[0].clone());
            let plan = make_plan(seed, &ids, &cfg.protocol)?;
            let pp = plan
                .for_participant(&id)
                .ok_or_else(|| CliError::Usage(format!("{id} is not in the configured cohort")))?
                .trials
                .clone();
            let store = match session {
                Some(s) => Some(SessionStore::create(
                    session_path(&data_dir, &s),
                    &StudyManifest { format: STORE_FORMAT, seed, config: cfg.clone(), plan: plan.clone(), participants: vec![id.clone()] },
                )?),
                None => None,
            };
            let p = make_participant(&cfg, seed, &id)?;
            let runner = LiveRunner::new(cfg, p, pp, seed, store)?;
            let mut opts = ServeOptions::local(port);
            opts.speed = speed;
            if public {
                opts.ws_addr.set_ip([0, 0, 0, 0].into());
                if let Some(a) = opts.frames_addr.as_mut() {
                    a.set_ip([0, 0, 0, 0].into());
                }
            }
            let server = Server::start(runner, opts).map_err(|source| CliError::Io { path: PathBuf::from(format!("port {port}")), source })?;
            eprintln!("participant {id}: console ws://{}", server.ws_addr());
            if let Some(a) = server.frames_addr() {
                eprintln!("binary frames on tcp://{a}");
            }
            server.wait();
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
