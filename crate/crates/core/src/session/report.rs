//! Report export.
//!
//! The CSV bundle holds one table per figure family; the JSON form is the
//! whole [`SessionReport`]. Field order is fixed by the struct definitions and
//! every map is ordered, so exporting the same report twice gives identical
//! bytes.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::comfort::{write_comfort_csv, write_quest_csv};
use crate::emg::Muscle;
use crate::stats::{write_descriptives_csv, write_results_csv, write_tidy};

use super::analysis::SessionReport;
use super::config::Plane;
use super::SessionError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = SessionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            _ => Err(SessionError::UnknownFormat(s.to_string())),
        }
    }
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> SessionError + '_ {
    move |source| SessionError::Io { path: path.to_path_buf(), source }
}

fn create(path: &Path) -> Result<BufWriter<File>, SessionError> {
    Ok(BufWriter::new(File::create(path).map_err(io(path))?))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_err(e: csv::Error) -> SessionError {
    SessionError::Format(e.to_string())
}

fn write_trials_csv<W: Write>(w: W, r: &SessionReport) -> Result<(), SessionError> {
    let mut wr = csv::Writer::from_writer(w);
    let mut header: Vec<String> =
        ["participant", "trial", "task", "plane", "condition", "endurance_s", "rom_deg", "reps_found", "blocks"]
            .map(String::from)
            .to_vec();
    for m in Muscle::ALL {
        header.push(format!("{}_pct_mvc", m.name()));
        header.push(format!("{}_mdf_delta_pct", m.name()));
    }
    header.push("tags".into());
    wr.write_record(&header).map_err(csv_err)?;
    for t in &r.trials {
        let mut row = vec![
            t.participant.clone(),
            t.trial.clone(),
            t.task.name().to_string(),
            t.plane.map_or(String::new(), |p| p.name().to_string()),
            t.condition.clone(),
            opt(t.endurance_s),
            opt(t.rom_deg),
            t.reps_found.map_or(String::new(), |v| v.to_string()),
            t.blocks.map_or(String::new(), |v| v.to_string()),
        ];
        for m in Muscle::ALL {
            let mm = t.emg.iter().find(|x| x.muscle == m);
            row.push(opt(mm.map(|x| x.pct_mvc)));
            row.push(opt(mm.and_then(|x| x.mdf_delta_pct)));
        }
        row.push(t.tags.join(";"));
        wr.write_record(&row).map_err(csv_err)?;
    }
    wr.flush().map_err(|e| SessionError::Format(e.to_string()))
}

/// Median transparency ROM per plane and condition against the normative value.
fn write_rom_csv<W: Write>(w: W, r: &SessionReport) -> Result<(), SessionError> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["plane", "condition", "n", "median_rom_deg", "normative_deg", "pct_of_normative"])
        .map_err(csv_err)?;
    for plane in [Plane::Abduction, Plane::Flexion, Plane::HorizontalAdduction] {
        let Some(o) = r.outcome(&format!("transparency.rom_deg.{}", plane.name())) else { continue };
        let norm = r.normative_rom.get(plane);
        for s in &o.summaries {
            let med = s.descriptives.median;
            wr.write_record([
                plane.name().to_string(),
                s.condition.clone(),
                s.descriptives.n.to_string(),
                med.to_string(),
                opt(norm),
                opt(norm.map(|n| 100.0 * med / n)),
            ])
            .map_err(csv_err)?;
        }
    }
    wr.flush().map_err(|e| SessionError::Format(e.to_string()))
}

fn write_directions_csv<W: Write>(w: W, r: &SessionReport) -> Result<(), SessionError> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["version", "front", "side", "oblique"]).map_err(csv_err)?;
    for (v, c) in &r.directions {
        wr.write_record([v.name().to_string(), c.front.to_string(), c.side.to_string(), c.oblique.to_string()])
            .map_err(csv_err)?;
    }
    wr.flush().map_err(|e| SessionError::Format(e.to_string()))
}

pub const CSV_FILES: [&str; 8] = [
    "results.csv",
    "descriptives.csv",
    "tidy.csv",
    "trials.csv",
    "rom.csv",
    "comfort.csv",
    "quest.csv",
    "directions.csv",
];

/// Writes the report into `dir` and returns the files written.
pub fn export_report(report: &SessionReport, dir: &Path, format: ReportFormat) -> Result<Vec<PathBuf>, SessionError> {
    fs::create_dir_all(dir).map_err(io(dir))?;
    match format {
        ReportFormat::Json => {
            let path = dir.join("report.json");
            super::store::write_json(&path, report)?;
            Ok(vec![path])
        }
        ReportFormat::Csv => {
            let paths: Vec<PathBuf> = CSV_FILES.iter().map(|f| dir.join(f)).collect();
            write_results_csv(create(&paths[0])?, &report.outcomes)?;
            write_descriptives_csv(create(&paths[1])?, &report.outcomes)?;
            write_tidy(create(&paths[2])?, &report.tidy)?;
            write_trials_csv(create(&paths[3])?, report)?;
            write_rom_csv(create(&paths[4])?, report)?;
            write_comfort_csv(create(&paths[5])?, report.comfort.as_ref().map_or(&[][..], |c| &c.comparisons))?;
            write_quest_csv(create(&paths[6])?, &report.quest)?;
            write_directions_csv(create(&paths[7])?, report)?;
            Ok(paths)
        }
    }
}
