//! The nonparametric chain on a small repeated-measures table: Friedman
//! omnibus, Wilcoxon signed-rank post-hoc tests against a reference,
//! Benjamini-Hochberg adjustment, effect size r and Hodges-Lehmann
//! intervals.
//!
//! Run with `cargo run --example stats_chain`.

use exobench::stats::{analyze_outcome, write_results_csv, CompareOptions, TidyRow};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // hold endurance in seconds for eight subjects in three conditions
    let data = [
        ("S01", [118.0, 201.0, 180.0]),
        ("S02", [131.0, 225.0, 190.0]),
        ("S03", [97.0, 160.0, 171.0]),
        ("S04", [142.0, 240.0, 205.0]),
        ("S05", [125.0, 198.0, 188.0]),
        ("S06", [110.0, 207.0, 169.0]),
        ("S07", [150.0, 233.0, 214.0]),
        ("S08", [121.0, 190.0, 176.0]),
    ];
    let conds = ["off", "v1_on", "v2_on"];
    let rows: Vec<TidyRow> = data
        .iter()
        .flat_map(|(s, v)| {
            conds.iter().zip(v).map(|(c, &value)| TidyRow {
                subject: s.to_string(),
                condition: c.to_string(),
                outcome: "endurance_s".into(),
                value,
            })
        })
        .collect();

    let a = analyze_outcome(
        &rows,
        "endurance_s",
        Some(&conds),
        Some(&[("off", "v1_on"), ("off", "v2_on")]),
        CompareOptions::default(),
    )?;
    if let Some(f) = &a.friedman {
        println!("Friedman chi2({}) = {:.3}, p = {:.5}, n = {}", f.df, f.chi2, f.p, f.n);
    }
    for s in &a.summaries {
        let d = &s.descriptives;
        println!("{:>6}: median {:.1} [IQR {:.1}..{:.1}]", s.condition, d.median, d.q1, d.q3);
    }
    println!();
    write_results_csv(std::io::stdout().lock(), &[a])?;
    Ok(())
}
