//! Simulate a reduced study with six virtual participants and analyze it.
//!
//! Run with `cargo run --release --example synthetic_session`.

use std::time::Instant;

use exobench::session::analysis::{analyze_session, AnalysisOptions};
use exobench::session::{simulate_session, Config};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = Config::from_toml_str(include_str!("../configs/quick.toml"))?;
    let dir = tempfile::tempdir()?;
    let t0 = Instant::now();
    let sim = simulate_session(&cfg, 11, dir.path())?;
    println!("simulated {} participants in {:.1} s", sim.truth.len(), t0.elapsed().as_secs_f64());

    let t1 = Instant::now();
    let opts = AnalysisOptions { write_derived: false, ..AnalysisOptions::default() };
    let report = analyze_session(&sim.store, &opts)?;
    println!("analyzed in {:.1} s", t1.elapsed().as_secs_f64());

    for name in [
        "static_hold.endurance_s.abduction",
        "static_hold.endurance_s.flexion",
        "static_hold.pct_mvc.abduction.MD",
        "static_hold.pct_mvc.flexion.AD",
        "transparency.rom_deg.horizontal_adduction",
        "pick_place.blocks",
    ] {
        let Some(o) = report.outcome(name) else { continue };
        println!();
        println!("{name}");
        for s in &o.summaries {
            println!("  {:>7}: median {:>8.2}", s.condition, s.descriptives.median);
        }
        for c in &o.comparisons {
            println!(
                "  {} - {}: HL {:+.2} [{:+.2}, {:+.2}], p = {:.4}, p_fdr = {:.4}",
                c.condition, c.reference, c.hl_estimate, c.ci_low, c.ci_high, c.p_raw, c.p_fdr
            );
        }
    }
    Ok(())
}
