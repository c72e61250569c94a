//! Seeded randomization of the protocol for a small cohort.
//!
//! Run with `cargo run --example randomized_plan`.

use exobench::session::config::ProtocolConfig;
use exobench::session::{make_plan, required_trials};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let protocol = ProtocolConfig::default();
    let ids: Vec<String> = (1..=4).map(|i| format!("S{i:02}")).collect();
    let plan = make_plan(2024, &ids, &protocol)?;
    println!("{} trials per participant", required_trials(&protocol).len());
    for p in &plan.participants {
        println!();
        println!("{}: versions {} then {}", p.participant, p.version_order[0].name(), p.version_order[1].name());
        for (i, t) in p.trials.iter().enumerate() {
            println!("  {:>2}. {:<48} rest {:>3} s", i + 1, t.id(), t.rest_s);
        }
    }
    // the same seed reproduces the same plan
    assert_eq!(plan, make_plan(2024, &ids, &protocol)?);
    Ok(())
}
