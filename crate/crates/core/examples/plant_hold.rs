//! Static hold at 90° with and without actuator support.
//!
//! Run with `cargo run --example plant_hold`.

use exobench::plant::{simulate_human_hold, HumanEffortModel, PlantParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let params = PlantParams::default().with_load(1.6);
    let model = HumanEffortModel::default();
    for assist in [false, true] {
        let r = simulate_human_hold(90.0, assist, model, &params, 600.0)?;
        let n = r.muscle_torque_series.len();
        let mean_tau = r.muscle_torque_series.iter().sum::<f64>() / n as f64;
        let final_cap = r.capacity_series.last().copied().unwrap_or(1.0);
        println!(
            "assist={:<5} endurance={:>6.1} s  mean muscle torque={:>5.2} N·m  final capacity={:.2}",
            assist, r.endurance, mean_tau, final_cap
        );
    }
    Ok(())
}
