//! Hysteresis pressure control of the actuator chamber, then a latched
//! overpressure fault.
//!
//! Run with `cargo run --example bang_bang_loop`.

use exobench::controller::{HysteresisController, PressureRegulator, SafetyLimits, ValveCommand, CONTROL_RATE_HZ};
use exobench::plant::{step_pneumatics, ActuatorState, PlantParams, CONTROL_DECIMATION, PHYSICS_DT};

fn run(reg: &mut PressureRegulator, params: &PlantParams, seconds: f64) -> Result<Vec<f64>, Box<dyn std::error::Error>> {
    let mut act = ActuatorState::default();
    let mut cmd = ValveCommand::CLOSED;
    let mut trace = Vec::new();
    let steps = (seconds / PHYSICS_DT).round() as usize;
    for k in 0..steps {
        if k % CONTROL_DECIMATION == 0 {
            cmd = reg.tick(act.pressure)?;
            trace.push(act.pressure);
        }
        act = step_pneumatics(act, cmd, PHYSICS_DT, params)?;
    }
    Ok(trace)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let params = PlantParams::default();
    let ctrl = HysteresisController::new(50.0, 2.0)?;
    let mut reg = PressureRegulator::new(ctrl, SafetyLimits::default());
    let trace = run(&mut reg, &params, 4.0)?;

    let settled = &trace[(2.0 * CONTROL_RATE_HZ) as usize..];
    let lo = settled.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = settled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let rise = trace.iter().position(|&p| p >= 48.0).map(|i| i as f64 / CONTROL_RATE_HZ);
    println!("setpoint 50 kPa, band ±2 kPa");
    println!("  time to 48 kPa: {:.3} s", rise.unwrap_or(f64::NAN));
    println!("  settled range:  {lo:.2} .. {hi:.2} kPa");

    // a limit below the setpoint trips the supervisor, which then holds the
    // exhaust open until reset
    let limits = SafetyLimits { p_max: 30.0, margin: 3.0 };
    let mut reg = PressureRegulator::new(HysteresisController::new(50.0, 2.0)?, limits);
    let trace = run(&mut reg, &params, 3.0)?;
    let peak = trace.iter().copied().fold(0.0, f64::max);
    println!("limit 30+3 kPa: fault = {}", reg.fault.map_or("none".into(), |f| f.to_string()));
    println!("  peak {peak:.2} kPa, final {:.2} kPa", trace.last().unwrap());
    Ok(())
}
