//! Joint angles from the three IMU orientations.
//!
//! Builds torso, upper-arm and forearm quaternions for a few postures and
//! recovers elevation, azimuth, elbow flexion and torso torsion.
//!
//! Run with `cargo run --example joint_angles`.

use exobench::kinematics::{angle_series, Side};
use exobench::session::synth::pose_quaternions;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let postures = [
        // (elevation, azimuth, elbow, torso yaw)
        (10.0, 0.0, 5.0, 0.0),
        (90.0, 0.0, 5.0, 0.0),
        (90.0, 90.0, 10.0, 0.0),
        (120.0, 45.0, 60.0, 15.0),
        (5.0, 70.0, 90.0, -10.0),
    ];
    let samples: Vec<_> = postures
        .iter()
        .enumerate()
        .map(|(i, &(sel, saz, efe, yaw))| (i as f64, pose_quaternions(sel, saz, efe, yaw, Side::Right)))
        .collect();
    let angles = angle_series(samples, Side::Right)?;
    println!("{:>6} {:>8} {:>8} {:>8} {:>8}", "t", "sEL", "sAZ", "eFE", "tTO");
    for a in angles {
        let saz = a.saz.map_or("   undef".to_string(), |v| format!("{:>8.2}", v + 0.0));
        println!("{:>6.1} {:>8.2} {saz} {:>8.2} {:>8.2}", a.t_s, a.sel, a.efe, a.tto);
    }
    println!("azimuth is undefined below 15° of elevation");
    Ok(())
}
