//! Pressure-map comfort scoring on the torso template.
//!
//! Two participants mark areas of felt pressure for each suit version;
//! region scores are averaged per version and compared.
//!
//! Run with `cargo run --example comfort_scoring`.

use exobench::comfort::{
    aggregate_group, compare_maps, score_all, ComfortSubmission, Intensity, PressureMark, Region, TorsoTemplate,
};
use exobench::session::ExoVersion;

/// Marks the first `n` cells of a region.
fn mark(t: &TorsoTemplate, region: Region, n: usize, intensity: Intensity) -> PressureMark {
    PressureMark { cells: t.mask(region).iter().copied().take(n).collect(), intensity }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let t = TorsoTemplate::canonical();
    println!("template {}: {}x{} cells", t.version, t.width, t.height);
    for r in Region::ALL {
        println!("  {:<10} {:>6} cells", r.name(), t.mask(r).len());
    }

    let subs = [
        ComfortSubmission {
            participant: "S01".into(),
            version: ExoVersion::V1,
            marks: vec![mark(&t, Region::Armpit, 900, Intensity::Uncomfortable), mark(&t, Region::UpperArm, 400, Intensity::Light)],
        },
        ComfortSubmission {
            participant: "S02".into(),
            version: ExoVersion::V1,
            marks: vec![mark(&t, Region::Armpit, 600, Intensity::Painful)],
        },
        ComfortSubmission {
            participant: "S01".into(),
            version: ExoVersion::V2,
            marks: vec![mark(&t, Region::UpperArm, 1200, Intensity::Uncomfortable)],
        },
        ComfortSubmission {
            participant: "S02".into(),
            version: ExoVersion::V2,
            marks: vec![mark(&t, Region::UpperArm, 800, Intensity::Light), mark(&t, Region::Armpit, 200, Intensity::Light)],
        },
    ];
    let mut v1 = Vec::new();
    let mut v2 = Vec::new();
    for s in &subs {
        s.validate(&t)?;
        let scores = score_all(&s.marks, &t)?;
        match s.version {
            ExoVersion::V1 => v1.push(scores),
            ExoVersion::V2 => v2.push(scores),
        }
    }
    let (g1, g2) = (aggregate_group(&v1)?, aggregate_group(&v2)?);
    println!();
    println!("{:<10} {:>8} {:>8} {:>10}", "region", "v1", "v2", "change %");
    for c in compare_maps(&g1, &g2) {
        let rel = c.rel_change_pct.map_or("-".to_string(), |v| format!("{v:+.1}"));
        println!("{:<10} {:>8.4} {:>8.4} {:>10}", c.region.name(), c.v1_mean, c.v2_mean, rel);
    }
    Ok(())
}
