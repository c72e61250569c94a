//! Fatigue trend of a synthetic deltoid recording.
//!
//! The generator's spectral centre falls from 100 Hz to 80 Hz in steps of
//! one 5 s epoch. The pipeline band-passes and notches the signal, takes
//! per-epoch median frequencies, removes outliers and fits the trend.
//!
//! Run with `cargo run --example emg_fatigue`.

use exobench::emg::{hampel_correct, mdf_series, mdf_trend, preprocess, ActivationWindow, EmgConfig, MdfSeries, EMG_FS};
use exobench::session::synth::EmgChannelSynth;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let epochs = 12;
    let epoch_s = 5.0;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut synth = EmgChannelSynth::new(EMG_FS, 60.0);
    let n_epoch = (epoch_s * EMG_FS) as usize;
    let mut x = Vec::with_capacity(epochs * n_epoch);
    for e in 0..epochs {
        let centre = 100.0 - 20.0 * e as f64 / (epochs - 1) as f64;
        for i in 0..n_epoch {
            let t = (e * n_epoch + i) as f64 / EMG_FS;
            let mains = 0.05 * (2.0 * std::f64::consts::PI * 50.0 * t).sin();
            x.push(synth.sample(&mut rng, centre, 0.4) + mains);
        }
    }

    let cfg = EmgConfig::default();
    let filtered = preprocess(&x, EMG_FS, &cfg)?;
    let window = ActivationWindow { duration: epochs as f64 * epoch_s, offset: 0.0 };
    let raw = mdf_series(&filtered, EMG_FS, window, cfg.spectrum)?;
    let cleaned = hampel_correct(&raw.mdf_hz, cfg.hampel_half_window, cfg.hampel_sigma);
    let series = MdfSeries { epoch_times: raw.epoch_times.clone(), mdf_hz: cleaned.values };
    let trend = mdf_trend(&series)?;

    println!("{:>8} {:>10}", "t_mid_s", "MDF_Hz");
    for (t, f) in series.epoch_times.iter().zip(&series.mdf_hz) {
        println!("{t:>8.1} {f:>10.2}");
    }
    println!("MDF change first to last epoch: {:+.2} %", trend.mdf_delta_pct);
    println!("slope: {:+.3} %/s", trend.slope);
    Ok(())
}
