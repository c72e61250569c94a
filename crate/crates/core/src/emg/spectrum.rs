//! Epoch-wise median frequency.
//!
//! Each epoch is covered by Hann-tapered sub-windows hopped at a fixed
//! interval; their one-sided periodograms are averaged and the median
//! frequency is the lowest bin whose cumulative power reaches half the total.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::{ActivationWindow, EmgError};

/// Relative slack when comparing cumulative power against half the total,
/// so that an exact analytic tie is not decided by rounding noise.
const HALF_POWER_RTOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumConfig {
    /// s
    pub epoch: f64,
    /// s
    pub subwindow: f64,
    /// s (4 s windows at 1 s hop = 75 % overlap)
    pub hop: f64,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        SpectrumConfig { epoch: 5.0, subwindow: 4.0, hop: 1.0 }
    }
}

/// Median frequency per epoch, before outlier correction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdfSeries {
    /// Epoch midpoints relative to the window start, s.
    pub epoch_times: Vec<f64>,
    pub mdf_hz: Vec<f64>,
}

/// Periodic Hann window of length `n`.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).collect()
}

/// Reusable one-sided periodogram estimator for a fixed segment length.
pub struct Periodogram {
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
    buf: Vec<Complex<f64>>,
}

impl Periodogram {
    pub fn new(n: usize) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(n);
        Periodogram { fft, window: hann(n), buf: vec![Complex::default(); n] }
    }

    pub fn len(&self) -> usize {
        self.window.len()
    }

    pub fn is_empty(&self) -> bool {
        self.window.is_empty()
    }

    /// Adds the one-sided power of `x` (length `len()`) into `acc` (length `len()/2 + 1`).
    pub fn accumulate(&mut self, x: &[f64], acc: &mut [f64]) {
        let n = self.window.len();
        debug_assert_eq!(x.len(), n);
        for ((b, &v), &w) in self.buf.iter_mut().zip(x).zip(&self.window) {
            *b = Complex::new(v * w, 0.0);
        }
        self.fft.process(&mut self.buf);
        let half = n / 2;
        for (k, a) in acc.iter_mut().enumerate().take(half + 1) {
            let p = self.buf[k].norm_sqr();
            let interior = k != 0 && !(n % 2 == 0 && k == half);
            *a += if interior { 2.0 * p } else { p };
        }
    }
}

/// Lowest frequency at which cumulative power reaches half the total.
pub fn median_frequency(power: &[f64], bin_hz: f64) -> Result<f64, EmgError> {
    let total: f64 = power.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(EmgError::ZeroPower);
    }
    let half = 0.5 * total * (1.0 - HALF_POWER_RTOL);
    let mut cum = 0.0;
    for (k, p) in power.iter().enumerate() {
        cum += p;
        if cum >= half {
            return Ok(k as f64 * bin_hz);
        }
    }
    Ok((power.len() - 1) as f64 * bin_hz)
}

/// MDF for each whole epoch inside `window` of the filtered signal.
pub fn mdf_series(
    filtered: &[f64],
    fs: f64,
    window: ActivationWindow,
    cfg: SpectrumConfig,
) -> Result<MdfSeries, EmgError> {
    if window.duration < cfg.epoch {
        return Err(EmgError::SignalTooShort {
            needed_s: cfg.epoch,
            got_s: window.duration,
        });
    }
    let start = (window.offset * fs).round() as usize;
    let len = (window.duration * fs).round() as usize;
    if start + len > filtered.len() {
        return Err(EmgError::SignalTooShort {
            needed_s: window.offset + window.duration,
            got_s: filtered.len() as f64 / fs,
        });
    }
    let seg = &filtered[start..start + len];
    let epoch_n = (cfg.epoch * fs).round() as usize;
    let sub_n = (cfg.subwindow * fs).round() as usize;
    let hop_n = (cfg.hop * fs).round().max(1.0) as usize;
    if sub_n == 0 || sub_n > epoch_n {
        return Err(EmgError::InvalidFilter(format!(
            "sub-window {} s must lie in (0, epoch {} s]",
            cfg.subwindow, cfg.epoch
        )));
    }
    let per_epoch = (epoch_n - sub_n) / hop_n + 1;
    let n_epochs = len / epoch_n;
    let bin_hz = fs / sub_n as f64;
    let mut pg = Periodogram::new(sub_n);
    let mut acc = vec![0.0; sub_n / 2 + 1];
    let mut out = MdfSeries { epoch_times: Vec::with_capacity(n_epochs), mdf_hz: Vec::with_capacity(n_epochs) };
    for e in 0..n_epochs {
        acc.iter_mut().for_each(|a| *a = 0.0);
        let e0 = e * epoch_n;
        for w in 0..per_epoch {
            let s = e0 + w * hop_n;
            pg.accumulate(&seg[s..s + sub_n], &mut acc);
        }
        out.epoch_times.push((e as f64 + 0.5) * cfg.epoch);
        out.mdf_hz.push(median_frequency(&acc, bin_hz)?);
    }
    Ok(out)
}
