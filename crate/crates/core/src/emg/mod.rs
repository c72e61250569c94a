//! Offline surface EMG chain for the three deltoid heads.
//!
//! `preprocess` → `envelope` → `normalize_emg` → `median_activation` covers
//! amplitude; `mdf_series` → `hampel_correct` → `mdf_trend` covers fatigue.

pub mod filter;
pub mod hampel;
pub mod spectrum;

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

pub use filter::{Biquad, Sos};
pub use hampel::{hampel_correct, HampelOutput};
pub use spectrum::{mdf_series, median_frequency, MdfSeries, SpectrumConfig};

/// Nominal acquisition rate, Hz.
pub const EMG_FS: f64 = 2000.0;

#[derive(Debug, thiserror::Error)]
pub enum EmgError {
    #[error("invalid filter design: {0}")]
    InvalidFilter(String),
    #[error("signal too short: need {needed_s} s, have {got_s} s")]
    SignalTooShort { needed_s: f64, got_s: f64 },
    #[error("MVC needs exactly 3 nonempty trials, got {0}")]
    WrongTrialCount(usize),
    #[error("MVC reference must be > 0, got {0}")]
    ZeroMvc(f64),
    #[error("no task durations given")]
    EmptySet,
    #[error("window [{start_s}, {end_s}] s exceeds signal length {len_s} s")]
    WindowOutOfRange { start_s: f64, end_s: f64, len_s: f64 },
    #[error("need at least 2 epochs, got {0}")]
    TooFewEpochs(usize),
    #[error("spectrum has no power")]
    ZeroPower,
    #[error("non-finite or non-uniform sample data: {0}")]
    BadSamples(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Muscle {
    AD,
    MD,
    PD,
}

impl Muscle {
    pub const ALL: [Muscle; 3] = [Muscle::AD, Muscle::MD, Muscle::PD];

    pub fn name(self) -> &'static str {
        match self {
            Muscle::AD => "AD",
            Muscle::MD => "MD",
            Muscle::PD => "PD",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Three-channel recording in mV.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RawEmg {
    pub fs: f64,
    /// Indexed by `Muscle::index`.
    pub channels: [Vec<f64>; 3],
}

impl RawEmg {
    pub fn new(fs: f64, ad: Vec<f64>, md: Vec<f64>, pd: Vec<f64>) -> Result<Self, EmgError> {
        let r = RawEmg { fs, channels: [ad, md, pd] };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<(), EmgError> {
        if !(self.fs > 0.0) {
            return Err(EmgError::BadSamples(format!("fs = {}", self.fs)));
        }
        let n = self.channels[0].len();
        if self.channels.iter().any(|c| c.len() != n) {
            return Err(EmgError::BadSamples("channel lengths differ".into()));
        }
        if self.channels.iter().flatten().any(|v| !v.is_finite()) {
            return Err(EmgError::BadSamples("non-finite sample".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn duration(&self) -> f64 {
        self.len() as f64 / self.fs
    }

    pub fn channel(&self, m: Muscle) -> &[f64] {
        &self.channels[m.index()]
    }

    /// Reads `t_s,AD_mV,MD_mV,PD_mV`; the rate is inferred from the time column.
    pub fn read_csv<R: Read>(r: R) -> Result<Self, EmgError> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut t = Vec::new();
        let mut ch: [Vec<f64>; 3] = Default::default();
        for rec in rdr.deserialize::<(f64, f64, f64, f64)>() {
            let (ts, a, m, p) = rec?;
            t.push(ts);
            ch[0].push(a);
            ch[1].push(m);
            ch[2].push(p);
        }
        if t.len() < 2 {
            return Err(EmgError::BadSamples("need at least two rows".into()));
        }
        let dt = (t[t.len() - 1] - t[0]) / (t.len() - 1) as f64;
        if !(dt > 0.0) || t.windows(2).any(|w| ((w[1] - w[0]) - dt).abs() > 0.01 * dt) {
            return Err(EmgError::BadSamples("time column is not uniformly sampled".into()));
        }
        let [ad, md, pd] = ch;
        RawEmg::new(1.0 / dt, ad, md, pd)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), EmgError> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["t_s", "AD_mV", "MD_mV", "PD_mV"])?;
        for i in 0..self.len() {
            wr.write_record(&[
                format!("{:.6}", i as f64 / self.fs),
                self.channels[0][i].to_string(),
                self.channels[1][i].to_string(),
                self.channels[2][i].to_string(),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmgConfig {
    pub band_order: usize,
    pub band_lo_hz: f64,
    pub band_hi_hz: f64,
    pub notch_hz: f64,
    pub notch_q: f64,
    pub envelope_order: usize,
    pub envelope_hz: f64,
    pub spectrum: SpectrumConfig,
    pub hampel_half_window: usize,
    pub hampel_sigma: f64,
}

impl Default for EmgConfig {
    fn default() -> Self {
        EmgConfig {
            band_order: 4,
            band_lo_hz: 10.0,
            band_hi_hz: 400.0,
            notch_hz: 50.0,
            notch_q: 30.0,
            envelope_order: 4,
            envelope_hz: 10.0,
            spectrum: SpectrumConfig::default(),
            hampel_half_window: 25,
            hampel_sigma: 3.0,
        }
    }
}

// ----------------------------------------------------------------------------
// amplitude

/// Zero-phase band-pass followed by a zero-phase mains notch.
pub fn preprocess(x: &[f64], fs: f64, cfg: &EmgConfig) -> Result<Vec<f64>, EmgError> {
    let got_s = x.len() as f64 / fs;
    if got_s < 1.0 {
        return Err(EmgError::SignalTooShort { needed_s: 1.0, got_s });
    }
    let bp = Sos::butter_bandpass(cfg.band_order, cfg.band_lo_hz, cfg.band_hi_hz, fs)?;
    let notch = Sos::notch(cfg.notch_hz, cfg.notch_q, fs)?;
    Ok(notch.filtfilt(&bp.filtfilt(x)))
}

/// Full-wave rectification and zero-phase low-pass, clamped at zero.
pub fn envelope(filtered: &[f64], fs: f64, cfg: &EmgConfig) -> Result<Vec<f64>, EmgError> {
    let lp = Sos::butter_lowpass(cfg.envelope_order, cfg.envelope_hz, fs)?;
    let rect: Vec<f64> = filtered.iter().map(|v| v.abs()).collect();
    Ok(lp.filtfilt(&rect).into_iter().map(|v| v.max(0.0)).collect())
}

/// Mean of the per-trial maxima of three enveloped contractions.
pub fn compute_mvc(trials: &[&[f64]]) -> Result<f64, EmgError> {
    if trials.len() != 3 || trials.iter().any(|t| t.is_empty()) {
        return Err(EmgError::WrongTrialCount(trials.iter().filter(|t| !t.is_empty()).count()));
    }
    let sum: f64 = trials.iter().map(|t| t.iter().copied().fold(f64::NEG_INFINITY, f64::max)).sum();
    Ok(sum / 3.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MvcProfile {
    pub ad: f64,
    pub md: f64,
    pub pd: f64,
}

impl MvcProfile {
    pub fn get(&self, m: Muscle) -> f64 {
        match m {
            Muscle::AD => self.ad,
            Muscle::MD => self.md,
            Muscle::PD => self.pd,
        }
    }

    /// Runs the full amplitude chain on three raw MVC recordings.
    pub fn from_raw_trials(trials: &[RawEmg], cfg: &EmgConfig) -> Result<Self, EmgError> {
        if trials.len() != 3 {
            return Err(EmgError::WrongTrialCount(trials.len()));
        }
        let mut out = [0.0; 3];
        for m in Muscle::ALL {
            let envs = trials
                .iter()
                .map(|t| envelope(&preprocess(t.channel(m), t.fs, cfg)?, t.fs, cfg))
                .collect::<Result<Vec<_>, _>>()?;
            let refs: Vec<&[f64]> = envs.iter().map(|e| e.as_slice()).collect();
            out[m.index()] = compute_mvc(&refs)?;
        }
        Ok(MvcProfile { ad: out[0], md: out[1], pd: out[2] })
    }
}

pub fn normalize_emg(env: &[f64], mvc: f64) -> Result<Vec<f64>, EmgError> {
    if !(mvc > 0.0) {
        return Err(EmgError::ZeroMvc(mvc));
    }
    Ok(env.iter().map(|v| 100.0 * v / mvc).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActivationWindow {
    /// s
    pub duration: f64,
    /// s from task start
    pub offset: f64,
}

/// Shortest task duration across all conditions, anchored at task start.
pub fn activation_window(durations: &[f64]) -> Result<ActivationWindow, EmgError> {
    let d = durations.iter().copied().fold(f64::INFINITY, f64::min);
    if durations.is_empty() || !(d > 0.0) {
        return Err(EmgError::EmptySet);
    }
    Ok(ActivationWindow { duration: d, offset: 0.0 })
}

pub fn median_activation(norm_env: &[f64], fs: f64, w: ActivationWindow) -> Result<f64, EmgError> {
    let start = (w.offset * fs).round() as usize;
    let n = (w.duration * fs).round() as usize;
    if n == 0 || start + n > norm_env.len() {
        return Err(EmgError::WindowOutOfRange {
            start_s: w.offset,
            end_s: w.offset + w.duration,
            len_s: norm_env.len() as f64 / fs,
        });
    }
    let mut v = norm_env[start..start + n].to_vec();
    Ok(hampel::median_of(&mut v))
}

// ----------------------------------------------------------------------------
// fatigue

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdfTrend {
    pub normalized_pct: Vec<f64>,
    /// %/s
    pub slope: f64,
    pub mdf_delta_pct: f64,
}

fn median2(a: f64, b: f64) -> f64 {
    0.5 * (a + b)
}

/// Ordinary least-squares slope of `y` against `x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

pub fn mdf_trend(mdf: &MdfSeries) -> Result<MdfTrend, EmgError> {
    let m = &mdf.mdf_hz;
    if m.len() < 2 {
        return Err(EmgError::TooFewEpochs(m.len()));
    }
    let normalized_pct: Vec<f64> = m.iter().map(|v| 100.0 * v / m[0]).collect();
    let slope = ols_slope(&mdf.epoch_times, &normalized_pct);
    let k = m.len();
    let first = median2(m[0], m[1]);
    let last = median2(m[k - 2], m[k - 1]);
    Ok(MdfTrend { normalized_pct, slope, mdf_delta_pct: 100.0 * (last - first) / first })
}

// ----------------------------------------------------------------------------
// per-trial metrics

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelMetrics {
    pub channel: Muscle,
    pub median_activation_pct: f64,
    pub mdf_slope_pct_per_s: f64,
    pub mdf_delta_pct: f64,
    pub mdf: MdfSeries,
    /// Hampel-corrected MDF, Hz.
    pub mdf_corrected_hz: Vec<f64>,
    pub normalized_pct: Vec<f64>,
}

/// Amplitude and fatigue metrics for one trial.
///
/// When the window is shorter than one epoch the fatigue fields are NaN.
pub fn trial_metrics(
    raw: &RawEmg,
    mvc: &MvcProfile,
    window: ActivationWindow,
    cfg: &EmgConfig,
) -> Result<Vec<ChannelMetrics>, EmgError> {
    raw.validate()?;
    let mut out = Vec::with_capacity(3);
    for m in Muscle::ALL {
        let filt = preprocess(raw.channel(m), raw.fs, cfg)?;
        let env = envelope(&filt, raw.fs, cfg)?;
        let norm = normalize_emg(&env, mvc.get(m))?;
        let med = median_activation(&norm, raw.fs, window)?;
        let (mdf, corrected, trend) = if window.duration >= 2.0 * cfg.spectrum.epoch {
            let s = mdf_series(&filt, raw.fs, window, cfg.spectrum)?;
            let h = hampel_correct(&s.mdf_hz, cfg.hampel_half_window, cfg.hampel_sigma);
            let corrected = MdfSeries { epoch_times: s.epoch_times.clone(), mdf_hz: h.values.clone() };
            let trend = mdf_trend(&corrected)?;
            (s, h.values, Some(trend))
        } else {
            (MdfSeries { epoch_times: vec![], mdf_hz: vec![] }, vec![], None)
        };
        out.push(ChannelMetrics {
            channel: m,
            median_activation_pct: med,
            mdf_slope_pct_per_s: trend.as_ref().map_or(f64::NAN, |t| t.slope),
            mdf_delta_pct: trend.as_ref().map_or(f64::NAN, |t| t.mdf_delta_pct),
            normalized_pct: trend.map(|t| t.normalized_pct).unwrap_or_default(),
            mdf,
            mdf_corrected_hz: corrected,
        });
    }
    Ok(out)
}

pub fn write_metrics_csv<W: Write>(w: W, metrics: &[ChannelMetrics]) -> Result<(), EmgError> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["channel", "median_activation_pct", "mdf_slope_pct_per_s", "mdf_delta_pct"])?;
    for m in metrics {
        wr.write_record(&[
            m.channel.name().to_string(),
            format!("{:.6}", m.median_activation_pct),
            format!("{:.6}", m.mdf_slope_pct_per_s),
            format!("{:.6}", m.mdf_delta_pct),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn write_epoch_csv<W: Write>(w: W, metrics: &[ChannelMetrics]) -> Result<(), EmgError> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["channel", "epoch", "t_s", "mdf_hz", "mdf_corrected_hz", "normalized_pct"])?;
    for m in metrics {
        for (i, t) in m.mdf.epoch_times.iter().enumerate() {
            wr.write_record(&[
                m.channel.name().to_string(),
                i.to_string(),
                format!("{t:.3}"),
                format!("{:.4}", m.mdf.mdf_hz[i]),
                format!("{:.4}", m.mdf_corrected_hz[i]),
                format!("{:.4}", m.normalized_pct[i]),
            ])?;
        }
    }
    wr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sine(f: f64, secs: f64, amp: f64) -> Vec<f64> {
        (0..(secs * EMG_FS) as usize).map(|i| amp * (2.0 * PI * f * i as f64 / EMG_FS).sin()).collect()
    }

    fn rms(x: &[f64]) -> f64 {
        (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
    }

    fn cfg() -> EmgConfig {
        EmgConfig::default()
    }

    #[test]
    fn dc_is_removed() {
        let y = preprocess(&vec![2.0; 8000], EMG_FS, &cfg()).unwrap();
        assert!(rms(&y[2000..6000]) < 2e-3);
    }

    #[test]
    fn mains_is_notched_and_passband_is_flat() {
        let c = cfg();
        let bp = Sos::butter_bandpass(4, 10.0, 400.0, EMG_FS).unwrap();
        let notch = Sos::notch(50.0, 30.0, EMG_FS).unwrap();
        let predicted = |f: f64| bp.zero_phase_gain(f, EMG_FS) * notch.zero_phase_gain(f, EMG_FS);
        assert!(20.0 * predicted(50.0).log10() < -30.0);

        let x50 = sine(50.0, 6.0, 1.0);
        let y50 = preprocess(&x50, EMG_FS, &c).unwrap();
        let att = 20.0 * (rms(&y50[4000..8000]) / rms(&x50[4000..8000])).log10();
        assert!(att < -30.0, "{att} dB");

        let x100 = sine(100.0, 6.0, 1.0);
        let y100 = preprocess(&x100, EMG_FS, &c).unwrap();
        let g = rms(&y100[4000..8000]) / rms(&x100[4000..8000]);
        assert!((g - 1.0).abs() < 0.05, "{g}");
        assert!((g - predicted(100.0)).abs() < 1e-3);
    }

    #[test]
    fn short_input_rejected() {
        assert!(matches!(preprocess(&[0.0; 1999], EMG_FS, &cfg()), Err(EmgError::SignalTooShort { .. })));
    }

    #[test]
    fn envelope_of_sinusoid() {
        let a = 0.7;
        let env = envelope(&sine(100.0, 6.0, a), EMG_FS, &cfg()).unwrap();
        let mid = &env[4000..8000];
        for v in mid {
            assert!((v - 2.0 / PI * a).abs() < 0.05 * 2.0 / PI * a);
        }
        assert!(envelope(&[0.0; 4000], EMG_FS, &cfg()).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn envelope_scales_linearly() {
        let x: Vec<f64> = sine(80.0, 3.0, 1.0).iter().zip(sine(170.0, 3.0, 0.3)).map(|(a, b)| a + b).collect();
        let e1 = envelope(&x, EMG_FS, &cfg()).unwrap();
        let x3: Vec<f64> = x.iter().map(|v| 3.0 * v).collect();
        let e3 = envelope(&x3, EMG_FS, &cfg()).unwrap();
        for (a, b) in e1.iter().zip(&e3) {
            assert!((3.0 * a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn mvc_mean_of_maxima() {
        let (a, b, c) = (vec![0.2, 1.0], vec![1.2, 0.1], vec![0.8]);
        assert!((compute_mvc(&[&a, &b, &c]).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(compute_mvc(&[&a, &a, &a]).unwrap(), 1.0);
        assert!(matches!(compute_mvc(&[&a, &b, &[]]), Err(EmgError::WrongTrialCount(_))));
        assert!(matches!(compute_mvc(&[&a, &b]), Err(EmgError::WrongTrialCount(_))));
    }

    #[test]
    fn normalization() {
        let n = normalize_emg(&[0.4; 5], 2.0).unwrap();
        assert!(n.iter().all(|v| (v - 20.0).abs() < 1e-12));
        let n2 = normalize_emg(&[1.2; 5], 6.0).unwrap();
        assert_eq!(n, n2);
        assert!(matches!(normalize_emg(&[1.0], 0.0), Err(EmgError::ZeroMvc(_))));
    }

    #[test]
    fn window_is_minimum_duration() {
        assert_eq!(activation_window(&[60.0, 90.0, 55.0, 120.0]).unwrap().duration, 55.0);
        assert_eq!(activation_window(&[75.0]).unwrap(), ActivationWindow { duration: 75.0, offset: 0.0 });
        assert!(matches!(activation_window(&[]), Err(EmgError::EmptySet)));
    }

    #[test]
    fn median_activation_cases() {
        let fs = 100.0;
        let w = ActivationWindow { duration: 10.0, offset: 0.0 };
        assert_eq!(median_activation(&[10.0; 1000], fs, w).unwrap(), 10.0);
        let ramp: Vec<f64> = (0..1001).map(|i| 20.0 * i as f64 / 1000.0).collect();
        let m = median_activation(&ramp, fs, ActivationWindow { duration: 10.01, offset: 0.0 }).unwrap();
        assert!((m - 10.0).abs() < 1e-9);
        assert!(matches!(
            median_activation(&[1.0; 500], fs, w),
            Err(EmgError::WindowOutOfRange { .. })
        ));
    }

    #[test]
    fn trend_cases() {
        let times: Vec<f64> = (0..6).map(|i| 2.5 + 5.0 * i as f64).collect();
        let flat = MdfSeries { epoch_times: times.clone(), mdf_hz: vec![90.0; 6] };
        let t = mdf_trend(&flat).unwrap();
        assert_eq!(t.slope, 0.0);
        assert_eq!(t.mdf_delta_pct, 0.0);
        assert_eq!(t.normalized_pct[0], 100.0);

        let line = MdfSeries { epoch_times: times.clone(), mdf_hz: (0..6).map(|i| 100.0 - 2.0 * i as f64).collect() };
        assert!((mdf_trend(&line).unwrap().slope + 0.4).abs() < 1e-12);

        let d = MdfSeries { epoch_times: vec![0.0, 1.0, 2.0, 3.0], mdf_hz: vec![100.0, 100.0, 80.0, 70.0] };
        assert!((mdf_trend(&d).unwrap().mdf_delta_pct + 25.0).abs() < 1e-12);

        let one = MdfSeries { epoch_times: vec![0.0], mdf_hz: vec![1.0] };
        assert!(matches!(mdf_trend(&one), Err(EmgError::TooFewEpochs(1))));
    }

    #[test]
    fn csv_roundtrip() {
        let raw = RawEmg::new(2000.0, vec![0.1, 0.2, 0.3], vec![0.0; 3], vec![-0.1, 0.5, 1.0]).unwrap();
        let mut buf = Vec::new();
        raw.write_csv(&mut buf).unwrap();
        let back = RawEmg::read_csv(buf.as_slice()).unwrap();
        assert!((back.fs - 2000.0).abs() < 1e-6);
        assert_eq!(back.channels, raw.channels);
    }
}
