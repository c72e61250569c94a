//! Digital IIR filters as cascaded second-order sections.
//!
//! Butterworth sections come from the bilinear transform with frequency
//! prewarping, so the −3 dB point lands exactly on the requested cutoff.
//! `filtfilt` runs the cascade forward and backward with odd-extension
//! padding and steady-state initial conditions, which gives zero phase and
//! squared magnitude response.

use std::f64::consts::PI;

use super::EmgError;

/// Normalized biquad (`a0 = 1`), transposed direct form II.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    fn from_raw(b: [f64; 3], a: [f64; 3]) -> Self {
        Biquad { b: [b[0] / a[0], b[1] / a[0], b[2] / a[0]], a: [a[1] / a[0], a[2] / a[0]] }
    }

    /// DC gain.
    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1])
    }

    /// State that makes the section's output constant for a constant unit input.
    fn steady_state(&self) -> [f64; 2] {
        let g = self.dc_gain();
        let z2 = self.b[2] - self.a[1] * g;
        let z1 = self.b[1] - self.a[0] * g + z2;
        [z1, z2]
    }

    /// Complex response at normalized angular frequency `w` (rad/sample).
    fn response(&self, w: f64) -> (f64, f64) {
        let (c1, s1) = (w.cos(), -w.sin());
        let (c2, s2) = ((2.0 * w).cos(), -(2.0 * w).sin());
        let num = (self.b[0] + self.b[1] * c1 + self.b[2] * c2, self.b[1] * s1 + self.b[2] * s2);
        let den = (1.0 + self.a[0] * c1 + self.a[1] * c2, self.a[0] * s1 + self.a[1] * s2);
        let d = den.0 * den.0 + den.1 * den.1;
        ((num.0 * den.0 + num.1 * den.1) / d, (num.1 * den.0 - num.0 * den.1) / d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Low,
    High,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Sos {
    pub sections: Vec<Biquad>,
}

fn check_freq(f: f64, fs: f64) -> Result<(), EmgError> {
    if !(f > 0.0 && f < fs / 2.0) {
        return Err(EmgError::InvalidFilter(format!("frequency {f} Hz outside (0, {})", fs / 2.0)));
    }
    Ok(())
}

impl Sos {
    pub fn butter_lowpass(order: usize, fc: f64, fs: f64) -> Result<Sos, EmgError> {
        Self::butter(order, fc, fs, Kind::Low)
    }

    pub fn butter_highpass(order: usize, fc: f64, fs: f64) -> Result<Sos, EmgError> {
        Self::butter(order, fc, fs, Kind::High)
    }

    /// Band-pass as a high-pass at `lo` cascaded with a low-pass at `hi`,
    /// each of the given order.
    pub fn butter_bandpass(order: usize, lo: f64, hi: f64, fs: f64) -> Result<Sos, EmgError> {
        if !(lo < hi) {
            return Err(EmgError::InvalidFilter(format!("band edges {lo} >= {hi}")));
        }
        Ok(Self::butter_highpass(order, lo, fs)?.cascade(Self::butter_lowpass(order, hi, fs)?))
    }

    fn butter(order: usize, fc: f64, fs: f64, kind: Kind) -> Result<Sos, EmgError> {
        if order == 0 {
            return Err(EmgError::InvalidFilter("order must be >= 1".into()));
        }
        check_freq(fc, fs)?;
        let w0 = 2.0 * PI * fc / fs;
        let (sw, cw) = w0.sin_cos();
        let mut sections = Vec::new();
        for k in 1..=order / 2 {
            let theta = (order + 1 - 2 * k) as f64 * PI / (2 * order) as f64;
            let q = 1.0 / (2.0 * theta.cos());
            let alpha = sw / (2.0 * q);
            let a = [1.0 + alpha, -2.0 * cw, 1.0 - alpha];
            let b = match kind {
                Kind::Low => [(1.0 - cw) / 2.0, 1.0 - cw, (1.0 - cw) / 2.0],
                Kind::High => [(1.0 + cw) / 2.0, -(1.0 + cw), (1.0 + cw) / 2.0],
            };
            sections.push(Biquad::from_raw(b, a));
        }
        if order % 2 == 1 {
            let k = (w0 / 2.0).tan();
            let a1 = (k - 1.0) / (k + 1.0);
            let b = match kind {
                Kind::Low => [k / (1.0 + k), k / (1.0 + k), 0.0],
                Kind::High => [1.0 / (1.0 + k), -1.0 / (1.0 + k), 0.0],
            };
            sections.push(Biquad { b, a: [a1, 0.0] });
        }
        Ok(Sos { sections })
    }

    /// Second-order notch at `f0` with quality factor `q`.
    pub fn notch(f0: f64, q: f64, fs: f64) -> Result<Sos, EmgError> {
        check_freq(f0, fs)?;
        if !(q > 0.0) {
            return Err(EmgError::InvalidFilter(format!("notch Q must be > 0, got {q}")));
        }
        let w0 = 2.0 * PI * f0 / fs;
        let (sw, cw) = w0.sin_cos();
        let alpha = sw / (2.0 * q);
        Ok(Sos {
            sections: vec![Biquad::from_raw(
                [1.0, -2.0 * cw, 1.0],
                [1.0 + alpha, -2.0 * cw, 1.0 - alpha],
            )],
        })
    }

    pub fn cascade(mut self, other: Sos) -> Sos {
        self.sections.extend(other.sections);
        self
    }

    /// Magnitude of the single-pass response at `f` Hz.
    pub fn gain(&self, f: f64, fs: f64) -> f64 {
        let w = 2.0 * PI * f / fs;
        self.sections
            .iter()
            .map(|s| {
                let (re, im) = s.response(w);
                re.hypot(im)
            })
            .product()
    }

    /// Magnitude of the forward-backward response (the single-pass gain squared).
    pub fn zero_phase_gain(&self, f: f64, fs: f64) -> f64 {
        self.gain(f, fs).powi(2)
    }

    fn run(&self, x: &mut [f64], init: Option<f64>) {
        let mut scale = init.unwrap_or(0.0);
        for s in &self.sections {
            let zi = s.steady_state();
            let (mut z1, mut z2) = (zi[0] * scale, zi[1] * scale);
            for v in x.iter_mut() {
                let xin = *v;
                let y = s.b[0] * xin + z1;
                z1 = s.b[1] * xin - s.a[0] * y + z2;
                z2 = s.b[2] * xin - s.a[1] * y;
                *v = y;
            }
            scale *= s.dc_gain();
        }
    }

    /// Causal single pass from rest.
    pub fn filter(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        self.run(&mut y, None);
        y
    }

    /// Zero-phase forward-backward filtering.
    pub fn filtfilt(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        if n == 0 {
            return Vec::new();
        }
        let padlen = (3 * (2 * self.sections.len() + 1)).min(n - 1);
        let mut ext = Vec::with_capacity(n + 2 * padlen);
        let (first, last) = (x[0], x[n - 1]);
        ext.extend((1..=padlen).rev().map(|i| 2.0 * first - x[i]));
        ext.extend_from_slice(x);
        ext.extend((1..=padlen).map(|i| 2.0 * last - x[n - 1 - i]));

        let x0 = ext[0];
        self.run(&mut ext, Some(x0));
        ext.reverse();
        let y0 = ext[0];
        self.run(&mut ext, Some(y0));
        ext.reverse();
        ext.drain(..padlen);
        ext.truncate(n);
        ext
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Bilinear Butterworth magnitude from the prewarped analog prototype.
    fn analog_lp(f: f64, fc: f64, fs: f64, n: i32) -> f64 {
        let r = (PI * f / fs).tan() / (PI * fc / fs).tan();
        1.0 / (1.0 + r.powi(2 * n)).sqrt()
    }

    fn analog_hp(f: f64, fc: f64, fs: f64, n: i32) -> f64 {
        let r = (PI * fc / fs).tan() / (PI * f / fs).tan();
        1.0 / (1.0 + r.powi(2 * n)).sqrt()
    }

    #[test]
    fn lowpass_matches_prototype() {
        let fs = 2000.0;
        let sos = Sos::butter_lowpass(4, 10.0, fs).unwrap();
        for f in [1.0, 5.0, 10.0, 20.0, 100.0, 700.0] {
            assert!((sos.gain(f, fs) - analog_lp(f, 10.0, fs, 4)).abs() < 1e-9, "f={f}");
        }
        assert!((sos.gain(10.0, fs) - 0.5f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn odd_order_matches_prototype() {
        let fs = 1000.0;
        let sos = Sos::butter_lowpass(3, 50.0, fs).unwrap();
        for f in [10.0, 50.0, 200.0] {
            assert!((sos.gain(f, fs) - analog_lp(f, 50.0, fs, 3)).abs() < 1e-9);
        }
        let hp = Sos::butter_highpass(3, 50.0, fs).unwrap();
        for f in [10.0, 50.0, 200.0] {
            assert!((hp.gain(f, fs) - analog_hp(f, 50.0, fs, 3)).abs() < 1e-9, "f={f}");
        }
        assert!((hp.gain(50.0, fs) - 0.5f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn notch_nulls_center() {
        let sos = Sos::notch(50.0, 30.0, 2000.0).unwrap();
        assert!(sos.gain(50.0, 2000.0) < 1e-9);
        assert!((sos.gain(100.0, 2000.0) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn filtfilt_preserves_constants_through_lowpass() {
        let sos = Sos::butter_lowpass(4, 10.0, 2000.0).unwrap();
        let y = sos.filtfilt(&vec![3.0; 4000]);
        assert!(y.iter().all(|v| (v - 3.0).abs() < 1e-9));
    }

    #[test]
    fn filtfilt_is_zero_phase() {
        let fs = 2000.0;
        let sos = Sos::butter_lowpass(4, 40.0, fs).unwrap();
        let x: Vec<f64> = (0..8000).map(|i| (2.0 * PI * 5.0 * i as f64 / fs).sin()).collect();
        let y = sos.filtfilt(&x);
        let g = sos.zero_phase_gain(5.0, fs);
        for i in 2000..6000 {
            assert!((y[i] - g * x[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn invalid_designs() {
        assert!(Sos::butter_lowpass(4, 1500.0, 2000.0).is_err());
        assert!(Sos::butter_lowpass(0, 10.0, 2000.0).is_err());
        assert!(Sos::butter_bandpass(4, 400.0, 10.0, 2000.0).is_err());
        assert!(Sos::notch(50.0, 0.0, 2000.0).is_err());
    }
}
