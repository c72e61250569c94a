//! Hampel identifier: sliding median/MAD outlier replacement.

/// Consistency constant relating MAD to the standard deviation of a normal.
pub const MAD_SCALE: f64 = 1.4826;

#[derive(Debug, Clone, PartialEq)]
pub struct HampelOutput {
    pub values: Vec<f64>,
    /// Indices that were replaced by their window median.
    pub replaced: Vec<usize>,
}

pub(crate) fn median_of(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Replaces each point whose distance from the median of its window
/// (`half_window` neighbours per side, truncated at the ends) exceeds
/// `n_sigma · 1.4826 · MAD`. When MAD is zero any deviation counts.
/// Medians are always taken over the uncorrected input.
pub fn hampel_correct(series: &[f64], half_window: usize, n_sigma: f64) -> HampelOutput {
    let n = series.len();
    let mut values = series.to_vec();
    let mut replaced = Vec::new();
    if n < 3 {
        return HampelOutput { values, replaced };
    }
    let mut buf = Vec::with_capacity(2 * half_window + 1);
    for i in 0..n {
        let lo = i.saturating_sub(half_window);
        let hi = (i + half_window).min(n - 1);
        buf.clear();
        buf.extend_from_slice(&series[lo..=hi]);
        let med = median_of(&mut buf);
        for v in buf.iter_mut() {
            *v = (*v - med).abs();
        }
        let mad = median_of(&mut buf);
        let dev = (series[i] - med).abs();
        let outlier = if mad == 0.0 { dev > 0.0 } else { dev > n_sigma * MAD_SCALE * mad };
        if outlier {
            values[i] = med;
            replaced.push(i);
        }
    }
    HampelOutput { values, replaced }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spike_on_constant() {
        let mut s = vec![100.0; 30];
        s[12] = 500.0;
        let out = hampel_correct(&s, 25, 3.0);
        assert_eq!(out.values, vec![100.0; 30]);
        assert_eq!(out.replaced, vec![12]);
    }

    #[test]
    fn gentle_ramp_unchanged() {
        let s: Vec<f64> = (0..60).map(|i| 100.0 - 0.3 * i as f64).collect();
        // oracle: per-window threshold check computed directly
        for i in 0..s.len() {
            let lo = i.saturating_sub(25);
            let hi = (i + 25).min(s.len() - 1);
            let mut w = s[lo..=hi].to_vec();
            w.sort_by(f64::total_cmp);
            let m = if w.len() % 2 == 1 { w[w.len() / 2] } else { (w[w.len() / 2 - 1] + w[w.len() / 2]) / 2.0 };
            let mut d: Vec<f64> = w.iter().map(|v| (v - m).abs()).collect();
            d.sort_by(f64::total_cmp);
            let mad = if d.len() % 2 == 1 { d[d.len() / 2] } else { (d[d.len() / 2 - 1] + d[d.len() / 2]) / 2.0 };
            assert!((s[i] - m).abs() <= 3.0 * MAD_SCALE * mad);
        }
        let out = hampel_correct(&s, 25, 3.0);
        assert_eq!(out.values, s);
        assert!(out.replaced.is_empty());
    }

    #[test]
    fn short_series_defined_everywhere() {
        let s = [1.0, 2.0, 1.5, 40.0, 1.2, 1.1, 0.9, 1.3, 1.0, 1.4];
        let out = hampel_correct(&s, 25, 3.0);
        assert_eq!(out.values.len(), 10);
        assert!(out.values.iter().all(|v| v.is_finite()));
        assert_eq!(out.replaced, vec![3]);
    }

    #[test]
    fn tiny_series_passthrough() {
        let out = hampel_correct(&[1.0, 9.0], 25, 3.0);
        assert_eq!(out.values, vec![1.0, 9.0]);
    }
}
