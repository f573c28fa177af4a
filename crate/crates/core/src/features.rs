//! Deterministic RR-interval and window features.
//!
//! Every function takes intervals in seconds. Insufficient data yields `None`,
//! never a numeric zero.

use serde::{Deserialize, Serialize};

use crate::signal::{derive_rr, detect_peaks, RrBand, RrSeries, SampleWindow};

pub const MIN_INTERVALS_HR: usize = 1;
pub const MIN_INTERVALS_SDNN: usize = 2;
pub const MIN_INTERVALS_RMSSD: usize = 3;
pub const MIN_INTERVALS_ENTROPY: usize = 3;
pub const MIN_INTERVALS_TPR: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub rr_band: RrBand,
    pub entropy_bins: usize,
    /// Fixed ΔRR histogram range in seconds; values outside land in the edge bins.
    pub entropy_range_s: (f64, f64),
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            rr_band: RrBand::default(),
            entropy_bins: 16,
            entropy_range_s: (-0.6, 0.6),
        }
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn heart_rate(rr: &[f64]) -> Option<f64> {
    (rr.len() >= MIN_INTERVALS_HR).then(|| 60.0 / mean(rr))
}

/// Computed on values shifted by the first element so a constant series
/// gives exactly zero.
fn population_sd(rr: &[f64]) -> f64 {
    let x0 = rr[0];
    let shifted: Vec<f64> = rr.iter().map(|x| x - x0).collect();
    let m = mean(&shifted);
    (shifted.iter().map(|d| (d - m) * (d - m)).sum::<f64>() / rr.len() as f64).sqrt()
}

/// Population standard deviation, in milliseconds.
pub fn sdnn(rr: &[f64]) -> Option<f64> {
    (rr.len() >= MIN_INTERVALS_SDNN).then(|| 1000.0 * population_sd(rr))
}

pub fn rmssd(rr: &[f64]) -> Option<f64> {
    if rr.len() < MIN_INTERVALS_RMSSD {
        return None;
    }
    let ms: f64 = rr
        .windows(2)
        .map(|w| {
            let d = w[1] - w[0];
            d * d
        })
        .sum::<f64>()
        / (rr.len() - 1) as f64;
    Some(1000.0 * ms.sqrt())
}

pub fn coeff_variation(rr: &[f64]) -> Option<f64> {
    (rr.len() >= MIN_INTERVALS_SDNN).then(|| population_sd(rr) / mean(rr))
}

/// Normalised Shannon entropy of successive differences over a fixed-range
/// equal-width histogram.
pub fn delta_rr_entropy(rr: &[f64], cfg: &FeatureConfig) -> Option<f64> {
    if rr.len() < MIN_INTERVALS_ENTROPY || cfg.entropy_bins < 2 {
        return None;
    }
    let diffs: Vec<f64> = rr.windows(2).map(|w| w[1] - w[0]).collect();
    Some(histogram_entropy(&diffs, cfg.entropy_bins, cfg.entropy_range_s))
}

pub(crate) fn histogram_entropy(values: &[f64], bins: usize, (lo, hi): (f64, f64)) -> f64 {
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in values {
        let b = ((v - lo) / width).floor();
        let b = if b.is_nan() {
            0.0
        } else {
            b.clamp(0.0, (bins - 1) as f64)
        };
        counts[b as usize] += 1;
    }
    let n = values.len() as f64;
    let h: f64 = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum();
    (h / (bins as f64).ln()).clamp(0.0, 1.0)
}

/// Share of interior points that are strict local extrema.
pub fn turning_point_ratio(rr: &[f64]) -> Option<f64> {
    if rr.len() < MIN_INTERVALS_TPR {
        return None;
    }
    let turns = rr.windows(3).filter(|w| (w[1] - w[0]) * (w[2] - w[1]) < 0.0).count();
    Some(turns as f64 / (rr.len() - 2) as f64)
}

/// In-band interval share times the unsaturated sample share.
pub fn signal_quality(saturated_fraction: f64, rr: &RrSeries) -> f64 {
    let total = rr.total_intervals();
    if total == 0 {
        return 0.0;
    }
    let in_band = rr.rr_s.len() as f64 / total as f64;
    (in_band * (1.0 - saturated_fraction)).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TachycardiaRatio {
    pub ratio: Option<f64>,
    pub sample_count: usize,
}

pub fn tachycardia_trailing(hr_samples: &[f64], threshold_bpm: f64) -> TachycardiaRatio {
    if hr_samples.is_empty() {
        return TachycardiaRatio {
            ratio: None,
            sample_count: 0,
        };
    }
    let above = hr_samples.iter().filter(|&&h| h > threshold_bpm).count();
    TachycardiaRatio {
        ratio: Some(above as f64 / hr_samples.len() as f64),
        sample_count: hr_samples.len(),
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct WindowFeatures {
    pub hr_bpm: Option<f64>,
    pub sdnn_ms: Option<f64>,
    pub rmssd_ms: Option<f64>,
    pub cv: Option<f64>,
    pub delta_rr_entropy: Option<f64>,
    pub turning_point_ratio: Option<f64>,
    pub signal_quality_score: f64,
    pub n_beats: usize,
}

impl WindowFeatures {
    pub fn from_rr(rr: &RrSeries, saturated_fraction: f64, cfg: &FeatureConfig) -> Self {
        let r = &rr.rr_s;
        Self {
            hr_bpm: heart_rate(r),
            sdnn_ms: sdnn(r),
            rmssd_ms: rmssd(r),
            cv: coeff_variation(r),
            delta_rr_entropy: delta_rr_entropy(r, cfg),
            turning_point_ratio: turning_point_ratio(r),
            signal_quality_score: signal_quality(saturated_fraction, rr),
            n_beats: rr.n_beats(),
        }
    }
}

/// Peaks, intervals and features of one window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowAnalysis {
    pub rr: RrSeries,
    pub features: WindowFeatures,
    pub saturated_fraction: f64,
    pub quality_flag: bool,
}

impl WindowAnalysis {
    /// Mean and max of beat-wise instantaneous heart rate.
    pub fn instantaneous_hr(&self) -> (Option<f64>, Option<f64>) {
        if self.rr.rr_s.is_empty() {
            return (None, None);
        }
        let inst: Vec<f64> = self.rr.rr_s.iter().map(|r| 60.0 / r).collect();
        (Some(mean(&inst)), inst.iter().cloned().reduce(f64::max))
    }
}

pub fn analyze_window(window: &SampleWindow, cfg: &FeatureConfig) -> WindowAnalysis {
    let det = detect_peaks(window);
    let rr = derive_rr(&det.peak_times_s, &cfg.rr_band).with_range(window.window_index, window.window_index);
    let features = WindowFeatures::from_rr(&rr, det.saturated_fraction, cfg);
    WindowAnalysis {
        quality_flag: det.quality_flag(),
        saturated_fraction: det.saturated_fraction,
        rr,
        features,
    }
}

/// Analyses a contiguous run of windows as one RR series (peaks are detected
/// per window, intervals across window boundaries are kept).
pub fn analyze_windows(windows: &[&SampleWindow], cfg: &FeatureConfig) -> WindowAnalysis {
    let mut peaks = Vec::new();
    let mut sat_weighted = 0.0;
    let mut n_samples = 0usize;
    let mut flag = false;
    for w in windows {
        let det = detect_peaks(w);
        flag |= det.quality_flag();
        sat_weighted += det.saturated_fraction * w.samples.len() as f64;
        n_samples += w.samples.len();
        for t in det.peak_times_s {
            if peaks.last().is_none_or(|&p| t > p) {
                peaks.push(t);
            }
        }
    }
    let sat = if n_samples == 0 {
        0.0
    } else {
        sat_weighted / n_samples as f64
    };
    let mut rr = derive_rr(&peaks, &cfg.rr_band);
    if let (Some(first), Some(last)) = (windows.first(), windows.last()) {
        rr = rr.with_range(first.window_index, last.window_index);
    }
    WindowAnalysis {
        features: WindowFeatures::from_rr(&rr, sat, cfg),
        saturated_fraction: sat,
        quality_flag: flag,
        rr,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-9
    }

    #[test]
    fn heart_rate_examples() {
        assert!(close(heart_rate(&[0.5, 0.5, 0.5]).unwrap(), 120.0));
        assert!(close(heart_rate(&[0.8, 1.0, 1.2]).unwrap(), 60.0));
        assert_eq!(heart_rate(&[]), None);
    }

    #[test]
    fn variability_examples() {
        assert_eq!(sdnn(&[0.8, 0.8, 0.8]), Some(0.0));
        assert_eq!(coeff_variation(&[0.8, 0.8, 0.8]), Some(0.0));
        assert!(close(sdnn(&[0.9, 1.1]).unwrap(), 100.0));
        assert!(close(rmssd(&[0.8, 1.0, 0.8]).unwrap(), 200.0));
        assert_eq!(sdnn(&[0.9]), None);
        assert_eq!(rmssd(&[0.9, 1.0]), None);
    }

    #[test]
    fn entropy_examples() {
        let cfg = FeatureConfig::default();
        assert_eq!(delta_rr_entropy(&[0.8, 0.9, 1.0, 1.1, 1.2], &cfg), Some(0.0));
        // ΔRR at the centre of each of the 16 bins of width 0.075 s.
        let diffs: Vec<f64> = (0..16).map(|k| -0.6 + 0.075 * (k as f64 + 0.5)).collect();
        let mut rr = vec![1.0];
        for d in &diffs {
            let next = rr.last().unwrap() + d;
            rr.push(next);
        }
        assert!(close(delta_rr_entropy(&rr, &cfg).unwrap(), 1.0));
        assert_eq!(delta_rr_entropy(&[0.8, 0.9], &cfg), None);
        // Out-of-range differences clamp to the edge bins.
        assert_eq!(
            delta_rr_entropy(&[0.3, 1.9, 0.3, 1.9], &cfg).map(|h| h > 0.0),
            Some(true)
        );
    }

    #[test]
    fn turning_points() {
        assert_eq!(turning_point_ratio(&[0.5, 0.6, 0.7, 0.8]), Some(0.0));
        assert_eq!(turning_point_ratio(&[1.0, 0.8, 1.0, 0.8, 1.0]), Some(1.0));
        // Ties are not turning points.
        assert_eq!(turning_point_ratio(&[1.0, 1.0, 0.8]), Some(0.0));
        assert_eq!(turning_point_ratio(&[1.0, 0.9]), None);
    }

    #[test]
    fn quality_examples() {
        let clean = RrSeries::from_intervals(vec![0.8; 10]);
        assert_eq!(signal_quality(0.0, &clean), 1.0);
        assert_eq!(signal_quality(0.0, &RrSeries::default()), 0.0);
        let mut partial = RrSeries::from_intervals(vec![0.8; 8]);
        partial.excluded = 2;
        assert!(close(signal_quality(0.0, &partial), 0.8));
        assert!(close(signal_quality(0.5, &partial), 0.4));
    }

    #[test]
    fn tachycardia_counting() {
        let mut hr = vec![80.0; 27];
        hr.extend([120.0, 130.0, 101.0]);
        let t = tachycardia_trailing(&hr, 100.0);
        assert!(close(t.ratio.unwrap(), 0.1));
        assert_eq!(t.sample_count, 30);
        let empty = tachycardia_trailing(&[], 100.0);
        assert_eq!((empty.ratio, empty.sample_count), (None, 0));
    }

    #[test]
    fn absent_not_zero() {
        let f = WindowFeatures::from_rr(&RrSeries::from_intervals(vec![0.8]), 0.0, &FeatureConfig::default());
        assert!(f.hr_bpm.is_some());
        assert_eq!(f.n_beats, 2);
        assert!(f.sdnn_ms.is_none() && f.cv.is_none() && f.rmssd_ms.is_none());
        assert!(f.delta_rr_entropy.is_none() && f.turning_point_ratio.is_none());
    }
}
