//! Beat detection: derivative, squaring, moving-window integration and an
//! adaptive signal/noise threshold, followed by localisation of the beat on
//! the raw waveform.

use super::window::{Modality, SampleWindow};

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorConfig {
    /// Moving-window integration width.
    pub integration_s: f64,
    /// Minimum spacing between accepted beats.
    pub refractory_s: f64,
    /// Span used to seed the adaptive threshold.
    pub learning_s: f64,
    /// Gaps longer than this multiple of the running RR trigger a search-back.
    pub search_back_factor: f64,
    /// Candidates this close to the previous beat need at least half its energy.
    pub secondary_wave_s: f64,
}

impl DetectorConfig {
    pub fn for_modality(modality: Modality) -> Self {
        match modality {
            Modality::Ecg => Self {
                integration_s: 0.15,
                refractory_s: 0.2,
                learning_s: 2.0,
                search_back_factor: 1.66,
                secondary_wave_s: 0.36,
            },
            Modality::Ppg => Self {
                integration_s: 0.2,
                refractory_s: 0.3,
                learning_s: 2.0,
                search_back_factor: 1.66,
                secondary_wave_s: 0.5,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PeakDetection {
    /// Absolute beat times, strictly increasing, inside the window.
    pub peak_times_s: Vec<f64>,
    pub flat_line: bool,
    pub saturated_fraction: f64,
}

impl PeakDetection {
    /// Set when the window carried no usable waveform.
    pub fn quality_flag(&self) -> bool {
        self.flat_line || self.saturated_fraction >= 0.5
    }
}

pub fn detect_peaks(window: &SampleWindow) -> PeakDetection {
    detect_peaks_with(window, &DetectorConfig::for_modality(window.modality))
}

/// Fraction of samples sitting in runs (length >= 3) of identical values at
/// the window's extreme values. An extreme that equals the median is the
/// baseline of a sparse signal, not clipping, and is not counted.
pub fn saturated_fraction(samples: &[f64]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let (lo, hi) = min_max(samples);
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    if lo == hi {
        return 1.0;
    }
    let mut saturated = 0usize;
    let mut i = 0;
    while i < samples.len() {
        let v = samples[i];
        let mut j = i + 1;
        while j < samples.len() && samples[j] == v {
            j += 1;
        }
        if j - i >= 3 && (v == lo || v == hi) && v != median {
            saturated += j - i;
        }
        i = j;
    }
    saturated as f64 / samples.len() as f64
}

fn min_max(xs: &[f64]) -> (f64, f64) {
    xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
        (lo.min(x), hi.max(x))
    })
}

pub fn detect_peaks_with(window: &SampleWindow, cfg: &DetectorConfig) -> PeakDetection {
    let x = &window.samples;
    let fs = window.fs;
    let n = x.len();
    let saturated = saturated_fraction(x);
    let (lo, hi) = min_max(x);
    if n < 5 || (hi - lo).is_nan() || hi - lo <= 1e-9 {
        return PeakDetection {
            peak_times_s: Vec::new(),
            flat_line: true,
            saturated_fraction: saturated,
        };
    }

    let energy = integrate(&squared_derivative(x), half_width(cfg.integration_s, fs));
    let candidates: Vec<usize> = (0..n)
        .filter(|&i| {
            let left = if i == 0 { f64::NEG_INFINITY } else { energy[i - 1] };
            let right = if i + 1 == n { f64::NEG_INFINITY } else { energy[i + 1] };
            energy[i] >= left && energy[i] > right && energy[i] > 0.0
        })
        .collect();

    let refractory = (cfg.refractory_s * fs).round() as usize;
    let accepted = threshold_pass(&energy, &candidates, refractory, cfg, fs);

    let search = (cfg.integration_s * fs).round().max(1.0) as usize;
    let mut times: Vec<f64> = Vec::with_capacity(accepted.len());
    let mut last_idx: Option<usize> = None;
    for c in accepted {
        let from = c.saturating_sub(search);
        let to = (c + search).min(n - 1);
        let idx = argmax(&x[from..=to]) + from;
        if let Some(prev) = last_idx {
            if idx <= prev || idx - prev < refractory {
                continue;
            }
        }
        last_idx = Some(idx);
        let t = window.start_s + refine(x, idx) / fs;
        let t = t.clamp(window.start_s, window.end_s() - 1e-9);
        if times.last().is_none_or(|&p| t > p) {
            times.push(t);
        }
    }

    PeakDetection {
        peak_times_s: times,
        flat_line: false,
        saturated_fraction: saturated,
    }
}

fn half_width(span_s: f64, fs: f64) -> usize {
    ((span_s * fs) / 2.0).round().max(1.0) as usize
}

/// Five-point derivative, squared; edges use clamped indices.
fn squared_derivative(x: &[f64]) -> Vec<f64> {
    let n = x.len() as isize;
    let at = |i: isize| x[i.clamp(0, n - 1) as usize];
    (0..n)
        .map(|i| {
            let d = (2.0 * at(i + 2) + at(i + 1) - at(i - 1) - 2.0 * at(i - 2)) / 8.0;
            d * d
        })
        .collect()
}

/// Centred moving average with a running sum.
fn integrate(s: &[f64], half: usize) -> Vec<f64> {
    let n = s.len();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for v in s {
        prefix.push(prefix.last().unwrap() + v);
    }
    (0..n)
        .map(|i| {
            let a = i.saturating_sub(half);
            let b = (i + half + 1).min(n);
            (prefix[b] - prefix[a]) / (b - a) as f64
        })
        .collect()
}

fn threshold_pass(
    energy: &[f64],
    candidates: &[usize],
    refractory: usize,
    cfg: &DetectorConfig,
    fs: f64,
) -> Vec<usize> {
    if candidates.is_empty() {
        return Vec::new();
    }
    let learn = ((cfg.learning_s * fs) as usize).clamp(1, energy.len());
    let seed = &energy[..learn];
    let seed_max = seed.iter().cloned().fold(0.0, f64::max);
    let seed_mean = seed.iter().sum::<f64>() / learn as f64;
    let mut spk = 0.25 * seed_max;
    let mut npk = 0.5 * seed_mean;

    let secondary = (cfg.secondary_wave_s * fs).round() as usize;
    let mut accepted: Vec<usize> = Vec::new();
    for &c in candidates {
        let thr = npk + 0.25 * (spk - npk);
        let v = energy[c];
        if v <= thr {
            npk = 0.125 * v + 0.875 * npk;
            continue;
        }
        match accepted.last() {
            Some(&prev) if c - prev < refractory => {
                if v > energy[prev] {
                    *accepted.last_mut().unwrap() = c;
                    spk = 0.125 * v + 0.875 * spk;
                }
            }
            Some(&prev) if c - prev < secondary && v < 0.5 * energy[prev] => {
                npk = 0.125 * v + 0.875 * npk;
            }
            _ => {
                accepted.push(c);
                spk = 0.125 * v + 0.875 * spk;
            }
        }
    }

    // Search back over long gaps with half the final threshold.
    if accepted.len() >= 3 {
        let thr2 = 0.5 * (npk + 0.25 * (spk - npk));
        let mut rr: Vec<usize> = accepted.windows(2).map(|w| w[1] - w[0]).collect();
        rr.sort_unstable();
        let typical = rr[rr.len() / 2] as f64;
        let limit = (cfg.search_back_factor * typical) as usize;
        let mut filled = Vec::with_capacity(accepted.len());
        for w in accepted.windows(2) {
            filled.push(w[0]);
            if w[1] - w[0] > limit {
                let best = candidates
                    .iter()
                    .copied()
                    .filter(|&c| c >= w[0] + refractory && c + refractory <= w[1])
                    .filter(|&c| energy[c] > thr2)
                    .max_by(|&a, &b| energy[a].total_cmp(&energy[b]));
                if let Some(b) = best {
                    filled.push(b);
                }
            }
        }
        filled.push(*accepted.last().unwrap());
        accepted = filled;
    }
    accepted
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in xs.iter().enumerate() {
        if *v > xs[best] {
            best = i;
        }
    }
    best
}

/// Parabolic interpolation of the peak position in samples.
fn refine(x: &[f64], i: usize) -> f64 {
    if i == 0 || i + 1 >= x.len() {
        return i as f64;
    }
    let (a, b, c) = (x[i - 1], x[i], x[i + 1]);
    let denom = a - 2.0 * b + c;
    if denom.abs() < 1e-12 {
        return i as f64;
    }
    let off = 0.5 * (a - c) / denom;
    i as f64 + off.clamp(-0.5, 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::window::Dataset;

    fn window(samples: Vec<f64>, fs: f64, modality: Modality) -> SampleWindow {
        let duration_s = samples.len() as f64 / fs;
        SampleWindow {
            patient_id: "t".into(),
            dataset: Dataset::Synthetic,
            modality,
            fs,
            start_s: 100.0,
            duration_s,
            window_index: 10,
            samples,
        }
    }

    #[test]
    fn impulse_train_one_second_period() {
        let fs = 250.0;
        let mut s = vec![0.0; 2500];
        let truth: Vec<f64> = (0..10).map(|k| 0.5 + k as f64).collect();
        for t in &truth {
            s[(t * fs) as usize] = 1.0;
        }
        let det = detect_peaks(&window(s, fs, Modality::Ecg));
        assert_eq!(det.peak_times_s.len(), 10, "{:?}", det.peak_times_s);
        for (got, want) in det.peak_times_s.iter().zip(&truth) {
            assert!((got - (100.0 + want)).abs() <= 1.0 / fs, "{got} vs {want}");
        }
        assert!(!det.quality_flag());
    }

    #[test]
    fn flat_line_sets_flag() {
        let det = detect_peaks(&window(vec![0.0; 2500], 250.0, Modality::Ecg));
        assert!(det.peak_times_s.is_empty());
        assert!(det.flat_line);
        assert!(det.quality_flag());
    }

    #[test]
    fn saturation_fraction_counts_clipped_runs() {
        let mut s: Vec<f64> = (0..100).map(|i| (i as f64 * 0.3).sin()).collect();
        for v in s.iter_mut().take(20) {
            *v = 1.5;
        }
        let f = saturated_fraction(&s);
        assert!((f - 0.2).abs() < 1e-12, "{f}");
        assert_eq!(saturated_fraction(&[]), 0.0);
    }

    #[test]
    fn deterministic_and_inside_window() {
        let fs = 125.0;
        let s: Vec<f64> = (0..1250)
            .map(|i| {
                let t = i as f64 / fs;
                (-(((t % 0.75) - 0.3).powi(2)) / 0.0005).exp()
            })
            .collect();
        let w = window(s, fs, Modality::Ecg);
        let a = detect_peaks(&w);
        let b = detect_peaks(&w);
        assert_eq!(a, b);
        assert!(a.peak_times_s.windows(2).all(|p| p[1] > p[0]));
        assert!(a.peak_times_s.iter().all(|&t| t >= w.start_s && t < w.end_s()));
        assert!((12..=14).contains(&a.peak_times_s.len()));
    }
}
