//! Window-level rhythm screening (N / AF / Other) from RR irregularity.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::features::WindowFeatures;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RhythmClass {
    N,
    #[serde(rename = "AF")]
    Af,
    Other,
    #[serde(rename = "unknown")]
    Unknown,
}

impl RhythmClass {
    pub fn as_str(self) -> &'static str {
        match self {
            RhythmClass::N => "N",
            RhythmClass::Af => "AF",
            RhythmClass::Other => "Other",
            RhythmClass::Unknown => "unknown",
        }
    }

    /// Maps free-text rhythm labels onto the screen's classes. AFL has no
    /// dedicated detector and lands in `Other`.
    pub fn normalize(label: &str) -> Self {
        match label.trim().to_ascii_uppercase().as_str() {
            "N" | "NORMAL" | "NSR" | "SR" => RhythmClass::N,
            "AF" | "AFIB" | "(AFIB" => RhythmClass::Af,
            "UNKNOWN" | "" => RhythmClass::Unknown,
            _ => RhythmClass::Other,
        }
    }
}

impl fmt::Display for RhythmClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScreenConfig {
    pub cv_min: f64,
    pub entropy_min: f64,
    pub tpr_lo: f64,
    pub tpr_hi: f64,
    pub q_min: f64,
    pub hr_normal_lo: f64,
    pub hr_normal_hi: f64,
    /// Windows of RR context (current window included) fed to the screen
    /// during streaming.
    pub context_windows: usize,
}

impl Default for ScreenConfig {
    fn default() -> Self {
        Self {
            cv_min: 0.10,
            entropy_min: 0.70,
            tpr_lo: 0.54,
            tpr_hi: 0.77,
            q_min: 0.5,
            hr_normal_lo: 40.0,
            hr_normal_hi: 150.0,
            context_windows: 6,
        }
    }
}

impl ScreenConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.cv_min >= 0.0
            && (0.0..=1.0).contains(&self.entropy_min)
            && (0.0..=1.0).contains(&self.tpr_lo)
            && (0.0..=1.0).contains(&self.tpr_hi)
            && self.tpr_lo <= self.tpr_hi
            && (0.0..=1.0).contains(&self.q_min)
            && self.hr_normal_lo < self.hr_normal_hi
            && self.context_windows >= 1;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid screen config: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhythmEvidence {
    pub cv: Option<f64>,
    pub delta_rr_entropy: Option<f64>,
    pub turning_point_ratio: Option<f64>,
    pub n_beats: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhythmAssessment {
    pub rhythm_class: RhythmClass,
    pub evidence: RhythmEvidence,
    pub thresholds_used: ScreenConfig,
}

pub fn classify_rhythm(features: &WindowFeatures, config: &ScreenConfig) -> RhythmAssessment {
    let evidence = RhythmEvidence {
        cv: features.cv,
        delta_rr_entropy: features.delta_rr_entropy,
        turning_point_ratio: features.turning_point_ratio,
        n_beats: features.n_beats,
    };
    let class = match (features.cv, features.delta_rr_entropy, features.turning_point_ratio) {
        _ if features.signal_quality_score < config.q_min => RhythmClass::Unknown,
        (Some(cv), Some(h), Some(tpr)) => {
            let tpr_in = tpr >= config.tpr_lo && tpr <= config.tpr_hi;
            if cv >= config.cv_min && h >= config.entropy_min && tpr_in {
                RhythmClass::Af
            } else {
                let hr_ok = features
                    .hr_bpm
                    .is_some_and(|hr| hr >= config.hr_normal_lo && hr <= config.hr_normal_hi);
                if cv < config.cv_min && h < config.entropy_min && !tpr_in && hr_ok {
                    RhythmClass::N
                } else {
                    RhythmClass::Other
                }
            }
        }
        _ => RhythmClass::Unknown,
    };
    RhythmAssessment {
        rhythm_class: class,
        evidence,
        thresholds_used: config.clone(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledFeatures {
    pub features: WindowFeatures,
    pub label: RhythmClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneOutcome {
    pub config: ScreenConfig,
    pub balanced_accuracy: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    /// Set when no labeled windows (or no positives / negatives) were available.
    pub warning: Option<String>,
}

/// Fixed search grid; order matters only for exact ties.
#[derive(Debug, Clone, PartialEq)]
pub struct TuneGrid {
    pub cv_min: Vec<f64>,
    pub entropy_min: Vec<f64>,
    pub tpr_lo: Vec<f64>,
    pub tpr_hi: Vec<f64>,
}

fn steps(from: f64, to: f64, step: f64) -> Vec<f64> {
    let n = ((to - from) / step).round() as usize;
    (0..=n)
        .map(|i| ((from + i as f64 * step) * 1e6).round() / 1e6)
        .collect()
}

impl Default for TuneGrid {
    fn default() -> Self {
        Self {
            cv_min: steps(0.02, 0.30, 0.01),
            entropy_min: steps(0.30, 0.90, 0.05),
            tpr_lo: steps(0.40, 0.60, 0.02),
            tpr_hi: vec![0.77, 0.80, 0.85, 0.90, 1.0],
        }
    }
}

fn af_rates(data: &[LabeledFeatures], cfg: &ScreenConfig) -> (Option<f64>, Option<f64>) {
    let (mut tp, mut fn_, mut tn, mut fp) = (0usize, 0usize, 0usize, 0usize);
    for d in data {
        let pred = classify_rhythm(&d.features, cfg).rhythm_class == RhythmClass::Af;
        match (d.label == RhythmClass::Af, pred) {
            (true, true) => tp += 1,
            (true, false) => fn_ += 1,
            (false, false) => tn += 1,
            (false, true) => fp += 1,
        }
    }
    let sens = (tp + fn_ > 0).then(|| tp as f64 / (tp + fn_) as f64);
    let spec = (tn + fp > 0).then(|| tn as f64 / (tn + fp) as f64);
    (sens, spec)
}

/// Grid search maximising AF-vs-rest balanced accuracy; ties go to the
/// higher specificity, then to the earliest grid point.
pub fn tune_thresholds(dev: &[LabeledFeatures], base: &ScreenConfig, grid: &TuneGrid, mode: Execution) -> TuneOutcome {
    let has_pos = dev.iter().any(|d| d.label == RhythmClass::Af);
    let has_neg = dev.iter().any(|d| d.label != RhythmClass::Af);
    if dev.is_empty() || !has_pos || !has_neg {
        let (sens, spec) = af_rates(dev, base);
        return TuneOutcome {
            config: base.clone(),
            balanced_accuracy: None,
            sensitivity: sens,
            specificity: spec,
            warning: Some(if dev.is_empty() {
                "empty development set; defaults returned".into()
            } else {
                "development set lacks AF or non-AF windows; defaults returned".into()
            }),
        };
    }

    let mut points = Vec::new();
    for &cv in &grid.cv_min {
        for &h in &grid.entropy_min {
            for &lo in &grid.tpr_lo {
                for &hi in &grid.tpr_hi {
                    if lo <= hi {
                        points.push(ScreenConfig {
                            cv_min: cv,
                            entropy_min: h,
                            tpr_lo: lo,
                            tpr_hi: hi,
                            ..base.clone()
                        });
                    }
                }
            }
        }
    }
    let scored = exec::map(mode, &points, |cfg| {
        let (sens, spec) = af_rates(dev, cfg);
        let (s, p) = (sens.unwrap_or(0.0), spec.unwrap_or(0.0));
        ((s + p) / 2.0, p, s)
    });
    let mut best = 0;
    for (i, sc) in scored.iter().enumerate() {
        let b = &scored[best];
        if sc.0 > b.0 || (sc.0 == b.0 && sc.1 > b.1) {
            best = i;
        }
    }
    let (ba, spec, sens) = scored[best];
    TuneOutcome {
        config: points[best].clone(),
        balanced_accuracy: Some(ba),
        sensitivity: Some(sens),
        specificity: Some(spec),
        warning: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn feats(cv: f64, h: f64, tpr: f64, q: f64) -> WindowFeatures {
        WindowFeatures {
            hr_bpm: Some(75.0),
            sdnn_ms: Some(cv * 800.0),
            rmssd_ms: Some(cv * 900.0),
            cv: Some(cv),
            delta_rr_entropy: Some(h),
            turning_point_ratio: Some(tpr),
            signal_quality_score: q,
            n_beats: 60,
        }
    }

    #[test]
    fn constant_rr_is_normal() {
        let a = classify_rhythm(&feats(0.0, 0.0, 0.0, 1.0), &ScreenConfig::default());
        assert_eq!(a.rhythm_class, RhythmClass::N);
        assert_eq!(a.evidence.cv, Some(0.0));
    }

    #[test]
    fn irregular_is_af_and_gates_apply() {
        let cfg = ScreenConfig::default();
        assert_eq!(
            classify_rhythm(&feats(0.2, 0.85, 0.66, 1.0), &cfg).rhythm_class,
            RhythmClass::Af
        );
        assert_eq!(
            classify_rhythm(&feats(0.2, 0.85, 0.66, 0.1), &cfg).rhythm_class,
            RhythmClass::Unknown
        );
        // Irregular magnitude but regular pattern.
        assert_eq!(
            classify_rhythm(&feats(0.2, 0.85, 0.2, 1.0), &cfg).rhythm_class,
            RhythmClass::Other
        );
        let mut missing = feats(0.2, 0.85, 0.66, 1.0);
        missing.turning_point_ratio = None;
        assert_eq!(classify_rhythm(&missing, &cfg).rhythm_class, RhythmClass::Unknown);
    }

    #[test]
    fn label_normalisation() {
        assert_eq!(RhythmClass::normalize("AFIB"), RhythmClass::Af);
        assert_eq!(RhythmClass::normalize("AFL"), RhythmClass::Other);
        assert_eq!(RhythmClass::normalize("n"), RhythmClass::N);
    }

    #[test]
    fn separable_fixture_tunes_to_perfect() {
        let mut dev = Vec::new();
        for i in 0..20 {
            dev.push(LabeledFeatures {
                features: feats(0.04 + 0.002 * i as f64, 0.8, 0.66, 1.0),
                label: RhythmClass::N,
            });
            dev.push(LabeledFeatures {
                features: feats(0.15 + 0.005 * i as f64, 0.8, 0.66, 1.0),
                label: RhythmClass::Af,
            });
        }
        let grid = TuneGrid::default();
        let a = tune_thresholds(&dev, &ScreenConfig::default(), &grid, Execution::Parallel);
        assert_eq!(a.balanced_accuracy, Some(1.0));
        assert!(a.config.cv_min > 0.078 && a.config.cv_min <= 0.15);
        let b = tune_thresholds(&dev, &ScreenConfig::default(), &grid, Execution::Sequential);
        assert_eq!(a, b);
    }

    #[test]
    fn empty_dev_returns_defaults_with_warning() {
        let out = tune_thresholds(
            &[],
            &ScreenConfig::default(),
            &TuneGrid::default(),
            Execution::Sequential,
        );
        assert_eq!(out.config, ScreenConfig::default());
        assert!(out.warning.is_some());
    }
}
