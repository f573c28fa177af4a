//! Scripted synthetic ECG/PPG streams with ground-truth episode annotations.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::window::Modality;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentKind {
    Normal,
    Tachycardia,
    Bradycardia,
    AfLike,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptSegment {
    pub start_s: f64,
    pub end_s: f64,
    pub kind: SegmentKind,
    /// Target heart rate in bpm, or the irregularity magnitude for `af_like`
    /// (half-width of the uniform relative RR spread).
    pub param: f64,
}

fn default_modality() -> Modality {
    Modality::Ecg
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamScript {
    pub total_duration_s: f64,
    pub base_hr_bpm: f64,
    #[serde(default)]
    pub segments: Vec<ScriptSegment>,
    #[serde(default)]
    pub noise_seed: u64,
    #[serde(default = "default_modality")]
    pub modality: Modality,
}

impl StreamScript {
    pub fn new(total_duration_s: f64, base_hr_bpm: f64, noise_seed: u64) -> Self {
        Self {
            total_duration_s,
            base_hr_bpm,
            segments: Vec::new(),
            noise_seed,
            modality: Modality::Ecg,
        }
    }

    pub fn segment(mut self, start_s: f64, end_s: f64, kind: SegmentKind, param: f64) -> Self {
        self.segments.push(ScriptSegment {
            start_s,
            end_s,
            kind,
            param,
        });
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.total_duration_s > 0.0 && self.total_duration_s.is_finite()) {
            return Err(Error::Config("total_duration_s must be > 0".into()));
        }
        if !(20.0..=250.0).contains(&self.base_hr_bpm) {
            return Err(Error::Config(format!(
                "base_hr_bpm {} outside [20, 250]",
                self.base_hr_bpm
            )));
        }
        let mut segs: Vec<&ScriptSegment> = self.segments.iter().collect();
        segs.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
        for s in &segs {
            if !(s.start_s >= 0.0 && s.end_s > s.start_s && s.end_s <= self.total_duration_s) {
                return Err(Error::Config(format!(
                    "segment [{}, {}] outside [0, {}] or empty",
                    s.start_s, s.end_s, self.total_duration_s
                )));
            }
            let ok = match s.kind {
                SegmentKind::AfLike => s.param >= 0.0 && s.param < 0.9,
                _ => (20.0..=250.0).contains(&s.param),
            };
            if !ok {
                return Err(Error::Config(format!(
                    "segment [{}, {}] has invalid param {}",
                    s.start_s, s.end_s, s.param
                )));
            }
        }
        for w in segs.windows(2) {
            if w[1].start_s < w[0].end_s {
                return Err(Error::Config(format!(
                    "segments [{}, {}] and [{}, {}] overlap",
                    w[0].start_s, w[0].end_s, w[1].start_s, w[1].end_s
                )));
            }
        }
        Ok(())
    }

    fn segment_at(&self, t: f64) -> Option<&ScriptSegment> {
        self.segments.iter().find(|s| t >= s.start_s && t < s.end_s)
    }
}

/// Normalised episode label carried by annotations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EpisodeLabel {
    #[serde(rename = "tachycardia")]
    Tachycardia,
    #[serde(rename = "bradycardia")]
    Bradycardia,
    #[serde(rename = "AF")]
    Af,
}

impl EpisodeLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            EpisodeLabel::Tachycardia => "tachycardia",
            EpisodeLabel::Bradycardia => "bradycardia",
            EpisodeLabel::Af => "AF",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthAnnotation {
    pub start_s: f64,
    pub end_s: f64,
    pub label: EpisodeLabel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub samples: Vec<f64>,
    pub fs: f64,
    pub annotations: Vec<SynthAnnotation>,
    /// Ground-truth beat times (R peak for ECG, systolic peak for PPG).
    pub beat_times_s: Vec<f64>,
}

const RSA_DEPTH: f64 = 0.03;
const RSA_PERIOD_S: f64 = 4.0;
const DEFAULT_AF_SPREAD: f64 = 0.3;
const NOISE_SD: f64 = 0.01;
const PPG_SYSTOLIC_DELAY_S: f64 = 0.15;

/// Renders a script into samples. Pure in `(script, fs)`.
pub fn synthesize_stream(script: &StreamScript, fs: f64) -> Result<SynthOutput> {
    script.validate()?;
    if !(fs > 0.0 && fs.is_finite()) {
        return Err(Error::Config(format!("fs must be > 0, got {fs}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(script.noise_seed);
    let beats = beat_schedule(script, &mut rng);

    let n = (script.total_duration_s * fs).round() as usize;
    let mut samples = vec![0.0; n];
    for (i, &tb) in beats.iter().enumerate() {
        let rr = if i + 1 < beats.len() {
            beats[i + 1] - tb
        } else if i > 0 {
            tb - beats[i - 1]
        } else {
            60.0 / script.base_hr_bpm
        };
        render_beat(&mut samples, fs, tb, rr, script.modality);
    }
    let noise = Normal::new(0.0, NOISE_SD).expect("valid sd");
    for v in samples.iter_mut() {
        *v += noise.sample(&mut rng);
    }

    let beat_times_s = match script.modality {
        Modality::Ecg => beats,
        Modality::Ppg => beats
            .into_iter()
            .map(|t| t + PPG_SYSTOLIC_DELAY_S)
            .filter(|&t| t < script.total_duration_s)
            .collect(),
    };

    let mut annotations: Vec<SynthAnnotation> = script
        .segments
        .iter()
        .filter_map(|s| {
            let label = match s.kind {
                SegmentKind::Normal => return None,
                SegmentKind::Tachycardia => EpisodeLabel::Tachycardia,
                SegmentKind::Bradycardia => EpisodeLabel::Bradycardia,
                SegmentKind::AfLike => EpisodeLabel::Af,
            };
            Some(SynthAnnotation {
                start_s: s.start_s,
                end_s: s.end_s,
                label,
            })
        })
        .collect();
    annotations.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));

    Ok(SynthOutput {
        samples,
        fs,
        annotations,
        beat_times_s,
    })
}

fn beat_schedule(script: &StreamScript, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let base_rr = 60.0 / script.base_hr_bpm;
    let mut t = rng.random_range(0.2..0.2 + base_rr);
    let mut beats = Vec::new();
    while t < script.total_duration_s {
        beats.push(t);
        let rsa = 1.0 + RSA_DEPTH * (2.0 * PI * t / RSA_PERIOD_S).sin();
        let rr = match script.segment_at(t) {
            None => base_rr * rsa,
            Some(s) => match s.kind {
                SegmentKind::Normal | SegmentKind::Tachycardia | SegmentKind::Bradycardia => 60.0 / s.param * rsa,
                SegmentKind::AfLike => {
                    let spread = if s.param > 0.0 { s.param } else { DEFAULT_AF_SPREAD };
                    let u: f64 = rng.random_range(-spread..=spread);
                    (base_rr * (1.0 + u)).clamp(0.33, 1.9)
                }
            },
        };
        t += rr;
    }
    beats
}

fn gauss(t: f64, center: f64, sd: f64) -> f64 {
    let z = (t - center) / sd;
    (-0.5 * z * z).exp()
}

fn render_beat(out: &mut [f64], fs: f64, tb: f64, rr: f64, modality: Modality) {
    let (from, to) = (tb - 0.35, tb + 0.9);
    let i0 = ((from * fs).floor().max(0.0)) as usize;
    let i1 = ((to * fs).ceil() as usize).min(out.len());
    let qt = rr.clamp(0.3, 2.0).sqrt();
    for (i, v) in out.iter_mut().enumerate().take(i1).skip(i0) {
        let t = i as f64 / fs;
        *v += match modality {
            Modality::Ecg => {
                0.12 * gauss(t, tb - 0.16, 0.02) - 0.10 * gauss(t, tb - 0.025, 0.008) + 1.0 * gauss(t, tb, 0.010)
                    - 0.20 * gauss(t, tb + 0.025, 0.008)
                    + 0.30 * gauss(t, tb + 0.26 * qt, 0.04)
            }
            Modality::Ppg => {
                let sys = tb + PPG_SYSTOLIC_DELAY_S;
                1.0 * gauss(t, sys, 0.06) + 0.45 * gauss(t, sys + 0.22 * qt, 0.08)
            }
        };
    }
}
