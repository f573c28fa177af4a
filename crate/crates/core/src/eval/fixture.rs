use serde::{Deserialize, Serialize};

use super::proactive::EpisodeAnnotation;
use crate::error::Result;
use crate::signal::{segment_stream, synthesize_stream, Dataset, Modality, SampleWindow, StreamMeta, StreamScript};

fn default_window_s() -> f64 {
    10.0
}

/// A scripted patient: identity, sampling and the stream script.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub patient_id: String,
    #[serde(default = "default_dataset")]
    pub dataset: Dataset,
    /// Defaults to 250 Hz for ECG and 64 Hz for PPG.
    #[serde(default)]
    pub fs: Option<f64>,
    #[serde(default = "default_window_s")]
    pub window_s: f64,
    #[serde(flatten)]
    pub script: StreamScript,
}

fn default_dataset() -> Dataset {
    Dataset::Synthetic
}

pub fn default_fs(modality: Modality) -> f64 {
    match modality {
        Modality::Ecg => 250.0,
        Modality::Ppg => 64.0,
    }
}

impl SynthSpec {
    pub fn new(patient_id: impl Into<String>, script: StreamScript) -> Self {
        Self {
            patient_id: patient_id.into(),
            dataset: Dataset::Synthetic,
            fs: None,
            window_s: default_window_s(),
            script,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthPatient {
    pub windows: Vec<SampleWindow>,
    pub episodes: Vec<EpisodeAnnotation>,
}

/// Renders the script and tiles it into canonical windows.
pub fn synth_patient(spec: &SynthSpec) -> Result<SynthPatient> {
    let fs = spec.fs.unwrap_or_else(|| default_fs(spec.script.modality));
    let out = synthesize_stream(&spec.script, fs)?;
    let meta = StreamMeta::new(spec.patient_id.clone(), spec.dataset, spec.script.modality);
    let seg = segment_stream(&meta, &out.samples, fs, spec.window_s)?;
    Ok(SynthPatient {
        windows: seg.windows,
        episodes: out
            .annotations
            .iter()
            .map(|a| EpisodeAnnotation::from_synth(&spec.patient_id, a))
            .collect(),
    })
}
