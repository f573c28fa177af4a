use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonl;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dataset {
    Icentia11k,
    AfPpgEcg,
    PpgDalia,
    Wesad,
    Synthetic,
}

impl Dataset {
    pub fn as_str(self) -> &'static str {
        match self {
            Dataset::Icentia11k => "icentia11k",
            Dataset::AfPpgEcg => "af_ppg_ecg",
            Dataset::PpgDalia => "ppg_dalia",
            Dataset::Wesad => "wesad",
            Dataset::Synthetic => "synthetic",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "icentia11k" => Some(Dataset::Icentia11k),
            "af_ppg_ecg" => Some(Dataset::AfPpgEcg),
            "ppg_dalia" => Some(Dataset::PpgDalia),
            "wesad" => Some(Dataset::Wesad),
            "synthetic" => Some(Dataset::Synthetic),
            _ => None,
        }
    }
}

impl fmt::Display for Dataset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Modality {
    #[serde(rename = "ECG")]
    Ecg,
    #[serde(rename = "PPG")]
    Ppg,
}

impl Modality {
    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Ecg => "ECG",
            Modality::Ppg => "PPG",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One fixed-length raw segment of a single-channel stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleWindow {
    pub patient_id: String,
    pub dataset: Dataset,
    pub modality: Modality,
    pub fs: f64,
    pub start_s: f64,
    pub duration_s: f64,
    pub window_index: u64,
    pub samples: Vec<f64>,
}

impl SampleWindow {
    pub fn end_s(&self) -> f64 {
        self.start_s + self.duration_s
    }

    pub fn expected_len(fs: f64, duration_s: f64) -> usize {
        (fs * duration_s).round() as usize
    }

    /// Checks the per-window invariants.
    pub fn validate(&self) -> Result<()> {
        if !(self.fs.is_finite() && self.fs > 0.0) {
            return Err(Error::DataIntegrity(format!(
                "window {}: fs must be > 0, got {}",
                self.window_index, self.fs
            )));
        }
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(Error::DataIntegrity(format!(
                "window {}: duration_s must be > 0",
                self.window_index
            )));
        }
        if !(self.start_s.is_finite() && self.start_s >= 0.0) {
            return Err(Error::DataIntegrity(format!(
                "window {}: start_s must be >= 0",
                self.window_index
            )));
        }
        let want = Self::expected_len(self.fs, self.duration_s);
        if self.samples.len() != want {
            return Err(Error::DataIntegrity(format!(
                "window {}: {} samples, expected round(fs * duration_s) = {}",
                self.window_index,
                self.samples.len(),
                want
            )));
        }
        if let Some(i) = self.samples.iter().position(|x| !x.is_finite()) {
            return Err(Error::DataIntegrity(format!(
                "window {}: non-finite sample at offset {i}",
                self.window_index
            )));
        }
        Ok(())
    }
}

/// Identity shared by every window cut from one stream.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamMeta {
    pub patient_id: String,
    pub dataset: Dataset,
    pub modality: Modality,
    /// Timeline offset of the first sample.
    pub start_s: f64,
    pub first_index: u64,
}

impl StreamMeta {
    pub fn new(patient_id: impl Into<String>, dataset: Dataset, modality: Modality) -> Self {
        Self {
            patient_id: patient_id.into(),
            dataset,
            modality,
            start_s: 0.0,
            first_index: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segmented {
    pub windows: Vec<SampleWindow>,
    /// Trailing samples that did not fill a whole window.
    pub discarded: usize,
}

/// Tiles a stream into non-overlapping fixed-length windows, dropping the
/// trailing remainder.
pub fn segment_stream(meta: &StreamMeta, samples: &[f64], fs: f64, window_len_s: f64) -> Result<Segmented> {
    if !(fs.is_finite() && fs > 0.0) {
        return Err(Error::Config(format!("fs must be > 0, got {fs}")));
    }
    if !(window_len_s.is_finite() && window_len_s > 0.0) {
        return Err(Error::Config(format!("window length must be > 0, got {window_len_s}")));
    }
    if let Some(i) = samples.iter().position(|x| !x.is_finite()) {
        return Err(Error::DataIntegrity(format!("non-finite sample at index {i}")));
    }
    let len = SampleWindow::expected_len(fs, window_len_s);
    if len == 0 {
        return Err(Error::Config(format!(
            "window of {window_len_s} s at {fs} Hz holds no samples"
        )));
    }
    let windows = samples
        .chunks_exact(len)
        .enumerate()
        .map(|(i, chunk)| SampleWindow {
            patient_id: meta.patient_id.clone(),
            dataset: meta.dataset,
            modality: meta.modality,
            fs,
            start_s: meta.start_s + i as f64 * window_len_s,
            duration_s: window_len_s,
            window_index: meta.first_index + i as u64,
            samples: chunk.to_vec(),
        })
        .collect();
    Ok(Segmented {
        windows,
        discarded: samples.len() % len,
    })
}

pub fn read_windows(path: &Path) -> Result<Vec<SampleWindow>> {
    let windows: Vec<SampleWindow> = jsonl::read(path)?;
    for w in &windows {
        w.validate()?;
    }
    Ok(windows)
}

pub fn write_windows(path: &Path, windows: &[SampleWindow]) -> Result<()> {
    jsonl::write(path, windows)
}
