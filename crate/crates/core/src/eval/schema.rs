use std::collections::BTreeMap;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::proactive::{validate_episodes, EpisodeAnnotation};
use crate::error::{Error, Result};
use crate::signal::SampleWindow;

const WINDOW_FIELDS: &[&str] = &[
    "patient_id",
    "dataset",
    "modality",
    "fs",
    "start_s",
    "duration_s",
    "window_index",
    "samples",
];
const EPISODE_FIELDS: &[&str] = &["patient_id", "onset_s", "offset_s", "label"];

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SchemaReport {
    pub records: usize,
    pub warnings: Vec<String>,
}

impl SchemaReport {
    pub fn is_clean(&self) -> bool {
        self.warnings.is_empty()
    }
}

fn parse_lines<T: DeserializeOwned>(text: &str, known: &[&str], report: &mut SchemaReport) -> Vec<(usize, T)> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let n = i + 1;
        let v: Value = match serde_json::from_str(line) {
            Ok(v) => v,
            Err(e) => {
                report.warnings.push(format!("line {n}: {e}"));
                continue;
            }
        };
        if let Some(obj) = v.as_object() {
            for k in obj.keys().filter(|k| !known.contains(&k.as_str())) {
                report.warnings.push(format!("line {n}: unknown field {k}"));
            }
        }
        match serde_json::from_value(v) {
            Ok(rec) => {
                report.records += 1;
                out.push((n, rec));
            }
            Err(e) => report.warnings.push(format!("line {n}: {e}")),
        }
    }
    out
}

/// Canonical window JSONL: per-record validity, then per-patient contiguous
/// indices, consistent fs, duration and modality, and abutting start times.
pub fn check_windows_text(text: &str) -> SchemaReport {
    let mut report = SchemaReport::default();
    let windows: Vec<(usize, SampleWindow)> = parse_lines(text, WINDOW_FIELDS, &mut report);
    let mut by_patient: BTreeMap<&str, Vec<(usize, &SampleWindow)>> = BTreeMap::new();
    for (n, w) in &windows {
        if let Err(e) = w.validate() {
            report.warnings.push(format!("line {n}: {e}"));
        }
        by_patient.entry(&w.patient_id).or_default().push((*n, w));
    }
    for (pid, ws) in by_patient {
        for pair in ws.windows(2) {
            let ((_, a), (n, b)) = (pair[0], pair[1]);
            if b.window_index != a.window_index + 1 {
                report.warnings.push(format!(
                    "line {n}: patient {pid} window_index {} follows {}",
                    b.window_index, a.window_index
                ));
            }
            if b.fs != a.fs || b.duration_s != a.duration_s || b.modality != a.modality || b.dataset != a.dataset {
                report.warnings.push(format!(
                    "line {n}: patient {pid} changes fs, duration, modality or dataset"
                ));
            }
            if (b.start_s - a.end_s()).abs() > 1e-6 {
                report.warnings.push(format!(
                    "line {n}: patient {pid} window starts at {} but the previous ends at {}",
                    b.start_s,
                    a.end_s()
                ));
            }
        }
    }
    report
}

/// Episode annotation JSONL: per-record fields, onset before offset and no
/// overlap within a patient.
pub fn check_episodes_text(text: &str) -> SchemaReport {
    let mut report = SchemaReport::default();
    let eps: Vec<(usize, EpisodeAnnotation)> = parse_lines(text, EPISODE_FIELDS, &mut report);
    let eps: Vec<EpisodeAnnotation> = eps.into_iter().map(|(_, e)| e).collect();
    if let Err(e) = validate_episodes(&eps) {
        report.warnings.push(e.to_string());
    }
    report
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn check_windows_file(path: &Path) -> Result<SchemaReport> {
    Ok(check_windows_text(&read(path)?))
}

pub fn check_episodes_file(path: &Path) -> Result<SchemaReport> {
    Ok(check_episodes_text(&read(path)?))
}
