//! Longitudinal per-patient monitoring memory: the window-summary log, the
//! alert log, a bounded raw-window cache and trailing aggregates.

use std::collections::VecDeque;
use std::fmt;
use std::path::Path;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::jsonl;
use crate::signal::{Dataset, Modality, SampleWindow};

/// Annotation-derived field names that must never reach an evaluated method.
pub const HIDDEN_FIELDS: &[&str] = &[
    "rhythm_class",
    "stress_label",
    "protocol_label_id",
    "activity_label",
    "ecg_reference_hr_bpm",
    "sleep_stage",
    "sleep_epoch_duration_s",
    "is_sleep",
    "is_wake",
    "is_rem",
    "is_nrem",
    "cap_a_overlap",
    "cap_subtype",
    "body_position",
    "previous_rhythm_class",
    "previous_stress_label",
    "previous_protocol_label_id",
    "previous_activity_label",
    "previous_sleep_stage",
    "previous_body_position",
    "af_burden_ratio",
    "af_episode_duration_s",
    "rhythm_transition_count",
    "rhythm_transition_count_per_hour",
    "stress_burden_ratio",
    "stress_duration_s",
    "dominant_stress_label",
    "stress_transition_count",
    "stress_transition_count_per_hour",
    "cap_a_count_window",
    "cap_a_total_duration_s_window",
    "cap_a_count_5min",
    "cap_a_total_duration_s_5min",
];

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct HiddenAnnotations {
    pub rhythm_class: Option<String>,
    pub stress_label: Option<String>,
    pub protocol_label_id: Option<i64>,
    pub activity_label: Option<String>,
    pub ecg_reference_hr_bpm: Option<f64>,
    pub sleep_stage: Option<String>,
    pub sleep_epoch_duration_s: Option<f64>,
    pub is_sleep: Option<bool>,
    pub is_wake: Option<bool>,
    pub is_rem: Option<bool>,
    pub is_nrem: Option<bool>,
    pub cap_a_overlap: Option<bool>,
    pub cap_subtype: Option<String>,
    pub body_position: Option<String>,
    pub previous_rhythm_class: Option<String>,
    pub previous_stress_label: Option<String>,
    pub previous_protocol_label_id: Option<i64>,
    pub previous_activity_label: Option<String>,
    pub previous_sleep_stage: Option<String>,
    pub previous_body_position: Option<String>,
    pub af_burden_ratio: Option<f64>,
    pub af_episode_duration_s: Option<f64>,
    pub rhythm_transition_count: Option<i64>,
    pub rhythm_transition_count_per_hour: Option<f64>,
    pub stress_burden_ratio: Option<f64>,
    pub stress_duration_s: Option<f64>,
    pub dominant_stress_label: Option<String>,
    pub stress_transition_count: Option<i64>,
    pub stress_transition_count_per_hour: Option<f64>,
    pub cap_a_count_window: Option<i64>,
    pub cap_a_total_duration_s_window: Option<f64>,
    pub cap_a_count_5min: Option<i64>,
    pub cap_a_total_duration_s_5min: Option<f64>,
}

fn de_hidden<'de, D: Deserializer<'de>>(d: D) -> Result<Option<HiddenAnnotations>, D::Error> {
    let rest = Map::<String, Value>::deserialize(d)?;
    let present: Map<String, Value> = rest
        .into_iter()
        .filter(|(k, _)| HIDDEN_FIELDS.contains(&k.as_str()))
        .collect();
    if present.is_empty() {
        return Ok(None);
    }
    serde_json::from_value(Value::Object(present))
        .map(Some)
        .map_err(D::Error::custom)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Urgency {
    Low,
    Medium,
    High,
    Critical,
}

impl Urgency {
    pub fn as_str(self) -> &'static str {
        match self {
            Urgency::Low => "low",
            Urgency::Medium => "medium",
            Urgency::High => "high",
            Urgency::Critical => "critical",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FiredRule {
    ExtremeBradycardia,
    ExtremeTachycardia,
    SustainedTachycardia,
    JudgeIntervention,
}

impl FiredRule {
    pub const RULES: [FiredRule; 3] = [
        FiredRule::ExtremeBradycardia,
        FiredRule::ExtremeTachycardia,
        FiredRule::SustainedTachycardia,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FiredRule::ExtremeBradycardia => "extreme_bradycardia",
            FiredRule::ExtremeTachycardia => "extreme_tachycardia",
            FiredRule::SustainedTachycardia => "sustained_tachycardia",
            FiredRule::JudgeIntervention => "judge_intervention",
        }
    }
}

impl fmt::Display for FiredRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CitedSection {
    pub guideline_id: String,
    pub section_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlertRecord {
    pub patient_id: String,
    pub window_index: u64,
    pub time_s: f64,
    pub fired_rule: FiredRule,
    pub urgency: Urgency,
    pub reason: String,
    pub advice: String,
    #[serde(default)]
    pub cited_sections: Vec<CitedSection>,
}

/// Per-window longitudinal record.
///
/// Absent numeric values serialise as `null`. The hidden annotation block is
/// flattened into the same object and only emitted when present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitoringState {
    pub state_id: String,
    pub patient_id: String,
    pub subject_id: Option<String>,
    pub recording_id: Option<String>,
    pub dataset: Dataset,
    pub modality: Modality,
    pub window_index: u64,
    pub window_start_s: f64,
    pub window_end_s: f64,
    pub window_duration_s: f64,
    pub recording_duration_s: Option<f64>,

    pub hr_bpm: Option<f64>,
    pub mean_hr_bpm: Option<f64>,
    pub max_hr_bpm: Option<f64>,
    pub previous_hr_bpm: Option<f64>,
    pub baseline_resting_hr: Option<f64>,
    pub hr_deviation_from_baseline: Option<f64>,
    pub sdnn_ms: Option<f64>,
    pub rmssd_ms: Option<f64>,
    pub signal_quality_score: Option<f64>,
    pub motion_level: Option<String>,

    pub mean_hr_5min: Option<f64>,
    pub tachycardia_ratio_5min: Option<f64>,

    pub alert_triggered: bool,
    pub alert_rule: Option<String>,
    pub alert_reason: Option<String>,
    pub urgency: Option<String>,

    #[serde(default)]
    pub metadata: Map<String, Value>,
    #[serde(default)]
    pub dataset_specific: Map<String, Value>,

    #[serde(flatten, deserialize_with = "de_hidden", skip_serializing_if = "Option::is_none")]
    pub hidden: Option<HiddenAnnotations>,
}

impl MonitoringState {
    /// A state with identity fields filled and everything else absent.
    pub fn for_window(
        patient_id: &str,
        dataset: Dataset,
        modality: Modality,
        window_index: u64,
        window_start_s: f64,
        window_duration_s: f64,
    ) -> Self {
        Self {
            state_id: format!("{patient_id}:{window_index}"),
            patient_id: patient_id.to_string(),
            subject_id: None,
            recording_id: None,
            dataset,
            modality,
            window_index,
            window_start_s,
            window_end_s: window_start_s + window_duration_s,
            window_duration_s,
            recording_duration_s: None,
            hr_bpm: None,
            mean_hr_bpm: None,
            max_hr_bpm: None,
            previous_hr_bpm: None,
            baseline_resting_hr: None,
            hr_deviation_from_baseline: None,
            sdnn_ms: None,
            rmssd_ms: None,
            signal_quality_score: None,
            motion_level: None,
            mean_hr_5min: None,
            tachycardia_ratio_5min: None,
            alert_triggered: false,
            alert_rule: None,
            alert_reason: None,
            urgency: None,
            metadata: Map::new(),
            dataset_specific: Map::new(),
            hidden: None,
        }
    }

    pub fn from_window(window: &SampleWindow) -> Self {
        Self::for_window(
            &window.patient_id,
            window.dataset,
            window.modality,
            window.window_index,
            window.start_s,
            window.duration_s,
        )
    }

    /// Screened rhythm class stored under processing metadata, if any.
    pub fn screened_rhythm(&self) -> Option<&str> {
        self.metadata.get("screened_rhythm").and_then(Value::as_str)
    }

    pub fn validate(&self) -> Result<()> {
        if (self.window_end_s - (self.window_start_s + self.window_duration_s)).abs() > 1e-9 {
            return Err(Error::DataIntegrity(format!(
                "state {}: window_end_s != window_start_s + window_duration_s",
                self.state_id
            )));
        }
        if !self.alert_triggered && (self.alert_rule.is_some() || self.alert_reason.is_some() || self.urgency.is_some())
        {
            return Err(Error::DataIntegrity(format!(
                "state {}: alert fields set without alert_triggered",
                self.state_id
            )));
        }
        Ok(())
    }
}

fn scrub(map: &mut Map<String, Value>) {
    map.retain(|k, _| !HIDDEN_FIELDS.contains(&k.as_str()) && !k.starts_with("reference_"));
}

/// Visible-only view of a state: hidden block dropped and leakage-prone keys
/// removed from the auxiliary containers.
pub fn leakage_filter(state: &MonitoringState) -> MonitoringState {
    let mut out = state.clone();
    out.hidden = None;
    scrub(&mut out.metadata);
    scrub(&mut out.dataset_specific);
    out
}

/// Aggregates over a run of (visible) states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSummary {
    pub window_start_s: f64,
    pub window_end_s: f64,
    pub window_count: usize,
    pub mean_hr_bpm: Option<f64>,
    pub max_hr_bpm: Option<f64>,
    pub min_hr_bpm: Option<f64>,
    pub af_window_count: usize,
    pub af_window_ratio: f64,
    pub tachycardia_window_count: usize,
    pub alert_count: usize,
}

/// AF windows are those screened as AF; tachycardia windows have a heart
/// rate strictly above `tachycardia_threshold_bpm`.
pub fn summarize_states(states: &[MonitoringState], tachycardia_threshold_bpm: f64) -> StateSummary {
    let hr: Vec<f64> = states.iter().filter_map(|s| s.hr_bpm).collect();
    let af = states.iter().filter(|s| s.screened_rhythm() == Some("AF")).count();
    let n = states.len();
    StateSummary {
        window_start_s: states.first().map_or(0.0, |s| s.window_start_s),
        window_end_s: states.last().map_or(0.0, |s| s.window_end_s),
        window_count: n,
        mean_hr_bpm: (!hr.is_empty()).then(|| hr.iter().sum::<f64>() / hr.len() as f64),
        max_hr_bpm: hr.iter().cloned().reduce(f64::max),
        min_hr_bpm: hr.iter().cloned().reduce(f64::min),
        af_window_count: af,
        af_window_ratio: if n == 0 { 0.0 } else { af as f64 / n as f64 },
        tachycardia_window_count: hr.iter().filter(|&&h| h > tachycardia_threshold_bpm).count(),
        alert_count: states.iter().filter(|s| s.alert_triggered).count(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MemoryConfig {
    pub raw_cache_windows: usize,
    pub horizon_s: f64,
    pub tachycardia_threshold_bpm: f64,
}

impl Default for MemoryConfig {
    fn default() -> Self {
        Self {
            raw_cache_windows: 64,
            horizon_s: 300.0,
            tachycardia_threshold_bpm: 100.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrailingView {
    pub mean_hr_5min: Option<f64>,
    pub tachycardia_ratio_5min: Option<f64>,
    pub tachycardia_sample_count: usize,
}

impl TrailingView {
    fn from_hr(hr: impl Iterator<Item = f64>, threshold: f64) -> Self {
        let (mut n, mut sum, mut above) = (0usize, 0.0, 0usize);
        for h in hr {
            n += 1;
            sum += h;
            if h > threshold {
                above += 1;
            }
        }
        if n == 0 {
            return Self {
                mean_hr_5min: None,
                tachycardia_ratio_5min: None,
                tachycardia_sample_count: 0,
            };
        }
        Self {
            mean_hr_5min: Some(sum / n as f64),
            tachycardia_ratio_5min: Some(above as f64 / n as f64),
            tachycardia_sample_count: n,
        }
    }
}

fn within(end: f64, current_end: f64, horizon: f64) -> bool {
    current_end - end < horizon - 1e-9
}

/// Full rescan of a state log. Reference path for the running aggregates.
pub fn rescan_trailing(states: &[MonitoringState], horizon_s: f64, threshold: f64) -> TrailingView {
    let Some(current) = states.last() else {
        return TrailingView::from_hr(std::iter::empty(), threshold);
    };
    let end = current.window_end_s;
    TrailingView::from_hr(
        states
            .iter()
            .filter(|s| within(s.window_end_s, end, horizon_s))
            .filter_map(|s| s.hr_bpm),
        threshold,
    )
}

#[derive(Debug, Clone)]
pub struct PatientMemory {
    pub config: MemoryConfig,
    states: Vec<MonitoringState>,
    alerts: Vec<AlertRecord>,
    raw: VecDeque<SampleWindow>,
    trailing: VecDeque<(f64, f64)>,
    session_max_hr: Option<f64>,
}

impl PartialEq for PatientMemory {
    /// Raw windows are a cache and are not part of the persisted identity.
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config
            && self.states == other.states
            && self.alerts == other.alerts
            && self.trailing == other.trailing
            && self.session_max_hr == other.session_max_hr
    }
}

impl Default for PatientMemory {
    fn default() -> Self {
        Self::new(MemoryConfig::default())
    }
}

pub const STATES_FILE: &str = "states.jsonl";
pub const ALERTS_FILE: &str = "alerts.jsonl";

impl PatientMemory {
    pub fn new(config: MemoryConfig) -> Self {
        Self {
            config,
            states: Vec::new(),
            alerts: Vec::new(),
            raw: VecDeque::new(),
            trailing: VecDeque::new(),
            session_max_hr: None,
        }
    }

    pub fn states(&self) -> &[MonitoringState] {
        &self.states
    }

    pub fn alerts(&self) -> &[AlertRecord] {
        &self.alerts
    }

    pub fn raw_windows(&self) -> impl Iterator<Item = &SampleWindow> {
        self.raw.iter()
    }

    pub fn last_state(&self) -> Option<&MonitoringState> {
        self.states.last()
    }

    pub fn session_max_hr(&self) -> Option<f64> {
        self.session_max_hr
    }

    pub fn next_index(&self) -> u64 {
        self.states.last().map_or(0, |s| s.window_index + 1)
    }

    fn check_order(&self, index: u64) -> Result<()> {
        let expected = self.next_index();
        if index != expected {
            return Err(Error::Ordering { expected, got: index });
        }
        Ok(())
    }

    /// Trailing aggregates as they would be after appending `candidate`.
    pub fn preview_trailing(&self, candidate: &MonitoringState) -> TrailingView {
        let end = candidate.window_end_s;
        let h = self.config.horizon_s;
        TrailingView::from_hr(
            self.trailing
                .iter()
                .filter(|(e, _)| within(*e, end, h))
                .map(|(_, hr)| *hr)
                .chain(candidate.hr_bpm),
            self.config.tachycardia_threshold_bpm,
        )
    }

    /// Appends one window summary and its alerts. Fills `previous_hr_bpm`
    /// and the trailing fields of the new state. The memory is unchanged on
    /// error.
    pub fn update(&mut self, mut state: MonitoringState, alerts: Vec<AlertRecord>) -> Result<()> {
        self.check_order(state.window_index)?;
        state.validate()?;
        for a in &alerts {
            if a.window_index != state.window_index
                || a.time_s < state.window_start_s - 1e-9
                || a.time_s > state.window_end_s + 1e-9
            {
                return Err(Error::DataIntegrity(format!(
                    "alert at {} s does not belong to window {}",
                    a.time_s, state.window_index
                )));
            }
        }
        let view = self.preview_trailing(&state);
        state.previous_hr_bpm = self.states.last().and_then(|s| s.hr_bpm);
        state.mean_hr_5min = view.mean_hr_5min;
        state.tachycardia_ratio_5min = view.tachycardia_ratio_5min;
        self.push_aggregates(&state);
        self.states.push(state);
        self.alerts.extend(alerts);
        Ok(())
    }

    fn push_aggregates(&mut self, state: &MonitoringState) {
        let end = state.window_end_s;
        let h = self.config.horizon_s;
        while self.trailing.front().is_some_and(|(e, _)| !within(*e, end, h)) {
            self.trailing.pop_front();
        }
        if let Some(hr) = state.hr_bpm {
            self.trailing.push_back((end, hr));
            self.session_max_hr = Some(self.session_max_hr.map_or(hr, |m| m.max(hr)));
        }
    }

    /// Caches a raw window, evicting the oldest beyond the configured bound.
    pub fn cache_window(&mut self, window: SampleWindow) {
        if self.config.raw_cache_windows == 0 {
            return;
        }
        while self.raw.len() >= self.config.raw_cache_windows {
            self.raw.pop_front();
        }
        self.raw.push_back(window);
    }

    pub fn trailing_view(&self, horizon_s: f64) -> TrailingView {
        let threshold = self.config.tachycardia_threshold_bpm;
        match self.states.last() {
            None => TrailingView::from_hr(std::iter::empty(), threshold),
            Some(current) if horizon_s == self.config.horizon_s => {
                let end = current.window_end_s;
                TrailingView::from_hr(
                    self.trailing
                        .iter()
                        .filter(|(e, _)| within(*e, end, horizon_s))
                        .map(|(_, hr)| *hr),
                    threshold,
                )
            }
            Some(_) => rescan_trailing(&self.states, horizon_s, threshold),
        }
    }

    /// Last `k` alerts, newest first.
    pub fn recent_alerts(&self, k: usize) -> Vec<&AlertRecord> {
        self.alerts.iter().rev().take(k).collect()
    }

    pub fn explain_last_alert(&self) -> Option<(&AlertRecord, Option<&MonitoringState>)> {
        let alert = self.alerts.last()?;
        let state = self
            .states
            .binary_search_by_key(&alert.window_index, |s| s.window_index)
            .ok()
            .map(|i| &self.states[i]);
        Some((alert, state))
    }

    pub fn persist(&self, dir: &Path) -> Result<()> {
        self.persist_view(dir, false)
    }

    /// Writes `states.jsonl` and `alerts.jsonl`; `fair` applies the leakage
    /// filter to every state.
    pub fn persist_view(&self, dir: &Path, fair: bool) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        if fair {
            let filtered: Vec<MonitoringState> = self.states.iter().map(leakage_filter).collect();
            jsonl::write(&dir.join(STATES_FILE), &filtered)?;
        } else {
            jsonl::write(&dir.join(STATES_FILE), &self.states)?;
        }
        jsonl::write(&dir.join(ALERTS_FILE), &self.alerts)
    }

    pub fn load(dir: &Path, config: MemoryConfig) -> Result<Self> {
        let states: Vec<MonitoringState> = jsonl::read(&dir.join(STATES_FILE))?;
        let alerts: Vec<AlertRecord> = jsonl::read(&dir.join(ALERTS_FILE))?;
        Self::restore(config, states, alerts)
    }

    /// Rebuilds a memory from stored logs without rewriting the states.
    pub fn restore(config: MemoryConfig, states: Vec<MonitoringState>, alerts: Vec<AlertRecord>) -> Result<Self> {
        let mut m = Self::new(config);
        for s in states {
            m.check_order(s.window_index)?;
            s.validate()?;
            m.push_aggregates(&s);
            m.states.push(s);
        }
        m.alerts = alerts;
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(i: u64, hr: Option<f64>) -> MonitoringState {
        let mut s = MonitoringState::for_window("p", Dataset::Synthetic, Modality::Ecg, i, i as f64 * 10.0, 10.0);
        s.hr_bpm = hr;
        s.signal_quality_score = Some(1.0);
        s
    }

    fn alert(i: u64) -> AlertRecord {
        AlertRecord {
            patient_id: "p".into(),
            window_index: i,
            time_s: i as f64 * 10.0 + 10.0,
            fired_rule: FiredRule::ExtremeTachycardia,
            urgency: Urgency::High,
            reason: "r".into(),
            advice: "a".into(),
            cited_sections: vec![],
        }
    }

    #[test]
    fn base_case_and_bookkeeping() {
        let mut m = PatientMemory::default();
        m.update(state(0, Some(60.0)), vec![]).unwrap();
        assert_eq!(m.states().len(), 1);
        assert_eq!(m.states()[0].previous_hr_bpm, None);
        m.update(state(1, Some(80.0)), vec![]).unwrap();
        assert_eq!(m.states()[1].previous_hr_bpm, Some(60.0));
        assert_eq!(m.session_max_hr(), Some(80.0));
    }

    #[test]
    fn ordering_errors_leave_memory_unchanged() {
        let mut m = PatientMemory::default();
        m.update(state(0, Some(60.0)), vec![]).unwrap();
        let before = m.clone();
        assert!(matches!(
            m.update(state(0, Some(61.0)), vec![]),
            Err(Error::Ordering { expected: 1, got: 0 })
        ));
        assert!(matches!(m.update(state(2, None), vec![]), Err(Error::Ordering { .. })));
        assert_eq!(m, before);
        let mut empty = PatientMemory::default();
        assert!(empty.update(state(3, None), vec![]).is_err());
    }

    #[test]
    fn trailing_counts() {
        let mut m = PatientMemory::default();
        for i in 0..40u64 {
            let hr = if (37..40).contains(&i) { 120.0 } else { 70.0 };
            m.update(state(i, Some(hr)), vec![]).unwrap();
        }
        let v = m.trailing_view(300.0);
        assert_eq!(v.tachycardia_sample_count, 30);
        assert!((v.tachycardia_ratio_5min.unwrap() - 0.1).abs() < 1e-12);
        assert_eq!(v, rescan_trailing(m.states(), 300.0, 100.0));
        assert_eq!(m.states()[39].tachycardia_ratio_5min, v.tachycardia_ratio_5min);
        let empty = PatientMemory::default().trailing_view(300.0);
        assert_eq!(
            (empty.tachycardia_ratio_5min, empty.tachycardia_sample_count),
            (None, 0)
        );
    }

    #[test]
    fn alerts_views() {
        let mut m = PatientMemory::default();
        assert!(m.recent_alerts(3).is_empty());
        assert!(m.explain_last_alert().is_none());
        for i in 0..5 {
            m.update(state(i, Some(160.0)), vec![alert(i)]).unwrap();
        }
        let last2 = m.recent_alerts(2);
        assert_eq!(last2.iter().map(|a| a.window_index).collect::<Vec<_>>(), vec![4, 3]);
        let (a, s) = m.explain_last_alert().unwrap();
        assert_eq!(s.unwrap().window_index, a.window_index);
        // An alert stamped outside its window is rejected.
        let mut bad = alert(5);
        bad.time_s = 0.0;
        assert!(m.update(state(5, None), vec![bad]).is_err());
    }

    #[test]
    fn raw_cache_is_bounded() {
        let mut m = PatientMemory::new(MemoryConfig {
            raw_cache_windows: 3,
            ..Default::default()
        });
        for i in 0..10 {
            m.cache_window(SampleWindow {
                patient_id: "p".into(),
                dataset: Dataset::Synthetic,
                modality: Modality::Ecg,
                fs: 1.0,
                start_s: i as f64,
                duration_s: 1.0,
                window_index: i,
                samples: vec![0.0],
            });
        }
        let idx: Vec<u64> = m.raw_windows().map(|w| w.window_index).collect();
        assert_eq!(idx, vec![7, 8, 9]);
    }

    #[test]
    fn persist_roundtrip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let empty = PatientMemory::default();
        empty.persist(dir.path()).unwrap();
        assert_eq!(std::fs::read_to_string(dir.path().join(STATES_FILE)).unwrap(), "");
        assert_eq!(std::fs::read_to_string(dir.path().join(ALERTS_FILE)).unwrap(), "");
        assert_eq!(PatientMemory::load(dir.path(), MemoryConfig::default()).unwrap(), empty);

        let mut m = PatientMemory::default();
        let mut s0 = state(0, Some(71.25));
        s0.hidden = Some(HiddenAnnotations {
            rhythm_class: Some("AF".into()),
            ..Default::default()
        });
        m.update(s0, vec![]).unwrap();
        m.update(state(1, None), vec![alert(1)]).unwrap();
        m.persist(dir.path()).unwrap();
        let back = PatientMemory::load(dir.path(), MemoryConfig::default()).unwrap();
        assert_eq!(back, m);

        let text = std::fs::read_to_string(dir.path().join(STATES_FILE)).unwrap();
        let first = text.lines().next().unwrap();
        std::fs::write(
            dir.path().join(STATES_FILE),
            format!("{first}\n{{\"state_id\": \"p:1\"\n"),
        )
        .unwrap();
        match PatientMemory::load(dir.path(), MemoryConfig::default()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn absent_values_serialise_as_null() {
        let v = serde_json::to_value(state(0, None)).unwrap();
        assert!(v["hr_bpm"].is_null());
        assert!(v.get("hr_bpm").is_some());
        assert!(v.get("rhythm_class").is_none());
    }

    #[test]
    fn leakage_filter_examples() {
        let mut s = state(0, Some(70.0));
        s.hidden = Some(HiddenAnnotations {
            rhythm_class: Some("AF".into()),
            ..Default::default()
        });
        s.metadata.insert("af_burden_ratio".into(), Value::from(0.5));
        s.metadata.insert("screened_rhythm".into(), Value::from("AF"));
        let f = leakage_filter(&s);
        let v = serde_json::to_value(&f).unwrap();
        assert!(v.get("rhythm_class").is_none());
        assert!(v["metadata"].get("af_burden_ratio").is_none());
        assert_eq!(v["metadata"]["screened_rhythm"], "AF");
        assert_eq!(leakage_filter(&f), f);
        let plain = state(1, Some(70.0));
        assert_eq!(leakage_filter(&plain), plain);
    }
}
