use std::collections::VecDeque;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::judge::{judge_checkpoint, GuidelineStore, JudgeBackend, JudgeOutcome, JudgeSnapshot, JudgeUrgency};
use super::rules::{dedup_episode, evaluate_rules, DedupDecision, RuleConfig};
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::features::{analyze_window, FeatureConfig, WindowFeatures};
use crate::memory::{AlertRecord, FiredRule, HiddenAnnotations, MemoryConfig, MonitoringState, PatientMemory, Urgency};
use crate::rhythm::{classify_rhythm, RhythmAssessment, RhythmClass, ScreenConfig};
use crate::signal::{derive_rr, SampleWindow};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct MonitorConfig {
    pub rules: RuleConfig,
    pub screen: ScreenConfig,
    pub features: FeatureConfig,
    pub memory: MemoryConfig,
}

impl MonitorConfig {
    pub fn validate(&self) -> Result<()> {
        self.rules.validate()?;
        self.screen.validate()
    }
}

/// Reference annotation span used to fill the hidden state block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationSpan {
    pub start_s: f64,
    pub end_s: f64,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorDiagnostic {
    pub window_index: u64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowOutcome {
    pub alerts: Vec<AlertRecord>,
    pub fired: Vec<FiredRule>,
    pub rhythm: RhythmAssessment,
    pub judge: Option<JudgeOutcome>,
}

struct ContextEntry {
    window_index: u64,
    peaks: Vec<f64>,
    saturated: f64,
    n_samples: usize,
}

/// One patient's streaming monitor. Windows must arrive in order.
pub struct Monitor {
    config: MonitorConfig,
    memory: PatientMemory,
    judge: Option<Arc<dyn JudgeBackend>>,
    guidelines: Arc<GuidelineStore>,
    annotations: Vec<AnnotationSpan>,
    patient_context: Map<String, Value>,
    context: VecDeque<ContextEntry>,
    diagnostics: Vec<MonitorDiagnostic>,
}

const MD_FIRED: &str = "fired_rules";
const MD_SCREENED: &str = "screened_rhythm";
const MD_AF_RUN: &str = "screened_af_run_s";
const MD_JUDGE: &str = "judge_intervened";

impl Monitor {
    pub fn new(config: MonitorConfig) -> Self {
        Self {
            memory: PatientMemory::new(config.memory.clone()),
            config,
            judge: None,
            guidelines: Arc::new(GuidelineStore::bundled()),
            annotations: Vec::new(),
            patient_context: Map::new(),
            context: VecDeque::new(),
            diagnostics: Vec::new(),
        }
    }

    pub fn with_judge(mut self, backend: Arc<dyn JudgeBackend>, guidelines: Arc<GuidelineStore>) -> Self {
        self.judge = Some(backend);
        self.guidelines = guidelines;
        self
    }

    pub fn with_annotations(mut self, mut spans: Vec<AnnotationSpan>) -> Self {
        spans.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
        self.annotations = spans;
        self
    }

    pub fn with_patient_context(mut self, context: Map<String, Value>) -> Self {
        self.patient_context = context;
        self
    }

    pub fn memory(&self) -> &PatientMemory {
        &self.memory
    }

    pub fn into_memory(self) -> PatientMemory {
        self.memory
    }

    pub fn diagnostics(&self) -> &[MonitorDiagnostic] {
        &self.diagnostics
    }

    /// Rhythm features over the trailing context windows.
    fn screen(&self) -> RhythmAssessment {
        let mut peaks: Vec<f64> = Vec::new();
        let (mut sat, mut n) = (0.0, 0usize);
        for e in &self.context {
            sat += e.saturated * e.n_samples as f64;
            n += e.n_samples;
            for &t in &e.peaks {
                if peaks.last().is_none_or(|&p| t > p) {
                    peaks.push(t);
                }
            }
        }
        let rr = derive_rr(&peaks, &self.config.features.rr_band);
        let sat = if n == 0 { 0.0 } else { sat / n as f64 };
        let f = WindowFeatures::from_rr(&rr, sat, &self.config.features);
        classify_rhythm(&f, &self.config.screen)
    }

    fn push_context(&mut self, window: &SampleWindow, peaks: Vec<f64>, saturated: f64) {
        if self
            .context
            .back()
            .is_some_and(|e| e.window_index + 1 != window.window_index)
        {
            self.context.clear();
        }
        self.context.push_back(ContextEntry {
            window_index: window.window_index,
            peaks,
            saturated,
            n_samples: window.samples.len(),
        });
        while self.context.len() > self.config.screen.context_windows {
            self.context.pop_front();
        }
    }

    fn hidden_block(&self, state: &MonitoringState, previous: Option<&MonitoringState>) -> Option<HiddenAnnotations> {
        if self.annotations.is_empty() {
            return None;
        }
        let (s, e) = (state.window_start_s, state.window_end_s);
        let mut af_overlap = 0.0;
        let mut af_onset: Option<f64> = None;
        for a in self
            .annotations
            .iter()
            .filter(|a| RhythmClass::normalize(&a.label) == RhythmClass::Af)
        {
            let ov = (a.end_s.min(e) - a.start_s.max(s)).max(0.0);
            if ov > 0.0 {
                af_overlap += ov;
                af_onset = Some(af_onset.map_or(a.start_s, |o: f64| o.min(a.start_s)));
            }
        }
        let dur = state.window_duration_s;
        let is_af = af_overlap >= 0.5 * dur;
        let rhythm = if is_af { "AF" } else { "N" };
        let prev = previous.and_then(|p| p.hidden.as_ref());
        let prev_rhythm = prev.and_then(|h| h.rhythm_class.clone());
        let transitions = prev.and_then(|h| h.rhythm_transition_count).unwrap_or(0)
            + i64::from(prev_rhythm.as_deref().is_some_and(|r| r != rhythm));
        let elapsed_h = (e - self.memory.states().first().map_or(s, |f| f.window_start_s)) / 3600.0;
        Some(HiddenAnnotations {
            rhythm_class: Some(rhythm.into()),
            previous_rhythm_class: prev_rhythm,
            af_burden_ratio: Some(af_overlap / dur),
            af_episode_duration_s: if is_af { af_onset.map(|o| e - o) } else { None },
            rhythm_transition_count: Some(transitions),
            rhythm_transition_count_per_hour: (elapsed_h > 0.0).then(|| transitions as f64 / elapsed_h),
            ..Default::default()
        })
    }

    pub fn process_window(&mut self, window: &SampleWindow) -> Result<WindowOutcome> {
        window.validate()?;
        let expected = self.memory.next_index();
        if window.window_index != expected {
            return Err(Error::Ordering {
                expected,
                got: window.window_index,
            });
        }
        if window.patient_id != self.patient_id_or(&window.patient_id) {
            return Err(Error::DataIntegrity(format!(
                "window for patient {} fed to another patient's monitor",
                window.patient_id
            )));
        }

        let analysis = analyze_window(window, &self.config.features);
        self.push_context(window, analysis.rr.peak_times_s.clone(), analysis.saturated_fraction);
        let rhythm = self.screen();

        let previous = self.memory.last_state().cloned();
        let prev_run = previous
            .as_ref()
            .and_then(|p| p.metadata.get(MD_AF_RUN))
            .and_then(Value::as_f64)
            .unwrap_or(0.0);
        let af_run = if rhythm.rhythm_class == RhythmClass::Af {
            prev_run + window.duration_s
        } else {
            0.0
        };

        let mut state = MonitoringState::from_window(window);
        let f = &analysis.features;
        let (mean_inst, max_inst) = analysis.instantaneous_hr();
        state.hr_bpm = f.hr_bpm;
        state.mean_hr_bpm = mean_inst;
        state.max_hr_bpm = max_inst;
        state.sdnn_ms = f.sdnn_ms;
        state.rmssd_ms = f.rmssd_ms;
        state.signal_quality_score = Some(f.signal_quality_score);
        let md = &mut state.metadata;
        md.insert(MD_SCREENED.into(), Value::from(rhythm.rhythm_class.as_str()));
        md.insert(MD_AF_RUN.into(), Value::from(af_run));
        md.insert("n_beats".into(), Value::from(f.n_beats));
        md.insert("rr_excluded".into(), Value::from(analysis.rr.excluded));
        md.insert("quality_flag".into(), Value::from(analysis.quality_flag));
        state.hidden = self.hidden_block(&state, previous.as_ref());

        let trailing = self.memory.preview_trailing(&state);
        let fired = evaluate_rules(&state, &trailing, &self.config.rules);
        let prev_fired: Vec<FiredRule> = previous
            .as_ref()
            .and_then(|p| p.metadata.get(MD_FIRED))
            .and_then(|v| serde_json::from_value(v.clone()).ok())
            .unwrap_or_default();

        let time_s = window.end_s();
        let mut alerts = Vec::new();
        for &rule in &fired {
            if dedup_episode(rule, &prev_fired) == DedupDecision::Emit {
                alerts.push(rule_alert(rule, &state, &trailing, time_s, &self.config.rules));
            }
        }
        state.metadata.insert(MD_FIRED.into(), serde_json::to_value(&fired)?);

        let period = self.config.rules.judge_period_windows;
        let mut judge_out = None;
        if let Some(backend) = self.judge.clone() {
            if (window.window_index + 1).is_multiple_of(period) {
                let snapshot = JudgeSnapshot {
                    hr_bpm: state.hr_bpm,
                    rhythm_class: match rhythm.rhythm_class {
                        RhythmClass::Unknown => None,
                        c => Some(c.as_str().to_string()),
                    },
                    af_episode_duration_s: (rhythm.rhythm_class == RhythmClass::Af).then_some(af_run),
                    tachycardia_ratio_5min: trailing.tachycardia_ratio_5min,
                    tachycardia_sample_count: trailing.tachycardia_sample_count,
                };
                let out = judge_checkpoint(
                    &snapshot,
                    &self.guidelines,
                    backend.as_ref(),
                    &self.patient_context,
                    window.modality.as_str(),
                );
                for d in &out.diagnostics {
                    self.diagnostics.push(MonitorDiagnostic {
                        window_index: window.window_index,
                        message: d.clone(),
                    });
                }
                let intervened = out.decision.intervene;
                state.metadata.insert(MD_JUDGE.into(), Value::from(intervened));
                let prev_checkpoint = window
                    .window_index
                    .checked_sub(period)
                    .and_then(|i| {
                        let first = self.memory.states().first()?.window_index;
                        self.memory.states().get(i.checked_sub(first)? as usize)
                    })
                    .and_then(|s| s.metadata.get(MD_JUDGE))
                    .and_then(Value::as_bool)
                    .unwrap_or(false);
                if intervened && !prev_checkpoint {
                    let d = &out.decision;
                    alerts.push(AlertRecord {
                        patient_id: window.patient_id.clone(),
                        window_index: window.window_index,
                        time_s,
                        fired_rule: FiredRule::JudgeIntervention,
                        urgency: match d.urgency {
                            JudgeUrgency::None | JudgeUrgency::Low => Urgency::Low,
                            JudgeUrgency::Medium => Urgency::Medium,
                            JudgeUrgency::High => Urgency::High,
                            JudgeUrgency::Critical => Urgency::Critical,
                        },
                        reason: d.reason.clone(),
                        advice: d.advice.clone(),
                        cited_sections: d.cited_sections.clone(),
                    });
                }
                judge_out = Some(out);
            }
        }

        if !alerts.is_empty() {
            state.alert_triggered = true;
            state.alert_rule = Some(
                alerts
                    .iter()
                    .map(|a| a.fired_rule.as_str())
                    .collect::<Vec<_>>()
                    .join(","),
            );
            state.alert_reason = Some(alerts.iter().map(|a| a.reason.as_str()).collect::<Vec<_>>().join("; "));
            state.urgency = alerts.iter().map(|a| a.urgency).max().map(|u| u.as_str().to_string());
        }

        self.memory.update(state, alerts.clone())?;
        self.memory.cache_window(window.clone());
        Ok(WindowOutcome {
            alerts,
            fired,
            rhythm,
            judge: judge_out,
        })
    }

    fn patient_id_or<'a>(&'a self, fallback: &'a str) -> &'a str {
        self.memory.states().first().map_or(fallback, |s| s.patient_id.as_str())
    }
}

fn rule_alert(
    rule: FiredRule,
    state: &MonitoringState,
    trailing: &crate::memory::TrailingView,
    time_s: f64,
    cfg: &RuleConfig,
) -> AlertRecord {
    let hr = state.hr_bpm.unwrap_or(f64::NAN);
    let (urgency, reason, advice) = match rule {
        FiredRule::ExtremeBradycardia => (
            Urgency::High,
            format!("Heart rate {hr:.0} bpm is below {:.0} bpm.", cfg.brady_hr_bpm),
            "If you feel dizzy, faint or short of breath, seek medical attention promptly.".to_string(),
        ),
        FiredRule::ExtremeTachycardia => (
            Urgency::High,
            format!("Heart rate {hr:.0} bpm is above {:.0} bpm.", cfg.tachy_hr_bpm),
            "Rest and, if this continues or you feel unwell, see a clinician promptly.".to_string(),
        ),
        FiredRule::SustainedTachycardia => (
            Urgency::Medium,
            format!(
                "Heart rate above {:.0} bpm in {:.0}% of the last {} readings.",
                cfg.sustained_hr_threshold_bpm,
                100.0 * trailing.tachycardia_ratio_5min.unwrap_or(0.0),
                trailing.tachycardia_sample_count
            ),
            "If you are resting, consider consulting a healthcare professional.".to_string(),
        ),
        FiredRule::JudgeIntervention => unreachable!("judge alerts are built from the decision"),
    };
    AlertRecord {
        patient_id: state.patient_id.clone(),
        window_index: state.window_index,
        time_s,
        fired_rule: rule,
        urgency,
        reason,
        advice,
        cited_sections: Vec::new(),
    }
}

/// Replays one patient's ordered windows.
pub fn replay(
    windows: &[SampleWindow],
    config: &MonitorConfig,
    judge: Option<(Arc<dyn JudgeBackend>, Arc<GuidelineStore>)>,
    annotations: Vec<AnnotationSpan>,
) -> Result<Monitor> {
    let mut m = Monitor::new(config.clone()).with_annotations(annotations);
    if let Some((backend, store)) = judge {
        m = m.with_judge(backend, store);
    }
    for w in windows {
        m.process_window(w)?;
    }
    Ok(m)
}

/// Replays several patients, in parallel when available. Patients are
/// independent; windows within a patient stay sequential.
pub fn replay_patients(
    patients: &[(Vec<SampleWindow>, Vec<AnnotationSpan>)],
    config: &MonitorConfig,
    judge: Option<(Arc<dyn JudgeBackend>, Arc<GuidelineStore>)>,
    mode: Execution,
) -> Vec<Result<Monitor>> {
    exec::map(mode, patients, |(windows, spans)| {
        replay(windows, config, judge.clone(), spans.clone())
    })
}
