//! The built-in tool set.

use std::sync::Arc;

use serde::Serialize;
use serde_json::{json, Map, Value};

use super::context::{dataset_capabilities, ToolContext};
use super::{ArgSpec, ArgType, Handler, HandlerResult, OutputKind, ToolCategory, ToolDescriptor, ToolRegistry};
use crate::features::{analyze_window, analyze_windows, WindowAnalysis};
use crate::memory::{leakage_filter, rescan_trailing, summarize_states, MonitoringState, PatientMemory};
use crate::proactive::{evaluate_rules, replay};
use crate::rhythm::{classify_rhythm, RhythmAssessment, RhythmClass};
use crate::signal::{Dataset, Modality, SampleWindow};

/// Which part of the registry to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BuiltinSet {
    /// The 29 agent-facing tools.
    Agent,
    /// Agent tools plus state construction and access tools.
    All,
}

type Args = Map<String, Value>;

fn obj(v: Value) -> Map<String, Value> {
    match v {
        Value::Object(m) => m,
        _ => Map::new(),
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

fn arg_str<'a>(args: &'a Args, name: &str) -> Option<&'a str> {
    args.get(name).and_then(Value::as_str)
}

fn arg_f64(args: &Args, name: &str) -> Option<f64> {
    args.get(name).and_then(Value::as_f64)
}

fn patient(args: &Args) -> Result<&str, String> {
    arg_str(args, "patient_id")
        .or_else(|| arg_str(args, "subject_id"))
        .ok_or_else(|| "patient_id or subject_id is required".to_string())
}

fn locator_args() -> Vec<ArgSpec> {
    vec![
        ArgSpec::required("patient_id", ArgType::String, "patient identifier"),
        ArgSpec::optional("dataset", ArgType::String, "source dataset"),
        ArgSpec::optional("window_start_s", ArgType::Number, "window start, seconds"),
        ArgSpec::optional("window_end_s", ArgType::Number, "window end, seconds"),
    ]
}

fn state_locator_args() -> Vec<ArgSpec> {
    vec![
        ArgSpec::optional("patient_id", ArgType::String, "patient identifier"),
        ArgSpec::optional("subject_id", ArgType::String, "alias of patient_id"),
        ArgSpec::optional("dataset", ArgType::String, "source dataset"),
        ArgSpec::optional("window_start_s", ArgType::Number, "range start, seconds"),
        ArgSpec::optional("window_end_s", ArgType::Number, "range end, seconds"),
    ]
}

fn windows<'a>(ctx: &'a ToolContext, args: &Args) -> Result<Vec<&'a SampleWindow>, String> {
    ctx.windows.locate(
        patient(args)?,
        arg_f64(args, "window_start_s"),
        arg_f64(args, "window_end_s"),
    )
}

fn require_modality(ws: &[&SampleWindow], m: Modality) -> Result<(), String> {
    match ws.iter().find(|w| w.modality != m) {
        Some(w) => Err(format!(
            "tool requires {m} but window {} is {}",
            w.window_index, w.modality
        )),
        None => Ok(()),
    }
}

fn analyse(ctx: &ToolContext, ws: &[&SampleWindow]) -> WindowAnalysis {
    match ws {
        [one] => analyze_window(one, &ctx.monitor.features),
        many => analyze_windows(many, &ctx.monitor.features),
    }
}

/// Rhythm screen over the same trailing context the monitor uses.
fn screen(ctx: &ToolContext, ws: &[&SampleWindow]) -> Result<RhythmAssessment, String> {
    let last = ws.last().ok_or("no windows")?;
    let mut context = ctx.windows.context_for(last, ctx.monitor.screen.context_windows);
    if ws.len() > context.len() {
        context = ws.to_vec();
    }
    let a = analyze_windows(&context, &ctx.monitor.features);
    Ok(classify_rhythm(&a.features, &ctx.monitor.screen))
}

fn context_seconds(ctx: &ToolContext, ws: &[&SampleWindow]) -> f64 {
    ws.last()
        .map(|l| {
            ctx.windows
                .context_for(l, ctx.monitor.screen.context_windows)
                .iter()
                .map(|w| w.duration_s)
                .sum()
        })
        .unwrap_or(0.0)
}

fn rhythm_payload(ctx: &ToolContext, ws: &[&SampleWindow]) -> Result<Map<String, Value>, String> {
    let r = screen(ctx, ws)?;
    Ok(obj(json!({
        "rhythm_class": r.rhythm_class.as_str(),
        "af_detected": r.rhythm_class == RhythmClass::Af,
        "irregular": matches!(r.rhythm_class, RhythmClass::Af | RhythmClass::Other),
        "cv": r.evidence.cv,
        "delta_rr_entropy": r.evidence.delta_rr_entropy,
        "turning_point_ratio": r.evidence.turning_point_ratio,
        "n_beats": r.evidence.n_beats,
        "context_s": context_seconds(ctx, ws),
        "modality": ws[0].modality.as_str(),
    })))
}

fn quality_payload(ctx: &ToolContext, ws: &[&SampleWindow]) -> Map<String, Value> {
    let a = analyse(ctx, ws);
    let q = a.features.signal_quality_score;
    obj(json!({
        "signal_quality_score": q,
        "quality_flag": a.quality_flag,
        "saturated_fraction": a.saturated_fraction,
        "usable": q >= ctx.monitor.screen.q_min && !a.quality_flag,
        "n_beats": a.features.n_beats,
        "rr_excluded": a.rr.excluded,
    }))
}

fn morphology_payload(ctx: &ToolContext, ws: &[&SampleWindow], lead: Option<&str>) -> Map<String, Value> {
    let a = analyse(ctx, ws);
    let q = a.features.signal_quality_score;
    let mut m = obj(json!({
        "morphology_assessable": q >= ctx.monitor.screen.q_min && !a.quality_flag,
        "signal_quality_score": q,
        "basis": "signal_quality",
        "note": "Waveform morphology is not measured; assessability follows signal quality only.",
    }));
    if let Some(l) = lead {
        m.insert("lead".into(), Value::from(l));
    }
    m
}

fn loader_payload(ws: &[&SampleWindow], dataset_default: Dataset) -> Map<String, Value> {
    let n: usize = ws.iter().map(|w| w.samples.len()).sum();
    let all = ws.iter().flat_map(|w| w.samples.iter().copied());
    let (mut sum, mut sq, mut lo, mut hi) = (0.0, 0.0, f64::INFINITY, f64::NEG_INFINITY);
    for v in all {
        sum += v;
        sq += v * v;
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let mean = if n > 0 { sum / n as f64 } else { 0.0 };
    let sd = if n > 0 {
        (sq / n as f64 - mean * mean).max(0.0).sqrt()
    } else {
        0.0
    };
    let first = ws[0];
    let last = ws[ws.len() - 1];
    obj(json!({
        "patient_id": first.patient_id,
        "dataset": first.dataset.as_str(),
        "dataset_default": dataset_default.as_str(),
        "modality": first.modality.as_str(),
        "fs": first.fs,
        "window_start_s": first.start_s,
        "window_end_s": last.end_s(),
        "n_windows": ws.len(),
        "window_indices": ws.iter().map(|w| w.window_index).collect::<Vec<_>>(),
        "n_samples": n,
        "summary": {"mean": mean, "sd": sd, "min": lo, "max": hi},
    }))
}

fn records(ctx: &ToolContext, m: Modality) -> Map<String, Value> {
    let list: Vec<Value> = ctx
        .windows
        .patients()
        .filter(|(_, ws)| ws.first().is_some_and(|w| w.modality == m))
        .map(|(pid, ws)| {
            json!({
                "patient_id": pid,
                "dataset": ws[0].dataset.as_str(),
                "n_windows": ws.len(),
                "duration_s": ws.iter().map(|w| w.duration_s).sum::<f64>(),
            })
        })
        .collect();
    obj(json!({ "modality": m.as_str(), "count": list.len(), "records": list }))
}

fn record_windows<'a>(ctx: &'a ToolContext, args: &Args, m: Modality) -> Result<&'a [SampleWindow], String> {
    let pid = patient(args)?;
    let ws = ctx.windows.windows(pid);
    match ws.first() {
        None => Err(format!("no record for patient {pid}")),
        Some(w) if w.modality != m => Err(format!("record {pid} is {}, not {m}", w.modality)),
        Some(_) => Ok(ws),
    }
}

fn record_metadata(ws: &[SampleWindow]) -> Map<String, Value> {
    let (first, last) = (&ws[0], &ws[ws.len() - 1]);
    obj(json!({
        "patient_id": first.patient_id,
        "dataset": first.dataset.as_str(),
        "modality": first.modality.as_str(),
        "fs": first.fs,
        "n_windows": ws.len(),
        "window_duration_s": first.duration_s,
        "start_s": first.start_s,
        "end_s": last.end_s(),
        "duration_s": last.end_s() - first.start_s,
    }))
}

fn record_description(ws: &[SampleWindow]) -> Map<String, Value> {
    let (first, last) = (&ws[0], &ws[ws.len() - 1]);
    let text = format!(
        "{} recording of patient {} ({}): {} windows of {} s at {} Hz covering {} s to {} s.",
        first.modality,
        first.patient_id,
        first.dataset,
        ws.len(),
        first.duration_s,
        first.fs,
        first.start_s,
        last.end_s()
    );
    obj(json!({ "patient_id": first.patient_id, "description": text }))
}

fn memory<'a>(ctx: &'a ToolContext, args: &Args) -> Result<&'a PatientMemory, String> {
    ctx.memory(patient(args)?).map_err(|e| e.to_string())
}

const EPS: f64 = 1e-6;

fn states_in<'a>(mem: &'a PatientMemory, args: &Args) -> Vec<&'a MonitoringState> {
    let (s, e) = (arg_f64(args, "window_start_s"), arg_f64(args, "window_end_s"));
    mem.states()
        .iter()
        .filter(|st| s.is_none_or(|s| st.window_start_s >= s - EPS) && e.is_none_or(|e| st.window_end_s <= e + EPS))
        .collect()
}

/// Position of the state a locator points at: the last state inside the
/// range, or the latest state when no range is given.
fn state_position(mem: &PatientMemory, args: &Args) -> Result<usize, String> {
    let target = states_in(mem, args)
        .last()
        .map(|s| s.window_index)
        .ok_or("no monitoring state inside the requested range")?;
    mem.states()
        .iter()
        .position(|s| s.window_index == target)
        .ok_or_else(|| "state index out of range".into())
}

fn visible(state: &MonitoringState) -> Value {
    to_value(&leakage_filter(state))
}

fn stress_payload(ctx: &ToolContext, ws: &[&SampleWindow]) -> Result<Map<String, Value>, String> {
    let a = analyse(ctx, ws);
    let hr = a.features.hr_bpm.ok_or("too few beats for a heart rate")?;
    let rmssd = a.features.rmssd_ms;
    let stressed = hr >= 90.0 && rmssd.is_none_or(|r| r < 30.0);
    Ok(obj(json!({
        "stress_state": if stressed { "stress" } else { "baseline" },
        "basis_hr_bpm": hr,
        "basis_rmssd_ms": rmssd,
        "rule": "stress iff hr >= 90 bpm and rmssd < 30 ms",
    })))
}

fn build_states(ctx: &ToolContext, args: &Args, m: Option<Modality>) -> HandlerResult {
    let pid = patient(args)?;
    let ws = ctx.windows.windows(pid);
    if ws.is_empty() {
        return Err(format!("no record for patient {pid}"));
    }
    if let Some(m) = m {
        require_modality(&ws.iter().collect::<Vec<_>>(), m)?;
    }
    let mon = replay(ws, &ctx.monitor, None, Vec::new()).map_err(|e| e.to_string())?;
    let mem = mon.memory();
    Ok(obj(json!({
        "patient_id": pid,
        "n_states": mem.states().len(),
        "n_alerts": mem.alerts().len(),
        "first_window_index": mem.states().first().map(|s| s.window_index),
        "last_window_index": mem.states().last().map(|s| s.window_index),
    })))
}

const EVIDENCE_FIELDS: &[&str] = &[
    "hr_bpm",
    "mean_hr_bpm",
    "max_hr_bpm",
    "sdnn_ms",
    "rmssd_ms",
    "signal_quality_score",
    "mean_hr_5min",
    "tachycardia_ratio_5min",
    "alert_triggered",
    "screened_rhythm",
];

fn field_of(state: &Value, name: &str) -> Value {
    state
        .get(name)
        .or_else(|| state.get("metadata").and_then(|m| m.get(name)))
        .cloned()
        .unwrap_or(Value::Null)
}

struct Spec {
    name: &'static str,
    category: ToolCategory,
    output_kind: OutputKind,
    description: &'static str,
    args: Vec<ArgSpec>,
    required: &'static [&'static str],
    benchmark_only: bool,
    handler: Handler,
}

fn spec(
    name: &'static str,
    category: ToolCategory,
    output_kind: OutputKind,
    description: &'static str,
    args: Vec<ArgSpec>,
    required: &'static [&'static str],
    handler: impl Fn(&Args, &ToolContext) -> HandlerResult + Send + Sync + 'static,
) -> Spec {
    Spec {
        name,
        category,
        output_kind,
        description,
        args,
        required,
        benchmark_only: false,
        handler: Arc::new(handler),
    }
}

fn specs() -> Vec<Spec> {
    use OutputKind::*;
    use ToolCategory::*;
    let mut v = vec![
        spec(
            "analyze_heart_rate",
            SignalAnalysis,
            Data,
            "Heart rate from detected beats in the located window(s).",
            locator_args(),
            &["hr_bpm"],
            |a, c| {
                let ws = windows(c, a)?;
                let an = analyse(c, &ws);
                Ok(obj(json!({
                    "hr_bpm": an.features.hr_bpm,
                    "n_beats": an.features.n_beats,
                    "signal_quality_score": an.features.signal_quality_score,
                    "modality": ws[0].modality.as_str(),
                })))
            },
        ),
        spec(
            "analyze_pulse_rate",
            SignalAnalysis,
            Data,
            "Pulse rate from detected pulses in the located window(s).",
            locator_args(),
            &["pulse_rate_bpm"],
            |a, c| {
                let ws = windows(c, a)?;
                let an = analyse(c, &ws);
                Ok(obj(json!({
                    "pulse_rate_bpm": an.features.hr_bpm,
                    "n_beats": an.features.n_beats,
                    "signal_quality_score": an.features.signal_quality_score,
                    "modality": ws[0].modality.as_str(),
                })))
            },
        ),
        spec(
            "analyze_hrv",
            SignalAnalysis,
            Data,
            "Time-domain heart rate variability (SDNN, RMSSD).",
            locator_args(),
            &["sdnn_ms", "rmssd_ms"],
            |a, c| {
                let ws = windows(c, a)?;
                let an = analyse(c, &ws);
                Ok(obj(json!({
                    "sdnn_ms": an.features.sdnn_ms,
                    "rmssd_ms": an.features.rmssd_ms,
                    "n_intervals": an.rr.len(),
                })))
            },
        ),
        spec(
            "analyze_prv",
            SignalAnalysis,
            Data,
            "Pulse rate variability (SDNN, RMSSD of pulse intervals).",
            locator_args(),
            &["sdnn_ms", "rmssd_ms"],
            |a, c| {
                let ws = windows(c, a)?;
                let an = analyse(c, &ws);
                Ok(obj(json!({
                    "sdnn_ms": an.features.sdnn_ms,
                    "rmssd_ms": an.features.rmssd_ms,
                    "n_intervals": an.rr.len(),
                    "modality": ws[0].modality.as_str(),
                })))
            },
        ),
        spec(
            "assess_signal_quality",
            SignalAnalysis,
            Metadata,
            "Signal quality score, saturation and usability of the located window(s).",
            locator_args(),
            &["signal_quality_score", "usable"],
            |a, c| Ok(quality_payload(c, &windows(c, a)?)),
        ),
        spec(
            "assess_ppg_signal_quality",
            SignalAnalysis,
            Metadata,
            "Signal quality of PPG window(s).",
            locator_args(),
            &["signal_quality_score", "usable"],
            |a, c| {
                let ws = windows(c, a)?;
                require_modality(&ws, Modality::Ppg)?;
                Ok(quality_payload(c, &ws))
            },
        ),
        spec(
            "assess_all_leads_quality",
            SignalAnalysis,
            Metadata,
            "Per-lead ECG quality; single-lead streams report one lead.",
            locator_args(),
            &["leads", "signal_quality_score"],
            |a, c| {
                let ws = windows(c, a)?;
                require_modality(&ws, Modality::Ecg)?;
                let mut q = quality_payload(c, &ws);
                let lead =
                    json!({"lead": "I", "signal_quality_score": q["signal_quality_score"], "usable": q["usable"]});
                q.insert("leads".into(), json!([lead]));
                Ok(q)
            },
        ),
        spec(
            "analyze_ppg_rhythm_irregularity",
            SignalAnalysis,
            Evidence,
            "Pulse-interval irregularity screen (N / AF / Other) for PPG.",
            locator_args(),
            &["rhythm_class", "irregular"],
            |a, c| {
                let ws = windows(c, a)?;
                require_modality(&ws, Modality::Ppg)?;
                rhythm_payload(c, &ws)
            },
        ),
        spec(
            "analyze_morphology",
            SignalAnalysis,
            Evidence,
            "ECG waveform morphology assessability.",
            locator_args(),
            &["morphology_assessable"],
            |a, c| {
                let ws = windows(c, a)?;
                require_modality(&ws, Modality::Ecg)?;
                Ok(morphology_payload(c, &ws, None))
            },
        ),
        spec(
            "analyze_lead_morphology",
            SignalAnalysis,
            Evidence,
            "Per-lead ECG morphology assessability.",
            {
                let mut a = locator_args();
                a.push(ArgSpec::optional("lead", ArgType::String, "lead name"));
                a
            },
            &["morphology_assessable", "lead"],
            |a, c| {
                let ws = windows(c, a)?;
                require_modality(&ws, Modality::Ecg)?;
                Ok(morphology_payload(c, &ws, Some(arg_str(a, "lead").unwrap_or("I"))))
            },
        ),
        spec(
            "ecg_diagnosis",
            SignalAnalysis,
            Evidence,
            "RR-irregularity rhythm screen (N / AF / Other) on ECG; not a diagnosis.",
            locator_args(),
            &["rhythm_class", "af_detected"],
            |a, c| {
                let ws = windows(c, a)?;
                require_modality(&ws, Modality::Ecg)?;
                rhythm_payload(c, &ws)
            },
        ),
        spec(
            "analyze_af_ppg_ecg_rhythm_context",
            SignalAnalysis,
            Evidence,
            "Rhythm screen for either modality over the trailing context.",
            locator_args(),
            &["rhythm_class", "af_detected"],
            |a, c| rhythm_payload(c, &windows(c, a)?),
        ),
        spec(
            "classify_wesad_stress_state",
            SignalAnalysis,
            Evidence,
            "Threshold heuristic stress / baseline label from heart rate and RMSSD.",
            locator_args(),
            &["stress_state"],
            |a, c| stress_payload(c, &windows(c, a)?),
        ),
        spec(
            "analyze_icentia11k_ecg_window_signal",
            DatasetProcessing,
            Data,
            "Load ECG window(s) in canonical form with summary statistics.",
            locator_args(),
            &["n_samples", "fs", "modality"],
            |a, c| {
                let ws = windows(c, a)?;
                require_modality(&ws, Modality::Ecg)?;
                Ok(loader_payload(&ws, Dataset::Icentia11k))
            },
        ),
        spec(
            "analyze_ppg_dalia_window_signal",
            DatasetProcessing,
            Data,
            "Load PPG window(s) in canonical form with summary statistics.",
            locator_args(),
            &["n_samples", "fs", "modality"],
            |a, c| {
                let ws = windows(c, a)?;
                require_modality(&ws, Modality::Ppg)?;
                Ok(loader_payload(&ws, Dataset::PpgDalia))
            },
        ),
        spec(
            "analyze_wesad_window_signal",
            DatasetProcessing,
            Data,
            "Load ECG or PPG window(s) in canonical form with summary statistics.",
            locator_args(),
            &["n_samples", "fs", "modality"],
            |a, c| Ok(loader_payload(&windows(c, a)?, Dataset::Wesad)),
        ),
        spec(
            "list_ecg_records",
            RecordLookup,
            Metadata,
            "List stored ECG records.",
            vec![],
            &["records", "count"],
            |_, c| Ok(records(c, Modality::Ecg)),
        ),
        spec(
            "list_ppg_records",
            RecordLookup,
            Metadata,
            "List stored PPG records.",
            vec![],
            &["records", "count"],
            |_, c| Ok(records(c, Modality::Ppg)),
        ),
        spec(
            "get_ecg_metadata",
            RecordLookup,
            Metadata,
            "Metadata of one ECG record.",
            vec![ArgSpec::required("patient_id", ArgType::String, "patient identifier")],
            &["patient_id", "fs", "n_windows"],
            |a, c| Ok(record_metadata(record_windows(c, a, Modality::Ecg)?)),
        ),
        spec(
            "get_ppg_metadata",
            RecordLookup,
            Metadata,
            "Metadata of one PPG record.",
            vec![ArgSpec::required("patient_id", ArgType::String, "patient identifier")],
            &["patient_id", "fs", "n_windows"],
            |a, c| Ok(record_metadata(record_windows(c, a, Modality::Ppg)?)),
        ),
        spec(
            "get_ecg_description",
            RecordLookup,
            Explanation,
            "Plain-text description of one ECG record.",
            vec![ArgSpec::required("patient_id", ArgType::String, "patient identifier")],
            &["description"],
            |a, c| Ok(record_description(record_windows(c, a, Modality::Ecg)?)),
        ),
        spec(
            "get_ppg_description",
            RecordLookup,
            Explanation,
            "Plain-text description of one PPG record.",
            vec![ArgSpec::required("patient_id", ArgType::String, "patient identifier")],
            &["description"],
            |a, c| Ok(record_description(record_windows(c, a, Modality::Ppg)?)),
        ),
        spec(
            "proactive_get_recent_alerts",
            ProactiveContext,
            State,
            "Most recent alerts of a patient, newest first.",
            vec![
                ArgSpec::required("patient_id", ArgType::String, "patient identifier"),
                ArgSpec::optional("k", ArgType::Integer, "how many alerts (default 5)"),
            ],
            &["alerts", "count"],
            |a, c| {
                let k = a.get("k").and_then(Value::as_u64).unwrap_or(5) as usize;
                let alerts = memory(c, a)?.recent_alerts(k);
                Ok(obj(json!({ "count": alerts.len(), "alerts": alerts })))
            },
        ),
        spec(
            "proactive_explain_last_alert",
            ProactiveContext,
            Explanation,
            "Why the last alert fired, with the state it fired on.",
            vec![ArgSpec::required("patient_id", ArgType::String, "patient identifier")],
            &["explanation"],
            |a, c| {
                let mem = memory(c, a)?;
                Ok(match mem.explain_last_alert() {
                    None => obj(json!({
                        "explanation": "No alert has been raised for this patient.",
                        "alert": null,
                        "state": null,
                    })),
                    Some((alert, state)) => obj(json!({
                        "explanation": format!(
                            "{} at {} s ({} urgency): {}",
                            alert.fired_rule, alert.time_s, alert.urgency.as_str(), alert.reason
                        ),
                        "alert": alert,
                        "state": state.map(visible),
                    })),
                })
            },
        ),
        spec(
            "proactive_list_patient_contexts",
            ProactiveContext,
            Metadata,
            "Patients with monitoring memory or stored context.",
            vec![],
            &["patients", "count"],
            |_, c| {
                let mut ids: Vec<&str> = c.memories.keys().map(String::as_str).collect();
                ids.extend(c.patient_contexts.keys().map(String::as_str));
                ids.sort_unstable();
                ids.dedup();
                Ok(obj(json!({ "count": ids.len(), "patients": ids })))
            },
        ),
        spec(
            "proactive_load_patient_context",
            ProactiveContext,
            State,
            "Stored context and memory size of one patient.",
            vec![ArgSpec::required("patient_id", ArgType::String, "patient identifier")],
            &["patient_id", "context"],
            |a, c| {
                let pid = patient(a)?;
                let context = c.patient_contexts.get(pid).cloned();
                let mem = c.memories.get(pid);
                if context.is_none() && mem.is_none() {
                    return Err(format!("no context for patient {pid}"));
                }
                Ok(obj(json!({
                    "patient_id": pid,
                    "context": context.unwrap_or_default(),
                    "n_states": mem.map_or(0, |m| m.states().len()),
                    "n_alerts": mem.map_or(0, |m| m.alerts().len()),
                })))
            },
        ),
        spec(
            "evaluate_proactive_rules",
            ProactiveContext,
            Evidence,
            "Re-evaluate the alert rules on a stored state.",
            vec![
                ArgSpec::required("patient_id", ArgType::String, "patient identifier"),
                ArgSpec::optional("window_index", ArgType::Integer, "state to evaluate (default latest)"),
            ],
            &["fired_rules"],
            |a, c| {
                let mem = memory(c, a)?;
                let states = mem.states();
                let pos = match a.get("window_index").and_then(Value::as_u64) {
                    Some(i) => states
                        .iter()
                        .position(|s| s.window_index == i)
                        .ok_or_else(|| format!("no state with window_index {i}"))?,
                    None => states.len().checked_sub(1).ok_or("no states")?,
                };
                let mcfg = &c.monitor.memory;
                let trailing = rescan_trailing(&states[..=pos], mcfg.horizon_s, mcfg.tachycardia_threshold_bpm);
                let fired = evaluate_rules(&states[pos], &trailing, &c.monitor.rules);
                Ok(obj(json!({
                    "window_index": states[pos].window_index,
                    "fired_rules": fired,
                    "hr_bpm": states[pos].hr_bpm,
                    "tachycardia_ratio_5min": trailing.tachycardia_ratio_5min,
                    "tachycardia_sample_count": trailing.tachycardia_sample_count,
                })))
            },
        ),
        spec(
            "medical_info_search",
            MedicalKnowledge,
            Evidence,
            "Search consumer health references.",
            vec![
                ArgSpec::required("query", ArgType::String, "search text"),
                ArgSpec::optional("limit", ArgType::Integer, "maximum results (default 3)"),
            ],
            &["results", "count"],
            |a, c| {
                let q = arg_str(a, "query").unwrap_or_default();
                let limit = a.get("limit").and_then(Value::as_u64).unwrap_or(3) as usize;
                let hits = c.knowledge.search(q, limit).map_err(|e| e.to_string())?;
                Ok(obj(json!({ "count": hits.len(), "results": hits })))
            },
        ),
        spec(
            "medical_knowledge",
            MedicalKnowledge,
            Explanation,
            "Definition and background for a medical topic.",
            vec![ArgSpec::required("topic", ArgType::String, "topic name")],
            &["topic", "summary"],
            |a, c| {
                let t = arg_str(a, "topic").unwrap_or_default();
                match c.knowledge.lookup(t).map_err(|e| e.to_string())? {
                    Some(e) => Ok(obj(to_value(&e))),
                    None => Err(format!("no reference entry for {t:?}")),
                }
            },
        ),
    ];

    let build = |name, m: Option<Modality>, description| {
        let mut s = spec(
            name,
            StateAccess,
            State,
            description,
            vec![ArgSpec::required("patient_id", ArgType::String, "patient identifier")],
            &["n_states"],
            move |a, c| build_states(c, a, m),
        );
        s.benchmark_only = true;
        s
    };
    v.push(build(
        "state_build_from_ecg_record",
        Some(Modality::Ecg),
        "Replay an ECG record into monitoring states.",
    ));
    v.push(build(
        "state_build_from_ppg_dalia_pickle",
        Some(Modality::Ppg),
        "Replay a wrist PPG record into monitoring states.",
    ));
    v.push(build(
        "state_build_from_ppg_patient",
        Some(Modality::Ppg),
        "Replay one PPG patient into monitoring states.",
    ));
    v.push(build(
        "state_build_from_wesad_pickle",
        None,
        "Replay a chest or wrist record into monitoring states.",
    ));

    v.extend([
        spec(
            "state_get_current_monitoring_state",
            StateAccess,
            State,
            "Visible monitoring state at the located window (default latest).",
            state_locator_args(),
            &["state"],
            |a, c| {
                let mem = memory(c, a)?;
                let i = state_position(mem, a)?;
                Ok(obj(json!({ "state": visible(&mem.states()[i]) })))
            },
        ),
        spec(
            "state_get_previous_monitoring_state",
            StateAccess,
            State,
            "Visible monitoring state just before the located window.",
            state_locator_args(),
            &["state"],
            |a, c| {
                let mem = memory(c, a)?;
                let i = state_position(mem, a)?;
                let prev = i.checked_sub(1).ok_or("no earlier state")?;
                Ok(obj(json!({
                    "state": visible(&mem.states()[prev]),
                    "current_window_index": mem.states()[i].window_index,
                })))
            },
        ),
        spec(
            "state_get_dataset_capabilities",
            StateAccess,
            Metadata,
            "Which targets a dataset supports.",
            vec![ArgSpec::required("dataset", ArgType::String, "dataset name")],
            &["dataset", "modalities"],
            |a, _| {
                let name = arg_str(a, "dataset").unwrap_or_default();
                let d = Dataset::parse(name).ok_or_else(|| format!("unknown dataset {name:?}"))?;
                Ok(obj(to_value(&dataset_capabilities(d))))
            },
        ),
        spec(
            "state_get_evidence",
            StateAccess,
            Evidence,
            "Selected visible fields of the located state.",
            {
                let mut a = state_locator_args();
                a.push(ArgSpec::optional("fields", ArgType::Array, "field names"));
                a
            },
            &["evidence", "window_index"],
            |a, c| {
                let mem = memory(c, a)?;
                let st = &mem.states()[state_position(mem, a)?];
                let v = visible(st);
                let wanted: Vec<String> = match a.get("fields").and_then(Value::as_array) {
                    Some(f) => f.iter().filter_map(Value::as_str).map(str::to_string).collect(),
                    None => EVIDENCE_FIELDS.iter().map(|s| s.to_string()).collect(),
                };
                let ev: Map<String, Value> = wanted.iter().map(|f| (f.clone(), field_of(&v, f))).collect();
                Ok(obj(json!({ "window_index": st.window_index, "evidence": ev })))
            },
        ),
        spec(
            "state_get_longitudinal_trend",
            StateAccess,
            Evidence,
            "Trend of one numeric state field over the located range.",
            {
                let mut a = state_locator_args();
                a.push(ArgSpec::optional(
                    "field",
                    ArgType::String,
                    "numeric field (default hr_bpm)",
                ));
                a
            },
            &["field", "n", "trend"],
            |a, c| {
                let mem = memory(c, a)?;
                let field = arg_str(a, "field").unwrap_or("hr_bpm");
                let pts: Vec<(f64, f64)> = states_in(mem, a)
                    .into_iter()
                    .filter_map(|s| field_of(&visible(s), field).as_f64().map(|v| (s.window_end_s, v)))
                    .collect();
                if pts.len() < 2 {
                    return Err(format!("fewer than two values of {field} in range"));
                }
                let n = pts.len() as f64;
                let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
                let mv = pts.iter().map(|p| p.1).sum::<f64>() / n;
                let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
                let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - mv)).sum();
                let slope_h = if sxx > 0.0 { sxy / sxx * 3600.0 } else { 0.0 };
                let span_h = (pts[pts.len() - 1].0 - pts[0].0) / 3600.0;
                let change = slope_h * span_h;
                let trend = if change.abs() < 0.05 * mv.abs() {
                    "stable"
                } else if change > 0.0 {
                    "increasing"
                } else {
                    "decreasing"
                };
                Ok(obj(json!({
                    "field": field,
                    "n": pts.len(),
                    "first": pts[0].1,
                    "last": pts[pts.len() - 1].1,
                    "mean": mv,
                    "slope_per_hour": slope_h,
                    "trend": trend,
                })))
            },
        ),
        spec(
            "state_get_monitoring_window",
            StateAccess,
            Evidence,
            "Aggregates over the states inside a time range.",
            state_locator_args(),
            &["window_count"],
            |a, c| {
                let mem = memory(c, a)?;
                let states: Vec<MonitoringState> = states_in(mem, a).into_iter().map(leakage_filter).collect();
                if states.is_empty() {
                    return Err("no monitoring state inside the requested range".into());
                }
                let summary = summarize_states(&states, c.monitor.memory.tachycardia_threshold_bpm);
                Ok(obj(to_value(&summary)))
            },
        ),
        spec(
            "state_list_contexts",
            StateAccess,
            Metadata,
            "Patients with monitoring states.",
            vec![],
            &["contexts", "count"],
            |_, c| {
                let list: Vec<Value> = c
                    .memories
                    .iter()
                    .map(|(pid, m)| {
                        let first = m.states().first();
                        json!({
                            "patient_id": pid,
                            "dataset": first.map(|s| s.dataset.as_str()),
                            "modality": first.map(|s| s.modality.as_str()),
                            "n_states": m.states().len(),
                            "start_s": first.map(|s| s.window_start_s),
                            "end_s": m.states().last().map(|s| s.window_end_s),
                        })
                    })
                    .collect();
                Ok(obj(json!({ "count": list.len(), "contexts": list })))
            },
        ),
        spec(
            "state_load_monitoring_states",
            StateAccess,
            State,
            "Visible monitoring states inside a time range.",
            {
                let mut a = state_locator_args();
                a.push(ArgSpec::optional("limit", ArgType::Integer, "maximum states"));
                a
            },
            &["states", "count"],
            |a, c| {
                let mem = memory(c, a)?;
                let limit = a
                    .get("limit")
                    .and_then(Value::as_u64)
                    .map_or(usize::MAX, |l| l as usize);
                let states: Vec<Value> = states_in(mem, a).into_iter().take(limit).map(visible).collect();
                Ok(obj(json!({ "count": states.len(), "states": states })))
            },
        ),
    ]);
    v
}

pub fn builtin_registry(set: BuiltinSet) -> ToolRegistry {
    let mut reg = ToolRegistry::new();
    for s in specs() {
        if set == BuiltinSet::Agent && s.category == ToolCategory::StateAccess {
            continue;
        }
        let desc = ToolDescriptor {
            name: s.name.into(),
            category: s.category,
            description: s.description.into(),
            arg_schema: s.args,
            output_kind: s.output_kind,
            required_output_fields: s.required.iter().map(|f| f.to_string()).collect(),
            benchmark_only: s.benchmark_only,
        };
        reg.register(desc, s.handler).expect("built-in tool names are unique");
    }
    reg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::proactive::MonitorConfig;
    use crate::signal::{segment_stream, synthesize_stream, StreamMeta, StreamScript};
    use crate::tools::{ToolErrorCode, WindowStore};
    use std::collections::BTreeMap;

    fn ctx(hr: f64) -> ToolContext {
        let script = StreamScript::new(120.0, hr, 5);
        let out = synthesize_stream(&script, 250.0).unwrap();
        let meta = StreamMeta::new("p1", Dataset::Synthetic, Modality::Ecg);
        let seg = segment_stream(&meta, &out.samples, out.fs, 10.0).unwrap();
        let cfg = MonitorConfig::default();
        let mon = replay(&seg.windows, &cfg, None, Vec::new()).unwrap();
        let mut memories = BTreeMap::new();
        memories.insert("p1".to_string(), mon.into_memory());
        ToolContext::new(WindowStore::from_windows(seg.windows), memories, cfg)
    }

    fn args(v: Value) -> Map<String, Value> {
        obj(v)
    }

    #[test]
    fn counts_per_category() {
        let agent = builtin_registry(BuiltinSet::Agent);
        assert_eq!(agent.len(), 29);
        let all = builtin_registry(BuiltinSet::All);
        assert_eq!(all.len(), 41);
        assert_eq!(all.allowed_tool_names().len(), 37);
        let n = |c| all.list_tools(Some(c)).len();
        assert_eq!(n(ToolCategory::SignalAnalysis), 13);
        assert_eq!(n(ToolCategory::DatasetProcessing), 3);
        assert_eq!(n(ToolCategory::RecordLookup), 6);
        assert_eq!(n(ToolCategory::ProactiveContext), 5);
        assert_eq!(n(ToolCategory::MedicalKnowledge), 2);
        assert_eq!(n(ToolCategory::StateAccess), 12);
    }

    #[test]
    fn heart_rate_on_fixture_window() {
        let c = ctx(70.0);
        let reg = builtin_registry(BuiltinSet::All);
        let r = reg.invoke(
            "analyze_heart_rate",
            &args(json!({"patient_id": "p1", "window_start_s": 50.0, "window_end_s": 60.0})),
            &c,
        );
        assert!(r.is_ok(), "{r:?}");
        let hr = r.field("hr_bpm").unwrap().as_f64().unwrap();
        assert!((hr - 70.0).abs() < 2.0, "{hr}");
        let stored = c.memories["p1"].states()[5].hr_bpm.unwrap();
        assert_eq!(hr, stored);

        let bad = reg.invoke("analyze_heart_rate", &args(json!({"window_start_s": 0.0})), &c);
        assert_eq!(bad.error_code, Some(ToolErrorCode::InvalidArgs));
    }

    #[test]
    fn modality_gates() {
        let c = ctx(70.0);
        let reg = builtin_registry(BuiltinSet::All);
        let a = args(json!({"patient_id": "p1"}));
        assert!(reg.invoke("ecg_diagnosis", &a, &c).is_ok());
        let ppg = reg.invoke("analyze_ppg_rhythm_irregularity", &a, &c);
        assert_eq!(ppg.error_code, Some(ToolErrorCode::ToolFailure));
        assert!(reg.invoke("get_ecg_metadata", &a, &c).is_ok());
        assert!(!reg.invoke("get_ppg_metadata", &a, &c).is_ok());
    }

    #[test]
    fn diagnosis_matches_screened_state() {
        let c = ctx(72.0);
        let reg = builtin_registry(BuiltinSet::All);
        for st in c.memories["p1"].states() {
            let r = reg.invoke(
                "ecg_diagnosis",
                &args(
                    json!({"patient_id": "p1", "window_start_s": st.window_start_s, "window_end_s": st.window_end_s}),
                ),
                &c,
            );
            assert_eq!(r.field("rhythm_class").and_then(Value::as_str), st.screened_rhythm());
        }
    }

    #[test]
    fn state_tools_are_leakage_free() {
        let mut c = ctx(70.0);
        let mem = c.memories.get_mut("p1").unwrap();
        let mut states = mem.states().to_vec();
        states[11].hidden = Some(crate::memory::HiddenAnnotations {
            rhythm_class: Some("AF".into()),
            ..Default::default()
        });
        states[11].metadata.insert("reference_hr".into(), json!(1));
        *mem = PatientMemory::restore(mem.config.clone(), states, mem.alerts().to_vec()).unwrap();
        let reg = builtin_registry(BuiltinSet::All);
        let r = reg.invoke("state_load_monitoring_states", &args(json!({"patient_id": "p1"})), &c);
        let text = serde_json::to_string(&r).unwrap();
        assert!(!text.contains("rhythm_class") && !text.contains("reference_hr"));

        let w = reg.invoke(
            "state_get_monitoring_window",
            &args(json!({"subject_id": "p1", "window_start_s": 0.0, "window_end_s": 60.0})),
            &c,
        );
        assert_eq!(w.field("window_count"), Some(&json!(6)));
    }

    #[test]
    fn knowledge_and_records() {
        let c = ctx(70.0);
        let reg = builtin_registry(BuiltinSet::All);
        let r = reg.invoke("medical_knowledge", &args(json!({"topic": "bradycardia"})), &c);
        assert!(r.is_ok());
        let r = reg.invoke("list_ecg_records", &Map::new(), &c);
        assert_eq!(r.field("count"), Some(&json!(1)));
        let r = reg.invoke("state_build_from_ecg_record", &args(json!({"patient_id": "p1"})), &c);
        assert_eq!(r.field("n_states"), Some(&json!(12)));
    }
}
