use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::plan::Plan;
use super::query::{QType, Query, Target};
use crate::error::Result;
use crate::llm::TextCompletion;
use crate::tools::ToolResult;

const ANSWER_TEMPLATE: &str = include_str!("../../prompts/answer.txt");

pub const UNKNOWN: &str = "unknown";

pub const AF_BURDEN_BUCKETS: [&str; 4] = ["not at all", "occasionally", "often", "most of the time"];

/// 0 maps to "not at all", (0, 0.25] to "occasionally", (0.25, 0.6] to
/// "often", anything above to "most of the time".
pub fn af_burden_bucket(ratio: f64) -> &'static str {
    if ratio <= 0.0 {
        AF_BURDEN_BUCKETS[0]
    } else if ratio <= 0.25 {
        AF_BURDEN_BUCKETS[1]
    } else if ratio <= 0.6 {
        AF_BURDEN_BUCKETS[2]
    } else {
        AF_BURDEN_BUCKETS[3]
    }
}

/// One decimal, trailing `.0` dropped.
pub fn format_number(v: f64) -> String {
    let r = (v * 10.0).round() / 10.0;
    if r.fract() == 0.0 {
        format!("{r:.0}")
    } else {
        format!("{r:.1}")
    }
}

pub fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceItem {
    pub step_index: usize,
    pub tool_name: String,
    pub payload: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComposedAnswer {
    pub answer: String,
    pub evidence: Vec<EvidenceItem>,
}

impl ComposedAnswer {
    pub fn unknown() -> Self {
        Self {
            answer: UNKNOWN.into(),
            evidence: Vec::new(),
        }
    }
}

fn evidence(results: &[Option<ToolResult>]) -> Vec<EvidenceItem> {
    results
        .iter()
        .enumerate()
        .filter_map(|(i, r)| {
            let r = r.as_ref().filter(|r| r.is_ok())?;
            Some(EvidenceItem {
                step_index: i,
                tool_name: r.tool_name.clone(),
                payload: r.payload.clone().unwrap_or_default(),
            })
        })
        .collect()
}

fn find<'a>(ev: &'a [EvidenceItem], fields: &[&str]) -> Option<(&'a EvidenceItem, &'a Value)> {
    ev.iter().find_map(|e| {
        fields
            .iter()
            .find_map(|f| e.payload.get(*f).filter(|v| !v.is_null()).map(|v| (e, v)))
    })
}

fn pick_option(options: Option<&Vec<String>>, value: &str) -> Option<String> {
    options?
        .iter()
        .find(|o| o.trim().eq_ignore_ascii_case(value.trim()))
        .cloned()
}

/// Formats the target field straight from the evidence.
pub fn compose_deterministic(
    query: &Query,
    results: &[Option<ToolResult>],
    tachycardia_threshold_bpm: f64,
) -> ComposedAnswer {
    let ev = evidence(results);
    let target = query.resolved_target();
    let num = |fields: &[&str]| find(&ev, fields).and_then(|(e, v)| Some((e, v.as_f64()?)));
    let answer: Option<(String, &EvidenceItem)> = match target {
        Target::HrBpm => num(&["hr_bpm", "pulse_rate_bpm"]).map(|(e, v)| (format!("{} bpm", format_number(v)), e)),
        Target::MaxHrBpm => num(&["max_hr_bpm"]).map(|(e, v)| (format!("{} bpm", format_number(v)), e)),
        Target::MeanHrBpm => num(&["mean_hr_bpm"]).map(|(e, v)| (format!("{} bpm", format_number(v)), e)),
        Target::SdnnMs => num(&["sdnn_ms"]).map(|(e, v)| (format!("{} ms", format_number(v)), e)),
        Target::Tachycardia => {
            num(&["hr_bpm", "pulse_rate_bpm"]).map(|(e, v)| (yes_no(v > tachycardia_threshold_bpm).into(), e))
        }
        Target::AfDetected => find(&ev, &["af_detected"])
            .and_then(|(e, v)| Some((yes_no(v.as_bool()?).to_string(), e)))
            .or_else(|| {
                find(&ev, &["rhythm_class"]).and_then(|(e, v)| Some((yes_no(v.as_str()? == "AF").to_string(), e)))
            }),
        Target::RhythmClass => find(&ev, &["rhythm_class"]).and_then(|(e, v)| {
            let c = v.as_str()?;
            let picked = match query.qtype {
                Some(QType::SingleChoose) => pick_option(query.options.as_ref(), c)?,
                _ => c.to_string(),
            };
            Some((picked, e))
        }),
        Target::AfBurden => num(&["af_window_ratio"]).and_then(|(e, v)| {
            let b = af_burden_bucket(v);
            let picked = match query.qtype {
                Some(QType::SingleChoose) => pick_option(query.options.as_ref(), b)?,
                _ => b.to_string(),
            };
            Some((picked, e))
        }),
        Target::AnyAlert => num(&["alert_count"]).map(|(e, v)| (yes_no(v > 0.0).into(), e)),
        Target::StressState => find(&ev, &["stress_state"]).and_then(|(e, v)| Some((v.as_str()?.to_string(), e))),
        Target::Knowledge => find(&ev, &["results"]).and_then(|(e, v)| {
            let first = v.as_array()?.first()?;
            Some((
                format!("{}: {}", first.get("title")?.as_str()?, first.get("summary")?.as_str()?),
                e,
            ))
        }),
    };
    match answer {
        Some((text, item)) => ComposedAnswer {
            answer: text,
            evidence: vec![item.clone()],
        },
        None => ComposedAnswer::unknown(),
    }
}

pub fn render_answer_prompt(query: &Query, plan: &Plan, ev: &[EvidenceItem]) -> String {
    let options = query.options.as_ref().map_or("none".into(), |o| o.join(" | "));
    let plan_text = plan
        .steps
        .iter()
        .map(|s| format!("- {}: {}", s.tool_name, s.purpose))
        .collect::<Vec<_>>()
        .join("\n");
    ANSWER_TEMPLATE
        .replace("{query}", &query.text)
        .replace("{options}", &options)
        .replace("{plan}", &plan_text)
        .replace("{evidence}", &serde_json::to_string_pretty(ev).unwrap_or_default())
}

/// Language-model responder. Without evidence it answers "unknown" without
/// calling the model.
pub fn compose_llm(
    query: &Query,
    plan: &Plan,
    results: &[Option<ToolResult>],
    backend: &dyn TextCompletion,
) -> Result<ComposedAnswer> {
    let ev = evidence(results);
    if ev.is_empty() {
        return Ok(ComposedAnswer::unknown());
    }
    let text = backend.complete(&render_answer_prompt(query, plan, &ev))?;
    let answer = text.trim().to_string();
    Ok(ComposedAnswer {
        answer: if answer.is_empty() { UNKNOWN.into() } else { answer },
        evidence: ev,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn result(tool: &str, v: Value) -> Option<ToolResult> {
        Some(ToolResult::ok(tool, v.as_object().unwrap().clone(), 0.0))
    }

    fn q(target: &str, qtype: QType) -> Query {
        Query {
            qtype: Some(qtype),
            target: Some(target.into()),
            locator: Some(crate::agent::WindowLocator {
                dataset: crate::signal::Dataset::Synthetic,
                patient_id: "p".into(),
                window_start_s: 0.0,
                window_end_s: 10.0,
            }),
            ..Query::new("q")
        }
    }

    #[test]
    fn formats_targets() {
        let hr = [result("analyze_heart_rate", json!({"hr_bpm": 72.0}))];
        assert_eq!(
            compose_deterministic(&q("hr_bpm", QType::SingleQuery), &hr, 100.0).answer,
            "72 bpm"
        );
        let af = [result(
            "ecg_diagnosis",
            json!({"af_detected": false, "rhythm_class": "N"}),
        )];
        assert_eq!(
            compose_deterministic(&q("af_detected", QType::SingleVerify), &af, 100.0).answer,
            "no"
        );
        let none: [Option<ToolResult>; 1] = [None];
        let c = compose_deterministic(&q("hr_bpm", QType::SingleQuery), &none, 100.0);
        assert_eq!(c, ComposedAnswer::unknown());
    }

    #[test]
    fn buckets() {
        assert_eq!(af_burden_bucket(0.0), "not at all");
        assert_eq!(af_burden_bucket(2.0 / 12.0), "occasionally");
        assert_eq!(af_burden_bucket(0.25), "occasionally");
        assert_eq!(af_burden_bucket(0.6), "often");
        assert_eq!(af_burden_bucket(0.61), "most of the time");
        assert_eq!(format_number(72.34), "72.3");
        assert_eq!(format_number(80.0), "80");
    }
}
