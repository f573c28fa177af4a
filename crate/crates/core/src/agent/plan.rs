use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::query::{Query, Target};
use super::validate::{IssueDimension, ValidationReport};
use crate::error::{Error, Result};
use crate::llm::TextCompletion;
use crate::signal::{Dataset, Modality};
use crate::tools::{dataset_capabilities, ToolContext, ToolRegistry};

const PLAN_TEMPLATE: &str = include_str!("../../prompts/plan.txt");
const REPLAN_TEMPLATE: &str = include_str!("../../prompts/replan.txt");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanStep {
    pub tool_name: String,
    #[serde(default)]
    pub args: Map<String, Value>,
    #[serde(default)]
    pub purpose: String,
}

impl PlanStep {
    pub fn new(tool_name: &str, args: Map<String, Value>, purpose: &str) -> Self {
        Self {
            tool_name: tool_name.into(),
            args,
            purpose: purpose.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanOrigin {
    Llm,
    Deterministic,
    Replanned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub steps: Vec<PlanStep>,
    pub origin: PlanOrigin,
}

impl Plan {
    /// Rejects any step whose tool is not on the allowed list.
    pub fn check_allowed(&self, registry: &ToolRegistry) -> Result<()> {
        let allowed = registry.allowed_tool_names();
        match self.steps.iter().find(|s| !allowed.contains(&s.tool_name.as_str())) {
            Some(s) => Err(Error::PlanRejected(format!("tool {} is not allowed", s.tool_name))),
            None => Ok(()),
        }
    }

    pub fn tool_names(&self) -> Vec<&str> {
        self.steps.iter().map(|s| s.tool_name.as_str()).collect()
    }
}

fn modality_for(query: &Query, ctx: &ToolContext) -> Option<Modality> {
    let loc = query.locator.as_ref()?;
    ctx.modality_of(&loc.patient_id).or_else(|| {
        let caps = dataset_capabilities(loc.dataset);
        (caps.modalities.len() == 1).then(|| caps.modalities[0])
    })
}

fn loader(dataset: Dataset, m: Modality) -> &'static str {
    match (dataset, m) {
        (Dataset::Wesad, _) => "analyze_wesad_window_signal",
        (_, Modality::Ecg) => "analyze_icentia11k_ecg_window_signal",
        (_, Modality::Ppg) => "analyze_ppg_dalia_window_signal",
    }
}

/// Routing table: (target, time scope, modality) to a fixed tool sequence.
pub fn deterministic_plan(query: &Query, ctx: &ToolContext) -> Plan {
    let target = query.resolved_target();
    let plan = |steps| Plan {
        steps,
        origin: PlanOrigin::Deterministic,
    };
    let knowledge = || {
        let mut a = Map::new();
        a.insert("query".into(), Value::from(query.text.clone()));
        vec![PlanStep::new("medical_info_search", a, "reference information")]
    };
    let (Some(loc), Some(m)) = (query.locator.as_ref(), modality_for(query, ctx)) else {
        return plan(knowledge());
    };
    let args = loc.tool_args();
    let caps = dataset_capabilities(loc.dataset);
    let supported = match target {
        Target::AfDetected | Target::RhythmClass | Target::AfBurden => caps.rhythm,
        Target::StressState => caps.stress,
        _ => true,
    };
    if !supported {
        let mut a = Map::new();
        a.insert("dataset".into(), Value::from(loc.dataset.as_str()));
        return plan(vec![PlanStep::new(
            "state_get_dataset_capabilities",
            a,
            "check whether the dataset supports this target",
        )]);
    }
    let load = PlanStep::new(loader(loc.dataset, m), args.clone(), "load the located window");
    let step = |tool: &str, purpose: &str| PlanStep::new(tool, args.clone(), purpose);
    let steps = match target {
        _ if target.is_multi_window() => vec![step(
            "state_get_monitoring_window",
            "aggregate monitoring states over the time range",
        )],
        Target::HrBpm | Target::Tachycardia => vec![load, step("analyze_heart_rate", "heart rate of the window")],
        Target::AfDetected | Target::RhythmClass => {
            let tool = match m {
                Modality::Ecg => "ecg_diagnosis",
                Modality::Ppg => "analyze_ppg_rhythm_irregularity",
            };
            vec![load, step(tool, "rhythm screen over the trailing context")]
        }
        Target::SdnnMs => {
            let tool = match m {
                Modality::Ecg => "analyze_hrv",
                Modality::Ppg => "analyze_prv",
            };
            vec![load, step(tool, "time-domain variability")]
        }
        Target::StressState => vec![load, step("classify_wesad_stress_state", "stress heuristic")],
        _ => knowledge(),
    };
    plan(steps)
}

/// Same-arguments substitutes used when a step fails.
pub fn alternative_tool(name: &str) -> Option<&'static str> {
    Some(match name {
        "analyze_heart_rate" => "analyze_pulse_rate",
        "analyze_pulse_rate" => "analyze_heart_rate",
        "analyze_hrv" => "analyze_prv",
        "analyze_prv" => "analyze_hrv",
        "ecg_diagnosis" | "analyze_ppg_rhythm_irregularity" => "analyze_af_ppg_ecg_rhythm_context",
        "assess_signal_quality" => "assess_ppg_signal_quality",
        "assess_ppg_signal_quality" => "assess_signal_quality",
        "analyze_icentia11k_ecg_window_signal" | "analyze_ppg_dalia_window_signal" => "analyze_wesad_window_signal",
        "state_get_monitoring_window" => "state_load_monitoring_states",
        "state_get_current_monitoring_state" => "state_get_evidence",
        _ => return None,
    })
}

fn retarget(step: &PlanStep, tool: &str, registry: &ToolRegistry) -> PlanStep {
    let args = match registry.descriptor(tool) {
        Some(d) => step
            .args
            .iter()
            .filter(|(k, _)| d.arg_schema.iter().any(|a| &a.name == *k))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect(),
        None => step.args.clone(),
    };
    PlanStep::new(tool, args, &step.purpose)
}

/// Substitutes an alternative for every failed step; drops the later step of
/// an inconsistent pair; keeps everything else.
pub fn deterministic_replan(previous: &Plan, report: &ValidationReport, registry: &ToolRegistry) -> Plan {
    let mut steps: Vec<Option<PlanStep>> = previous.steps.iter().cloned().map(Some).collect();
    for issue in &report.issues {
        match issue.dimension {
            IssueDimension::ToolSuccess | IssueDimension::RequiredFields => {
                let Some(i) = issue.step_index else { continue };
                if let Some(Some(step)) = steps.get(i) {
                    steps[i] = alternative_tool(&step.tool_name)
                        .filter(|t| registry.allowed_tool_names().contains(t))
                        .map(|t| retarget(step, t, registry));
                }
            }
            IssueDimension::Consistency => {
                if let Some((_, j)) = issue.pair {
                    if let Some(s) = steps.get_mut(j) {
                        *s = None;
                    }
                }
            }
            IssueDimension::Completeness => {}
        }
    }
    Plan {
        steps: steps.into_iter().flatten().collect(),
        origin: PlanOrigin::Replanned,
    }
}

fn strip_fences(text: &str) -> &str {
    let t = text.trim();
    let t = t.strip_prefix("```json").or_else(|| t.strip_prefix("```")).unwrap_or(t);
    t.strip_suffix("```").unwrap_or(t).trim()
}

/// Parses a strict-JSON plan and checks it against the allowed list.
pub fn parse_plan(text: &str, origin: PlanOrigin, registry: &ToolRegistry) -> Result<Plan> {
    let v: Value = serde_json::from_str(strip_fences(text))
        .map_err(|e| Error::PlanRejected(format!("plan is not valid JSON: {e}")))?;
    let steps = match &v {
        Value::Array(_) => v.clone(),
        Value::Object(o) => o
            .get("steps")
            .or_else(|| o.get("plan"))
            .cloned()
            .ok_or_else(|| Error::PlanRejected("plan has no `steps`".into()))?,
        _ => return Err(Error::PlanRejected("plan must be a JSON object".into())),
    };
    let steps: Vec<PlanStep> =
        serde_json::from_value(steps).map_err(|e| Error::PlanRejected(format!("malformed step: {e}")))?;
    if steps.is_empty() {
        return Err(Error::PlanRejected("plan has no steps".into()));
    }
    let plan = Plan { steps, origin };
    plan.check_allowed(registry)?;
    Ok(plan)
}

fn tool_names_block(registry: &ToolRegistry) -> String {
    registry
        .allowed_tool_names()
        .iter()
        .map(|n| format!("- {n}"))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn render_plan_prompt(query: &Query, registry: &ToolRegistry) -> String {
    let locator = query
        .locator
        .as_ref()
        .map_or("none".to_string(), |l| serde_json::to_string(l).unwrap_or_default());
    PLAN_TEMPLATE
        .replace("{query}", &query.text)
        .replace("{locator}", &locator)
        .replace("{tool_names}", &tool_names_block(registry))
        .replace("{tools_description}", &registry.tools_description())
}

pub fn render_replan_prompt(previous: &Plan, report: &ValidationReport, registry: &ToolRegistry) -> String {
    let prev = serde_json::to_string_pretty(&serde_json::json!({ "steps": previous.steps })).unwrap_or_default();
    let issues: Vec<String> = report.issues.iter().map(|i| format!("- {i}")).collect();
    REPLAN_TEMPLATE
        .replace("{previous_plan}", &prev)
        .replace("{issues}", &issues.join("\n"))
        .replace("{tool_names}", &tool_names_block(registry))
        .replace("{tools_description}", &registry.tools_description())
}

/// Asks the model for a plan; one reprompt carrying the rejection reason.
pub fn llm_plan(
    prompt: &str,
    origin: PlanOrigin,
    backend: &dyn TextCompletion,
    registry: &ToolRegistry,
    diagnostics: &mut Vec<String>,
) -> Option<Plan> {
    let mut p = prompt.to_string();
    for attempt in 0..2 {
        let out = backend
            .complete(&p)
            .and_then(|text| parse_plan(&text, origin, registry));
        match out {
            Ok(plan) => return Some(plan),
            Err(e) => {
                diagnostics.push(format!("planner attempt {}: {e}", attempt + 1));
                p = format!("{prompt}\n\nYour previous reply was rejected: {e}\nReturn ONLY valid JSON.");
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::query::{QType, Tier, WindowLocator};
    use crate::tools::{builtin_registry, BuiltinSet};

    fn query(text: &str, tier: Tier, target: &str) -> Query {
        Query {
            text: text.into(),
            locator: Some(WindowLocator {
                dataset: Dataset::Icentia11k,
                patient_id: "p".into(),
                window_start_s: 0.0,
                window_end_s: 10.0,
            }),
            tier: Some(tier),
            qtype: Some(QType::SingleQuery),
            options: None,
            target: Some(target.into()),
        }
    }

    #[test]
    fn routing_table() {
        let ctx = ToolContext::default();
        let p = deterministic_plan(&query("What is my current heart rate?", Tier::A, "hr_bpm"), &ctx);
        assert_eq!(
            p.tool_names(),
            ["analyze_icentia11k_ecg_window_signal", "analyze_heart_rate"]
        );
        let p = deterministic_plan(&query("How often was AF present?", Tier::B, "af_burden"), &ctx);
        assert_eq!(p.tool_names(), ["state_get_monitoring_window"]);
        assert_eq!(p.origin, PlanOrigin::Deterministic);
    }

    #[test]
    fn unsupported_target_checks_capabilities() {
        let mut q = query("Is AF present?", Tier::A, "af_detected");
        q.locator.as_mut().unwrap().dataset = Dataset::PpgDalia;
        let p = deterministic_plan(&q, &ToolContext::default());
        assert_eq!(p.tool_names(), ["state_get_dataset_capabilities"]);
    }

    #[test]
    fn unknown_tool_rejected() {
        let reg = builtin_registry(BuiltinSet::All);
        let err = parse_plan(
            r#"{"steps":[{"tool_name":"make_coffee","args":{}}]}"#,
            PlanOrigin::Llm,
            &reg,
        );
        assert!(matches!(err, Err(Error::PlanRejected(_))));
        let err = parse_plan(
            r#"{"steps":[{"tool_name":"state_build_from_ecg_record","args":{}}]}"#,
            PlanOrigin::Llm,
            &reg,
        );
        assert!(err.is_err());
        let ok = parse_plan(
            "```json\n{\"steps\":[{\"tool_name\":\"list_ecg_records\"}]}\n```",
            PlanOrigin::Llm,
            &reg,
        )
        .unwrap();
        assert_eq!(ok.tool_names(), ["list_ecg_records"]);
    }

    #[test]
    fn prompts_fill_every_slot() {
        let reg = builtin_registry(BuiltinSet::All);
        let q = query("hr?", Tier::A, "hr_bpm");
        let p = render_plan_prompt(&q, &reg);
        let plan = deterministic_plan(&q, &ToolContext::default());
        let r = render_replan_prompt(&plan, &ValidationReport::from_issues(vec![]), &reg);
        for text in [&p, &r] {
            for slot in [
                "{query}",
                "{locator}",
                "{tool_names}",
                "{tools_description}",
                "{previous_plan}",
                "{issues}",
            ] {
                assert!(!text.contains(slot), "{slot} left in prompt");
            }
            assert!(text.contains("- analyze_heart_rate"));
            assert!(!text.contains("state_build_from_ecg_record"));
        }
    }
}
