//! Periodic judge checkpoint over a structured physiological snapshot.
//!
//! The backend may read guideline sections through [`GuidelineTool`], which
//! enforces the per-decision call budget. Anything that goes wrong (timeout,
//! malformed output) degrades to "no intervention" plus a diagnostic so the
//! monitoring loop never blocks.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::rules::RuleConfig;
use crate::error::{Error, Result};
use crate::llm::TextCompletion;
use crate::memory::CitedSection;

pub const JUDGE_TOOL_BUDGET: usize = 3;
const JUDGE_TEMPLATE: &str = include_str!("../../prompts/judge.txt");
const DEFAULT_GUIDELINES: &str = include_str!("../../fixtures/guidelines.json");
const SAFE_ADVICE: &str = "Consider consulting a healthcare professional about these readings.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeSnapshot {
    pub hr_bpm: Option<f64>,
    pub rhythm_class: Option<String>,
    pub af_episode_duration_s: Option<f64>,
    pub tachycardia_ratio_5min: Option<f64>,
    pub tachycardia_sample_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeUrgency {
    None,
    Low,
    Medium,
    High,
    Critical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeDecision {
    pub intervene: bool,
    pub urgency: JudgeUrgency,
    pub reason: String,
    pub advice: String,
    pub cited_sections: Vec<CitedSection>,
}

impl JudgeDecision {
    pub fn no_alert() -> Self {
        Self {
            intervene: false,
            urgency: JudgeUrgency::None,
            reason: String::new(),
            advice: String::new(),
            cited_sections: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Guideline {
    pub guideline_id: String,
    pub section_id: String,
    pub summary: String,
    pub full_text: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GuidelineStore {
    sections: Vec<Guideline>,
}

impl GuidelineStore {
    pub fn new(sections: Vec<Guideline>) -> Self {
        Self { sections }
    }

    /// The two synthetic guidelines bundled with the crate.
    pub fn bundled() -> Self {
        Self::new(serde_json::from_str(DEFAULT_GUIDELINES).expect("bundled guidelines parse"))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::new(serde_json::from_str(&text)?))
    }

    pub fn get(&self, guideline_id: &str, section_id: &str) -> Option<&Guideline> {
        self.sections
            .iter()
            .find(|g| g.guideline_id == guideline_id && g.section_id == section_id)
    }

    pub fn sections(&self) -> &[Guideline] {
        &self.sections
    }

    pub fn summaries(&self) -> String {
        self.sections
            .iter()
            .map(|g| format!("- [{} / {}] {}", g.guideline_id, g.section_id, g.summary))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// `read_guideline_section` with a hard per-decision budget.
pub struct GuidelineTool<'a> {
    store: &'a GuidelineStore,
    budget: usize,
    calls: usize,
    rejected: usize,
}

impl<'a> GuidelineTool<'a> {
    pub fn new(store: &'a GuidelineStore, budget: usize) -> Self {
        Self {
            store,
            budget,
            calls: 0,
            rejected: 0,
        }
    }

    pub fn read_guideline_section(
        &mut self,
        guideline_id: &str,
        section_id: &str,
    ) -> std::result::Result<String, String> {
        if self.calls >= self.budget {
            self.rejected += 1;
            return Err(format!("tool budget of {} calls exhausted", self.budget));
        }
        self.calls += 1;
        self.store
            .get(guideline_id, section_id)
            .map(|g| g.full_text.clone())
            .ok_or_else(|| format!("unknown section {guideline_id}/{section_id}"))
    }

    pub fn calls(&self) -> usize {
        self.calls
    }

    pub fn rejected(&self) -> usize {
        self.rejected
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JudgeRequest {
    pub snapshot: JudgeSnapshot,
    pub patient_context: Map<String, Value>,
    pub prompt: String,
}

pub trait JudgeBackend: Send + Sync {
    /// Returns the raw text of the decision object.
    fn decide(&self, request: &JudgeRequest, tools: &mut GuidelineTool<'_>) -> Result<String>;
}

pub fn render_judge_prompt(signal_phrase: &str, store: &GuidelineStore) -> String {
    JUDGE_TEMPLATE
        .replace("{signal_phrase}", signal_phrase)
        .replace("{guideline_summaries}", &store.summaries())
}

/// Deterministic stand-in: intervene iff the screened AF episode exceeds
/// `af_min_s` or a rule condition holds on the snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct MockJudge {
    pub rules: RuleConfig,
    pub af_min_s: f64,
}

impl Default for MockJudge {
    fn default() -> Self {
        Self {
            rules: RuleConfig::default(),
            af_min_s: 300.0,
        }
    }
}

impl MockJudge {
    fn rule_condition(&self, s: &JudgeSnapshot) -> bool {
        let extreme = s
            .hr_bpm
            .is_some_and(|hr| hr < self.rules.brady_hr_bpm || hr > self.rules.tachy_hr_bpm);
        let sustained = s
            .tachycardia_ratio_5min
            .is_some_and(|r| r >= self.rules.sustained_ratio)
            && s.tachycardia_sample_count >= self.rules.sustained_min_samples;
        extreme || sustained
    }
}

impl JudgeBackend for MockJudge {
    fn decide(&self, request: &JudgeRequest, tools: &mut GuidelineTool<'_>) -> Result<String> {
        let s = &request.snapshot;
        let af_long =
            s.rhythm_class.as_deref() == Some("AF") && s.af_episode_duration_s.is_some_and(|d| d > self.af_min_s);
        let decision = if self.rule_condition(s) {
            let section = if s
                .hr_bpm
                .is_some_and(|hr| hr < self.rules.brady_hr_bpm || hr > self.rules.tachy_hr_bpm)
            {
                "extreme-rates"
            } else {
                "resting-tachycardia"
            };
            let _ = tools.read_guideline_section("hr-2022", section);
            JudgeDecision {
                intervene: true,
                urgency: JudgeUrgency::High,
                reason: "Heart rate outside the expected resting range.".into(),
                advice: "Please see a clinician promptly if this persists or you feel unwell.".into(),
                cited_sections: vec![CitedSection {
                    guideline_id: "hr-2022".into(),
                    section_id: section.into(),
                }],
            }
        } else if af_long {
            let _ = tools.read_guideline_section("af-2023", "ahre-5min-to-24h");
            let minutes = s.af_episode_duration_s.unwrap_or(0.0) / 60.0;
            JudgeDecision {
                intervene: true,
                urgency: JudgeUrgency::Medium,
                reason: format!("Irregular rhythm episode of {minutes:.0} minutes, within the review band."),
                advice: "Consider seeing a clinician soon to review these readings.".into(),
                cited_sections: vec![CitedSection {
                    guideline_id: "af-2023".into(),
                    section_id: "ahre-5min-to-24h".into(),
                }],
            }
        } else {
            JudgeDecision::no_alert()
        };
        Ok(serde_json::to_string(&decision)?)
    }
}

/// Judge over a text-completion backend. The model either answers with the
/// decision object or asks for a section with
/// `{"tool_call": {"guideline_id": ..., "section_id": ...}}`.
pub struct LlmJudge {
    completion: Arc<dyn TextCompletion>,
    max_turns: usize,
}

impl LlmJudge {
    pub fn new(completion: Arc<dyn TextCompletion>) -> Self {
        Self {
            completion,
            max_turns: JUDGE_TOOL_BUDGET + 3,
        }
    }
}

const TOOL_PROTOCOL: &str = "To call read_guideline_section, reply with exactly \
{\"tool_call\": {\"guideline_id\": \"...\", \"section_id\": \"...\"}} and nothing else; \
the result will be appended below. Otherwise reply with the decision object.";

impl JudgeBackend for LlmJudge {
    fn decide(&self, request: &JudgeRequest, tools: &mut GuidelineTool<'_>) -> Result<String> {
        let mut transcript = format!(
            "{}\n## Current snapshot\n{}\n\n## Patient context\n{}\n\n{}\n",
            request.prompt,
            serde_json::to_string_pretty(&request.snapshot)?,
            serde_json::to_string(&request.patient_context)?,
            TOOL_PROTOCOL
        );
        for _ in 0..self.max_turns {
            let reply = self.completion.complete(&transcript)?;
            let call = serde_json::from_str::<Value>(strip_fences(&reply))
                .ok()
                .and_then(|v| v.get("tool_call").cloned());
            let Some(call) = call else {
                return Ok(reply);
            };
            let gid = call.get("guideline_id").and_then(Value::as_str).unwrap_or_default();
            let sid = call.get("section_id").and_then(Value::as_str).unwrap_or_default();
            let result = match tools.read_guideline_section(gid, sid) {
                Ok(text) => text,
                Err(e) => format!("ERROR: {e}"),
            };
            transcript.push_str(&format!(
                "\n## Tool call read_guideline_section({gid}, {sid})\n{result}\n"
            ));
        }
        Err(Error::Backend("judge did not produce a decision".into()))
    }
}

fn strip_fences(text: &str) -> &str {
    let t = text.trim();
    let t = t.strip_prefix("```json").or_else(|| t.strip_prefix("```")).unwrap_or(t);
    t.strip_suffix("```").unwrap_or(t).trim()
}

const ADVICE_LINT: &[&str] = &[
    "medication",
    "medicine",
    "dose",
    "dosage",
    "prescri",
    "stop taking",
    "start taking",
    "pill",
    "anticoagul",
    "blood thinner",
    "beta blocker",
    "diagnos",
    "you have ",
];

/// Phrases in `advice` that cross the non-diagnostic, no-medication line.
pub fn lint_advice(advice: &str) -> Vec<&'static str> {
    let lower = advice.to_ascii_lowercase();
    ADVICE_LINT.iter().copied().filter(|p| lower.contains(p)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct JudgeOutcome {
    pub decision: JudgeDecision,
    pub diagnostics: Vec<String>,
    pub tool_calls: usize,
    pub rejected_tool_calls: usize,
}

fn parse_decision(text: &str, store: &GuidelineStore, diags: &mut Vec<String>) -> Option<JudgeDecision> {
    let body = strip_fences(text);
    if body.len() != text.trim().len() {
        diags.push("judge output wrapped in markdown fences".into());
    }
    let mut d: JudgeDecision = match serde_json::from_str(body) {
        Ok(d) => d,
        Err(e) => {
            diags.push(format!("malformed judge output: {e}"));
            return None;
        }
    };
    if !d.intervene {
        if d.urgency != JudgeUrgency::None
            || !d.reason.is_empty()
            || !d.advice.is_empty()
            || !d.cited_sections.is_empty()
        {
            diags.push("non-intervention carried non-empty fields; cleared".into());
        }
        return Some(JudgeDecision::no_alert());
    }
    if d.urgency == JudgeUrgency::None {
        diags.push("intervention with urgency none; raised to low".into());
        d.urgency = JudgeUrgency::Low;
    }
    let before = d.cited_sections.len();
    d.cited_sections
        .retain(|c| store.get(&c.guideline_id, &c.section_id).is_some());
    if d.cited_sections.len() != before {
        diags.push(format!(
            "dropped {} unknown cited section(s)",
            before - d.cited_sections.len()
        ));
    }
    let hits = lint_advice(&d.advice);
    if !hits.is_empty() {
        diags.push(format!("advice failed lint ({}); replaced", hits.join(", ")));
        d.advice = SAFE_ADVICE.into();
    }
    Some(d)
}

pub fn judge_checkpoint(
    snapshot: &JudgeSnapshot,
    store: &GuidelineStore,
    backend: &dyn JudgeBackend,
    patient_context: &Map<String, Value>,
    signal_phrase: &str,
) -> JudgeOutcome {
    let request = JudgeRequest {
        snapshot: snapshot.clone(),
        patient_context: patient_context.clone(),
        prompt: render_judge_prompt(signal_phrase, store),
    };
    let mut tools = GuidelineTool::new(store, JUDGE_TOOL_BUDGET);
    let mut diagnostics = Vec::new();
    let decision = match backend.decide(&request, &mut tools) {
        Ok(text) => parse_decision(&text, store, &mut diagnostics).unwrap_or_else(JudgeDecision::no_alert),
        Err(e) => {
            diagnostics.push(format!("judge backend failed: {e}"));
            JudgeDecision::no_alert()
        }
    };
    if tools.rejected() > 0 {
        diagnostics.push(format!("{} guideline call(s) over budget rejected", tools.rejected()));
    }
    JudgeOutcome {
        decision,
        diagnostics,
        tool_calls: tools.calls(),
        rejected_tool_calls: tools.rejected(),
    }
}
