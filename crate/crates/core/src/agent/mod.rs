//! Reactive question answering: plan, execute, validate, replan (bounded),
//! then compose an answer from the validated evidence.
//!
//! Planner and responder are each either deterministic or backed by a
//! [`TextCompletion`]. With both deterministic, answers are a pure function
//! of the query and the tool context.

mod compose;
mod plan;
mod query;
mod validate;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use compose::{
    af_burden_bucket, compose_deterministic, compose_llm, format_number, render_answer_prompt, yes_no, ComposedAnswer,
    EvidenceItem, AF_BURDEN_BUCKETS, UNKNOWN,
};
pub use plan::{
    alternative_tool, deterministic_plan, deterministic_replan, llm_plan, parse_plan, render_plan_prompt,
    render_replan_prompt, Plan, PlanOrigin, PlanStep,
};
pub use query::{QType, Query, Target, Tier, WindowLocator};
pub use validate::{validate, ConsistencyConfig, IssueDimension, ValidationIssue, ValidationReport, HR_FIELDS};

use crate::exec::{self, Execution};
use crate::llm::TextCompletion;
use crate::tools::{ToolContext, ToolRegistry, ToolResult};

#[derive(Clone)]
pub enum Backend {
    Deterministic,
    Llm(Arc<dyn TextCompletion>),
}

impl std::fmt::Debug for Backend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Backend::Deterministic => "Deterministic",
            Backend::Llm(_) => "Llm",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    pub replan_budget: usize,
    pub hr_consistency_abs_bpm: f64,
    pub hr_consistency_rel: f64,
    pub tachycardia_threshold_bpm: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            replan_budget: 1,
            hr_consistency_abs_bpm: 10.0,
            hr_consistency_rel: 0.10,
            tachycardia_threshold_bpm: 100.0,
        }
    }
}

/// Everything one query produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentRun {
    pub answer: String,
    pub evidence: Vec<EvidenceItem>,
    pub plans: Vec<Plan>,
    pub reports: Vec<ValidationReport>,
    pub cycles: usize,
    pub replans: usize,
    /// Set when the final plan still failed validation.
    pub flagged: bool,
    pub diagnostics: Vec<String>,
}

pub struct Agent<'a> {
    pub registry: &'a ToolRegistry,
    pub context: &'a ToolContext,
    pub planner: Backend,
    pub responder: Backend,
    pub config: AgentConfig,
}

impl<'a> Agent<'a> {
    pub fn deterministic(registry: &'a ToolRegistry, context: &'a ToolContext) -> Self {
        Self {
            registry,
            context,
            planner: Backend::Deterministic,
            responder: Backend::Deterministic,
            config: AgentConfig::default(),
        }
    }

    fn consistency(&self) -> ConsistencyConfig {
        ConsistencyConfig {
            hr_abs_bpm: self.config.hr_consistency_abs_bpm,
            hr_rel: self.config.hr_consistency_rel,
        }
    }

    pub fn plan(&self, query: &Query, diagnostics: &mut Vec<String>) -> Plan {
        if let Backend::Llm(b) = &self.planner {
            let prompt = render_plan_prompt(query, self.registry);
            if let Some(p) = llm_plan(&prompt, PlanOrigin::Llm, b.as_ref(), self.registry, diagnostics) {
                return p;
            }
            diagnostics.push("planner fell back to the routing table".into());
        }
        deterministic_plan(query, self.context)
    }

    pub fn replan(&self, previous: &Plan, report: &ValidationReport, diagnostics: &mut Vec<String>) -> Plan {
        if let Backend::Llm(b) = &self.planner {
            let prompt = render_replan_prompt(previous, report, self.registry);
            if let Some(p) = llm_plan(&prompt, PlanOrigin::Replanned, b.as_ref(), self.registry, diagnostics) {
                return p;
            }
            diagnostics.push("replanner fell back to step substitution".into());
        }
        deterministic_replan(previous, report, self.registry)
    }

    /// Runs only allow-listed steps; a disallowed step yields no result.
    pub fn execute(&self, plan: &Plan) -> Vec<Option<ToolResult>> {
        let allowed = self.registry.allowed_tool_names();
        plan.steps
            .iter()
            .map(|s| {
                allowed
                    .contains(&s.tool_name.as_str())
                    .then(|| self.registry.invoke(&s.tool_name, &s.args, self.context))
            })
            .collect()
    }

    pub fn answer(&self, query: &Query) -> AgentRun {
        let mut diagnostics = Vec::new();
        if let Err(e) = query.validate() {
            diagnostics.push(e.to_string());
        }
        let mut plan = self.plan(query, &mut diagnostics);
        let mut plans = Vec::new();
        let mut reports = Vec::new();
        let mut budget = self.config.replan_budget;
        let mut cycles = 0;
        let results = loop {
            cycles += 1;
            let results = self.execute(&plan);
            let report = validate(&plan, &results, self.registry, &self.consistency());
            let passed = report.passed;
            plans.push(plan.clone());
            reports.push(report.clone());
            if passed || budget == 0 {
                break results;
            }
            budget -= 1;
            plan = self.replan(&plan, &report, &mut diagnostics);
        };
        let flagged = !reports.last().is_some_and(|r| r.passed);
        let composed = match &self.responder {
            Backend::Deterministic => compose_deterministic(query, &results, self.config.tachycardia_threshold_bpm),
            Backend::Llm(b) => match compose_llm(query, &plan, &results, b.as_ref()) {
                Ok(c) => c,
                Err(e) => {
                    diagnostics.push(format!("responder failed: {e}"));
                    compose_deterministic(query, &results, self.config.tachycardia_threshold_bpm)
                }
            },
        };
        AgentRun {
            answer: composed.answer,
            evidence: composed.evidence,
            replans: cycles - 1,
            plans,
            reports,
            cycles,
            flagged,
            diagnostics,
        }
    }

    /// Independent queries, in parallel when available.
    pub fn answer_all(&self, queries: &[Query], mode: Execution) -> Vec<AgentRun> {
        exec::map(mode, queries, |q| self.answer(q))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::ScriptedCompletion;
    use crate::tools::{builtin_registry, BuiltinSet};

    #[test]
    fn knowledge_question_without_locator() {
        let reg = builtin_registry(BuiltinSet::All);
        let ctx = ToolContext::default();
        let run = Agent::deterministic(&reg, &ctx).answer(&Query::new("What is bradycardia?"));
        assert!(run.answer.starts_with("Bradycardia"), "{}", run.answer);
        assert_eq!(run.cycles, 1);
    }

    #[test]
    fn llm_planner_falls_back_after_two_bad_replies() {
        let reg = builtin_registry(BuiltinSet::All);
        let ctx = ToolContext::default();
        let llm = Arc::new(ScriptedCompletion::new([
            "not json",
            r#"{"steps":[{"tool_name":"x"}]}"#,
        ]));
        let agent = Agent {
            planner: Backend::Llm(llm.clone()),
            ..Agent::deterministic(&reg, &ctx)
        };
        let run = agent.answer(&Query::new("What is tachycardia?"));
        assert_eq!(llm.prompts().len(), 2);
        assert_eq!(run.plans[0].origin, PlanOrigin::Deterministic);
        assert_eq!(run.diagnostics.len(), 3);
        assert!(run.answer.starts_with("Tachycardia"));
    }

    #[test]
    fn llm_responder_gets_evidence() {
        let reg = builtin_registry(BuiltinSet::All);
        let ctx = ToolContext::default();
        let llm = Arc::new(ScriptedCompletion::new([" A fast heart rate. "]));
        let agent = Agent {
            responder: Backend::Llm(llm.clone()),
            ..Agent::deterministic(&reg, &ctx)
        };
        let run = agent.answer(&Query::new("What is tachycardia?"));
        assert_eq!(run.answer, "A fast heart rate.");
        assert!(llm.prompts()[0].contains("fixture:knowledge/tachycardia"));
    }
}
