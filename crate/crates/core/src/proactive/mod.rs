//! Streaming proactive monitoring: per-window rules, episode-level dedup and
//! the periodic judge checkpoint.

mod engine;
mod judge;
mod rules;

pub use engine::{replay, replay_patients, AnnotationSpan, Monitor, MonitorConfig, MonitorDiagnostic, WindowOutcome};
pub use judge::{
    judge_checkpoint, lint_advice, render_judge_prompt, Guideline, GuidelineStore, GuidelineTool, JudgeBackend,
    JudgeDecision, JudgeOutcome, JudgeRequest, JudgeSnapshot, JudgeUrgency, LlmJudge, MockJudge, JUDGE_TOOL_BUDGET,
};
pub use rules::{dedup_episode, evaluate_rules, DedupDecision, RuleConfig};
