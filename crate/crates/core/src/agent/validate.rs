use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::plan::Plan;
use crate::tools::{ToolRegistry, ToolResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IssueDimension {
    Completeness,
    ToolSuccess,
    RequiredFields,
    Consistency,
}

impl IssueDimension {
    pub fn as_str(self) -> &'static str {
        match self {
            IssueDimension::Completeness => "completeness",
            IssueDimension::ToolSuccess => "tool_success",
            IssueDimension::RequiredFields => "required_fields",
            IssueDimension::Consistency => "consistency",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationIssue {
    pub dimension: IssueDimension,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair: Option<(usize, usize)>,
    pub message: String,
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}]", self.dimension.as_str())?;
        if let Some(i) = self.step_index {
            write!(f, " step {i}")?;
        }
        if let Some((i, j)) = self.pair {
            write!(f, " steps {i},{j}")?;
        }
        write!(f, ": {}", self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
    pub passed: bool,
}

impl ValidationReport {
    pub fn from_issues(issues: Vec<ValidationIssue>) -> Self {
        Self {
            passed: issues.is_empty(),
            issues,
        }
    }

    pub fn count(&self, d: IssueDimension) -> usize {
        self.issues.iter().filter(|i| i.dimension == d).count()
    }
}

/// Payload fields carrying a heart-rate estimate.
pub const HR_FIELDS: &[&str] = &["hr_bpm", "pulse_rate_bpm"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsistencyConfig {
    pub hr_abs_bpm: f64,
    pub hr_rel: f64,
}

impl Default for ConsistencyConfig {
    fn default() -> Self {
        Self {
            hr_abs_bpm: 10.0,
            hr_rel: 0.10,
        }
    }
}

fn hr_of(r: &ToolResult) -> Option<f64> {
    HR_FIELDS.iter().find_map(|f| r.field(f).and_then(Value::as_f64))
}

fn rhythm_of(r: &ToolResult) -> Option<&str> {
    r.field("rhythm_class")
        .and_then(Value::as_str)
        .filter(|c| matches!(*c, "N" | "AF" | "Other"))
}

/// Checks `results` (aligned to `plan.steps`; a `None` or a short slice means
/// the step produced nothing) on all four dimensions.
pub fn validate(
    plan: &Plan,
    results: &[Option<ToolResult>],
    registry: &ToolRegistry,
    cfg: &ConsistencyConfig,
) -> ValidationReport {
    let mut issues = Vec::new();
    let mut ok: Vec<(usize, &ToolResult)> = Vec::new();
    for (i, step) in plan.steps.iter().enumerate() {
        match results.get(i).and_then(Option::as_ref) {
            None => issues.push(ValidationIssue {
                dimension: IssueDimension::Completeness,
                step_index: Some(i),
                pair: None,
                message: format!("no result for step {i} ({})", step.tool_name),
            }),
            Some(r) if !r.missing_fields.is_empty() => issues.push(ValidationIssue {
                dimension: IssueDimension::RequiredFields,
                step_index: Some(i),
                pair: None,
                message: format!("{} dropped {}", r.tool_name, r.missing_fields.join(", ")),
            }),
            Some(r) if !r.is_ok() => issues.push(ValidationIssue {
                dimension: IssueDimension::ToolSuccess,
                step_index: Some(i),
                pair: None,
                message: format!(
                    "{} failed: {} {}",
                    r.tool_name,
                    r.error_code.map(|c| c.to_string()).unwrap_or_default(),
                    r.message.clone().unwrap_or_default()
                ),
            }),
            Some(r) => {
                let missing: Vec<&String> = registry
                    .descriptor(&r.tool_name)
                    .map(|d| {
                        d.required_output_fields
                            .iter()
                            .filter(|f| r.field(f).is_none())
                            .collect()
                    })
                    .unwrap_or_default();
                if missing.is_empty() {
                    ok.push((i, r));
                } else {
                    issues.push(ValidationIssue {
                        dimension: IssueDimension::RequiredFields,
                        step_index: Some(i),
                        pair: None,
                        message: format!(
                            "{} lacks {}",
                            r.tool_name,
                            missing.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")
                        ),
                    });
                }
            }
        }
    }

    for (a, (i, ri)) in ok.iter().enumerate() {
        for (j, rj) in ok.iter().skip(a + 1) {
            if let (Some(x), Some(y)) = (hr_of(ri), hr_of(rj)) {
                let tol = cfg.hr_abs_bpm.max(cfg.hr_rel * x.abs().max(y.abs()));
                if (x - y).abs() > tol {
                    issues.push(ValidationIssue {
                        dimension: IssueDimension::Consistency,
                        step_index: None,
                        pair: Some((*i, *j)),
                        message: format!("heart-rate estimates disagree: {x:.1} vs {y:.1} bpm"),
                    });
                }
            }
            if let (Some(x), Some(y)) = (rhythm_of(ri), rhythm_of(rj)) {
                if x != y {
                    issues.push(ValidationIssue {
                        dimension: IssueDimension::Consistency,
                        step_index: None,
                        pair: Some((*i, *j)),
                        message: format!("rhythm evidence disagrees: {x} vs {y}"),
                    });
                }
            }
        }
    }
    ValidationReport::from_issues(issues)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::plan::{PlanOrigin, PlanStep};
    use crate::tools::{builtin_registry, BuiltinSet, ToolErrorCode};
    use serde_json::{json, Map};

    fn plan(n: usize) -> Plan {
        Plan {
            steps: (0..n)
                .map(|_| PlanStep::new("analyze_heart_rate", Map::new(), ""))
                .collect(),
            origin: PlanOrigin::Deterministic,
        }
    }

    fn hr(v: f64) -> Option<ToolResult> {
        Some(ToolResult::ok(
            "analyze_heart_rate",
            json!({"hr_bpm": v}).as_object().unwrap().clone(),
            0.0,
        ))
    }

    #[test]
    fn dimensions() {
        let reg = builtin_registry(BuiltinSet::All);
        let cfg = ConsistencyConfig::default();
        let failed = Some(ToolResult::error(
            "analyze_heart_rate",
            ToolErrorCode::ToolFailure,
            "x",
            0.0,
        ));
        let r = validate(&plan(2), &[hr(70.0), failed], &reg, &cfg);
        assert_eq!(r.issues.len(), 1);
        assert_eq!(r.issues[0].dimension, IssueDimension::ToolSuccess);
        assert_eq!(r.issues[0].step_index, Some(1));

        let r = validate(&plan(2), &[hr(70.0), hr(95.0)], &reg, &cfg);
        assert_eq!(r.count(IssueDimension::Consistency), 1);
        assert_eq!(r.issues[0].pair, Some((0, 1)));

        let r = validate(&plan(2), &[hr(70.0), hr(79.0)], &reg, &cfg);
        assert!(r.passed);
        // 10% of 150 exceeds 10 bpm.
        assert!(validate(&plan(2), &[hr(150.0), hr(136.0)], &reg, &cfg).passed);

        let r = validate(&plan(2), &[hr(70.0)], &reg, &cfg);
        assert_eq!(r.count(IssueDimension::Completeness), 1);
    }
}
