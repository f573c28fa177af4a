//! Typed tool registry. Every tool declares its argument schema and the
//! fields its payload must carry; `invoke` checks both sides and turns every
//! failure (including handler panics) into a structured error result.

mod builtins;
mod context;

use std::collections::BTreeMap;
use std::fmt;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

pub use builtins::{builtin_registry, BuiltinSet};
#[cfg(feature = "http")]
pub use context::HttpKnowledge;
pub use context::{dataset_capabilities, FixtureKnowledge, KnowledgeClient, KnowledgeEntry, ToolContext, WindowStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolCategory {
    SignalAnalysis,
    DatasetProcessing,
    RecordLookup,
    ProactiveContext,
    MedicalKnowledge,
    StateAccess,
}

impl ToolCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            ToolCategory::SignalAnalysis => "signal_analysis",
            ToolCategory::DatasetProcessing => "dataset_processing",
            ToolCategory::RecordLookup => "record_lookup",
            ToolCategory::ProactiveContext => "proactive_context",
            ToolCategory::MedicalKnowledge => "medical_knowledge",
            ToolCategory::StateAccess => "state_access",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        serde_json::from_value(Value::from(s)).ok()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputKind {
    Data,
    Metadata,
    State,
    Evidence,
    Explanation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArgType {
    String,
    Number,
    Integer,
    Boolean,
    Array,
    Object,
}

impl ArgType {
    fn accepts(self, v: &Value) -> bool {
        match self {
            ArgType::String => v.is_string(),
            ArgType::Number => v.is_number(),
            ArgType::Integer => v.is_i64() || v.is_u64(),
            ArgType::Boolean => v.is_boolean(),
            ArgType::Array => v.is_array(),
            ArgType::Object => v.is_object(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArgSpec {
    pub name: String,
    #[serde(rename = "type")]
    pub kind: ArgType,
    pub required: bool,
    pub description: String,
}

impl ArgSpec {
    pub fn required(name: &str, kind: ArgType, description: &str) -> Self {
        Self {
            name: name.into(),
            kind,
            required: true,
            description: description.into(),
        }
    }

    pub fn optional(name: &str, kind: ArgType, description: &str) -> Self {
        Self {
            required: false,
            ..Self::required(name, kind, description)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolDescriptor {
    pub name: String,
    pub category: ToolCategory,
    pub description: String,
    pub arg_schema: Vec<ArgSpec>,
    pub output_kind: OutputKind,
    pub required_output_fields: Vec<String>,
    /// Hidden from the planner's allowed list.
    #[serde(default)]
    pub benchmark_only: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolStatus {
    Ok,
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolErrorCode {
    UnknownTool,
    InvalidArgs,
    ToolFailure,
}

impl fmt::Display for ToolErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ToolErrorCode::UnknownTool => "unknown_tool",
            ToolErrorCode::InvalidArgs => "invalid_args",
            ToolErrorCode::ToolFailure => "tool_failure",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolResult {
    pub tool_name: String,
    pub status: ToolStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<Map<String, Value>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_code: Option<ToolErrorCode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    /// Required fields the handler failed to provide.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub missing_fields: Vec<String>,
    pub elapsed_ms: f64,
}

impl ToolResult {
    pub fn ok(tool_name: &str, payload: Map<String, Value>, elapsed_ms: f64) -> Self {
        Self {
            tool_name: tool_name.into(),
            status: ToolStatus::Ok,
            payload: Some(payload),
            error_code: None,
            message: None,
            missing_fields: Vec::new(),
            elapsed_ms,
        }
    }

    pub fn error(tool_name: &str, code: ToolErrorCode, message: impl Into<String>, elapsed_ms: f64) -> Self {
        Self {
            tool_name: tool_name.into(),
            status: ToolStatus::Error,
            payload: None,
            error_code: Some(code),
            message: Some(message.into()),
            missing_fields: Vec::new(),
            elapsed_ms,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == ToolStatus::Ok
    }

    pub fn field(&self, name: &str) -> Option<&Value> {
        self.payload.as_ref().and_then(|p| p.get(name)).filter(|v| !v.is_null())
    }
}

pub type HandlerResult = std::result::Result<Map<String, Value>, String>;
pub type Handler = Arc<dyn Fn(&Map<String, Value>, &ToolContext) -> HandlerResult + Send + Sync>;

/// Immutable after construction; `invoke` takes `&self` and is safe to call
/// from several threads.
#[derive(Clone, Default)]
pub struct ToolRegistry {
    tools: BTreeMap<String, (ToolDescriptor, Handler)>,
}

impl fmt::Debug for ToolRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.tools.keys()).finish()
    }
}

impl ToolRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, descriptor: ToolDescriptor, handler: Handler) -> Result<()> {
        if self.tools.contains_key(&descriptor.name) {
            return Err(Error::Config(format!("tool {} already registered", descriptor.name)));
        }
        if descriptor.required_output_fields.is_empty() {
            return Err(Error::Config(format!(
                "tool {} declares no required output fields",
                descriptor.name
            )));
        }
        self.tools.insert(descriptor.name.clone(), (descriptor, handler));
        Ok(())
    }

    /// Swaps the handler of a registered tool. Used for fault injection.
    pub fn replace_handler(&mut self, name: &str, handler: Handler) -> Result<()> {
        match self.tools.get_mut(name) {
            Some(entry) => {
                entry.1 = handler;
                Ok(())
            }
            None => Err(Error::Config(format!("tool {name} is not registered"))),
        }
    }

    pub fn len(&self) -> usize {
        self.tools.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tools.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tools.contains_key(name)
    }

    pub fn descriptor(&self, name: &str) -> Option<&ToolDescriptor> {
        self.tools.get(name).map(|(d, _)| d)
    }

    /// Name-sorted descriptors, optionally restricted to one category.
    pub fn list_tools(&self, category: Option<ToolCategory>) -> Vec<&ToolDescriptor> {
        self.tools
            .values()
            .map(|(d, _)| d)
            .filter(|d| category.is_none_or(|c| d.category == c))
            .collect()
    }

    /// Names the planner may use.
    pub fn allowed_tool_names(&self) -> Vec<&str> {
        self.tools
            .values()
            .filter(|(d, _)| !d.benchmark_only)
            .map(|(d, _)| d.name.as_str())
            .collect()
    }

    pub fn schema_export(&self) -> Value {
        let tools: Vec<&ToolDescriptor> = self.list_tools(None);
        serde_json::json!({ "tools": tools })
    }

    /// Inverse of [`schema_export`](Self::schema_export).
    pub fn parse_schema(value: &Value) -> Result<Vec<ToolDescriptor>> {
        let tools = value
            .get("tools")
            .ok_or_else(|| Error::Config("schema has no `tools` array".into()))?;
        Ok(serde_json::from_value(tools.clone())?)
    }

    /// Planner-facing listing of allowed tools: one line per tool with its
    /// arguments.
    pub fn tools_description(&self) -> String {
        let mut out = String::new();
        for (d, _) in self.tools.values().filter(|(d, _)| !d.benchmark_only) {
            let args: Vec<String> = d
                .arg_schema
                .iter()
                .map(|a| {
                    let kind = serde_json::to_value(a.kind)
                        .ok()
                        .and_then(|v| v.as_str().map(str::to_string))
                        .unwrap_or_default();
                    format!("{}: {}{}", a.name, kind, if a.required { "" } else { "?" })
                })
                .collect();
            out.push_str(&format!("- {}({}): {}\n", d.name, args.join(", "), d.description));
        }
        out
    }

    pub fn invoke(&self, name: &str, args: &Map<String, Value>, ctx: &ToolContext) -> ToolResult {
        let start = Instant::now();
        let elapsed = || start.elapsed().as_secs_f64() * 1e3;
        let Some((desc, handler)) = self.tools.get(name) else {
            return ToolResult::error(
                name,
                ToolErrorCode::UnknownTool,
                format!("no tool named {name}"),
                elapsed(),
            );
        };
        if let Err(msg) = check_args(desc, args) {
            return ToolResult::error(name, ToolErrorCode::InvalidArgs, msg, elapsed());
        }
        let out = catch_unwind(AssertUnwindSafe(|| handler(args, ctx)));
        match out {
            Ok(Ok(payload)) => {
                let missing: Vec<String> = desc
                    .required_output_fields
                    .iter()
                    .filter(|f| payload.get(f.as_str()).is_none_or(Value::is_null))
                    .cloned()
                    .collect();
                if missing.is_empty() {
                    ToolResult::ok(name, payload, elapsed())
                } else {
                    let mut r = ToolResult::error(
                        name,
                        ToolErrorCode::ToolFailure,
                        format!("missing required field(s): {}", missing.join(", ")),
                        elapsed(),
                    );
                    r.missing_fields = missing;
                    r
                }
            }
            Ok(Err(msg)) => ToolResult::error(name, ToolErrorCode::ToolFailure, msg, elapsed()),
            Err(panic) => {
                let msg = panic
                    .downcast_ref::<&str>()
                    .map(|s| s.to_string())
                    .or_else(|| panic.downcast_ref::<String>().cloned())
                    .unwrap_or_else(|| "handler panicked".into());
                ToolResult::error(name, ToolErrorCode::ToolFailure, msg, elapsed())
            }
        }
    }
}

fn check_args(desc: &ToolDescriptor, args: &Map<String, Value>) -> std::result::Result<(), String> {
    for spec in &desc.arg_schema {
        match args.get(&spec.name) {
            None | Some(Value::Null) if spec.required => {
                return Err(format!("missing required argument `{}`", spec.name));
            }
            Some(v) if !v.is_null() && !spec.kind.accepts(v) => {
                return Err(format!("argument `{}` has the wrong type", spec.name));
            }
            _ => {}
        }
    }
    if let Some(extra) = args.keys().find(|k| !desc.arg_schema.iter().any(|s| &s.name == *k)) {
        return Err(format!("unexpected argument `{extra}`"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn desc(name: &str) -> ToolDescriptor {
        ToolDescriptor {
            name: name.into(),
            category: ToolCategory::SignalAnalysis,
            description: "test".into(),
            arg_schema: vec![ArgSpec::required("x", ArgType::Number, "input")],
            output_kind: OutputKind::Data,
            required_output_fields: vec!["y".into()],
            benchmark_only: false,
        }
    }

    fn handler(f: fn(f64) -> Option<f64>) -> Handler {
        Arc::new(move |args, _| {
            let x = args["x"].as_f64().unwrap();
            let mut m = Map::new();
            if let Some(y) = f(x) {
                m.insert("y".into(), json!(y));
            }
            Ok(m)
        })
    }

    fn args(v: Value) -> Map<String, Value> {
        v.as_object().unwrap().clone()
    }

    #[test]
    fn empty_registry_lists_nothing() {
        assert!(ToolRegistry::new().list_tools(None).is_empty());
    }

    #[test]
    fn duplicate_names_are_rejected() {
        let mut r = ToolRegistry::new();
        r.register(desc("a"), handler(Some)).unwrap();
        assert!(r.register(desc("a"), handler(Some)).is_err());
    }

    #[test]
    fn invoke_validates_both_sides() {
        let ctx = ToolContext::default();
        let mut r = ToolRegistry::new();
        r.register(desc("double"), handler(|x| Some(2.0 * x))).unwrap();
        r.register(desc("drops"), handler(|_| None)).unwrap();
        r.register(desc("panics"), Arc::new(|_, _| -> HandlerResult { panic!("boom") }))
            .unwrap();

        let ok = r.invoke("double", &args(json!({"x": 2})), &ctx);
        assert!(ok.is_ok());
        assert_eq!(ok.field("y"), Some(&json!(4.0)));

        let bad = r.invoke("double", &args(json!({})), &ctx);
        assert_eq!(bad.error_code, Some(ToolErrorCode::InvalidArgs));
        let bad = r.invoke("double", &args(json!({"x": "two"})), &ctx);
        assert_eq!(bad.error_code, Some(ToolErrorCode::InvalidArgs));

        let missing = r.invoke("drops", &args(json!({"x": 1})), &ctx);
        assert_eq!(missing.error_code, Some(ToolErrorCode::ToolFailure));
        assert_eq!(missing.missing_fields, vec!["y".to_string()]);
        assert!(missing.payload.is_none());

        let p = r.invoke("panics", &args(json!({"x": 1})), &ctx);
        assert_eq!(p.error_code, Some(ToolErrorCode::ToolFailure));
        assert_eq!(p.message.as_deref(), Some("boom"));

        let u = r.invoke("nope", &Map::new(), &ctx);
        assert_eq!(u.error_code, Some(ToolErrorCode::UnknownTool));
    }

    #[test]
    fn schema_round_trips() {
        let mut r = ToolRegistry::new();
        r.register(desc("b"), handler(Some)).unwrap();
        r.register(desc("a"), handler(Some)).unwrap();
        let back = ToolRegistry::parse_schema(&r.schema_export()).unwrap();
        let names: Vec<&str> = back.iter().map(|d| d.name.as_str()).collect();
        assert_eq!(names, ["a", "b"]);
        assert_eq!(back, r.list_tools(None).into_iter().cloned().collect::<Vec<_>>());
    }
}
