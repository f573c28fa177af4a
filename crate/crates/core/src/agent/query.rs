use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::signal::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Tier {
    A,
    B,
}

impl Tier {
    pub fn as_str(self) -> &'static str {
        match self {
            Tier::A => "A",
            Tier::B => "B",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QType {
    SingleVerify,
    SingleChoose,
    SingleQuery,
}

impl QType {
    pub fn as_str(self) -> &'static str {
        match self {
            QType::SingleVerify => "single_verify",
            QType::SingleChoose => "single_choose",
            QType::SingleQuery => "single_query",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowLocator {
    pub dataset: Dataset,
    pub patient_id: String,
    pub window_start_s: f64,
    pub window_end_s: f64,
}

impl WindowLocator {
    pub fn tool_args(&self) -> Map<String, Value> {
        let mut m = Map::new();
        m.insert("patient_id".into(), Value::from(self.patient_id.clone()));
        m.insert("dataset".into(), Value::from(self.dataset.as_str()));
        m.insert("window_start_s".into(), Value::from(self.window_start_s));
        m.insert("window_end_s".into(), Value::from(self.window_end_s));
        m
    }
}

/// Answer targets understood by the deterministic planner and responder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    HrBpm,
    AfDetected,
    RhythmClass,
    Tachycardia,
    MaxHrBpm,
    MeanHrBpm,
    AfBurden,
    AnyAlert,
    SdnnMs,
    StressState,
    Knowledge,
}

impl Target {
    pub const ALL: [Target; 11] = [
        Target::HrBpm,
        Target::AfDetected,
        Target::RhythmClass,
        Target::Tachycardia,
        Target::MaxHrBpm,
        Target::MeanHrBpm,
        Target::AfBurden,
        Target::AnyAlert,
        Target::SdnnMs,
        Target::StressState,
        Target::Knowledge,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Target::HrBpm => "hr_bpm",
            Target::AfDetected => "af_detected",
            Target::RhythmClass => "rhythm_class",
            Target::Tachycardia => "tachycardia",
            Target::MaxHrBpm => "max_hr_bpm",
            Target::MeanHrBpm => "mean_hr_bpm",
            Target::AfBurden => "af_burden",
            Target::AnyAlert => "any_alert",
            Target::SdnnMs => "sdnn_ms",
            Target::StressState => "stress_state",
            Target::Knowledge => "knowledge",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.as_str() == s.trim())
    }

    /// Targets answered from aggregates over several windows.
    pub fn is_multi_window(self) -> bool {
        matches!(
            self,
            Target::MaxHrBpm | Target::MeanHrBpm | Target::AfBurden | Target::AnyAlert
        )
    }

    /// Keyword routing for questions without target metadata.
    pub fn from_text(text: &str, tier: Option<Tier>) -> Self {
        let t = format!(" {} ", text.to_lowercase());
        let has = |ks: &[&str]| ks.iter().any(|k| t.contains(k));
        let hr = has(&["heart rate", "pulse", " hr ", "bpm"]);
        let multi = tier == Some(Tier::B) || has(&["during", "over the", " past ", " last ", "between"]);
        if has(&["burden", "how often", "how much of the time"]) {
            Target::AfBurden
        } else if has(&["alert", "alarm", "notification"]) {
            Target::AnyAlert
        } else if hr && has(&["highest", "maximum", " max ", "peak"]) {
            Target::MaxHrBpm
        } else if hr && has(&["average", " mean "]) {
            Target::MeanHrBpm
        } else if has(&["above 100", "tachycard", "too fast", "racing"]) {
            Target::Tachycardia
        } else if has(&["which rhythm", "what rhythm", "rhythm best"]) {
            Target::RhythmClass
        } else if has(&["atrial fibrillation", " af ", " afib", "irregular"]) {
            Target::AfDetected
        } else if has(&["variability", "hrv", "sdnn"]) {
            Target::SdnnMs
        } else if has(&["stress"]) {
            Target::StressState
        } else if hr {
            if tier == Some(Tier::B) && multi {
                Target::MeanHrBpm
            } else {
                Target::HrBpm
            }
        } else {
            Target::Knowledge
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub text: String,
    #[serde(default)]
    pub locator: Option<WindowLocator>,
    #[serde(default)]
    pub tier: Option<Tier>,
    #[serde(default)]
    pub qtype: Option<QType>,
    #[serde(default)]
    pub options: Option<Vec<String>>,
    #[serde(default)]
    pub target: Option<String>,
}

impl Query {
    pub fn new(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            locator: None,
            tier: None,
            qtype: None,
            options: None,
            target: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.qtype == Some(QType::SingleChoose) && self.options.as_ref().is_none_or(Vec::is_empty) {
            return Err(Error::DataIntegrity("single_choose query without options".into()));
        }
        Ok(())
    }

    /// Target from metadata when present, else from the question text.
    /// Without a locator there is no patient data to target.
    pub fn resolved_target(&self) -> Target {
        if self.locator.is_none() {
            return Target::Knowledge;
        }
        self.target
            .as_deref()
            .and_then(Target::parse)
            .unwrap_or_else(|| Target::from_text(&self.text, self.tier))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keyword_routing() {
        assert_eq!(Target::from_text("What is my current heart rate?", None), Target::HrBpm);
        assert_eq!(
            Target::from_text("How often was AF present in the last hour?", Some(Tier::B)),
            Target::AfBurden
        );
        assert_eq!(
            Target::from_text("What was my highest heart rate today?", Some(Tier::B)),
            Target::MaxHrBpm
        );
        assert_eq!(
            Target::from_text("Is there atrial fibrillation?", None),
            Target::AfDetected
        );
        assert_eq!(Target::from_text("What is bradycardia?", None), Target::Knowledge);
    }

    #[test]
    fn choose_needs_options() {
        let mut q = Query::new("Which rhythm?");
        q.qtype = Some(QType::SingleChoose);
        assert!(q.validate().is_err());
        q.options = Some(vec!["N".into()]);
        assert!(q.validate().is_ok());
    }
}
