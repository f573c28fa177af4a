//! Text-completion backends shared by the planner, responder and judge.
//!
//! The live backend (feature `http`) posts to a completion endpoint named by
//! environment variables; temperature is pinned to 0. Tests use
//! [`ScriptedCompletion`].

use std::collections::VecDeque;
use std::sync::Mutex;

use crate::error::{Error, Result};

pub const ENV_URL: &str = "VITALMON_LLM_URL";
pub const ENV_API_KEY: &str = "VITALMON_LLM_API_KEY";
pub const ENV_MODEL: &str = "VITALMON_LLM_MODEL";

pub trait TextCompletion: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String>;
}

/// Replays canned responses in order and records every prompt it saw.
#[derive(Debug, Default)]
pub struct ScriptedCompletion {
    responses: Mutex<VecDeque<Result<String, String>>>,
    prompts: Mutex<Vec<String>>,
}

impl ScriptedCompletion {
    pub fn new<I, S>(responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            responses: Mutex::new(responses.into_iter().map(|s| Ok(s.into())).collect()),
            prompts: Mutex::new(Vec::new()),
        }
    }

    /// Queues a backend failure (e.g. a timeout).
    pub fn push_error(&self, message: impl Into<String>) {
        self.responses.lock().unwrap().push_back(Err(message.into()));
    }

    pub fn prompts(&self) -> Vec<String> {
        self.prompts.lock().unwrap().clone()
    }
}

impl TextCompletion for ScriptedCompletion {
    fn complete(&self, prompt: &str) -> Result<String> {
        self.prompts.lock().unwrap().push(prompt.to_string());
        match self.responses.lock().unwrap().pop_front() {
            Some(Ok(s)) => Ok(s),
            Some(Err(e)) => Err(Error::Backend(e)),
            None => Err(Error::Backend("scripted backend exhausted".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EndpointConfig {
    pub url: String,
    pub api_key: Option<String>,
    pub model: String,
    pub timeout_s: f64,
    pub max_tokens: u32,
}

impl EndpointConfig {
    pub fn from_env() -> Result<Self> {
        let url = std::env::var(ENV_URL).map_err(|_| Error::Config(format!("{ENV_URL} is not set")))?;
        Ok(Self {
            url,
            api_key: std::env::var(ENV_API_KEY).ok(),
            model: std::env::var(ENV_MODEL).unwrap_or_else(|_| "default".into()),
            timeout_s: 30.0,
            max_tokens: 2048,
        })
    }
}

/// Pulls the generated text out of the common completion response shapes.
pub fn extract_completion_text(body: &serde_json::Value) -> Option<String> {
    if let Some(t) = body.get("text").and_then(|v| v.as_str()) {
        return Some(t.to_string());
    }
    let choice = body.get("choices")?.get(0)?;
    choice
        .get("text")
        .and_then(|v| v.as_str())
        .or_else(|| choice.get("message")?.get("content")?.as_str())
        .map(str::to_string)
}

#[cfg(feature = "http")]
pub use http::HttpCompletion;

#[cfg(feature = "http")]
mod http {
    use std::time::Duration;

    use super::{extract_completion_text, EndpointConfig, TextCompletion};
    use crate::error::{Error, Result};

    pub struct HttpCompletion {
        config: EndpointConfig,
        client: reqwest::blocking::Client,
    }

    impl HttpCompletion {
        pub fn new(config: EndpointConfig) -> Result<Self> {
            let client = reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs_f64(config.timeout_s))
                .build()
                .map_err(|e| Error::Backend(e.to_string()))?;
            Ok(Self { config, client })
        }
    }

    impl TextCompletion for HttpCompletion {
        fn complete(&self, prompt: &str) -> Result<String> {
            let body = serde_json::json!({
                "model": self.config.model,
                "prompt": prompt,
                "temperature": 0,
                "max_tokens": self.config.max_tokens,
            });
            let mut req = self.client.post(&self.config.url).json(&body);
            if let Some(key) = &self.config.api_key {
                req = req.bearer_auth(key);
            }
            let resp = req.send().map_err(|e| Error::Backend(e.to_string()))?;
            let status = resp.status();
            if !status.is_success() {
                return Err(Error::Backend(format!("endpoint returned {status}")));
            }
            let value: serde_json::Value = resp.json().map_err(|e| Error::Backend(e.to_string()))?;
            extract_completion_text(&value).ok_or_else(|| Error::Backend("completion response carried no text".into()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scripted_replays_in_order() {
        let s = ScriptedCompletion::new(["a", "b"]);
        s.push_error("timeout");
        assert_eq!(s.complete("p1").unwrap(), "a");
        assert_eq!(s.complete("p2").unwrap(), "b");
        assert!(matches!(s.complete("p3"), Err(Error::Backend(_))));
        assert!(s.complete("p4").is_err());
        assert_eq!(s.prompts().len(), 4);
    }

    #[test]
    fn completion_shapes() {
        let a = serde_json::json!({"text": "x"});
        let b = serde_json::json!({"choices": [{"text": "y"}]});
        let c = serde_json::json!({"choices": [{"message": {"content": "z"}}]});
        assert_eq!(extract_completion_text(&a).as_deref(), Some("x"));
        assert_eq!(extract_completion_text(&b).as_deref(), Some("y"));
        assert_eq!(extract_completion_text(&c).as_deref(), Some("z"));
        assert_eq!(extract_completion_text(&serde_json::json!({})), None);
    }
}
