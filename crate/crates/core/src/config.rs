//! Run configuration: one JSON file plus command-line overrides. Endpoint
//! credentials come only from the environment (see [`crate::llm`]).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agent::AgentConfig;
use crate::error::{Error, Result};
use crate::eval::{QaGenConfig, ScoreConfig, SplitConfig};
use crate::proactive::MonitorConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Offline,
    Endpoint,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    pub data_dir: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    /// Guideline corpus for the judge; the bundled corpus when absent.
    pub guidelines: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub paths: Paths,
    pub monitor: MonitorConfig,
    pub score: ScoreConfig,
    pub split: SplitConfig,
    pub qa_gen: QaGenConfig,
    pub agent: AgentConfig,
    pub backend: BackendKind,
    pub seed: u64,
    /// Export leakage-filtered states only.
    pub fair: bool,
    pub judge: bool,
    /// Slack after an episode offset within which an alert still matches.
    pub episode_grace_s: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            paths: Paths::default(),
            monitor: MonitorConfig::default(),
            score: ScoreConfig::default(),
            split: SplitConfig::default(),
            qa_gen: QaGenConfig::default(),
            agent: AgentConfig::default(),
            backend: BackendKind::Offline,
            seed: 0,
            fair: false,
            judge: false,
            episode_grace_s: 0.0,
        }
    }
}

/// Values given on the command line; `None` keeps the file value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub offline: bool,
    pub fair: bool,
    pub seed: Option<u64>,
    pub judge: Option<bool>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if o.offline {
            self.backend = BackendKind::Offline;
        }
        if o.fair {
            self.fair = true;
        }
        if let Some(seed) = o.seed {
            self.seed = seed;
            self.qa_gen.seed = seed;
            self.split.seed = seed.to_string();
        }
        if let Some(j) = o.judge {
            self.judge = j;
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.monitor.validate()?;
        if !(self.score.abs_tol >= 0.0 && self.score.rel_tol >= 0.0) {
            return Err(Error::Config("score tolerances must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.split.dev_frac) {
            return Err(Error::Config(format!(
                "split.dev_frac {} outside [0, 1]",
                self.split.dev_frac
            )));
        }
        if self.episode_grace_s.is_nan() || self.episode_grace_s < 0.0 {
            return Err(Error::Config("episode_grace_s must be >= 0".into()));
        }
        Ok(())
    }

    pub fn is_offline(&self) -> bool {
        self.backend == BackendKind::Offline
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_and_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.json");
        std::fs::write(&p, r#"{"backend":"endpoint","judge":true,"score":{"abs_tol":3}}"#).unwrap();
        let mut c = RunConfig::load(&p).unwrap();
        assert_eq!(c.score.abs_tol, 3.0);
        assert_eq!(c.score.rel_tol, 0.05);
        c.apply(&Overrides {
            offline: true,
            seed: Some(9),
            judge: Some(false),
            ..Overrides::default()
        });
        assert!(c.is_offline() && !c.judge);
        assert_eq!(c.split.seed, "9");
        std::fs::write(&p, r#"{"split":{"dev_frac":2}}"#).unwrap();
        assert!(RunConfig::load(&p).is_err());
    }
}
