use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::memory::{FiredRule, MonitoringState, TrailingView};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RuleConfig {
    pub brady_hr_bpm: f64,
    pub tachy_hr_bpm: f64,
    pub sustained_ratio: f64,
    pub sustained_hr_threshold_bpm: f64,
    pub sustained_min_samples: usize,
    pub q_min: f64,
    pub judge_period_windows: u64,
    pub dedup_mode: String,
}

impl Default for RuleConfig {
    fn default() -> Self {
        Self {
            brady_hr_bpm: 40.0,
            tachy_hr_bpm: 150.0,
            sustained_ratio: 0.8,
            sustained_hr_threshold_bpm: 100.0,
            sustained_min_samples: 20,
            q_min: 0.5,
            judge_period_windows: 20,
            dedup_mode: "episode".into(),
        }
    }
}

impl RuleConfig {
    pub fn validate(&self) -> Result<()> {
        let ordered = 0.0 < self.brady_hr_bpm
            && self.brady_hr_bpm < self.sustained_hr_threshold_bpm
            && self.sustained_hr_threshold_bpm < self.tachy_hr_bpm;
        let ratio_ok = self.sustained_ratio > 0.0 && self.sustained_ratio <= 1.0;
        if !ordered || !ratio_ok || self.judge_period_windows == 0 || self.dedup_mode != "episode" {
            return Err(Error::Config(format!("invalid rule config: {self:?}")));
        }
        Ok(())
    }
}

/// Rules firing on one window, in a fixed order.
pub fn evaluate_rules(state: &MonitoringState, trailing: &TrailingView, config: &RuleConfig) -> Vec<FiredRule> {
    let mut fired = Vec::new();
    let quality_ok = state.signal_quality_score.is_some_and(|q| q >= config.q_min);
    if let Some(hr) = state.hr_bpm {
        if quality_ok && hr < config.brady_hr_bpm {
            fired.push(FiredRule::ExtremeBradycardia);
        }
        if quality_ok && hr > config.tachy_hr_bpm {
            fired.push(FiredRule::ExtremeTachycardia);
        }
    }
    if trailing
        .tachycardia_ratio_5min
        .is_some_and(|r| r >= config.sustained_ratio)
        && trailing.tachycardia_sample_count >= config.sustained_min_samples
    {
        fired.push(FiredRule::SustainedTachycardia);
    }
    fired
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DedupDecision {
    Emit,
    Suppress,
}

/// Contiguity-based episodes: a rule that also fired on the immediately
/// preceding evaluation is part of the same episode. `previous` holds the
/// rules fired (emitted or not) at that evaluation.
pub fn dedup_episode(rule: FiredRule, previous: &[FiredRule]) -> DedupDecision {
    if previous.contains(&rule) {
        DedupDecision::Suppress
    } else {
        DedupDecision::Emit
    }
}
