use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::memory::AlertRecord;
use crate::signal::SynthAnnotation;

/// Reference abnormal episode on one patient's timeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeAnnotation {
    pub patient_id: String,
    pub onset_s: f64,
    pub offset_s: f64,
    pub label: String,
}

impl EpisodeAnnotation {
    pub fn from_synth(patient_id: &str, a: &SynthAnnotation) -> Self {
        Self {
            patient_id: patient_id.to_string(),
            onset_s: a.start_s,
            offset_s: a.end_s,
            label: a.label.as_str().to_string(),
        }
    }
}

/// Checks onset < offset and that each patient's episodes do not overlap.
pub fn validate_episodes(episodes: &[EpisodeAnnotation]) -> Result<()> {
    let mut by_patient: BTreeMap<&str, Vec<&EpisodeAnnotation>> = BTreeMap::new();
    for e in episodes {
        if !(e.onset_s.is_finite() && e.offset_s.is_finite() && e.onset_s < e.offset_s) {
            return Err(Error::DataIntegrity(format!(
                "episode of {} has onset {} not before offset {}",
                e.patient_id, e.onset_s, e.offset_s
            )));
        }
        by_patient.entry(&e.patient_id).or_default().push(e);
    }
    for (pid, mut eps) in by_patient {
        eps.sort_by(|a, b| a.onset_s.total_cmp(&b.onset_s));
        if let Some(w) = eps.windows(2).find(|w| w[1].onset_s < w[0].offset_s) {
            return Err(Error::DataIntegrity(format!(
                "episodes of {pid} overlap at {} s",
                w[1].onset_s
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub patient_id: String,
    pub onset_s: f64,
    pub offset_s: f64,
    pub label: String,
    pub first_alert_s: Option<f64>,
    pub latency_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProactiveReport {
    pub monitored_hours: f64,
    pub grace_s: f64,
    pub total_alerts: usize,
    pub matched_alerts: usize,
    pub false_alerts: usize,
    pub far_per_hour: f64,
    pub episodes: usize,
    pub matched_episodes: usize,
    pub missed_episodes: usize,
    pub latency_median_s: Option<f64>,
    pub per_episode: Vec<EpisodeOutcome>,
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    })
}

/// An alert matches an episode of the same patient when its time lies in
/// `[onset_s, offset_s + grace_s]`.
pub fn eval_proactive(
    alerts: &[AlertRecord],
    episodes: &[EpisodeAnnotation],
    monitored_hours: f64,
    grace_s: f64,
) -> Result<ProactiveReport> {
    if !(monitored_hours.is_finite() && monitored_hours > 0.0) {
        return Err(Error::Config(format!(
            "monitored_hours must be > 0, got {monitored_hours}"
        )));
    }
    if !(grace_s.is_finite() && grace_s >= 0.0) {
        return Err(Error::Config(format!("grace_s must be >= 0, got {grace_s}")));
    }
    let inside = |a: &AlertRecord, e: &EpisodeAnnotation| {
        a.patient_id == e.patient_id && a.time_s >= e.onset_s && a.time_s <= e.offset_s + grace_s
    };
    let matched_alerts = alerts.iter().filter(|a| episodes.iter().any(|e| inside(a, e))).count();
    let per_episode: Vec<EpisodeOutcome> = episodes
        .iter()
        .map(|e| {
            let first = alerts
                .iter()
                .filter(|a| inside(a, e))
                .map(|a| a.time_s)
                .min_by(f64::total_cmp);
            EpisodeOutcome {
                patient_id: e.patient_id.clone(),
                onset_s: e.onset_s,
                offset_s: e.offset_s,
                label: e.label.clone(),
                first_alert_s: first,
                latency_s: first.map(|t| t - e.onset_s),
            }
        })
        .collect();
    let latencies: Vec<f64> = per_episode.iter().filter_map(|o| o.latency_s).collect();
    let false_alerts = alerts.len() - matched_alerts;
    Ok(ProactiveReport {
        monitored_hours,
        grace_s,
        total_alerts: alerts.len(),
        matched_alerts,
        false_alerts,
        far_per_hour: false_alerts as f64 / monitored_hours,
        episodes: episodes.len(),
        matched_episodes: latencies.len(),
        missed_episodes: episodes.len() - latencies.len(),
        latency_median_s: median(&latencies),
        per_episode,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhythmReport {
    pub confusion: Confusion,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub balanced_accuracy: Option<f64>,
}

/// Per-window AF screening against reference labels, AF positive.
pub fn eval_rhythm<P: AsRef<str>, L: AsRef<str>>(predicted: &[P], labels: &[L]) -> Result<RhythmReport> {
    if predicted.len() != labels.len() {
        return Err(Error::DataIntegrity(format!(
            "{} predictions for {} labels",
            predicted.len(),
            labels.len()
        )));
    }
    let is_af = |s: &str| crate::rhythm::RhythmClass::normalize(s) == crate::rhythm::RhythmClass::Af;
    let mut c = Confusion::default();
    for (p, l) in predicted.iter().zip(labels) {
        match (is_af(p.as_ref()), is_af(l.as_ref())) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    let rate = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    let sensitivity = rate(c.tp, c.tp + c.fn_);
    let specificity = rate(c.tn, c.tn + c.fp);
    Ok(RhythmReport {
        confusion: c,
        sensitivity,
        specificity,
        balanced_accuracy: sensitivity.zip(specificity).map(|(a, b)| 0.5 * (a + b)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memory::{FiredRule, Urgency};

    fn alert(t: f64) -> AlertRecord {
        AlertRecord {
            patient_id: "p".into(),
            window_index: 0,
            time_s: t,
            fired_rule: FiredRule::ExtremeTachycardia,
            urgency: Urgency::High,
            reason: String::new(),
            advice: String::new(),
            cited_sections: vec![],
        }
    }

    fn episode(on: f64, off: f64) -> EpisodeAnnotation {
        EpisodeAnnotation {
            patient_id: "p".into(),
            onset_s: on,
            offset_s: off,
            label: "tachycardia".into(),
        }
    }

    #[test]
    fn far_and_first_match() {
        let r = eval_proactive(&[alert(10.0), alert(20.0)], &[], 1.0, 0.0).unwrap();
        assert_eq!(r.far_per_hour, 2.0);
        let r = eval_proactive(&[alert(150.0), alert(200.0)], &[episode(100.0, 300.0)], 1.0, 0.0).unwrap();
        assert_eq!(r.per_episode[0].latency_s, Some(50.0));
        assert_eq!((r.matched_episodes, r.false_alerts), (1, 0));
        assert!(eval_proactive(&[], &[], 0.0, 0.0).is_err());
    }

    #[test]
    fn grace_extends_match() {
        let eps = [episode(100.0, 200.0)];
        assert_eq!(
            eval_proactive(&[alert(205.0)], &eps, 1.0, 0.0).unwrap().missed_episodes,
            1
        );
        assert_eq!(
            eval_proactive(&[alert(205.0)], &eps, 1.0, 10.0)
                .unwrap()
                .missed_episodes,
            0
        );
    }

    #[test]
    fn episode_validation() {
        assert!(validate_episodes(&[episode(5.0, 5.0)]).is_err());
        assert!(validate_episodes(&[episode(0.0, 10.0), episode(5.0, 20.0)]).is_err());
        assert!(validate_episodes(&[episode(0.0, 10.0), episode(10.0, 20.0)]).is_ok());
    }

    #[test]
    fn rhythm_rates() {
        let labels = ["AF", "N", "AF", "Other"];
        let r = eval_rhythm(&labels, &labels).unwrap();
        assert_eq!(r.balanced_accuracy, Some(1.0));
        let r = eval_rhythm(&["AF"; 4], &labels).unwrap();
        assert_eq!(
            (r.sensitivity, r.specificity, r.balanced_accuracy),
            (Some(1.0), Some(0.0), Some(0.5))
        );
        let r = eval_rhythm(&["N"], &["N"]).unwrap();
        assert_eq!(r.sensitivity, None);
        assert!(eval_rhythm(&["N"], &["N", "AF"]).is_err());
    }
}
