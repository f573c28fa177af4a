use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::qa::QAExample;
use crate::agent::{af_burden_bucket, format_number, yes_no, QType, Target, Tier, WindowLocator, AF_BURDEN_BUCKETS};
use crate::memory::{leakage_filter, summarize_states, MonitoringState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QaGenConfig {
    pub n_per_cell: usize,
    pub seed: u64,
    /// Contiguous states per Tier B question.
    pub tier_b_windows: usize,
    pub tachycardia_threshold_bpm: f64,
}

impl Default for QaGenConfig {
    fn default() -> Self {
        Self {
            n_per_cell: 15,
            seed: 0,
            tier_b_windows: 12,
            tachycardia_threshold_bpm: 100.0,
        }
    }
}

/// One (tier, qtype, target) template.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cell {
    pub tier: Tier,
    pub qtype: QType,
    pub target: Target,
}

pub const CELLS: [Cell; 8] = [
    Cell {
        tier: Tier::A,
        qtype: QType::SingleQuery,
        target: Target::HrBpm,
    },
    Cell {
        tier: Tier::A,
        qtype: QType::SingleVerify,
        target: Target::AfDetected,
    },
    Cell {
        tier: Tier::A,
        qtype: QType::SingleChoose,
        target: Target::RhythmClass,
    },
    Cell {
        tier: Tier::A,
        qtype: QType::SingleVerify,
        target: Target::Tachycardia,
    },
    Cell {
        tier: Tier::B,
        qtype: QType::SingleQuery,
        target: Target::MaxHrBpm,
    },
    Cell {
        tier: Tier::B,
        qtype: QType::SingleQuery,
        target: Target::MeanHrBpm,
    },
    Cell {
        tier: Tier::B,
        qtype: QType::SingleChoose,
        target: Target::AfBurden,
    },
    Cell {
        tier: Tier::B,
        qtype: QType::SingleVerify,
        target: Target::AnyAlert,
    },
];

const RHYTHM_OPTIONS: [&str; 3] = ["N", "AF", "Other"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub tier: Tier,
    pub qtype: QType,
    pub target: String,
    pub candidates: usize,
    pub requested: usize,
    pub generated: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaGenOutput {
    pub examples: Vec<QAExample>,
    pub report: Vec<CellReport>,
}

fn question(target: Target, s: f64, e: f64) -> String {
    let (s, e) = (format_number(s), format_number(e));
    let span = format!("between {s} s and {e} s");
    match target {
        Target::HrBpm => format!("What was my heart rate {span}?"),
        Target::AfDetected => format!("Was atrial fibrillation detected {span}?"),
        Target::RhythmClass => format!("Which rhythm best describes my heart {span}?"),
        Target::Tachycardia => format!("Was my heart rate above 100 bpm {span}?"),
        Target::MaxHrBpm => format!("What was my highest heart rate {span}?"),
        Target::MeanHrBpm => format!("What was my average heart rate {span}?"),
        Target::AfBurden => format!("How often was atrial fibrillation present {span}?"),
        Target::AnyAlert => format!("Was any alert raised {span}?"),
        other => format!("What was my {} {span}?", other.as_str().replace('_', " ")),
    }
}

/// Gold answer for a run of states, or `None` when the target is absent.
fn gold(cell: &Cell, states: &[MonitoringState], cfg: &QaGenConfig) -> Option<String> {
    let s = states.first()?;
    match cell.target {
        Target::HrBpm => s.hr_bpm.map(format_number),
        Target::Tachycardia => s.hr_bpm.map(|h| yes_no(h > cfg.tachycardia_threshold_bpm).to_string()),
        Target::AfDetected => match s.screened_rhythm()? {
            "unknown" => None,
            r => Some(yes_no(r == "AF").to_string()),
        },
        Target::RhythmClass => s
            .screened_rhythm()
            .filter(|r| RHYTHM_OPTIONS.contains(r))
            .map(str::to_string),
        Target::MaxHrBpm | Target::MeanHrBpm | Target::AfBurden | Target::AnyAlert => {
            let sum = summarize_states(states, cfg.tachycardia_threshold_bpm);
            match cell.target {
                Target::MaxHrBpm => sum.max_hr_bpm.map(format_number),
                Target::MeanHrBpm => sum.mean_hr_bpm.map(format_number),
                Target::AfBurden => {
                    // Every state needs a screen result for the ratio to mean anything.
                    states
                        .iter()
                        .all(|s| s.screened_rhythm().is_some_and(|r| r != "unknown"))
                        .then(|| af_burden_bucket(sum.af_window_ratio).to_string())
                }
                _ => Some(yes_no(sum.alert_count > 0).to_string()),
            }
        }
        _ => None,
    }
}

fn options(target: Target) -> Option<Vec<String>> {
    match target {
        Target::RhythmClass => Some(RHYTHM_OPTIONS.map(String::from).to_vec()),
        Target::AfBurden => Some(AF_BURDEN_BUCKETS.map(String::from).to_vec()),
        _ => None,
    }
}

/// Template-instantiated QA grounded in visible monitoring states. Tier A
/// questions cover one window; Tier B questions cover `tier_b_windows`
/// contiguous windows. Cells with too few candidates generate what they can
/// and say so in the report.
pub fn generate_synthetic_qa(states: &[MonitoringState], cfg: &QaGenConfig) -> QaGenOutput {
    let mut by_patient: BTreeMap<&str, Vec<MonitoringState>> = BTreeMap::new();
    for s in states {
        by_patient.entry(&s.patient_id).or_default().push(leakage_filter(s));
    }
    for v in by_patient.values_mut() {
        v.sort_by_key(|s| s.window_index);
    }
    let k = cfg.tier_b_windows.max(1);

    let mut examples = Vec::new();
    let mut report = Vec::new();
    for (ci, cell) in CELLS.iter().enumerate() {
        let span = if cell.tier == Tier::A { 1 } else { k };
        let mut candidates: Vec<(&[MonitoringState], String)> = Vec::new();
        for run in by_patient.values() {
            for w in run.windows(span) {
                let contiguous = w.windows(2).all(|p| p[1].window_index == p[0].window_index + 1);
                if let Some(answer) = contiguous.then(|| gold(cell, w, cfg)).flatten() {
                    candidates.push((w, answer));
                }
            }
        }
        let n = cfg.n_per_cell.min(candidates.len());
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(ci as u64));
        let mut picked = sample(&mut rng, candidates.len(), n).into_vec();
        picked.sort_unstable();
        for (j, &i) in picked.iter().enumerate() {
            let (w, answer) = &candidates[i];
            let (first, last) = (&w[0], &w[w.len() - 1]);
            examples.push(QAExample {
                id: format!(
                    "{}-{}-{}-{j}",
                    first.patient_id,
                    cell.tier.as_str(),
                    cell.target.as_str()
                ),
                dataset: first.dataset,
                tier: cell.tier,
                qtype: cell.qtype,
                question: question(cell.target, first.window_start_s, last.window_end_s),
                options: options(cell.target),
                answer: answer.clone(),
                target: cell.target.as_str().to_string(),
                locator: WindowLocator {
                    dataset: first.dataset,
                    patient_id: first.patient_id.clone(),
                    window_start_s: first.window_start_s,
                    window_end_s: last.window_end_s,
                },
            });
        }
        let note = if candidates.is_empty() {
            Some("target absent in states; cell skipped".to_string())
        } else if n < cfg.n_per_cell {
            Some(format!("only {} candidates", candidates.len()))
        } else {
            None
        };
        report.push(CellReport {
            tier: cell.tier,
            qtype: cell.qtype,
            target: cell.target.as_str().to_string(),
            candidates: candidates.len(),
            requested: cfg.n_per_cell,
            generated: n,
            note,
        });
    }
    QaGenOutput { examples, report }
}
