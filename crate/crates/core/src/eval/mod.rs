//! Scoring for reactive QA and proactive alerting, the deterministic
//! dev/test split, template QA generation and the canonical JSONL schema
//! checks.

mod fixture;
mod generate;
mod proactive;
mod qa;
mod schema;
mod split;

pub use fixture::{default_fs, synth_patient, SynthPatient, SynthSpec};
pub use generate::{generate_synthetic_qa, Cell, CellReport, QaGenConfig, QaGenOutput, CELLS};
pub use proactive::{
    eval_proactive, eval_rhythm, median, validate_episodes, Confusion, EpisodeAnnotation, EpisodeOutcome,
    ProactiveReport, RhythmReport,
};
pub use qa::{answer_matches, parse_number, score_qa, CellScore, Prediction, QAExample, QaReport, ScoreConfig};
pub use schema::{check_episodes_file, check_episodes_text, check_windows_file, check_windows_text, SchemaReport};
pub use split::{hash_key, split_dev_test, DevTestSplit, SplitConfig, SplitItem, SplitRounding, StratumCount};
