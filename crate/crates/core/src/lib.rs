//! Streaming physiological monitoring with a typed tool layer and an agent loop.
//!
//! The crate is organised bottom-up:
//!
//! - [`signal`]: canonical windows, peak detection, RR derivation, synthetic streams
//! - [`features`]: deterministic RR / window features
//! - [`rhythm`]: N / AF / Other screening from RR irregularity
//! - [`memory`]: longitudinal per-patient monitoring memory
//! - [`proactive`]: rule evaluation, episode dedup and the periodic judge checkpoint
//! - [`tools`]: the typed tool registry and its built-in tools
//! - [`agent`]: plan, execute, validate, replan and answer composition
//! - [`eval`]: QA scoring, dev/test split and proactive alert metrics
//!
//! Batch entry points (multi-patient replay, feature batches, QA runs) go
//! through [`exec`], which uses rayon when the `parallel` feature is on and
//! plain iteration otherwise.

pub mod agent;
pub mod config;
pub mod error;
pub mod eval;
pub mod exec;
pub mod features;
pub mod jsonl;
pub mod llm;
pub mod memory;
pub mod proactive;
pub mod rhythm;
pub mod signal;
pub mod tools;

pub use error::{Error, Result};
