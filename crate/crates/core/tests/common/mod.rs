#![allow(dead_code)]

use std::collections::BTreeMap;

use vitalmon::eval::{synth_patient, EpisodeAnnotation, SynthSpec};
use vitalmon::memory::{MonitoringState, PatientMemory};
use vitalmon::proactive::{replay, MonitorConfig};
use vitalmon::signal::{Modality, SampleWindow, SegmentKind, StreamScript};
use vitalmon::tools::{ToolContext, WindowStore};

/// Two hours at 70 bpm with a 160 bpm burst, a 35 bpm spell and a
/// 10 minute run at 110 bpm.
pub fn three_episode_script() -> StreamScript {
    StreamScript::new(7200.0, 70.0, 3)
        .segment(1200.0, 1320.0, SegmentKind::Tachycardia, 160.0)
        .segment(3000.0, 3120.0, SegmentKind::Bradycardia, 35.0)
        .segment(5000.0, 5600.0, SegmentKind::Tachycardia, 110.0)
}

/// One ECG and one PPG patient with AF and tachycardia spells.
pub fn qa_specs() -> Vec<SynthSpec> {
    let ecg = StreamScript::new(1800.0, 70.0, 1)
        .segment(300.0, 600.0, SegmentKind::AfLike, 0.3)
        .segment(900.0, 1100.0, SegmentKind::Tachycardia, 120.0)
        .segment(1300.0, 1400.0, SegmentKind::Tachycardia, 160.0);
    let mut ppg = StreamScript::new(1800.0, 80.0, 2)
        .segment(200.0, 700.0, SegmentKind::AfLike, 0.35)
        .segment(1000.0, 1200.0, SegmentKind::Tachycardia, 115.0);
    ppg.modality = Modality::Ppg;
    vec![SynthSpec::new("ecg-1", ecg), SynthSpec::new("ppg-1", ppg)]
}

pub struct World {
    pub states: Vec<MonitoringState>,
    pub context: ToolContext,
    pub episodes: Vec<EpisodeAnnotation>,
}

/// Synthesises, replays and indexes every spec.
pub fn build_world(specs: &[SynthSpec], cfg: &MonitorConfig) -> World {
    let mut store = WindowStore::new();
    let mut memories: BTreeMap<String, PatientMemory> = BTreeMap::new();
    let mut states = Vec::new();
    let mut episodes = Vec::new();
    for s in specs {
        let p = synth_patient(s).unwrap();
        let m = replay(&p.windows, cfg, None, vec![]).unwrap();
        states.extend(m.memory().states().iter().cloned());
        memories.insert(s.patient_id.clone(), m.into_memory());
        store.extend(p.windows);
        episodes.extend(p.episodes);
    }
    World {
        states,
        context: ToolContext::new(store, memories, cfg.clone()),
        episodes,
    }
}

pub fn windows_of(spec: &SynthSpec) -> (Vec<SampleWindow>, Vec<EpisodeAnnotation>) {
    let p = synth_patient(spec).unwrap();
    (p.windows, p.episodes)
}
