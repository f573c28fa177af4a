mod common;

use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;

use proptest::prelude::*;
use serde_json::{Map, Value};

use vitalmon::eval::{split_dev_test, SplitConfig, SplitItem, SplitRounding};
use vitalmon::features::{coeff_variation, heart_rate, rmssd, sdnn, turning_point_ratio};
use vitalmon::memory::{leakage_filter, rescan_trailing, MemoryConfig, MonitoringState, PatientMemory, HIDDEN_FIELDS};
use vitalmon::proactive::MonitorConfig;
use vitalmon::signal::{Dataset, Modality};
use vitalmon::tools::{
    ArgSpec, ArgType, HandlerResult, OutputKind, ToolCategory, ToolContext, ToolDescriptor, ToolErrorCode,
    ToolRegistry, WindowStore,
};

fn rr_seq() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.3f64..1.6, 3..120)
}

fn rel(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1e-12)
}

proptest! {
    #[test]
    fn features_follow_scale_laws(rr in rr_seq(), k in 0.5f64..2.0) {
        let scaled: Vec<f64> = rr.iter().map(|x| x * k).collect();
        prop_assert!(rel(heart_rate(&scaled).unwrap(), heart_rate(&rr).unwrap() / k));
        prop_assert!(rel(sdnn(&scaled).unwrap(), sdnn(&rr).unwrap() * k));
        prop_assert!(rel(rmssd(&scaled).unwrap(), rmssd(&rr).unwrap() * k));
        prop_assert!((coeff_variation(&scaled).unwrap() - coeff_variation(&rr).unwrap()).abs() <= 1e-12);
        prop_assert_eq!(turning_point_ratio(&scaled), turning_point_ratio(&rr));
    }

    #[test]
    fn reversal_preserves_order_free_features(rr in rr_seq()) {
        let rev: Vec<f64> = rr.iter().rev().cloned().collect();
        prop_assert!(rel(rmssd(&rev).unwrap(), rmssd(&rr).unwrap()));
        prop_assert!(rel(sdnn(&rev).unwrap(), sdnn(&rr).unwrap()));
        prop_assert_eq!(turning_point_ratio(&rev), turning_point_ratio(&rr));
        let tpr = turning_point_ratio(&rr).unwrap();
        prop_assert!((0.0..=1.0).contains(&tpr));
    }

    #[test]
    fn running_trailing_view_matches_rescan(
        hrs in prop::collection::vec(prop::option::weighted(0.85, 40.0f64..200.0), 1..80),
        skips in prop::collection::vec(0u8..3, 80),
    ) {
        let mut m = PatientMemory::new(MemoryConfig::default());
        let mut t = 0.0;
        for (i, hr) in hrs.iter().enumerate() {
            // Occasional gaps between windows.
            t += 10.0 * (1 + u64::from(skips[i] == 0) * 5) as f64;
            let mut s = MonitoringState::for_window("p", Dataset::Synthetic, Modality::Ecg, i as u64, t, 10.0);
            s.hr_bpm = *hr;
            m.update(s, vec![]).unwrap();
            let fast = m.trailing_view(300.0);
            let slow = rescan_trailing(m.states(), 300.0, 100.0);
            prop_assert_eq!(fast.tachycardia_sample_count, slow.tachycardia_sample_count);
            match (fast.mean_hr_5min, slow.mean_hr_5min) {
                (Some(a), Some(b)) => prop_assert!(rel(a, b)),
                (a, b) => prop_assert_eq!(a, b),
            }
            prop_assert_eq!(fast.tachycardia_ratio_5min, slow.tachycardia_ratio_5min);
        }
    }

    #[test]
    fn registry_flags_dropped_required_fields(keep in prop::collection::vec(any::<u8>(), 0..6), null_mask in any::<u8>()) {
        let fields = ["a", "b", "c"];
        let build = move || {
            let mut out = Map::new();
            for (i, k) in keep.iter().enumerate() {
                let v = if null_mask >> (i % 8) & 1 == 1 { Value::Null } else { Value::from(1.0) };
                out.insert(fields[*k as usize % 3].to_string(), v);
            }
            out
        };
        let expected = build();
        let mut reg = ToolRegistry::new();
        reg.register(
            ToolDescriptor {
                name: "probe".into(),
                category: ToolCategory::SignalAnalysis,
                description: "test tool".into(),
                arg_schema: vec![ArgSpec::optional("x", ArgType::Number, "x")],
                output_kind: OutputKind::Data,
                required_output_fields: vec!["a".into(), "b".into()],
                benchmark_only: false,
            },
            Arc::new(move |_, _| -> HandlerResult { Ok(build()) }),
        )
        .unwrap();
        let ctx = ToolContext::new(WindowStore::new(), BTreeMap::new(), MonitorConfig::default());
        let r = reg.invoke("probe", &Map::new(), &ctx);
        let present = |f: &str| expected.get(f).is_some_and(|v| !v.is_null());
        let expected_ok = present("a") && present("b");
        prop_assert_eq!(r.is_ok(), expected_ok);
        if !r.is_ok() {
            prop_assert_eq!(r.error_code, Some(ToolErrorCode::ToolFailure));
            prop_assert!(!r.missing_fields.is_empty());
            for f in &r.missing_fields {
                prop_assert!(f == "a" || f == "b");
            }
        }
        let mut bad = Map::new();
        bad.insert("y".into(), Value::from(1));
        prop_assert_eq!(reg.invoke("probe", &bad, &ctx).error_code, Some(ToolErrorCode::InvalidArgs));
    }

    #[test]
    fn split_partitions_and_respects_rounding(
        sizes in prop::collection::vec(1usize..60, 1..6),
        frac in 0.05f64..0.95,
        seed in "[a-z0-9]{1,8}",
    ) {
        let items: Vec<SplitItem> = sizes
            .iter()
            .enumerate()
            .flat_map(|(s, n)| (0..*n).map(move |i| SplitItem { id: format!("{s}-{i}"), stratum: format!("s{s}") }))
            .collect();
        for rounding in [SplitRounding::Floor, SplitRounding::Ceil] {
            let cfg = SplitConfig { dev_frac: frac, seed: seed.clone(), rounding };
            let out = split_dev_test(&items, &cfg).unwrap();
            let dev: HashSet<_> = out.dev.iter().collect();
            let test: HashSet<_> = out.test.iter().collect();
            prop_assert!(dev.is_disjoint(&test));
            prop_assert_eq!(dev.len() + test.len(), items.len());
            for c in &out.strata {
                let exact = frac * c.total as f64;
                match rounding {
                    SplitRounding::Floor => prop_assert!(c.dev as f64 <= exact + 1e-9 && exact - (c.dev as f64) < 1.0 + 1e-9),
                    SplitRounding::Ceil => prop_assert!(c.dev as f64 >= exact - 1e-9 && (c.dev as f64) - exact < 1.0 + 1e-9),
                }
            }
            let mut rev = items.clone();
            rev.reverse();
            prop_assert_eq!(&split_dev_test(&rev, &cfg).unwrap(), &out);
        }
    }
}

#[test]
fn leakage_filter_is_idempotent_and_complete() {
    let world = common::build_world(&common::qa_specs(), &MonitorConfig::default());
    for s in &world.states {
        let once = leakage_filter(s);
        assert_eq!(leakage_filter(&once), once);
        let text = serde_json::to_string(&once).unwrap();
        for f in HIDDEN_FIELDS {
            assert!(!text.contains(&format!("\"{f}\"")), "{f} survives in {}", s.state_id);
        }
    }
}

#[test]
fn persisted_memory_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let world = common::build_world(&common::qa_specs()[..1], &MonitorConfig::default());
    let memory = world.context.memory("ecg-1").unwrap();
    memory.persist(dir.path()).unwrap();
    let loaded = PatientMemory::load(dir.path(), memory.config.clone()).unwrap();
    assert_eq!(&loaded, memory);
    assert_eq!(loaded.trailing_view(300.0), memory.trailing_view(300.0));
}
