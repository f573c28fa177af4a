use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use vitalmon::eval::{synth_patient, SynthSpec};
use vitalmon::exec::{self, Execution};
use vitalmon::features::{analyze_window, FeatureConfig};
use vitalmon::proactive::{replay_patients, AnnotationSpan, MonitorConfig};
use vitalmon::rhythm::{tune_thresholds, LabeledFeatures, RhythmClass, ScreenConfig, TuneGrid};
use vitalmon::signal::{SampleWindow, SegmentKind, StreamScript};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn patients(n: usize, duration_s: f64) -> Vec<(Vec<SampleWindow>, Vec<AnnotationSpan>)> {
    (0..n)
        .map(|i| {
            let script = StreamScript::new(duration_s, 65.0 + i as f64, i as u64)
                .segment(duration_s * 0.3, duration_s * 0.5, SegmentKind::AfLike, 0.3)
                .segment(duration_s * 0.7, duration_s * 0.8, SegmentKind::Tachycardia, 160.0);
            let p = synth_patient(&SynthSpec::new(format!("p{i}"), script)).unwrap();
            (p.windows, vec![])
        })
        .collect()
}

fn labeled(windows: &[SampleWindow], duration_s: f64) -> Vec<LabeledFeatures> {
    let cfg = FeatureConfig::default();
    windows
        .iter()
        .map(|w| {
            let mid = w.start_s + w.duration_s / 2.0;
            let af = mid >= duration_s * 0.3 && mid < duration_s * 0.5;
            LabeledFeatures {
                features: analyze_window(w, &cfg).features,
                label: if af { RhythmClass::Af } else { RhythmClass::N },
            }
        })
        .collect()
}

fn bench(c: &mut Criterion) {
    let cohort = patients(8, 1800.0);
    let windows: Vec<SampleWindow> = cohort.iter().flat_map(|(w, _)| w.iter().cloned()).collect();
    let dev = labeled(&windows, 1800.0);
    let feature_cfg = FeatureConfig::default();
    let monitor_cfg = MonitorConfig::default();
    let grid = TuneGrid::default();
    let screen = ScreenConfig::default();

    let mut g = c.benchmark_group("feature_batch");
    for (name, mode) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| exec::map(mode, black_box(&windows), |w| analyze_window(w, &feature_cfg)))
        });
    }
    g.finish();

    let mut g = c.benchmark_group("replay_patients");
    g.sample_size(10);
    for (name, mode) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| replay_patients(black_box(&cohort), &monitor_cfg, None, mode))
        });
    }
    g.finish();

    let mut g = c.benchmark_group("tune_grid");
    g.sample_size(10);
    for (name, mode) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| tune_thresholds(black_box(&dev), &screen, &grid, mode))
        });
    }
    g.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
