use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use vitalmon::memory::HIDDEN_FIELDS;

fn vitalmon(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vitalmon"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Value {
    let out = vitalmon(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn err(args: &[&str]) -> Value {
    let out = vitalmon(args);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    serde_json::from_slice(&out.stderr).expect("stderr is a JSON error object")
}

const TACHY_SPEC: &str = r#"[
  {"patient_id": "t1", "total_duration_s": 600, "base_hr_bpm": 70, "noise_seed": 5,
   "segments": [{"start_s": 200, "end_s": 300, "kind": "tachycardia", "param": 160}]},
  {"patient_id": "a1", "total_duration_s": 900, "base_hr_bpm": 75, "noise_seed": 6,
   "segments": [{"start_s": 300, "end_s": 700, "kind": "af_like", "param": 0.3}]}
]"#;

fn synth(dir: &Path) -> (String, String) {
    let spec = dir.join("spec.json");
    std::fs::write(&spec, TACHY_SPEC).unwrap();
    let syn = dir.join("syn");
    ok(&["synth", spec.to_str().unwrap(), "--out", syn.to_str().unwrap()]);
    (
        syn.join("windows.jsonl").to_str().unwrap().to_string(),
        syn.join("episodes.jsonl").to_str().unwrap().to_string(),
    )
}

#[test]
fn synth_monitor_eval_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let (windows, episodes) = synth(dir.path());
    let check = ok(&["check", &windows, "--episodes", &episodes]);
    assert_eq!(check["clean"], true);

    let mon = dir.path().join("mon");
    ok(&["--offline", "monitor", &windows, "--out", mon.to_str().unwrap()]);
    assert!(mon.join("t1/monitor_config.json").is_file());
    let report = ok(&[
        "eval",
        "proactive",
        "--monitor-dir",
        mon.to_str().unwrap(),
        "--episodes",
        &episodes,
    ]);
    let p = &report["proactive"];
    assert_eq!(p["far_per_hour"], 0.0);
    let tachy = p["per_episode"]
        .as_array()
        .unwrap()
        .iter()
        .find(|e| e["patient_id"] == "t1")
        .unwrap();
    assert!(tachy["latency_s"].as_f64().unwrap() <= 10.0);
}

#[test]
fn monitor_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let (windows, episodes) = synth(dir.path());
    for judge in ["off", "on"] {
        let runs: Vec<_> = ["r1", "r2"]
            .iter()
            .map(|r| {
                let out = dir.path().join(format!("{r}-{judge}"));
                ok(&[
                    "--offline",
                    "--judge",
                    judge,
                    "monitor",
                    &windows,
                    "--episodes",
                    &episodes,
                    "--out",
                    out.to_str().unwrap(),
                ]);
                out
            })
            .collect();
        for pid in ["t1", "a1"] {
            for f in ["states.jsonl", "alerts.jsonl", "monitor_config.json"] {
                let a = std::fs::read(runs[0].join(pid).join(f)).unwrap();
                let b = std::fs::read(runs[1].join(pid).join(f)).unwrap();
                assert_eq!(a, b, "{judge} {pid}/{f}");
            }
        }
    }
}

#[test]
fn fair_export_has_no_hidden_fields() {
    let dir = tempfile::tempdir().unwrap();
    let (windows, episodes) = synth(dir.path());
    let full = dir.path().join("full");
    let fair = dir.path().join("fair");
    ok(&[
        "monitor",
        &windows,
        "--episodes",
        &episodes,
        "--out",
        full.to_str().unwrap(),
    ]);
    ok(&[
        "--fair",
        "monitor",
        &windows,
        "--episodes",
        &episodes,
        "--out",
        fair.to_str().unwrap(),
    ]);
    let full_text = std::fs::read_to_string(full.join("a1/states.jsonl")).unwrap();
    assert!(full_text.contains("\"rhythm_class\""));
    for pid in ["t1", "a1"] {
        let text = std::fs::read_to_string(fair.join(pid).join("states.jsonl")).unwrap();
        for f in HIDDEN_FIELDS {
            assert!(!text.contains(&format!("\"{f}\"")), "{pid} leaks {f}");
        }
    }
}

#[test]
fn generated_qa_round_trip_scores_perfectly() {
    let dir = tempfile::tempdir().unwrap();
    let (windows, _) = synth(dir.path());
    let mon = dir.path().join("mon");
    ok(&["--fair", "monitor", &windows, "--out", mon.to_str().unwrap()]);
    let qa = dir.path().join("qa.jsonl");
    let preds = dir.path().join("preds.jsonl");
    let g = ok(&[
        "gen-qa",
        mon.to_str().unwrap(),
        "--out",
        qa.to_str().unwrap(),
        "--per-cell",
        "4",
    ]);
    assert_eq!(g["examples"], 32);
    ok(&[
        "--offline",
        "qa",
        &windows,
        "--qa-file",
        qa.to_str().unwrap(),
        "--out",
        preds.to_str().unwrap(),
    ]);
    let r = ok(&[
        "eval",
        "qa",
        "--qa",
        qa.to_str().unwrap(),
        "--predictions",
        preds.to_str().unwrap(),
    ]);
    assert_eq!(r["accuracy"], 1.0, "{r}");
    assert_eq!(r["config"]["abs_tol"], 2.0);

    let split = dir.path().join("split");
    let s = ok(&[
        "split",
        qa.to_str().unwrap(),
        "--out",
        split.to_str().unwrap(),
        "--seed",
        "3",
    ]);
    assert_eq!(s["dev"].as_u64().unwrap() + s["test"].as_u64().unwrap(), 32);
    let dev = std::fs::read_to_string(split.join("dev_ids.txt")).unwrap();
    assert_eq!(dev.lines().count() as u64, s["dev"].as_u64().unwrap());
}

#[test]
fn single_question_answers() {
    let dir = tempfile::tempdir().unwrap();
    let (windows, _) = synth(dir.path());
    let preds = dir.path().join("p.jsonl");
    let r = ok(&[
        "qa",
        &windows,
        "--question",
        "What was my heart rate?",
        "--patient",
        "t1",
        "--start",
        "0",
        "--end",
        "10",
        "--out",
        preds.to_str().unwrap(),
    ]);
    let answer = r["answers"].as_str().unwrap();
    let bpm: f64 = answer.trim_end_matches(" bpm").parse().unwrap();
    assert!((bpm - 70.0).abs() <= 2.0, "{answer}");
}

#[test]
fn errors_are_json_with_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    let qa = dir.path().join("qa.jsonl");
    let preds = dir.path().join("preds.jsonl");
    std::fs::write(
        &qa,
        r#"{"id":"a","dataset":"synthetic","tier":"A","qtype":"single_query","question":"q","answer":"72","target":"hr_bpm","locator":{"dataset":"synthetic","patient_id":"p","window_start_s":0,"window_end_s":10}}"#,
    )
    .unwrap();
    std::fs::write(&preds, "{\"id\":\"b\",\"answer\":\"72\"}\n").unwrap();
    let e = err(&[
        "eval",
        "qa",
        "--qa",
        qa.to_str().unwrap(),
        "--predictions",
        preds.to_str().unwrap(),
    ]);
    assert_eq!(e["error"]["kind"], "data_integrity");

    assert_eq!(err(&["--bogus", "tools"])["error"]["kind"], "usage");
    assert_eq!(
        err(&["monitor", "/nonexistent.jsonl", "--out", "/tmp/x"])["error"]["kind"],
        "io"
    );
    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, "{\"patient_id\": 1}\n").unwrap();
    assert_eq!(
        err(&["monitor", bad.to_str().unwrap(), "--out", "/tmp/x"])["error"]["kind"],
        "parse"
    );
}

#[test]
fn tools_listing() {
    let all = ok(&["tools"]);
    assert_eq!(all["tools"].as_array().unwrap().len(), 41);
    let agent = ok(&["tools", "--agent"]);
    assert_eq!(agent["tools"].as_array().unwrap().len(), 29);
    let sig = ok(&["tools", "--category", "signal_analysis"]);
    assert_eq!(sig["tools"].as_array().unwrap().len(), 13);
}
