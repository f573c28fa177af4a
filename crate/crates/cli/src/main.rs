use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use vitalmon::agent::{Agent, Backend, Query, Tier, WindowLocator};
use vitalmon::config::{Overrides, RunConfig};
use vitalmon::error::{Error, Result};
use vitalmon::eval::{
    check_episodes_file, check_windows_file, eval_proactive, eval_rhythm, generate_synthetic_qa, score_qa,
    split_dev_test, synth_patient, EpisodeAnnotation, Prediction, QAExample, SplitItem, SplitRounding, SynthSpec,
};
use vitalmon::exec::Execution;
use vitalmon::jsonl;
use vitalmon::llm::TextCompletion;
use vitalmon::memory::{AlertRecord, MonitoringState, PatientMemory};
use vitalmon::proactive::{
    replay_patients, AnnotationSpan, GuidelineStore, JudgeBackend, LlmJudge, MockJudge, Monitor,
};
use vitalmon::signal::{read_windows, write_windows, Dataset, SampleWindow};
use vitalmon::tools::{builtin_registry, BuiltinSet, ToolCategory, ToolContext, WindowStore};

#[derive(Parser)]
#[command(
    name = "vitalmon",
    version,
    about = "Streaming physiological monitoring and QA agent"
)]
struct Cli {
    /// Force offline backends (deterministic planner, responder and judge).
    #[arg(long, global = true)]
    offline: bool,
    /// Export and consume leakage-filtered states only.
    #[arg(long, global = true)]
    fair: bool,
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    judge: Option<OnOff>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum OnOff {
    On,
    Off,
}

#[derive(Subcommand)]
enum Command {
    /// Render scripted patients into window JSONL and episode annotations.
    Synth {
        /// One synthesis spec or a JSON array of them.
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Replay windows through the proactive engine.
    Monitor {
        windows: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Reference episodes used to fill the hidden state block.
        #[arg(long)]
        episodes: Option<PathBuf>,
    },
    /// Template QA from the states written by `monitor`.
    GenQa {
        monitor_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        per_cell: Option<usize>,
    },
    /// Answer one question or a QA file.
    Qa(QaArgs),
    /// Score predictions or alerts.
    Eval {
        #[command(subcommand)]
        what: EvalCommand,
    },
    /// Print the tool registry schema.
    Tools {
        #[arg(long)]
        category: Option<String>,
        /// Only agent-facing tools.
        #[arg(long)]
        agent: bool,
    },
    /// Deterministic dev/test split of a QA file.
    Split {
        qa: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        dev_frac: Option<f64>,
        #[arg(long, value_enum)]
        rounding: Option<Rounding>,
    },
    /// Schema check of window and episode JSONL.
    Check {
        windows: PathBuf,
        #[arg(long)]
        episodes: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Rounding {
    Floor,
    Ceil,
}

#[derive(Args)]
struct QaArgs {
    windows: PathBuf,
    #[arg(long, conflicts_with = "qa_file")]
    question: Option<String>,
    #[arg(long)]
    qa_file: Option<PathBuf>,
    #[arg(long, requires = "question")]
    patient: Option<String>,
    #[arg(long, requires = "patient")]
    start: Option<f64>,
    #[arg(long, requires = "patient")]
    end: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum EvalCommand {
    Qa {
        #[arg(long)]
        qa: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    Proactive {
        #[arg(long)]
        monitor_dir: PathBuf,
        #[arg(long)]
        episodes: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let msg = e.render().to_string();
            return fail("usage", msg.trim());
        }
    };
    match run(cli) {
        Ok(report) => {
            let text = serde_json::to_string_pretty(&report).unwrap_or_default();
            // A closed pipe downstream is not an error of ours.
            let _ = writeln!(std::io::stdout(), "{text}");
            ExitCode::SUCCESS
        }
        Err(e) => fail(e.kind(), &e.to_string()),
    }
}

fn fail(kind: &str, message: &str) -> ExitCode {
    eprintln!("{}", json!({ "error": { "kind": kind, "message": message } }));
    ExitCode::from(1)
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.apply(&Overrides {
        offline: cli.offline,
        fair: cli.fair,
        seed: cli.seed,
        judge: cli.judge.map(|j| matches!(j, OnOff::On)),
    });
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<Value> {
    let cfg = load_config(&cli)?;
    match cli.command {
        Command::Synth { spec, out } => cmd_synth(&spec, &out),
        Command::Monitor { windows, out, episodes } => cmd_monitor(&cfg, &windows, &out, episodes.as_deref()),
        Command::GenQa {
            monitor_dir,
            out,
            per_cell,
        } => cmd_gen_qa(&cfg, &monitor_dir, &out, per_cell),
        Command::Qa(args) => cmd_qa(&cfg, &args),
        Command::Eval { what } => match what {
            EvalCommand::Qa { qa, predictions, out } => {
                let examples: Vec<QAExample> = jsonl::read(&qa)?;
                for e in &examples {
                    e.validate()?;
                }
                let preds: Vec<Prediction> = jsonl::read(&predictions)?;
                let report = serde_json::to_value(score_qa(&examples, &preds, &cfg.score)?)?;
                write_report(out.as_deref(), report)
            }
            EvalCommand::Proactive {
                monitor_dir,
                episodes,
                out,
            } => {
                let report = cmd_eval_proactive(&cfg, &monitor_dir, &episodes)?;
                write_report(out.as_deref(), report)
            }
        },
        Command::Tools { category, agent } => {
            let reg = builtin_registry(if agent { BuiltinSet::Agent } else { BuiltinSet::All });
            let schema = reg.schema_export();
            match category {
                None => Ok(schema),
                Some(c) => {
                    let cat = ToolCategory::parse(&c).ok_or_else(|| Error::Config(format!("unknown category {c}")))?;
                    let tools: Vec<Value> = schema["tools"]
                        .as_array()
                        .into_iter()
                        .flatten()
                        .filter(|t| t["category"] == cat.as_str())
                        .cloned()
                        .collect();
                    Ok(json!({ "tools": tools }))
                }
            }
        }
        Command::Split {
            qa,
            out,
            dev_frac,
            rounding,
        } => {
            let mut split = cfg.split.clone();
            if let Some(f) = dev_frac {
                split.dev_frac = f;
            }
            if let Some(r) = rounding {
                split.rounding = match r {
                    Rounding::Floor => SplitRounding::Floor,
                    Rounding::Ceil => SplitRounding::Ceil,
                };
            }
            let examples: Vec<QAExample> = jsonl::read(&qa)?;
            let items: Vec<SplitItem> = examples.iter().map(SplitItem::from).collect();
            let s = split_dev_test(&items, &split)?;
            create_dir(&out)?;
            write_lines(&out.join("dev_ids.txt"), &s.dev)?;
            write_lines(&out.join("test_ids.txt"), &s.test)?;
            Ok(json!({ "dev": s.dev.len(), "test": s.test.len(), "strata": s.strata, "config": s.config }))
        }
        Command::Check { windows, episodes } => {
            let w = check_windows_file(&windows)?;
            let e = episodes.as_deref().map(check_episodes_file).transpose()?;
            let clean = w.is_clean() && e.as_ref().is_none_or(|r| r.is_clean());
            let report = json!({ "windows": w, "episodes": e, "clean": clean });
            if clean {
                Ok(report)
            } else {
                Err(Error::DataIntegrity(format!("schema warnings: {report}")))
            }
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_lines(path: &Path, lines: &[String]) -> Result<()> {
    let mut text = lines.join("\n");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json(path: &Path, v: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(v)? + "\n";
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_report(out: Option<&Path>, report: Value) -> Result<Value> {
    if let Some(p) = out {
        write_json(p, &report)?;
    }
    Ok(report)
}

fn cmd_synth(spec: &Path, out: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(spec).map_err(|e| Error::io(spec, e))?;
    let value: Value = serde_json::from_str(&text)?;
    let specs: Vec<SynthSpec> = match value {
        Value::Array(_) => serde_json::from_value(value)?,
        v => vec![serde_json::from_value(v)?],
    };
    let (mut windows, mut episodes) = (Vec::new(), Vec::new());
    for s in &specs {
        let p = synth_patient(s)?;
        windows.extend(p.windows);
        episodes.extend(p.episodes);
    }
    create_dir(out)?;
    write_windows(&out.join("windows.jsonl"), &windows)?;
    jsonl::write(&out.join("episodes.jsonl"), &episodes)?;
    Ok(json!({ "patients": specs.len(), "windows": windows.len(), "episodes": episodes.len() }))
}

/// Groups windows per patient, ordered by window index.
fn by_patient(windows: Vec<SampleWindow>) -> BTreeMap<String, Vec<SampleWindow>> {
    let mut m: BTreeMap<String, Vec<SampleWindow>> = BTreeMap::new();
    for w in windows {
        m.entry(w.patient_id.clone()).or_default().push(w);
    }
    for v in m.values_mut() {
        v.sort_by_key(|w| w.window_index);
    }
    m
}

fn completion(cfg: &RunConfig) -> Result<Option<Arc<dyn TextCompletion>>> {
    if cfg.is_offline() {
        return Ok(None);
    }
    #[cfg(feature = "http")]
    {
        let endpoint = vitalmon::llm::EndpointConfig::from_env()?;
        Ok(Some(Arc::new(vitalmon::llm::HttpCompletion::new(endpoint)?)))
    }
    #[cfg(not(feature = "http"))]
    Err(Error::Config("endpoint backend needs the http feature".into()))
}

fn guidelines(cfg: &RunConfig) -> Result<Arc<GuidelineStore>> {
    Ok(Arc::new(match &cfg.paths.guidelines {
        Some(p) => GuidelineStore::load(p)?,
        None => GuidelineStore::bundled(),
    }))
}

fn replay_all(cfg: &RunConfig, windows: Vec<SampleWindow>, episodes: &[EpisodeAnnotation]) -> Result<Vec<Monitor>> {
    let judge: Option<(Arc<dyn JudgeBackend>, Arc<GuidelineStore>)> = if cfg.judge {
        let backend: Arc<dyn JudgeBackend> = match completion(cfg)? {
            Some(c) => Arc::new(LlmJudge::new(c)),
            None => Arc::new(MockJudge {
                rules: cfg.monitor.rules.clone(),
                ..MockJudge::default()
            }),
        };
        Some((backend, guidelines(cfg)?))
    } else {
        None
    };
    let patients: Vec<(Vec<SampleWindow>, Vec<AnnotationSpan>)> = by_patient(windows)
        .into_iter()
        .map(|(pid, ws)| {
            let spans = episodes
                .iter()
                .filter(|e| e.patient_id == pid)
                .map(|e| AnnotationSpan {
                    start_s: e.onset_s,
                    end_s: e.offset_s,
                    label: e.label.clone(),
                })
                .collect();
            (ws, spans)
        })
        .collect();
    replay_patients(&patients, &cfg.monitor, judge, Execution::Parallel)
        .into_iter()
        .collect()
}

fn cmd_monitor(cfg: &RunConfig, windows: &Path, out: &Path, episodes: Option<&Path>) -> Result<Value> {
    let windows = read_windows(windows)?;
    let episodes: Vec<EpisodeAnnotation> = match episodes {
        Some(p) => jsonl::read(p)?,
        None => Vec::new(),
    };
    let monitors = replay_all(cfg, windows, &episodes)?;
    let sidecar = json!({
        "monitor": cfg.monitor,
        "judge": cfg.judge,
        "fair": cfg.fair,
        "backend": cfg.backend,
        "seed": cfg.seed,
    });
    let mut summary = Vec::new();
    for m in &monitors {
        let Some(first) = m.memory().states().first() else {
            continue;
        };
        let dir = out.join(&first.patient_id);
        m.memory().persist_view(&dir, cfg.fair)?;
        write_json(&dir.join("monitor_config.json"), &sidecar)?;
        summary.push(json!({
            "patient_id": first.patient_id,
            "states": m.memory().states().len(),
            "alerts": m.memory().alerts().len(),
            "diagnostics": m.diagnostics().len(),
        }));
    }
    Ok(json!({ "patients": summary, "fair": cfg.fair, "judge": cfg.judge }))
}

/// Patient directories written by `monitor`, in name order.
fn monitor_dirs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("states.jsonl").is_file())
        .collect();
    out.sort();
    if out.is_empty() {
        return Err(Error::DataIntegrity(format!(
            "no monitor output under {}",
            dir.display()
        )));
    }
    Ok(out)
}

fn cmd_gen_qa(cfg: &RunConfig, monitor_dir: &Path, out: &Path, per_cell: Option<usize>) -> Result<Value> {
    let mut states: Vec<MonitoringState> = Vec::new();
    for d in monitor_dirs(monitor_dir)? {
        states.extend(jsonl::read::<MonitoringState>(&d.join("states.jsonl"))?);
    }
    let mut gen = cfg.qa_gen.clone();
    if let Some(n) = per_cell {
        gen.n_per_cell = n;
    }
    let qa = generate_synthetic_qa(&states, &gen);
    jsonl::write(out, &qa.examples)?;
    Ok(json!({ "examples": qa.examples.len(), "cells": qa.report }))
}

fn cmd_qa(cfg: &RunConfig, args: &QaArgs) -> Result<Value> {
    let windows = read_windows(&args.windows)?;
    let monitors = replay_all(
        &RunConfig {
            judge: false,
            ..cfg.clone()
        },
        windows.clone(),
        &[],
    )?;
    let memories: BTreeMap<String, PatientMemory> = monitors
        .into_iter()
        .filter_map(|m| {
            let pid = m.memory().states().first()?.patient_id.clone();
            Some((pid, m.into_memory()))
        })
        .collect();
    let ctx = ToolContext::new(WindowStore::from_windows(windows), memories, cfg.monitor.clone());
    let (ids, queries): (Vec<String>, Vec<Query>) = match (&args.question, &args.qa_file) {
        (Some(q), None) => {
            let mut query = Query::new(q.clone());
            if let Some(pid) = &args.patient {
                let ws = ctx.windows.windows(pid);
                let dataset = ws.first().map_or(Dataset::Synthetic, |w| w.dataset);
                query.locator = Some(WindowLocator {
                    dataset,
                    patient_id: pid.clone(),
                    window_start_s: args.start.or(ws.first().map(|w| w.start_s)).unwrap_or(0.0),
                    window_end_s: args.end.or(ws.last().map(|w| w.end_s())).unwrap_or(0.0),
                });
                query.tier = Some(if ws.len() > 1 && args.start.is_none() {
                    Tier::B
                } else {
                    Tier::A
                });
            }
            (vec!["q0".into()], vec![query])
        }
        (None, Some(f)) => {
            let examples: Vec<QAExample> = jsonl::read(f)?;
            (
                examples.iter().map(|e| e.id.clone()).collect(),
                examples.iter().map(QAExample::to_query).collect(),
            )
        }
        _ => return Err(Error::Config("give either --question or --qa-file".into())),
    };
    let reg = builtin_registry(BuiltinSet::All);
    let mut agent = Agent::deterministic(&reg, &ctx);
    agent.config = cfg.agent.clone();
    if let Some(c) = completion(cfg)? {
        agent.planner = Backend::Llm(c.clone());
        agent.responder = Backend::Llm(c);
    }
    let runs = agent.answer_all(&queries, Execution::Parallel);
    let preds: Vec<Prediction> = ids
        .iter()
        .zip(&runs)
        .map(|(id, r)| Prediction {
            id: id.clone(),
            answer: r.answer.clone(),
        })
        .collect();
    jsonl::write(&args.out, &preds)?;
    Ok(json!({
        "predictions": preds.len(),
        "replans": runs.iter().map(|r| r.replans).sum::<usize>(),
        "flagged": runs.iter().filter(|r| r.flagged).count(),
        "answers": if preds.len() == 1 { json!(preds[0].answer) } else { Value::Null },
    }))
}

fn cmd_eval_proactive(cfg: &RunConfig, monitor_dir: &Path, episodes: &Path) -> Result<Value> {
    let episodes: Vec<EpisodeAnnotation> = jsonl::read(episodes)?;
    let (mut alerts, mut states) = (Vec::new(), Vec::new());
    for d in monitor_dirs(monitor_dir)? {
        alerts.extend(jsonl::read::<AlertRecord>(&d.join("alerts.jsonl"))?);
        states.extend(jsonl::read::<MonitoringState>(&d.join("states.jsonl"))?);
    }
    let hours = states.iter().map(|s| s.window_duration_s).sum::<f64>() / 3600.0;
    let report = eval_proactive(&alerts, &episodes, hours, cfg.episode_grace_s)?;
    // Window reference: AF iff the window midpoint lies inside an AF episode.
    let labels: Vec<&str> = states
        .iter()
        .map(|s| {
            let mid = 0.5 * (s.window_start_s + s.window_end_s);
            let af = episodes
                .iter()
                .any(|e| e.patient_id == s.patient_id && e.label == "AF" && mid >= e.onset_s && mid < e.offset_s);
            if af {
                "AF"
            } else {
                "N"
            }
        })
        .collect();
    let predicted: Vec<&str> = states
        .iter()
        .map(|s| s.screened_rhythm().unwrap_or("unknown"))
        .collect();
    let rhythm = eval_rhythm(&predicted, &labels)?;
    Ok(
        json!({ "proactive": report, "rhythm": rhythm, "config": { "grace_s": cfg.episode_grace_s, "rules": cfg.monitor.rules } }),
    )
}
