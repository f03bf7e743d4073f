use std::fs;
use std::path::Path;

use valuesim::analysis::analyze_run;
use valuesim::engine::{run_experiment, RunConfig};
use valuesim::llm::{FnBackend, LlmError, MockBackend};
use valuesim::persona::{Composition, ValueComplexity};
use valuesim::store::{self, load_run, replay, EventBody, StageStatus, EVENTS_FILE, MANIFEST_FILE, METRICS_DIR};
use valuesim::values::HigherOrderCategory;

fn config(n: usize, seed: u64) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.population.group_size = n;
    cfg.population.composition = Composition::DiverseBalanced;
    cfg.population.complexity = ValueComplexity::Single;
    cfg.population.seed = seed;
    cfg.backend.seed = Some(seed);
    cfg
}

fn run(cfg: &RunConfig, dir: &Path) -> valuesim::engine::RunOutcome {
    run_experiment(cfg, dir, &MockBackend::new(cfg.backend.seed.unwrap())).unwrap()
}

#[test]
fn same_seed_gives_identical_logs_and_replays() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(4, 11);
    let a = run(&cfg, &tmp.path().join("a"));
    let b = run(&cfg, &tmp.path().join("b"));
    let ea = fs::read(a.dir.join(EVENTS_FILE)).unwrap();
    assert_eq!(ea, fs::read(b.dir.join(EVENTS_FILE)).unwrap());
    assert!(a.manifest.completed());
    assert_eq!(a.stats.rounds, 25);
    assert_eq!(a.proposals, 8);

    let finals = replay(&a.dir).unwrap();
    assert_eq!(finals.len(), 4);

    let other = run(&config(4, 12), &tmp.path().join("c"));
    assert_ne!(ea, fs::read(other.dir.join(EVENTS_FILE)).unwrap());
}

#[test]
fn artifacts_and_metrics_written() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&config(4, 3), &tmp.path().join("r"));
    for f in ["report.json", "edges.csv", "nodes.csv", "participation.csv", "surveys.csv", "ideology.csv", "drift.csv", "value_ideology.csv"] {
        assert!(out.dir.join(METRICS_DIR).join(f).is_file(), "{f}");
    }
    assert!(out.report.range_violations().is_empty(), "{:?}", out.report.range_violations());
    assert!(out.report.emergence_index.is_some());
    let again = analyze_run(&out.dir, None).unwrap();
    assert_eq!(again, out.report);
}

#[test]
fn refuses_existing_directory() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(run_experiment(&config(4, 1), tmp.path(), &MockBackend::new(1)).is_err());
}

#[test]
fn tampered_log_diverges_on_replay() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&config(4, 5), &tmp.path().join("r"));
    let path = out.dir.join(EVENTS_FILE);
    let (_, events) = load_run(&out.dir).unwrap();
    let target = events.iter().find(|e| matches!(e.body, EventBody::Turn { .. })).unwrap().seq;
    let text = fs::read_to_string(&path).unwrap();
    let lines: Vec<String> = text
        .lines()
        .map(|l| {
            let mut v: serde_json::Value = serde_json::from_str(l).unwrap();
            if v["seq"] == target {
                v["payload"]["text"] = "something else entirely".into();
            }
            serde_json::to_string(&v).unwrap()
        })
        .collect();
    fs::write(&path, lines.join("\n") + "\n").unwrap();
    match replay(&out.dir) {
        Err(store::StoreError::DivergenceAt(seq)) => assert!(seq <= target),
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn failed_backend_keeps_partial_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("r");
    let dead = FnBackend(|_: &valuesim::llm::ChatRequest| Err(LlmError::Transport("connection refused".into())));
    let mut cfg = config(4, 1);
    cfg.population.composition = Composition::Homogeneous(HigherOrderCategory::Conservation);
    assert!(run_experiment(&cfg, &dir, &dead).is_err());
    let manifest: store::RunManifest = store::read_json(&dir.join(MANIFEST_FILE)).unwrap();
    assert!(!manifest.completed());
    assert_eq!(manifest.stages.last().unwrap().status, StageStatus::Failed);
    assert!(dir.join(EVENTS_FILE).is_file());
}
