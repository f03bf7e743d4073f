use std::fs;
use std::path::{Path, PathBuf};

use super::{simulate, Checkpoint, EngineError, RunConfig, Stage1Stats};
use crate::analysis::{analyze, write_metrics, IdeologyMode, MetricReport};
use crate::llm::LlmBackend;
use crate::persona::{assign_values, bundled_corpus, load_corpus_file, Dilemma};
use crate::store::{
    self, EventBody, EventLog, ManifestAgent, RunManifest, StoreError, EVENTS_FILE, FINAL_SNAPSHOT, MANIFEST_FILE,
    METRICS_DIR, NARRATIVES_FILE, PERSONAS_FILE, STAGE1_SNAPSHOT,
};

pub const STAGES: [&str; 4] = ["persona", "stage1", "stage2", "analysis"];

/// The dilemma corpus a config points at, or the bundled one.
pub fn load_corpus_for(cfg: &RunConfig) -> Result<Vec<Dilemma>, EngineError> {
    match &cfg.corpus {
        Some(path) => Ok(load_corpus_file(path)?),
        None => Ok(bundled_corpus()),
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub manifest: RunManifest,
    pub report: MetricReport,
    pub stats: Stage1Stats,
    pub proposals: usize,
}

fn store_err(e: StoreError) -> EngineError {
    EngineError::Store(e)
}

/// Runs the full protocol into a fresh directory `out_dir` and analyzes it.
///
/// The manifest is written first and rewritten after every stage, so a
/// failed run keeps its partial artifacts and names the stage that failed.
pub fn run_experiment(cfg: &RunConfig, out_dir: &Path, backend: &dyn LlmBackend) -> Result<RunOutcome, EngineError> {
    cfg.validate()?;
    let key_present = matches!(cfg.backend.validate(), Ok(Some(_)));
    let corpus = load_corpus_for(cfg)?;
    // An infeasible population is a config error; nothing is written for it.
    assign_values(&cfg.population)?;
    if let Some(parent) = out_dir.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| EngineError::Io(format!("{}: {e}", parent.display())))?;
    }
    fs::create_dir(out_dir).map_err(|e| EngineError::Io(format!("{}: {e}", out_dir.display())))?;

    let manifest_path = out_dir.join(MANIFEST_FILE);
    let mut manifest = RunManifest::new(cfg.clone(), key_present);
    store::write_json(&manifest_path, &manifest)?;
    let mut log = EventLog::create(&out_dir.join(EVENTS_FILE))?;

    let mut done = 0;
    let result = simulate(cfg, &corpus, backend, &mut log, &mut |cp| {
        match cp {
            Checkpoint::Population(pop) => {
                store::write_json(&out_dir.join(PERSONAS_FILE), &pop.profiles)?;
                store::write_json(&out_dir.join(NARRATIVES_FILE), &pop.narratives)?;
                manifest.population = pop.profiles.iter().map(ManifestAgent::from).collect();
                manifest.record_stage(STAGES[0], Ok(()));
            }
            Checkpoint::Stage1(states) => {
                store::write_snapshots(out_dir, STAGE1_SNAPSHOT, states)?;
                manifest.record_stage(STAGES[1], Ok(()));
            }
            Checkpoint::Final(states, _) => {
                store::write_snapshots(out_dir, FINAL_SNAPSHOT, states)?;
                if cfg.stage2.enabled {
                    manifest.record_stage(STAGES[2], Ok(()));
                }
            }
        }
        done += 1;
        store::write_json(&manifest_path, &manifest).map_err(store_err)
    });
    let warnings = |log: &EventLog| log.events().iter().filter(|e| matches!(e.body, EventBody::Warning { .. })).count();
    let outcome = match result {
        Ok(o) => o,
        Err(e) => {
            manifest.record_stage(STAGES[done.min(STAGES.len() - 1)], Err(e.to_string()));
            manifest.warnings = warnings(&log);
            manifest.finish();
            let _ = log.finalize();
            let _ = store::write_json(&manifest_path, &manifest);
            return Err(e);
        }
    };
    log.finalize()?;
    manifest.warnings = warnings(&log);

    let judge = (cfg.analysis.ideology_mode == IdeologyMode::Backend).then_some(backend);
    let analyzed = analyze(log.events(), &cfg.analysis, cfg.stage1.max_turns, judge)
        .and_then(|r| write_metrics(&out_dir.join(METRICS_DIR), &r, log.events()).map(|_| r));
    manifest.record_stage(STAGES[3], analyzed.as_ref().map(|_| ()).map_err(|e| e.to_string()));
    manifest.finish();
    store::write_json(&manifest_path, &manifest)?;
    let report = analyzed?;
    Ok(RunOutcome {
        dir: out_dir.to_path_buf(),
        manifest,
        report,
        stats: outcome.stage1,
        proposals: outcome.proposals.len(),
    })
}
