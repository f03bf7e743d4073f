use std::path::Path;

use super::{
    load_run, read_snapshot_texts, snapshot_text, EventLog, StoreError, FINAL_SNAPSHOT, STAGE1_SNAPSHOT,
};
use crate::agent::AgentState;
use crate::engine::{load_corpus_for, simulate};
use crate::llm::ReplayBackend;

/// Re-executes a recorded run with every backend response served from its
/// event log, checks the regenerated log and snapshots against the stored
/// ones, and returns the final agent states.
pub fn replay(dir: &Path) -> Result<Vec<AgentState>, StoreError> {
    let (manifest, recorded) = load_run(dir)?;
    let corpus = load_corpus_for(&manifest.config).map_err(|e| StoreError::Replay(e.to_string()))?;
    let backend = ReplayBackend::from_events(recorded.iter());
    let mut log = EventLog::in_memory();
    let result = simulate(&manifest.config, &corpus, &backend, &mut log, &mut |_| Ok(()));

    // Divergence is reported before any engine error, since an error during
    // replay is itself a symptom of the logs disagreeing.
    let fresh = log.events();
    for (i, rec) in recorded.iter().enumerate() {
        let same = fresh
            .get(i)
            .map(|f| serde_json::to_string(f).ok() == serde_json::to_string(rec).ok())
            .unwrap_or(false);
        if !same {
            return Err(StoreError::DivergenceAt(rec.seq));
        }
    }
    if fresh.len() > recorded.len() {
        return Err(StoreError::DivergenceAt(fresh[recorded.len()].seq));
    }
    let outcome = result.map_err(|e| StoreError::Replay(e.to_string()))?;

    for (stage, states) in [(STAGE1_SNAPSHOT, &outcome.after_stage1), (FINAL_SNAPSHOT, &outcome.final_states)] {
        let stored = read_snapshot_texts(dir, stage)?;
        if stored.len() != states.len() {
            return Err(StoreError::SnapshotMismatch { stage: stage.into(), agent: "<count>".into() });
        }
        for ((id, text), s) in stored.iter().zip(states.iter()) {
            if id != s.agent_id.as_str() || *text != snapshot_text(s) {
                return Err(StoreError::SnapshotMismatch { stage: stage.into(), agent: s.agent_id.to_string() });
            }
        }
    }
    Ok(outcome.final_states)
}
