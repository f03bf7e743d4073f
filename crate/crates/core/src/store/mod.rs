//! Append-only event log, run manifest, agent snapshots and replay.
//!
//! A run directory looks like:
//!
//! ```text
//! run/
//!   manifest.json
//!   events.jsonl        one SimEvent per line
//!   personas.json
//!   narratives.json     elicitation trace
//!   snapshots/<stage>/<agent_id>.json
//!   metrics/report.json, metrics/*.csv
//! ```

mod event;
mod log;
mod manifest;
mod replay;

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::agent::AgentState;

pub use event::{EndReason, EventBody, InviteOutcome, Phase, SimEvent, SCHEMA_VERSION};
pub use log::{load_events, load_run, EventLog};
pub use manifest::{ManifestAgent, RunManifest, StageOutcome, StageStatus, REDACTED};
pub use replay::replay;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const EVENTS_FILE: &str = "events.jsonl";
pub const PERSONAS_FILE: &str = "personas.json";
pub const NARRATIVES_FILE: &str = "narratives.json";
pub const SNAPSHOTS_DIR: &str = "snapshots";
pub const METRICS_DIR: &str = "metrics";
pub const STAGE1_SNAPSHOT: &str = "after_stage1";
pub const FINAL_SNAPSHOT: &str = "final";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("event log is closed")]
    RunClosed,
    #[error("event {kind} is not legal in phase {phase:?}")]
    IllegalPhase { kind: &'static str, phase: Phase },
    #[error("schema version {found} does not match supported version {expected}")]
    SchemaVersionMismatch { found: u32, expected: u32 },
    #[error("corrupt event record at seq {seq} (line {line}): {message}")]
    CorruptLine { seq: u64, line: usize, message: String },
    #[error("event seq {found} does not follow {previous}")]
    OutOfOrder { previous: u64, found: u64 },
    #[error("run directory {0} has no manifest")]
    MissingManifest(PathBuf),
    #[error("run directory {0} has no event log")]
    MissingEvents(PathBuf),
    #[error("malformed {path}: {message}")]
    Malformed { path: PathBuf, message: String },
    #[error("replay diverged from the recorded log at seq {0}")]
    DivergenceAt(u64),
    #[error("replayed snapshot for {agent} in {stage} differs from the stored one")]
    SnapshotMismatch { stage: String, agent: String },
    #[error("replay failed: {0}")]
    Replay(String),
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_path_buf(), source }
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), StoreError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| StoreError::Malformed { path: path.to_path_buf(), message: e.to_string() })?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, StoreError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| StoreError::Malformed { path: path.to_path_buf(), message: e.to_string() })
}

/// Writes one pretty-printed document per agent under `snapshots/<stage>/`.
pub fn write_snapshots(run_dir: &Path, stage: &str, states: &[AgentState]) -> Result<(), StoreError> {
    let dir = run_dir.join(SNAPSHOTS_DIR).join(stage);
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    for s in states {
        write_json(&dir.join(format!("{}.json", s.agent_id)), s)?;
    }
    Ok(())
}

/// Snapshot documents for a stage as `(agent_id, raw text)`, sorted by id.
pub fn read_snapshot_texts(run_dir: &Path, stage: &str) -> Result<Vec<(String, String)>, StoreError> {
    let dir = run_dir.join(SNAPSHOTS_DIR).join(stage);
    let mut out = Vec::new();
    for entry in fs::read_dir(&dir).map_err(io_err(&dir))? {
        let path = entry.map_err(io_err(&dir))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("json") {
            continue;
        }
        let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        out.push((id, fs::read_to_string(&path).map_err(io_err(&path))?));
    }
    out.sort();
    Ok(out)
}

pub fn snapshot_text(state: &AgentState) -> String {
    let mut s = serde_json::to_string_pretty(state).expect("agent state serializes");
    s.push('\n');
    s
}
