use serde::{Deserialize, Serialize};

use super::SCHEMA_VERSION;
use crate::engine::RunConfig;
use crate::persona::{AgentId, PersonaProfile, ValueComplexity};
use crate::values::ValueType;

/// Stands in for the API key wherever a run records its configuration.
pub const REDACTED: &str = "[REDACTED]";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StageStatus {
    Completed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageOutcome {
    pub stage: String,
    pub status: StageStatus,
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestAgent {
    pub agent_id: AgentId,
    pub display_name: String,
    pub values: Vec<ValueType>,
    pub complexity: ValueComplexity,
}

impl From<&PersonaProfile> for ManifestAgent {
    fn from(p: &PersonaProfile) -> Self {
        ManifestAgent {
            agent_id: p.agent_id.clone(),
            display_name: p.display_name.clone(),
            values: p.values.clone(),
            complexity: p.complexity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub code_version: String,
    pub config: RunConfig,
    /// `REDACTED` when a key was resolved from the environment, never the key.
    pub api_key: Option<String>,
    pub started_at: String,
    pub finished_at: Option<String>,
    pub population: Vec<ManifestAgent>,
    pub stages: Vec<StageOutcome>,
    pub warnings: usize,
}

impl RunManifest {
    pub fn new(config: RunConfig, key_present: bool) -> Self {
        RunManifest {
            schema_version: SCHEMA_VERSION,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            api_key: key_present.then(|| REDACTED.to_string()),
            started_at: chrono::Utc::now().to_rfc3339(),
            finished_at: None,
            population: Vec::new(),
            stages: Vec::new(),
            warnings: 0,
        }
    }

    pub fn record_stage(&mut self, stage: &str, result: Result<(), String>) {
        let (status, detail) = match result {
            Ok(()) => (StageStatus::Completed, None),
            Err(e) => (StageStatus::Failed, Some(e)),
        };
        self.stages.push(StageOutcome { stage: stage.to_string(), status, detail });
    }

    pub fn finish(&mut self) {
        self.finished_at = Some(chrono::Utc::now().to_rfc3339());
    }

    pub fn completed(&self) -> bool {
        !self.stages.is_empty() && self.stages.iter().all(|s| s.status == StageStatus::Completed)
    }
}
