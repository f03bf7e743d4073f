//! The staged protocol: persona elicitation, Stage 1 free interaction with
//! periodic surveys, and Stage 2 collective rule-making.
//!
//! Every phase is a barrier. Units of work inside a phase (agents or
//! conversations) run in parallel, each with its own `Recorder`, and their
//! events are appended in unit order so the log does not depend on thread
//! scheduling.

mod config;
mod run;
mod stage1;
mod stage2;
mod survey;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{AgentError, AgentState};
use crate::analysis::AnalysisError;
use crate::llm::LlmBackend;
use crate::persona::{build_population, AgentId, Dilemma, Narrative, PersonaError, Population};
use crate::store::{EventBody, EventLog, Phase, StoreError};

pub use config::{RunConfig, Stage1Config, Stage2Config};
pub use run::{load_corpus_for, run_experiment, RunOutcome, STAGES};
pub use stage1::{run_stage1, Stage1Stats};
pub use stage2::{comment_assignments, run_stage2};
pub use survey::{administer_survey, principle, score_items, SurveyItem, SurveyResponse, SURVEY_PAIRS};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Persona(#[from] PersonaError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error("survey for {0} produced no usable answers")]
    SurveyEmpty(AgentId),
    #[error("backend unavailable: every request in the {phase:?} phase of round {round} failed (last error: {last})")]
    BackendUnavailable { phase: Phase, round: u32, last: String },
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("io error: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleProposal {
    pub agent_id: AgentId,
    /// 1 or 2.
    pub rule_index: u8,
    pub text: String,
    pub rationale: String,
}

/// Fails the phase when it issued backend calls and none of them succeeded.
pub(crate) fn check_phase_health(events: &[EventBody], phase: Phase, round: u32) -> Result<(), EngineError> {
    let mut calls = 0;
    let mut last_error = None;
    for e in events {
        if let EventBody::BackendCall { error, .. } = e {
            calls += 1;
            match error {
                Some(err) => last_error = Some(err.clone()),
                None => return Ok(()),
            }
        }
    }
    match last_error {
        Some(last) if calls > 0 => Err(EngineError::BackendUnavailable { phase, round, last }),
        _ => Ok(()),
    }
}

/// Points at which a caller may persist intermediate artifacts.
pub enum Checkpoint<'a> {
    Population(&'a Population),
    Stage1(&'a [AgentState]),
    Final(&'a [AgentState], &'a [RuleProposal]),
}

#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub narratives: Vec<Narrative>,
    pub after_stage1: Vec<AgentState>,
    pub final_states: Vec<AgentState>,
    pub proposals: Vec<RuleProposal>,
    pub stage1: Stage1Stats,
}

/// Runs the whole protocol, appending every event to `log`. The log is
/// flushed at each phase barrier but not finalized.
pub fn simulate(
    cfg: &RunConfig,
    corpus: &[Dilemma],
    backend: &dyn LlmBackend,
    log: &mut EventLog,
    checkpoint: &mut dyn FnMut(Checkpoint<'_>) -> Result<(), EngineError>,
) -> Result<SimOutcome, EngineError> {
    cfg.validate()?;
    let population = build_population(&cfg.population, corpus, backend, &cfg.persona)?;
    log.append_all(0, Phase::Persona, population.events.iter().cloned())?;
    log.flush()?;
    checkpoint(Checkpoint::Population(&population))?;

    let mut states: Vec<AgentState> =
        population.profiles.iter().map(|p| AgentState::new(p.clone(), cfg.stage1.memory_slots)).collect();
    let stats = run_stage1(&mut states, cfg, backend, log)?;
    let after_stage1 = states.clone();
    checkpoint(Checkpoint::Stage1(&after_stage1))?;

    let proposals = if cfg.stage2.enabled { run_stage2(&mut states, cfg, backend, log)? } else { Vec::new() };
    checkpoint(Checkpoint::Final(&states, &proposals))?;
    Ok(SimOutcome {
        narratives: population.narratives,
        after_stage1,
        final_states: states,
        proposals,
        stage1: stats,
    })
}
