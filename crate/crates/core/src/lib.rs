//! Simulation of small communities of language-model agents primed with
//! basic human values: persona elicitation, a staged interaction protocol,
//! an append-only event log with deterministic replay, and the measurements
//! derived from it.

pub mod agent;
pub mod analysis;
pub mod engine;
pub mod llm;
pub mod persona;
pub mod prompts;
pub mod store;
pub mod text;
pub mod values;

pub use persona::AgentId;
