//! Persona elicitation.
//!
//! Each value-primed agent resolves a handful of ethical dilemmas tagged with
//! its target values. The backend writes a first-person narrative for each
//! dilemma, a judge call scores it for logic and believability, and the kept
//! narratives are reflected into a first-person value statement that becomes
//! the persona's narrative.

mod corpus;
mod population;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{
    complete_structured, ChatMessage, ChatRequest, IntegerInRange, LlmError, Recorder, RequestTag,
    SamplingParams,
};
use crate::prompts;
use crate::values::{HigherOrderCategory, ValueType};

pub use corpus::{bundled_corpus, load_corpus, load_corpus_file, BUNDLED_CORPUS};
pub use population::{assign_values, build_population, Population};

#[derive(Debug, Error)]
pub enum PersonaError {
    #[error("duplicate dilemma id {0:?}")]
    DuplicateId(String),
    #[error("dilemma {dilemma:?} has unknown value tag {name:?}")]
    UnknownValueName { dilemma: String, name: String },
    #[error("no dilemma covers value {0}")]
    UncoveredValue(ValueType),
    #[error("corpus line {line}: {message}")]
    CorpusParse { line: usize, message: String },
    #[error("reading corpus: {0}")]
    Io(#[from] std::io::Error),
    #[error("target values {targets:?} are not all tagged on dilemma {dilemma:?}")]
    TargetsNotTagged { dilemma: String, targets: Vec<ValueType> },
    #[error("backend returned an empty completion")]
    EmptyCompletion,
    #[error("judge reply contained no score in range after one retry")]
    UnparsableScore,
    #[error("reflection needs at least one kept narrative")]
    NoKeptNarratives,
    #[error("infeasible population spec: {0}")]
    InfeasibleSpec(String),
    #[error("could not elicit a persona for {0}: every candidate narrative was discarded")]
    ElicitationFailed(AgentId),
    #[error(transparent)]
    Backend(#[from] LlmError),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub String);

impl AgentId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    /// `agent_01`, `agent_02`, ... padded so ids sort in numeric order.
    pub fn numbered(i: usize, population: usize) -> Self {
        let width = population.to_string().len().max(2);
        Self(format!("agent_{:0width$}", i + 1))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dilemma {
    pub id: String,
    pub title: String,
    pub scenario: String,
    pub tagged_values: BTreeSet<ValueType>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Narrative {
    pub id: String,
    pub dilemma_id: String,
    pub target_values: Vec<ValueType>,
    pub text: String,
    pub judge_score: Option<u8>,
    pub kept: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ValueComplexity {
    Single,
    Multi,
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersonaProfile {
    pub agent_id: AgentId,
    pub display_name: String,
    pub values: Vec<ValueType>,
    pub narrative: String,
    pub elicitation_trace: Vec<String>,
    pub complexity: ValueComplexity,
}

impl PersonaProfile {
    /// Category of the first value; `None` for the no-value control.
    pub fn primary_category(&self) -> Option<HigherOrderCategory> {
        self.values.first().map(|v| v.category())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Composition {
    Homogeneous(HigherOrderCategory),
    DiverseBalanced,
    NoValue,
    /// Explicit per-agent value lists, validated against the complexity.
    Custom(Vec<Vec<ValueType>>),
}

impl fmt::Display for Composition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Composition::Homogeneous(c) => write!(f, "Homogeneous({c})"),
            Composition::DiverseBalanced => f.write_str("DiverseBalanced"),
            Composition::NoValue => f.write_str("NoValue"),
            Composition::Custom(_) => f.write_str("Custom"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PopulationSpec {
    pub group_size: usize,
    pub composition: Composition,
    pub complexity: ValueComplexity,
    #[serde(default)]
    pub seed: u64,
}

impl Default for PopulationSpec {
    fn default() -> Self {
        Self {
            group_size: 4,
            composition: Composition::NoValue,
            complexity: ValueComplexity::None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PersonaConfig {
    /// Judge scores at or above this are kept (0..=10 scale).
    pub keep_threshold: u8,
    pub narratives_per_agent: usize,
    /// Regenerations per dilemma after a discard before substituting another.
    pub max_regenerations: u32,
    pub sampling: SamplingParams,
}

impl Default for PersonaConfig {
    fn default() -> Self {
        Self {
            keep_threshold: 7,
            narratives_per_agent: 3,
            max_regenerations: 3,
            sampling: SamplingParams::default(),
        }
    }
}

const ELICITATION_SYSTEM: &str =
    "You are helping create a character for a social simulation. Write plainly and honestly.";

/// Asks the backend for a first-person narrative resolving `d` under `targets`.
pub fn generate_narrative(
    rec: &mut Recorder<'_>,
    d: &Dilemma,
    targets: &[ValueType],
    narrative_id: String,
    attempt: u32,
    sampling: &SamplingParams,
) -> Result<Narrative, PersonaError> {
    if targets.is_empty() || !targets.iter().all(|t| d.tagged_values.contains(t)) {
        return Err(PersonaError::TargetsNotTagged { dilemma: d.id.clone(), targets: targets.to_vec() });
    }
    let req = ChatRequest::new(
        RequestTag::NarrativeGen,
        vec![
            ChatMessage::system(ELICITATION_SYSTEM),
            ChatMessage::user(prompts::narrative_request(d, targets, attempt)),
        ],
        sampling,
    );
    let text = rec.complete(&req)?.text.trim().to_string();
    if text.is_empty() {
        return Err(PersonaError::EmptyCompletion);
    }
    Ok(Narrative {
        id: narrative_id,
        dilemma_id: d.id.clone(),
        target_values: targets.to_vec(),
        text,
        judge_score: None,
        kept: false,
    })
}

/// Scores a narrative with the judge and marks it kept when the score
/// reaches `keep_threshold`.
pub fn judge_narrative(
    rec: &mut Recorder<'_>,
    mut n: Narrative,
    keep_threshold: u8,
    sampling: &SamplingParams,
) -> Result<Narrative, PersonaError> {
    if n.text.trim().is_empty() {
        return Err(PersonaError::EmptyCompletion);
    }
    let req = ChatRequest::new(
        RequestTag::Judge,
        vec![
            ChatMessage::system("You are a strict literary judge."),
            ChatMessage::user(prompts::judge_request(&n.text)),
        ],
        sampling,
    );
    let score = match complete_structured(rec, &req, &IntegerInRange { min: 0, max: 10 }) {
        Ok(s) => s as u8,
        Err(LlmError::ParseFailedTwice { .. }) => return Err(PersonaError::UnparsableScore),
        Err(e) => return Err(e.into()),
    };
    n.judge_score = Some(score);
    n.kept = score >= keep_threshold;
    Ok(n)
}

/// Reflects kept narratives into a first-person value statement.
pub fn reflect_values(
    rec: &mut Recorder<'_>,
    display_name: &str,
    kept: &[Narrative],
    sampling: &SamplingParams,
) -> Result<String, PersonaError> {
    if kept.is_empty() || kept.iter().any(|n| !n.kept) {
        return Err(PersonaError::NoKeptNarratives);
    }
    let mut targets: Vec<ValueType> = Vec::new();
    for v in kept.iter().flat_map(|n| n.target_values.iter()) {
        if !targets.contains(v) {
            targets.push(*v);
        }
    }
    let texts: Vec<&str> = kept.iter().map(|n| n.text.as_str()).collect();
    let req = ChatRequest::new(
        RequestTag::Reflection,
        vec![
            ChatMessage::system(format!("You are {display_name}. Speak in the first person.")),
            ChatMessage::user(prompts::reflection_request(&targets, &texts)),
        ],
        sampling,
    );
    let text = rec.complete(&req)?.text.trim().to_string();
    if text.is_empty() {
        return Err(PersonaError::EmptyCompletion);
    }
    Ok(text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::FnBackend;

    fn dilemma(tags: &[ValueType]) -> Dilemma {
        Dilemma {
            id: "d1".into(),
            title: "The found wallet".into(),
            scenario: "You find a wallet.".into(),
            tagged_values: tags.iter().copied().collect(),
        }
    }

    fn scripted(reply: &'static str) -> FnBackend<impl Fn(&ChatRequest) -> Result<String, LlmError>> {
        FnBackend(move |_: &ChatRequest| Ok(reply.to_string()))
    }

    #[test]
    fn narrative_passes_mock_text_through() {
        let b = scripted("I returned the wallet.");
        let mut rec = Recorder::new(&b);
        let n = generate_narrative(
            &mut rec,
            &dilemma(&[ValueType::Benevolence]),
            &[ValueType::Benevolence],
            "n1".into(),
            0,
            &SamplingParams::default(),
        )
        .unwrap();
        assert_eq!(n.text, "I returned the wallet.");
        assert!(!n.kept);
        assert_eq!(n.judge_score, None);
    }

    #[test]
    fn narrative_targets_must_be_tagged() {
        let b = scripted("x");
        let mut rec = Recorder::new(&b);
        let err = generate_narrative(
            &mut rec,
            &dilemma(&[ValueType::Benevolence]),
            &[ValueType::Power],
            "n1".into(),
            0,
            &SamplingParams::default(),
        )
        .unwrap_err();
        assert!(matches!(err, PersonaError::TargetsNotTagged { .. }));
    }

    #[test]
    fn blank_narrative_is_an_error() {
        let b = scripted("   ");
        let mut rec = Recorder::new(&b);
        let err = generate_narrative(
            &mut rec,
            &dilemma(&[ValueType::Benevolence]),
            &[ValueType::Benevolence],
            "n1".into(),
            0,
            &SamplingParams::default(),
        )
        .unwrap_err();
        assert!(matches!(err, PersonaError::EmptyCompletion));
    }

    fn narrative() -> Narrative {
        Narrative {
            id: "n1".into(),
            dilemma_id: "d1".into(),
            target_values: vec![ValueType::Benevolence],
            text: "story".into(),
            judge_score: None,
            kept: false,
        }
    }

    #[test]
    fn judge_keeps_at_threshold() {
        let b = scripted("SCORE: 9");
        let mut rec = Recorder::new(&b);
        let n = judge_narrative(&mut rec, narrative(), 7, &SamplingParams::default()).unwrap();
        assert_eq!(n.judge_score, Some(9));
        assert!(n.kept);

        let b = scripted("SCORE: 3");
        let mut rec = Recorder::new(&b);
        let n = judge_narrative(&mut rec, narrative(), 7, &SamplingParams::default()).unwrap();
        assert!(!n.kept);
    }

    #[test]
    fn judge_without_number_twice_is_unparsable() {
        let b = scripted("great story!");
        let mut rec = Recorder::new(&b);
        let err = judge_narrative(&mut rec, narrative(), 7, &SamplingParams::default()).unwrap_err();
        assert!(matches!(err, PersonaError::UnparsableScore));
    }

    #[test]
    fn reflection_requires_kept_narratives() {
        let b = scripted("I value kindness.");
        let mut rec = Recorder::new(&b);
        assert!(matches!(
            reflect_values(&mut rec, "Ann", &[], &SamplingParams::default()),
            Err(PersonaError::NoKeptNarratives)
        ));
        let mut n = narrative();
        n.kept = true;
        n.judge_score = Some(8);
        assert_eq!(reflect_values(&mut rec, "Ann", &[n], &SamplingParams::default()).unwrap(), "I value kindness.");
    }
}
