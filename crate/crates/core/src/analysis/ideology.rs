use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::metrics::entropy_bits;
use crate::engine::RuleProposal;
use crate::llm::{complete_structured, tagged_line, ChatMessage, ChatRequest, LlmBackend, Recorder, RequestTag, SamplingParams, Schema};
use crate::prompts;
use crate::values::ValueType;

/// The shipped rule corpus with reference labels (JSON Lines).
pub const IDEOLOGY_FIXTURES: &str = include_str!("../../data/ideology_fixtures.jsonl");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Ideology {
    Rousseauian,
    Lockean,
    Hobbesian,
    Unclassified,
}

impl Ideology {
    pub const ALL: [Ideology; 4] = [Ideology::Rousseauian, Ideology::Lockean, Ideology::Hobbesian, Ideology::Unclassified];
    pub const CLASSIFIED: [Ideology; 3] = [Ideology::Rousseauian, Ideology::Lockean, Ideology::Hobbesian];
}

impl fmt::Display for Ideology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for Ideology {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim().trim_matches(|c: char| !c.is_alphabetic()).to_ascii_lowercase();
        Ideology::ALL
            .into_iter()
            .find(|i| i.to_string().to_ascii_lowercase() == t)
            .ok_or_else(|| format!("unknown ideology {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum IdeologyMode {
    /// Deterministic keyword scorer; needs no backend.
    #[default]
    Rubric,
    /// One IdeologyJudge completion per rule.
    Backend,
}

/// Word stems and weights for each label. A token matches a stem when it
/// starts with it.
const RUBRIC: [(Ideology, &[(&str, f64)]); 3] = [
    (
        Ideology::Rousseauian,
        &[
            ("consensus", 2.0),
            ("collective", 2.0),
            ("harmony", 2.0),
            ("cooperat", 2.0),
            ("solidar", 2.0),
            ("inclu", 2.0),
            ("common", 1.5),
            ("welcom", 1.5),
            ("dialogue", 1.5),
            ("mutual", 1.5),
            ("help", 1.5),
            ("together", 1.0),
            ("share", 1.0),
            ("gather", 1.0),
            ("care", 1.0),
            ("support", 1.0),
            ("peace", 1.0),
            ("welfare", 1.0),
            ("voice", 1.0),
        ],
    ),
    (
        Ideology::Lockean,
        &[
            ("right", 2.0),
            ("liberty", 2.0),
            ("consent", 2.0),
            ("privacy", 2.0),
            ("private", 2.0),
            ("property", 2.0),
            ("free", 1.5),
            ("fair", 1.5),
            ("hearing", 1.5),
            ("appeal", 1.5),
            ("dissent", 1.5),
            ("procedur", 1.5),
            ("individual", 1.5),
            ("leave", 1.5),
            ("exit", 1.5),
            ("equal", 1.0),
            ("due", 1.0),
            ("process", 1.0),
            ("review", 1.0),
            ("retaliat", 1.0),
            ("express", 1.0),
            ("choos", 1.0),
            ("inviolabl", 1.0),
        ],
    ),
    (
        Ideology::Hobbesian,
        &[
            ("authorit", 2.0),
            ("enforc", 2.0),
            ("leader", 2.0),
            ("obey", 2.0),
            ("command", 2.0),
            ("hierarch", 2.0),
            ("punish", 2.0),
            ("arbiter", 2.0),
            ("chief", 2.0),
            ("final", 1.5),
            ("binding", 1.5),
            ("sanction", 1.5),
            ("moderator", 1.5),
            ("order", 1.5),
            ("securit", 1.5),
            ("restrict", 1.5),
            ("control", 1.5),
            ("overrul", 1.5),
            ("council", 1.0),
            ("strict", 1.0),
            ("firm", 1.0),
            ("deter", 1.0),
            ("chain", 1.0),
            ("crisis", 1.0),
            ("emergenc", 1.0),
            ("patrol", 1.0),
            ("appoint", 1.0),
        ],
    ),
];

/// A label must score at least this much, and strictly more than the others.
pub const RUBRIC_THRESHOLD: f64 = 1.0;

pub fn rubric_scores(rule: &str) -> [f64; 3] {
    let lower = rule.to_lowercase();
    let tokens: Vec<&str> = lower.split(|c: char| !c.is_alphabetic()).filter(|t| !t.is_empty()).collect();
    let mut scores = [0.0; 3];
    for (k, (_, stems)) in RUBRIC.iter().enumerate() {
        for t in &tokens {
            if let Some((_, w)) = stems.iter().find(|(s, _)| t.starts_with(s)) {
                scores[k] += w;
            }
        }
    }
    scores
}

pub fn classify_rubric(rule: &str) -> Ideology {
    let s = rubric_scores(rule);
    let best = (0..3).max_by(|a, b| s[*a].total_cmp(&s[*b])).expect("three labels");
    let unique = (0..3).all(|k| k == best || s[k] < s[best]);
    if s[best] >= RUBRIC_THRESHOLD && unique {
        RUBRIC[best].0
    } else {
        Ideology::Unclassified
    }
}

struct LabelReply;

impl Schema for LabelReply {
    type Output = Ideology;

    fn name(&self) -> &'static str {
        "IdeologyLabel"
    }

    fn parse(&self, reply: &str) -> Option<Ideology> {
        let raw = tagged_line(reply, "LABEL")?;
        raw.split_whitespace().next()?.parse().ok().filter(|i| *i != Ideology::Unclassified)
    }

    fn reminder(&self) -> String {
        "Please answer with LABEL: <Rousseauian|Lockean|Hobbesian> on its own line.".into()
    }
}

/// Classifies one rule. Backend mode falls back to `Unclassified` when the
/// reply cannot be parsed or the backend fails.
pub fn classify_ideology(rule: &str, mode: IdeologyMode, backend: Option<&dyn LlmBackend>) -> Ideology {
    match (mode, backend) {
        (IdeologyMode::Backend, Some(b)) => {
            let mut rec = Recorder::new(b);
            let req = ChatRequest::new(
                RequestTag::IdeologyJudge,
                vec![ChatMessage::user(prompts::ideology_request(rule))],
                &SamplingParams { temperature: 0.0, max_tokens: 64 },
            );
            complete_structured(&mut rec, &req, &LabelReply).unwrap_or(Ideology::Unclassified)
        }
        _ => classify_rubric(rule),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledRule {
    pub text: String,
    pub label: Ideology,
}

pub fn fixture_corpus() -> Vec<LabeledRule> {
    IDEOLOGY_FIXTURES
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).expect("bundled ideology fixture is valid"))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdeologyDistribution {
    pub counts: BTreeMap<Ideology, usize>,
    /// Percent of all labeled rules, 0..=100.
    pub percentages: BTreeMap<Ideology, f64>,
    /// Rows are proposer values, or `NoValue`; an author with two values
    /// counts in both rows.
    pub value_matrix: BTreeMap<String, BTreeMap<Ideology, usize>>,
    /// Shannon entropy over the three classified labels, in bits.
    pub entropy_bits: f64,
}

pub const NO_VALUE_ROW: &str = "NoValue";

/// Histogram and value association of labeled rules, each given with its
/// proposer's values.
pub fn ideology_distribution(rules: &[(Vec<ValueType>, Ideology)]) -> IdeologyDistribution {
    let mut counts: BTreeMap<Ideology, usize> = Ideology::ALL.iter().map(|i| (*i, 0)).collect();
    let mut value_matrix: BTreeMap<String, BTreeMap<Ideology, usize>> = BTreeMap::new();
    for (values, label) in rules {
        *counts.get_mut(label).expect("all labels present") += 1;
        let rows: Vec<String> = if values.is_empty() {
            vec![NO_VALUE_ROW.to_string()]
        } else {
            values.iter().map(|v| v.name().to_string()).collect()
        };
        for row in rows {
            *value_matrix
                .entry(row)
                .or_insert_with(|| Ideology::ALL.iter().map(|i| (*i, 0)).collect())
                .get_mut(label)
                .expect("all labels present") += 1;
        }
    }
    let total = rules.len();
    let percentages = counts
        .iter()
        .map(|(k, c)| (*k, if total == 0 { 0.0 } else { 100.0 * *c as f64 / total as f64 }))
        .collect();
    let classified: Vec<f64> = Ideology::CLASSIFIED.iter().map(|i| counts[i] as f64).collect();
    IdeologyDistribution { entropy_bits: entropy_bits(&classified), counts, percentages, value_matrix }
}

/// Labels for a run's proposals.
pub fn label_proposals(
    proposals: &[RuleProposal],
    mode: IdeologyMode,
    backend: Option<&dyn LlmBackend>,
) -> Vec<Ideology> {
    proposals.iter().map(|p| classify_ideology(&p.text, mode, backend)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::FnBackend;

    #[test]
    fn rubric_matches_every_fixture() {
        let corpus = fixture_corpus();
        assert_eq!(corpus.len(), 30);
        for i in Ideology::CLASSIFIED {
            assert_eq!(corpus.iter().filter(|r| r.label == i).count(), 10);
        }
        for r in &corpus {
            assert_eq!(classify_rubric(&r.text), r.label, "{} {:?}", r.text, rubric_scores(&r.text));
        }
    }

    #[test]
    fn rubric_unclassified_without_signal() {
        assert_eq!(classify_rubric("The sky is blue on Tuesdays."), Ideology::Unclassified);
    }

    #[test]
    fn distribution_counts() {
        let mut rules = vec![(vec![], Ideology::Rousseauian); 9];
        rules.push((vec![], Ideology::Lockean));
        let d = ideology_distribution(&rules);
        assert_eq!(d.percentages[&Ideology::Rousseauian], 90.0);
        assert_eq!(d.percentages[&Ideology::Lockean], 10.0);
        assert_eq!(d.value_matrix.keys().collect::<Vec<_>>(), vec![NO_VALUE_ROW]);
    }

    #[test]
    fn backend_mode_parses_and_falls_back() {
        let b = FnBackend(|_: &ChatRequest| Ok("LABEL: Hobbesian\nREASON: order".to_string()));
        assert_eq!(classify_ideology("anything", IdeologyMode::Backend, Some(&b)), Ideology::Hobbesian);
        let junk = FnBackend(|_: &ChatRequest| Ok("no idea".to_string()));
        assert_eq!(classify_ideology("anything", IdeologyMode::Backend, Some(&junk)), Ideology::Unclassified);
    }
}
