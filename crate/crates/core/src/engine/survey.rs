use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::EngineError;
use crate::agent::AgentState;
use crate::llm::{complete_structured, Recorder, RequestTag, SamplingParams, SurveyChoice, SurveyPick};
use crate::persona::AgentId;
use crate::prompts;
use crate::store::EventBody;
use crate::values::ValueType;

/// Three principle statements per value, indexed by `ValueType::index`.
const PRINCIPLES: [[&str; 3]; 10] = [
    [
        "Having the independence to decide things for myself.",
        "Following my curiosity wherever it leads.",
        "Room for creativity and my own way of doing things.",
    ],
    [
        "A life full of adventure and new experiences.",
        "Seeking out novelty instead of routine.",
        "The excitement of trying something daring.",
    ],
    [
        "Making time for pleasure and the good things in life.",
        "Enjoyment of everyday moments.",
        "Comfort and delight in what I do.",
    ],
    [
        "Reaching ambitious goals through hard work.",
        "Being recognised for my competence.",
        "Striving for excellence and success.",
    ],
    [
        "Having authority over how things are decided.",
        "Gaining influence over the people around me.",
        "Holding a position of leadership and status.",
    ],
    [
        "Living in safety, free from threats.",
        "Stability and reliability in my surroundings.",
        "Protection for me and my household.",
    ],
    [
        "Politeness towards everyone I meet.",
        "Restraint in actions that might upset others.",
        "Self-discipline and courtesy in daily life.",
    ],
    [
        "Respecting the customs I grew up with.",
        "Keeping our heritage alive for the next generation.",
        "Humility and honouring those who came before.",
    ],
    [
        "Kindness towards the people close to me.",
        "Loyalty to my friends, no matter what.",
        "Honesty and helpfulness in my relationships.",
    ],
    [
        "Justice and equality for every person.",
        "Tolerance for people who are different from me.",
        "Caring for nature and the welfare of all.",
    ],
];

/// The 15 presented pairs as `(first, second)` value indices: every
/// neighbour pair around the circle plus the five diameters. Each value
/// appears three times; values 0..5 are shown first twice, 5..10 once.
pub const SURVEY_PAIRS: [(usize, usize); 15] = [
    (0, 1),
    (4, 9),
    (5, 6),
    (2, 3),
    (0, 5),
    (7, 8),
    (9, 0),
    (3, 4),
    (1, 6),
    (6, 7),
    (2, 7),
    (8, 9),
    (1, 2),
    (3, 8),
    (4, 5),
];

/// Which statement a pair uses for each side, so every statement of a value
/// is shown exactly once.
fn statement_slots() -> [(usize, usize); 15] {
    let mut used = [0usize; 10];
    let mut out = [(0, 0); 15];
    for (k, (a, b)) in SURVEY_PAIRS.iter().enumerate() {
        out[k] = (used[*a], used[*b]);
        used[*a] += 1;
        used[*b] += 1;
    }
    out
}

pub fn principle(v: ValueType, slot: usize) -> &'static str {
    PRINCIPLES[v.index()][slot]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyItem {
    pub first: ValueType,
    pub second: ValueType,
    /// `None` when the reply could not be parsed and the item was skipped.
    pub picked: Option<ValueType>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyResponse {
    pub agent_id: AgentId,
    pub round: u32,
    pub items: Vec<SurveyItem>,
    /// Share of its answered appearances in which each value was picked;
    /// 0.5 for a value with no answered appearance.
    pub scores: BTreeMap<ValueType, f64>,
}

/// Value scores from answered items.
pub fn score_items(items: &[SurveyItem]) -> BTreeMap<ValueType, f64> {
    let mut wins = [0u32; 10];
    let mut seen = [0u32; 10];
    for it in items {
        let Some(p) = it.picked else { continue };
        seen[it.first.index()] += 1;
        seen[it.second.index()] += 1;
        wins[p.index()] += 1;
    }
    ValueType::ALL
        .iter()
        .map(|v| {
            let i = v.index();
            let s = if seen[i] == 0 { 0.5 } else { f64::from(wins[i]) / f64::from(seen[i]) };
            (*v, s)
        })
        .collect()
}

/// Runs the forced-choice questionnaire for one agent.
pub fn administer_survey(
    state: &mut AgentState,
    rec: &mut Recorder<'_>,
    round: u32,
    context_budget: usize,
    sampling: &SamplingParams,
) -> Result<SurveyResponse, EngineError> {
    let context = state.recall_context(round, context_budget, None);
    let slots = statement_slots();
    let mut items = Vec::with_capacity(SURVEY_PAIRS.len());
    for ((a, b), (sa, sb)) in SURVEY_PAIRS.iter().zip(slots) {
        let (first, second) = (ValueType::from_index(*a), ValueType::from_index(*b));
        let req = state.request(
            RequestTag::Survey,
            prompts::survey_request(&context, principle(first, sa), principle(second, sb)),
            sampling,
        );
        let picked = match complete_structured(rec, &req, &SurveyChoice) {
            Ok(SurveyPick::First) => Some(first),
            Ok(SurveyPick::Second) => Some(second),
            Err(e) => {
                rec.push(EventBody::Warning {
                    message: format!("{}: survey item {first}/{second} skipped: {e}", state.agent_id),
                });
                None
            }
        };
        items.push(SurveyItem { first, second, picked });
    }
    if items.iter().all(|i| i.picked.is_none()) {
        return Err(EngineError::SurveyEmpty(state.agent_id.clone()));
    }
    let scores = score_items(&items);
    Ok(SurveyResponse { agent_id: state.agent_id.clone(), round, items, scores })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn each_value_appears_three_times_with_fixed_first_rate() {
        let mut first = [0; 10];
        let mut total = [0; 10];
        for (a, b) in SURVEY_PAIRS {
            assert_ne!(a, b);
            first[a] += 1;
            total[a] += 1;
            total[b] += 1;
        }
        assert!(total.iter().all(|&t| t == 3));
        assert_eq!(first, [2, 2, 2, 2, 2, 1, 1, 1, 1, 1]);
        let mut pairs: Vec<_> = SURVEY_PAIRS.iter().map(|&(a, b)| (a.min(b), a.max(b))).collect();
        pairs.sort();
        pairs.dedup();
        assert_eq!(pairs.len(), 15);
    }

    #[test]
    fn statements_use_only_their_own_theme_words() {
        for v in ValueType::ALL {
            for s in 0..3 {
                let text = principle(v, s).to_lowercase();
                assert!(v.theme_words().iter().any(|w| text.contains(w)), "{v} {s}");
                for other in ValueType::ALL.iter().filter(|o| **o != v) {
                    for w in other.theme_words() {
                        assert!(!text.contains(w), "{v} statement {s} contains {other} word {w}");
                    }
                }
            }
        }
    }

    #[test]
    fn scoring() {
        let items = vec![
            SurveyItem { first: ValueType::Power, second: ValueType::Security, picked: Some(ValueType::Power) },
            SurveyItem { first: ValueType::Power, second: ValueType::Hedonism, picked: None },
        ];
        let s = score_items(&items);
        assert_eq!(s[&ValueType::Power], 1.0);
        assert_eq!(s[&ValueType::Security], 0.0);
        assert_eq!(s[&ValueType::Hedonism], 0.5);
    }
}
