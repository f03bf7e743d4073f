use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::engine::SurveyResponse;
use crate::persona::AgentId;
use crate::store::{EventBody, SimEvent};
use crate::text;
use crate::values::ValueType;

/// Gini coefficient by mean absolute difference over all ordered pairs:
/// `sum |x_i - x_j| / (2 n^2 mean)`. 0 for empty or all-zero input.
pub fn gini(counts: &[f64]) -> f64 {
    let n = counts.len() as f64;
    let total: f64 = counts.iter().sum();
    if counts.is_empty() || total <= 0.0 {
        return 0.0;
    }
    let mean = total / n;
    let diff: f64 = counts.iter().flat_map(|a| counts.iter().map(move |b| (a - b).abs())).sum();
    diff / (2.0 * n * n * mean)
}

/// Shannon entropy in bits of the normalized counts.
pub fn entropy_bits(counts: &[f64]) -> f64 {
    let total: f64 = counts.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    counts
        .iter()
        .filter(|c| **c > 0.0)
        .map(|c| {
            let p = c / total;
            -p * p.log2()
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Participation {
    /// Utterances per agent, including agents who never spoke.
    pub utterances: BTreeMap<AgentId, usize>,
    pub gini: f64,
    pub entropy_bits: f64,
    /// True when nobody spoke.
    pub degenerate: bool,
}

pub fn participation_balance(events: &[SimEvent], population: &[AgentId]) -> Participation {
    let mut utterances: BTreeMap<AgentId, usize> = population.iter().map(|a| (a.clone(), 0)).collect();
    for e in events {
        if let EventBody::Turn { speaker, .. } = &e.body {
            *utterances.entry(speaker.clone()).or_insert(0) += 1;
        }
    }
    let counts: Vec<f64> = utterances.values().map(|c| *c as f64).collect();
    Participation {
        gini: gini(&counts),
        entropy_bits: entropy_bits(&counts),
        degenerate: counts.iter().sum::<f64>() == 0.0,
        utterances,
    }
}

/// Jaccard overlap of two content-word sets; `None` when both are empty.
pub fn jaccard(a: &str, b: &str) -> Option<f64> {
    let (sa, sb) = (text::content_set(a), text::content_set(b));
    let union = sa.union(&sb).count();
    if union == 0 {
        return None;
    }
    Some(sa.intersection(&sb).count() as f64 / union as f64)
}

/// Turn texts per conversation, in turn order.
pub fn conversation_turns(events: &[SimEvent]) -> BTreeMap<String, Vec<(AgentId, String)>> {
    let mut out: BTreeMap<String, Vec<(u32, AgentId, String)>> = BTreeMap::new();
    for e in events {
        if let EventBody::Turn { conversation_id, index, speaker, text } = &e.body {
            out.entry(conversation_id.clone()).or_default().push((*index, speaker.clone(), text.clone()));
        }
    }
    out.into_iter()
        .map(|(id, mut turns)| {
            turns.sort_by_key(|t| t.0);
            (id, turns.into_iter().map(|(_, s, t)| (s, t)).collect())
        })
        .collect()
}

/// Continuity of one conversation: mean Jaccard overlap between consecutive
/// turns, skipping pairs with no content words at all.
pub fn conversation_continuity(turns: &[&str]) -> Option<f64> {
    let scores: Vec<f64> = turns.windows(2).filter_map(|w| jaccard(w[0], w[1])).collect();
    (!scores.is_empty()).then(|| scores.iter().sum::<f64>() / scores.len() as f64)
}

/// Mean over eligible conversations of their continuity.
pub fn topical_continuity(events: &[SimEvent]) -> Result<f64, AnalysisError> {
    let per: Vec<f64> = conversation_turns(events)
        .values()
        .filter_map(|turns| conversation_continuity(&turns.iter().map(|(_, t)| t.as_str()).collect::<Vec<_>>()))
        .collect();
    if per.is_empty() {
        return Err(AnalysisError::NoEligibleConversations);
    }
    Ok(per.iter().sum::<f64>() / per.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftSeries {
    /// Round of the later survey in each consecutive pair.
    pub rounds: Vec<u32>,
    pub drift: Vec<f64>,
    pub stability: f64,
}

/// Mean absolute change of the 10 value scores between consecutive surveys.
pub fn drift_between(a: &BTreeMap<ValueType, f64>, b: &BTreeMap<ValueType, f64>) -> f64 {
    ValueType::ALL
        .iter()
        .map(|v| (a.get(v).copied().unwrap_or(0.5) - b.get(v).copied().unwrap_or(0.5)).abs())
        .sum::<f64>()
        / ValueType::ALL.len() as f64
}

/// Drift series and stability (one minus mean drift) for one agent's
/// surveys, given in round order.
pub fn value_drift(surveys: &[&SurveyResponse]) -> Result<DriftSeries, AnalysisError> {
    if surveys.len() < 2 {
        return Err(AnalysisError::TooFewSurveys(surveys.len()));
    }
    let drift: Vec<f64> = surveys.windows(2).map(|w| drift_between(&w[0].scores, &w[1].scores)).collect();
    let mean = drift.iter().sum::<f64>() / drift.len() as f64;
    Ok(DriftSeries { rounds: surveys[1..].iter().map(|s| s.round).collect(), drift, stability: 1.0 - mean })
}

/// Survey responses per agent in round order.
pub fn surveys_by_agent(events: &[SimEvent]) -> BTreeMap<AgentId, Vec<&SurveyResponse>> {
    let mut out: BTreeMap<AgentId, Vec<&SurveyResponse>> = BTreeMap::new();
    for e in events {
        if let EventBody::Survey { response } = &e.body {
            out.entry(response.agent_id.clone()).or_default().push(response);
        }
    }
    for v in out.values_mut() {
        v.sort_by_key(|s| s.round);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gini_fixtures() {
        assert_eq!(gini(&[1.0, 1.0, 1.0, 1.0]), 0.0);
        assert!((gini(&[4.0, 0.0, 0.0, 0.0]) - 0.75).abs() < 1e-12);
        assert_eq!(gini(&[]), 0.0);
        assert_eq!(gini(&[0.0, 0.0]), 0.0);
    }

    #[test]
    fn entropy_fixtures() {
        assert!((entropy_bits(&[1.0, 1.0, 1.0, 1.0]) - 2.0).abs() < 1e-12);
        assert_eq!(entropy_bits(&[5.0, 0.0]), 0.0);
    }

    #[test]
    fn jaccard_fixtures() {
        assert_eq!(jaccard("apply rule now", "rule now stands"), Some(0.5));
        assert_eq!(jaccard("gardens bloom", "gardens bloom"), Some(1.0));
        assert_eq!(jaccard("gardens bloom", "taxes rise"), Some(0.0));
        assert_eq!(jaccard("the and", "of"), None);
    }

    fn survey(round: u32, f: impl Fn(usize) -> f64) -> SurveyResponse {
        SurveyResponse {
            agent_id: AgentId::new("a"),
            round,
            items: vec![],
            scores: ValueType::ALL.iter().map(|v| (*v, f(v.index()))).collect(),
        }
    }

    #[test]
    fn drift_fixtures() {
        let a = survey(5, |_| 0.4);
        let d = value_drift(&[&a, &a]).unwrap();
        assert_eq!((d.drift[0], d.stability), (0.0, 1.0));
        let zero = survey(5, |_| 0.0);
        let one = survey(10, |_| 1.0);
        assert_eq!(value_drift(&[&zero, &one]).unwrap().stability, 0.0);
        let b = survey(10, |i| if i < 5 { 0.6 } else { 0.4 });
        assert!((value_drift(&[&a, &b]).unwrap().drift[0] - 0.1).abs() < 1e-12);
        assert!(matches!(value_drift(&[&a]), Err(AnalysisError::TooFewSurveys(1))));
    }
}
