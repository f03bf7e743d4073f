use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use tracing::debug;

use super::{
    judge_narrative, reflect_values, AgentId, Composition, Dilemma, Narrative, PersonaConfig, PersonaError,
    PersonaProfile, PopulationSpec, ValueComplexity,
};
use crate::llm::{LlmBackend, Recorder};
use crate::store::EventBody;
use crate::values::{adjacent_pairs, category, is_compatible_pair, HigherOrderCategory, ValueType};

const NAMES: &[&str] = &[
    "Ada", "Bram", "Chiara", "Dev", "Elin", "Farid", "Greta", "Hiro", "Ines", "Jonah", "Kalani", "Lior",
    "Mara", "Nikolai", "Oona", "Pablo", "Quinn", "Rosa", "Soren", "Tamsin", "Uma", "Viktor", "Wren", "Xiadani",
    "Yusuf", "Zora", "Anouk", "Bastian", "Cleo", "Dario", "Esme", "Felix", "Gaia", "Hugo", "Ilse", "Joaquin",
    "Kira", "Leon", "Mei", "Nils",
];

const BACKSTORIES: &[&str] = &[
    "recently moved to the community and is still finding their feet",
    "works odd hours and likes to chat when things are quiet",
    "grew up in a small town and enjoys meeting new people",
    "spends most afternoons reading and wandering around",
    "is new here and curious about everyone else",
    "used to travel a lot and has settled down for now",
];

/// Personas plus every event their elicitation produced, in agent order.
#[derive(Debug, Clone)]
pub struct Population {
    pub profiles: Vec<PersonaProfile>,
    pub narratives: Vec<Narrative>,
    pub events: Vec<EventBody>,
}

fn check_pair(pair: &[ValueType]) -> Result<(), PersonaError> {
    match pair {
        [a, b] => match is_compatible_pair(*a, *b) {
            Ok(true) => Ok(()),
            Ok(false) => Err(PersonaError::InfeasibleSpec(format!("{a} and {b} are not adjacent values"))),
            Err(e) => Err(PersonaError::InfeasibleSpec(e.to_string())),
        },
        _ => Err(PersonaError::InfeasibleSpec(format!("a multi-value persona needs exactly 2 values, got {}", pair.len()))),
    }
}

/// Decides each agent's values for a population spec, without any backend calls.
pub fn assign_values(spec: &PopulationSpec) -> Result<Vec<Vec<ValueType>>, PersonaError> {
    let n = spec.group_size;
    if n == 0 {
        return Err(PersonaError::InfeasibleSpec("group_size must be positive".into()));
    }
    let no_value = matches!(spec.composition, Composition::NoValue);
    if no_value != (spec.complexity == ValueComplexity::None) {
        return Err(PersonaError::InfeasibleSpec(format!(
            "composition {} is incompatible with complexity {:?}",
            spec.composition, spec.complexity
        )));
    }
    match (&spec.composition, spec.complexity) {
        (Composition::NoValue, _) => Ok(vec![Vec::new(); n]),
        (Composition::Custom(lists), complexity) => {
            if lists.len() != n {
                return Err(PersonaError::InfeasibleSpec(format!(
                    "custom composition lists {} agents but group_size is {n}",
                    lists.len()
                )));
            }
            for l in lists {
                match complexity {
                    ValueComplexity::Single if l.len() != 1 => {
                        return Err(PersonaError::InfeasibleSpec(format!(
                            "single-value persona needs exactly 1 value, got {}",
                            l.len()
                        )))
                    }
                    ValueComplexity::Multi => check_pair(l)?,
                    _ => {}
                }
            }
            Ok(lists.clone())
        }
        (Composition::Homogeneous(c), ValueComplexity::Single) => {
            let members = c.members();
            Ok((0..n).map(|i| vec![members[i % members.len()]]).collect())
        }
        (Composition::Homogeneous(c), ValueComplexity::Multi) => {
            let pairs: Vec<_> =
                adjacent_pairs().into_iter().filter(|(a, b)| category(*a) == *c && category(*b) == *c).collect();
            if pairs.is_empty() {
                return Err(PersonaError::InfeasibleSpec(format!("no adjacent value pair lies inside {c}")));
            }
            Ok((0..n).map(|i| vec![pairs[i % pairs.len()].0, pairs[i % pairs.len()].1]).collect())
        }
        (Composition::DiverseBalanced, complexity) => {
            if n < HigherOrderCategory::ALL.len() {
                return Err(PersonaError::InfeasibleSpec(format!(
                    "a balanced population needs at least 4 agents to cover every quadrant, got {n}"
                )));
            }
            Ok(match complexity {
                ValueComplexity::Multi => balanced_pairs(n),
                _ => balanced_singles(n),
            })
        }
        (Composition::Homogeneous(_), ValueComplexity::None) => unreachable!("checked above"),
    }
}

/// Quadrants take turns (fewest agents first); within a quadrant the least
/// used value is chosen. Ties favour quadrants with unused values.
fn balanced_singles(n: usize) -> Vec<Vec<ValueType>> {
    let mut quad_count = [0usize; 4];
    let mut usage = [0usize; 10];
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let q = (0..4)
            .min_by_key(|&q| {
                let members = HigherOrderCategory::ALL[q].members();
                let min_use = members.iter().map(|v| usage[v.index()]).min().unwrap();
                (quad_count[q], min_use, std::cmp::Reverse(members.len()), q)
            })
            .unwrap();
        let v = *HigherOrderCategory::ALL[q]
            .members()
            .iter()
            .min_by_key(|v| (usage[v.index()], v.index()))
            .unwrap();
        quad_count[q] += 1;
        usage[v.index()] += 1;
        out.push(vec![v]);
    }
    out
}

/// Adjacent pairs whose first value falls in the quadrant with the fewest
/// agents, preferring pairs that introduce unused values, then unused pairs.
fn balanced_pairs(n: usize) -> Vec<Vec<ValueType>> {
    let pairs = adjacent_pairs();
    let mut quad_count = [0usize; 4];
    let mut usage = [0usize; 10];
    let mut pair_usage = [0usize; 10];
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let q = (0..4).min_by_key(|&q| (quad_count[q], q)).unwrap();
        let quadrant = HigherOrderCategory::ALL[q];
        let mut options = Vec::new();
        for &a in quadrant.members() {
            let next = ValueType::from_index(a.index() + 1);
            let prev = ValueType::from_index(a.index() + 9);
            for b in [next, prev] {
                let pi = pairs.iter().position(|&(x, y)| (x, y) == (a, b) || (y, x) == (a, b)).unwrap();
                options.push((a, b, pi));
            }
        }
        let (a, b, pi) = options
            .into_iter()
            .enumerate()
            .min_by_key(|(order, (a, b, pi))| {
                let fresh = [a, b].iter().filter(|v| usage[v.index()] == 0).count();
                (std::cmp::Reverse(fresh), pair_usage[*pi], *order)
            })
            .map(|(_, o)| o)
            .unwrap();
        quad_count[q] += 1;
        usage[a.index()] += 1;
        usage[b.index()] += 1;
        pair_usage[pi] += 1;
        out.push(vec![a, b]);
    }
    out
}

fn display_names(n: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
    let mut names: Vec<&str> = NAMES.to_vec();
    names.shuffle(rng);
    (0..n)
        .map(|i| {
            let base = names[i % names.len()];
            match i / names.len() {
                0 => base.to_string(),
                k => format!("{base} {}", k + 1),
            }
        })
        .collect()
}

/// Dilemmas an agent may resolve: those tagged with all its values first,
/// then those tagged with any of them; each group shuffled.
fn candidate_dilemmas<'c>(corpus: &'c [Dilemma], values: &[ValueType], rng: &mut ChaCha8Rng) -> Vec<&'c Dilemma> {
    let mut all: Vec<&Dilemma> =
        corpus.iter().filter(|d| values.iter().all(|v| d.tagged_values.contains(v))).collect();
    let mut some: Vec<&Dilemma> = corpus
        .iter()
        .filter(|d| {
            values.iter().any(|v| d.tagged_values.contains(v)) && !values.iter().all(|v| d.tagged_values.contains(v))
        })
        .collect();
    all.shuffle(rng);
    some.shuffle(rng);
    all.extend(some);
    all
}

struct Elicited {
    profile: PersonaProfile,
    narratives: Vec<Narrative>,
    events: Vec<EventBody>,
}

fn elicit(
    agent_id: AgentId,
    display_name: String,
    values: Vec<ValueType>,
    complexity: ValueComplexity,
    corpus: &[Dilemma],
    backend: &dyn LlmBackend,
    cfg: &PersonaConfig,
    mut rng: ChaCha8Rng,
) -> Result<Elicited, PersonaError> {
    let mut rec = Recorder::new(backend);
    if values.is_empty() {
        let backstory = BACKSTORIES.choose(&mut rng).unwrap();
        let profile = PersonaProfile {
            agent_id,
            narrative: format!("I'm {display_name}. I {backstory}."),
            display_name,
            values,
            elicitation_trace: Vec::new(),
            complexity,
        };
        rec.push(EventBody::PersonaBuilt { profile: profile.clone() });
        return Ok(Elicited { profile, narratives: Vec::new(), events: rec.take_events() });
    }

    let mut narratives = Vec::new();
    let mut kept = Vec::new();
    for d in candidate_dilemmas(corpus, &values, &mut rng) {
        if kept.len() >= cfg.narratives_per_agent {
            break;
        }
        let targets: Vec<ValueType> = values.iter().copied().filter(|v| d.tagged_values.contains(v)).collect();
        for attempt in 0..=cfg.max_regenerations {
            let id = format!("{agent_id}-n{:02}", narratives.len() + 1);
            let draft = match super::generate_narrative(&mut rec, d, &targets, id, attempt, &cfg.sampling) {
                Ok(n) => n,
                Err(PersonaError::EmptyCompletion) => {
                    rec.push(EventBody::Warning { message: format!("{agent_id}: empty narrative for {}", d.id) });
                    continue;
                }
                Err(e) => return Err(e),
            };
            let judged = match judge_narrative(&mut rec, draft.clone(), cfg.keep_threshold, &cfg.sampling) {
                Ok(n) => n,
                Err(PersonaError::UnparsableScore) => {
                    rec.push(EventBody::Warning { message: format!("{agent_id}: unparsable judge score for {}", draft.id) });
                    draft
                }
                Err(e) => return Err(e),
            };
            narratives.push(judged.clone());
            if judged.kept {
                kept.push(judged);
                break;
            }
        }
    }
    if kept.is_empty() {
        return Err(PersonaError::ElicitationFailed(agent_id));
    }
    debug!(agent = %agent_id, kept = kept.len(), drafted = narratives.len(), "persona elicited");
    let narrative = reflect_values(&mut rec, &display_name, &kept, &cfg.sampling)?;
    let profile = PersonaProfile {
        agent_id,
        display_name,
        values,
        narrative,
        elicitation_trace: kept.iter().map(|n| n.id.clone()).collect(),
        complexity,
    };
    rec.push(EventBody::PersonaBuilt { profile: profile.clone() });
    Ok(Elicited { profile, narratives, events: rec.take_events() })
}

/// Builds `spec.group_size` personas. Deterministic for a given seed, corpus
/// and deterministic backend; agents are elicited in parallel.
pub fn build_population(
    spec: &PopulationSpec,
    corpus: &[Dilemma],
    backend: &dyn LlmBackend,
    cfg: &PersonaConfig,
) -> Result<Population, PersonaError> {
    let assignments = assign_values(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let names = display_names(spec.group_size, &mut rng);
    let results: Vec<Result<Elicited, PersonaError>> = assignments
        .into_par_iter()
        .zip(names)
        .enumerate()
        .map(|(i, (values, name))| {
            let agent_rng = ChaCha8Rng::seed_from_u64(spec.seed ^ (0x9E37_79B9_7F4A_7C15u64.wrapping_mul(i as u64 + 1)));
            elicit(AgentId::numbered(i, spec.group_size), name, values, spec.complexity, corpus, backend, cfg, agent_rng)
        })
        .collect();
    let mut pop = Population { profiles: Vec::new(), narratives: Vec::new(), events: Vec::new() };
    for r in results {
        let e = r?;
        pop.profiles.push(e.profile);
        pop.narratives.extend(e.narratives);
        pop.events.extend(e.events);
    }
    Ok(pop)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::MockBackend;
    use crate::persona::bundled_corpus;
    use std::collections::BTreeSet;

    fn spec(n: usize, composition: Composition, complexity: ValueComplexity) -> PopulationSpec {
        PopulationSpec { group_size: n, composition, complexity, seed: 11 }
    }

    fn quadrants(a: &[Vec<ValueType>]) -> [usize; 4] {
        let mut q = [0; 4];
        for vs in a {
            let c = category(vs[0]);
            q[HigherOrderCategory::ALL.iter().position(|x| *x == c).unwrap()] += 1;
        }
        q
    }

    #[test]
    fn homogeneous_conservation_single() {
        let a = assign_values(&spec(4, Composition::Homogeneous(HigherOrderCategory::Conservation), ValueComplexity::Single)).unwrap();
        assert_eq!(a.len(), 4);
        for vs in &a {
            assert_eq!(vs.len(), 1);
            assert!([ValueType::Security, ValueType::Conformity, ValueType::Tradition].contains(&vs[0]));
        }
    }

    #[test]
    fn homogeneous_multi_stays_inside_quadrant() {
        for c in HigherOrderCategory::ALL {
            let a = assign_values(&spec(30, Composition::Homogeneous(c), ValueComplexity::Multi)).unwrap();
            for vs in &a {
                assert_eq!(vs.len(), 2);
                assert!(vs.iter().all(|v| category(*v) == c));
                assert_eq!(is_compatible_pair(vs[0], vs[1]), Ok(true));
            }
        }
    }

    #[test]
    fn balanced_assignments_brute_force_scan() {
        for complexity in [ValueComplexity::Single, ValueComplexity::Multi] {
            for n in 4..=40 {
                let a = assign_values(&spec(n, Composition::DiverseBalanced, complexity)).unwrap();
                assert_eq!(a.len(), n);
                let q = quadrants(&a);
                assert!(q.iter().all(|&c| c > 0), "{complexity:?} n={n} {q:?}");
                assert!(q.iter().max().unwrap() - q.iter().min().unwrap() <= 1, "{complexity:?} n={n} {q:?}");
                if complexity == ValueComplexity::Multi {
                    for vs in &a {
                        assert_eq!(is_compatible_pair(vs[0], vs[1]), Ok(true));
                    }
                }
                let union: BTreeSet<ValueType> = a.iter().flatten().copied().collect();
                if n >= 10 {
                    assert_eq!(union.len(), 10, "{complexity:?} n={n}");
                }
            }
        }
    }

    #[test]
    fn infeasible_specs() {
        let bad = [
            spec(0, Composition::NoValue, ValueComplexity::None),
            spec(3, Composition::DiverseBalanced, ValueComplexity::Single),
            spec(4, Composition::NoValue, ValueComplexity::Single),
            spec(4, Composition::DiverseBalanced, ValueComplexity::None),
            spec(1, Composition::Custom(vec![vec![ValueType::Power, ValueType::Benevolence]]), ValueComplexity::Multi),
            spec(1, Composition::Custom(vec![vec![ValueType::Power, ValueType::Power]]), ValueComplexity::Multi),
            spec(2, Composition::Custom(vec![vec![ValueType::Power]]), ValueComplexity::Single),
        ];
        for s in bad {
            assert!(matches!(assign_values(&s), Err(PersonaError::InfeasibleSpec(_))), "{s:?}");
        }
        let ok = spec(1, Composition::Custom(vec![vec![ValueType::Achievement, ValueType::Power]]), ValueComplexity::Multi);
        assert!(assign_values(&ok).is_ok());
    }

    #[test]
    fn no_value_population_skips_elicitation() {
        let corpus = bundled_corpus();
        let pop = build_population(
            &spec(10, Composition::NoValue, ValueComplexity::None),
            &corpus,
            &MockBackend::new(1),
            &PersonaConfig::default(),
        )
        .unwrap();
        assert_eq!(pop.profiles.len(), 10);
        assert!(pop.profiles.iter().all(|p| p.values.is_empty() && p.complexity == ValueComplexity::None));
        assert!(pop.events.iter().all(|e| matches!(e, EventBody::PersonaBuilt { .. })));
    }

    #[test]
    fn elicited_population_is_deterministic_and_traced() {
        let corpus = bundled_corpus();
        let s = spec(10, Composition::DiverseBalanced, ValueComplexity::Multi);
        let a = build_population(&s, &corpus, &MockBackend::new(5), &PersonaConfig::default()).unwrap();
        let b = build_population(&s, &corpus, &MockBackend::new(5), &PersonaConfig::default()).unwrap();
        assert_eq!(serde_json::to_string(&a.profiles).unwrap(), serde_json::to_string(&b.profiles).unwrap());
        assert_eq!(a.events, b.events);
        for p in &a.profiles {
            assert!(!p.elicitation_trace.is_empty());
            assert!(p.elicitation_trace.len() <= 3);
            assert!(p.narrative.starts_with("I value"));
            for id in &p.elicitation_trace {
                let n = a.narratives.iter().find(|n| &n.id == id).unwrap();
                assert!(n.kept && n.judge_score.unwrap() >= 7);
            }
        }
        // Mock judge discards some drafts, exercising regeneration.
        assert!(a.narratives.iter().any(|n| !n.kept));
    }
}
