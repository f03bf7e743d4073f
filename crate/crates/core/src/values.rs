//! Schwartz's ten basic values and the circular structure they sit on.
//!
//! The cyclic order is fixed: Self-Direction, Stimulation, Hedonism,
//! Achievement, Power, Security, Conformity, Tradition, Benevolence,
//! Universalism (index 0..9, wrapping). Multi-value personas may only
//! combine values at circular distance 1.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ValuesError {
    #[error("a multi-value pair needs two distinct values, got {0} twice")]
    IdenticalPair(ValueType),
    #[error("unknown value name {0:?}")]
    UnknownValue(String),
    #[error("unknown value category {0:?}")]
    UnknownCategory(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ValueType {
    SelfDirection,
    Stimulation,
    Hedonism,
    Achievement,
    Power,
    Security,
    Conformity,
    Tradition,
    Benevolence,
    Universalism,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum HigherOrderCategory {
    OpennessToChange,
    SelfEnhancement,
    Conservation,
    SelfTranscendence,
}

impl ValueType {
    /// All values in circular order.
    pub const ALL: [ValueType; 10] = [
        ValueType::SelfDirection,
        ValueType::Stimulation,
        ValueType::Hedonism,
        ValueType::Achievement,
        ValueType::Power,
        ValueType::Security,
        ValueType::Conformity,
        ValueType::Tradition,
        ValueType::Benevolence,
        ValueType::Universalism,
    ];

    /// Position on the circle, 0..=9.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> ValueType {
        Self::ALL[i % Self::ALL.len()]
    }

    pub fn name(self) -> &'static str {
        match self {
            ValueType::SelfDirection => "SelfDirection",
            ValueType::Stimulation => "Stimulation",
            ValueType::Hedonism => "Hedonism",
            ValueType::Achievement => "Achievement",
            ValueType::Power => "Power",
            ValueType::Security => "Security",
            ValueType::Conformity => "Conformity",
            ValueType::Tradition => "Tradition",
            ValueType::Benevolence => "Benevolence",
            ValueType::Universalism => "Universalism",
        }
    }

    pub fn category(self) -> HigherOrderCategory {
        category(self)
    }

    /// Short first-person gloss used when building persona prompts.
    pub fn gloss(self) -> &'static str {
        match self {
            ValueType::SelfDirection => "thinking for myself and choosing my own path",
            ValueType::Stimulation => "novelty, excitement and taking on new challenges",
            ValueType::Hedonism => "enjoying life and the pleasures it offers",
            ValueType::Achievement => "personal success earned through competence",
            ValueType::Power => "influence, status and control over resources",
            ValueType::Security => "safety, stability and protecting what we have",
            ValueType::Conformity => "restraint and not upsetting the people around me",
            ValueType::Tradition => "respect for customs and the wisdom of those before us",
            ValueType::Benevolence => "caring for the people close to me",
            ValueType::Universalism => "fairness, tolerance and the welfare of everyone",
        }
    }

    /// Theme words that signal this value in free text.
    pub fn theme_words(self) -> &'static [&'static str] {
        match self {
            ValueType::SelfDirection => &["independence", "autonomy", "curiosity", "creativity", "freedom"],
            ValueType::Stimulation => &["adventure", "novelty", "excitement", "daring", "variety"],
            ValueType::Hedonism => &["pleasure", "enjoyment", "fun", "comfort", "delight"],
            ValueType::Achievement => &["success", "ambition", "competence", "goals", "excellence"],
            ValueType::Power => &["authority", "influence", "control", "status", "leadership"],
            ValueType::Security => &["safety", "stability", "protection", "order", "reliability"],
            ValueType::Conformity => &["politeness", "obedience", "restraint", "discipline", "courtesy"],
            ValueType::Tradition => &["customs", "heritage", "ritual", "humility", "ancestors"],
            ValueType::Benevolence => &["kindness", "loyalty", "honesty", "helpfulness", "friendship"],
            ValueType::Universalism => &["justice", "equality", "tolerance", "nature", "welfare"],
        }
    }
}

impl fmt::Display for ValueType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ValueType {
    type Err = ValuesError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ValueType::ALL
            .iter()
            .copied()
            .find(|v| v.name() == s)
            .ok_or_else(|| ValuesError::UnknownValue(s.to_string()))
    }
}

impl HigherOrderCategory {
    pub const ALL: [HigherOrderCategory; 4] = [
        HigherOrderCategory::OpennessToChange,
        HigherOrderCategory::SelfEnhancement,
        HigherOrderCategory::Conservation,
        HigherOrderCategory::SelfTranscendence,
    ];

    pub fn name(self) -> &'static str {
        match self {
            HigherOrderCategory::OpennessToChange => "OpennessToChange",
            HigherOrderCategory::SelfEnhancement => "SelfEnhancement",
            HigherOrderCategory::Conservation => "Conservation",
            HigherOrderCategory::SelfTranscendence => "SelfTranscendence",
        }
    }

    /// Member values, in circular order.
    pub fn members(self) -> &'static [ValueType] {
        use ValueType::*;
        match self {
            HigherOrderCategory::OpennessToChange => &[SelfDirection, Stimulation],
            HigherOrderCategory::SelfEnhancement => &[Hedonism, Achievement, Power],
            HigherOrderCategory::Conservation => &[Security, Conformity, Tradition],
            HigherOrderCategory::SelfTranscendence => &[Benevolence, Universalism],
        }
    }

    pub fn opposed(self) -> HigherOrderCategory {
        opposed_category(self)
    }
}

impl fmt::Display for HigherOrderCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for HigherOrderCategory {
    type Err = ValuesError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        HigherOrderCategory::ALL
            .iter()
            .copied()
            .find(|c| c.name() == s)
            .ok_or_else(|| ValuesError::UnknownCategory(s.to_string()))
    }
}

pub fn category(v: ValueType) -> HigherOrderCategory {
    use HigherOrderCategory::*;
    use ValueType::*;
    match v {
        SelfDirection | Stimulation => OpennessToChange,
        Hedonism | Achievement | Power => SelfEnhancement,
        Security | Conformity | Tradition => Conservation,
        Benevolence | Universalism => SelfTranscendence,
    }
}

/// Number of steps between two values on the circle, in `0..=5`.
pub fn circular_distance(a: ValueType, b: ValueType) -> usize {
    let n = ValueType::ALL.len();
    let d = a.index().abs_diff(b.index());
    d.min(n - d)
}

/// Whether two distinct values are neighbours on the circle.
pub fn is_compatible_pair(a: ValueType, b: ValueType) -> Result<bool, ValuesError> {
    if a == b {
        return Err(ValuesError::IdenticalPair(a));
    }
    Ok(circular_distance(a, b) == 1)
}

pub fn opposed_category(c: HigherOrderCategory) -> HigherOrderCategory {
    use HigherOrderCategory::*;
    match c {
        OpennessToChange => Conservation,
        Conservation => OpennessToChange,
        SelfEnhancement => SelfTranscendence,
        SelfTranscendence => SelfEnhancement,
    }
}

/// The ten distance-1 pairs of the circle, each ordered as `(i, i+1)`.
pub fn adjacent_pairs() -> Vec<(ValueType, ValueType)> {
    (0..ValueType::ALL.len())
        .map(|i| (ValueType::from_index(i), ValueType::from_index(i + 1)))
        .collect()
}

/// Quadrants that touch on the circle (share a boundary pair).
pub fn categories_adjacent(a: HigherOrderCategory, b: HigherOrderCategory) -> bool {
    a != b && opposed_category(a) != b
}

#[cfg(test)]
mod tests {
    use super::*;
    use HigherOrderCategory::*;
    use ValueType::*;

    #[test]
    fn category_examples() {
        assert_eq!(category(Benevolence), SelfTranscendence);
        assert_eq!(category(Hedonism), SelfEnhancement);
        assert_eq!(category(Security), Conservation);
    }

    #[test]
    fn membership_table_matches_category() {
        for c in HigherOrderCategory::ALL {
            for v in c.members() {
                assert_eq!(category(*v), c);
            }
        }
        let total: usize = HigherOrderCategory::ALL.iter().map(|c| c.members().len()).sum();
        assert_eq!(total, 10);
    }

    #[test]
    fn distance_examples() {
        assert_eq!(circular_distance(Achievement, Achievement), 0);
        assert_eq!(circular_distance(SelfDirection, Universalism), 1);
        assert_eq!(circular_distance(Power, Benevolence), 4);
    }

    #[test]
    fn distance_symmetric_bounded_triangle() {
        for a in ValueType::ALL {
            for b in ValueType::ALL {
                let d = circular_distance(a, b);
                assert_eq!(d, circular_distance(b, a));
                assert!(d <= 5);
                for c in ValueType::ALL {
                    assert!(circular_distance(a, c) <= d + circular_distance(b, c));
                }
            }
        }
        assert_eq!(circular_distance(SelfDirection, Security), 5);
    }

    #[test]
    fn compatibility_examples() {
        assert_eq!(is_compatible_pair(Achievement, Power), Ok(true));
        assert_eq!(is_compatible_pair(Benevolence, Universalism), Ok(true));
        assert_eq!(is_compatible_pair(Power, Benevolence), Ok(false));
        assert_eq!(is_compatible_pair(Power, Power), Err(ValuesError::IdenticalPair(Power)));
    }

    #[test]
    fn compatible_pairs_never_span_opposed_quadrants() {
        let mut pairs = 0;
        for (i, a) in ValueType::ALL.iter().enumerate() {
            for b in &ValueType::ALL[i + 1..] {
                pairs += 1;
                if is_compatible_pair(*a, *b).unwrap() {
                    let (ca, cb) = (category(*a), category(*b));
                    assert!(ca == cb || categories_adjacent(ca, cb), "{a} {b}");
                }
            }
        }
        assert_eq!(pairs, 45);
        assert_eq!(adjacent_pairs().len(), 10);
    }

    #[test]
    fn opposition_is_involutive() {
        assert_eq!(opposed_category(OpennessToChange), Conservation);
        assert_eq!(opposed_category(SelfEnhancement), SelfTranscendence);
        for c in HigherOrderCategory::ALL {
            assert_eq!(opposed_category(opposed_category(c)), c);
            assert_ne!(opposed_category(c), c);
        }
    }

    #[test]
    fn names_round_trip() {
        for v in ValueType::ALL {
            assert_eq!(v.name().parse::<ValueType>().unwrap(), v);
            assert_eq!(serde_json::to_string(&v).unwrap(), format!("\"{}\"", v.name()));
        }
        assert!("Honor".parse::<ValueType>().is_err());
    }
}
