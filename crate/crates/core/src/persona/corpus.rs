use std::collections::{BTreeSet, HashSet};
use std::path::Path;

use serde::Deserialize;

use super::{Dilemma, PersonaError};
use crate::values::ValueType;

/// The shipped, pre-tagged dilemma corpus (JSON Lines).
pub const BUNDLED_CORPUS: &str = include_str!("../../data/dilemmas.jsonl");

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    id: String,
    title: String,
    scenario: String,
    tags: Vec<String>,
}

/// Parses a JSON Lines corpus (one dilemma per line; blank lines and `#`
/// comments skipped) and checks id uniqueness and value coverage.
pub fn load_corpus(source: &str) -> Result<Vec<Dilemma>, PersonaError> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in source.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let rec: Record = serde_json::from_str(line)
            .map_err(|e| PersonaError::CorpusParse { line: i + 1, message: e.to_string() })?;
        if !seen.insert(rec.id.clone()) {
            return Err(PersonaError::DuplicateId(rec.id));
        }
        let mut tagged = BTreeSet::new();
        for name in &rec.tags {
            let v = name.parse::<ValueType>().map_err(|_| PersonaError::UnknownValueName {
                dilemma: rec.id.clone(),
                name: name.clone(),
            })?;
            tagged.insert(v);
        }
        if tagged.is_empty() {
            return Err(PersonaError::CorpusParse { line: i + 1, message: format!("dilemma {} has no tags", rec.id) });
        }
        out.push(Dilemma { id: rec.id, title: rec.title, scenario: rec.scenario, tagged_values: tagged });
    }
    for v in ValueType::ALL {
        if !out.iter().any(|d| d.tagged_values.contains(&v)) {
            return Err(PersonaError::UncoveredValue(v));
        }
    }
    Ok(out)
}

pub fn load_corpus_file(path: &Path) -> Result<Vec<Dilemma>, PersonaError> {
    load_corpus(&std::fs::read_to_string(path)?)
}

pub fn bundled_corpus() -> Vec<Dilemma> {
    load_corpus(BUNDLED_CORPUS).expect("bundled corpus is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_corpus_has_84_covering_all_values() {
        let c = bundled_corpus();
        assert_eq!(c.len(), 84);
        for v in ValueType::ALL {
            assert!(c.iter().filter(|d| d.tagged_values.contains(&v)).count() >= 3, "{v}");
        }
    }

    #[test]
    fn empty_file_is_uncovered() {
        assert!(matches!(load_corpus(""), Err(PersonaError::UncoveredValue(ValueType::SelfDirection))));
    }

    #[test]
    fn unknown_value_name() {
        let src = r#"{"id":"x","title":"t","scenario":"s","tags":["Honor"]}"#;
        assert!(matches!(load_corpus(src), Err(PersonaError::UnknownValueName { name, .. }) if name == "Honor"));
    }

    #[test]
    fn duplicate_ids() {
        let src = "{\"id\":\"x\",\"title\":\"t\",\"scenario\":\"s\",\"tags\":[\"Power\"]}\n\
                   {\"id\":\"x\",\"title\":\"t\",\"scenario\":\"s\",\"tags\":[\"Power\"]}";
        assert!(matches!(load_corpus(src), Err(PersonaError::DuplicateId(id)) if id == "x"));
    }

    #[test]
    fn truncated_line_reports_line_number() {
        let src = "{\"id\":\"x\",\"title\":\"t\"";
        assert!(matches!(load_corpus(src), Err(PersonaError::CorpusParse { line: 1, .. })));
    }
}
