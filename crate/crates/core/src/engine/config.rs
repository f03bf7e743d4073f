use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::EngineError;
use crate::agent::DEFAULT_MEMORY_SLOTS;
use crate::analysis::AnalysisConfig;
use crate::llm::BackendConfig;
use crate::persona::{PersonaConfig, PopulationSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Stage1Config {
    pub rounds: u32,
    /// Utterances per conversation, counting both speakers.
    pub max_turns: u32,
    /// A survey runs at the end of every round that is a multiple of this.
    pub survey_interval: u32,
    pub memory_slots: usize,
    /// Content words of persona, impressions and memories per prompt.
    pub context_budget_words: usize,
}

impl Default for Stage1Config {
    fn default() -> Self {
        Self {
            rounds: 25,
            max_turns: 6,
            survey_interval: 5,
            memory_slots: DEFAULT_MEMORY_SLOTS,
            context_budget_words: 400,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Stage2Config {
    pub enabled: bool,
    /// Proposals each agent comments on, drawn from distinct authors first.
    pub comment_k: usize,
}

impl Default for Stage2Config {
    fn default() -> Self {
        Self { enabled: true, comment_k: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub population: PopulationSpec,
    pub persona: PersonaConfig,
    pub stage1: Stage1Config,
    pub stage2: Stage2Config,
    pub backend: BackendConfig,
    pub analysis: AnalysisConfig,
    /// Dilemma corpus in JSON Lines; the bundled corpus when unset.
    pub corpus: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, EngineError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| EngineError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes to TOML")
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |m: &str| Err(EngineError::Config(m.to_string()));
        if self.stage1.max_turns == 0 {
            return bad("stage1.max_turns must be positive");
        }
        if self.stage1.survey_interval == 0 {
            return bad("stage1.survey_interval must be positive");
        }
        if self.stage1.memory_slots < 2 {
            return bad("stage1.memory_slots must be at least 2");
        }
        if self.persona.narratives_per_agent == 0 {
            return bad("persona.narratives_per_agent must be positive");
        }
        if self.persona.keep_threshold > 10 {
            return bad("persona.keep_threshold must be within 0..=10");
        }
        if self.backend.sampling.max_tokens == 0 || !(self.backend.sampling.temperature >= 0.0) {
            return bad("backend sampling parameters are invalid");
        }
        self.analysis.validate().map_err(EngineError::Config)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::persona::{Composition, ValueComplexity};
    use crate::values::HigherOrderCategory;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = RunConfig::default();
        let back = RunConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(cfg.stage1.rounds, 25);
        assert_eq!(cfg.stage2.comment_k, 3);
    }

    #[test]
    fn partial_config() {
        let cfg = RunConfig::from_toml(
            "[population]\ngroup_size = 6\ncomplexity = \"Multi\"\nseed = 3\n\
             [population.composition]\nHomogeneous = \"Conservation\"\n\
             [stage1]\nrounds = 2\n",
        )
        .unwrap();
        assert_eq!(cfg.population.composition, Composition::Homogeneous(HigherOrderCategory::Conservation));
        assert_eq!(cfg.population.complexity, ValueComplexity::Multi);
        assert_eq!(cfg.stage1.rounds, 2);
        assert_eq!(cfg.stage1.max_turns, 6);
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        assert!(RunConfig::from_toml("[stage1]\nroundz = 3\n").is_err());
        assert!(RunConfig::from_toml("[stage1]\nmax_turns = 0\n").is_err());
    }
}
