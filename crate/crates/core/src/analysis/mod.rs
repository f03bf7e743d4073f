//! Measurements derived from a run's event log: the conversation graph and
//! its structure, participation balance, topical continuity, value drift,
//! rule ideologies and the composite emergence index.

mod graph;
mod ideology;
mod metrics;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{RuleProposal, RunConfig};
use crate::llm::LlmBackend;
use crate::persona::AgentId;
use crate::store::{self, EventBody, SimEvent, StoreError, METRICS_DIR};
use crate::values::ValueType;

pub use graph::{
    assortativity, bridge_fraction, build_graph, detect_communities, modularity, normalize, ConversationGraph, Node,
    Partition,
};
pub use ideology::{
    classify_ideology, classify_rubric, fixture_corpus, ideology_distribution, label_proposals, rubric_scores,
    Ideology, IdeologyDistribution, IdeologyMode, LabeledRule, IDEOLOGY_FIXTURES, NO_VALUE_ROW, RUBRIC_THRESHOLD,
};
pub use metrics::{
    conversation_continuity, conversation_turns, drift_between, entropy_bits, gini, jaccard, participation_balance,
    surveys_by_agent, topical_continuity, value_drift, DriftSeries, Participation,
};

pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("event log has no persona records")]
    MissingPopulation,
    #[error("conversation references unknown agent {0}")]
    UnknownAgent(AgentId),
    #[error("all nodes share one label")]
    DegenerateLabels,
    #[error("graph has no edges")]
    EmptyGraph,
    #[error("no conversation has two turns with content words")]
    NoEligibleConversations,
    #[error("need at least 2 surveys, got {0}")]
    TooFewSurveys(usize),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("io error on {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("csv error: {0}")]
    Csv(String),
}

impl From<csv::Error> for AnalysisError {
    fn from(e: csv::Error) -> Self {
        AnalysisError::Csv(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub ideology_mode: IdeologyMode,
    /// Weights of depth, continuity, balance and rule diversity.
    pub emergence_weights: [f64; 4],
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self { ideology_mode: IdeologyMode::Rubric, emergence_weights: [0.25; 4] }
    }
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<(), String> {
        let w = &self.emergence_weights;
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) || w.iter().sum::<f64>() <= 0.0 {
            return Err("analysis.emergence_weights must be non-negative with a positive sum".into());
        }
        Ok(())
    }
}

pub const EMERGENCE_FORMULA: &str = "(w1*depth + w2*continuity + w3*(1 - gini) + w4*ideology_entropy/log2(3)) / (w1+w2+w3+w4), \
     depth = mean utterances per conversation / max_turns";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmergenceComponents {
    pub depth: Option<f64>,
    pub continuity: Option<f64>,
    pub balance: Option<f64>,
    pub rule_diversity: Option<f64>,
}

impl EmergenceComponents {
    fn as_array(&self) -> [Option<f64>; 4] {
        [self.depth, self.continuity, self.balance, self.rule_diversity]
    }
}

/// Weighted mean of the components; `None` when any is missing.
pub fn emergence_index(c: &EmergenceComponents, weights: &[f64; 4]) -> Option<f64> {
    let vals: Vec<f64> = c.as_array().into_iter().collect::<Option<_>>()?;
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return None;
    }
    Some(vals.iter().zip(weights).map(|(v, w)| v * w).sum::<f64>() / total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assortativity {
    /// 1.0 by convention when `degenerate`.
    pub value: Option<f64>,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledProposal {
    pub proposal: RuleProposal,
    pub label: Ideology,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub population: Vec<Node>,
    pub edges: Vec<(AgentId, AgentId, f64)>,
    pub participation: Participation,
    pub assortativity_by_category: Assortativity,
    pub modularity: f64,
    pub partition: BTreeMap<AgentId, usize>,
    pub bridge_edge_fraction: f64,
    pub topical_continuity: Option<f64>,
    pub drift_series: BTreeMap<AgentId, DriftSeries>,
    /// Mean stability over agents with at least two surveys.
    pub value_stability: Option<f64>,
    pub conversations: usize,
    pub mean_conversation_turns: Option<f64>,
    pub rules: Vec<LabeledProposal>,
    pub ideology: IdeologyDistribution,
    pub emergence_components: EmergenceComponents,
    pub emergence_weights: [f64; 4],
    pub emergence_index: Option<f64>,
    pub emergence_formula: String,
    pub warnings: Vec<String>,
}

/// Label used for category assortativity: the first value's category, or
/// `NoValue`.
pub fn category_label(n: &Node) -> String {
    n.category.map_or(NO_VALUE_ROW.to_string(), |c| c.name().to_string())
}

pub fn analyze(
    events: &[SimEvent],
    cfg: &AnalysisConfig,
    max_turns: u32,
    backend: Option<&dyn LlmBackend>,
) -> Result<MetricReport, AnalysisError> {
    let mut warnings = Vec::new();
    let g = build_graph(events)?;
    let ids: Vec<AgentId> = g.nodes.iter().map(|n| n.agent_id.clone()).collect();

    let participation = participation_balance(events, &ids);
    if participation.degenerate {
        warnings.push("no utterances recorded; participation is degenerate".into());
    }

    let labels: Vec<String> = g.nodes.iter().map(category_label).collect();
    let assort = match assortativity(&g, &labels) {
        Ok(v) => Assortativity { value: Some(v), degenerate: false },
        Err(AnalysisError::DegenerateLabels) => {
            warnings.push("all agents share one category; assortativity reported as 1.0 by convention".into());
            Assortativity { value: Some(1.0), degenerate: true }
        }
        Err(e) => {
            warnings.push(format!("assortativity unavailable: {e}"));
            Assortativity { value: None, degenerate: true }
        }
    };

    let partition = detect_communities(&g);
    let q = modularity(&g, &partition);
    let bridges = bridge_fraction(&g, &partition);
    if g.edges.is_empty() {
        warnings.push("conversation graph has no edges".into());
    }

    let continuity = match topical_continuity(events) {
        Ok(c) => Some(c),
        Err(e) => {
            warnings.push(format!("topical continuity unavailable: {e}"));
            None
        }
    };

    let mut drift_series = BTreeMap::new();
    for (agent, surveys) in surveys_by_agent(events) {
        match value_drift(&surveys) {
            Ok(d) => {
                drift_series.insert(agent, d);
            }
            Err(e) => warnings.push(format!("{agent}: drift unavailable: {e}")),
        }
    }
    let value_stability = (!drift_series.is_empty())
        .then(|| drift_series.values().map(|d| d.stability).sum::<f64>() / drift_series.len() as f64);

    let turns: Vec<u32> = events
        .iter()
        .filter_map(|e| match &e.body {
            EventBody::ConversationEnd { turns, .. } => Some(*turns),
            _ => None,
        })
        .collect();
    let mean_turns = (!turns.is_empty()).then(|| turns.iter().sum::<u32>() as f64 / turns.len() as f64);

    let proposals: Vec<RuleProposal> = events
        .iter()
        .filter_map(|e| match &e.body {
            EventBody::RuleProposed { proposal } => Some(proposal.clone()),
            _ => None,
        })
        .collect();
    let labels = label_proposals(&proposals, cfg.ideology_mode, backend);
    let values_of = |id: &AgentId| g.index_of(id).map(|i| g.nodes[i].values.clone()).unwrap_or_default();
    let pairs: Vec<(Vec<ValueType>, Ideology)> =
        proposals.iter().zip(&labels).map(|(p, l)| (values_of(&p.agent_id), *l)).collect();
    let ideology = ideology_distribution(&pairs);
    if proposals.is_empty() {
        warnings.push("no rule proposals recorded".into());
    }

    let components = EmergenceComponents {
        depth: mean_turns.filter(|_| max_turns > 0).map(|t| (t / max_turns as f64).min(1.0)),
        continuity,
        balance: (!participation.degenerate).then(|| 1.0 - participation.gini),
        rule_diversity: (!proposals.is_empty()).then(|| (ideology.entropy_bits / 3f64.log2()).min(1.0)),
    };
    let index = emergence_index(&components, &cfg.emergence_weights);
    if index.is_none() {
        warnings.push("emergence index absent: a component is missing".into());
    }

    Ok(MetricReport {
        edges: g
            .edges
            .iter()
            .map(|(&(a, b), &w)| (g.nodes[a].agent_id.clone(), g.nodes[b].agent_id.clone(), w))
            .collect(),
        partition: ids.iter().cloned().zip(partition.iter().copied()).collect(),
        population: g.nodes.clone(),
        participation,
        assortativity_by_category: assort,
        modularity: q,
        bridge_edge_fraction: bridges,
        topical_continuity: continuity,
        drift_series,
        value_stability,
        conversations: turns.len(),
        mean_conversation_turns: mean_turns,
        rules: proposals.into_iter().zip(labels).map(|(proposal, label)| LabeledProposal { proposal, label }).collect(),
        ideology,
        emergence_components: components,
        emergence_weights: cfg.emergence_weights,
        emergence_index: index,
        emergence_formula: EMERGENCE_FORMULA.to_string(),
        warnings,
    })
}

impl MetricReport {
    /// Scalars outside their documented ranges, as `name=value`.
    pub fn range_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut check = |name: &str, v: Option<f64>, lo: f64, hi: f64| {
            if let Some(v) = v {
                if !(v >= lo - 1e-9 && v <= hi + 1e-9) {
                    out.push(format!("{name}={v}"));
                }
            }
        };
        let n = self.population.len().max(1) as f64;
        check("gini", Some(self.participation.gini), 0.0, 1.0);
        check("entropy_bits", Some(self.participation.entropy_bits), 0.0, n.log2());
        check("assortativity", self.assortativity_by_category.value, -1.0, 1.0);
        check("modularity", Some(self.modularity), -0.5, 1.0);
        check("bridge_edge_fraction", Some(self.bridge_edge_fraction), 0.0, 1.0);
        check("topical_continuity", self.topical_continuity, 0.0, 1.0);
        check("value_stability", self.value_stability, 0.0, 1.0);
        check("ideology_entropy_bits", Some(self.ideology.entropy_bits), 0.0, 3f64.log2());
        for (name, v) in ["depth", "continuity", "balance", "rule_diversity"].iter().zip(self.emergence_components.as_array()) {
            check(name, v, 0.0, 1.0);
        }
        check("emergence_index", self.emergence_index, 0.0, 1.0);
        for d in self.drift_series.values() {
            for x in &d.drift {
                check("drift", Some(*x), 0.0, 1.0);
            }
        }
        out
    }

    /// Flat scalars used by the cross-run report.
    pub fn scalars(&self) -> Vec<(&'static str, Option<f64>)> {
        let pct = |i: Ideology| {
            let total: usize = self.ideology.counts.values().sum();
            (total > 0).then(|| self.ideology.percentages[&i])
        };
        vec![
            ("gini", Some(self.participation.gini)),
            ("entropy_bits", Some(self.participation.entropy_bits)),
            ("assortativity", self.assortativity_by_category.value),
            ("modularity", Some(self.modularity)),
            ("bridge_edge_fraction", self.bridge_fraction_if_edges()),
            ("topical_continuity", self.topical_continuity),
            ("value_stability", self.value_stability),
            ("mean_conversation_turns", self.mean_conversation_turns),
            ("pct_rousseauian", pct(Ideology::Rousseauian)),
            ("pct_lockean", pct(Ideology::Lockean)),
            ("pct_hobbesian", pct(Ideology::Hobbesian)),
            ("emergence_index", self.emergence_index),
        ]
    }

    fn bridge_fraction_if_edges(&self) -> Option<f64> {
        (!self.edges.is_empty()).then_some(self.bridge_edge_fraction)
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> AnalysisError + '_ {
    move |e| AnalysisError::Io { path: path.to_path_buf(), message: e.to_string() }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, AnalysisError> {
    Ok(csv::Writer::from_writer(fs::File::create(path).map_err(io_err(path))?))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes `report.json` and the flat CSV exports into `dir`.
pub fn write_metrics(dir: &Path, report: &MetricReport, events: &[SimEvent]) -> Result<(), AnalysisError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    store::write_json(&dir.join(REPORT_FILE), report)?;

    let mut w = csv_writer(&dir.join("edges.csv"))?;
    w.write_record(["source", "target", "weight"])?;
    for (a, b, weight) in &report.edges {
        w.write_record([a.as_str(), b.as_str(), &weight.to_string()])?;
    }
    w.flush().map_err(io_err(dir))?;

    let mut w = csv_writer(&dir.join("nodes.csv"))?;
    w.write_record(["agent_id", "display_name", "values", "category", "community"])?;
    for n in &report.population {
        let values: Vec<&str> = n.values.iter().map(|v| v.name()).collect();
        w.write_record([
            n.agent_id.as_str(),
            &n.display_name,
            &values.join(";"),
            &category_label(n),
            &report.partition[&n.agent_id].to_string(),
        ])?;
    }
    w.flush().map_err(io_err(dir))?;

    let mut w = csv_writer(&dir.join("participation.csv"))?;
    w.write_record(["agent_id", "utterances"])?;
    for (a, c) in &report.participation.utterances {
        w.write_record([a.as_str(), &c.to_string()])?;
    }
    w.flush().map_err(io_err(dir))?;

    let mut w = csv_writer(&dir.join("surveys.csv"))?;
    let mut header = vec!["agent_id".to_string(), "round".to_string()];
    header.extend(ValueType::ALL.iter().map(|v| v.name().to_string()));
    w.write_record(&header)?;
    for (agent, surveys) in surveys_by_agent(events) {
        for s in surveys {
            let mut row = vec![agent.to_string(), s.round.to_string()];
            row.extend(ValueType::ALL.iter().map(|v| opt(s.scores.get(v).copied())));
            w.write_record(&row)?;
        }
    }
    w.flush().map_err(io_err(dir))?;

    let mut w = csv_writer(&dir.join("drift.csv"))?;
    w.write_record(["agent_id", "round", "drift"])?;
    for (agent, d) in &report.drift_series {
        for (r, x) in d.rounds.iter().zip(&d.drift) {
            w.write_record([agent.as_str(), &r.to_string(), &x.to_string()])?;
        }
    }
    w.flush().map_err(io_err(dir))?;

    let mut w = csv_writer(&dir.join("ideology.csv"))?;
    w.write_record(["agent_id", "rule_index", "label", "text"])?;
    for r in &report.rules {
        w.write_record([
            r.proposal.agent_id.as_str(),
            &r.proposal.rule_index.to_string(),
            &r.label.to_string(),
            &r.proposal.text,
        ])?;
    }
    w.flush().map_err(io_err(dir))?;

    let mut w = csv_writer(&dir.join("value_ideology.csv"))?;
    let mut header = vec!["value".to_string()];
    header.extend(Ideology::ALL.iter().map(|i| i.to_string()));
    w.write_record(&header)?;
    for (row, counts) in &report.ideology.value_matrix {
        let mut rec = vec![row.clone()];
        rec.extend(Ideology::ALL.iter().map(|i| counts.get(i).copied().unwrap_or(0).to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(io_err(dir))?;
    Ok(())
}

/// Analyzes a stored run and writes its metrics under `metrics/`.
pub fn analyze_run(dir: &Path, backend: Option<&dyn LlmBackend>) -> Result<MetricReport, AnalysisError> {
    let (manifest, events) = store::load_run(dir)?;
    let report = analyze(&events, &manifest.config.analysis, manifest.config.stage1.max_turns, backend)?;
    write_metrics(&dir.join(METRICS_DIR), &report, &events)?;
    Ok(report)
}

/// Experimental condition of a run: group size, composition, complexity.
pub fn condition_of(cfg: &RunConfig) -> String {
    let p = &cfg.population;
    format!("n{}-{}-{:?}", p.group_size, p.composition, p.complexity)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: Option<f64>,
    /// Sample standard deviation; `None` with fewer than two values.
    pub stddev: Option<f64>,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionRow {
    pub condition: String,
    pub runs: usize,
    pub metrics: BTreeMap<String, MetricSummary>,
}

pub fn summarize(values: &[f64]) -> MetricSummary {
    let n = values.len();
    let mean = (n > 0).then(|| values.iter().sum::<f64>() / n as f64);
    let stddev = mean.filter(|_| n > 1).map(|m| {
        (values.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    });
    MetricSummary { mean, stddev, n }
}

/// One row per condition, each metric summarized over that condition's runs.
pub fn cross_run_report(runs: &[(RunConfig, MetricReport)]) -> Vec<ConditionRow> {
    let mut grouped: BTreeMap<String, Vec<&MetricReport>> = BTreeMap::new();
    for (cfg, report) in runs {
        grouped.entry(condition_of(cfg)).or_default().push(report);
    }
    grouped
        .into_iter()
        .map(|(condition, reports)| {
            let mut per: BTreeMap<String, Vec<f64>> = BTreeMap::new();
            for r in &reports {
                for (name, v) in r.scalars() {
                    let e = per.entry(name.to_string()).or_default();
                    if let Some(v) = v {
                        e.push(v);
                    }
                }
            }
            ConditionRow {
                condition,
                runs: reports.len(),
                metrics: per.into_iter().map(|(k, v)| (k, summarize(&v))).collect(),
            }
        })
        .collect()
}

/// Writes the cross-run table as CSV with `<metric>_mean` and
/// `<metric>_stddev` columns.
pub fn write_cross_run_csv<W: std::io::Write>(out: W, rows: &[ConditionRow]) -> Result<(), AnalysisError> {
    let names: Vec<String> = rows.first().map(|r| r.metrics.keys().cloned().collect()).unwrap_or_default();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["condition".to_string(), "runs".to_string()];
    for n in &names {
        header.push(format!("{n}_mean"));
        header.push(format!("{n}_stddev"));
    }
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.condition.clone(), r.runs.to_string()];
        for n in &names {
            let s = r.metrics.get(n);
            rec.push(opt(s.and_then(|s| s.mean)));
            rec.push(opt(s.and_then(|s| s.stddev)));
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| AnalysisError::Csv(e.to_string()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn comps(x: f64) -> EmergenceComponents {
        EmergenceComponents { depth: Some(x), continuity: Some(x), balance: Some(x), rule_diversity: Some(x) }
    }

    #[test]
    fn emergence_fixtures() {
        let w = [0.25; 4];
        assert_eq!(emergence_index(&comps(1.0), &w), Some(1.0));
        assert_eq!(emergence_index(&comps(0.0), &w), Some(0.0));
        assert_eq!(emergence_index(&comps(0.5), &w), Some(0.5));
        let missing = EmergenceComponents { continuity: None, ..comps(1.0) };
        assert_eq!(emergence_index(&missing, &w), None);
    }

    #[test]
    fn summarize_uses_sample_stddev() {
        let s = summarize(&[1.0, 2.0, 3.0]);
        assert_eq!((s.mean, s.stddev), (Some(2.0), Some(1.0)));
        assert_eq!(summarize(&[4.0]).stddev, None);
        assert_eq!(summarize(&[]).mean, None);
    }

    #[test]
    fn weights_validated() {
        assert!(AnalysisConfig::default().validate().is_ok());
        let bad = AnalysisConfig { emergence_weights: [0.0; 4], ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
