use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::persona::AgentId;
use crate::store::{EventBody, SimEvent};
use crate::values::{HigherOrderCategory, ValueType};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub agent_id: AgentId,
    pub display_name: String,
    pub values: Vec<ValueType>,
    /// Category of the first value; `None` for the no-value control.
    pub category: Option<HigherOrderCategory>,
}

/// Undirected weighted graph; edge keys are `(i, j)` node indices, `i < j`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConversationGraph {
    pub nodes: Vec<Node>,
    pub edges: BTreeMap<(usize, usize), f64>,
}

/// Community index per node, contiguous from 0.
pub type Partition = Vec<usize>;

impl ConversationGraph {
    /// A graph over `n` anonymous nodes, summing repeated edges.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Self {
        let nodes = (0..n)
            .map(|i| Node { agent_id: AgentId::new(format!("n{i}")), display_name: String::new(), values: vec![], category: None })
            .collect();
        let mut g = ConversationGraph { nodes, edges: BTreeMap::new() };
        for &(a, b, w) in edges {
            g.add_edge(a, b, w);
        }
        g
    }

    pub fn add_edge(&mut self, a: usize, b: usize, w: f64) {
        assert!(a != b && a < self.nodes.len() && b < self.nodes.len(), "edge {a}-{b} is not a valid pair");
        *self.edges.entry((a.min(b), a.max(b))).or_insert(0.0) += w;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.edges.values().sum()
    }

    pub fn degrees(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.nodes.len()];
        for (&(a, b), &w) in &self.edges {
            d[a] += w;
            d[b] += w;
        }
        d
    }

    pub fn index_of(&self, id: &AgentId) -> Option<usize> {
        self.nodes.iter().position(|n| n.agent_id == *id)
    }
}

/// Nodes from the persona records, edges from conversations with at least
/// one turn.
pub fn build_graph(events: &[SimEvent]) -> Result<ConversationGraph, AnalysisError> {
    let mut nodes: Vec<Node> = events
        .iter()
        .filter_map(|e| match &e.body {
            EventBody::PersonaBuilt { profile } => Some(Node {
                agent_id: profile.agent_id.clone(),
                display_name: profile.display_name.clone(),
                values: profile.values.clone(),
                category: profile.primary_category(),
            }),
            _ => None,
        })
        .collect();
    if nodes.is_empty() {
        return Err(AnalysisError::MissingPopulation);
    }
    nodes.sort_by(|a, b| a.agent_id.cmp(&b.agent_id));
    let mut g = ConversationGraph { nodes, edges: BTreeMap::new() };
    for e in events {
        if let EventBody::ConversationEnd { participants: [a, b], turns, .. } = &e.body {
            if *turns == 0 {
                continue;
            }
            let (Some(i), Some(j)) = (g.index_of(a), g.index_of(b)) else {
                return Err(AnalysisError::UnknownAgent(if g.index_of(a).is_none() { a.clone() } else { b.clone() }));
            };
            if i != j {
                g.add_edge(i, j, 1.0);
            }
        }
    }
    Ok(g)
}

/// Relabels communities in order of first appearance.
pub fn normalize(partition: &[usize]) -> Partition {
    let mut map = BTreeMap::new();
    partition
        .iter()
        .map(|c| {
            let next = map.len();
            *map.entry(*c).or_insert(next)
        })
        .collect()
}

/// Weighted Newman-Girvan modularity. 0 for a graph without edges.
pub fn modularity(g: &ConversationGraph, partition: &[usize]) -> f64 {
    assert_eq!(partition.len(), g.len(), "partition must cover every node");
    let m = g.total_weight();
    if m <= 0.0 {
        return 0.0;
    }
    let k = partition.iter().copied().max().map_or(0, |x| x + 1);
    let mut internal = vec![0.0; k];
    let mut degree = vec![0.0; k];
    for (&(a, b), &w) in &g.edges {
        if partition[a] == partition[b] {
            internal[partition[a]] += w;
        }
    }
    for (i, d) in g.degrees().into_iter().enumerate() {
        degree[partition[i]] += d;
    }
    (0..k).map(|c| internal[c] / m - (degree[c] / (2.0 * m)).powi(2)).sum()
}

/// Greedy agglomerative modularity maximization: repeatedly merge the pair
/// of communities with the largest positive gain. Ties go to the pair with
/// the smallest community indices.
pub fn detect_communities(g: &ConversationGraph) -> Partition {
    let n = g.len();
    let m = g.total_weight();
    if n == 0 {
        return Vec::new();
    }
    if m <= 0.0 {
        return (0..n).collect();
    }
    let two_m = 2.0 * m;
    // e[i][j]: fraction of edge ends joining communities i and j (i != j).
    let mut e: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n];
    for (&(a, b), &w) in &g.edges {
        *e[a].entry(b).or_insert(0.0) += w / two_m;
        *e[b].entry(a).or_insert(0.0) += w / two_m;
    }
    let mut a: Vec<f64> = g.degrees().into_iter().map(|d| d / two_m).collect();
    let mut alive = vec![true; n];
    let mut member: Vec<usize> = (0..n).collect();
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..n {
            if !alive[i] {
                continue;
            }
            for (&j, &eij) in &e[i] {
                if j <= i {
                    continue;
                }
                let dq = 2.0 * (eij - a[i] * a[j]);
                if dq > 1e-12 && best.map_or(true, |(b, _, _)| dq > b + 1e-12) {
                    best = Some((dq, i, j));
                }
            }
        }
        let Some((_, i, j)) = best else { break };
        // Merge j into i.
        let ej = std::mem::take(&mut e[j]);
        for (k, w) in ej {
            if k == i {
                continue;
            }
            *e[i].entry(k).or_insert(0.0) += w;
            let ek = &mut e[k];
            let moved = ek.remove(&j).unwrap_or(0.0);
            *ek.entry(i).or_insert(0.0) += moved;
        }
        e[i].remove(&j);
        a[i] += a[j];
        a[j] = 0.0;
        alive[j] = false;
        for c in member.iter_mut() {
            if *c == j {
                *c = i;
            }
        }
    }
    normalize(&member)
}

/// Share of edge weight whose endpoints sit in different communities.
/// 0 for a graph without edges.
pub fn bridge_fraction(g: &ConversationGraph, partition: &[usize]) -> f64 {
    let m = g.total_weight();
    if m <= 0.0 {
        return 0.0;
    }
    let crossing: f64 = g.edges.iter().filter(|((a, b), _)| partition[*a] != partition[*b]).map(|(_, w)| w).sum();
    crossing / m
}

/// Newman attribute assortativity over edge-weighted label pairs.
///
/// With at least two labels present and no edge weight between different
/// labels the coefficient is 1 even when the formula's denominator vanishes.
pub fn assortativity<L: Ord + Clone>(g: &ConversationGraph, labels: &[L]) -> Result<f64, AnalysisError> {
    assert_eq!(labels.len(), g.len(), "one label per node");
    let distinct: std::collections::BTreeSet<&L> = labels.iter().collect();
    if distinct.len() < 2 {
        return Err(AnalysisError::DegenerateLabels);
    }
    let m = g.total_weight();
    if m <= 0.0 {
        return Err(AnalysisError::EmptyGraph);
    }
    let idx: BTreeMap<&L, usize> = distinct.iter().enumerate().map(|(i, l)| (*l, i)).collect();
    let k = idx.len();
    let mut e = vec![vec![0.0; k]; k];
    for (&(a, b), &w) in &g.edges {
        let (la, lb) = (idx[&labels[a]], idx[&labels[b]]);
        e[la][lb] += w / (2.0 * m);
        e[lb][la] += w / (2.0 * m);
    }
    let trace: f64 = (0..k).map(|i| e[i][i]).sum();
    let sum_sq: f64 = (0..k).map(|i| e[i].iter().sum::<f64>().powi(2)).sum();
    let denom = 1.0 - sum_sq;
    if denom.abs() < 1e-12 {
        return Ok(1.0);
    }
    Ok((trace - sum_sq) / denom)
}
