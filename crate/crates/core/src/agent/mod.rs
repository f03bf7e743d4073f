//! Per-agent mutable state: bounded memory, impressions of others and a
//! self-perception that conversations can revise.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{complete_structured, tagged_line, ChatMessage, ChatRequest, LlmError, Recorder, RequestTag, SamplingParams, Schema};
use crate::persona::{AgentId, PersonaProfile};
use crate::prompts;
use crate::store::EventBody;

pub const DEFAULT_MEMORY_SLOTS: usize = 5;
/// Character cap for a merge produced without the backend.
pub const MERGE_FALLBACK_CHARS: usize = 600;

#[derive(Debug, Error, PartialEq)]
pub enum AgentError {
    #[error("refusing to store an empty summary")]
    EmptySummary,
    #[error("an agent cannot form an impression of itself")]
    SelfImpression,
    #[error(transparent)]
    Backend(#[from] LlmError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemorySlot {
    pub summary: String,
    pub last_used_round: u32,
    /// Monotonic tick breaking ties between slots used in the same round.
    pub recency: u64,
    pub source_conversations: Vec<String>,
    pub merge_count: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Impression {
    pub display_name: String,
    /// Always within [-1, 1].
    pub affinity: f64,
    pub text: String,
    pub updated_round: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Action {
    Invited { to: Option<AgentId> },
    Responded { accepted: Option<AgentId> },
    Conversed { conversation_id: String, with: AgentId, turns: u32 },
    Surveyed,
    ProposedRules { count: usize },
    Commented { on: AgentId, rule_index: u8 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionRecord {
    pub round: u32,
    pub action: Action,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub agent_id: AgentId,
    pub profile: PersonaProfile,
    pub self_perception: String,
    pub impressions: BTreeMap<AgentId, Impression>,
    pub memory: Vec<MemorySlot>,
    pub memory_capacity: usize,
    pub action_history: Vec<ActionRecord>,
    pub busy: bool,
    clock: u64,
}

fn truncate_chars(s: &str, max: usize) -> String {
    s.chars().take(max).collect()
}

fn first_words(s: &str, n: usize) -> String {
    s.split_whitespace().take(n).collect::<Vec<_>>().join(" ")
}

fn word_count(s: &str) -> usize {
    s.split_whitespace().count()
}

struct ImpressionReply;

impl Schema for ImpressionReply {
    type Output = (f64, String);

    fn name(&self) -> &'static str {
        "Impression"
    }

    fn parse(&self, reply: &str) -> Option<(f64, String)> {
        let raw = tagged_line(reply, "AFFINITY")?;
        let token: String = raw
            .trim_start_matches('+')
            .chars()
            .take_while(|c| c.is_ascii_digit() || *c == '.' || *c == '-')
            .collect();
        let affinity: f64 = token.parse().ok().filter(|a: &f64| a.is_finite())?;
        let text = tagged_line(reply, "IMPRESSION")
            .map(str::to_string)
            .unwrap_or_else(|| {
                reply
                    .lines()
                    .filter(|l| !l.trim().to_ascii_uppercase().starts_with("AFFINITY"))
                    .collect::<Vec<_>>()
                    .join(" ")
                    .trim()
                    .to_string()
            });
        Some((affinity.clamp(-1.0, 1.0), text))
    }

    fn reminder(&self) -> String {
        "Please answer in exactly this format:\nAFFINITY: <number from -1 to 1>\nIMPRESSION: <one sentence>".into()
    }
}

impl AgentState {
    pub fn new(profile: PersonaProfile, memory_capacity: usize) -> Self {
        let self_perception = if profile.values.is_empty() {
            format!("I am {}, still getting to know this community.", profile.display_name)
        } else {
            let glosses: Vec<&str> = profile.values.iter().map(|v| v.gloss()).collect();
            format!("I am someone who cares about {}.", glosses.join(" and "))
        };
        AgentState {
            agent_id: profile.agent_id.clone(),
            profile,
            self_perception,
            impressions: BTreeMap::new(),
            memory: Vec::new(),
            memory_capacity: memory_capacity.max(2),
            action_history: Vec::new(),
            busy: false,
            clock: 0,
        }
    }

    pub fn system_prompt(&self) -> String {
        prompts::persona_system(&self.profile)
    }

    /// A request carrying this agent's persona as the system message.
    pub fn request(&self, tag: RequestTag, user: String, sampling: &SamplingParams) -> ChatRequest {
        ChatRequest::new(tag, vec![ChatMessage::system(self.system_prompt()), ChatMessage::user(user)], sampling)
    }

    pub fn record(&mut self, round: u32, action: Action) {
        self.action_history.push(ActionRecord { round, action });
    }

    pub fn affinity_towards(&self, other: &AgentId) -> f64 {
        self.impressions.get(other).map_or(0.0, |i| i.affinity)
    }

    fn tick(&mut self) -> u64 {
        self.clock += 1;
        self.clock
    }

    /// Stores a conversation summary. When memory is full the two least
    /// recently used slots are first merged into one.
    pub fn remember(
        &mut self,
        rec: &mut Recorder<'_>,
        summary: &str,
        conversation_id: &str,
        round: u32,
        sampling: &SamplingParams,
    ) -> Result<(), AgentError> {
        let summary = summary.trim();
        if summary.is_empty() {
            return Err(AgentError::EmptySummary);
        }
        if self.memory.len() >= self.memory_capacity {
            self.merge_least_recent(rec, sampling);
        }
        let recency = self.tick();
        self.memory.push(MemorySlot {
            summary: summary.to_string(),
            last_used_round: round,
            recency,
            source_conversations: vec![conversation_id.to_string()],
            merge_count: 0,
        });
        Ok(())
    }

    fn merge_least_recent(&mut self, rec: &mut Recorder<'_>, sampling: &SamplingParams) {
        let mut order: Vec<usize> = (0..self.memory.len()).collect();
        order.sort_by_key(|&i| (self.memory[i].last_used_round, self.memory[i].recency));
        let (i, j) = (order[0].min(order[1]), order[0].max(order[1]));
        let (older, newer) = if (self.memory[i].last_used_round, self.memory[i].recency)
            <= (self.memory[j].last_used_round, self.memory[j].recency)
        {
            (i, j)
        } else {
            (j, i)
        };
        let a = &self.memory[older];
        let b = &self.memory[newer];
        let req = self.request(RequestTag::Summarize, prompts::merge_request(&a.summary, &b.summary), sampling);
        let merged = match rec.complete(&req) {
            Ok(r) if !r.text.trim().is_empty() => Some(r.text.trim().to_string()),
            Ok(_) => None,
            Err(e) => {
                rec.push(EventBody::Warning { message: format!("{}: memory merge failed: {e}", self.agent_id) });
                None
            }
        };
        let fallback = merged.is_none();
        let summary = merged.unwrap_or_else(|| truncate_chars(&format!("{} | {}", a.summary, b.summary), MERGE_FALLBACK_CHARS));
        let mut sources = a.source_conversations.clone();
        sources.extend(b.source_conversations.iter().cloned());
        let slot = MemorySlot {
            summary,
            last_used_round: a.last_used_round.max(b.last_used_round),
            recency: a.recency.max(b.recency),
            source_conversations: sources,
            merge_count: a.merge_count + b.merge_count + 1,
        };
        let merge_count = slot.merge_count;
        self.memory[i] = slot;
        self.memory.remove(j);
        rec.push(EventBody::MemoryMerge { agent_id: self.agent_id.clone(), merge_count, fallback });
    }

    /// Assembles the prompt context: persona, self-perception, impressions
    /// (`focus` first) and memories, most recent first. Only content words
    /// count against `budget_words`; the first piece that does not fit is
    /// cut to the remaining budget and nothing after it is included.
    /// Included memory slots count as used in `round`.
    pub fn recall_context(&mut self, round: u32, budget_words: usize, focus: Option<&AgentId>) -> String {
        enum Piece {
            About(String),
            SelfView(String),
            Impression(String),
            Memory(usize, String),
        }
        let mut pieces = vec![Piece::About(self.profile.narrative.clone()), Piece::SelfView(self.self_perception.clone())];
        let mut imps: Vec<(&AgentId, &Impression)> = self.impressions.iter().collect();
        imps.sort_by(|a, b| {
            let fa = Some(a.0) == focus;
            let fb = Some(b.0) == focus;
            fb.cmp(&fa).then(b.1.affinity.abs().total_cmp(&a.1.affinity.abs())).then(a.0.cmp(b.0))
        });
        for (id, imp) in imps.into_iter().take(MAX_IMPRESSIONS) {
            pieces.push(Piece::Impression(format!("{} ({id}) affinity {:.2}: {}", imp.display_name, imp.affinity, imp.text)));
        }
        let mut mem_order: Vec<usize> = (0..self.memory.len()).collect();
        mem_order.sort_by_key(|&i| std::cmp::Reverse((self.memory[i].last_used_round, self.memory[i].recency)));
        for i in mem_order {
            pieces.push(Piece::Memory(i, self.memory[i].summary.clone()));
        }

        let mut left = budget_words;
        let mut about = String::new();
        let mut self_view = String::new();
        let mut imp_lines = Vec::new();
        let mut mem_lines = Vec::new();
        let mut used = Vec::new();
        for piece in pieces {
            if left == 0 {
                break;
            }
            let text = match &piece {
                Piece::About(t) | Piece::SelfView(t) | Piece::Impression(t) | Piece::Memory(_, t) => t,
            };
            let n = word_count(text);
            let (kept, cut) = if n <= left { (text.clone(), false) } else { (first_words(text, left), true) };
            left -= n.min(left);
            match piece {
                Piece::About(_) => about = kept,
                Piece::SelfView(_) => self_view = kept,
                Piece::Impression(_) => imp_lines.push(kept),
                Piece::Memory(i, _) => {
                    used.push(i);
                    mem_lines.push(format!("(round {}) {kept}", self.memory[i].last_used_round));
                }
            }
            if cut {
                break;
            }
        }

        // Fresh ticks in old-recency order keep the relative order stable.
        used.sort_by_key(|&i| self.memory[i].recency);
        for i in used {
            let t = self.tick();
            self.memory[i].last_used_round = round;
            self.memory[i].recency = t;
        }

        let mut out = format!("ABOUT YOU: {about}");
        if !self_view.is_empty() {
            out.push_str(&format!("\nHOW YOU SEE YOURSELF: {self_view}"));
        }
        if !imp_lines.is_empty() {
            out.push_str("\nPEOPLE YOU KNOW:");
            for l in imp_lines {
                out.push_str(&format!("\n- {l}"));
            }
        }
        if !mem_lines.is_empty() {
            out.push_str("\nYOUR MEMORIES:");
            for l in mem_lines {
                out.push_str(&format!("\n- {l}"));
            }
        }
        out
    }

    /// Asks whether a conversation changed how the agent sees itself. On a
    /// backend failure the self-perception is left unchanged.
    pub fn update_self_perception(&mut self, rec: &mut Recorder<'_>, summary: &str, sampling: &SamplingParams) {
        let req = self.request(
            RequestTag::SelfPerceptionUpdate,
            prompts::self_perception_request(&self.self_perception, summary),
            sampling,
        );
        let reply = match rec.complete(&req) {
            Ok(r) => r.text,
            Err(e) => {
                rec.push(EventBody::Warning { message: format!("{}: self-perception update failed: {e}", self.agent_id) });
                return;
            }
        };
        let trimmed = reply.trim();
        let updated = if trimmed.to_ascii_lowercase().starts_with("no change") {
            None
        } else {
            tagged_line(trimmed, "SELF").unwrap_or(trimmed).trim().to_string().into()
        }
        .filter(|s: &String| !s.is_empty());
        let previous = self.self_perception.clone();
        let changed = matches!(&updated, Some(s) if *s != previous);
        if let Some(s) = updated {
            self.self_perception = s;
        }
        rec.push(EventBody::SelfPerceptionUpdate {
            agent_id: self.agent_id.clone(),
            changed,
            previous,
            current: self.self_perception.clone(),
        });
    }

    /// Revises the impression of `other` from what they said. Unparsable
    /// replies and backend failures keep the previous impression.
    pub fn update_impression(
        &mut self,
        rec: &mut Recorder<'_>,
        other: &AgentId,
        other_name: &str,
        their_words: &[&str],
        round: u32,
        sampling: &SamplingParams,
    ) -> Result<(), AgentError> {
        if *other == self.agent_id {
            return Err(AgentError::SelfImpression);
        }
        let previous = self.impressions.get(other).map(|i| (i.affinity, i.text.as_str()));
        let req = self.request(
            RequestTag::ImpressionUpdate,
            prompts::impression_request(&format!("{other_name} ({other})"), their_words, previous),
            sampling,
        );
        match complete_structured(rec, &req, &ImpressionReply) {
            Ok((affinity, text)) => {
                self.impressions.insert(
                    other.clone(),
                    Impression { display_name: other_name.to_string(), affinity, text: text.clone(), updated_round: round },
                );
                rec.push(EventBody::ImpressionUpdate {
                    agent_id: self.agent_id.clone(),
                    other_id: other.clone(),
                    affinity,
                    text,
                });
            }
            Err(e) => rec.push(EventBody::Warning {
                message: format!("{}: impression of {other} kept: {e}", self.agent_id),
            }),
        }
        Ok(())
    }
}

/// Impressions listed in a context, strongest feelings first.
pub const MAX_IMPRESSIONS: usize = 6;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{FnBackend, LlmBackend, MockBackend};
    use crate::persona::ValueComplexity;
    use crate::values::ValueType;

    fn profile(id: &str, narrative: &str) -> PersonaProfile {
        PersonaProfile {
            agent_id: AgentId::new(id),
            display_name: "Ada".into(),
            values: vec![ValueType::Benevolence],
            narrative: narrative.into(),
            elicitation_trace: vec![],
            complexity: ValueComplexity::Single,
        }
    }

    fn state(capacity: usize) -> AgentState {
        AgentState::new(profile("agent_01", "I help my neighbours whenever I can."), capacity)
    }

    fn failing() -> FnBackend<impl Fn(&ChatRequest) -> Result<String, LlmError>> {
        FnBackend(|_: &ChatRequest| Err(LlmError::Timeout))
    }

    #[test]
    fn memory_stays_bounded_and_merges_are_counted() {
        let mock = MockBackend::new(1);
        let mut rec = Recorder::new(&mock);
        let mut s = state(3);
        let p = SamplingParams::default();
        for k in 0..10 {
            s.remember(&mut rec, &format!("summary {k}"), &format!("c{k}"), k, &p).unwrap();
            assert!(s.memory.len() <= 3);
        }
        let total_sources: usize = s.memory.iter().map(|m| m.source_conversations.len()).sum();
        assert_eq!(total_sources, 10);
        let merges = rec.events().iter().filter(|e| matches!(e, EventBody::MemoryMerge { .. })).count();
        assert_eq!(merges, 7);
        assert!(s.memory.iter().any(|m| m.summary.contains('|')));
    }

    #[test]
    fn merge_falls_back_to_truncated_concatenation() {
        let b = failing();
        let mut rec = Recorder::new(&b);
        let mut s = state(2);
        let p = SamplingParams::default();
        let long = "word ".repeat(200);
        s.remember(&mut rec, &long, "c0", 0, &p).unwrap();
        s.remember(&mut rec, &long, "c1", 1, &p).unwrap();
        s.remember(&mut rec, "fresh", "c2", 2, &p).unwrap();
        assert_eq!(s.memory.len(), 2);
        assert_eq!(s.memory[0].summary.chars().count(), MERGE_FALLBACK_CHARS);
        assert!(rec.events().iter().any(|e| matches!(e, EventBody::MemoryMerge { fallback: true, .. })));
        assert!(rec.events().iter().any(|e| matches!(e, EventBody::Warning { .. })));
    }

    #[test]
    fn empty_summary_rejected() {
        let mock = MockBackend::new(1);
        let mut rec = Recorder::new(&mock);
        let mut s = state(2);
        assert_eq!(s.remember(&mut rec, "  ", "c", 0, &SamplingParams::default()), Err(AgentError::EmptySummary));
    }

    #[test]
    fn context_budget_truncates_persona_first() {
        let mock = MockBackend::new(1);
        let mut rec = Recorder::new(&mock);
        let mut s = state(4);
        s.remember(&mut rec, "we talked about gardens", "c0", 1, &SamplingParams::default()).unwrap();
        let ctx = s.recall_context(2, 3, None);
        assert_eq!(ctx, "ABOUT YOU: I help my");
        assert_eq!(s.memory[0].last_used_round, 1);

        let exact = word_count(&s.profile.narrative) + word_count(&s.self_perception) + 4;
        let ctx = s.recall_context(3, exact, None);
        assert!(ctx.ends_with("- (round 1) we talked about gardens"), "{ctx}");
        assert_eq!(s.memory[0].last_used_round, 3);
    }

    #[test]
    fn recall_keeps_relative_order() {
        let mock = MockBackend::new(1);
        let mut rec = Recorder::new(&mock);
        let mut s = state(4);
        let p = SamplingParams::default();
        for k in 0..3 {
            s.remember(&mut rec, &format!("memory {k}"), &format!("c{k}"), 1, &p).unwrap();
        }
        let a = s.recall_context(2, 1000, None);
        let b = s.recall_context(3, 1000, None);
        assert_eq!(a.replace("round 1", "round 2"), b);
    }

    #[test]
    fn impression_is_clamped_and_self_rejected() {
        let b = FnBackend(|_: &ChatRequest| Ok("AFFINITY: 2.0\nIMPRESSION: great".to_string()));
        let mut rec = Recorder::new(&b);
        let mut s = state(2);
        let p = SamplingParams::default();
        let other = AgentId::new("agent_02");
        s.update_impression(&mut rec, &other, "Bo", &["hello"], 1, &p).unwrap();
        assert_eq!(s.impressions[&other].affinity, 1.0);
        let me = s.agent_id.clone();
        assert_eq!(s.update_impression(&mut rec, &me, "Ada", &[], 1, &p), Err(AgentError::SelfImpression));
    }

    #[test]
    fn unparsable_impression_keeps_previous() {
        let b = FnBackend(|_: &ChatRequest| Ok("I like them".to_string()));
        let mut rec = Recorder::new(&b);
        let mut s = state(2);
        let other = AgentId::new("agent_02");
        s.impressions.insert(
            other.clone(),
            Impression { display_name: "Bo".into(), affinity: 0.4, text: "kind".into(), updated_round: 1 },
        );
        s.update_impression(&mut rec, &other, "Bo", &["hi"], 2, &SamplingParams::default()).unwrap();
        assert_eq!(s.impressions[&other].affinity, 0.4);
        assert_eq!(rec.events().iter().filter(|e| matches!(e, EventBody::BackendCall { .. })).count(), 2);
    }

    #[test]
    fn self_perception_updates() {
        let p = SamplingParams::default();
        let mut s = state(2);
        let same = s.self_perception.clone();
        let b = FnBackend(|_: &ChatRequest| Ok("NO CHANGE".to_string()));
        let mut rec = Recorder::new(&b);
        s.update_self_perception(&mut rec, "we chatted", &p);
        assert_eq!(s.self_perception, same);
        let b = FnBackend(|_: &ChatRequest| Ok("SELF: I am bolder now.".to_string()));
        let mut rec = Recorder::new(&b);
        s.update_self_perception(&mut rec, "we chatted", &p);
        assert_eq!(s.self_perception, "I am bolder now.");
        let f = failing();
        let mut rec = Recorder::new(&f);
        s.update_self_perception(&mut rec, "we chatted", &p);
        assert_eq!(s.self_perception, "I am bolder now.");
        let _: &dyn LlmBackend = &f;
    }
}
