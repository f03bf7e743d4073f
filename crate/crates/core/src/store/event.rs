use serde::{Deserialize, Serialize};

use crate::engine::{RuleProposal, SurveyResponse};
use crate::llm::RequestTag;
use crate::persona::{AgentId, PersonaProfile};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Phase {
    Persona,
    Invite,
    Resolve,
    Converse,
    Survey,
    Proposal,
    Comment,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InviteOutcome {
    Accepted,
    Declined,
    /// The invitee was already in a conversation.
    Ignored,
    /// The inviter became busy before the invitee answered.
    Withdrawn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EndReason {
    Closed,
    MaxTurns,
    BackendError,
}

/// Kind-specific event payload. Serialized as `"kind"` plus `"payload"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum EventBody {
    PersonaBuilt {
        profile: PersonaProfile,
    },
    Invite {
        from: AgentId,
        to: Option<AgentId>,
    },
    InviteOutcome {
        from: AgentId,
        to: AgentId,
        outcome: InviteOutcome,
    },
    ConversationStart {
        conversation_id: String,
        participants: [AgentId; 2],
    },
    Turn {
        conversation_id: String,
        index: u32,
        speaker: AgentId,
        text: String,
    },
    ConversationEnd {
        conversation_id: String,
        participants: [AgentId; 2],
        turns: u32,
        reason: EndReason,
    },
    MemoryMerge {
        agent_id: AgentId,
        merge_count: u32,
        fallback: bool,
    },
    ImpressionUpdate {
        agent_id: AgentId,
        other_id: AgentId,
        affinity: f64,
        text: String,
    },
    SelfPerceptionUpdate {
        agent_id: AgentId,
        changed: bool,
        previous: String,
        current: String,
    },
    Survey {
        response: SurveyResponse,
    },
    RuleProposed {
        proposal: RuleProposal,
    },
    RuleComment {
        agent_id: AgentId,
        target_agent: AgentId,
        rule_index: u8,
        text: String,
    },
    BackendCall {
        tag: RequestTag,
        request_hash: String,
        response: Option<String>,
        error: Option<String>,
        prompt_tokens: u32,
        completion_tokens: u32,
    },
    Warning {
        message: String,
    },
}

impl EventBody {
    pub fn kind(&self) -> &'static str {
        match self {
            EventBody::PersonaBuilt { .. } => "PersonaBuilt",
            EventBody::Invite { .. } => "Invite",
            EventBody::InviteOutcome { .. } => "InviteOutcome",
            EventBody::ConversationStart { .. } => "ConversationStart",
            EventBody::Turn { .. } => "Turn",
            EventBody::ConversationEnd { .. } => "ConversationEnd",
            EventBody::MemoryMerge { .. } => "MemoryMerge",
            EventBody::ImpressionUpdate { .. } => "ImpressionUpdate",
            EventBody::SelfPerceptionUpdate { .. } => "SelfPerceptionUpdate",
            EventBody::Survey { .. } => "Survey",
            EventBody::RuleProposed { .. } => "RuleProposed",
            EventBody::RuleComment { .. } => "RuleComment",
            EventBody::BackendCall { .. } => "BackendCall",
            EventBody::Warning { .. } => "Warning",
        }
    }

    /// Whether this kind of event may be recorded during `phase`.
    pub fn legal_in(&self, phase: Phase) -> bool {
        use Phase::*;
        match self {
            EventBody::PersonaBuilt { .. } => phase == Persona,
            EventBody::Invite { .. } => phase == Invite,
            EventBody::InviteOutcome { .. } => phase == Resolve,
            EventBody::ConversationStart { .. } | EventBody::Turn { .. } | EventBody::ConversationEnd { .. } => {
                phase == Converse
            }
            // Memory and impression updates follow conversations; memory
            // merges can also happen while recalling context elsewhere.
            EventBody::MemoryMerge { .. } => phase == Converse,
            EventBody::ImpressionUpdate { .. } | EventBody::SelfPerceptionUpdate { .. } => phase == Converse,
            EventBody::Survey { .. } => phase == Survey,
            EventBody::RuleProposed { .. } => phase == Proposal,
            EventBody::RuleComment { .. } => phase == Comment,
            EventBody::BackendCall { .. } | EventBody::Warning { .. } => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimEvent {
    pub seq: u64,
    pub schema_version: u32,
    /// Stage 1 round (1-based); 0 outside Stage 1.
    pub round: u32,
    pub phase: Phase,
    #[serde(flatten)]
    pub body: EventBody,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wire_shape() {
        let ev = SimEvent {
            seq: 3,
            schema_version: SCHEMA_VERSION,
            round: 2,
            phase: Phase::Invite,
            body: EventBody::Invite { from: AgentId::new("agent_01"), to: None },
        };
        let line = serde_json::to_string(&ev).unwrap();
        assert_eq!(
            line,
            r#"{"seq":3,"schema_version":1,"round":2,"phase":"Invite","kind":"Invite","payload":{"from":"agent_01","to":null}}"#
        );
        let back: SimEvent = serde_json::from_str(&line).unwrap();
        assert_eq!(back, ev);
    }

    #[test]
    fn phase_legality() {
        let turn = EventBody::Turn {
            conversation_id: "c".into(),
            index: 0,
            speaker: AgentId::new("a"),
            text: "hi".into(),
        };
        assert!(turn.legal_in(Phase::Converse));
        assert!(!turn.legal_in(Phase::Survey));
        assert!(EventBody::Warning { message: "x".into() }.legal_in(Phase::Persona));
    }
}
