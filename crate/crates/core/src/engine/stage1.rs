use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{administer_survey, check_phase_health, EngineError, RunConfig};
use crate::agent::{Action, AgentState};
use crate::llm::{complete_structured, AgentChoice, ChatMessage, ChatRequest, LlmBackend, Recorder, RequestTag, SamplingParams};
use crate::persona::AgentId;
use crate::prompts::{self, markers, CandidateLine};
use crate::store::{EndReason, EventBody, EventLog, InviteOutcome, Phase};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stage1Stats {
    pub rounds: u32,
    pub invitations: usize,
    pub conversations: usize,
    pub turns: usize,
    pub surveys: usize,
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    backend: &'a dyn LlmBackend,
    sampling: SamplingParams,
    roster: Vec<(AgentId, String)>,
}

impl Ctx<'_> {
    fn budget(&self) -> usize {
        self.cfg.stage1.context_budget_words
    }
}

fn append_phase(
    log: &mut EventLog,
    round: u32,
    phase: Phase,
    units: Vec<Vec<EventBody>>,
) -> Result<(), EngineError> {
    let all: Vec<EventBody> = units.into_iter().flatten().collect();
    let health = check_phase_health(&all, phase, round);
    log.append_all(round, phase, all)?;
    log.flush()?;
    health
}

/// Runs `cfg.stage1.rounds` rounds of invite, resolve, converse and, on
/// multiples of the survey interval, survey.
pub fn run_stage1(
    states: &mut Vec<AgentState>,
    cfg: &RunConfig,
    backend: &dyn LlmBackend,
    log: &mut EventLog,
) -> Result<Stage1Stats, EngineError> {
    let ctx = Ctx {
        cfg,
        backend,
        sampling: cfg.backend.sampling.clone(),
        roster: states.iter().map(|s| (s.agent_id.clone(), s.profile.display_name.clone())).collect(),
    };
    let mut stats = Stage1Stats::default();
    for round in 1..=cfg.stage1.rounds {
        let targets = invite_phase(states, &ctx, round, log)?;
        stats.invitations += targets.iter().filter(|t| t.is_some()).count();
        let pairs = resolve_phase(states, &ctx, round, &targets, log)?;
        let turns = converse_phase(states, &ctx, round, &pairs, log)?;
        stats.conversations += pairs.len();
        stats.turns += turns;
        if round % cfg.stage1.survey_interval == 0 {
            survey_phase(states, &ctx, round, log)?;
            stats.surveys += 1;
        }
        stats.rounds = round;
    }
    Ok(stats)
}

fn candidate_lines<'a>(ctx: &'a Ctx<'_>, state: &AgentState, ids: &[&'a AgentId]) -> Vec<CandidateLine<'a>> {
    ids.iter()
        .map(|id| {
            let name = ctx.roster.iter().find(|(i, _)| i == *id).map_or("", |(_, n)| n.as_str());
            CandidateLine { agent_id: id.as_str(), display_name: name, affinity: state.affinity_towards(id) }
        })
        .collect()
}

fn invite_phase(
    states: &mut [AgentState],
    ctx: &Ctx<'_>,
    round: u32,
    log: &mut EventLog,
) -> Result<Vec<Option<AgentId>>, EngineError> {
    let results: Vec<(Option<AgentId>, Vec<EventBody>)> = states
        .par_iter_mut()
        .map(|s| {
            let mut rec = Recorder::new(ctx.backend);
            let context = s.recall_context(round, ctx.budget(), None);
            let others: Vec<&AgentId> = ctx.roster.iter().map(|(id, _)| id).filter(|id| **id != s.agent_id).collect();
            let lines = candidate_lines(ctx, s, &others);
            let req = s.request(RequestTag::InviteDecision, prompts::invite_request(&context, round, &lines), &ctx.sampling);
            let schema = AgentChoice { candidates: others.iter().map(|id| id.to_string()).collect() };
            let target = match complete_structured(&mut rec, &req, &schema) {
                Ok(choice) => choice.map(AgentId::new),
                Err(e) => {
                    rec.push(EventBody::Warning { message: format!("{}: invite decision failed, waiting: {e}", s.agent_id) });
                    None
                }
            };
            rec.push(EventBody::Invite { from: s.agent_id.clone(), to: target.clone() });
            s.record(round, Action::Invited { to: target.clone() });
            (target, rec.take_events())
        })
        .collect();
    let (targets, events): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    append_phase(log, round, Phase::Invite, events)?;
    Ok(targets)
}

/// Pairs agents from this round's invitations. Invitees are handled in
/// agent order; each returned pair is `(inviter, invitee)`.
fn resolve_phase(
    states: &mut [AgentState],
    ctx: &Ctx<'_>,
    round: u32,
    targets: &[Option<AgentId>],
    log: &mut EventLog,
) -> Result<Vec<(usize, usize)>, EngineError> {
    let index: BTreeMap<&AgentId, usize> = states.iter().enumerate().map(|(i, s)| (&s.agent_id, i)).collect();
    let mut invitations: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (from, to) in targets.iter().enumerate() {
        if let Some(to) = to.as_ref().and_then(|t| index.get(t)) {
            invitations.entry(*to).or_default().push(from);
        }
    }
    drop(index);

    let mut partner: Vec<Option<usize>> = vec![None; states.len()];
    let mut pairs = Vec::new();
    let mut units = Vec::new();
    for (invitee, inviters) in invitations {
        let mut rec = Recorder::new(ctx.backend);
        let outcome = |rec: &mut Recorder<'_>, states: &[AgentState], from: usize, outcome: InviteOutcome| {
            rec.push(EventBody::InviteOutcome {
                from: states[from].agent_id.clone(),
                to: states[invitee].agent_id.clone(),
                outcome,
            })
        };
        if let Some(p) = partner[invitee] {
            for from in inviters {
                let o = if p == from { InviteOutcome::Accepted } else { InviteOutcome::Ignored };
                outcome(&mut rec, states, from, o);
            }
            units.push(rec.take_events());
            continue;
        }
        let (available, busy): (Vec<usize>, Vec<usize>) = inviters.into_iter().partition(|i| partner[*i].is_none());
        for from in busy {
            outcome(&mut rec, states, from, InviteOutcome::Withdrawn);
        }
        if available.is_empty() {
            units.push(rec.take_events());
            continue;
        }
        let ids: Vec<AgentId> = available.iter().map(|i| states[*i].agent_id.clone()).collect();
        let chosen = {
            let s = &mut states[invitee];
            let context = s.recall_context(round, ctx.budget(), None);
            let refs: Vec<&AgentId> = ids.iter().collect();
            let lines = candidate_lines(ctx, s, &refs);
            let req = s.request(RequestTag::InviteDecision, prompts::respond_request(&context, round, &lines), &ctx.sampling);
            let schema = AgentChoice { candidates: ids.iter().map(|id| id.to_string()).collect() };
            match complete_structured(&mut rec, &req, &schema) {
                Ok(c) => c.and_then(|c| available.iter().copied().find(|i| states[*i].agent_id.as_str() == c)),
                Err(e) => {
                    rec.push(EventBody::Warning {
                        message: format!("{}: invitation response failed, declining: {e}", states[invitee].agent_id),
                    });
                    None
                }
            }
        };
        for from in &available {
            let o = if Some(*from) == chosen { InviteOutcome::Accepted } else { InviteOutcome::Declined };
            outcome(&mut rec, states, *from, o);
        }
        let accepted = chosen.map(|c| states[c].agent_id.clone());
        states[invitee].record(round, Action::Responded { accepted });
        if let Some(c) = chosen {
            partner[invitee] = Some(c);
            partner[c] = Some(invitee);
            states[invitee].busy = true;
            states[c].busy = true;
            pairs.push((c, invitee));
        }
        units.push(rec.take_events());
    }
    append_phase(log, round, Phase::Resolve, units)?;
    Ok(pairs)
}

struct Unit {
    id: String,
    a_idx: usize,
    b_idx: usize,
    a: AgentState,
    b: AgentState,
    events: Vec<EventBody>,
    turns: u32,
    result: Result<(), EngineError>,
}

fn converse_phase(
    states: &mut Vec<AgentState>,
    ctx: &Ctx<'_>,
    round: u32,
    pairs: &[(usize, usize)],
    log: &mut EventLog,
) -> Result<usize, EngineError> {
    let mut slots: Vec<Option<AgentState>> = std::mem::take(states).into_iter().map(Some).collect();
    let mut units: Vec<Unit> = pairs
        .iter()
        .enumerate()
        .map(|(k, &(a, b))| Unit {
            id: format!("r{round:02}-c{:02}", k + 1),
            a_idx: a,
            b_idx: b,
            a: slots[a].take().expect("agent paired once"),
            b: slots[b].take().expect("agent paired once"),
            events: Vec::new(),
            turns: 0,
            result: Ok(()),
        })
        .collect();
    units.par_iter_mut().for_each(|u| {
        let mut rec = Recorder::new(ctx.backend);
        let (turns, result) = converse(&mut u.a, &mut u.b, &u.id, round, ctx, &mut rec);
        u.turns = turns;
        u.result = result;
        u.events = rec.take_events();
    });
    let mut events = Vec::with_capacity(units.len());
    let mut turns = 0;
    let mut first_err = None;
    for u in units {
        turns += u.turns as usize;
        events.push(u.events);
        if let (Err(e), None) = (u.result, first_err.as_ref()) {
            first_err = Some(e);
        }
        slots[u.a_idx] = Some(u.a);
        slots[u.b_idx] = Some(u.b);
    }
    *states = slots.into_iter().map(|s| s.expect("agent returned")).collect();
    append_phase(log, round, Phase::Converse, events)?;
    match first_err {
        Some(e) => Err(e),
        None => Ok(turns),
    }
}

fn label(s: &AgentState) -> String {
    format!("{} ({})", s.profile.display_name, s.agent_id)
}

/// One conversation between `a` (the inviter, who speaks first) and `b`,
/// followed by both agents' memory, impression and self-perception updates.
fn converse(
    a: &mut AgentState,
    b: &mut AgentState,
    id: &str,
    round: u32,
    ctx: &Ctx<'_>,
    rec: &mut Recorder<'_>,
) -> (u32, Result<(), EngineError>) {
    rec.push(EventBody::ConversationStart {
        conversation_id: id.to_string(),
        participants: [a.agent_id.clone(), b.agent_id.clone()],
    });
    let mut transcript: Vec<(String, String)> = Vec::new();
    let mut from_a: Vec<String> = Vec::new();
    let mut from_b: Vec<String> = Vec::new();
    let mut reason = EndReason::MaxTurns;
    for index in 0..ctx.cfg.stage1.max_turns {
        let a_speaks = index % 2 == 0;
        let (speaker, partner) = if a_speaks { (&mut *a, &*b) } else { (&mut *b, &*a) };
        let context = speaker.recall_context(round, ctx.budget(), Some(&partner.agent_id));
        let req = speaker.request(
            RequestTag::ConversationTurn,
            prompts::turn_request(&context, &partner.profile.display_name, &transcript),
            &ctx.sampling,
        );
        let reply = match rec.complete(&req) {
            Ok(r) => r.text,
            Err(e) => {
                rec.push(EventBody::Warning { message: format!("{id}: turn by {} failed, ending: {e}", speaker.agent_id) });
                reason = EndReason::BackendError;
                break;
            }
        };
        let closing = reply.contains(markers::END);
        let text = reply.replace(markers::END, " ").split_whitespace().collect::<Vec<_>>().join(" ");
        if !text.is_empty() {
            rec.push(EventBody::Turn {
                conversation_id: id.to_string(),
                index: transcript.len() as u32,
                speaker: speaker.agent_id.clone(),
                text: text.clone(),
            });
            transcript.push((speaker.profile.display_name.clone(), text.clone()));
            if a_speaks {
                from_a.push(text.clone());
            } else {
                from_b.push(text.clone());
            }
        }
        // A blank reply counts as leaving the conversation.
        if closing || text.is_empty() {
            reason = EndReason::Closed;
            break;
        }
    }
    let turns = transcript.len() as u32;
    rec.push(EventBody::ConversationEnd {
        conversation_id: id.to_string(),
        participants: [a.agent_id.clone(), b.agent_id.clone()],
        turns,
        reason,
    });
    a.busy = false;
    b.busy = false;
    if turns == 0 {
        return (0, Ok(()));
    }

    let participants = format!("{} and {}", label(a), label(b));
    let req = ChatRequest::new(
        RequestTag::Summarize,
        vec![ChatMessage::user(prompts::conversation_summary_request(&participants, &transcript))],
        &ctx.sampling,
    );
    let summary = match rec.complete(&req) {
        Ok(r) if !r.text.trim().is_empty() => r.text.trim().to_string(),
        Ok(_) => fallback_summary(&participants, turns),
        Err(e) => {
            rec.push(EventBody::Warning { message: format!("{id}: summary failed, using fallback: {e}") });
            fallback_summary(&participants, turns)
        }
    };

    let result = (|| -> Result<(), EngineError> {
        let ident = |s: &AgentState| (s.agent_id.clone(), s.profile.display_name.clone());
        let (id_a, id_b) = (ident(a), ident(b));
        for (me, (other, name), words) in [(&mut *a, id_b, &from_b), (&mut *b, id_a, &from_a)] {
            me.remember(rec, &summary, id, round, &ctx.sampling)?;
            let words: Vec<&str> = words.iter().map(String::as_str).collect();
            me.update_impression(rec, &other, &name, &words, round, &ctx.sampling)?;
            me.update_self_perception(rec, &summary, &ctx.sampling);
            me.record(round, Action::Conversed { conversation_id: id.to_string(), with: other, turns });
        }
        Ok(())
    })();
    (turns, result)
}

fn fallback_summary(participants: &str, turns: u32) -> String {
    format!("Talked with {participants} ({turns} messages).")
}

fn survey_phase(states: &mut [AgentState], ctx: &Ctx<'_>, round: u32, log: &mut EventLog) -> Result<(), EngineError> {
    let units: Vec<Vec<EventBody>> = states
        .par_iter_mut()
        .map(|s| {
            let mut rec = Recorder::new(ctx.backend);
            match administer_survey(s, &mut rec, round, ctx.budget(), &ctx.sampling) {
                Ok(response) => {
                    rec.push(EventBody::Survey { response });
                    s.record(round, Action::Surveyed);
                }
                Err(e) => rec.push(EventBody::Warning { message: e.to_string() }),
            }
            rec.take_events()
        })
        .collect();
    append_phase(log, round, Phase::Survey, units)
}
