use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{check_phase_health, EngineError, RuleProposal, RunConfig};
use crate::agent::{Action, AgentState};
use crate::llm::{complete_structured, LlmBackend, LlmError, Recorder, RequestTag, RulePair};
use crate::persona::AgentId;
use crate::prompts;
use crate::store::{EventBody, EventLog, Phase};

const COMMENT_SEED_SALT: u64 = 0x5354_4147_4532;

/// For each author in `agents`, indices into `proposals` to comment on: up
/// to `k` proposals, one per distinct other author first, then any other
/// proposals by others. Deterministic for a seed.
pub fn comment_assignments(agents: &[AgentId], proposals: &[RuleProposal], k: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ COMMENT_SEED_SALT);
    agents
        .iter()
        .map(|me| {
            let mut authors: Vec<&AgentId> = proposals.iter().map(|p| &p.agent_id).filter(|a| *a != me).collect();
            authors.dedup();
            authors.shuffle(&mut rng);
            let mut picked = Vec::new();
            for author in authors.into_iter().take(k) {
                let theirs: Vec<usize> = (0..proposals.len()).filter(|i| proposals[*i].agent_id == *author).collect();
                picked.push(*theirs.choose(&mut rng).expect("author has a proposal"));
            }
            if picked.len() < k {
                let mut rest: Vec<usize> = (0..proposals.len())
                    .filter(|i| proposals[*i].agent_id != *me && !picked.contains(i))
                    .collect();
                rest.shuffle(&mut rng);
                picked.extend(rest.into_iter().take(k - picked.len()));
            }
            picked
        })
        .collect()
}

/// Each agent proposes two rules from its recalled experience, then
/// comments on `comment_k` proposals by others. There is no vote.
pub fn run_stage2(
    states: &mut [AgentState],
    cfg: &RunConfig,
    backend: &dyn LlmBackend,
    log: &mut EventLog,
) -> Result<Vec<RuleProposal>, EngineError> {
    let sampling = &cfg.backend.sampling;
    let budget = cfg.stage1.context_budget_words;
    // Recency bookkeeping continues from the last Stage 1 round.
    let recall_round = cfg.stage1.rounds + 1;

    let results: Vec<(Vec<RuleProposal>, Vec<EventBody>)> = states
        .par_iter_mut()
        .map(|s| {
            let mut rec = Recorder::new(backend);
            let context = s.recall_context(recall_round, budget, None);
            let mut drafts = None;
            for attempt in 1..=2 {
                let mut prompt = prompts::rule_request(&context);
                if attempt > 1 {
                    prompt.push_str(&format!("\nATTEMPT: {attempt}"));
                }
                let req = s.request(RequestTag::RuleProposal, prompt, sampling);
                match complete_structured(&mut rec, &req, &RulePair) {
                    Ok(d) => {
                        drafts = Some(d);
                        break;
                    }
                    Err(LlmError::ParseFailedTwice { .. }) if attempt == 1 => continue,
                    Err(e) => {
                        rec.push(EventBody::Warning {
                            message: format!("{}: rule proposal failed, no rules recorded: {e}", s.agent_id),
                        });
                        break;
                    }
                }
            }
            let mut proposals = Vec::new();
            if let Some(drafts) = drafts {
                for (i, d) in drafts.into_iter().enumerate() {
                    let p = RuleProposal {
                        agent_id: s.agent_id.clone(),
                        rule_index: i as u8 + 1,
                        text: d.text,
                        rationale: d.rationale,
                    };
                    rec.push(EventBody::RuleProposed { proposal: p.clone() });
                    proposals.push(p);
                }
            }
            s.record(0, Action::ProposedRules { count: proposals.len() });
            (proposals, rec.take_events())
        })
        .collect();
    let (per_agent, events): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let events: Vec<EventBody> = events.into_iter().flatten().collect();
    let health = check_phase_health(&events, Phase::Proposal, 0);
    log.append_all(0, Phase::Proposal, events)?;
    log.flush()?;
    health?;
    let proposals: Vec<RuleProposal> = per_agent.into_iter().flatten().collect();

    let ids: Vec<AgentId> = states.iter().map(|s| s.agent_id.clone()).collect();
    let names: Vec<(AgentId, String)> =
        states.iter().map(|s| (s.agent_id.clone(), s.profile.display_name.clone())).collect();
    let assignments = comment_assignments(&ids, &proposals, cfg.stage2.comment_k, cfg.population.seed);
    let units: Vec<Vec<EventBody>> = states
        .par_iter_mut()
        .zip(assignments)
        .map(|(s, picks)| {
            let mut rec = Recorder::new(backend);
            let context = s.recall_context(recall_round, budget, None);
            for i in picks {
                let p = &proposals[i];
                let author = names.iter().find(|(id, _)| *id == p.agent_id).map_or("", |(_, n)| n.as_str());
                let req = s.request(
                    RequestTag::RuleComment,
                    prompts::comment_request(&context, &format!("{author} ({})", p.agent_id), &p.text),
                    sampling,
                );
                match rec.complete(&req) {
                    Ok(r) if !r.text.trim().is_empty() => {
                        rec.push(EventBody::RuleComment {
                            agent_id: s.agent_id.clone(),
                            target_agent: p.agent_id.clone(),
                            rule_index: p.rule_index,
                            text: r.text.trim().to_string(),
                        });
                        s.record(0, Action::Commented { on: p.agent_id.clone(), rule_index: p.rule_index });
                    }
                    Ok(_) => rec.push(EventBody::Warning { message: format!("{}: empty comment skipped", s.agent_id) }),
                    Err(e) => rec.push(EventBody::Warning { message: format!("{}: comment failed: {e}", s.agent_id) }),
                }
            }
            rec.take_events()
        })
        .collect();
    let events: Vec<EventBody> = units.into_iter().flatten().collect();
    let health = check_phase_health(&events, Phase::Comment, 0);
    log.append_all(0, Phase::Comment, events)?;
    log.flush()?;
    health?;
    Ok(proposals)
}
