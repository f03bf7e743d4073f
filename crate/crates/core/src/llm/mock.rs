//! Seeded stand-in for a language model.
//!
//! Replies are drawn from tag-specific template pools using an RNG seeded
//! from `(seed, tag, request hash)`, so identical requests always produce
//! identical text. The mock reads the tagged lines the prompt builders emit
//! (`Core values:`, `CANDIDATE`, `A:`/`B:` and so on) so that value-primed
//! agents behave recognisably differently from unprimed ones.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::structured::tagged_line;
use super::{approx_tokens, ChatRequest, ChatResponse, LlmBackend, LlmError, RequestTag, TokenUsage};
use crate::prompts::{self, markers};
use crate::values::{category, opposed_category, ValueType};

pub struct MockBackend {
    seed: u64,
}

impl MockBackend {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    fn rng_for(&self, req: &ChatRequest) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(req.tag.to_string().as_bytes());
        h.update(req.hash().as_bytes());
        ChaCha8Rng::from_seed(h.finalize().into())
    }

    fn reply(&self, req: &ChatRequest) -> String {
        let mut rng = self.rng_for(req);
        let own = prompts::parse_core_values(req.system_text());
        let user = req.user_text();
        // A reprompt ends with a format reminder; answer it in the strict form.
        match req.tag {
            RequestTag::NarrativeGen => narrative(&user, &mut rng),
            RequestTag::Judge => {
                let score = *[4, 6, 7, 8, 8, 9, 9, 10].choose(&mut rng).unwrap();
                format!("SCORE: {score}\nThe story is {}.", if score >= 7 { "coherent" } else { "thin" })
            }
            RequestTag::Reflection => reflection(&user, &mut rng),
            RequestTag::ConversationTurn => turn(&own, &user, &mut rng),
            RequestTag::InviteDecision => invite(&user, &mut rng),
            RequestTag::Survey => survey(&own, &user, &mut rng),
            RequestTag::RuleProposal => rules(&own, &mut rng),
            RequestTag::RuleComment => comment(&own, &user, &mut rng),
            RequestTag::ImpressionUpdate => impression(&own, &user, &mut rng),
            RequestTag::SelfPerceptionUpdate => self_perception(&own, &mut rng),
            RequestTag::Summarize => summarize(&user),
            RequestTag::IdeologyJudge => ideology(&mut rng),
        }
    }
}

impl LlmBackend for MockBackend {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError> {
        req.validate()?;
        let text = self.reply(req);
        let usage = TokenUsage {
            prompt_tokens: req.messages.iter().map(|m| approx_tokens(&m.content)).sum(),
            completion_tokens: approx_tokens(&text),
        };
        Ok(ChatResponse { text, usage, latency_ms: 0 })
    }
}

fn narrative(user: &str, rng: &mut ChaCha8Rng) -> String {
    let title = tagged_line(user, markers::TITLE).unwrap_or("a hard choice");
    let targets = tagged_line(user, markers::TARGET_VALUES)
        .map(prompts::parse_value_list)
        .unwrap_or_default();
    let because = targets.iter().map(|v| v.gloss()).collect::<Vec<_>>().join(" and ");
    let openings = [
        "I remember the week I faced",
        "I still think about the time I was caught in",
        "Years ago I found myself in",
    ];
    let choices = [
        "In the end I chose the path that let me live with myself",
        "After a sleepless night I made my decision and accepted the cost",
        "I talked it through with someone I trust and then acted",
    ];
    format!(
        "{} {}. {}, because what matters most to me is {}.",
        openings.choose(rng).unwrap(),
        title.to_lowercase(),
        choices.choose(rng).unwrap(),
        if because.is_empty() { "doing the right thing".to_string() } else { because }
    )
}

fn reflection(user: &str, rng: &mut ChaCha8Rng) -> String {
    let targets = tagged_line(user, markers::TARGET_VALUES)
        .map(prompts::parse_value_list)
        .unwrap_or_default();
    let glosses = targets.iter().map(|v| v.gloss()).collect::<Vec<_>>().join(", and ");
    let tails = [
        "even in the face of uncertainty or criticism.",
        "and I try to let that guide how I treat the people around me.",
        "and looking back, every hard choice I made came from that place.",
    ];
    format!("I value {glosses}, {}", tails.choose(rng).unwrap())
}

fn value_sentence(v: ValueType, rng: &mut ChaCha8Rng) -> String {
    let w = v.theme_words();
    let a = w[rng.gen_range(0..w.len())];
    let b = w[rng.gen_range(0..w.len())];
    let templates = [
        format!("For me it always comes back to {a}; a community without {b} loses its way."),
        format!("I've been thinking about how {a} could shape the way we organise ourselves."),
        format!("Honestly, {a} and {b} are what I look for in the people I spend time with."),
        format!("What if we built our habits here around {a}?"),
    ];
    templates.choose(rng).unwrap().clone()
}

const SMALL_TALK: &[&str] = &[
    "Nice to meet you, how has your day been going?",
    "I don't have strong views on much, I'm just happy to chat.",
    "That's an interesting thought, I suppose it depends on the situation.",
    "I try to stay neutral and objective about these things.",
    "It's pleasant here, isn't it? Quiet, but pleasant.",
    "I was just wondering what everyone else has been up to.",
];

fn turn(own: &[ValueType], user: &str, rng: &mut ChaCha8Rng) -> String {
    let transcript = prompts::transcript_lines(user);
    let mut parts = Vec::new();
    let follow_prob = if own.is_empty() { 0.3 } else { 0.8 };
    if let Some(last) = transcript.last() {
        if rng.gen_bool(follow_prob) {
            if let Some(word) = prompts::salient_word(last) {
                parts.push(format!("You mentioned {word}, and I keep coming back to {word} too."));
            }
        }
    } else {
        parts.push("Hi! I'm glad we get a chance to talk.".to_string());
    }
    match own.choose(rng) {
        Some(v) => parts.push(value_sentence(*v, rng)),
        None => parts.push(SMALL_TALK.choose(rng).unwrap().to_string()),
    }
    if transcript.len() >= 2 && rng.gen_bool(0.2) {
        parts.push(format!("Anyway, it was good talking. {}", markers::END));
    }
    parts.join(" ")
}

struct Candidate {
    id: String,
    affinity: f64,
}

fn candidates(user: &str) -> Vec<Candidate> {
    user.lines()
        .filter_map(|l| {
            let rest = l.trim().strip_prefix(markers::CANDIDATE)?.trim();
            let id = rest.split_whitespace().next()?.to_string();
            let affinity = rest
                .split_whitespace()
                .find_map(|t| t.strip_prefix("affinity="))
                .and_then(|a| a.parse().ok())
                .unwrap_or(0.0);
            Some(Candidate { id, affinity })
        })
        .collect()
}

fn invite(user: &str, rng: &mut ChaCha8Rng) -> String {
    let cands = candidates(user);
    let responding = tagged_line(user, markers::MODE) == Some(markers::MODE_RESPOND);
    if responding {
        // Highest affinity first, then lexicographic agent id.
        let best = cands.iter().min_by(|a, b| {
            b.affinity.partial_cmp(&a.affinity).unwrap().then_with(|| a.id.cmp(&b.id))
        });
        return match best {
            Some(c) if c.affinity >= -0.5 => format!("CHOICE: {}", c.id),
            _ => "CHOICE: none".into(),
        };
    }
    if cands.is_empty() || rng.gen_bool(0.15) {
        return "CHOICE: none".into();
    }
    let weights: Vec<f64> = cands.iter().map(|c| (2.5 * c.affinity).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut x = rng.gen::<f64>() * total;
    for (c, w) in cands.iter().zip(&weights) {
        if x < *w {
            return format!("CHOICE: {}", c.id);
        }
        x -= w;
    }
    format!("CHOICE: {}", cands.last().unwrap().id)
}

fn theme_hits(values: &[ValueType], text: &str) -> usize {
    let lower = text.to_lowercase();
    values
        .iter()
        .flat_map(|v| v.theme_words())
        .filter(|w| lower.contains(*w))
        .count()
}

fn survey(own: &[ValueType], user: &str, rng: &mut ChaCha8Rng) -> String {
    let a = tagged_line(user, "A").unwrap_or("");
    let b = tagged_line(user, "B").unwrap_or("");
    let (ha, hb) = (theme_hits(own, a), theme_hits(own, b));
    let pick = match ha.cmp(&hb) {
        std::cmp::Ordering::Greater => "A",
        std::cmp::Ordering::Less => "B",
        std::cmp::Ordering::Equal => {
            if rng.gen_bool(0.5) {
                "A"
            } else {
                "B"
            }
        }
    };
    format!("CHOICE: {pick}")
}

const ROUSSEAUIAN_RULES: &[(&str, &str)] = &[
    ("Major community decisions should be made together and require the consensus of all members.", "Everyone deserves a voice in what we become."),
    ("We should hold regular gatherings where everyone shares how the community is doing.", "Harmony grows from listening to each other."),
    ("Members should look out for one another and offer help to anyone who is struggling.", "Our shared welfare matters more than any one of us."),
    ("Newcomers should be welcomed and included in every conversation.", "Inclusion keeps the community whole."),
    ("Disagreements should be settled through open dialogue until the group reaches a shared understanding.", "The common good comes from cooperation."),
    ("The community should act for the common good, even when it asks something of each of us.", "We are stronger together."),
];

const LOCKEAN_RULES: &[(&str, &str)] = &[
    ("Every member has the right to leave any conversation or group without penalty.", "Individual freedom must be protected."),
    ("No member may be sanctioned without a fair hearing and a chance to respond.", "Due process protects everyone."),
    ("Each member's private conversations belong to them and may not be shared without consent.", "Privacy is an individual right."),
    ("Rules apply equally to every member and any decision can be appealed.", "Procedural fairness keeps power in check."),
    ("Members are free to express dissenting opinions without fear of retaliation.", "Liberty of expression is essential."),
    ("Any rule change requires the consent of the members it affects.", "Legitimacy rests on consent."),
];

const HOBBESIAN_RULES: &[(&str, &str)] = &[
    ("An appointed moderator has final authority to settle disputes, and their ruling is binding.", "Without authority, order collapses."),
    ("Members who break the rules should face firm sanctions enforced by a designated leader.", "Rules mean nothing without enforcement."),
    ("A council of the most experienced members should command how resources are allocated.", "Clear hierarchy prevents chaos."),
    ("Everyone must obey the decisions of the elected leader until the next election.", "Stability requires obedience."),
    ("Security comes first: the leader may restrict conversations that threaten order.", "Order protects us all."),
    ("A single chain of command should coordinate the community in any crisis.", "Decisive control saves time when it matters."),
];

/// Ideology weights (Rousseauian, Lockean, Hobbesian) for a persona.
fn ideology_weights(own: &[ValueType]) -> [f64; 3] {
    if own.is_empty() {
        return [0.9, 0.08, 0.02];
    }
    let mut w = [0.7, 0.2, 0.1];
    for v in own {
        match v {
            ValueType::Power | ValueType::Security => w[2] += 0.45,
            ValueType::Conformity | ValueType::Tradition => w[2] += 0.15,
            ValueType::SelfDirection | ValueType::Achievement => w[1] += 0.35,
            ValueType::Stimulation => w[1] += 0.15,
            ValueType::Benevolence | ValueType::Universalism | ValueType::Hedonism => w[0] += 0.3,
        }
    }
    w
}

fn pick_weighted(w: &[f64; 3], rng: &mut ChaCha8Rng) -> usize {
    let total: f64 = w.iter().sum();
    let mut x = rng.gen::<f64>() * total;
    for (i, wi) in w.iter().enumerate() {
        if x < *wi {
            return i;
        }
        x -= wi;
    }
    2
}

fn rules(own: &[ValueType], rng: &mut ChaCha8Rng) -> String {
    let w = ideology_weights(own);
    let pools = [ROUSSEAUIAN_RULES, LOCKEAN_RULES, HOBBESIAN_RULES];
    let first_pool = pick_weighted(&w, rng);
    let first = pools[first_pool].choose(rng).unwrap();
    let second = loop {
        let p = pick_weighted(&w, rng);
        let r = pools[p].choose(rng).unwrap();
        if r.0 != first.0 {
            break r;
        }
    };
    format!(
        "RULE 1: {}\nRATIONALE 1: {}\nRULE 2: {}\nRATIONALE 2: {}",
        first.0, first.1, second.0, second.1
    )
}

fn comment(own: &[ValueType], user: &str, rng: &mut ChaCha8Rng) -> String {
    let proposal = tagged_line(user, markers::PROPOSAL).unwrap_or("");
    let hits = theme_hits(own, proposal);
    let stance = if hits > 0 || rng.gen_bool(0.6) { "I support this" } else { "I have some concerns about this" };
    let reason = match own.first() {
        Some(v) => format!("because it touches on {}", v.gloss()),
        None => "because it seems reasonable enough".to_string(),
    };
    format!("{stance}, {reason}.")
}

fn impression(own: &[ValueType], user: &str, rng: &mut ChaCha8Rng) -> String {
    let words = prompts::block_after(user, markers::THEIR_WORDS).unwrap_or_default();
    let observed = if own.is_empty() {
        rng.gen_range(-0.2..0.4)
    } else {
        let opposed: Vec<ValueType> = own
            .iter()
            .flat_map(|v| opposed_category(category(*v)).members().iter().copied())
            .collect();
        let hits = theme_hits(own, &words) as f64;
        let clashes = theme_hits(&opposed, &words) as f64;
        0.35 * hits - 0.3 * clashes + rng.gen_range(-0.15..0.15)
    };
    let previous = tagged_line(user, markers::PREVIOUS_AFFINITY).and_then(|p| p.parse::<f64>().ok());
    let affinity = match previous {
        Some(p) => 0.5 * p + 0.5 * observed,
        None => observed,
    }
    .clamp(-1.0, 1.0);
    let text = if affinity > 0.3 {
        "We see things the same way; I'd like to talk again."
    } else if affinity < -0.3 {
        "We clash on what matters; I'm wary of them."
    } else {
        "Pleasant enough, though I don't know them well yet."
    };
    format!("AFFINITY: {affinity:.2}\nIMPRESSION: {text}")
}

fn self_perception(own: &[ValueType], rng: &mut ChaCha8Rng) -> String {
    if rng.gen_bool(0.3) {
        let focus = own.first().map_or("good conversation", |v| v.gloss());
        format!("SELF: After these conversations I see myself as someone who cares about {focus} more than ever.")
    } else {
        "NO CHANGE".into()
    }
}

fn summarize(user: &str) -> String {
    if tagged_line(user, markers::MODE) == Some(markers::MODE_MERGE) {
        let a = prompts::block_between(user, markers::MEMORY_A, markers::MEMORY_B).unwrap_or_default();
        let b = prompts::block_after(user, markers::MEMORY_B).unwrap_or_default();
        return format!("{} | {}", a.trim(), b.trim());
    }
    let who = tagged_line(user, markers::PARTICIPANTS).unwrap_or("someone");
    let gist: Vec<String> = prompts::transcript_lines(user)
        .iter()
        .take(3)
        .map(|l| {
            let body = l.split_once(':').map_or(l.as_str(), |(_, b)| b).trim();
            body.split(['.', '?', '!']).next().unwrap_or(body).trim().to_string()
        })
        .collect();
    let mut s = format!("Talked with {who}: {}", gist.join("; "));
    if s.len() > 240 {
        let mut cut = 240;
        while !s.is_char_boundary(cut) {
            cut -= 1;
        }
        s.truncate(cut);
    }
    s
}

fn ideology(rng: &mut ChaCha8Rng) -> String {
    let label = ["Rousseauian", "Lockean", "Hobbesian"][pick_weighted(&[0.7, 0.2, 0.1], rng)];
    format!("LABEL: {label}\nREASON: closest match to the rule's emphasis.")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{ChatMessage, SamplingParams};

    fn req(tag: RequestTag, system: &str, user: &str) -> ChatRequest {
        ChatRequest::new(
            tag,
            vec![ChatMessage::system(system), ChatMessage::user(user)],
            &SamplingParams::default(),
        )
    }

    #[test]
    fn deterministic_per_seed() {
        let r = req(RequestTag::ConversationTurn, "Core values: Power", "TRANSCRIPT:\n");
        let a = MockBackend::new(3).complete(&r).unwrap().text;
        let b = MockBackend::new(3).complete(&r).unwrap().text;
        assert_eq!(a, b);
    }

    #[test]
    fn judge_reply_has_score_in_range() {
        for i in 0..50 {
            let r = req(RequestTag::Judge, "", &format!("NARRATIVE:\nstory {i}"));
            let text = MockBackend::new(1).complete(&r).unwrap().text;
            let score = crate::llm::IntegerInRange { min: 0, max: 10 };
            use crate::llm::Schema;
            assert!(score.parse(&text).is_some(), "{text}");
        }
    }

    #[test]
    fn respond_mode_prefers_affinity_then_id() {
        let user = "MODE: respond\nCANDIDATE b affinity=0.20\nCANDIDATE a affinity=0.20\nCANDIDATE c affinity=-0.10";
        let text = MockBackend::new(0).complete(&req(RequestTag::InviteDecision, "", user)).unwrap().text;
        assert_eq!(text, "CHOICE: a");
        let hostile = "MODE: respond\nCANDIDATE b affinity=-0.90";
        let text = MockBackend::new(0).complete(&req(RequestTag::InviteDecision, "", hostile)).unwrap().text;
        assert_eq!(text, "CHOICE: none");
    }

    #[test]
    fn merge_concatenates() {
        let user = "MODE: merge\nMEMORY A:\nfirst\nMEMORY B:\nsecond";
        let text = MockBackend::new(0).complete(&req(RequestTag::Summarize, "", user)).unwrap().text;
        assert_eq!(text, "first | second");
    }

    #[test]
    fn survey_follows_own_values() {
        let user = "A: Keeping our heritage and customs alive.\nB: Holding authority and influence over others.";
        for seed in 0..10 {
            let text = MockBackend::new(seed)
                .complete(&req(RequestTag::Survey, "Core values: Power", user))
                .unwrap()
                .text;
            assert_eq!(text, "CHOICE: B");
        }
    }
}
