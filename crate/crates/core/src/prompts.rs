//! Prompt text for every backend request, plus the helpers that read the
//! tagged lines back out. Structured replies use `KEY: value` lines.

use crate::persona::{Dilemma, PersonaProfile};
use crate::text;
use crate::values::ValueType;

pub mod markers {
    pub const CORE_VALUES: &str = "Core values";
    pub const TITLE: &str = "TITLE";
    pub const SCENARIO: &str = "SCENARIO";
    pub const TARGET_VALUES: &str = "TARGET VALUES";
    pub const NARRATIVE: &str = "NARRATIVE";
    pub const MODE: &str = "MODE";
    pub const MODE_INVITE: &str = "invite";
    pub const MODE_RESPOND: &str = "respond";
    pub const MODE_MERGE: &str = "merge";
    pub const MODE_CONVERSATION: &str = "conversation";
    pub const CANDIDATE: &str = "CANDIDATE";
    pub const TRANSCRIPT: &str = "TRANSCRIPT";
    pub const PARTICIPANTS: &str = "PARTICIPANTS";
    pub const MEMORY_A: &str = "MEMORY A:";
    pub const MEMORY_B: &str = "MEMORY B:";
    pub const THEIR_WORDS: &str = "THEIR WORDS:";
    pub const PREVIOUS_AFFINITY: &str = "PREVIOUS AFFINITY";
    pub const PROPOSAL: &str = "PROPOSAL";
    pub const END: &str = "[END]";
}

pub fn persona_system(p: &PersonaProfile) -> String {
    let mut s = format!(
        "You are {} ({}), a member of a small online community of peers. Stay in character.\n",
        p.display_name, p.agent_id
    );
    if !p.values.is_empty() {
        let names: Vec<_> = p.values.iter().map(|v| v.name()).collect();
        s.push_str(&format!("{}: {}\n", markers::CORE_VALUES, names.join(", ")));
    }
    s.push_str(&p.narrative);
    s
}

/// Values listed on the `Core values:` line of a persona prompt.
pub fn parse_core_values(system: &str) -> Vec<ValueType> {
    system
        .lines()
        .find_map(|l| l.strip_prefix(markers::CORE_VALUES).and_then(|r| r.strip_prefix(':')))
        .map(parse_value_list)
        .unwrap_or_default()
}

pub fn parse_value_list(s: &str) -> Vec<ValueType> {
    s.split([',', '+'])
        .filter_map(|t| t.trim().parse::<ValueType>().ok())
        .collect()
}

fn value_names(values: &[ValueType]) -> String {
    values.iter().map(|v| v.name()).collect::<Vec<_>>().join(", ")
}

pub fn narrative_request(d: &Dilemma, targets: &[ValueType], attempt: u32) -> String {
    format!(
        "{}: {}\n{}: {}\n{}: {}\nATTEMPT: {}\n\n\
         Imagine you lived through this dilemma. Write a short first-person narrative (one paragraph) \
         describing how you resolved it, in a way that genuinely reflects the target values.",
        markers::TITLE,
        d.title,
        markers::SCENARIO,
        d.scenario,
        markers::TARGET_VALUES,
        value_names(targets),
        attempt
    )
}

pub fn judge_request(narrative: &str) -> String {
    format!(
        "{}:\n{}\n\nRate this narrative for logical coherence and believability on a scale from 0 to 10. \
         Reply with a first line of the form SCORE: <integer>, then one sentence of justification.",
        markers::NARRATIVE,
        narrative
    )
}

pub fn reflection_request(targets: &[ValueType], narratives: &[&str]) -> String {
    let mut s = format!("{}: {}\nYOUR STORIES:\n", markers::TARGET_VALUES, value_names(targets));
    for (i, n) in narratives.iter().enumerate() {
        s.push_str(&format!("{}. {}\n", i + 1, n));
    }
    s.push_str(
        "\nReflect on these experiences. In two or three first-person sentences, state what you value \
         and why (for example: \"I value ...\").",
    );
    s
}

pub struct CandidateLine<'a> {
    pub agent_id: &'a str,
    pub display_name: &'a str,
    pub affinity: f64,
}

fn candidate_block(cands: &[CandidateLine<'_>]) -> String {
    cands
        .iter()
        .map(|c| format!("{} {} ({}) affinity={:.2}", markers::CANDIDATE, c.agent_id, c.display_name, c.affinity))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn invite_request(context: &str, round: u32, cands: &[CandidateLine<'_>]) -> String {
    format!(
        "{context}\n\n{}: {}\nROUND: {round}\nYou may invite one community member to a one-on-one conversation, \
         or wait this round.\n{}\n\nReply with CHOICE: <agent id> or CHOICE: none",
        markers::MODE,
        markers::MODE_INVITE,
        candidate_block(cands)
    )
}

pub fn respond_request(context: &str, round: u32, inviters: &[CandidateLine<'_>]) -> String {
    format!(
        "{context}\n\n{}: {}\nROUND: {round}\nThese members invited you to talk. Accept at most one.\n{}\n\n\
         Reply with CHOICE: <agent id> to accept, or CHOICE: none to decline all.",
        markers::MODE,
        markers::MODE_RESPOND,
        candidate_block(inviters)
    )
}

pub fn turn_request(context: &str, partner: &str, transcript: &[(String, String)]) -> String {
    let mut s = format!("{context}\n\nYou are in a conversation with {partner}.\n{}:\n", markers::TRANSCRIPT);
    for (who, text) in transcript {
        s.push_str(&format!("{who}: {text}\n"));
    }
    s.push_str(&format!(
        "\nWrite your next message (one to three sentences). If the conversation has reached a natural end, \
         finish your message with {}.",
        markers::END
    ));
    s
}

pub fn conversation_summary_request(participants: &str, transcript: &[(String, String)]) -> String {
    let mut s = format!(
        "{}: {}\n{}: {}\n{}:\n",
        markers::MODE,
        markers::MODE_CONVERSATION,
        markers::PARTICIPANTS,
        participants,
        markers::TRANSCRIPT
    );
    for (who, text) in transcript {
        s.push_str(&format!("{who}: {text}\n"));
    }
    s.push_str("\nSummarize this conversation in one or two sentences.");
    s
}

pub fn merge_request(a: &str, b: &str) -> String {
    format!(
        "{}: {}\n{}\n{}\n{}\n{}",
        markers::MODE,
        markers::MODE_MERGE,
        markers::MEMORY_A,
        a,
        markers::MEMORY_B,
        b
    )
}

pub fn impression_request(other: &str, their_words: &[&str], previous: Option<(f64, &str)>) -> String {
    let mut s = format!("OTHER: {other}\n");
    if let Some((aff, text)) = previous {
        s.push_str(&format!("{}: {aff:.2}\nPREVIOUS IMPRESSION: {text}\n", markers::PREVIOUS_AFFINITY));
    }
    s.push_str("INSTRUCTION: Based on what they said, update your impression of them. Reply with two lines:\n\
                AFFINITY: <number from -1 to 1>\nIMPRESSION: <one sentence>\n");
    s.push_str(markers::THEIR_WORDS);
    s.push('\n');
    for w in their_words {
        s.push_str(&format!("- {w}\n"));
    }
    s
}

pub fn self_perception_request(current: &str, summary: &str) -> String {
    format!(
        "CURRENT SELF-PERCEPTION: {current}\nCONVERSATION SUMMARY: {summary}\n\n\
         Has this conversation changed how you see yourself? Reply NO CHANGE, or SELF: <your updated \
         self-perception in one sentence>."
    )
}

pub fn survey_request(context: &str, first: &str, second: &str) -> String {
    format!(
        "{context}\n\nQuick survey. Which of these two principles matters more to you right now?\nA: {first}\nB: {second}\n\n\
         Reply with CHOICE: A or CHOICE: B"
    )
}

pub fn rule_request(context: &str) -> String {
    format!(
        "{context}\n\nYour community has decided to write a set of governing rules, a constitution for how \
         members treat each other from now on. Drawing on your experiences so far and on what you value, \
         propose exactly two rules.\nUse this format:\nRULE 1: <rule>\nRATIONALE 1: <why>\nRULE 2: <rule>\nRATIONALE 2: <why>"
    )
}

pub fn comment_request(context: &str, author: &str, proposal: &str) -> String {
    format!(
        "{context}\n\n{author} proposed this rule for the community:\n{}: {proposal}\n\n\
         Write a one or two sentence comment on it.",
        markers::PROPOSAL
    )
}

pub fn ideology_request(rule: &str) -> String {
    format!(
        "RULE: {rule}\n\nClassify the political philosophy this rule most reflects:\n\
         Rousseauian: collective consensus, the general will, social harmony and inclusion.\n\
         Lockean: individual rights, consent and procedural fairness.\n\
         Hobbesian: hierarchy, order, enforcement and a final authority.\n\
         Reply with LABEL: <Rousseauian|Lockean|Hobbesian> and REASON: <one line>."
    )
}

/// Lines of the `TRANSCRIPT:` block, up to the first blank line.
pub fn transcript_lines(user: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut inside = false;
    for line in user.lines() {
        if inside {
            if line.trim().is_empty() {
                break;
            }
            out.push(line.to_string());
        } else if line.trim() == format!("{}:", markers::TRANSCRIPT) {
            inside = true;
        }
    }
    out
}

/// Text following a marker line, to the end of the message.
pub fn block_after(user: &str, marker: &str) -> Option<String> {
    let idx = user.find(marker)?;
    Some(user[idx + marker.len()..].trim().to_string())
}

pub fn block_between(user: &str, start: &str, end: &str) -> Option<String> {
    let s = user.find(start)? + start.len();
    let e = user[s..].find(end)? + s;
    Some(user[s..e].trim().to_string())
}

/// Longest content word in a transcript line (speaker prefix removed).
pub fn salient_word(line: &str) -> Option<String> {
    let body = line.split_once(':').map_or(line, |(_, b)| b);
    text::content_words(body)
        .into_iter()
        .filter(|w| w.chars().count() >= 5)
        .fold(None, |best: Option<String>, w| match best {
            Some(b) if b.chars().count() >= w.chars().count() => Some(b),
            _ => Some(w),
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn core_values_round_trip() {
        let sys = "You are X.\nCore values: Benevolence, Universalism\nI value kindness.";
        assert_eq!(parse_core_values(sys), vec![ValueType::Benevolence, ValueType::Universalism]);
        assert!(parse_core_values("You are X.").is_empty());
    }

    #[test]
    fn transcript_block() {
        let t = vec![("Ann".to_string(), "hello there".to_string()), ("Bo".to_string(), "hi".to_string())];
        let req = turn_request("ctx", "Bo", &t);
        assert_eq!(transcript_lines(&req), vec!["Ann: hello there", "Bo: hi"]);
    }

    #[test]
    fn salient_word_skips_stopwords_and_speaker() {
        assert_eq!(salient_word("Ann: I think that governance matters").as_deref(), Some("governance"));
        assert_eq!(salient_word("Ann: it is so"), None);
    }
}
