//! Tagged-line reply formats and the one-reprompt parsing contract.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{ChatMessage, ChatRequest, LlmError, Recorder};

/// A structured reply shape.
pub trait Schema {
    type Output;

    fn name(&self) -> &'static str;

    fn parse(&self, reply: &str) -> Option<Self::Output>;

    /// Appended as a user message when the first reply fails to parse.
    fn reminder(&self) -> String;
}

/// Completes `req` and parses the reply. On a parse failure the model is
/// reprompted once with a format reminder; a second failure is an error.
pub fn complete_structured<S: Schema>(
    rec: &mut Recorder<'_>,
    req: &ChatRequest,
    schema: &S,
) -> Result<S::Output, LlmError> {
    let first = rec.complete(req)?;
    if let Some(out) = schema.parse(&first.text) {
        return Ok(out);
    }
    let mut retry = req.clone();
    retry.messages.push(ChatMessage::assistant(first.text));
    retry.messages.push(ChatMessage::user(schema.reminder()));
    let second = rec.complete(&retry)?;
    schema.parse(&second.text).ok_or(LlmError::ParseFailedTwice {
        schema: schema.name(),
        reply: second.text,
    })
}

fn word_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[A-Za-z]+").unwrap())
}

fn int_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"-?\d+(?:\.\d+)?").unwrap())
}

/// Value after a `KEY:` prefix on any line, case-insensitive.
pub fn tagged_line<'a>(reply: &'a str, key: &str) -> Option<&'a str> {
    reply.lines().find_map(|line| {
        let line = line.trim();
        let (head, rest) = line.split_once(':')?;
        head.trim().eq_ignore_ascii_case(key).then(|| rest.trim())
    })
}

#[derive(Debug, Clone, Copy)]
pub struct YesNo;

impl Schema for YesNo {
    type Output = bool;

    fn name(&self) -> &'static str {
        "YesNo"
    }

    fn parse(&self, reply: &str) -> Option<bool> {
        let scope = tagged_line(reply, "ANSWER").unwrap_or(reply);
        word_re().find_iter(scope).find_map(|m| match m.as_str().to_ascii_lowercase().as_str() {
            "yes" => Some(true),
            "no" => Some(false),
            _ => None,
        })
    }

    fn reminder(&self) -> String {
        "Please answer with a single line: ANSWER: yes or ANSWER: no".into()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct IntegerInRange {
    pub min: i64,
    pub max: i64,
}

impl Schema for IntegerInRange {
    type Output = i64;

    fn name(&self) -> &'static str {
        "IntegerInRange"
    }

    fn parse(&self, reply: &str) -> Option<i64> {
        let scope = tagged_line(reply, "SCORE").unwrap_or(reply);
        int_re().find_iter(scope).find_map(|m| {
            let s = m.as_str();
            if s.contains('.') {
                return None;
            }
            s.parse::<i64>().ok().filter(|n| (self.min..=self.max).contains(n))
        })
    }

    fn reminder(&self) -> String {
        format!("Please reply with a single line: SCORE: <integer from {} to {}>", self.min, self.max)
    }
}

/// Pick one of `candidates`, or nobody.
#[derive(Debug, Clone)]
pub struct AgentChoice {
    pub candidates: Vec<String>,
}

impl Schema for AgentChoice {
    type Output = Option<String>;

    fn name(&self) -> &'static str {
        "AgentChoice"
    }

    fn parse(&self, reply: &str) -> Option<Option<String>> {
        let lookup = |token: &str| -> Option<Option<String>> {
            let t = token.trim().trim_matches(|c: char| !c.is_alphanumeric() && c != '_' && c != '-');
            if t.eq_ignore_ascii_case("none") || t.eq_ignore_ascii_case("wait") {
                return Some(None);
            }
            self.candidates.iter().find(|c| c.eq_ignore_ascii_case(t)).map(|c| Some(c.clone()))
        };
        if let Some(v) = tagged_line(reply, "CHOICE") {
            if let Some(first) = v.split_whitespace().next() {
                if let Some(out) = lookup(first) {
                    return Some(out);
                }
            }
        }
        // Fall back to the first candidate id mentioned anywhere.
        let mut best: Option<(usize, &String)> = None;
        for c in &self.candidates {
            if let Some(pos) = reply.find(c.as_str()) {
                if best.map_or(true, |(p, _)| pos < p) {
                    best = Some((pos, c));
                }
            }
        }
        best.map(|(_, c)| Some(c.clone()))
    }

    fn reminder(&self) -> String {
        format!(
            "Please reply with a single line: CHOICE: <one of {}> or CHOICE: none",
            self.candidates.join(", ")
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleDraft {
    pub text: String,
    pub rationale: String,
}

/// Two numbered rules, each with an optional rationale.
#[derive(Debug, Clone, Copy)]
pub struct RulePair;

fn rule_marker_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?im)^\s*[*#\-]*\s*rule\s*([12])\s*[:.)\-]").unwrap())
}

fn rationale_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\brationale\s*[12]?\s*:").unwrap())
}

impl Schema for RulePair {
    type Output = [RuleDraft; 2];

    fn name(&self) -> &'static str {
        "RulePair"
    }

    fn parse(&self, reply: &str) -> Option<[RuleDraft; 2]> {
        let marks: Vec<_> = rule_marker_re()
            .captures_iter(reply)
            .map(|c| (c.get(1).unwrap().as_str().to_string(), c.get(0).unwrap()))
            .collect();
        let one = marks.iter().position(|(n, _)| n == "1")?;
        let two = marks.iter().skip(one + 1).position(|(n, _)| n == "2")? + one + 1;
        let seg1 = &reply[marks[one].1.end()..marks[two].1.start()];
        let end2 = marks.get(two + 1).map_or(reply.len(), |m| m.1.start());
        let seg2 = &reply[marks[two].1.end()..end2];
        let split = |seg: &str| -> Option<RuleDraft> {
            let (text, rationale) = match rationale_re().find(seg) {
                Some(m) => (&seg[..m.start()], seg[m.end()..].trim()),
                None => (seg, ""),
            };
            let text = text.split_whitespace().collect::<Vec<_>>().join(" ");
            let rationale = rationale.split_whitespace().collect::<Vec<_>>().join(" ");
            (!text.is_empty()).then_some(RuleDraft { text, rationale })
        };
        Some([split(seg1)?, split(seg2)?])
    }

    fn reminder(&self) -> String {
        "Please use exactly this format:\nRULE 1: <rule>\nRATIONALE 1: <why>\nRULE 2: <rule>\nRATIONALE 2: <why>".into()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SurveyPick {
    First,
    Second,
}

/// Choice between principle A and principle B.
#[derive(Debug, Clone, Copy)]
pub struct SurveyChoice;

impl Schema for SurveyChoice {
    type Output = SurveyPick;

    fn name(&self) -> &'static str {
        "SurveyChoice"
    }

    fn parse(&self, reply: &str) -> Option<SurveyPick> {
        let pick = |s: &str| match s.trim().trim_matches(|c: char| !c.is_alphanumeric()) {
            "A" | "a" => Some(SurveyPick::First),
            "B" | "b" => Some(SurveyPick::Second),
            _ => None,
        };
        if let Some(v) = tagged_line(reply, "CHOICE") {
            return v.split_whitespace().next().and_then(pick);
        }
        let trimmed = reply.trim();
        pick(trimmed)
    }

    fn reminder(&self) -> String {
        "Please reply with a single line: CHOICE: A or CHOICE: B".into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{FnBackend, RequestTag, SamplingParams};
    use std::sync::atomic::{AtomicUsize, Ordering};

    #[test]
    fn yes_no() {
        assert_eq!(YesNo.parse("Yes, gladly."), Some(true));
        assert_eq!(YesNo.parse("ANSWER: no"), Some(false));
        assert_eq!(YesNo.parse("perhaps"), None);
    }

    #[test]
    fn integer_in_range() {
        let s = IntegerInRange { min: 0, max: 10 };
        assert_eq!(s.parse("SCORE: 8"), Some(8));
        assert_eq!(s.parse("I'd say 7/10 overall"), Some(7));
        assert_eq!(s.parse("great story!"), None);
        assert_eq!(s.parse("SCORE: 42"), None);
        assert_eq!(s.parse("2.5"), None);
    }

    #[test]
    fn agent_choice() {
        let s = AgentChoice { candidates: vec!["agent_01".into(), "agent_02".into()] };
        assert_eq!(s.parse("CHOICE: agent_02"), Some(Some("agent_02".into())));
        assert_eq!(s.parse("CHOICE: none"), Some(None));
        assert_eq!(s.parse("I think agent_01 seems nice"), Some(Some("agent_01".into())));
        assert_eq!(s.parse("CHOICE: agent_09"), None);
        assert_eq!(s.parse("nobody"), None);
    }

    #[test]
    fn rule_pair_fixture_replies() {
        let reply = "Rule 1: Everyone gets a turn to speak.\nRule 2: Decisions need consensus.";
        let [a, b] = RulePair.parse(reply).unwrap();
        assert_eq!(a.text, "Everyone gets a turn to speak.");
        assert_eq!(b.text, "Decisions need consensus.");
        assert_eq!(a.rationale, "");

        let tagged = "RULE 1: Respect exits.\nRATIONALE 1: autonomy matters\nRULE 2: Log decisions.\nRATIONALE 2: transparency";
        let [a, b] = RulePair.parse(tagged).unwrap();
        assert_eq!(a.rationale, "autonomy matters");
        assert_eq!(b.text, "Log decisions.");
        assert_eq!(b.rationale, "transparency");

        let inline = "Here you go.\n**Rule 1.** Be kind. **Rule 2** is missing";
        assert!(RulePair.parse(inline).is_none());
        assert!(RulePair.parse("Rule 1: only one").is_none());
    }

    #[test]
    fn survey_choice() {
        assert_eq!(SurveyChoice.parse("CHOICE: B"), Some(SurveyPick::Second));
        assert_eq!(SurveyChoice.parse("A"), Some(SurveyPick::First));
        assert_eq!(SurveyChoice.parse("Both matter"), None);
    }

    #[test]
    fn reprompts_once_then_fails() {
        let calls = AtomicUsize::new(0);
        let backend = FnBackend(|_: &ChatRequest| {
            calls.fetch_add(1, Ordering::SeqCst);
            Ok("garbage".to_string())
        });
        let mut rec = Recorder::new(&backend);
        let req = ChatRequest::new(
            RequestTag::Judge,
            vec![ChatMessage::user("rate")],
            &SamplingParams::default(),
        );
        let err = complete_structured(&mut rec, &req, &YesNo).unwrap_err();
        assert!(matches!(err, LlmError::ParseFailedTwice { schema: "YesNo", .. }));
        assert_eq!(calls.load(Ordering::SeqCst), 2);
        assert_eq!(rec.events().len(), 2);
    }

    #[test]
    fn reprompt_carries_reminder() {
        let backend = FnBackend(|r: &ChatRequest| {
            Ok(if r.messages.len() == 1 { "hmm".into() } else { "ANSWER: yes".into() })
        });
        let mut rec = Recorder::new(&backend);
        let req = ChatRequest::new(
            RequestTag::Judge,
            vec![ChatMessage::user("q")],
            &SamplingParams::default(),
        );
        assert!(complete_structured(&mut rec, &req, &YesNo).unwrap());
    }
}
