use std::collections::{BTreeMap, VecDeque};
use std::sync::Mutex;

use crate::store::{EventBody, SimEvent};

use super::{ChatRequest, ChatResponse, LlmBackend, LlmError, RequestTag, TokenUsage};

type Recorded = Result<(String, TokenUsage), String>;

/// Serves the responses recorded in a run's `BackendCall` events.
///
/// Responses are keyed by `(tag, request hash)`; repeated identical requests
/// consume their recorded responses in log order.
pub struct ReplayBackend {
    queues: Mutex<BTreeMap<(RequestTag, String), VecDeque<Recorded>>>,
}

impl ReplayBackend {
    pub fn from_events<'a>(events: impl IntoIterator<Item = &'a SimEvent>) -> Self {
        let mut queues: BTreeMap<_, VecDeque<Recorded>> = BTreeMap::new();
        for ev in events {
            if let EventBody::BackendCall { tag, request_hash, response, error, prompt_tokens, completion_tokens } =
                &ev.body
            {
                let rec = match (response, error) {
                    (Some(text), _) => Ok((
                        text.clone(),
                        TokenUsage { prompt_tokens: *prompt_tokens, completion_tokens: *completion_tokens },
                    )),
                    (None, Some(err)) => Err(err.clone()),
                    (None, None) => Err("recorded call has neither response nor error".into()),
                };
                queues.entry((*tag, request_hash.clone())).or_default().push_back(rec);
            }
        }
        Self { queues: Mutex::new(queues) }
    }

    /// Recorded responses not yet consumed.
    pub fn remaining(&self) -> usize {
        self.queues.lock().unwrap().values().map(VecDeque::len).sum()
    }
}

impl LlmBackend for ReplayBackend {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let hash = req.hash();
        let next = self
            .queues
            .lock()
            .unwrap()
            .get_mut(&(req.tag, hash.clone()))
            .and_then(VecDeque::pop_front);
        match next {
            Some(Ok((text, usage))) => Ok(ChatResponse { text, usage, latency_ms: 0 }),
            Some(Err(e)) => Err(LlmError::Recorded(e)),
            None => Err(LlmError::ReplayMissing { tag: req.tag, hash }),
        }
    }
}
