use crate::store::EventBody;

use super::{ChatRequest, ChatResponse, LlmBackend, LlmError};

/// Wraps a backend for one unit of work and buffers the events it produces.
///
/// Every call is recorded as a `BackendCall` event carrying the request tag,
/// request hash and response text (or error), so a run can be replayed from
/// its log. Domain events are pushed to the same buffer to keep causal order.
pub struct Recorder<'a> {
    backend: &'a dyn LlmBackend,
    events: Vec<EventBody>,
}

impl<'a> Recorder<'a> {
    pub fn new(backend: &'a dyn LlmBackend) -> Self {
        Self { backend, events: Vec::new() }
    }

    pub fn backend(&self) -> &'a dyn LlmBackend {
        self.backend
    }

    pub fn complete(&mut self, req: &ChatRequest) -> Result<ChatResponse, LlmError> {
        req.validate()?;
        let result = self.backend.complete(req);
        let (response, error, usage) = match &result {
            Ok(r) => (Some(r.text.clone()), None, r.usage),
            Err(e) => (None, Some(e.to_string()), Default::default()),
        };
        self.events.push(EventBody::BackendCall {
            tag: req.tag,
            request_hash: req.hash(),
            response,
            error,
            prompt_tokens: usage.prompt_tokens,
            completion_tokens: usage.completion_tokens,
        });
        result
    }

    pub fn push(&mut self, event: EventBody) {
        self.events.push(event);
    }

    pub fn events(&self) -> &[EventBody] {
        &self.events
    }

    pub fn take_events(&mut self) -> Vec<EventBody> {
        std::mem::take(&mut self.events)
    }
}
