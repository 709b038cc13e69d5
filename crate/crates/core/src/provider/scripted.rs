use std::collections::VecDeque;

use super::{check_request, truncate_chars, CompletionParams, CompletionProvider, ProviderError, ProviderMessage};

/// Line separating responses in a script file.
pub const SCRIPT_SEPARATOR: &str = "---";

/// Ordered queue of canned responses.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ProviderScript {
    responses: VecDeque<String>,
}

impl ProviderScript {
    pub fn new(responses: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Self {
            responses: responses.into_iter().map(Into::into).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    pub fn into_vec(self) -> Vec<String> {
        self.responses.into()
    }
}

/// Splits script text on lines consisting only of `---`. Each response is
/// trimmed; empty chunks are dropped.
pub fn parse_script(text: &str) -> ProviderScript {
    let mut responses = Vec::new();
    let mut current = Vec::new();
    for line in text.lines() {
        if line.trim_end() == SCRIPT_SEPARATOR {
            responses.push(current.join("\n"));
            current.clear();
        } else {
            current.push(line);
        }
    }
    responses.push(current.join("\n"));
    ProviderScript::new(
        responses
            .into_iter()
            .map(|r| r.trim().to_string())
            .filter(|r| !r.is_empty()),
    )
}

/// Replays a script in order, ignoring its input but recording every request.
#[derive(Debug, Clone, Default)]
pub struct ScriptedProvider {
    script: ProviderScript,
    consumed: usize,
    calls: Vec<Vec<ProviderMessage>>,
}

impl ScriptedProvider {
    pub fn new(script: ProviderScript) -> Self {
        Self {
            script,
            consumed: 0,
            calls: Vec::new(),
        }
    }

    pub fn from_responses(responses: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Self::new(ProviderScript::new(responses))
    }

    /// Requests seen so far, in call order.
    pub fn calls(&self) -> &[Vec<ProviderMessage>] {
        &self.calls
    }

    pub fn consumed(&self) -> usize {
        self.consumed
    }

    pub fn remaining(&self) -> usize {
        self.script.len()
    }
}

impl CompletionProvider for ScriptedProvider {
    fn complete(
        &mut self,
        messages: &[ProviderMessage],
        params: &CompletionParams,
    ) -> Result<String, ProviderError> {
        check_request(messages)?;
        self.calls.push(messages.to_vec());
        let reply = self
            .script
            .responses
            .pop_front()
            .ok_or(ProviderError::ScriptExhausted(self.consumed))?;
        self.consumed += 1;
        Ok(truncate_chars(&reply, params.max_response_chars))
    }
}
