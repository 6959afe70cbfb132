//! Agent-side model handle and structured-reply helpers.

use serde_json::Value;

use crate::provider::{ChatProvider, CompletionRequest, CompletionResponse, Message, ProviderError};

/// A provider bound to the model chosen for one agent role.
#[derive(Clone, Copy)]
pub struct Llm<'a> {
    provider: &'a dyn ChatProvider,
    model: &'a str,
}

#[derive(Debug, thiserror::Error)]
pub enum AskError<E: std::fmt::Display> {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("{error} (after one reprompt)")]
    Invalid { error: E, last_response: String },
}

impl<'a> Llm<'a> {
    pub fn new(provider: &'a dyn ChatProvider, model: &'a str) -> Self {
        Llm { provider, model }
    }

    pub fn model(&self) -> &str {
        self.model
    }

    pub fn ask(&self, messages: Vec<Message>) -> Result<CompletionResponse, ProviderError> {
        let request = CompletionRequest::new(self.model, messages);
        request.validate()?;
        self.provider.complete(&request)
    }

    /// Asks, parses, and on a parse failure reprompts exactly once with the
    /// parse error before giving up.
    pub fn ask_parsed<T, E, F>(&self, mut messages: Vec<Message>, parse: F) -> Result<T, AskError<E>>
    where
        E: std::fmt::Display,
        F: Fn(&str) -> Result<T, E>,
    {
        let first = self.ask(messages.clone())?;
        let error = match parse(&first.text) {
            Ok(v) => return Ok(v),
            Err(e) => e,
        };
        messages.push(Message::assistant(first.text));
        messages.push(Message::user(format!(
            "Your previous reply could not be used: {error}. Reply again, following the required format exactly."
        )));
        let second = self.ask(messages)?;
        parse(&second.text).map_err(|error| AskError::Invalid { error, last_response: second.text })
    }
}

/// Pulls a JSON value out of a model reply, tolerating code fences and
/// surrounding prose.
pub fn extract_json(text: &str) -> Result<Value, String> {
    let trimmed = text.trim();
    if let Ok(v) = serde_json::from_str(trimmed) {
        return Ok(v);
    }
    for (open, close) in [('{', '}'), ('[', ']')] {
        if let (Some(start), Some(end)) = (trimmed.find(open), trimmed.rfind(close)) {
            if start < end {
                if let Ok(v) = serde_json::from_str(&trimmed[start..=end]) {
                    return Ok(v);
                }
            }
        }
    }
    Err("reply does not contain a JSON document".into())
}

/// Deserializes a JSON reply into `T`.
pub fn parse_json<T: serde::de::DeserializeOwned>(text: &str) -> Result<T, String> {
    let value = extract_json(text)?;
    serde_json::from_value(value).map_err(|e| format!("reply does not match the response schema: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provider::{ScriptEntry, ScriptedProvider};

    #[test]
    fn extracts_fenced_json() {
        let v = extract_json("Sure!\n```json\n{\"a\": [1, 2]}\n```\nDone.").unwrap();
        assert_eq!(v["a"][1], 2);
        assert_eq!(extract_json("[1]").unwrap()[0], 1);
        assert!(extract_json("no json here").is_err());
    }

    #[test]
    fn reprompts_once_then_fails() {
        let p = ScriptedProvider::from_entries(vec![
            ScriptEntry::ordered("garbage", 1, 1),
            ScriptEntry::ordered("{\"x\": 1}", 1, 1),
        ])
        .unwrap();
        let llm = Llm::new(&p, "m");
        let v: Value = llm.ask_parsed(vec![Message::user("q")], extract_json).unwrap();
        assert_eq!(v["x"], 1);
        let reqs = p.requests();
        assert_eq!(reqs.len(), 2);
        assert_eq!(reqs[1].messages.len(), 3);
        assert!(reqs[1].messages[2].text.contains("could not be used"));

        let p = ScriptedProvider::from_entries(vec![ScriptEntry::ordered("bad", 1, 1), ScriptEntry::ordered("worse", 1, 1)]).unwrap();
        let llm = Llm::new(&p, "m");
        let err = llm.ask_parsed(vec![Message::user("q")], extract_json).unwrap_err();
        assert!(matches!(err, AskError::Invalid { ref last_response, .. } if last_response == "worse"));
        assert_eq!(p.requests().len(), 2);
    }
}
