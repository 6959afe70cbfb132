use std::collections::{BTreeSet, HashMap, VecDeque};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{ChatProvider, CompletionRequest, CompletionResponse, FinishReason, ProviderError};

pub const SCRIPT_VERSION: u32 = 1;

/// On-disk fixture: a versioned list of pinned responses.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptFile {
    pub version: u32,
    pub entries: Vec<ScriptEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    /// Prompt fingerprint this entry answers. Entries without a key are
    /// replayed in file order for requests that match no keyed entry.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub match_key: Option<String>,
    pub response_text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    /// Free-form authoring note; ignored at replay time.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl ScriptEntry {
    pub fn ordered(text: impl Into<String>, prompt_tokens: u64, completion_tokens: u64) -> Self {
        ScriptEntry { match_key: None, response_text: text.into(), prompt_tokens, completion_tokens, note: None }
    }

    pub fn keyed(key: impl Into<String>, text: impl Into<String>, prompt_tokens: u64, completion_tokens: u64) -> Self {
        ScriptEntry { match_key: Some(key.into()), ..Self::ordered(text, prompt_tokens, completion_tokens) }
    }

    fn to_response(&self) -> CompletionResponse {
        CompletionResponse {
            text: self.response_text.clone(),
            prompt_tokens: self.prompt_tokens,
            completion_tokens: self.completion_tokens,
            finish_reason: FinishReason::Complete,
        }
    }
}

impl ScriptFile {
    pub fn load(path: &Path) -> Result<Self, ProviderError> {
        let text = std::fs::read_to_string(path)?;
        let file: ScriptFile = serde_json::from_str(&text)
            .map_err(|e| ProviderError::Fixture(format!("{}: {e}", path.display())))?;
        if file.version != SCRIPT_VERSION {
            return Err(ProviderError::Fixture(format!(
                "{}: unsupported script version {} (expected {SCRIPT_VERSION})",
                path.display(),
                file.version
            )));
        }
        Ok(file)
    }
}

#[derive(Debug, Default)]
struct ScriptState {
    // Keyed entries sharing a key are consumed in order; the last one sticks
    // so that repeated identical prompts keep getting an answer.
    keyed: HashMap<String, VecDeque<ScriptEntry>>,
    ordered: VecDeque<ScriptEntry>,
    requests: Vec<CompletionRequest>,
}

/// Deterministic provider that replays pinned fixture entries.
#[derive(Debug)]
pub struct ScriptedProvider {
    state: Mutex<ScriptState>,
    known_models: Option<BTreeSet<String>>,
}

impl ScriptedProvider {
    pub fn from_entries(entries: Vec<ScriptEntry>) -> Result<Self, ProviderError> {
        let mut state = ScriptState::default();
        for entry in entries {
            match &entry.match_key {
                Some(key) if key.trim().is_empty() => {
                    return Err(ProviderError::Fixture("empty match_key".into()));
                }
                Some(key) => state.keyed.entry(key.clone()).or_default().push_back(entry),
                None => state.ordered.push_back(entry),
            }
        }
        Ok(ScriptedProvider { state: Mutex::new(state), known_models: None })
    }

    pub fn from_file(path: &Path) -> Result<Self, ProviderError> {
        Self::from_entries(ScriptFile::load(path)?.entries)
    }

    /// Restricts the provider to the given model ids.
    pub fn with_models(mut self, models: BTreeSet<String>) -> Self {
        self.known_models = Some(models);
        self
    }

    /// Every request seen so far, in arrival order.
    pub fn requests(&self) -> Vec<CompletionRequest> {
        self.state.lock().expect("script lock poisoned").requests.clone()
    }

    pub fn remaining_ordered(&self) -> usize {
        self.state.lock().expect("script lock poisoned").ordered.len()
    }
}

impl ChatProvider for ScriptedProvider {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, ProviderError> {
        request.validate()?;
        if let Some(models) = &self.known_models {
            if !models.contains(&request.model_id) {
                return Err(ProviderError::UnknownModel(request.model_id.clone()));
            }
        }
        let key = request.fingerprint();
        let mut state = self.state.lock().expect("script lock poisoned");
        state.requests.push(request.clone());
        if let Some(queue) = state.keyed.get_mut(&key) {
            let entry = if queue.len() > 1 { queue.pop_front().expect("len > 1") } else { queue[0].clone() };
            return Ok(entry.to_response());
        }
        match state.ordered.pop_front() {
            Some(entry) => Ok(entry.to_response()),
            None => Err(ProviderError::Unmatched { key }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provider::{prompt_fingerprint, Message};

    fn req(text: &str) -> CompletionRequest {
        CompletionRequest::new("m", vec![Message::system("sys"), Message::user(text)])
    }

    #[test]
    fn keyed_entry_matches_fingerprint() {
        let key = prompt_fingerprint(&req("hello").messages);
        let p = ScriptedProvider::from_entries(vec![ScriptEntry::keyed(key, "pinned", 12, 3)]).unwrap();
        let r = p.complete(&req("hello")).unwrap();
        assert_eq!(r.text, "pinned");
        assert_eq!((r.prompt_tokens, r.completion_tokens), (12, 3));
        // keyed entries are reusable
        assert_eq!(p.complete(&req("hello")).unwrap().text, "pinned");
    }

    #[test]
    fn unmatched_request_errors() {
        let key = prompt_fingerprint(&req("hello").messages);
        let p = ScriptedProvider::from_entries(vec![ScriptEntry::keyed(key, "pinned", 1, 1)]).unwrap();
        let err = p.complete(&req("other")).unwrap_err();
        assert!(err.to_string().contains("unmatched script entry"));
    }

    #[test]
    fn ordered_fallback_and_exhaustion() {
        let p = ScriptedProvider::from_entries(vec![ScriptEntry::ordered("a", 1, 1), ScriptEntry::ordered("b", 1, 1)]).unwrap();
        assert_eq!(p.complete(&req("x")).unwrap().text, "a");
        assert_eq!(p.complete(&req("x")).unwrap().text, "b");
        assert!(matches!(p.complete(&req("x")), Err(ProviderError::Unmatched { .. })));
    }

    #[test]
    fn repeated_keys_consume_then_stick() {
        let key = prompt_fingerprint(&req("q").messages);
        let p = ScriptedProvider::from_entries(vec![
            ScriptEntry::keyed(key.clone(), "first", 1, 1),
            ScriptEntry::keyed(key, "second", 1, 1),
        ])
        .unwrap();
        let texts: Vec<_> = (0..3).map(|_| p.complete(&req("q")).unwrap().text).collect();
        assert_eq!(texts, ["first", "second", "second"]);
    }

    #[test]
    fn empty_messages_rejected_before_matching() {
        let p = ScriptedProvider::from_entries(vec![ScriptEntry::ordered("a", 1, 1)]).unwrap();
        assert!(matches!(p.complete(&CompletionRequest::new("m", vec![])), Err(ProviderError::InvalidRequest(_))));
        assert_eq!(p.remaining_ordered(), 1);
    }

    #[test]
    fn model_restriction() {
        let p = ScriptedProvider::from_entries(vec![ScriptEntry::ordered("a", 1, 1)])
            .unwrap()
            .with_models(["other".to_string()].into());
        assert!(matches!(p.complete(&req("x")), Err(ProviderError::UnknownModel(_))));
    }

    #[test]
    fn fixture_version_checked() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.json");
        std::fs::write(&path, r#"{"version": 9, "entries": []}"#).unwrap();
        assert!(matches!(ScriptFile::load(&path), Err(ProviderError::Fixture(_))));
        std::fs::write(&path, r#"{"version": 1, "entries": [{"response_text": "x", "prompt_tokens": 1, "completion_tokens": 2}]}"#).unwrap();
        let p = ScriptedProvider::from_file(&path).unwrap();
        assert_eq!(p.complete(&req("x")).unwrap().completion_tokens, 2);
    }

    proptest::proptest! {
        #[test]
        fn identical_sequences_replay_identically(prompts in proptest::collection::vec("[a-c ]{0,6}", 1..12)) {
            let entries: Vec<_> = (0..prompts.len()).map(|i| ScriptEntry::ordered(format!("r{i}"), i as u64, 1)).collect();
            let mut keyed = entries.clone();
            keyed.push(ScriptEntry::keyed(prompt_fingerprint(&req("a").messages), "keyed", 2, 2));
            let run = || {
                let p = ScriptedProvider::from_entries(keyed.clone()).unwrap();
                prompts.iter().map(|t| p.complete(&req(t)).map(|r| r.text).map_err(|e| e.to_string())).collect::<Vec<_>>()
            };
            proptest::prop_assert_eq!(run(), run());
        }
    }
}
