//! Uniform access to chat-completion models.
//!
//! Every agent talks to a [`ChatProvider`]. The [`Gateway`] wraps a concrete
//! provider with an inventory check and exact cost accounting; the
//! [`ScriptedProvider`] replays pinned fixtures for offline runs and the
//! [`NetworkProvider`] speaks an OpenAI-compatible HTTP API.

mod gateway;
mod ledger;
mod network;
mod scripted;

use std::collections::{BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::money::Money;

pub use gateway::{Gateway, Usage};
pub use ledger::{CostLedger, LedgerEntry, LedgerError};
pub use network::{NetworkProvider, RetryPolicy};
pub use scripted::{ScriptEntry, ScriptFile, ScriptedProvider, SCRIPT_VERSION};

#[derive(Debug, thiserror::Error)]
pub enum ProviderError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("unknown model {0:?}")]
    UnknownModel(String),
    #[error("unmatched script entry (prompt key {key})")]
    Unmatched { key: String },
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("provider rejected request: {0}")]
    Rejected(String),
    #[error("invalid script fixture: {0}")]
    Fixture(String),
    #[error("missing credentials: environment variable {0} is not set")]
    MissingCredentials(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub text: String,
}

impl Message {
    pub fn system(text: impl Into<String>) -> Self {
        Message { role: Role::System, text: text.into() }
    }

    pub fn user(text: impl Into<String>) -> Self {
        Message { role: Role::User, text: text.into() }
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        Message { role: Role::Assistant, text: text.into() }
    }
}

pub const DEFAULT_MAX_OUTPUT_TOKENS: u32 = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub model_id: String,
    pub messages: Vec<Message>,
    pub max_output_tokens: u32,
    pub temperature: f32,
}

impl CompletionRequest {
    /// A request with pipeline defaults: temperature 0 and the default output cap.
    pub fn new(model_id: impl Into<String>, messages: Vec<Message>) -> Self {
        CompletionRequest {
            model_id: model_id.into(),
            messages,
            max_output_tokens: DEFAULT_MAX_OUTPUT_TOKENS,
            temperature: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), ProviderError> {
        let first = self
            .messages
            .first()
            .ok_or_else(|| ProviderError::InvalidRequest("messages must not be empty".into()))?;
        if first.role == Role::Assistant {
            return Err(ProviderError::InvalidRequest(
                "first message must have role system or user".into(),
            ));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(ProviderError::InvalidRequest("temperature must be >= 0".into()));
        }
        if self.model_id.is_empty() {
            return Err(ProviderError::InvalidRequest("model id is empty".into()));
        }
        Ok(())
    }

    pub fn fingerprint(&self) -> String {
        prompt_fingerprint(&self.messages)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinishReason {
    Complete,
    Truncated,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionResponse {
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub finish_reason: FinishReason,
}

/// A chat-completion backend. Implementations must be safe to call from
/// several threads at once.
pub trait ChatProvider: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, ProviderError>;
}

impl<P: ChatProvider + ?Sized> ChatProvider for &P {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, ProviderError> {
        (**self).complete(request)
    }
}

impl<P: ChatProvider + ?Sized> ChatProvider for std::sync::Arc<P> {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, ProviderError> {
        (**self).complete(request)
    }
}

/// Validates the request, then forwards it to `provider`.
pub fn complete(
    provider: &dyn ChatProvider,
    request: &CompletionRequest,
) -> Result<CompletionResponse, ProviderError> {
    request.validate()?;
    provider.complete(request)
}

/// Stable match key for a prompt: SHA-256 over the whitespace-collapsed
/// `role:text` lines.
pub fn prompt_fingerprint(messages: &[Message]) -> String {
    let normalized = messages
        .iter()
        .map(|m| format!("{}:{}", m.role, collapse_whitespace(&m.text)))
        .collect::<Vec<_>>()
        .join("\n");
    hex::encode(Sha256::digest(normalized.as_bytes()))
}

fn collapse_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelProfile {
    pub id: String,
    #[serde(default)]
    pub capability_tags: BTreeSet<String>,
    /// Price per 1000 prompt tokens.
    pub input_rate: Money,
    /// Price per 1000 completion tokens.
    pub output_rate: Money,
    pub context_window: u32,
    pub quality_score: f64,
}

impl ModelProfile {
    pub fn validate(&self) -> Result<(), String> {
        if self.id.is_empty() {
            return Err("model id is empty".into());
        }
        if self.input_rate.is_negative() || self.output_rate.is_negative() {
            return Err(format!("model {}: rates must be >= 0", self.id));
        }
        if self.context_window == 0 {
            return Err(format!("model {}: context_window must be > 0", self.id));
        }
        if !(0.0..=1.0).contains(&self.quality_score) {
            return Err(format!("model {}: quality_score must be in [0, 1]", self.id));
        }
        Ok(())
    }

    /// Routing cost proxy: the sum of both per-1000-token rates.
    pub fn rate_sum(&self) -> Money {
        self.input_rate + self.output_rate
    }

    pub fn has_tags<'a>(&self, required: impl IntoIterator<Item = &'a String>) -> bool {
        required.into_iter().all(|t| self.capability_tags.contains(t))
    }
}

/// A validated model inventory with unique ids.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Inventory(Vec<ModelProfile>);

impl Inventory {
    pub fn new(profiles: Vec<ModelProfile>) -> Result<Self, String> {
        let mut seen = HashSet::new();
        for p in &profiles {
            p.validate()?;
            if !seen.insert(p.id.as_str()) {
                return Err(format!("duplicate model id {:?} in inventory", p.id));
            }
        }
        Ok(Inventory(profiles))
    }

    pub fn get(&self, id: &str) -> Option<&ModelProfile> {
        self.0.iter().find(|p| p.id == id)
    }

    pub fn profiles(&self) -> &[ModelProfile] {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn ids(&self) -> BTreeSet<String> {
        self.0.iter().map(|p| p.id.clone()).collect()
    }
}

impl<'de> Deserialize<'de> for Inventory {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let profiles = Vec::<ModelProfile>::deserialize(deserializer)?;
        Inventory::new(profiles).map_err(serde::de::Error::custom)
    }
}

/// Cost of one response: tokens/1000 × rate for each side, summed exactly
/// and rounded half-up to the micro-unit.
pub fn cost_of(response: &CompletionResponse, profile: &ModelProfile) -> Money {
    let scaled = response.prompt_tokens as i128 * profile.input_rate.micros() as i128
        + response.completion_tokens as i128 * profile.output_rate.micros() as i128;
    let micros = (scaled + 500) / 1000;
    Money::from_micros(micros as i64)
}
