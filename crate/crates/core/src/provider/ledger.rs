use serde::{Deserialize, Serialize};

use super::{cost_of, CompletionResponse, ModelProfile};
use crate::money::Money;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub call_id: String,
    pub model_id: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub cost: Money,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LedgerError {
    #[error("duplicate call id {0:?}")]
    DuplicateCallId(String),
}

/// Append-only record of every metered provider call.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostLedger {
    entries: Vec<LedgerEntry>,
    total: Money,
}

impl CostLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn total(&self) -> Money {
        self.total
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn record_usage(
        &mut self,
        call_id: &str,
        model_id: &str,
        response: &CompletionResponse,
        profile: &ModelProfile,
    ) -> Result<&LedgerEntry, LedgerError> {
        if self.entries.iter().any(|e| e.call_id == call_id) {
            return Err(LedgerError::DuplicateCallId(call_id.to_string()));
        }
        let cost = cost_of(response, profile);
        self.total += cost;
        self.entries.push(LedgerEntry {
            call_id: call_id.to_string(),
            model_id: model_id.to_string(),
            prompt_tokens: response.prompt_tokens,
            completion_tokens: response.completion_tokens,
            cost,
        });
        Ok(self.entries.last().expect("just pushed"))
    }
}
