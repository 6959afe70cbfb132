use std::sync::{Arc, Mutex};

use super::{ChatProvider, CompletionRequest, CompletionResponse, CostLedger, Inventory, ProviderError};
use crate::money::Money;

/// Token and cost totals over a slice of the ledger.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Usage {
    pub calls: usize,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub cost: Money,
}

/// Metering front for a provider: rejects models outside the inventory and
/// records every successful call in the cost ledger under a sequential call id.
pub struct Gateway {
    provider: Arc<dyn ChatProvider>,
    inventory: Inventory,
    ledger: Mutex<CostLedger>,
}

impl Gateway {
    pub fn new(provider: Arc<dyn ChatProvider>, inventory: Inventory) -> Self {
        Gateway { provider, inventory, ledger: Mutex::new(CostLedger::new()) }
    }

    pub fn inventory(&self) -> &Inventory {
        &self.inventory
    }

    pub fn ledger(&self) -> CostLedger {
        self.ledger.lock().expect("ledger lock poisoned").clone()
    }

    /// Position marker for [`Gateway::usage_since`].
    pub fn mark(&self) -> usize {
        self.ledger.lock().expect("ledger lock poisoned").len()
    }

    pub fn usage_since(&self, mark: usize) -> Usage {
        let ledger = self.ledger.lock().expect("ledger lock poisoned");
        ledger.entries()[mark.min(ledger.len())..].iter().fold(Usage::default(), |mut u, e| {
            u.calls += 1;
            u.prompt_tokens += e.prompt_tokens;
            u.completion_tokens += e.completion_tokens;
            u.cost += e.cost;
            u
        })
    }
}

impl ChatProvider for Gateway {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, ProviderError> {
        request.validate()?;
        let profile = self
            .inventory
            .get(&request.model_id)
            .ok_or_else(|| ProviderError::UnknownModel(request.model_id.clone()))?;
        let response = self.provider.complete(request)?;
        let mut ledger = self.ledger.lock().expect("ledger lock poisoned");
        let call_id = format!("call-{:05}", ledger.len() + 1);
        ledger
            .record_usage(&call_id, &request.model_id, &response, profile)
            .expect("call ids are sequential under the ledger lock");
        Ok(response)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provider::{Message, ModelProfile, ScriptEntry, ScriptedProvider};

    fn inventory() -> Inventory {
        Inventory::new(vec![ModelProfile {
            id: "small".into(),
            capability_tags: Default::default(),
            input_rate: "0.001".parse().unwrap(),
            output_rate: "0.002".parse().unwrap(),
            context_window: 4096,
            quality_score: 0.6,
        }])
        .unwrap()
    }

    #[test]
    fn records_each_call_once() {
        let script = ScriptedProvider::from_entries((0..3).map(|i| ScriptEntry::ordered(format!("r{i}"), 1000, 500)).collect()).unwrap();
        let gw = Gateway::new(Arc::new(script), inventory());
        let mark = gw.mark();
        for _ in 0..3 {
            gw.complete(&CompletionRequest::new("small", vec![Message::user("x")])).unwrap();
        }
        let ledger = gw.ledger();
        let ids: Vec<_> = ledger.entries().iter().map(|e| e.call_id.as_str()).collect();
        assert_eq!(ids, ["call-00001", "call-00002", "call-00003"]);
        let usage = gw.usage_since(mark);
        assert_eq!(usage.calls, 3);
        assert_eq!(usage.cost, ledger.total());
        assert_eq!(ledger.total().to_string(), "0.006000");
    }

    #[test]
    fn unknown_model_not_forwarded() {
        let script = ScriptedProvider::from_entries(vec![ScriptEntry::ordered("r", 1, 1)]).unwrap();
        let script = Arc::new(script);
        let gw = Gateway::new(script.clone(), inventory());
        let err = gw.complete(&CompletionRequest::new("huge", vec![Message::user("x")])).unwrap_err();
        assert!(matches!(err, ProviderError::UnknownModel(_)));
        assert_eq!(script.remaining_ordered(), 1);
        assert!(gw.ledger().is_empty());
    }
}
