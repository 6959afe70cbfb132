//! The Supervisor Agent: model routing, the per-run action history, the
//! retry budget and human handover.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::llm::Llm;
use crate::money::Money;
use crate::planner::SubTask;
use crate::provider::{Message, ModelProfile};

pub const DEFAULT_MAX_ATTEMPTS: u32 = 3;

/// Action kind that consumes one attempt of the retry budget.
pub const GENERATE_ACTION: &str = "generate";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Plan,
    Summarize,
    Localize,
    Codegen,
    Review,
}

impl TaskKind {
    pub const ALL: [TaskKind; 5] = [TaskKind::Plan, TaskKind::Summarize, TaskKind::Localize, TaskKind::Codegen, TaskKind::Review];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Plan => "plan",
            TaskKind::Summarize => "summarize",
            TaskKind::Localize => "localize",
            TaskKind::Codegen => "codegen",
            TaskKind::Review => "review",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    #[default]
    MinCost,
    /// Highest quality among models whose rate sum fits `budget_per_call`.
    MaxQualityWithinBudget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RoutingPolicy {
    /// Kinds missing from the map require the tag named after the kind.
    pub required_tags: BTreeMap<TaskKind, BTreeSet<String>>,
    pub quality_floor: f64,
    pub objective: Objective,
    /// Upper bound on a model's rate sum (price of 1000 prompt plus 1000
    /// completion tokens).
    pub budget_per_call: Option<Money>,
}

impl Default for RoutingPolicy {
    fn default() -> Self {
        RoutingPolicy { required_tags: BTreeMap::new(), quality_floor: 0.0, objective: Objective::MinCost, budget_per_call: None }
    }
}

impl RoutingPolicy {
    pub fn tags_for(&self, kind: TaskKind) -> BTreeSet<String> {
        self.required_tags.get(&kind).cloned().unwrap_or_else(|| BTreeSet::from([kind.as_str().to_string()]))
    }

    pub fn validate(&self) -> Result<(), RoutingError> {
        if !(0.0..=1.0).contains(&self.quality_floor) {
            return Err(RoutingError::InvalidPolicy(format!("quality_floor {} is outside [0, 1]", self.quality_floor)));
        }
        if self.objective == Objective::MaxQualityWithinBudget && self.budget_per_call.is_none() {
            return Err(RoutingError::InvalidPolicy("max_quality_within_budget needs budget_per_call".into()));
        }
        if self.budget_per_call.is_some_and(|b| b.is_negative()) {
            return Err(RoutingError::InvalidPolicy("budget_per_call must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RoutingError {
    #[error("model inventory is empty")]
    EmptyInventory,
    #[error("invalid routing policy: {0}")]
    InvalidPolicy(String),
    #[error("no model for {kind} has capability tags {tags:?}")]
    MissingTags { kind: TaskKind, tags: BTreeSet<String> },
    #[error("no model for {kind} meets quality floor {floor}")]
    BelowQualityFloor { kind: TaskKind, floor: f64 },
    #[error("no model for {kind} fits budget_per_call {budget}")]
    OverBudget { kind: TaskKind, budget: Money },
}

/// Picks the model for `kind`. Ties go to the lexicographically smallest id.
pub fn route(kind: TaskKind, inventory: &[ModelProfile], policy: &RoutingPolicy) -> Result<String, RoutingError> {
    if inventory.is_empty() {
        return Err(RoutingError::EmptyInventory);
    }
    policy.validate()?;
    let tags = policy.tags_for(kind);
    let tagged: Vec<&ModelProfile> = inventory.iter().filter(|p| p.has_tags(&tags)).collect();
    if tagged.is_empty() {
        return Err(RoutingError::MissingTags { kind, tags });
    }
    let good: Vec<&ModelProfile> = tagged.into_iter().filter(|p| p.quality_score >= policy.quality_floor).collect();
    if good.is_empty() {
        return Err(RoutingError::BelowQualityFloor { kind, floor: policy.quality_floor });
    }
    let eligible: Vec<&ModelProfile> = match policy.budget_per_call {
        Some(budget) => {
            let fit: Vec<_> = good.into_iter().filter(|p| p.rate_sum() <= budget).collect();
            if fit.is_empty() {
                return Err(RoutingError::OverBudget { kind, budget });
            }
            fit
        }
        None => good,
    };
    let best = match policy.objective {
        Objective::MinCost => eligible.into_iter().min_by(|a, b| a.rate_sum().cmp(&b.rate_sum()).then_with(|| a.id.cmp(&b.id))),
        Objective::MaxQualityWithinBudget => eligible.into_iter().min_by(|a, b| {
            b.quality_score
                .total_cmp(&a.quality_score)
                .then_with(|| a.rate_sum().cmp(&b.rate_sum()))
                .then_with(|| a.id.cmp(&b.id))
        }),
    };
    Ok(best.expect("eligible set is non-empty").id.clone())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Agent {
    Sprint,
    Summary,
    Control,
    Developer,
    Peer,
    Supervisor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Ok,
    Failed,
    Retried,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionRecord {
    /// Position in the run history, starting at 1; assigned on append.
    #[serde(default)]
    pub seq: u64,
    pub timestamp: DateTime<Utc>,
    pub agent: Agent,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subtask_id: Option<String>,
    pub action_kind: String,
    pub outcome: Outcome,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub cost: Money,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

impl ActionRecord {
    pub fn new(agent: Agent, subtask_id: Option<&str>, action_kind: impl Into<String>, outcome: Outcome) -> Self {
        ActionRecord {
            seq: 0,
            timestamp: Utc::now(),
            agent,
            subtask_id: subtask_id.map(str::to_string),
            action_kind: action_kind.into(),
            outcome,
            prompt_tokens: 0,
            completion_tokens: 0,
            cost: Money::ZERO,
            detail: String::new(),
        }
    }

    pub fn with_usage(mut self, prompt_tokens: u64, completion_tokens: u64, cost: Money) -> Self {
        self.prompt_tokens = prompt_tokens;
        self.completion_tokens = completion_tokens;
        self.cost = cost;
        self
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }

    pub fn is_generate(&self) -> bool {
        self.agent == Agent::Developer && self.action_kind == GENERATE_ACTION
    }

    /// The handle other documents use to cite this record.
    pub fn reference(&self) -> String {
        format!("#{}", self.seq)
    }

    fn bullet(&self) -> String {
        let mut line = format!(
            "- {} {:?} {} [{:?}] tokens {}/{} cost {}",
            self.reference(),
            self.agent,
            self.action_kind,
            self.outcome,
            self.prompt_tokens,
            self.completion_tokens,
            self.cost
        )
        .to_lowercase();
        if !self.detail.is_empty() {
            line.push_str(": ");
            line.push_str(&first_line(&self.detail, 160));
        }
        line
    }
}

fn first_line(text: &str, max_chars: usize) -> String {
    let line = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("").trim();
    if line.chars().count() > max_chars {
        format!("{}…", line.chars().take(max_chars).collect::<String>())
    } else {
        line.to_string()
    }
}

/// Append-only record of every agent action in a run.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunHistory {
    records: Vec<ActionRecord>,
    attempts: BTreeMap<String, u32>,
}

impl RunHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, mut record: ActionRecord) -> &ActionRecord {
        record.seq = self.records.len() as u64 + 1;
        if record.is_generate() {
            if let Some(id) = &record.subtask_id {
                *self.attempts.entry(id.clone()).or_default() += 1;
            }
        }
        self.records.push(record);
        self.records.last().expect("just pushed")
    }

    pub fn records(&self) -> &[ActionRecord] {
        &self.records
    }

    pub fn attempts(&self, subtask_id: &str) -> u32 {
        self.attempts.get(subtask_id).copied().unwrap_or(0)
    }

    pub fn attempts_map(&self) -> &BTreeMap<String, u32> {
        &self.attempts
    }

    pub fn for_subtask<'a>(&'a self, subtask_id: &'a str) -> impl Iterator<Item = &'a ActionRecord> + 'a {
        self.records.iter().filter(move |r| r.subtask_id.as_deref() == Some(subtask_id))
    }

    /// Appends the newest record to a JSON-lines log.
    pub fn append_last_to(&self, path: &Path) -> std::io::Result<()> {
        let Some(last) = self.records.last() else { return Ok(()) };
        let mut file = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
        let line = serde_json::to_string(last).map_err(std::io::Error::other)?;
        writeln!(file, "{line}")
    }

    /// Rebuilds a history from a JSON-lines log, replaying each record.
    pub fn load_jsonl(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut history = RunHistory::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let rec: ActionRecord = serde_json::from_str(line).map_err(std::io::Error::other)?;
            history.record(rec);
        }
        Ok(history)
    }
}

pub fn attempts_left(history: &RunHistory, subtask_id: &str, max_attempts: u32) -> u32 {
    max_attempts.saturating_sub(history.attempts(subtask_id))
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum HandoverError {
    #[error("max_attempts must be at least 1")]
    InvalidMaxAttempts,
    #[error("sub-task {subtask} still has {left} attempt(s) left")]
    AttemptsRemaining { subtask: String, left: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HandoverReport {
    pub subtask: SubTask,
    pub attempts_made: u32,
    pub summarized_history: String,
    pub last_error: String,
    pub remaining_criteria: Vec<String>,
}

impl HandoverReport {
    pub fn to_markdown(&self) -> String {
        let mut out = format!("# Handover: {} {}\n\n", self.subtask.id, self.subtask.title);
        out.push_str(&format!("Attempts made: {}\n\n", self.attempts_made));
        out.push_str("## History\n\n");
        out.push_str(self.summarized_history.trim_end());
        out.push_str("\n\n## Last error\n\n```\n");
        out.push_str(self.last_error.trim_end());
        out.push_str("\n```\n\n## Remaining acceptance criteria\n\n");
        for c in &self.remaining_criteria {
            out.push_str(&format!("- [ ] {c}\n"));
        }
        out
    }
}

const HANDOVER_SYSTEM: &str = "You are the Supervisor Agent. Summarize for a human developer why automated attempts \
at a sub-task failed and what they should look at first. Answer in at most five sentences of plain prose.";

/// Builds the report for a sub-task whose retry budget is spent. The record
/// list is always included verbatim, so every action stays referenced even
/// when a model writes the prose summary.
pub fn build_handover(
    history: &RunHistory,
    subtask: &SubTask,
    last_error: &str,
    max_attempts: u32,
    llm: Option<&Llm<'_>>,
) -> Result<HandoverReport, HandoverError> {
    if max_attempts == 0 {
        return Err(HandoverError::InvalidMaxAttempts);
    }
    let left = attempts_left(history, &subtask.id, max_attempts);
    if left > 0 {
        return Err(HandoverError::AttemptsRemaining { subtask: subtask.id.clone(), left });
    }
    let bullets: Vec<String> = history.for_subtask(&subtask.id).map(ActionRecord::bullet).collect();
    let list = if bullets.is_empty() { "- (no recorded actions)".to_string() } else { bullets.join("\n") };

    let prose = llm.and_then(|llm| {
        let prompt = format!(
            "Sub-task {}: {}\n{}\n\nRecorded actions:\n{list}\n\nLast error:\n{last_error}\n",
            subtask.id, subtask.title, subtask.description
        );
        match llm.ask(vec![Message::system(HANDOVER_SYSTEM), Message::user(prompt)]) {
            Ok(resp) if !resp.text.trim().is_empty() => Some(resp.text.trim().to_string()),
            Ok(_) => None,
            Err(e) => {
                log::warn!("handover summary unavailable, using the action list: {e}");
                None
            }
        }
    });
    let summarized_history = match prose {
        Some(p) => format!("{p}\n\nActions:\n{list}\n"),
        None => format!("{list}\n"),
    };
    Ok(HandoverReport {
        subtask: subtask.clone(),
        attempts_made: history.attempts(&subtask.id),
        summarized_history,
        last_error: last_error.to_string(),
        remaining_criteria: subtask.acceptance_criteria.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::SubTaskStatus;
    use crate::provider::{ScriptEntry, ScriptedProvider};
    use proptest::prelude::*;

    fn profile(id: &str, rates: (i64, i64), q: f64, tags: &[&str]) -> ModelProfile {
        ModelProfile {
            id: id.into(),
            capability_tags: tags.iter().map(|t| t.to_string()).collect(),
            input_rate: Money::from_micros(rates.0),
            output_rate: Money::from_micros(rates.1),
            context_window: 8000,
            quality_score: q,
        }
    }

    fn inventory() -> Vec<ModelProfile> {
        vec![profile("A", (10_000, 30_000), 0.9, &["codegen"]), profile("B", (1_000, 2_000), 0.6, &["codegen"])]
    }

    fn floor(f: f64) -> RoutingPolicy {
        RoutingPolicy { quality_floor: f, ..RoutingPolicy::default() }
    }

    #[test]
    fn routes_cheapest_eligible() {
        assert_eq!(route(TaskKind::Codegen, &inventory(), &floor(0.5)).unwrap(), "B");
        assert_eq!(route(TaskKind::Codegen, &inventory()[..1], &floor(0.5)).unwrap(), "A");
        assert_eq!(route(TaskKind::Codegen, &inventory(), &floor(0.7)).unwrap(), "A");
    }

    #[test]
    fn errors_name_the_constraint() {
        assert!(matches!(route(TaskKind::Codegen, &inventory(), &floor(0.95)), Err(RoutingError::BelowQualityFloor { .. })));
        assert!(matches!(route(TaskKind::Review, &inventory(), &floor(0.0)), Err(RoutingError::MissingTags { .. })));
        let tight = RoutingPolicy { budget_per_call: Some(Money::from_micros(100)), ..floor(0.0) };
        assert!(matches!(route(TaskKind::Codegen, &inventory(), &tight), Err(RoutingError::OverBudget { .. })));
        assert!(matches!(route(TaskKind::Codegen, &[], &floor(0.0)), Err(RoutingError::EmptyInventory)));
        assert!(matches!(route(TaskKind::Codegen, &inventory(), &floor(1.5)), Err(RoutingError::InvalidPolicy(_))));
    }

    #[test]
    fn tie_goes_to_smallest_id() {
        let inv = vec![profile("m2", (1, 1), 0.5, &["codegen"]), profile("m1", (1, 1), 0.5, &["codegen"])];
        assert_eq!(route(TaskKind::Codegen, &inv, &floor(0.0)).unwrap(), "m1");
    }

    #[test]
    fn max_quality_within_budget() {
        let mut inv = inventory();
        inv.push(profile("C", (5_000, 5_000), 0.8, &["codegen"]));
        let policy = RoutingPolicy {
            objective: Objective::MaxQualityWithinBudget,
            budget_per_call: Some(Money::from_micros(10_000)),
            ..floor(0.0)
        };
        assert_eq!(route(TaskKind::Codegen, &inv, &policy).unwrap(), "C");
    }

    #[test]
    fn custom_tags_override_default() {
        let mut policy = floor(0.0);
        policy.required_tags.insert(TaskKind::Review, BTreeSet::from(["codegen".to_string()]));
        assert_eq!(route(TaskKind::Review, &inventory(), &policy).unwrap(), "B");
    }

    fn generate(st: &str) -> ActionRecord {
        ActionRecord::new(Agent::Developer, Some(st), GENERATE_ACTION, Outcome::Failed)
    }

    #[test]
    fn attempt_accounting() {
        let mut h = RunHistory::new();
        h.record(ActionRecord::new(Agent::Peer, Some("ST-1"), "review", Outcome::Ok));
        assert_eq!(h.records().len(), 1);
        assert_eq!(h.attempts("ST-1"), 0);
        for st in ["ST-1", "ST-2", "ST-1", "ST-1"] {
            h.record(generate(st));
        }
        assert_eq!(h.attempts("ST-1"), 3);
        assert_eq!(h.attempts("ST-2"), 1);
        assert_eq!(attempts_left(&h, "ST-3", 3), 3);
        assert_eq!(attempts_left(&h, "ST-1", 3), 0);
        h.record(generate("ST-1"));
        h.record(generate("ST-1"));
        assert_eq!(attempts_left(&h, "ST-1", 3), 0);
        assert_eq!(h.records().iter().map(|r| r.seq).collect::<Vec<_>>(), (1..=7).collect::<Vec<_>>());
    }

    #[test]
    fn jsonl_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("history.jsonl");
        let mut h = RunHistory::new();
        for st in ["ST-1", "ST-2"] {
            h.record(generate(st).with_usage(10, 5, Money::from_micros(42)));
            h.append_last_to(&path).unwrap();
        }
        assert_eq!(RunHistory::load_jsonl(&path).unwrap(), h);
    }

    fn subtask() -> SubTask {
        SubTask {
            id: "ST-1".into(),
            title: "Add chart".into(),
            description: "Add a bar chart.".into(),
            acceptance_criteria: vec!["bar chart renders".into(), "tests pass".into()],
            story_points: Some(3),
            depends_on: vec![],
            status: SubTaskStatus::InProgress,
        }
    }

    fn exhausted() -> RunHistory {
        let mut h = RunHistory::new();
        h.record(ActionRecord::new(Agent::Control, Some("ST-1"), "localize", Outcome::Ok));
        for i in 0..3 {
            h.record(generate("ST-1").with_detail(format!("AssertionError {i}")));
            h.record(ActionRecord::new(Agent::Developer, Some("ST-1"), "validate", Outcome::Failed));
        }
        h.record(generate("ST-2"));
        h
    }

    #[test]
    fn handover_lists_every_record() {
        let h = exhausted();
        let report = build_handover(&h, &subtask(), "FAIL: test_bar", 3, None).unwrap();
        assert_eq!(report.attempts_made, 3);
        for r in h.for_subtask("ST-1") {
            assert!(report.summarized_history.contains(&format!("- #{} ", r.seq)), "missing #{}", r.seq);
        }
        assert!(!report.summarized_history.contains("#8 "));
        assert_eq!(report.remaining_criteria.len(), 2);
        assert!(report.to_markdown().contains("- [ ] tests pass"));
    }

    #[test]
    fn handover_with_provider_keeps_list() {
        let h = exhausted();
        let p = ScriptedProvider::from_entries(vec![ScriptEntry::ordered("The chart assertion keeps failing.", 50, 10)]).unwrap();
        let report = build_handover(&h, &subtask(), "FAIL", 3, Some(&Llm::new(&p, "m"))).unwrap();
        assert!(report.summarized_history.starts_with("The chart assertion keeps failing."));
        for r in h.for_subtask("ST-1") {
            assert!(report.summarized_history.contains(&r.reference()));
        }
    }

    #[test]
    fn handover_requires_exhaustion() {
        let mut h = RunHistory::new();
        h.record(generate("ST-1"));
        assert_eq!(
            build_handover(&h, &subtask(), "", 3, None).unwrap_err(),
            HandoverError::AttemptsRemaining { subtask: "ST-1".into(), left: 2 }
        );
    }

    fn arb_profile() -> impl Strategy<Value = ModelProfile> {
        (0..4u8, 0..50i64, 0..50i64, 0..=10u8, proptest::collection::btree_set("[ab]", 0..3)).prop_map(|(id, i, o, q, tags)| {
            ModelProfile {
                id: format!("m{id}"),
                capability_tags: tags,
                input_rate: Money::from_micros(i),
                output_rate: Money::from_micros(o),
                context_window: 1,
                quality_score: f64::from(q) / 10.0,
            }
        })
    }

    proptest! {
        #[test]
        fn history_prefixes_are_stable(sts in proptest::collection::vec(0..3u8, 0..30)) {
            let mut h = RunHistory::new();
            let mut snapshots = Vec::new();
            for st in &sts {
                h.record(generate(&format!("ST-{st}")));
                snapshots.push(h.records().to_vec());
            }
            for snap in &snapshots {
                prop_assert_eq!(&h.records()[..snap.len()], &snap[..]);
            }
            let total: u32 = h.attempts_map().values().sum();
            prop_assert_eq!(total as usize, sts.len());
        }

        #[test]
        fn route_result_is_eligible(inv in proptest::collection::vec(arb_profile(), 1..8), f in 0..=10u8) {
            let policy = RoutingPolicy {
                required_tags: TaskKind::ALL.iter().map(|k| (*k, BTreeSet::from(["a".to_string()]))).collect(),
                quality_floor: f64::from(f) / 10.0,
                ..RoutingPolicy::default()
            };
            if let Ok(id) = route(TaskKind::Plan, &inv, &policy) {
                let chosen = inv.iter().filter(|p| p.id == id).any(|p| p.capability_tags.contains("a") && p.quality_score >= policy.quality_floor);
                prop_assert!(chosen);
            }
        }
    }
}
