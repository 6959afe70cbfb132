//! End-to-end pipeline for the generation and augmentation phases: plan,
//! then per sub-task localize, generate, apply, validate, review, commit
//! and open a pull request, with retries and human handover.

mod config;
mod run;

use std::collections::{BTreeMap, VecDeque};
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use config::{Budgets, ConfigError, Mode, Phase, PlanningConfig, PrConfig, ProviderConfig, RunConfig, TrackerConfig};

use crate::developer::{ApplyError, ValidateError};
use crate::index::IndexError;
use crate::integrations::{IntegrationError, PullRequestRecord};
use crate::localizer::LocalizeError;
use crate::planner::{PlanError, SprintPlan};
use crate::provider::{ChatProvider, CostLedger, NetworkProvider, ProviderError, ScriptFile, ScriptedProvider};
use crate::review::ReviewError;
use crate::supervisor::{ActionRecord, HandoverReport, RoutingError};
use crate::http::RetryPolicy;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("planning failed: {0}")]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Routing(#[from] RoutingError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("index: {0}")]
    Index(#[from] IndexError),
    #[error("localization: {0}")]
    Localize(#[from] LocalizeError),
    #[error("review: {0}")]
    Review(#[from] ReviewError),
    #[error("validation environment: {0}")]
    Environment(#[from] ValidateError),
    #[error("apply: {0}")]
    Apply(#[from] ApplyError),
    #[error(transparent)]
    Integration(#[from] IntegrationError),
    #[error("run aborted: {0}")]
    Aborted(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubtaskOutcome {
    Done,
    HandedOver,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub phase: Phase,
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub plan: Option<SprintPlan>,
    pub per_subtask: BTreeMap<String, SubtaskOutcome>,
    pub issue_keys: BTreeMap<String, String>,
    pub pull_requests: Vec<PullRequestRecord>,
    pub handovers: Vec<HandoverReport>,
    pub ledger: CostLedger,
    pub history: Vec<ActionRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index_version: Option<u64>,
}

impl RunResult {
    pub fn any_handover(&self) -> bool {
        self.per_subtask.values().any(|o| *o == SubtaskOutcome::HandedOver)
    }

    /// Serialization with wall-clock data removed, for comparing replays.
    pub fn normalized(&self) -> Value {
        let mut copy = self.clone();
        if let Some(plan) = &mut copy.plan {
            plan.created_at = chrono::DateTime::UNIX_EPOCH;
        }
        for h in &mut copy.handovers {
            h.subtask.status = crate::planner::SubTaskStatus::HandedOver;
        }
        for r in &mut copy.history {
            r.timestamp = chrono::DateTime::UNIX_EPOCH;
        }
        let mut v = serde_json::to_value(&copy).expect("run results serialize");
        let durations = regex::Regex::new(r"\bin \d+(\.\d+)?s\b").expect("static regex");
        scrub(&mut v, &durations);
        v
    }
}

fn scrub(v: &mut Value, re: &regex::Regex) {
    match v {
        Value::String(s) => {
            if re.is_match(s) {
                *s = re.replace_all(s, "in <elapsed>").into_owned();
            }
        }
        Value::Array(a) => a.iter_mut().for_each(|x| scrub(x, re)),
        Value::Object(o) => o.values_mut().for_each(|x| scrub(x, re)),
        _ => {}
    }
}

/// Human checkpoints of interactive mode.
pub trait Confirm {
    fn confirm(&self, question: &str, detail: &str) -> bool;
}

/// Approves everything; used in autonomous mode.
pub struct AutoApprove;

impl Confirm for AutoApprove {
    fn confirm(&self, _: &str, _: &str) -> bool {
        true
    }
}

/// Asks on the terminal; anything but `y`/`yes` declines.
pub struct ConsoleConfirm;

impl Confirm for ConsoleConfirm {
    fn confirm(&self, question: &str, detail: &str) -> bool {
        let mut err = std::io::stderr().lock();
        let _ = writeln!(err, "{detail}\n{question} [y/N] ");
        let _ = err.flush();
        let mut line = String::new();
        if std::io::stdin().lock().read_line(&mut line).is_err() {
            return false;
        }
        matches!(line.trim().to_ascii_lowercase().as_str(), "y" | "yes")
    }
}

/// Pre-recorded answers, consumed in order; declines once exhausted.
#[derive(Default)]
pub struct ScriptedAnswers {
    answers: Mutex<VecDeque<bool>>,
    pub asked: Mutex<Vec<String>>,
}

impl ScriptedAnswers {
    pub fn new(answers: impl IntoIterator<Item = bool>) -> Self {
        ScriptedAnswers { answers: Mutex::new(answers.into_iter().collect()), asked: Mutex::new(Vec::new()) }
    }
}

impl Confirm for ScriptedAnswers {
    fn confirm(&self, question: &str, _: &str) -> bool {
        self.asked.lock().expect("answers lock").push(question.to_string());
        self.answers.lock().expect("answers lock").pop_front().unwrap_or(false)
    }
}

/// Builds the configured model provider.
pub fn provider_from_config(config: &RunConfig) -> Result<Arc<dyn ChatProvider>, RunError> {
    match &config.provider {
        ProviderConfig::Scripted { fixture_paths } => {
            let mut entries = Vec::new();
            for path in fixture_paths {
                entries.extend(ScriptFile::load(path)?.entries);
            }
            Ok(Arc::new(ScriptedProvider::from_entries(entries)?))
        }
        ProviderConfig::Network { base_url, api_key_env } => {
            Ok(Arc::new(NetworkProvider::from_env(base_url, api_key_env, RetryPolicy::default())?))
        }
    }
}

/// Runs `phase` with the provider named in the config.
pub fn run(config: &RunConfig, phase: Phase, confirm: &dyn Confirm) -> Result<RunResult, RunError> {
    config.validate()?;
    let provider = provider_from_config(config)?;
    run_with_provider(config, phase, provider, confirm)
}

pub fn run_generation(config: &RunConfig, provider: Arc<dyn ChatProvider>, confirm: &dyn Confirm) -> Result<RunResult, RunError> {
    run_with_provider(config, Phase::Generation, provider, confirm)
}

pub fn run_augmentation(config: &RunConfig, provider: Arc<dyn ChatProvider>, confirm: &dyn Confirm) -> Result<RunResult, RunError> {
    run_with_provider(config, Phase::Augmentation, provider, confirm)
}

/// Runs a phase. On error the partial result is still written to the
/// state directory before the error is returned.
pub fn run_with_provider(
    config: &RunConfig,
    phase: Phase,
    provider: Arc<dyn ChatProvider>,
    confirm: &dyn Confirm,
) -> Result<RunResult, RunError> {
    config.validate()?;
    let mut run = run::Run::start(config, phase, provider, confirm)?;
    let outcome = match phase {
        Phase::Generation => run.generation(),
        Phase::Augmentation => run.augmentation(),
    };
    let result = run.finish(outcome.as_ref().err().map(ToString::to_string));
    run.persist(&result)?;
    outcome.map(|()| result)
}

/// Paths of the run artifacts inside the state directory.
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub root: PathBuf,
}

impl Artifacts {
    pub fn new(root: &Path) -> Self {
        Artifacts { root: root.to_path_buf() }
    }
    pub fn plan(&self) -> PathBuf {
        self.root.join("plan.json")
    }
    pub fn history(&self) -> PathBuf {
        self.root.join("history.jsonl")
    }
    pub fn ledger(&self) -> PathBuf {
        self.root.join("ledger.json")
    }
    pub fn result(&self) -> PathBuf {
        self.root.join("result.json")
    }
    pub fn index(&self) -> PathBuf {
        self.root.join("index.json")
    }
    pub fn review(&self, subtask: &str) -> PathBuf {
        self.root.join("reviews").join(format!("{subtask}.md"))
    }
    pub fn handover(&self, subtask: &str) -> PathBuf {
        self.root.join("handovers").join(format!("{subtask}.md"))
    }
    pub fn log(&self, subtask: &str) -> PathBuf {
        self.root.join("logs").join(format!("{subtask}.log"))
    }
}

pub(crate) fn write_text(path: &Path, text: &str) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, text)
}
