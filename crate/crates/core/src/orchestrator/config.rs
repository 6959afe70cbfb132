use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::developer::ValidationConfig;
use crate::fsutil::STATE_DIR_NAME;
use crate::integrations::{BitbucketConfig, JiraConfig};
use crate::planner::StoryScale;
use crate::provider::Inventory;
use crate::review::ReviewGate;
use crate::supervisor::{RoutingPolicy, DEFAULT_MAX_ATTEMPTS};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Autonomous,
    Interactive,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    #[default]
    Generation,
    Augmentation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Budgets {
    pub max_attempts: u32,
    pub context_tokens: usize,
    pub outline_tokens: usize,
    pub k: usize,
}

impl Default for Budgets {
    fn default() -> Self {
        Budgets { max_attempts: DEFAULT_MAX_ATTEMPTS, context_tokens: 6000, outline_tokens: 2000, k: crate::localizer::DEFAULT_K }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProviderConfig {
    Scripted { fixture_paths: Vec<PathBuf> },
    Network {
        base_url: String,
        #[serde(default = "default_key_env")]
        api_key_env: String,
    },
}

fn default_key_env() -> String {
    "ALMAS_API_KEY".into()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanningConfig {
    pub story_scale: Vec<u32>,
    pub few_shot_path: Option<PathBuf>,
}

impl Default for PlanningConfig {
    fn default() -> Self {
        PlanningConfig { story_scale: StoryScale::default().values().to_vec(), few_shot_path: None }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrackerConfig {
    Local {
        #[serde(default = "default_prefix")]
        issue_prefix: String,
    },
    Jira(JiraConfig),
}

fn default_prefix() -> String {
    "AL".into()
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig::Local { issue_prefix: default_prefix() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PrConfig {
    #[default]
    Local,
    Bitbucket(BitbucketConfig),
}

/// One run's configuration. Relative paths resolve against the directory
/// holding the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub repo_path: PathBuf,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub phase: Phase,
    #[serde(default)]
    pub task_file: Option<PathBuf>,
    /// Defaults to `<repo>/.almas`.
    #[serde(default)]
    pub state_dir: Option<PathBuf>,
    #[serde(default = "default_base_branch")]
    pub base_branch: String,
    #[serde(default)]
    pub budgets: Budgets,
    #[serde(default)]
    pub inventory: Inventory,
    #[serde(default)]
    pub policy: RoutingPolicy,
    #[serde(default)]
    pub validation: ValidationConfig,
    pub provider: ProviderConfig,
    #[serde(default)]
    pub planning: PlanningConfig,
    #[serde(default)]
    pub review_gate: ReviewGate,
    #[serde(default)]
    pub tracker: TrackerConfig,
    #[serde(default)]
    pub pull_requests: PrConfig,
    /// Ask a model for the prose part of handover reports.
    #[serde(default)]
    pub handover_summary: bool,
}

fn default_base_branch() -> String {
    "main".into()
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
        let mut cfg: RunConfig = toml::from_str(&text).map_err(|e| ConfigError::Parse { path: path.to_path_buf(), message: e.to_string() })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.resolve_paths(&base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.repo_path);
        for p in [&mut self.task_file, &mut self.state_dir, &mut self.planning.few_shot_path].into_iter().flatten() {
            resolve(base, p);
        }
        if let ProviderConfig::Scripted { fixture_paths } = &mut self.provider {
            fixture_paths.iter_mut().for_each(|p| resolve(base, p));
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let b = &self.budgets;
        if b.max_attempts == 0 || b.context_tokens == 0 || b.outline_tokens == 0 || b.k == 0 {
            return Err(ConfigError::Invalid("budgets must all be positive".into()));
        }
        if self.inventory.is_empty() {
            return Err(ConfigError::Invalid("model inventory is empty".into()));
        }
        self.policy.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        StoryScale::new(self.planning.story_scale.clone()).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if let ProviderConfig::Scripted { fixture_paths } = &self.provider {
            if fixture_paths.is_empty() {
                return Err(ConfigError::Invalid("scripted provider needs at least one fixture path".into()));
            }
        }
        if self.base_branch.trim().is_empty() {
            return Err(ConfigError::Invalid("base_branch is empty".into()));
        }
        Ok(())
    }

    pub fn state_dir(&self) -> PathBuf {
        self.state_dir.clone().unwrap_or_else(|| self.repo_path.join(STATE_DIR_NAME))
    }
}
