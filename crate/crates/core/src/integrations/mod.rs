//! Version control and task tracking: a git client, file-based tracker and
//! pull-request adapters for offline runs, and thin Jira and Bitbucket
//! REST clients.

mod bitbucket;
mod git;
mod jira;
mod local;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::http::HttpError;
use crate::planner::{SprintPlan, SubTask};

pub use bitbucket::{BitbucketConfig, BitbucketPrs};
pub use git::{GitClient, VcsRef};
pub use jira::{JiraConfig, JiraTracker};
pub use local::{LocalPrs, LocalTracker, LOCAL_SCHEMA_VERSION};

#[derive(Debug, thiserror::Error)]
pub enum IntegrationError {
    #[error("git {command} failed: {stderr}")]
    Git { command: String, stderr: String },
    #[error("nothing to commit")]
    NothingToCommit,
    #[error("cannot check out branch {branch}: {stderr}")]
    BranchCheckout { branch: String, stderr: String },
    #[error("unknown issue {0}")]
    UnknownIssue(String),
    #[error("illegal transition for {key}: {from} -> {to}")]
    IllegalTransition { key: String, from: IssueStatus, to: IssueStatus },
    #[error("an open pull request already exists for {source_branch} -> {target_branch}")]
    DuplicatePr { source_branch: String, target_branch: String },
    #[error("source and target branch are both {0}")]
    SameBranch(String),
    #[error("unknown pull request {0}")]
    UnknownPr(String),
    #[error("missing credentials: set {0}")]
    MissingCredentials(String),
    #[error("unexpected response from tracker: {0}")]
    Protocol(String),
    #[error(transparent)]
    Http(#[from] HttpError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IssueStatus {
    Todo,
    InProgress,
    Done,
    HandedOver,
}

impl IssueStatus {
    /// Forward moves along todo, in_progress, done are legal, as is a move
    /// from anywhere to handed_over. Staying put is a no-op.
    pub fn can_move_to(self, to: IssueStatus) -> bool {
        use IssueStatus::*;
        match (self, to) {
            (a, b) if a == b => true,
            (_, HandedOver) => true,
            (HandedOver, _) => false,
            (a, b) => a < b,
        }
    }
}

impl fmt::Display for IssueStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IssueStatus::Todo => "todo",
            IssueStatus::InProgress => "in_progress",
            IssueStatus::Done => "done",
            IssueStatus::HandedOver => "handed_over",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IssueRecord {
    pub key: String,
    /// Slug of the plan the sub-task belongs to; sub-task ids restart per plan.
    #[serde(default)]
    pub plan: String,
    /// Sub-task id this issue was published from.
    pub subtask_ref: String,
    pub title: String,
    pub description: String,
    pub story_points: Option<u32>,
    pub status: IssueStatus,
    #[serde(default)]
    pub comments: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrState {
    Open,
    Merged,
    Declined,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PullRequestRecord {
    pub id: String,
    pub source_branch: String,
    pub target_branch: String,
    pub title: String,
    pub body: String,
    pub state: PrState,
}

/// Issue description with the acceptance criteria embedded.
pub fn issue_description(st: &SubTask) -> String {
    let mut d = st.description.trim().to_string();
    if !st.acceptance_criteria.is_empty() {
        d.push_str("\n\nAcceptance criteria:\n");
        for c in &st.acceptance_criteria {
            d.push_str(&format!("- {c}\n"));
        }
    }
    d
}

pub trait Tracker {
    /// One issue per sub-task; republishing updates issues in place.
    fn publish_plan(&self, plan: &SprintPlan) -> Result<BTreeMap<String, String>, IntegrationError>;
    fn transition(&self, key: &str, status: IssueStatus) -> Result<IssueRecord, IntegrationError>;
    fn comment(&self, key: &str, body: &str) -> Result<(), IntegrationError>;
    fn issue(&self, key: &str) -> Result<IssueRecord, IntegrationError>;
}

pub trait PullRequestHost {
    fn open_pr(&self, source: &str, target: &str, title: &str, body: &str) -> Result<PullRequestRecord, IntegrationError>;
    fn update_body(&self, id: &str, body: &str) -> Result<PullRequestRecord, IntegrationError>;
}

#[cfg(test)]
mod tests {
    use super::IssueStatus::*;

    #[test]
    fn transition_rules() {
        assert!(Todo.can_move_to(InProgress) && InProgress.can_move_to(Done));
        assert!(!Done.can_move_to(InProgress));
        assert!(InProgress.can_move_to(HandedOver) && Done.can_move_to(HandedOver));
        assert!(!HandedOver.can_move_to(Todo));
        assert!(Todo.can_move_to(Todo));
    }
}
