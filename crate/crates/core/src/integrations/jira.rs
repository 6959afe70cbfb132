use std::collections::BTreeMap;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{issue_description, IntegrationError, IssueRecord, IssueStatus, Tracker};
use crate::http::{JsonClient, Method, RetryPolicy};
use crate::planner::SprintPlan;

const LABEL_PREFIX: &str = "almas-";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct JiraConfig {
    pub base_url: String,
    pub project_key: String,
    pub token_env: String,
    pub issue_type: String,
    pub story_points_field: String,
    /// Workflow status name for each tracker status.
    pub status_names: BTreeMap<IssueStatus, String>,
}

impl Default for JiraConfig {
    fn default() -> Self {
        JiraConfig {
            base_url: String::new(),
            project_key: String::new(),
            token_env: "JIRA_TOKEN".into(),
            issue_type: "Task".into(),
            story_points_field: "customfield_10016".into(),
            status_names: BTreeMap::from([
                (IssueStatus::Todo, "To Do".into()),
                (IssueStatus::InProgress, "In Progress".into()),
                (IssueStatus::Done, "Done".into()),
                (IssueStatus::HandedOver, "Handed Over".into()),
            ]),
        }
    }
}

/// Jira REST v2: create and update issue, transitions, comments.
pub struct JiraTracker {
    client: JsonClient,
    config: JiraConfig,
    known: Mutex<BTreeMap<String, String>>,
}

impl JiraTracker {
    pub fn from_env(config: JiraConfig) -> Result<Self, IntegrationError> {
        let token = std::env::var(&config.token_env).map_err(|_| IntegrationError::MissingCredentials(config.token_env.clone()))?;
        Ok(Self::new(config, &token, RetryPolicy::default()))
    }

    pub fn new(config: JiraConfig, token: &str, retry: RetryPolicy) -> Self {
        let client = JsonClient::new(&config.base_url, Duration::from_secs(30), retry).with_header("Authorization", format!("Bearer {token}"));
        JiraTracker { client, config, known: Mutex::new(BTreeMap::new()) }
    }

    /// Seeds the sub-task to issue-key mapping from an earlier publish.
    pub fn with_known(self, mapping: BTreeMap<String, String>) -> Self {
        *self.known.lock().expect("mapping lock") = mapping;
        self
    }

    fn status_name(&self, status: IssueStatus) -> String {
        self.config.status_names.get(&status).cloned().unwrap_or_else(|| status.to_string())
    }

    fn status_from_name(&self, name: &str) -> Result<IssueStatus, IntegrationError> {
        self.config
            .status_names
            .iter()
            .find(|(_, n)| n.eq_ignore_ascii_case(name))
            .map(|(s, _)| *s)
            .ok_or_else(|| IntegrationError::Protocol(format!("unmapped Jira status {name:?}")))
    }
}

fn str_at<'a>(v: &'a Value, ptr: &str) -> Option<&'a str> {
    v.pointer(ptr).and_then(Value::as_str)
}

impl Tracker for JiraTracker {
    fn publish_plan(&self, plan: &SprintPlan) -> Result<BTreeMap<String, String>, IntegrationError> {
        let mut known = self.known.lock().expect("mapping lock");
        let mut mapping = BTreeMap::new();
        for st in &plan.subtasks {
            let mut fields = json!({
                "summary": st.title,
                "description": issue_description(st),
                "labels": [format!("{LABEL_PREFIX}{}", st.id)],
            });
            if let Some(points) = st.story_points {
                fields[&self.config.story_points_field] = json!(points);
            }
            let key = match known.get(&st.id) {
                Some(key) => {
                    self.client.send(Method::Put, &format!("rest/api/2/issue/{key}"), Some(&json!({ "fields": fields })))?;
                    key.clone()
                }
                None => {
                    fields["project"] = json!({ "key": self.config.project_key });
                    fields["issuetype"] = json!({ "name": self.config.issue_type });
                    let created = self.client.send(Method::Post, "rest/api/2/issue", Some(&json!({ "fields": fields })))?;
                    let key = str_at(&created, "/key").ok_or_else(|| IntegrationError::Protocol("create issue returned no key".into()))?.to_string();
                    known.insert(st.id.clone(), key.clone());
                    key
                }
            };
            mapping.insert(st.id.clone(), key);
        }
        Ok(mapping)
    }

    fn transition(&self, key: &str, status: IssueStatus) -> Result<IssueRecord, IntegrationError> {
        let mut issue = self.issue(key)?;
        if !issue.status.can_move_to(status) {
            return Err(IntegrationError::IllegalTransition { key: key.to_string(), from: issue.status, to: status });
        }
        if issue.status == status {
            return Ok(issue);
        }
        let target = self.status_name(status);
        let available = self.client.send(Method::Get, &format!("rest/api/2/issue/{key}/transitions"), None)?;
        let id = available
            .get("transitions")
            .and_then(Value::as_array)
            .into_iter()
            .flatten()
            .find(|t| str_at(t, "/to/name").or_else(|| str_at(t, "/name")).is_some_and(|n| n.eq_ignore_ascii_case(&target)))
            .and_then(|t| str_at(t, "/id"))
            .ok_or_else(|| IntegrationError::Protocol(format!("no workflow transition to {target:?} for {key}")))?
            .to_string();
        self.client.send(Method::Post, &format!("rest/api/2/issue/{key}/transitions"), Some(&json!({ "transition": { "id": id } })))?;
        issue.status = status;
        Ok(issue)
    }

    fn comment(&self, key: &str, body: &str) -> Result<(), IntegrationError> {
        self.client.send(Method::Post, &format!("rest/api/2/issue/{key}/comment"), Some(&json!({ "body": body })))?;
        Ok(())
    }

    fn issue(&self, key: &str) -> Result<IssueRecord, IntegrationError> {
        let v = self.client.send(Method::Get, &format!("rest/api/2/issue/{key}"), None).map_err(|e| match e {
            crate::http::HttpError::Status { status: 404, .. } => IntegrationError::UnknownIssue(key.to_string()),
            other => other.into(),
        })?;
        let fields = v.get("fields").ok_or_else(|| IntegrationError::Protocol("issue without fields".into()))?;
        let subtask_ref = fields
            .get("labels")
            .and_then(Value::as_array)
            .into_iter()
            .flatten()
            .filter_map(Value::as_str)
            .find_map(|l| l.strip_prefix(LABEL_PREFIX))
            .unwrap_or_default()
            .to_string();
        Ok(IssueRecord {
            key: str_at(&v, "/key").unwrap_or(key).to_string(),
            plan: String::new(),
            subtask_ref,
            title: str_at(fields, "/summary").unwrap_or_default().to_string(),
            description: str_at(fields, "/description").unwrap_or_default().to_string(),
            story_points: fields.get(&self.config.story_points_field).and_then(Value::as_f64).map(|p| p.round() as u32),
            status: self.status_from_name(str_at(fields, "/status/name").unwrap_or_default())?,
            comments: Vec::new(),
        })
    }
}
