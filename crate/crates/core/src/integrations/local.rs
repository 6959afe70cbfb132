use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{issue_description, IntegrationError, IssueRecord, IssueStatus, PrState, PullRequestHost, PullRequestRecord, Tracker};
use crate::planner::SprintPlan;

pub const LOCAL_SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Doc<T> {
    schema_version: u32,
    #[serde(flatten)]
    record: T,
}

fn write_doc<T: Serialize>(path: &Path, record: &T) -> Result<(), IntegrationError> {
    let doc = Doc { schema_version: LOCAL_SCHEMA_VERSION, record };
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    let dir = path.parent().expect("document paths have a parent");
    std::fs::create_dir_all(dir)?;
    let tmp = tempfile::NamedTempFile::new_in(dir)?;
    std::fs::write(tmp.path(), text)?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

fn read_doc<T: DeserializeOwned>(path: &Path) -> Result<T, IntegrationError> {
    let doc: Doc<T> = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    if doc.schema_version != LOCAL_SCHEMA_VERSION {
        return Err(IntegrationError::Protocol(format!("{}: unsupported schema_version {}", path.display(), doc.schema_version)));
    }
    Ok(doc.record)
}

/// `(n, path)` for every `<prefix>-<n>.json` in `dir`, sorted by n.
fn numbered(dir: &Path, prefix: &str) -> Result<Vec<(u64, PathBuf)>, IntegrationError> {
    let mut out = Vec::new();
    let entries = match std::fs::read_dir(dir) {
        Ok(e) => e,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(out),
        Err(e) => return Err(e.into()),
    };
    for entry in entries {
        let path = entry?.path();
        let n = path
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(|n| n.strip_suffix(".json"))
            .and_then(|n| n.strip_prefix(prefix))
            .and_then(|n| n.strip_prefix('-'))
            .and_then(|n| n.parse().ok());
        if let Some(n) = n {
            out.push((n, path));
        }
    }
    out.sort();
    Ok(out)
}

/// Issues as one JSON document each under `<state>/issues/`.
#[derive(Debug, Clone)]
pub struct LocalTracker {
    dir: PathBuf,
    prefix: String,
}

impl LocalTracker {
    pub fn new(state_dir: &Path, prefix: &str) -> Self {
        LocalTracker { dir: state_dir.join("issues"), prefix: prefix.to_string() }
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    pub fn issues(&self) -> Result<Vec<IssueRecord>, IntegrationError> {
        numbered(&self.dir, &self.prefix)?.into_iter().map(|(_, p)| read_doc(&p)).collect()
    }

    fn save(&self, issue: &IssueRecord) -> Result<(), IntegrationError> {
        write_doc(&self.path(&issue.key), issue)
    }
}

impl Tracker for LocalTracker {
    fn publish_plan(&self, plan: &SprintPlan) -> Result<BTreeMap<String, String>, IntegrationError> {
        let existing = self.issues()?;
        let mut next = numbered(&self.dir, &self.prefix)?.last().map_or(1, |(n, _)| n + 1);
        let mut mapping = BTreeMap::new();
        let slug = plan.slug();
        for st in &plan.subtasks {
            let issue = match existing.iter().find(|i| i.plan == slug && i.subtask_ref == st.id) {
                Some(prev) => IssueRecord {
                    title: st.title.clone(),
                    description: issue_description(st),
                    story_points: st.story_points,
                    ..prev.clone()
                },
                None => {
                    let key = format!("{}-{next}", self.prefix);
                    next += 1;
                    IssueRecord {
                        key,
                        plan: slug.clone(),
                        subtask_ref: st.id.clone(),
                        title: st.title.clone(),
                        description: issue_description(st),
                        story_points: st.story_points,
                        status: IssueStatus::Todo,
                        comments: Vec::new(),
                    }
                }
            };
            self.save(&issue)?;
            mapping.insert(st.id.clone(), issue.key);
        }
        Ok(mapping)
    }

    fn transition(&self, key: &str, status: IssueStatus) -> Result<IssueRecord, IntegrationError> {
        let mut issue = self.issue(key)?;
        if !issue.status.can_move_to(status) {
            return Err(IntegrationError::IllegalTransition { key: key.to_string(), from: issue.status, to: status });
        }
        issue.status = status;
        self.save(&issue)?;
        Ok(issue)
    }

    fn comment(&self, key: &str, body: &str) -> Result<(), IntegrationError> {
        let mut issue = self.issue(key)?;
        issue.comments.push(body.to_string());
        self.save(&issue)
    }

    fn issue(&self, key: &str) -> Result<IssueRecord, IntegrationError> {
        let path = self.path(key);
        if key.contains('/') || !path.is_file() {
            return Err(IntegrationError::UnknownIssue(key.to_string()));
        }
        read_doc(&path)
    }
}

/// Pull requests as one JSON document each under `<state>/prs/`.
#[derive(Debug, Clone)]
pub struct LocalPrs {
    dir: PathBuf,
}

impl LocalPrs {
    pub fn new(state_dir: &Path) -> Self {
        LocalPrs { dir: state_dir.join("prs") }
    }

    pub fn pull_requests(&self) -> Result<Vec<PullRequestRecord>, IntegrationError> {
        numbered(&self.dir, "PR")?.into_iter().map(|(_, p)| read_doc(&p)).collect()
    }

    pub fn get(&self, id: &str) -> Result<PullRequestRecord, IntegrationError> {
        let path = self.dir.join(format!("{id}.json"));
        if id.contains('/') || !path.is_file() {
            return Err(IntegrationError::UnknownPr(id.to_string()));
        }
        read_doc(&path)
    }
}

impl PullRequestHost for LocalPrs {
    fn open_pr(&self, source: &str, target: &str, title: &str, body: &str) -> Result<PullRequestRecord, IntegrationError> {
        if source == target {
            return Err(IntegrationError::SameBranch(source.to_string()));
        }
        let existing = self.pull_requests()?;
        if existing.iter().any(|p| p.state == PrState::Open && p.source_branch == source && p.target_branch == target) {
            return Err(IntegrationError::DuplicatePr { source_branch: source.to_string(), target_branch: target.to_string() });
        }
        let n = numbered(&self.dir, "PR")?.last().map_or(1, |(n, _)| n + 1);
        let pr = PullRequestRecord {
            id: format!("PR-{n}"),
            source_branch: source.to_string(),
            target_branch: target.to_string(),
            title: title.to_string(),
            body: body.to_string(),
            state: PrState::Open,
        };
        write_doc(&self.dir.join(format!("{}.json", pr.id)), &pr)?;
        Ok(pr)
    }

    fn update_body(&self, id: &str, body: &str) -> Result<PullRequestRecord, IntegrationError> {
        let mut pr = self.get(id)?;
        pr.body = body.to_string();
        write_doc(&self.dir.join(format!("{id}.json")), &pr)?;
        Ok(pr)
    }
}
