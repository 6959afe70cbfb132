use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{IntegrationError, PrState, PullRequestHost, PullRequestRecord};
use crate::http::{JsonClient, Method, RetryPolicy};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct BitbucketConfig {
    pub base_url: String,
    pub workspace: String,
    pub repo_slug: String,
    pub token_env: String,
}

impl Default for BitbucketConfig {
    fn default() -> Self {
        BitbucketConfig {
            base_url: "https://api.bitbucket.org".into(),
            workspace: String::new(),
            repo_slug: String::new(),
            token_env: "BITBUCKET_TOKEN".into(),
        }
    }
}

/// Bitbucket Cloud REST 2.0 pull requests.
pub struct BitbucketPrs {
    client: JsonClient,
    config: BitbucketConfig,
}

impl BitbucketPrs {
    pub fn from_env(config: BitbucketConfig) -> Result<Self, IntegrationError> {
        let token = std::env::var(&config.token_env).map_err(|_| IntegrationError::MissingCredentials(config.token_env.clone()))?;
        Ok(Self::new(config, &token, RetryPolicy::default()))
    }

    pub fn new(config: BitbucketConfig, token: &str, retry: RetryPolicy) -> Self {
        let client = JsonClient::new(&config.base_url, Duration::from_secs(30), retry).with_header("Authorization", format!("Bearer {token}"));
        BitbucketPrs { client, config }
    }

    fn base(&self) -> String {
        format!("2.0/repositories/{}/{}/pullrequests", self.config.workspace, self.config.repo_slug)
    }
}

fn record(v: &Value) -> Result<PullRequestRecord, IntegrationError> {
    let s = |p: &str| v.pointer(p).and_then(Value::as_str).unwrap_or_default().to_string();
    let id = match v.get("id") {
        Some(Value::Number(n)) => n.to_string(),
        Some(Value::String(s)) => s.clone(),
        _ => return Err(IntegrationError::Protocol("pull request without id".into())),
    };
    let state = match s("/state").as_str() {
        "MERGED" => PrState::Merged,
        "DECLINED" | "SUPERSEDED" => PrState::Declined,
        _ => PrState::Open,
    };
    Ok(PullRequestRecord {
        id,
        source_branch: s("/source/branch/name"),
        target_branch: s("/destination/branch/name"),
        title: s("/title"),
        body: s("/description"),
        state,
    })
}

impl PullRequestHost for BitbucketPrs {
    fn open_pr(&self, source: &str, target: &str, title: &str, body: &str) -> Result<PullRequestRecord, IntegrationError> {
        if source == target {
            return Err(IntegrationError::SameBranch(source.to_string()));
        }
        let open = self.client.send(Method::Get, &format!("{}?state=OPEN", self.base()), None)?;
        for pr in open.get("values").and_then(Value::as_array).into_iter().flatten() {
            let pr = record(pr)?;
            if pr.source_branch == source && pr.target_branch == target {
                return Err(IntegrationError::DuplicatePr { source_branch: source.to_string(), target_branch: target.to_string() });
            }
        }
        let payload = json!({
            "title": title,
            "description": body,
            "source": { "branch": { "name": source } },
            "destination": { "branch": { "name": target } },
        });
        record(&self.client.send(Method::Post, &self.base(), Some(&payload))?)
    }

    fn update_body(&self, id: &str, body: &str) -> Result<PullRequestRecord, IntegrationError> {
        let v = self.client.send(Method::Put, &format!("{}/{id}", self.base()), Some(&json!({ "description": body }))).map_err(|e| match e {
            crate::http::HttpError::Status { status: 404, .. } => IntegrationError::UnknownPr(id.to_string()),
            other => other.into(),
        })?;
        record(&v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::http::testserver;

    fn prs(base: &str) -> BitbucketPrs {
        let config = BitbucketConfig { base_url: base.into(), workspace: "acme".into(), repo_slug: "stocks".into(), ..BitbucketConfig::default() };
        BitbucketPrs::new(config, "tok", RetryPolicy { attempts: 1, base_delay: Duration::ZERO })
    }

    fn pr_json(id: u64, source: &str) -> Value {
        json!({"id": id, "title": "T", "description": "body", "state": "OPEN", "source": {"branch": {"name": source}}, "destination": {"branch": {"name": "main"}}})
    }

    #[test]
    fn opens_when_no_duplicate() {
        let server = testserver::serve(vec![(200, json!({"values": [pr_json(3, "other")]}).to_string()), (201, pr_json(4, "almas/x").to_string())]);
        let pr = prs(&server.base_url).open_pr("almas/x", "main", "T", "body").unwrap();
        assert_eq!((pr.id.as_str(), pr.state, pr.source_branch.as_str()), ("4", PrState::Open, "almas/x"));
        let reqs = server.captured.lock().unwrap();
        assert_eq!((reqs[0].method.as_str(), reqs[0].path.as_str()), ("GET", "/2.0/repositories/acme/stocks/pullrequests?state=OPEN"));
        assert_eq!(reqs[1].method, "POST");
        let body: Value = serde_json::from_str(&reqs[1].body).unwrap();
        assert_eq!(body["destination"]["branch"]["name"], "main");
    }

    #[test]
    fn duplicate_open_pr() {
        let server = testserver::serve(vec![(200, json!({"values": [pr_json(3, "almas/x")]}).to_string())]);
        assert!(matches!(prs(&server.base_url).open_pr("almas/x", "main", "T", ""), Err(IntegrationError::DuplicatePr { .. })));
    }

    #[test]
    fn update_description() {
        let mut updated = pr_json(4, "almas/x");
        updated["description"] = json!("new body");
        let server = testserver::serve(vec![(200, updated.to_string())]);
        assert_eq!(prs(&server.base_url).update_body("4", "new body").unwrap().body, "new body");
        assert_eq!(server.captured.lock().unwrap()[0].method, "PUT");
    }
}
