//! Helpers shared by the integration and acceptance tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use almas::orchestrator::RunConfig;
use almas::provider::{ChatProvider, CompletionRequest, CompletionResponse, FinishReason, ProviderError};
use sha2::{Digest, Sha256};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("fixtures")
}

pub fn copy_dir(src: &Path, dst: &Path) {
    for entry in walkdir::WalkDir::new(src) {
        let entry = entry.unwrap();
        let rel = entry.path().strip_prefix(src).unwrap();
        let target = dst.join(rel);
        if entry.file_type().is_dir() {
            std::fs::create_dir_all(&target).unwrap();
        } else {
            std::fs::copy(entry.path(), &target).unwrap();
        }
    }
}

/// A scratch copy of one fixture scenario with the shared fixture files
/// next to it, so the scenario's relative paths resolve.
pub struct Scenario {
    pub tmp: tempfile::TempDir,
    pub dir: PathBuf,
}

impl Scenario {
    pub fn new(name: &str) -> Self {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join(name);
        copy_dir(&fixtures().join(name), &dir);
        for shared in ["summaries.json", "few_shot.json"] {
            std::fs::copy(fixtures().join(shared), tmp.path().join(shared)).unwrap();
        }
        Scenario { tmp, dir }
    }

    /// Seeds the repository with a copy of a pinned tree.
    pub fn with_repo(self, tree: &str) -> Self {
        copy_dir(&fixtures().join(tree), &self.repo());
        self
    }

    pub fn config_path(&self) -> PathBuf {
        self.dir.join("almas.toml")
    }

    pub fn config(&self) -> RunConfig {
        RunConfig::load(&self.config_path()).unwrap()
    }

    pub fn repo(&self) -> PathBuf {
        self.dir.join("repo")
    }

    pub fn state(&self) -> PathBuf {
        self.repo().join(".almas")
    }
}

pub struct CliRun {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
    pub elapsed: Duration,
}

pub fn run_cli(config: &Path, args: &[&str]) -> CliRun {
    let start = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_almas"))
        .arg("--config")
        .arg(config)
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs");
    CliRun {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
        elapsed: start.elapsed(),
    }
}

pub fn snapshot(root: &Path) -> BTreeMap<String, Vec<u8>> {
    almas::fsutil::tree_snapshot(root).unwrap()
}

/// One provider call as the caller saw it.
#[derive(Debug, Clone)]
pub struct Call {
    pub request: CompletionRequest,
    pub response: CompletionResponse,
}

/// Records every successful call passing through to `inner`.
pub struct Recording {
    inner: Arc<dyn ChatProvider>,
    pub calls: Mutex<Vec<Call>>,
}

impl Recording {
    pub fn new(inner: Arc<dyn ChatProvider>) -> Arc<Self> {
        Arc::new(Recording { inner, calls: Mutex::new(Vec::new()) })
    }

    pub fn calls(&self) -> Vec<Call> {
        self.calls.lock().unwrap().clone()
    }
}

impl ChatProvider for Recording {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, ProviderError> {
        let response = self.inner.complete(request)?;
        self.calls.lock().unwrap().push(Call { request: request.clone(), response: response.clone() });
        Ok(response)
    }
}

/// Deterministic stand-in summarizer: answers summary prompts with a text
/// derived from the unit id and a hash of the prompt.
pub struct Summarizer;

pub fn is_summary_prompt(request: &CompletionRequest) -> bool {
    request.messages.last().is_some_and(|m| m.text.starts_with("Repository file: "))
}

impl ChatProvider for Summarizer {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, ProviderError> {
        let user = &request.messages.last().unwrap().text;
        let digest = hex::encode(Sha256::digest(user.as_bytes()));
        let units = user.split("\n\nSource of ").next().unwrap();
        let mut map = BTreeMap::new();
        for line in units.lines().filter_map(|l| l.strip_prefix("- ")) {
            let id = line.split(" (lines ").next().unwrap();
            map.insert(id.to_string(), format!("Summary of {id} at {}.", &digest[..12]));
        }
        let text = serde_json::to_string(&map).unwrap();
        Ok(CompletionResponse {
            prompt_tokens: (user.len() / 4) as u64,
            completion_tokens: (text.len() / 4) as u64,
            text,
            finish_reason: FinishReason::Complete,
        })
    }
}

/// Summary prompts go to the summarizer, everything else to `rest`.
pub struct SplitProvider {
    pub rest: Arc<dyn ChatProvider>,
}

impl ChatProvider for SplitProvider {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, ProviderError> {
        if is_summary_prompt(request) {
            Summarizer.complete(request)
        } else {
            self.rest.complete(request)
        }
    }
}
