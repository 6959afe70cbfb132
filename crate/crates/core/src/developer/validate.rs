//! Format, build and test gates, and failure extraction from test output.

use std::fmt;
use std::path::Path;
use std::process::{Command, Stdio};
use std::str::FromStr;
use std::time::{Duration, Instant};
use std::collections::BTreeMap;
use std::io::{Read, Seek};

use regex::Regex;
use serde::{Deserialize, Serialize};

/// Exit status `sh` reports when a command does not exist.
const SHELL_NOT_FOUND: i32 = 127;
const CATCH_ALL_ID: &str = "<unparsed output>";

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValidationConfig {
    pub format_cmd: Option<String>,
    pub build_cmd: Option<String>,
    pub test_cmd: Option<String>,
    pub adapter_id: Adapter,
    pub timeout_secs: Option<u64>,
    pub env: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Format,
    Build,
    Test,
    Complete,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Format => "format",
            Stage::Build => "build",
            Stage::Test => "test",
            Stage::Complete => "complete",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestFailure {
    pub test_id: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub implicated_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub implicated_line: Option<u32>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestResults {
    pub passed: u32,
    pub failures: Vec<TestFailure>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRun {
    pub stage: Stage,
    pub command: String,
    pub exit_code: Option<i32>,
    pub output: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub format_ok: bool,
    /// `None` when the format gate failed and the build never ran.
    pub build_ok: Option<bool>,
    /// `None` unless both earlier gates passed.
    pub tests: Option<TestResults>,
    pub stage_reached: Stage,
    #[serde(default)]
    pub notes: Vec<String>,
    #[serde(default)]
    pub runs: Vec<StageRun>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.stage_reached == Stage::Complete
    }

    /// Error log handed back to localization and the next generation.
    pub fn error_log(&self, max_chars: usize) -> String {
        if self.passed() {
            return String::new();
        }
        let mut log = format!("Validation failed at the {} stage.\n", self.stage_reached);
        if let Some(t) = &self.tests {
            for f in &t.failures {
                let loc = match (&f.implicated_path, f.implicated_line) {
                    (Some(p), Some(l)) => format!(" ({p}:{l})"),
                    (Some(p), None) => format!(" ({p})"),
                    _ => String::new(),
                };
                log.push_str(&format!("- {}{}: {}\n", f.test_id, loc, f.message.lines().next().unwrap_or("")));
            }
        }
        if let Some(run) = self.runs.last() {
            log.push_str(&format!("Output of `{}`:\n", run.command));
            let out = run.output.trim_end();
            let skip = out.chars().count().saturating_sub(max_chars);
            log.push_str(&out.chars().skip(skip).collect::<String>());
            log.push('\n');
        }
        log
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ValidateError {
    #[error("{stage} command not found: {command}")]
    CommandNotFound { stage: Stage, command: String },
    #[error("cannot run {stage} command: {source}")]
    Spawn { stage: Stage, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown test adapter {0:?}")]
pub struct UnknownAdapter(pub String);

/// Line-pattern sets for the supported test-runner dialects.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", try_from = "String", into = "String")]
pub enum Adapter {
    Unittest,
    Pytest,
    Cargo,
    #[default]
    Generic,
}

impl Adapter {
    pub fn id(self) -> &'static str {
        match self {
            Adapter::Unittest => "unittest",
            Adapter::Pytest => "pytest",
            Adapter::Cargo => "cargo",
            Adapter::Generic => "generic",
        }
    }

    fn matched(self, raw: &str) -> Vec<TestFailure> {
        match self {
            Adapter::Unittest => unittest_failures(raw),
            Adapter::Pytest => pytest_failures(raw),
            Adapter::Cargo => cargo_failures(raw),
            Adapter::Generic => Vec::new(),
        }
    }

    /// Passing-test count when the runner prints enough to derive it.
    pub fn passed(self, raw: &str) -> Option<u32> {
        let grab = |re: &str| Regex::new(re).expect("static regex").captures_iter(raw).map(|c| c[1].parse::<u32>().unwrap_or(0)).collect::<Vec<_>>();
        match self {
            Adapter::Unittest => {
                let ran = *grab(r"(?m)^Ran (\d+) tests?").last()?;
                let bad: u32 = grab(r"(?m)^FAILED \(.*?failures=(\d+)").iter().chain(&grab(r"(?m)^FAILED \(.*?errors=(\d+)")).sum();
                Some(ran.saturating_sub(bad))
            }
            Adapter::Pytest => grab(r"(\d+) passed").last().copied().or(Some(0)),
            Adapter::Cargo => Some(grab(r"test result: \w+\. (\d+) passed").iter().sum()),
            Adapter::Generic => None,
        }
    }
}

impl FromStr for Adapter {
    type Err = UnknownAdapter;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "unittest" => Ok(Adapter::Unittest),
            "pytest" => Ok(Adapter::Pytest),
            "cargo" => Ok(Adapter::Cargo),
            "generic" => Ok(Adapter::Generic),
            other => Err(UnknownAdapter(other.to_string())),
        }
    }
}

impl TryFrom<String> for Adapter {
    type Error = UnknownAdapter;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Adapter> for String {
    fn from(a: Adapter) -> String {
        a.id().to_string()
    }
}

/// Extracts one failure per matched block. A nonzero exit with no matches
/// yields a single catch-all failure holding the whole output.
pub fn parse_failures(raw_output: &str, adapter_id: &str, exit_code: i32) -> Result<Vec<TestFailure>, UnknownAdapter> {
    let adapter: Adapter = adapter_id.parse()?;
    Ok(failures_for(adapter, raw_output, exit_code))
}

fn failures_for(adapter: Adapter, raw: &str, exit_code: i32) -> Vec<TestFailure> {
    let mut found = adapter.matched(raw);
    if found.is_empty() && exit_code != 0 {
        found.push(TestFailure { test_id: CATCH_ALL_ID.into(), message: raw.to_string(), implicated_path: None, implicated_line: None });
    }
    found
}

fn is_rule(line: &str) -> bool {
    let t = line.trim_end();
    t.len() >= 10 && (t.chars().all(|c| c == '=') || t.chars().all(|c| c == '-'))
}

fn unittest_failures(raw: &str) -> Vec<TestFailure> {
    let header = Regex::new(r"^(FAIL|ERROR): (\S+) \(([^)]*)\)").expect("static regex");
    let location = Regex::new(r#"File "([^"]+)", line (\d+)"#).expect("static regex");
    let lines: Vec<&str> = raw.lines().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < lines.len() {
        let Some(c) = header.captures(lines[i]) else {
            i += 1;
            continue;
        };
        let (name, owner) = (&c[2], &c[3]);
        let test_id = if owner.ends_with(&format!(".{name}")) { owner.to_string() } else { format!("{owner}.{name}") };
        i += 1;
        if i < lines.len() && is_rule(lines[i]) {
            i += 1;
        }
        let start = i;
        while i < lines.len() && !is_rule(lines[i]) {
            i += 1;
        }
        let body = &lines[start..i];
        let message = body.iter().rev().find(|l| !l.trim().is_empty()).map(|l| l.trim().to_string()).unwrap_or_default();
        let loc = body.iter().filter_map(|l| location.captures(l)).next_back();
        out.push(TestFailure {
            test_id,
            message,
            implicated_path: loc.as_ref().map(|c| c[1].to_string()),
            implicated_line: loc.as_ref().and_then(|c| c[2].parse().ok()),
        });
    }
    out
}

fn pytest_failures(raw: &str) -> Vec<TestFailure> {
    let summary = Regex::new(r"(?m)^(?:FAILED|ERROR) (\S+?)(?: - (.*))?$").expect("static regex");
    summary
        .captures_iter(raw)
        .map(|c| {
            let test_id = c[1].to_string();
            let path = test_id.split("::").next().unwrap_or(&test_id).to_string();
            let line_re = Regex::new(&format!(r"(?m)^{}:(\d+): ", regex::escape(&path))).expect("escaped regex");
            let line = line_re.captures_iter(raw).last().and_then(|m| m[1].parse().ok());
            TestFailure {
                message: c.get(2).map(|m| m.as_str().trim().to_string()).unwrap_or_default(),
                implicated_path: Some(path),
                implicated_line: line,
                test_id,
            }
        })
        .collect()
}

fn cargo_failures(raw: &str) -> Vec<TestFailure> {
    let header = Regex::new(r"^---- (\S+) stdout ----$").expect("static regex");
    let panic = Regex::new(r"panicked at ([^:\s]+):(\d+):\d+:?").expect("static regex");
    let lines: Vec<&str> = raw.lines().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < lines.len() {
        let Some(c) = header.captures(lines[i]) else {
            i += 1;
            continue;
        };
        let test_id = c[1].to_string();
        i += 1;
        let start = i;
        while i < lines.len() && !header.is_match(lines[i]) && lines[i].trim_end() != "failures:" {
            i += 1;
        }
        let body = &lines[start..i];
        let mut message = Vec::new();
        let mut loc = None;
        for (n, l) in body.iter().enumerate() {
            if let Some(p) = panic.captures(l) {
                loc = Some((p[1].to_string(), p[2].parse().ok()));
                message = body[n + 1..].iter().take_while(|l| !l.starts_with("note:") && !l.trim().is_empty()).map(|l| l.trim()).collect();
                break;
            }
        }
        out.push(TestFailure {
            test_id,
            message: message.join("\n"),
            implicated_path: loc.as_ref().map(|l| l.0.clone()),
            implicated_line: loc.and_then(|l| l.1),
        });
    }
    out
}

/// Runs `sh -c command` in `dir` with stdout and stderr merged.
fn run_stage(stage: Stage, command: &str, dir: &Path, cfg: &ValidationConfig) -> Result<StageRun, ValidateError> {
    let spawn_err = |source| ValidateError::Spawn { stage, source };
    let mut sink = tempfile::tempfile().map_err(spawn_err)?;
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(command)
        .current_dir(dir)
        .envs(&cfg.env)
        .stdin(Stdio::null())
        .stdout(sink.try_clone().map_err(spawn_err)?)
        .stderr(sink.try_clone().map_err(spawn_err)?)
        .spawn()
        .map_err(spawn_err)?;
    let deadline = cfg.timeout_secs.map(|s| Instant::now() + Duration::from_secs(s));
    let mut timed_out = false;
    let status = loop {
        if let Some(status) = child.try_wait().map_err(spawn_err)? {
            break status;
        }
        if deadline.is_some_and(|d| Instant::now() >= d) {
            let _ = child.kill();
            timed_out = true;
            break child.wait().map_err(spawn_err)?;
        }
        std::thread::sleep(Duration::from_millis(10));
    };
    let mut bytes = Vec::new();
    sink.rewind().map_err(spawn_err)?;
    sink.read_to_end(&mut bytes).map_err(spawn_err)?;
    let mut output = String::from_utf8_lossy(&bytes).into_owned();
    if timed_out {
        output.push_str(&format!("\n[timed out after {}s]\n", cfg.timeout_secs.unwrap_or(0)));
    }
    // Absolute checkout paths make logs differ between otherwise identical runs.
    for prefix in root_prefixes(dir) {
        output = output.replace(&prefix, "");
    }
    let exit_code = if timed_out { None } else { status.code() };
    if exit_code == Some(SHELL_NOT_FOUND) {
        return Err(ValidateError::CommandNotFound { stage, command: command.to_string() });
    }
    Ok(StageRun { stage, command: command.to_string(), exit_code, output })
}

/// `root/` as given and canonicalized, longest first.
fn root_prefixes(root: &Path) -> Vec<String> {
    let mut roots: Vec<String> = [Some(root.to_path_buf()), root.canonicalize().ok()]
        .into_iter()
        .flatten()
        .map(|p| format!("{}/", p.to_string_lossy().trim_end_matches('/')))
        .collect();
    roots.sort_by_key(|r| std::cmp::Reverse(r.len()));
    roots.dedup();
    roots
}

fn relativize(failures: &mut [TestFailure], root: &Path) {
    let roots = root_prefixes(root);
    for f in failures {
        if let Some(p) = &mut f.implicated_path {
            if let Some(rel) = roots.iter().find_map(|r| p.strip_prefix(r.as_str())) {
                *p = rel.to_string();
            }
        }
    }
}

/// Runs the format, build and test gates in order, stopping at the first
/// failure. Absent commands pass with a note.
pub fn validate(repo_root: &Path, config: &ValidationConfig) -> Result<ValidationReport, ValidateError> {
    let mut report = ValidationReport { format_ok: false, build_ok: None, tests: None, stage_reached: Stage::Format, notes: Vec::new(), runs: Vec::new() };
    let gate = |stage: Stage, cmd: &Option<String>, report: &mut ValidationReport| -> Result<bool, ValidateError> {
        match cmd.as_deref().map(str::trim).filter(|c| !c.is_empty()) {
            None => {
                report.notes.push(format!("no {stage} command configured; {stage} passes"));
                Ok(true)
            }
            Some(c) => {
                let run = run_stage(stage, c, repo_root, config)?;
                let ok = run.exit_code == Some(0);
                report.runs.push(run);
                Ok(ok)
            }
        }
    };

    report.format_ok = gate(Stage::Format, &config.format_cmd, &mut report)?;
    if !report.format_ok {
        return Ok(report);
    }
    report.stage_reached = Stage::Build;
    let build_ok = gate(Stage::Build, &config.build_cmd, &mut report)?;
    report.build_ok = Some(build_ok);
    if !build_ok {
        return Ok(report);
    }
    report.stage_reached = Stage::Test;
    let tests_ok = gate(Stage::Test, &config.test_cmd, &mut report)?;
    let results = match report.runs.last().filter(|r| r.stage == Stage::Test) {
        Some(run) => {
            let mut failures = failures_for(config.adapter_id, &run.output, run.exit_code.unwrap_or(-1));
            if tests_ok {
                failures.retain(|f| f.test_id != CATCH_ALL_ID);
            }
            relativize(&mut failures, repo_root);
            TestResults { passed: config.adapter_id.passed(&run.output).unwrap_or(0), failures }
        }
        None => TestResults::default(),
    };
    report.tests = Some(results);
    if tests_ok {
        report.stage_reached = Stage::Complete;
    }
    Ok(report)
}
