//! The Peer Agent: reviews a diff against acceptance criteria and renders
//! a report for the pull request. The recommendation is always derived
//! locally from the parsed findings and verdicts.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::llm::{parse_json, AskError, Llm};
use crate::provider::{Message, ProviderError};

#[derive(Debug, thiserror::Error)]
pub enum ReviewError {
    #[error("diff is empty")]
    EmptyDiff,
    #[error("no acceptance criteria to review against")]
    NoCriteria,
    #[error("review schema error: {0}")]
    Schema(String),
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Functionality,
    Vulnerability,
    Performance,
    Hallucination,
    Quality,
}

impl Category {
    pub const ALL: [Category; 5] = [Category::Functionality, Category::Vulnerability, Category::Performance, Category::Hallucination, Category::Quality];

    fn title(self) -> &'static str {
        match self {
            Category::Functionality => "Functionality",
            Category::Vulnerability => "Vulnerability",
            Category::Performance => "Performance",
            Category::Hallucination => "Hallucination",
            Category::Quality => "Quality",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Info,
    Warn,
    Block,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Location {
    pub path: String,
    pub start_line: u32,
    pub end_line: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewFinding {
    pub category: Category,
    pub severity: Severity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub location: Option<Location>,
    pub note: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Met,
    Unmet,
    Unclear,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CriterionVerdict {
    pub criterion: String,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Recommendation {
    Approve,
    RequestChanges,
}

impl fmt::Display for Recommendation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Recommendation::Approve => "approve",
            Recommendation::RequestChanges => "request_changes",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewReport {
    pub changed_files: Vec<String>,
    pub findings: Vec<ReviewFinding>,
    pub criterion_verdicts: Vec<CriterionVerdict>,
    #[serde(default)]
    pub reviewer_summary: String,
    pub recommendation: Recommendation,
    pub rendered: String,
}

impl ReviewReport {
    /// Builds a report, deriving the recommendation and the rendering.
    pub fn new(changed_files: Vec<String>, findings: Vec<ReviewFinding>, criterion_verdicts: Vec<CriterionVerdict>, reviewer_summary: String) -> Self {
        let recommendation = derive_recommendation(&findings, &criterion_verdicts);
        let mut report = ReviewReport { changed_files, findings, criterion_verdicts, reviewer_summary, recommendation, rendered: String::new() };
        report.rendered = render(&report);
        report
    }
}

/// Any block finding or unmet criterion requests changes.
pub fn derive_recommendation(findings: &[ReviewFinding], verdicts: &[CriterionVerdict]) -> Recommendation {
    if findings.iter().any(|f| f.severity == Severity::Block) || verdicts.iter().any(|v| v.verdict == Verdict::Unmet) {
        Recommendation::RequestChanges
    } else {
        Recommendation::Approve
    }
}

/// Paths named by `diff --git` or `+++`/`---` headers, in first-seen order.
pub fn diff_paths(diff: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    let mut push = |p: &str| {
        let p = p.trim();
        if p != "/dev/null" && !p.is_empty() && !out.iter().any(|x| x == p) {
            out.push(p.to_string());
        }
    };
    for line in diff.lines() {
        if let Some(rest) = line.strip_prefix("diff --git a/") {
            if let Some((a, _)) = rest.split_once(" b/") {
                push(a);
            }
        } else if let Some(p) = line.strip_prefix("+++ b/").or_else(|| line.strip_prefix("--- a/")) {
            push(p);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewGate {
    #[default]
    Advisory,
    Enforcing,
}

/// Whether the pipeline may proceed past review.
pub fn gate(report: &ReviewReport, policy: ReviewGate) -> bool {
    match policy {
        ReviewGate::Advisory => true,
        ReviewGate::Enforcing => report.recommendation == Recommendation::Approve,
    }
}

const PEER_SYSTEM: &str = "You are the Peer Agent of a software team. You review code differences before they are merged.

Assess the diff in five categories:
- functionality: does the change do what the acceptance criteria ask?
- vulnerability: injection, unsafe input handling, secrets, path traversal.
- performance: needless quadratic work, repeated I/O, unbounded memory.
- hallucination: calls to APIs, modules or functions that do not exist.
- quality: readability, naming, dead code, missing tests.
Severity is info, warn or block; use block only for defects that must be fixed before merge.";

#[derive(Deserialize)]
struct Reply {
    #[serde(default)]
    summary: String,
    #[serde(default)]
    findings: Vec<ReplyFinding>,
    #[serde(default)]
    criteria: Vec<ReplyVerdict>,
}

#[derive(Deserialize)]
struct ReplyFinding {
    category: Category,
    severity: Severity,
    #[serde(default)]
    path: Option<String>,
    #[serde(default)]
    start_line: Option<u32>,
    #[serde(default)]
    end_line: Option<u32>,
    note: String,
}

#[derive(Deserialize)]
struct ReplyVerdict {
    id: usize,
    verdict: Verdict,
}

pub fn review_prompt(diff: &str, criteria: &[String]) -> Vec<Message> {
    let mut prompt = String::from("Acceptance criteria:\n");
    for (i, c) in criteria.iter().enumerate() {
        prompt.push_str(&format!("{}. {c}\n", i + 1));
    }
    prompt.push_str("\nDiff:\n```diff\n");
    prompt.push_str(diff.trim_end());
    prompt.push_str(
        "\n```\n\nReply with only a JSON object: {\"summary\": \"one sentence\", \"findings\": [{\"category\": \"...\", \
         \"severity\": \"...\", \"path\": \"...\", \"start_line\": 1, \"end_line\": 1, \"note\": \"...\"}], \
         \"criteria\": [{\"id\": 1, \"verdict\": \"met|unmet|unclear\"}]}. Give a verdict for every criterion id.",
    );
    vec![Message::system(PEER_SYSTEM), Message::user(prompt)]
}

fn convert(reply: Reply, criteria: &[String]) -> Result<(Vec<ReviewFinding>, Vec<CriterionVerdict>, String), String> {
    let mut findings = Vec::with_capacity(reply.findings.len());
    for f in reply.findings {
        if f.note.trim().is_empty() {
            return Err("every finding needs a non-empty note".into());
        }
        let location = f.path.filter(|p| !p.trim().is_empty()).map(|path| {
            let start = f.start_line.unwrap_or(1).max(1);
            Location { path: path.trim().to_string(), start_line: start, end_line: f.end_line.unwrap_or(start).max(start) }
        });
        findings.push(ReviewFinding { category: f.category, severity: f.severity, location, note: f.note.trim().to_string() });
    }
    let mut verdicts: Vec<CriterionVerdict> = criteria.iter().map(|c| CriterionVerdict { criterion: c.clone(), verdict: Verdict::Unclear }).collect();
    for v in reply.criteria {
        match v.id.checked_sub(1).and_then(|i| verdicts.get_mut(i)) {
            Some(slot) => slot.verdict = v.verdict,
            None => return Err(format!("criterion id {} does not exist; ids run from 1 to {}", v.id, criteria.len())),
        }
    }
    Ok((findings, verdicts, reply.summary.trim().to_string()))
}

/// Reviews a diff. Criteria the model skips are recorded as unclear.
pub fn review(diff: &str, criteria: &[String], llm: &Llm<'_>) -> Result<ReviewReport, ReviewError> {
    if diff.trim().is_empty() {
        return Err(ReviewError::EmptyDiff);
    }
    if criteria.is_empty() {
        return Err(ReviewError::NoCriteria);
    }
    let parse = |text: &str| parse_json::<Reply>(text).and_then(|r| convert(r, criteria));
    let (findings, verdicts, summary) = llm.ask_parsed(review_prompt(diff, criteria), parse).map_err(|e| match e {
        AskError::Provider(p) => ReviewError::Provider(p),
        AskError::Invalid { error, .. } => ReviewError::Schema(error),
    })?;
    Ok(ReviewReport::new(diff_paths(diff), findings, verdicts, summary))
}

fn cell(text: &str) -> String {
    text.replace('|', "\\|").split_whitespace().collect::<Vec<_>>().join(" ")
}

fn finding_order(a: &ReviewFinding, b: &ReviewFinding) -> std::cmp::Ordering {
    let key = |f: &ReviewFinding| f.location.as_ref().map(|l| (l.path.clone(), l.start_line, l.end_line));
    // Findings without a location sort after located ones.
    match (key(a), key(b)) {
        (Some(x), Some(y)) => x.cmp(&y),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    }
    .then_with(|| b.severity.cmp(&a.severity))
    .then_with(|| a.note.cmp(&b.note))
}

/// Deterministic Markdown rendering of a report.
pub fn render(report: &ReviewReport) -> String {
    let count = |s: Severity| report.findings.iter().filter(|f| f.severity == s).count();
    let met = report.criterion_verdicts.iter().filter(|v| v.verdict == Verdict::Met).count();
    let mut out = String::from("## Peer review\n\n");
    out.push_str(&format!(
        "Recommendation: **{}**. {} changed file(s), {} finding(s) ({} block, {} warn, {} info), {}/{} criteria met.\n\n",
        report.recommendation,
        report.changed_files.len(),
        report.findings.len(),
        count(Severity::Block),
        count(Severity::Warn),
        count(Severity::Info),
        met,
        report.criterion_verdicts.len()
    ));
    if !report.reviewer_summary.is_empty() {
        out.push_str(&format!("> {}\n\n", cell(&report.reviewer_summary)));
    }
    out.push_str("### Changed files\n\n");
    for p in &report.changed_files {
        out.push_str(&format!("- `{p}`\n"));
    }
    out.push_str("\n### Findings\n");
    for cat in Category::ALL {
        let mut rows: Vec<&ReviewFinding> = report.findings.iter().filter(|f| f.category == cat).collect();
        out.push_str(&format!("\n#### {}\n\n", cat.title()));
        if rows.is_empty() {
            out.push_str("No findings.\n");
            continue;
        }
        rows.sort_by(|a, b| finding_order(a, b));
        out.push_str("| Severity | Location | Note |\n|---|---|---|\n");
        for f in rows {
            let loc = match &f.location {
                Some(l) if l.start_line == l.end_line => format!("`{}:{}`", l.path, l.start_line),
                Some(l) => format!("`{}:{}-{}`", l.path, l.start_line, l.end_line),
                None => "-".to_string(),
            };
            let sev = match f.severity {
                Severity::Info => "info",
                Severity::Warn => "warn",
                Severity::Block => "block",
            };
            out.push_str(&format!("| {sev} | {loc} | {} |\n", cell(&f.note)));
        }
    }
    out.push_str("\n### Acceptance criteria\n\n");
    for v in &report.criterion_verdicts {
        let (mark, word) = match v.verdict {
            Verdict::Met => ("x", "met"),
            Verdict::Unmet => (" ", "unmet"),
            Verdict::Unclear => ("?", "unclear"),
        };
        out.push_str(&format!("- [{mark}] {} ({word})\n", cell(&v.criterion)));
    }
    out.push_str(&format!("\n### Recommendation\n\n{}\n", report.recommendation));
    out
}
