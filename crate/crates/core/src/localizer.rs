//! The Control Agent: the model reads the summary outline and picks the
//! code units a sub-task must touch; their source is then sliced out of
//! the working tree under a token budget.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::fsutil;
use crate::index::{render_outline, IndexError, SummaryIndex};
use crate::llm::{parse_json, AskError, Llm};
use crate::provider::{Message, ProviderError};
use crate::tokens::{approx_tokens, truncate_to_tokens};

pub const DEFAULT_K: usize = 5;

#[derive(Debug, thiserror::Error)]
pub enum LocalizeError {
    #[error("the summary index is empty")]
    EmptyIndex,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("token budget must be positive")]
    InvalidBudget,
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("relocalization needs an error log and the prior selection")]
    MissingErrorLog,
    #[error("no valid code unit ids in the model's selection")]
    EmptyLocalization,
    #[error("response schema error: {0}")]
    Schema(String),
    #[error("stale index: {0}; run an index update")]
    StaleIndex(String),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalizationQuery {
    pub subtask_id: String,
    pub subtask_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_log: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior_selection: Option<Vec<String>>,
}

impl LocalizationQuery {
    pub fn new(subtask_id: impl Into<String>, subtask_text: impl Into<String>) -> Self {
        LocalizationQuery { subtask_id: subtask_id.into(), subtask_text: subtask_text.into(), error_log: None, prior_selection: None }
    }

    pub fn with_failure(mut self, error_log: impl Into<String>, prior: Vec<String>) -> Self {
        self.error_log = Some(error_log.into());
        self.prior_selection = Some(prior);
        self
    }

    fn validate(&self) -> Result<(), LocalizeError> {
        if self.subtask_text.trim().is_empty() {
            return Err(LocalizeError::InvalidQuery("sub-task text is empty".into()));
        }
        if self.error_log.is_some() && self.prior_selection.is_none() {
            return Err(LocalizeError::InvalidQuery("an error log requires the prior selection".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selection {
    pub unit_id: String,
    pub rationale: String,
    /// The unit was already part of the prior (failed) selection.
    #[serde(default)]
    pub repeat: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Localization {
    pub selections: Vec<Selection>,
    pub outline_tokens_used: usize,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl Localization {
    pub fn unit_ids(&self) -> Vec<String> {
        self.selections.iter().map(|s| s.unit_id.clone()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LocalizeOptions {
    pub k: usize,
    pub outline_tokens: usize,
}

impl Default for LocalizeOptions {
    fn default() -> Self {
        LocalizeOptions { k: DEFAULT_K, outline_tokens: 2000 }
    }
}

const CONTROL_SYSTEM: &str = "You are the Control Agent of a software team. You read a natural-language outline of \
a codebase and decide which code units must be changed or consulted to complete a sub-task.";

#[derive(Deserialize)]
struct Reply {
    selections: Vec<ReplySelection>,
}

#[derive(Deserialize)]
struct ReplySelection {
    unit_id: String,
    #[serde(default)]
    rationale: String,
}

pub fn localize_prompt(query: &LocalizationQuery, outline: &str, k: usize) -> Vec<Message> {
    let mut prompt = format!(
        "Codebase outline (one line per code unit: `unit id | summary`):\n{outline}\n\n\
         Sub-task {}:\n{}\n",
        query.subtask_id, query.subtask_text
    );
    if let Some(log) = &query.error_log {
        prompt.push_str(&format!("\nThe previous attempt failed validation. Error log:\n{log}\n"));
    }
    if let Some(prior) = &query.prior_selection {
        prompt.push_str("\nUnits already tried in the previous attempt:\n");
        for id in prior {
            prompt.push_str(&format!("- {id} (already tried)\n"));
        }
    }
    prompt.push_str(&format!(
        "\nSelect at most {k} unit ids from the outline, most relevant first. Reply with only a JSON object of \
         the form {{\"selections\": [{{\"unit_id\": \"...\", \"rationale\": \"...\"}}]}}."
    ));
    vec![Message::system(CONTROL_SYSTEM), Message::user(prompt)]
}

/// Localizes a sub-task. Ids the model invents are dropped with a warning.
pub fn localize(
    query: &LocalizationQuery,
    index: &SummaryIndex,
    llm: &Llm<'_>,
    options: LocalizeOptions,
) -> Result<Localization, LocalizeError> {
    query.validate()?;
    if index.is_empty() {
        return Err(LocalizeError::EmptyIndex);
    }
    if options.k == 0 {
        return Err(LocalizeError::InvalidK);
    }
    if options.outline_tokens == 0 {
        return Err(LocalizeError::InvalidBudget);
    }
    let outline = render_outline(index, None, options.outline_tokens);
    let reply: Reply = llm
        .ask_parsed(localize_prompt(query, &outline, options.k), parse_json::<Reply>)
        .map_err(|e| match e {
            AskError::Provider(p) => LocalizeError::Provider(p),
            AskError::Invalid { error, .. } => LocalizeError::Schema(error),
        })?;

    let prior: BTreeSet<&str> = query.prior_selection.iter().flatten().map(String::as_str).collect();
    let mut seen = BTreeSet::new();
    let mut selections = Vec::new();
    let mut warnings = Vec::new();
    for s in reply.selections {
        let id = s.unit_id.trim().to_string();
        if !index.contains(&id) {
            warnings.push(format!("dropped unknown unit id {id:?}"));
            continue;
        }
        if !seen.insert(id.clone()) {
            continue;
        }
        if selections.len() == options.k {
            warnings.push(format!("dropped {id:?}: more than k={} selections", options.k));
            continue;
        }
        let repeat = prior.contains(id.as_str());
        selections.push(Selection { unit_id: id, rationale: s.rationale.trim().to_string(), repeat });
    }
    if selections.is_empty() {
        return Err(LocalizeError::EmptyLocalization);
    }
    Ok(Localization { selections, outline_tokens_used: approx_tokens(&outline), warnings })
}

/// Localization after a failed validation; the query must carry the error
/// log and the prior selection.
pub fn relocalize(
    query: &LocalizationQuery,
    index: &SummaryIndex,
    llm: &Llm<'_>,
    options: LocalizeOptions,
) -> Result<Localization, LocalizeError> {
    if query.error_log.is_none() || query.prior_selection.is_none() {
        return Err(LocalizeError::MissingErrorLog);
    }
    localize(query, index, llm, options)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Excerpt {
    pub unit_id: String,
    pub path: String,
    pub start_line: usize,
    pub source_text: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextBundle {
    pub excerpts: Vec<Excerpt>,
    pub total_tokens: usize,
    /// The top-ranked excerpt alone exceeded the budget and was cut.
    #[serde(default)]
    pub truncated_top: bool,
}

impl ContextBundle {
    pub fn is_empty(&self) -> bool {
        self.excerpts.is_empty()
    }

    /// Keeps the longest prefix of `candidates` that fits the budget; the
    /// first candidate is always kept, truncated if it alone is too large.
    fn from_ranked(candidates: Vec<Excerpt>, budget: usize) -> Self {
        let mut bundle = ContextBundle::default();
        for (i, mut ex) in candidates.into_iter().enumerate() {
            let tokens = approx_tokens(&ex.source_text);
            if bundle.total_tokens + tokens <= budget {
                bundle.total_tokens += tokens;
                bundle.excerpts.push(ex);
                continue;
            }
            if i == 0 {
                ex.source_text = truncate_to_tokens(&ex.source_text, budget).to_string();
                bundle.total_tokens = approx_tokens(&ex.source_text);
                bundle.truncated_top = true;
                bundle.excerpts.push(ex);
            }
            break;
        }
        bundle
    }

    /// Prompt rendering: one fenced block per excerpt.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for ex in &self.excerpts {
            let lines = ex.source_text.lines().count().max(1);
            out.push_str(&format!(
                "### {} (lines {}-{}) [{}]\n```\n{}",
                ex.path,
                ex.start_line,
                ex.start_line + lines - 1,
                ex.unit_id,
                ex.source_text
            ));
            if !ex.source_text.ends_with('\n') {
                out.push('\n');
            }
            out.push_str("```\n\n");
        }
        out
    }
}

fn read_current(repo_root: &Path, path: &str, index: &SummaryIndex, cache: &mut BTreeMap<String, String>) -> Result<String, LocalizeError> {
    if let Some(text) = cache.get(path) {
        return Ok(text.clone());
    }
    let full = fsutil::join_rel(repo_root, path);
    let bytes = match std::fs::read(&full) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(LocalizeError::StaleIndex(format!("{path} no longer exists")));
        }
        Err(e) => return Err(e.into()),
    };
    if index.file_hash(path) != Some(fsutil::sha256_hex(&bytes).as_str()) {
        return Err(LocalizeError::StaleIndex(format!("{path} changed since it was indexed")));
    }
    let text = String::from_utf8_lossy(&bytes).into_owned();
    cache.insert(path.to_string(), text.clone());
    Ok(text)
}

/// Slices each selected unit's span from the working tree, in selection
/// order, dropping whole excerpts from the bottom until the budget holds.
pub fn assemble_context(
    localization: &Localization,
    repo_root: &Path,
    index: &SummaryIndex,
    token_budget: usize,
) -> Result<ContextBundle, LocalizeError> {
    if token_budget == 0 {
        return Err(LocalizeError::InvalidBudget);
    }
    let mut cache = BTreeMap::new();
    let mut candidates = Vec::new();
    for sel in &localization.selections {
        let node = index.lookup_unit(&sel.unit_id).map_err(|e| match e {
            IndexError::NotFound(id) => LocalizeError::StaleIndex(format!("unit {id} is not in the index")),
            other => LocalizeError::StaleIndex(other.to_string()),
        })?;
        let unit = &node.unit;
        let text = read_current(repo_root, &unit.path, index, &mut cache)?;
        let lines: Vec<&str> = text.lines().collect();
        let end = unit.span.end_line.min(lines.len());
        let mut source = if lines.is_empty() { String::new() } else { lines[unit.span.start_line - 1..end].join("\n") };
        if !source.is_empty() {
            source.push('\n');
        }
        candidates.push(Excerpt { unit_id: unit.id.clone(), path: unit.path.clone(), start_line: unit.span.start_line, source_text: source });
    }
    Ok(ContextBundle::from_ranked(candidates, token_budget))
}

/// Whole-file context for phases without an index (the generation phase),
/// ranked in the given order.
pub fn assemble_files(repo_root: &Path, paths: &[String], token_budget: usize) -> Result<ContextBundle, LocalizeError> {
    if token_budget == 0 {
        return Err(LocalizeError::InvalidBudget);
    }
    let mut candidates = Vec::new();
    for path in paths {
        let bytes = std::fs::read(fsutil::join_rel(repo_root, path))?;
        candidates.push(Excerpt {
            unit_id: crate::index::file_unit_id(path),
            path: path.clone(),
            start_line: 1,
            source_text: String::from_utf8_lossy(&bytes).into_owned(),
        });
    }
    Ok(ContextBundle::from_ranked(candidates, token_budget))
}
