//! The Developer Agent: turns a sub-task plus its code context into a
//! changeset, applies it atomically and validates the result.

mod changeset;
mod validate;

pub use changeset::{
    apply, parse_changeset, rollback, unified_diff, ApplyError, ChangeSet, ChangeSetError, FileEdit, GrammarError, Inverse,
    PriorFile,
};
pub use validate::{
    parse_failures, validate, Adapter, Stage, StageRun, TestFailure, TestResults, UnknownAdapter, ValidateError, ValidationConfig,
    ValidationReport,
};

use crate::llm::{AskError, Llm};
use crate::localizer::ContextBundle;
use crate::planner::SubTask;
use crate::provider::{Message, ProviderError};

#[derive(Debug, thiserror::Error)]
pub enum GenerateError {
    #[error("no code context for a sub-task on an existing codebase")]
    NoContext,
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("unusable developer response: {error}")]
    Invalid { error: String, last_response: String },
}

/// Inputs to one generation attempt.
#[derive(Debug, Clone, Copy)]
pub struct GenerationRequest<'a> {
    pub subtask: &'a SubTask,
    pub context: &'a ContextBundle,
    /// The repository has no code yet for this work.
    pub greenfield: bool,
    /// Error log from the previous failed attempt.
    pub feedback: Option<&'a str>,
}

const DEVELOPER_SYSTEM: &str = "You are the Developer Agent of a software team. You implement one sub-task at a time \
and always write unit tests for its acceptance criteria.

Reply with complete file contents only, using this exact format for every file you create or replace:
===FILE path=<repo-relative path>===
<full file content>
===END===
To delete a file, write a single line: ===DELETE path=<repo-relative path>===
Never send partial files or diffs.";

pub fn commit_message(subtask: &SubTask) -> String {
    format!("{}: {}", subtask.id, subtask.title)
}

/// Heuristic used to check that a response ships tests.
pub fn is_test_path(path: &str) -> bool {
    let mut parts: Vec<&str> = path.split('/').collect();
    let name = parts.pop().unwrap_or("");
    let stem = name.split('.').next().unwrap_or("");
    parts.iter().any(|d| matches!(*d, "test" | "tests" | "__tests__" | "spec"))
        || stem.starts_with("test_")
        || stem.ends_with("_test")
        || stem == "test"
        || name.contains(".test.")
        || name.contains(".spec.")
}

pub fn generation_prompt(req: &GenerationRequest<'_>) -> Vec<Message> {
    let st = req.subtask;
    let mut prompt = format!("Sub-task {}: {}\n{}\n", st.id, st.title, st.description.trim());
    if !st.acceptance_criteria.is_empty() {
        prompt.push_str("\nAcceptance criteria:\n");
        for c in &st.acceptance_criteria {
            prompt.push_str(&format!("- {c}\n"));
        }
    }
    if req.context.is_empty() {
        prompt.push_str("\nThe repository has no code relevant to this sub-task yet.\n");
    } else {
        prompt.push_str("\nRelevant code:\n\n");
        prompt.push_str(&req.context.render());
    }
    if let Some(log) = req.feedback {
        prompt.push_str("\nYour previous attempt failed validation:\n");
        prompt.push_str(log.trim_end());
        prompt.push('\n');
    }
    vec![Message::system(DEVELOPER_SYSTEM), Message::user(prompt)]
}

/// One generation attempt: a single provider call plus at most one
/// reprompt when the reply breaks the file grammar or omits tests.
pub fn generate_change(req: &GenerationRequest<'_>, llm: &Llm<'_>) -> Result<ChangeSet, GenerateError> {
    if req.context.is_empty() && !req.greenfield {
        return Err(GenerateError::NoContext);
    }
    let message = commit_message(req.subtask);
    let needs_tests = !req.subtask.acceptance_criteria.is_empty();
    let parse = |text: &str| -> Result<ChangeSet, String> {
        let cs = parse_changeset(text, &message).map_err(|e| e.to_string())?;
        if needs_tests && !cs.edits.iter().any(|e| is_test_path(&e.path)) {
            return Err("the changeset has no test file; add unit tests for the acceptance criteria".into());
        }
        Ok(cs)
    };
    llm.ask_parsed(generation_prompt(req), parse).map_err(|e| match e {
        AskError::Provider(p) => GenerateError::Provider(p),
        AskError::Invalid { error, last_response } => GenerateError::Invalid { error, last_response },
    })
}
