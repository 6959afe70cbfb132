//! Command-line front end.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::index::{build_index, render_outline, update_index, IndexOptions, ParserRegistry, SummaryIndex};
use crate::llm::Llm;
use crate::localizer::{self, LocalizationQuery, LocalizeOptions};
use crate::orchestrator::{self, Artifacts, AutoApprove, ConsoleConfirm, Confirm, Mode, Phase, RunConfig, RunError};
use crate::planner::{self, StoryScale, TaskSource, TaskSpec};
use crate::provider::Gateway;
use crate::review;
use crate::supervisor::{route, TaskKind};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_HANDOVER: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "almas", version, about = "Multi-agent LLM pipeline for planning, generating and augmenting code")]
pub struct Cli {
    /// Run configuration file (TOML).
    #[arg(long, short, global = true, default_value = "almas.toml")]
    pub config: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build or update the summary index of the configured repository.
    Index {
        #[command(subcommand)]
        action: IndexAction,
    },
    /// Plan the configured task and print the sprint plan as JSON.
    Plan,
    /// Select the code units a change description most likely touches.
    Localize {
        /// Change description to localize.
        text: String,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Run a full phase.
    Run {
        #[arg(long, value_enum)]
        phase: Option<Phase>,
        /// Pause for console confirmation at plan approval and before commits.
        #[arg(long)]
        interactive: bool,
    },
    /// Review a unified diff against acceptance criteria.
    Review {
        diff: PathBuf,
        #[arg(long = "criterion")]
        criteria: Vec<String>,
    },
}

#[derive(Debug, Subcommand)]
pub enum IndexAction {
    Build,
    /// Re-summarize changed files; drift in other files is picked up too.
    Update {
        paths: Vec<String>,
    },
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Run(#[from] RunError),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Run(RunError::Config(_)) => EXIT_CONFIG,
            _ => EXIT_INTERNAL,
        }
    }
}

fn other<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Other(e.to_string())
}

/// Parses `args`, runs the command and returns the process exit code. The
/// last line written to stderr is always `status=<word> code=<n>`.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            if !e.use_stderr() {
                return EXIT_OK;
            }
            eprintln!("status=usage_error code={EXIT_CONFIG}");
            return EXIT_CONFIG;
        }
    };
    let (status, code) = match execute(&cli) {
        Ok(code) => (if code == EXIT_HANDOVER { "handover" } else { "ok" }, code),
        Err(e) => {
            eprintln!("error: {e}");
            let code = e.code();
            (if code == EXIT_CONFIG { "config_error" } else { "error" }, code)
        }
    };
    eprintln!("status={status} code={code}");
    code
}

fn execute(cli: &Cli) -> Result<i32, CliError> {
    let mut config = RunConfig::load(&cli.config).map_err(RunError::from)?;
    if let Command::Run { phase, interactive } = &cli.command {
        if let Some(p) = phase {
            config.phase = *p;
        }
        if *interactive {
            config.mode = Mode::Interactive;
        }
    }
    config.validate().map_err(RunError::from)?;
    match &cli.command {
        Command::Run { .. } => run(&config),
        Command::Index { action } => index(&config, action),
        Command::Plan => plan(&config),
        Command::Localize { text, k } => localize(&config, text, *k),
        Command::Review { diff, criteria } => review_diff(&config, diff, criteria),
    }
}

fn run(config: &RunConfig) -> Result<i32, CliError> {
    let confirm: &dyn Confirm = match config.mode {
        Mode::Autonomous => &AutoApprove,
        Mode::Interactive => &ConsoleConfirm,
    };
    let result = orchestrator::run(config, config.phase, confirm)?;
    for (id, outcome) in &result.per_subtask {
        println!("{id}: {outcome:?}");
    }
    for pr in &result.pull_requests {
        println!("pull request {}: {} -> {}", pr.id, pr.source_branch, pr.target_branch);
    }
    println!("cost: {} over {} call(s)", result.ledger.total(), result.ledger.len());
    Ok(if result.any_handover() { EXIT_HANDOVER } else { EXIT_OK })
}

fn gateway(config: &RunConfig) -> Result<Gateway, CliError> {
    Ok(Gateway::new(orchestrator::provider_from_config(config)?, config.inventory.clone()))
}

fn model(config: &RunConfig, gw: &Gateway, kind: TaskKind) -> Result<String, CliError> {
    Ok(route(kind, gw.inventory().profiles(), &config.policy).map_err(RunError::from)?)
}

fn index(config: &RunConfig, action: &IndexAction) -> Result<i32, CliError> {
    let gw = gateway(config)?;
    let model = model(config, &gw, TaskKind::Summarize)?;
    let llm = Llm::new(&gw, &model);
    let artifacts = Artifacts::new(&config.state_dir());
    let (reg, opts) = (ParserRegistry::default(), IndexOptions::default());
    let outcome = match action {
        IndexAction::Build => build_index(&config.repo_path, &reg, &llm, &opts),
        IndexAction::Update { paths } => {
            let existing = SummaryIndex::load(&artifacts.index()).map_err(other)?;
            update_index(&existing, paths, &config.repo_path, &reg, &llm, &opts)
        }
    }
    .map_err(other)?;
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    outcome.index.save(&artifacts.index()).map_err(other)?;
    println!("index version {} with {} unit(s) written to {}", outcome.index.version(), outcome.index.len(), artifacts.index().display());
    Ok(EXIT_OK)
}

fn plan(config: &RunConfig) -> Result<i32, CliError> {
    let path = config.task_file.as_ref().ok_or_else(|| CliError::Other("no task_file configured".into()))?;
    let task = TaskSpec::from_markdown(&std::fs::read_to_string(path).map_err(other)?, TaskSource::User);
    let gw = gateway(config)?;
    let model = model(config, &gw, TaskKind::Plan)?;
    let llm = Llm::new(&gw, &model);
    let assessment = planner::assess(&task, &llm).map_err(other)?;
    let task = if assessment.is_clear { task } else { planner::refine(&task, &assessment, &llm).map_err(other)? };
    let index_path = Artifacts::new(&config.state_dir()).index();
    let outline = if index_path.is_file() {
        Some(render_outline(&SummaryIndex::load(&index_path).map_err(other)?, None, config.budgets.outline_tokens))
    } else {
        None
    };
    let mut plan = planner::decompose(&task, outline.as_deref(), &llm).map_err(other)?;
    let scale = StoryScale::new(config.planning.story_scale.clone()).map_err(other)?;
    let examples = match &config.planning.few_shot_path {
        Some(p) => planner::load_few_shot(p).map_err(other)?,
        None => Vec::new(),
    };
    for st in &mut plan.subtasks {
        st.story_points = Some(planner::estimate(st, &examples, &scale, &llm).map_err(other)?.points);
    }
    println!("{}", serde_json::to_string_pretty(&plan).map_err(other)?);
    Ok(EXIT_OK)
}

fn localize(config: &RunConfig, text: &str, k: Option<usize>) -> Result<i32, CliError> {
    let artifacts = Artifacts::new(&config.state_dir());
    let idx = SummaryIndex::load(&artifacts.index()).map_err(|e| CliError::Other(format!("{e}; run `almas index build` first")))?;
    let gw = gateway(config)?;
    let model = model(config, &gw, TaskKind::Localize)?;
    let llm = Llm::new(&gw, &model);
    let options = LocalizeOptions { k: k.unwrap_or(config.budgets.k), outline_tokens: config.budgets.outline_tokens };
    let loc = localizer::localize(&LocalizationQuery::new("CLI", text), &idx, &llm, options).map_err(other)?;
    for w in &loc.warnings {
        eprintln!("warning: {w}");
    }
    for s in &loc.selections {
        println!("{}\t{}", s.unit_id, s.rationale);
    }
    Ok(EXIT_OK)
}

fn review_diff(config: &RunConfig, diff: &Path, criteria: &[String]) -> Result<i32, CliError> {
    let text = std::fs::read_to_string(diff).map_err(other)?;
    let gw = gateway(config)?;
    let model = model(config, &gw, TaskKind::Review)?;
    let report = review::review(&text, criteria, &Llm::new(&gw, &model)).map_err(other)?;
    print!("{}", report.rendered);
    Ok(EXIT_OK)
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_run_with_phase() {
        let cli = Cli::try_parse_from(["almas", "run", "--phase", "augmentation"]).unwrap();
        assert_eq!(cli.config, PathBuf::from("almas.toml"));
        assert!(matches!(cli.command, Command::Run { phase: Some(Phase::Augmentation), interactive: false }));
    }

    #[test]
    fn parses_index_update_paths() {
        let cli = Cli::try_parse_from(["almas", "--config", "x.toml", "index", "update", "a.py", "pkg"]).unwrap();
        match cli.command {
            Command::Index { action: IndexAction::Update { paths } } => assert_eq!(paths, ["a.py", "pkg"]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn usage_errors_map_to_config_code() {
        assert_eq!(main_with_args(["almas", "run", "--phase", "bogus"]), EXIT_CONFIG);
        assert_eq!(main_with_args(["almas", "--config", "/nonexistent/almas.toml", "plan"]), EXIT_CONFIG);
    }
}
