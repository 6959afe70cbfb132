use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::PathBuf;
use std::sync::Arc;

use super::{write_text, Artifacts, Confirm, Mode, Phase, PrConfig, RunConfig, RunError, RunResult, RunStatus, SubtaskOutcome, TrackerConfig};
use crate::developer::{self, ChangeSet, GenerateError, GenerationRequest, ValidationReport};
use crate::fsutil;
use crate::index::{build_index, render_outline, update_index, IndexOptions, ParserRegistry, SummaryIndex};
use crate::integrations::{
    BitbucketPrs, GitClient, IntegrationError, IssueStatus, JiraTracker, LocalPrs, LocalTracker, PullRequestHost, PullRequestRecord, Tracker,
};
use crate::llm::Llm;
use crate::localizer::{self, ContextBundle, LocalizationQuery, LocalizeError, LocalizeOptions};
use crate::planner::{self, SprintPlan, StoryScale, SubTask, SubTaskStatus, TaskSource, TaskSpec};
use crate::provider::{ChatProvider, Gateway};
use crate::review::{self, gate, ReviewReport};
use crate::supervisor::{attempts_left, build_handover, route, ActionRecord, Agent, HandoverReport, Outcome, RunHistory, TaskKind, GENERATE_ACTION};

/// Result of one generate-apply-validate-review attempt.
enum Attempt {
    Passed { applied: ChangeSet, review: Option<Box<ReviewReport>>, diff: String },
    Failed { error_log: String },
}

pub(super) struct Run<'a> {
    cfg: &'a RunConfig,
    phase: Phase,
    repo: PathBuf,
    artifacts: Artifacts,
    gateway: Gateway,
    history: RunHistory,
    tracker: Box<dyn Tracker>,
    prs: Box<dyn PullRequestHost>,
    confirm: &'a dyn Confirm,
    registry: Arc<ParserRegistry>,
    index_opts: IndexOptions,
    git: Option<GitClient>,
    branch: String,
    target: String,
    plan: Option<SprintPlan>,
    issue_keys: BTreeMap<String, String>,
    outcomes: BTreeMap<String, SubtaskOutcome>,
    handovers: Vec<HandoverReport>,
    pr: Option<PullRequestRecord>,
    pr_sections: Vec<String>,
    index: Option<SummaryIndex>,
}

fn detail<E: Display>(r: &Result<impl Sized, E>) -> String {
    r.as_ref().err().map(ToString::to_string).unwrap_or_default()
}

impl<'a> Run<'a> {
    pub(super) fn start(cfg: &'a RunConfig, phase: Phase, provider: Arc<dyn ChatProvider>, confirm: &'a dyn Confirm) -> Result<Self, RunError> {
        let state = cfg.state_dir();
        let tracker: Box<dyn Tracker> = match &cfg.tracker {
            TrackerConfig::Local { issue_prefix } => Box::new(LocalTracker::new(&state, issue_prefix)),
            TrackerConfig::Jira(j) => Box::new(JiraTracker::from_env(j.clone())?),
        };
        let prs: Box<dyn PullRequestHost> = match &cfg.pull_requests {
            PrConfig::Local => Box::new(LocalPrs::new(&state)),
            PrConfig::Bitbucket(b) => Box::new(BitbucketPrs::from_env(b.clone())?),
        };
        Ok(Run {
            cfg,
            phase,
            repo: cfg.repo_path.clone(),
            artifacts: Artifacts::new(&state),
            gateway: Gateway::new(provider, cfg.inventory.clone()),
            history: RunHistory::new(),
            tracker,
            prs,
            confirm,
            registry: Arc::new(ParserRegistry::default()),
            index_opts: IndexOptions::default(),
            git: None,
            branch: String::new(),
            target: String::new(),
            plan: None,
            issue_keys: BTreeMap::new(),
            outcomes: BTreeMap::new(),
            handovers: Vec::new(),
            pr: None,
            pr_sections: Vec::new(),
            index: None,
        })
    }

    fn git(&self) -> &GitClient {
        self.git.as_ref().expect("git is set up before any commit")
    }

    fn record(&mut self, rec: ActionRecord) {
        self.history.record(rec);
        if let Err(e) = self.history.append_last_to(&self.artifacts.history()) {
            log::warn!("cannot append to the history log: {e}");
        }
    }

    /// Routes `kind`, runs `f` against the chosen model and records one
    /// action with the tokens and cost the call(s) consumed.
    fn llm_step<T, E: Display>(
        &mut self,
        agent: Agent,
        subtask: Option<&str>,
        action: &str,
        kind: TaskKind,
        f: impl FnOnce(&Llm<'_>) -> Result<T, E>,
    ) -> Result<Result<T, E>, RunError> {
        let model = route(kind, self.gateway.inventory().profiles(), &self.cfg.policy)?;
        let mark = self.gateway.mark();
        let result = f(&Llm::new(&self.gateway, &model));
        let usage = self.gateway.usage_since(mark);
        let outcome = if result.is_ok() { Outcome::Ok } else { Outcome::Failed };
        self.record(
            ActionRecord::new(agent, subtask, action, outcome)
                .with_usage(usage.prompt_tokens, usage.completion_tokens, usage.cost)
                .with_detail(format!("model {model}{}{}", if result.is_err() { ": " } else { "" }, detail(&result))),
        );
        Ok(result)
    }

    fn setup_repo(&mut self) -> Result<(), RunError> {
        std::fs::create_dir_all(&self.repo)?;
        let git = match GitClient::open(&self.repo) {
            Ok(g) => g,
            Err(_) if !self.repo.join(".git").exists() => {
                let g = GitClient::init(&self.repo)?;
                if self.cfg.base_branch != "main" {
                    g.checkout(&self.cfg.base_branch)?;
                }
                g
            }
            Err(e) => return Err(e.into()),
        };
        git.exclude_state_dir()?;
        if git.head().is_err() {
            return Err(RunError::Precondition("repository has no commits".into()));
        }
        std::fs::create_dir_all(&self.artifacts.root)?;
        if self.artifacts.history().exists() {
            std::fs::remove_file(self.artifacts.history())?;
        }
        self.git = Some(git);
        Ok(())
    }

    fn load_task(&self) -> Result<TaskSpec, RunError> {
        let path = self.cfg.task_file.as_ref().ok_or_else(|| RunError::Precondition("no task_file configured".into()))?;
        let text = std::fs::read_to_string(path).map_err(|e| RunError::Precondition(format!("cannot read task file {}: {e}", path.display())))?;
        Ok(TaskSpec::from_markdown(&text, TaskSource::User))
    }

    /// Assess, refine, decompose and estimate; then publish and branch.
    fn plan(&mut self, outline: Option<String>) -> Result<(), RunError> {
        let task = self.load_task()?;
        let assessment = self.llm_step(Agent::Sprint, None, "assess", TaskKind::Plan, |llm| planner::assess(&task, llm))??;
        let task = if assessment.is_clear {
            TaskSpec { clarity: Some(assessment), ..task }
        } else {
            self.llm_step(Agent::Sprint, None, "refine", TaskKind::Plan, |llm| planner::refine(&task, &assessment, llm))??
        };
        let mut plan = self.llm_step(Agent::Sprint, None, "decompose", TaskKind::Plan, |llm| planner::decompose(&task, outline.as_deref(), llm))??;

        let scale = StoryScale::new(self.cfg.planning.story_scale.clone())?;
        let examples = match &self.cfg.planning.few_shot_path {
            Some(p) => planner::load_few_shot(p)?,
            None => Vec::new(),
        };
        for i in 0..plan.subtasks.len() {
            let st = plan.subtasks[i].clone();
            let est = self.llm_step(Agent::Sprint, Some(&st.id), "estimate", TaskKind::Plan, |llm| planner::estimate(&st, &examples, &scale, llm))??;
            if let Some(w) = &est.warning {
                self.record(ActionRecord::new(Agent::Sprint, Some(&st.id), "estimate_snapped", Outcome::Ok).with_detail(w.clone()));
            }
            plan.subtasks[i].story_points = Some(est.points);
        }
        plan.validate().map_err(|e| RunError::Aborted(format!("invalid plan: {e}")))?;
        write_text(&self.artifacts.plan(), &serde_json::to_string_pretty(&plan).expect("plans serialize"))?;
        self.plan = Some(plan.clone());

        if self.cfg.mode == Mode::Interactive {
            let summary: Vec<String> = plan.subtasks.iter().map(|s| format!("{} [{}] {}", s.id, s.story_points.unwrap_or(0), s.title)).collect();
            if !self.confirm.confirm("Approve this sprint plan?", &summary.join("\n")) {
                return Err(RunError::Aborted("sprint plan declined".into()));
            }
        }

        self.issue_keys = self.tracker.publish_plan(&plan)?;
        self.record(ActionRecord::new(Agent::Supervisor, None, "publish_plan", Outcome::Ok).with_detail(format!("{} issue(s)", self.issue_keys.len())));

        // The run branch is cut from whatever is checked out, so a later
        // run can stack on an earlier one; its pull request targets that branch.
        self.branch = format!("almas/{}", plan.slug());
        self.target = self.git().current_branch()?;
        if self.target == self.branch {
            return Err(RunError::Precondition(format!("{} is already checked out; switch to its base branch first", self.branch)));
        }
        self.git().checkout(&self.branch)?;
        Ok(())
    }

    pub(super) fn generation(&mut self) -> Result<(), RunError> {
        if self.repo.exists() && !fsutil::tree_snapshot(&self.repo)?.is_empty() {
            return Err(RunError::Precondition(format!("generation needs an empty repository; {} has files", self.repo.display())));
        }
        self.setup_repo()?;
        self.plan(None)?;
        self.execute_all()?;
        let repo = self.repo.clone();
        let (reg, opts) = (self.registry.clone(), self.index_opts.clone());
        let outcome = self.llm_step(Agent::Summary, None, "build_index", TaskKind::Summarize, |llm| build_index(&repo, &reg, llm, &opts))??;
        outcome.index.save(&self.artifacts.index())?;
        self.index = Some(outcome.index);
        self.finalize_pr()
    }

    pub(super) fn augmentation(&mut self) -> Result<(), RunError> {
        let has_code = self.repo.is_dir() && fsutil::scan_files(&self.repo)?.iter().any(|(p, _)| self.registry.is_source(p));
        if !has_code {
            return Err(RunError::Precondition(format!("augmentation needs existing source code in {}", self.repo.display())));
        }
        if GitClient::open(&self.repo).is_err() {
            let git = GitClient::init(&self.repo)?;
            git.exclude_state_dir()?;
            let paths: Vec<String> = fsutil::tree_snapshot(&self.repo)?.into_keys().collect();
            let import = ChangeSet::new(paths.iter().map(|p| developer::FileEdit { path: p.clone(), content: String::new() }).collect(), vec![], "Import existing code")
                .map_err(|e| RunError::Precondition(e.to_string()))?;
            git.commit(&import, &self.cfg.base_branch)?;
        }
        self.setup_repo()?;
        self.refresh_index(None, &[])?;
        let outline = render_outline(self.index.as_ref().expect("index was just built"), None, self.cfg.budgets.outline_tokens);
        self.plan(Some(outline))?;
        self.execute_all()?;
        self.finalize_pr()
    }

    /// Builds the index, or updates the saved one to match the tree.
    fn refresh_index(&mut self, subtask: Option<&str>, changed: &[String]) -> Result<(), RunError> {
        let repo = self.repo.clone();
        let (reg, opts) = (self.registry.clone(), self.index_opts.clone());
        let existing = match self.index.take() {
            Some(i) => Some(i),
            None if self.artifacts.index().is_file() => Some(SummaryIndex::load(&self.artifacts.index())?),
            None => None,
        };
        let outcome = match existing {
            Some(idx) => self.llm_step(Agent::Summary, subtask, "update_index", TaskKind::Summarize, |llm| update_index(&idx, changed, &repo, &reg, llm, &opts))??,
            None => self.llm_step(Agent::Summary, subtask, "build_index", TaskKind::Summarize, |llm| build_index(&repo, &reg, llm, &opts))??,
        };
        for w in &outcome.warnings {
            log::warn!("{w}");
        }
        outcome.index.save(&self.artifacts.index())?;
        self.index = Some(outcome.index);
        Ok(())
    }

    fn execute_all(&mut self) -> Result<(), RunError> {
        let subtasks = self.plan.as_ref().map(|p| p.subtasks.clone()).unwrap_or_default();
        for st in &subtasks {
            let outcome = self.execute_subtask(st)?;
            self.outcomes.insert(st.id.clone(), outcome);
            if let Some(plan) = &mut self.plan {
                if let Some(s) = plan.subtasks.iter_mut().find(|s| s.id == st.id) {
                    s.status = match outcome {
                        SubtaskOutcome::Done => SubTaskStatus::Done,
                        SubtaskOutcome::HandedOver => SubTaskStatus::HandedOver,
                    };
                }
            }
        }
        Ok(())
    }

    fn transition(&mut self, st: &SubTask, status: IssueStatus) -> Result<(), RunError> {
        if let Some(key) = self.issue_keys.get(&st.id).cloned() {
            self.tracker.transition(&key, status)?;
        }
        Ok(())
    }

    fn query_text(st: &SubTask) -> String {
        let mut text = format!("{}\n{}", st.title, st.description);
        for c in &st.acceptance_criteria {
            text.push_str(&format!("\n- {c}"));
        }
        text
    }

    /// Localizes (or relocalizes after a failure) and assembles context.
    /// A stale index is refreshed once before giving up.
    fn augmentation_context(&mut self, st: &SubTask, failure: Option<(&str, &[String])>) -> Result<(ContextBundle, Vec<String>), String> {
        let options = LocalizeOptions { k: self.cfg.budgets.k, outline_tokens: self.cfg.budgets.outline_tokens };
        let mut query = LocalizationQuery::new(&st.id, Self::query_text(st));
        if let Some((log, prior)) = failure {
            query = query.with_failure(log, prior.to_vec());
        }
        let mut refreshed = false;
        loop {
            let index = self.index.clone().ok_or("no summary index")?;
            let action = if failure.is_some() { "relocalize" } else { "localize" };
            let loc = self
                .llm_step(Agent::Control, Some(&st.id), action, TaskKind::Localize, |llm| {
                    if query.error_log.is_some() {
                        localizer::relocalize(&query, &index, llm, options)
                    } else {
                        localizer::localize(&query, &index, llm, options)
                    }
                })
                .map_err(|e| e.to_string())?
                .map_err(|e| e.to_string())?;
            for w in &loc.warnings {
                log::warn!("{}: {w}", st.id);
            }
            match localizer::assemble_context(&loc, &self.repo, &index, self.cfg.budgets.context_tokens) {
                Ok(bundle) => return Ok((bundle, loc.unit_ids())),
                Err(LocalizeError::StaleIndex(why)) if !refreshed => {
                    log::info!("{}: stale index ({why}); updating", st.id);
                    refreshed = true;
                    self.refresh_index(Some(&st.id), &[]).map_err(|e| e.to_string())?;
                }
                Err(e) => return Err(e.to_string()),
            }
        }
    }

    fn generation_context(&self) -> Result<ContextBundle, RunError> {
        let paths: Vec<String> = fsutil::scan_files(&self.repo)?.into_iter().map(|(p, _)| p).collect();
        Ok(localizer::assemble_files(&self.repo, &paths, self.cfg.budgets.context_tokens)?)
    }

    fn execute_subtask(&mut self, st: &SubTask) -> Result<SubtaskOutcome, RunError> {
        let max = self.cfg.budgets.max_attempts;
        let entry_tree = fsutil::tree_hash(&self.repo)?;
        self.transition(st, IssueStatus::InProgress)?;
        let mut feedback: Option<String> = None;
        let mut prior: Vec<String> = Vec::new();
        let mut last_error = String::new();

        while attempts_left(&self.history, &st.id, max) > 0 {
            let attempt = self.attempt(st, feedback.as_deref(), &mut prior)?;
            match attempt {
                Attempt::Passed { applied, review, diff } => {
                    self.accept(st, applied, review, diff)?;
                    self.transition(st, IssueStatus::Done)?;
                    return Ok(SubtaskOutcome::Done);
                }
                Attempt::Failed { error_log } => {
                    write_text(&self.artifacts.log(&format!("{}-attempt{}", st.id, self.history.attempts(&st.id))), &error_log)?;
                    last_error = error_log.clone();
                    feedback = Some(error_log);
                }
            }
        }

        let tree_now = fsutil::tree_hash(&self.repo)?;
        if tree_now != entry_tree {
            log::error!("{}: working tree differs from its entry state after rollback", st.id);
        }
        let summarize = self.cfg.handover_summary;
        let history = self.history.clone();
        let report = if summarize {
            self.llm_step(Agent::Supervisor, Some(&st.id), "summarize_handover", TaskKind::Plan, |llm| build_handover(&history, st, &last_error, max, Some(llm)))?
                .map_err(|e| RunError::Aborted(e.to_string()))?
        } else {
            build_handover(&history, st, &last_error, max, None).map_err(|e| RunError::Aborted(e.to_string()))?
        };
        let doc = report.to_markdown();
        write_text(&self.artifacts.handover(&st.id), &doc)?;
        if let Some(key) = self.issue_keys.get(&st.id).cloned() {
            self.tracker.comment(&key, &doc)?;
        }
        self.transition(st, IssueStatus::HandedOver)?;
        self.record(ActionRecord::new(Agent::Supervisor, Some(&st.id), "handover", Outcome::Failed).with_detail(format!("after {} attempt(s)", report.attempts_made)));
        self.handovers.push(report);
        Ok(SubtaskOutcome::HandedOver)
    }

    /// One attempt. Every path that returns `Failed` leaves the tree as it
    /// found it; errors that abort the run roll back first too.
    fn attempt(&mut self, st: &SubTask, feedback: Option<&str>, prior: &mut Vec<String>) -> Result<Attempt, RunError> {
        let context = match self.phase {
            Phase::Generation => self.generation_context()?,
            Phase::Augmentation => {
                let failure = feedback.map(|f| (f, prior.as_slice()));
                match self.augmentation_context(st, failure) {
                    Ok((bundle, ids)) => {
                        *prior = ids;
                        bundle
                    }
                    Err(e) => {
                        // No context means no generation; the attempt is still spent.
                        self.record(ActionRecord::new(Agent::Developer, Some(&st.id), GENERATE_ACTION, Outcome::Failed).with_detail(format!("no context: {e}")));
                        return Ok(Attempt::Failed { error_log: format!("Localization failed: {e}") });
                    }
                }
            }
        };
        let greenfield = self.phase == Phase::Generation && context.is_empty();
        let req = GenerationRequest { subtask: st, context: &context, greenfield, feedback };
        let generated = self.llm_step(Agent::Developer, Some(&st.id), GENERATE_ACTION, TaskKind::Codegen, |llm| developer::generate_change(&req, llm))?;
        let changeset = match generated {
            Ok(cs) => cs,
            Err(GenerateError::Provider(p)) => return Err(p.into()),
            Err(e) => return Ok(Attempt::Failed { error_log: format!("The response could not be used: {e}") }),
        };

        let applied = match developer::apply(&self.repo, &changeset) {
            Ok(a) => a,
            Err(e) => {
                self.record(ActionRecord::new(Agent::Developer, Some(&st.id), "apply", Outcome::Failed).with_detail(e.to_string()));
                return Ok(Attempt::Failed { error_log: format!("The changeset could not be applied: {e}") });
            }
        };
        self.record(ActionRecord::new(Agent::Developer, Some(&st.id), "apply", Outcome::Ok).with_detail(applied.paths().join(", ")));

        let report = match developer::validate(&self.repo, &self.cfg.validation) {
            Ok(r) => r,
            Err(e) => {
                self.undo(&applied);
                return Err(e.into());
            }
        };
        self.record_validation(st, &report);
        if !report.passed() {
            self.undo(&applied);
            return Ok(Attempt::Failed { error_log: report.error_log(4000) });
        }

        let diff = developer::unified_diff(&applied)?;
        let criteria = st.acceptance_criteria.clone();
        let reviewed = match self.llm_step(Agent::Peer, Some(&st.id), "review", TaskKind::Review, |llm| review::review(&diff, &criteria, llm)) {
            Ok(r) => r,
            Err(e) => {
                self.undo(&applied);
                return Err(e);
            }
        };
        let review = match reviewed {
            Ok(r) => {
                write_text(&self.artifacts.review(&st.id), &r.rendered)?;
                if !gate(&r, self.cfg.review_gate) {
                    self.undo(&applied);
                    return Ok(Attempt::Failed { error_log: format!("Peer review requested changes:\n{}", r.rendered) });
                }
                Some(Box::new(r))
            }
            Err(e) if self.cfg.review_gate == review::ReviewGate::Enforcing => {
                self.undo(&applied);
                return Ok(Attempt::Failed { error_log: format!("Peer review failed: {e}") });
            }
            Err(e) => {
                log::warn!("{}: peer review unavailable: {e}", st.id);
                None
            }
        };
        Ok(Attempt::Passed { applied, review, diff })
    }

    fn record_validation(&mut self, st: &SubTask, report: &ValidationReport) {
        let outcome = if report.passed() { Outcome::Ok } else { Outcome::Failed };
        let failures = report.tests.as_ref().map_or(0, |t| t.failures.len());
        self.record(
            ActionRecord::new(Agent::Developer, Some(&st.id), "validate", outcome)
                .with_detail(format!("stage {}; {failures} test failure(s)", report.stage_reached)),
        );
    }

    fn undo(&mut self, applied: &ChangeSet) {
        if let Err(e) = developer::rollback(&self.repo, applied) {
            log::error!("rollback failed: {e}");
        }
    }

    /// Commits a validated changeset and opens or extends the pull request.
    fn accept(&mut self, st: &SubTask, applied: ChangeSet, review: Option<Box<ReviewReport>>, diff: String) -> Result<(), RunError> {
        if self.cfg.mode == Mode::Interactive && !self.confirm.confirm(&format!("Commit {} and update the pull request?", st.id), &diff) {
            self.undo(&applied);
            return Err(RunError::Aborted(format!("commit of {} declined", st.id)));
        }
        let committed = self.git().commit(&applied, &self.branch.clone());
        let vcs = match committed {
            Ok(v) => v,
            Err(e) => {
                self.undo(&applied);
                return Err(e.into());
            }
        };
        self.record(ActionRecord::new(Agent::Supervisor, Some(&st.id), "commit", Outcome::Ok).with_detail(applied.commit_message.clone()));
        log::info!("{}: committed {} on {}", st.id, vcs.commit_id, vcs.branch);

        let mut section = format!("## {}: {}\n\nStory points: {}\n\nFiles: {}\n\n", st.id, st.title, st.story_points.unwrap_or(0), applied.paths().join(", "));
        match &review {
            Some(r) => section.push_str(&r.rendered),
            None => section.push_str("Peer review unavailable.\n"),
        }
        self.pr_sections.push(section);
        self.sync_pr()?;

        if self.phase == Phase::Augmentation {
            self.refresh_index(Some(&st.id), &applied.paths())?;
        }
        Ok(())
    }

    fn pr_body(&self) -> String {
        let ledger = self.gateway.ledger();
        let title = self.plan.as_ref().map_or("", |p| p.task.title.as_str());
        format!(
            "# {title}\n\n{}\n---\n\nLedger total: {} over {} provider call(s).\n",
            self.pr_sections.join("\n"),
            ledger.total(),
            ledger.len()
        )
    }

    fn sync_pr(&mut self) -> Result<(), RunError> {
        let body = self.pr_body();
        let pr = match &self.pr {
            Some(pr) => self.prs.update_body(&pr.id, &body)?,
            None => {
                let title = self.plan.as_ref().map_or_else(String::new, |p| p.task.title.clone());
                match self.prs.open_pr(&self.branch, &self.target, &title, &body) {
                    Ok(pr) => pr,
                    Err(IntegrationError::DuplicatePr { .. }) => {
                        return Err(RunError::Precondition(format!("an open pull request for {} already exists", self.branch)));
                    }
                    Err(e) => return Err(e.into()),
                }
            }
        };
        self.pr = Some(pr);
        Ok(())
    }

    fn finalize_pr(&mut self) -> Result<(), RunError> {
        if self.pr.is_some() {
            self.sync_pr()?;
        }
        Ok(())
    }

    pub(super) fn finish(&self, error: Option<String>) -> RunResult {
        RunResult {
            phase: self.phase,
            status: if error.is_some() { RunStatus::Aborted } else { RunStatus::Completed },
            error,
            plan: self.plan.clone(),
            per_subtask: self.outcomes.clone(),
            issue_keys: self.issue_keys.clone(),
            pull_requests: self.pr.iter().cloned().collect(),
            handovers: self.handovers.clone(),
            ledger: self.gateway.ledger(),
            history: self.history.records().to_vec(),
            index_version: self.index.as_ref().map(SummaryIndex::version),
        }
    }

    pub(super) fn persist(&self, result: &RunResult) -> Result<(), RunError> {
        if !self.artifacts.root.exists() {
            return Ok(());
        }
        write_text(&self.artifacts.ledger(), &serde_json::to_string_pretty(&result.ledger).expect("ledger serializes"))?;
        write_text(&self.artifacts.result(), &serde_json::to_string_pretty(result).expect("result serializes"))?;
        Ok(())
    }
}

