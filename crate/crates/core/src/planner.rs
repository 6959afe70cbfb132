//! The Sprint Agent: clarity assessment, refinement, decomposition into
//! sub-tasks with acceptance criteria, and few-shot story-point estimation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::llm::{parse_json, AskError, Llm};
use crate::provider::{Message, ProviderError};

#[derive(Debug, thiserror::Error)]
pub enum PlanError {
    #[error("task title must not be empty")]
    EmptyTitle,
    #[error("task clarity is unresolved; refine it before decomposing")]
    Unrefined,
    #[error("response schema error: {0}")]
    Schema(String),
    #[error("sub-task dependencies contain a cycle: {0}")]
    CyclicDependencies(String),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("cannot read few-shot examples: {0}")]
    Examples(String),
    #[error("invalid story-point scale: {0}")]
    Scale(String),
}

fn schema_err(e: AskError<String>) -> PlanError {
    match e {
        AskError::Provider(p) => PlanError::Provider(p),
        AskError::Invalid { error, .. } => PlanError::Schema(error),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskSource {
    User,
    Tracker,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClarityAssessment {
    pub is_clear: bool,
    #[serde(default)]
    pub missing_aspects: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rewritten_description: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub title: String,
    pub description: String,
    pub source: TaskSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clarity: Option<ClarityAssessment>,
}

impl TaskSpec {
    pub fn new(title: impl Into<String>, description: impl Into<String>, source: TaskSource) -> Self {
        TaskSpec { title: title.into(), description: description.into(), source, clarity: None }
    }

    /// Parses a task file: the first non-empty line (leading `#` stripped)
    /// is the title, the rest is the description.
    pub fn from_markdown(text: &str, source: TaskSource) -> Self {
        let mut lines = text.lines().skip_while(|l| l.trim().is_empty());
        let title = lines.next().unwrap_or_default().trim().trim_start_matches('#').trim().to_string();
        let description = lines.collect::<Vec<_>>().join("\n").trim().to_string();
        TaskSpec::new(title, description, source)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubTaskStatus {
    Todo,
    InProgress,
    Done,
    HandedOver,
}

impl fmt::Display for SubTaskStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SubTaskStatus::Todo => "todo",
            SubTaskStatus::InProgress => "in_progress",
            SubTaskStatus::Done => "done",
            SubTaskStatus::HandedOver => "handed_over",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubTask {
    pub id: String,
    pub title: String,
    pub description: String,
    pub acceptance_criteria: Vec<String>,
    /// Filled in by [`estimate`].
    pub story_points: Option<u32>,
    #[serde(default)]
    pub depends_on: Vec<String>,
    pub status: SubTaskStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SprintPlan {
    pub task: TaskSpec,
    pub subtasks: Vec<SubTask>,
    pub created_at: DateTime<Utc>,
}

impl SprintPlan {
    pub fn subtask(&self, id: &str) -> Option<&SubTask> {
        self.subtasks.iter().find(|s| s.id == id)
    }

    /// Checks id uniqueness, dependency targets and topological order.
    pub fn validate(&self) -> Result<(), String> {
        let mut seen = BTreeSet::new();
        for st in &self.subtasks {
            if st.acceptance_criteria.is_empty() {
                return Err(format!("{} has no acceptance criteria", st.id));
            }
            for dep in &st.depends_on {
                if !seen.contains(dep.as_str()) {
                    return Err(format!("{} depends on {dep}, which does not precede it", st.id));
                }
            }
            if !seen.insert(st.id.as_str()) {
                return Err(format!("duplicate sub-task id {}", st.id));
            }
        }
        Ok(())
    }

    /// Short lowercase slug of the task title, for branch names.
    pub fn slug(&self) -> String {
        let mut slug = String::new();
        for c in self.task.title.chars() {
            if c.is_ascii_alphanumeric() {
                slug.push(c.to_ascii_lowercase());
            } else if !slug.ends_with('-') && !slug.is_empty() {
                slug.push('-');
            }
            if slug.len() >= 40 {
                break;
            }
        }
        let slug = slug.trim_end_matches('-').to_string();
        if slug.is_empty() { "task".into() } else { slug }
    }
}

/// Allowed story-point values, ascending and unique.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct StoryScale(Vec<u32>);

impl Default for StoryScale {
    fn default() -> Self {
        StoryScale(vec![1, 2, 3, 5, 8, 13])
    }
}

impl StoryScale {
    pub fn new(mut values: Vec<u32>) -> Result<Self, PlanError> {
        values.sort_unstable();
        values.dedup();
        if values.is_empty() {
            return Err(PlanError::Scale("scale must have at least one value".into()));
        }
        Ok(StoryScale(values))
    }

    pub fn values(&self) -> &[u32] {
        &self.0
    }

    pub fn contains(&self, v: u32) -> bool {
        self.0.binary_search(&v).is_ok()
    }

    /// Nearest member; ties resolve to the smaller value.
    pub fn snap(&self, v: i64) -> u32 {
        *self
            .0
            .iter()
            .min_by_key(|&&m| ((m as i64 - v).abs(), m))
            .expect("scale is non-empty")
    }
}

impl<'de> Deserialize<'de> for StoryScale {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        StoryScale::new(Vec::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotExample {
    pub description: String,
    pub points: u32,
}

/// Reads a JSON array of `{description, points}` records.
pub fn load_few_shot(path: &Path) -> Result<Vec<FewShotExample>, PlanError> {
    let text = std::fs::read_to_string(path).map_err(|e| PlanError::Examples(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| PlanError::Examples(format!("{}: {e}", path.display())))
}

const SPRINT_SYSTEM: &str = "You are the Sprint Agent of an agile software team, acting as product manager and scrum \
master. You make tasks well-defined, plan them as small sub-tasks, and estimate effort.";

pub fn assess(task: &TaskSpec, llm: &Llm<'_>) -> Result<ClarityAssessment, PlanError> {
    if task.title.trim().is_empty() {
        return Err(PlanError::EmptyTitle);
    }
    let prompt = format!(
        "Evaluate the following task for clarity and completeness.\n\n\
         Title: {}\nDescription:\n{}\n\n\
         Reply with only a JSON object of the form \
         {{\"is_clear\": true|false, \"missing_aspects\": [\"...\"], \"rewritten_description\": null}}. \
         List every missing or ambiguous aspect when the task is not clear.",
        task.title, task.description
    );
    llm.ask_parsed(vec![Message::system(SPRINT_SYSTEM), Message::user(prompt)], |reply| {
        let a: ClarityAssessment = parse_json(reply)?;
        if !a.is_clear && a.missing_aspects.iter().all(|m| m.trim().is_empty()) {
            return Err("an unclear verdict must list missing_aspects".to_string());
        }
        Ok(a)
    })
    .map_err(schema_err)
}

pub fn refine(task: &TaskSpec, assessment: &ClarityAssessment, llm: &Llm<'_>) -> Result<TaskSpec, PlanError> {
    if assessment.is_clear {
        return Ok(task.clone());
    }
    let mut prompt = format!(
        "Rewrite the description of this task so that it is clear and complete.\n\n\
         Title: {}\nDescription:\n{}\n\nMissing or ambiguous aspects:\n",
        task.title, task.description
    );
    for aspect in &assessment.missing_aspects {
        prompt.push_str(&format!("- {aspect}\n"));
    }
    if let Some(draft) = &assessment.rewritten_description {
        prompt.push_str(&format!("\nDraft rewrite:\n{draft}\n"));
    }
    prompt.push_str("\nReply with only a JSON object of the form {\"description\": \"...\"}.");

    #[derive(Deserialize)]
    struct Rewrite {
        description: String,
    }
    let rewrite = llm
        .ask_parsed(vec![Message::system(SPRINT_SYSTEM), Message::user(prompt)], |reply| {
            let r: Rewrite = parse_json(reply)?;
            if r.description.trim().is_empty() {
                return Err("the rewritten description is empty".to_string());
            }
            Ok(r.description.trim().to_string())
        })
        .map_err(schema_err)?;
    Ok(TaskSpec {
        title: task.title.clone(),
        description: rewrite.clone(),
        source: task.source,
        clarity: Some(ClarityAssessment {
            is_clear: true,
            missing_aspects: assessment.missing_aspects.clone(),
            rewritten_description: Some(rewrite),
        }),
    })
}

#[derive(Debug, Deserialize)]
struct DraftPlan {
    subtasks: Vec<DraftSubTask>,
}

#[derive(Debug, Deserialize)]
struct DraftSubTask {
    title: String,
    #[serde(default)]
    description: String,
    acceptance_criteria: Vec<String>,
    #[serde(default)]
    depends_on: Vec<String>,
}

enum DraftIssue {
    Schema(String),
    Cycle(String),
}

impl fmt::Display for DraftIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DraftIssue::Schema(s) => write!(f, "{s}"),
            DraftIssue::Cycle(s) => write!(f, "the dependencies form a cycle ({s})"),
        }
    }
}

/// Stable topological order (Kahn's algorithm, lowest original index first).
/// Returns the ids left on a cycle when no order exists.
fn topo_order(ids: &[String], deps: &[Vec<String>]) -> Result<Vec<usize>, Vec<String>> {
    let pos: BTreeMap<&str, usize> = ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let mut indegree: Vec<usize> = deps.iter().map(Vec::len).collect();
    let mut dependents: Vec<Vec<usize>> = vec![Vec::new(); ids.len()];
    for (i, ds) in deps.iter().enumerate() {
        for d in ds {
            dependents[pos[d.as_str()]].push(i);
        }
    }
    let mut ready: BTreeSet<usize> = (0..ids.len()).filter(|&i| indegree[i] == 0).collect();
    let mut order = Vec::with_capacity(ids.len());
    while let Some(i) = ready.pop_first() {
        order.push(i);
        for &j in &dependents[i] {
            indegree[j] -= 1;
            if indegree[j] == 0 {
                ready.insert(j);
            }
        }
    }
    if order.len() == ids.len() {
        Ok(order)
    } else {
        Err((0..ids.len()).filter(|&i| indegree[i] > 0).map(|i| ids[i].clone()).collect())
    }
}

fn check_draft(reply: &str) -> Result<Vec<SubTask>, DraftIssue> {
    let draft: DraftPlan = parse_json(reply).map_err(DraftIssue::Schema)?;
    if draft.subtasks.is_empty() {
        return Err(DraftIssue::Schema("the plan has no sub-tasks".into()));
    }
    let ids: Vec<String> = (1..=draft.subtasks.len()).map(|i| format!("ST-{i}")).collect();
    let mut subtasks = Vec::with_capacity(ids.len());
    for (st, id) in draft.subtasks.into_iter().zip(&ids) {
        if st.title.trim().is_empty() {
            return Err(DraftIssue::Schema(format!("{id} has an empty title")));
        }
        let criteria: Vec<String> =
            st.acceptance_criteria.into_iter().map(|c| c.trim().to_string()).filter(|c| !c.is_empty()).collect();
        if criteria.is_empty() {
            return Err(DraftIssue::Schema(format!("{id} has no acceptance criteria")));
        }
        let mut deps = Vec::new();
        for d in st.depends_on {
            let d = d.trim().to_string();
            if !ids.contains(&d) {
                return Err(DraftIssue::Schema(format!("{id} depends on unknown sub-task {d}")));
            }
            if !deps.contains(&d) {
                deps.push(d);
            }
        }
        subtasks.push(SubTask {
            id: id.clone(),
            title: st.title.trim().to_string(),
            description: st.description.trim().to_string(),
            acceptance_criteria: criteria,
            story_points: None,
            depends_on: deps,
            status: SubTaskStatus::Todo,
        });
    }
    let deps: Vec<Vec<String>> = subtasks.iter().map(|s| s.depends_on.clone()).collect();
    let order = topo_order(&ids, &deps).map_err(|stuck| DraftIssue::Cycle(stuck.join(", ")))?;
    let mut slots: Vec<Option<SubTask>> = subtasks.into_iter().map(Some).collect();
    Ok(order.into_iter().map(|i| slots[i].take().expect("each index once")).collect())
}

/// Builds the prompt for [`decompose`]; the outline, when given, is
/// embedded verbatim.
pub fn decompose_prompt(task: &TaskSpec, outline: Option<&str>) -> Vec<Message> {
    let mut prompt = format!(
        "Devise a stepwise plan for the task below and break it into sub-tasks. Each sub-task needs a \
         title, a description and testable acceptance criteria. Sub-tasks are numbered ST-1, ST-2, ... in the \
         order you list them; use those ids in depends_on.\n\nTitle: {}\nDescription:\n{}\n",
        task.title, task.description
    );
    if let Some(outline) = outline.filter(|o| !o.trim().is_empty()) {
        prompt.push_str("\nSummary outline of the existing codebase:\n");
        prompt.push_str(outline);
        prompt.push('\n');
    }
    prompt.push_str(
        "\nReply with only a JSON object of the form {\"subtasks\": [{\"title\": \"...\", \"description\": \"...\", \
         \"acceptance_criteria\": [\"...\"], \"depends_on\": [\"ST-1\"]}]}.",
    );
    vec![Message::system(SPRINT_SYSTEM), Message::user(prompt)]
}

pub fn decompose(task: &TaskSpec, outline: Option<&str>, llm: &Llm<'_>) -> Result<SprintPlan, PlanError> {
    if task.title.trim().is_empty() {
        return Err(PlanError::EmptyTitle);
    }
    if task.clarity.as_ref().is_some_and(|c| !c.is_clear) {
        return Err(PlanError::Unrefined);
    }
    let subtasks = llm.ask_parsed(decompose_prompt(task, outline), check_draft).map_err(|e| match e {
        AskError::Provider(p) => PlanError::Provider(p),
        AskError::Invalid { error: DraftIssue::Cycle(s), .. } => PlanError::CyclicDependencies(s),
        AskError::Invalid { error: DraftIssue::Schema(s), .. } => PlanError::Schema(s),
    })?;
    Ok(SprintPlan { task: task.clone(), subtasks, created_at: Utc::now() })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Estimate {
    pub points: u32,
    /// Set when the model answered off-scale and the value was snapped.
    pub warning: Option<String>,
}

pub fn estimate_prompt(subtask: &SubTask, examples: &[FewShotExample], scale: &StoryScale) -> Vec<Message> {
    let scale_text = scale.values().iter().map(u32::to_string).collect::<Vec<_>>().join(", ");
    let mut prompt = format!(
        "Estimate the effort of a sub-task in story points. Allowed values: {scale_text}.\n\
         Use the previous estimations below as the reference metric.\n\n"
    );
    for ex in examples {
        prompt.push_str(&format!("Description: {}\nStory points: {}\n\n", ex.description, ex.points));
    }
    prompt.push_str(&format!(
        "Description: {}: {}\nAcceptance criteria:\n",
        subtask.title, subtask.description
    ));
    for c in &subtask.acceptance_criteria {
        prompt.push_str(&format!("- {c}\n"));
    }
    prompt.push_str("Story points:\n\nReply with only the number.");
    vec![Message::system(SPRINT_SYSTEM), Message::user(prompt)]
}

fn first_integer(text: &str) -> Result<i64, String> {
    let re = regex::Regex::new(r"-?\d+").expect("valid regex");
    re.find(text)
        .and_then(|m| m.as_str().parse().ok())
        .ok_or_else(|| "reply does not contain a story-point number".to_string())
}

pub fn estimate(
    subtask: &SubTask,
    examples: &[FewShotExample],
    scale: &StoryScale,
    llm: &Llm<'_>,
) -> Result<Estimate, PlanError> {
    if let [only] = scale.values() {
        return Ok(Estimate { points: *only, warning: None });
    }
    let raw = llm.ask_parsed(estimate_prompt(subtask, examples, scale), first_integer).map_err(schema_err)?;
    let points = scale.snap(raw);
    let warning = (points as i64 != raw)
        .then(|| format!("{}: estimate {raw} is not on the scale; snapped to {points}", subtask.id));
    Ok(Estimate { points, warning })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provider::{ScriptEntry, ScriptedProvider};

    fn script(replies: &[&str]) -> ScriptedProvider {
        ScriptedProvider::from_entries(replies.iter().map(|r| ScriptEntry::ordered(*r, 10, 5)).collect()).unwrap()
    }

    fn task(title: &str) -> TaskSpec {
        TaskSpec::new(title, "", TaskSource::User)
    }

    fn subtask() -> SubTask {
        SubTask {
            id: "ST-1".into(),
            title: "Load prices".into(),
            description: "Read CSV".into(),
            acceptance_criteria: vec!["parses rows".into()],
            story_points: None,
            depends_on: vec![],
            status: SubTaskStatus::Todo,
        }
    }

    #[test]
    fn assess_clear_and_unclear() {
        let p = script(&[r#"{"is_clear": true, "missing_aspects": []}"#]);
        let a = assess(&task("build stock options visualization tool"), &Llm::new(&p, "m")).unwrap();
        assert!(a.is_clear && a.missing_aspects.is_empty());

        let p = script(&[r#"{"is_clear": false, "missing_aspects": ["what should improve", "success measure"]}"#]);
        let a = assess(&task("make it better"), &Llm::new(&p, "m")).unwrap();
        assert!(!a.is_clear);
        assert_eq!(a.missing_aspects.len(), 2);
    }

    #[test]
    fn assess_requires_title() {
        let p = script(&[]);
        assert!(matches!(assess(&task("  "), &Llm::new(&p, "m")), Err(PlanError::EmptyTitle)));
    }

    #[test]
    fn unclear_verdict_without_aspects_is_schema_error() {
        let p = script(&[r#"{"is_clear": false}"#, r#"{"is_clear": false, "missing_aspects": []}"#]);
        assert!(matches!(assess(&task("x"), &Llm::new(&p, "m")), Err(PlanError::Schema(_))));
    }

    #[test]
    fn refine_identity_and_rewrite() {
        let p = script(&[]);
        let t = task("clear task");
        let clear = ClarityAssessment { is_clear: true, missing_aspects: vec![], rewritten_description: None };
        let once = refine(&t, &clear, &Llm::new(&p, "m")).unwrap();
        assert_eq!(once, t);
        assert_eq!(refine(&once, &clear, &Llm::new(&p, "m")).unwrap(), once);

        let p = script(&[r#"{"description": "Add a CSV export button to the report page."}"#]);
        let unclear = ClarityAssessment { is_clear: false, missing_aspects: vec!["which output".into()], rewritten_description: None };
        let mut tracked = task("make it better");
        tracked.source = TaskSource::Tracker;
        let r = refine(&tracked, &unclear, &Llm::new(&p, "m")).unwrap();
        assert_eq!(r.description, "Add a CSV export button to the report page.");
        assert_eq!(r.source, TaskSource::Tracker);
        assert!(p.requests()[0].messages[1].text.contains("which output"));
    }

    #[test]
    fn refine_empty_rewrite_is_schema_error() {
        let p = script(&[r#"{"description": ""}"#, r#"{"description": "  "}"#]);
        let unclear = ClarityAssessment { is_clear: false, missing_aspects: vec!["x".into()], rewritten_description: None };
        assert!(matches!(refine(&task("t"), &unclear, &Llm::new(&p, "m")), Err(PlanError::Schema(_))));
    }

    #[test]
    fn decompose_single_subtask() {
        let p = script(&[r#"{"subtasks": [{"title": "Do it", "description": "all", "acceptance_criteria": ["works"]}]}"#]);
        let plan = decompose(&task("t"), None, &Llm::new(&p, "m")).unwrap();
        assert_eq!(plan.subtasks.len(), 1);
        assert_eq!(plan.subtasks[0].id, "ST-1");
        assert!(plan.subtasks[0].depends_on.is_empty());
        plan.validate().unwrap();
    }

    #[test]
    fn decompose_reorders_topologically() {
        let reply = r#"{"subtasks": [
            {"title": "UI", "acceptance_criteria": ["renders"], "depends_on": ["ST-2"]},
            {"title": "Data", "acceptance_criteria": ["loads"]}
        ]}"#;
        let p = script(&[reply]);
        let plan = decompose(&task("t"), None, &Llm::new(&p, "m")).unwrap();
        let ids: Vec<_> = plan.subtasks.iter().map(|s| s.id.as_str()).collect();
        assert_eq!(ids, ["ST-2", "ST-1"]);
        plan.validate().unwrap();
    }

    #[test]
    fn decompose_cycle_errors_after_one_reprompt() {
        let cyclic = r#"{"subtasks": [
            {"title": "A", "acceptance_criteria": ["a"], "depends_on": ["ST-2"]},
            {"title": "B", "acceptance_criteria": ["b"], "depends_on": ["ST-1"]}
        ]}"#;
        let p = script(&[cyclic, cyclic]);
        let err = decompose(&task("t"), None, &Llm::new(&p, "m")).unwrap_err();
        assert!(matches!(err, PlanError::CyclicDependencies(ref s) if s.contains("ST-1") && s.contains("ST-2")), "{err}");
        assert_eq!(p.requests().len(), 2);
        assert!(p.requests()[1].messages.last().unwrap().text.contains("cycle"));
    }

    #[test]
    fn decompose_embeds_outline_verbatim() {
        let outline = "app.py::app::file | Streamlit entry point.\n  app.py::main::function | Draws the page.";
        let p = script(&[r#"{"subtasks": [{"title": "x", "acceptance_criteria": ["y"]}]}"#]);
        decompose(&task("t"), Some(outline), &Llm::new(&p, "m")).unwrap();
        let sent = &p.requests()[0].messages[1].text;
        for line in outline.lines() {
            assert!(sent.contains(line));
        }
    }

    #[test]
    fn decompose_rejects_unrefined_task() {
        let p = script(&[]);
        let mut t = task("t");
        t.clarity = Some(ClarityAssessment { is_clear: false, missing_aspects: vec!["x".into()], rewritten_description: None });
        assert!(matches!(decompose(&t, None, &Llm::new(&p, "m")), Err(PlanError::Unrefined)));
    }

    #[test]
    fn estimate_on_scale_and_snapped() {
        let scale = StoryScale::default();
        let examples = vec![
            FewShotExample { description: "Add login form".into(), points: 3 },
            FewShotExample { description: "Migrate database".into(), points: 13 },
        ];
        let p = script(&["3"]);
        let e = estimate(&subtask(), &examples, &scale, &Llm::new(&p, "m")).unwrap();
        assert_eq!(e, Estimate { points: 3, warning: None });
        let sent = &p.requests()[0].messages[1].text;
        assert!(sent.contains("Description: Add login form\nStory points: 3"));
        assert!(sent.contains("Description: Migrate database\nStory points: 13"));

        let p = script(&["4"]);
        let e = estimate(&subtask(), &examples, &scale, &Llm::new(&p, "m")).unwrap();
        assert_eq!(e.points, 3);
        assert!(e.warning.is_some());
    }

    #[test]
    fn singleton_scale_always_one() {
        let p = script(&[]);
        let e = estimate(&subtask(), &[], &StoryScale::new(vec![1]).unwrap(), &Llm::new(&p, "m")).unwrap();
        assert_eq!(e.points, 1);
    }

    #[test]
    fn snap_rule() {
        let s = StoryScale::default();
        assert_eq!(s.snap(4), 3);
        assert_eq!(s.snap(7), 8);
        assert_eq!(s.snap(100), 13);
        assert_eq!(s.snap(-5), 1);
        // tie between 1 and 3
        assert_eq!(StoryScale::new(vec![1, 3]).unwrap().snap(2), 1);
    }

    #[test]
    fn markdown_task_file() {
        let t = TaskSpec::from_markdown("\n# Build a tool\n\nIt shows charts.\nMore.\n", TaskSource::User);
        assert_eq!(t.title, "Build a tool");
        assert_eq!(t.description, "It shows charts.\nMore.");
    }

    proptest::proptest! {
        #[test]
        fn snap_is_nearest_with_downward_ties(values in proptest::collection::btree_set(0u32..40, 1..8), v in -10i64..60) {
            let scale = StoryScale::new(values.iter().copied().collect()).unwrap();
            let got = scale.snap(v);
            let best = values.iter().map(|&m| (m as i64 - v).abs()).min().unwrap();
            proptest::prop_assert_eq!((got as i64 - v).abs(), best);
            let lowest = values.iter().copied().find(|&m| (m as i64 - v).abs() == best).unwrap();
            proptest::prop_assert_eq!(got, lowest);
        }
    }
}
