use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use super::parser::{extract_units, ParserRegistry};
use super::{CodeUnit, IndexError, SummaryIndex, SummaryNode, UnitKind};
use crate::fsutil;
use crate::llm::{parse_json, AskError, Llm};
use crate::provider::Message;
use crate::tokens::truncate_to_tokens;

/// Prompt templates for summarization, one per unit kind plus a system
/// preamble. `{name}` is replaced with the unit's qualified name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SummaryTemplates {
    pub system: String,
    pub file: String,
    pub class: String,
    pub function: String,
    pub method: String,
}

impl Default for SummaryTemplates {
    fn default() -> Self {
        SummaryTemplates {
            system: include_str!("../../templates/summary/system.txt").trim().to_string(),
            file: include_str!("../../templates/summary/file.txt").trim().to_string(),
            class: include_str!("../../templates/summary/class.txt").trim().to_string(),
            function: include_str!("../../templates/summary/function.txt").trim().to_string(),
            method: include_str!("../../templates/summary/method.txt").trim().to_string(),
        }
    }
}

impl SummaryTemplates {
    /// Loads `system.txt`, `file.txt`, `class.txt`, `function.txt` and
    /// `method.txt` from `dir`; missing files keep the built-in text.
    pub fn load_dir(dir: &Path) -> std::io::Result<Self> {
        let mut t = SummaryTemplates::default();
        for (name, slot) in [
            ("system", &mut t.system),
            ("file", &mut t.file),
            ("class", &mut t.class),
            ("function", &mut t.function),
            ("method", &mut t.method),
        ] {
            let path = dir.join(format!("{name}.txt"));
            if path.exists() {
                *slot = std::fs::read_to_string(path)?.trim().to_string();
            }
        }
        Ok(t)
    }

    fn for_kind(&self, kind: UnitKind) -> &str {
        match kind {
            UnitKind::File => &self.file,
            UnitKind::Class => &self.class,
            UnitKind::Function => &self.function,
            UnitKind::Method => &self.method,
        }
    }
}

#[derive(Debug, Clone)]
pub struct IndexOptions {
    pub max_summary_words: usize,
    /// Source longer than this is truncated in the summary prompt.
    pub max_source_tokens: usize,
    pub templates: SummaryTemplates,
}

impl Default for IndexOptions {
    fn default() -> Self {
        IndexOptions { max_summary_words: 30, max_source_tokens: 6000, templates: SummaryTemplates::default() }
    }
}

#[derive(Debug, Clone)]
pub struct IndexOutcome {
    pub index: SummaryIndex,
    /// Degraded-extraction and similar non-fatal notes.
    pub warnings: Vec<String>,
}

/// One prompt per file covering all of its units.
pub fn summary_prompt(path: &str, text: &str, units: &[CodeUnit], options: &IndexOptions) -> Vec<Message> {
    let mut body = format!(
        "Repository file: {path}\n\
         Write a one-sentence summary for each code unit listed below. Reply with only a JSON object \
         that maps every unit id to its summary.\n\nUnits:\n"
    );
    for unit in units {
        let instruction = options.templates.for_kind(unit.kind).replace("{name}", &unit.qualified_name);
        body.push_str(&format!(
            "- {} (lines {}-{}): {instruction}\n",
            unit.id, unit.span.start_line, unit.span.end_line
        ));
    }
    let source = truncate_to_tokens(text, options.max_source_tokens);
    body.push_str(&format!("\nSource of {path}:\n<<<\n{source}"));
    if source.len() < text.len() {
        body.push_str("\n[... source truncated ...]");
    }
    body.push_str("\n>>>\n");
    vec![Message::system(options.templates.system.clone()), Message::user(body)]
}

fn clamp_summary(text: &str, max_words: usize) -> String {
    let words: Vec<&str> = text.split_whitespace().collect();
    if words.len() <= max_words {
        words.join(" ")
    } else {
        format!("{} …", words[..max_words].join(" "))
    }
}

fn summarize_file(
    path: &str,
    text: &str,
    registry: &ParserRegistry,
    llm: &Llm<'_>,
    options: &IndexOptions,
    warnings: &mut Vec<String>,
) -> Result<Vec<SummaryNode>, IndexError> {
    let extraction = extract_units(path, text, registry);
    warnings.extend(extraction.warnings);
    let units = extraction.units;
    let messages = summary_prompt(path, text, &units, options);
    let ids: Vec<&str> = units.iter().map(|u| u.id.as_str()).collect();
    let summaries = llm
        .ask_parsed(messages, |reply| {
            let map: BTreeMap<String, String> = parse_json(reply)?;
            let missing: Vec<&str> =
                ids.iter().copied().filter(|id| map.get(*id).is_none_or(|s| s.trim().is_empty())).collect();
            if missing.is_empty() {
                Ok(map)
            } else {
                Err(format!("missing summaries for {}", missing.join(", ")))
            }
        })
        .map_err(|e| match e {
            AskError::Provider(p) => IndexError::Provider(p),
            AskError::Invalid { error, .. } => IndexError::Summary { path: path.to_string(), message: error },
        })?;

    let mut children: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    for unit in &units {
        if let Some(parent) = &unit.parent_id {
            children.entry(parent.as_str()).or_default().push(unit.id.clone());
        }
    }
    Ok(units
        .iter()
        .map(|unit| SummaryNode {
            unit: unit.clone(),
            summary: clamp_summary(&summaries[&unit.id], options.max_summary_words),
            children: children.remove(unit.id.as_str()).unwrap_or_default(),
        })
        .collect())
}

fn source_files(repo_root: &Path, registry: &ParserRegistry) -> Result<BTreeMap<String, Vec<u8>>, IndexError> {
    if !repo_root.is_dir() {
        return Err(IndexError::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("repository {} is not a readable directory", repo_root.display()),
        )));
    }
    Ok(fsutil::scan_files(repo_root)?.into_iter().filter(|(p, _)| registry.is_source(p)).collect())
}

/// Summarizes every source file under `repo_root`.
pub fn build_index(
    repo_root: &Path,
    registry: &ParserRegistry,
    llm: &Llm<'_>,
    options: &IndexOptions,
) -> Result<IndexOutcome, IndexError> {
    let files = source_files(repo_root, registry)?;
    let mut nodes = BTreeMap::new();
    let mut hashes = BTreeMap::new();
    let mut warnings = Vec::new();
    for (path, bytes) in &files {
        let text = String::from_utf8_lossy(bytes);
        for node in summarize_file(path, &text, registry, llm, options, &mut warnings)? {
            nodes.insert(node.unit.id.clone(), node);
        }
        hashes.insert(path.clone(), fsutil::sha256_hex(bytes));
    }
    Ok(IndexOutcome { index: SummaryIndex::from_parts(1, nodes, hashes), warnings })
}

/// Brings `index` up to date with the working tree. Listed paths (files or
/// directories) must lie inside the repository. Files whose content hash
/// drifted since the index was built are refreshed too, listed or not, so
/// the resulting fingerprint always matches the tree. Nodes of untouched
/// files are carried over verbatim.
pub fn update_index(
    index: &SummaryIndex,
    changed_paths: &[String],
    repo_root: &Path,
    registry: &ParserRegistry,
    llm: &Llm<'_>,
    options: &IndexOptions,
) -> Result<IndexOutcome, IndexError> {
    for p in changed_paths {
        fsutil::resolve_in_repo(repo_root, p).map_err(|_| IndexError::OutsideRepo(p.clone()))?;
    }
    let current = source_files(repo_root, registry)?;

    let mut affected: BTreeSet<String> = BTreeSet::new();
    for (path, bytes) in &current {
        if index.file_hash(path) != Some(fsutil::sha256_hex(bytes).as_str()) {
            affected.insert(path.clone());
        }
    }
    for path in index.indexed_paths() {
        if !current.contains_key(path) {
            affected.insert(path.to_string());
        }
    }

    let mut nodes = index.nodes.clone();
    let mut hashes = index.file_hashes.clone();
    let mut warnings = Vec::new();
    for path in &affected {
        nodes.retain(|_, n| &n.unit.path != path);
        hashes.remove(path);
        if let Some(bytes) = current.get(path) {
            let text = String::from_utf8_lossy(bytes);
            for node in summarize_file(path, &text, registry, llm, options, &mut warnings)? {
                nodes.insert(node.unit.id.clone(), node);
            }
            hashes.insert(path.clone(), fsutil::sha256_hex(bytes));
        }
    }
    Ok(IndexOutcome { index: SummaryIndex::from_parts(index.version + 1, nodes, hashes), warnings })
}
