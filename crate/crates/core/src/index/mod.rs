//! Hierarchical natural-language replica of a codebase.
//!
//! Every file, top-level function, class and method gets a one-sentence
//! summary. Other agents read the rendered outline instead of the code.
//! Index values are immutable; [`update_index`] returns a new value.

mod build;
mod outline;
pub mod parser;
mod python;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::provider::ProviderError;

pub use build::{build_index, summary_prompt, update_index, IndexOptions, IndexOutcome, SummaryTemplates};
pub use outline::{outline_unit_ids, render_outline, ELISION_PREFIX};
pub use parser::{extract_units, file_unit_id, Extraction, ParserRegistry, StructuralParser};
pub use python::PythonParser;

pub const INDEX_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum IndexError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("summary provider failed: {0}")]
    Provider(#[from] ProviderError),
    #[error("could not summarize {path}: {message}")]
    Summary { path: String, message: String },
    #[error("changed path {0:?} is outside the repository root")]
    OutsideRepo(String),
    #[error("unknown code unit {0:?}")]
    NotFound(String),
    #[error("invalid index document: {0}")]
    Document(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnitKind {
    File,
    Function,
    Class,
    Method,
}

impl UnitKind {
    /// Nesting depth in the hierarchy.
    pub fn depth(self) -> usize {
        match self {
            UnitKind::File => 0,
            UnitKind::Function | UnitKind::Class => 1,
            UnitKind::Method => 2,
        }
    }
}

impl fmt::Display for UnitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UnitKind::File => "file",
            UnitKind::Function => "function",
            UnitKind::Class => "class",
            UnitKind::Method => "method",
        })
    }
}

/// 1-based inclusive line range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start_line: usize,
    pub end_line: usize,
}

impl Span {
    pub fn new(start_line: usize, end_line: usize) -> Self {
        debug_assert!(start_line >= 1 && start_line <= end_line);
        Span { start_line, end_line }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeUnit {
    pub id: String,
    pub kind: UnitKind,
    pub path: String,
    pub qualified_name: String,
    pub span: Span,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_id: Option<String>,
}

impl CodeUnit {
    pub fn new(kind: UnitKind, path: &str, qualified_name: &str, span: Span, parent_id: Option<String>) -> Self {
        CodeUnit {
            id: format!("{path}::{qualified_name}::{kind}"),
            kind,
            path: path.to_string(),
            qualified_name: qualified_name.to_string(),
            span,
            parent_id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummaryNode {
    #[serde(flatten)]
    pub unit: CodeUnit,
    pub summary: String,
    #[serde(default)]
    pub children: Vec<String>,
}

impl SummaryNode {
    pub fn unit_id(&self) -> &str {
        &self.unit.id
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SummaryIndex {
    version: u64,
    repo_fingerprint: String,
    nodes: BTreeMap<String, SummaryNode>,
    file_hashes: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
struct IndexDocument {
    schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    version: Option<u64>,
    repo_fingerprint: String,
    files: BTreeMap<String, String>,
    nodes: Vec<SummaryNode>,
}

/// Fingerprint over `(path, content hash)` pairs in path order.
pub fn repo_fingerprint(file_hashes: &BTreeMap<String, String>) -> String {
    let mut hasher = Sha256::new();
    for (path, hash) in file_hashes {
        hasher.update(path.as_bytes());
        hasher.update([0]);
        hasher.update(hash.as_bytes());
        hasher.update(b"\n");
    }
    hex::encode(hasher.finalize())
}

impl SummaryIndex {
    fn from_parts(version: u64, nodes: BTreeMap<String, SummaryNode>, file_hashes: BTreeMap<String, String>) -> Self {
        SummaryIndex { version, repo_fingerprint: repo_fingerprint(&file_hashes), nodes, file_hashes }
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn repo_fingerprint(&self) -> &str {
        &self.repo_fingerprint
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes in unit-id order.
    pub fn nodes(&self) -> impl Iterator<Item = &SummaryNode> {
        self.nodes.values()
    }

    pub fn contains(&self, unit_id: &str) -> bool {
        self.nodes.contains_key(unit_id)
    }

    /// File unit ids, ordered by path.
    pub fn files(&self) -> Vec<&str> {
        let mut files: Vec<&SummaryNode> = self.nodes.values().filter(|n| n.unit.kind == UnitKind::File).collect();
        files.sort_by(|a, b| a.unit.path.cmp(&b.unit.path));
        files.into_iter().map(|n| n.unit_id()).collect()
    }

    pub fn indexed_paths(&self) -> impl Iterator<Item = &str> {
        self.file_hashes.keys().map(String::as_str)
    }

    pub fn file_hash(&self, path: &str) -> Option<&str> {
        self.file_hashes.get(path).map(String::as_str)
    }

    pub fn lookup_unit(&self, unit_id: &str) -> Result<&SummaryNode, IndexError> {
        self.nodes.get(unit_id).ok_or_else(|| IndexError::NotFound(unit_id.to_string()))
    }

    /// Checks the forest invariants: valid spans, well-typed parents,
    /// children lists that mirror parent links, no orphans.
    pub fn validate(&self) -> Result<(), String> {
        let mut child_count = 0usize;
        for (id, node) in &self.nodes {
            let u = &node.unit;
            if id != &u.id {
                return Err(format!("node key {id} does not match unit id {}", u.id));
            }
            if u.span.start_line == 0 || u.span.start_line > u.span.end_line {
                return Err(format!("{id}: invalid span"));
            }
            if node.summary.trim().is_empty() {
                return Err(format!("{id}: empty summary"));
            }
            let expected_parent = match u.kind {
                UnitKind::File => None,
                UnitKind::Function | UnitKind::Class => Some(UnitKind::File),
                UnitKind::Method => Some(UnitKind::Class),
            };
            match (&u.parent_id, expected_parent) {
                (None, None) => {
                    if !self.file_hashes.contains_key(&u.path) {
                        return Err(format!("{id}: file without content hash"));
                    }
                }
                (Some(pid), Some(kind)) => {
                    let parent = self.nodes.get(pid).ok_or_else(|| format!("{id}: missing parent {pid}"))?;
                    if parent.unit.kind != kind || parent.unit.path != u.path {
                        return Err(format!("{id}: parent {pid} has the wrong kind or path"));
                    }
                    if !parent.children.contains(id) {
                        return Err(format!("{id}: not listed among its parent's children"));
                    }
                }
                _ => return Err(format!("{id}: parent link does not match kind {}", u.kind)),
            }
            for child in &node.children {
                let c = self.nodes.get(child).ok_or_else(|| format!("{id}: unknown child {child}"))?;
                if c.unit.parent_id.as_deref() != Some(id.as_str()) {
                    return Err(format!("{id}: child {child} points elsewhere"));
                }
                child_count += 1;
            }
        }
        let roots = self.nodes.values().filter(|n| n.unit.parent_id.is_none()).count();
        if roots + child_count != self.nodes.len() {
            return Err("children lists do not partition the non-file nodes".into());
        }
        let file_paths: BTreeSet<&str> =
            self.nodes.values().filter(|n| n.unit.kind == UnitKind::File).map(|n| n.unit.path.as_str()).collect();
        if file_paths.len() != self.file_hashes.len() || !self.file_hashes.keys().all(|p| file_paths.contains(p.as_str())) {
            return Err("file table and file nodes disagree".into());
        }
        Ok(())
    }

    fn document(&self, include_version: bool) -> IndexDocument {
        IndexDocument {
            schema_version: INDEX_SCHEMA_VERSION,
            version: include_version.then_some(self.version),
            repo_fingerprint: self.repo_fingerprint.clone(),
            files: self.file_hashes.clone(),
            nodes: self.nodes.values().cloned().collect(),
        }
    }

    /// Canonical persisted form.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.document(true)).expect("index serializes");
        s.push('\n');
        s
    }

    /// Canonical form without the version counter: two indexes describing
    /// the same repository state compare byte-equal here regardless of how
    /// many updates produced them.
    pub fn content_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.document(false)).expect("index serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, IndexError> {
        let doc: IndexDocument = serde_json::from_str(text).map_err(|e| IndexError::Document(e.to_string()))?;
        if doc.schema_version != INDEX_SCHEMA_VERSION {
            return Err(IndexError::Document(format!("unsupported schema_version {}", doc.schema_version)));
        }
        let version = doc.version.ok_or_else(|| IndexError::Document("missing version".into()))?;
        let nodes: BTreeMap<String, SummaryNode> = doc.nodes.into_iter().map(|n| (n.unit.id.clone(), n)).collect();
        let index = SummaryIndex::from_parts(version, nodes, doc.files);
        if index.repo_fingerprint != doc.repo_fingerprint {
            return Err(IndexError::Document("repo_fingerprint does not match the file table".into()));
        }
        index.validate().map_err(IndexError::Document)?;
        Ok(index)
    }

    pub fn save(&self, path: &Path) -> Result<(), IndexError> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, self.to_json())?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, IndexError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
