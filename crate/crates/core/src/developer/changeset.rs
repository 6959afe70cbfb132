//! Changesets: the multi-file response grammar, atomic apply with an
//! inverse, rollback and unified diffs.

use std::collections::BTreeSet;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use similar::TextDiff;

use crate::fsutil::{self, normalize_rel, STATE_DIR_NAME};

const FILE_OPEN: &str = "===FILE path=";
const DELETE_OPEN: &str = "===DELETE path=";
const MARK_CLOSE: &str = "===";
const END: &str = "===END===";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ChangeSetError {
    #[error("path {0:?} is outside the repository or reserved")]
    Security(String),
    #[error("path {0:?} appears more than once")]
    Duplicate(String),
    #[error("commit message is empty")]
    EmptyMessage,
    #[error("changeset has no edits or deletions")]
    Empty,
}

#[derive(Debug, thiserror::Error)]
pub enum ApplyError {
    #[error(transparent)]
    Invalid(#[from] ChangeSetError),
    #[error("cannot delete {0}: no such file")]
    MissingDeletion(String),
    #[error("changeset has not been applied")]
    NotApplied,
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GrammarError {
    #[error("line {line}: malformed block header {text:?}")]
    BadHeader { line: usize, text: String },
    #[error("block for {path} has no ===END=== line")]
    MissingEnd { path: String },
    #[error("response contains no ===FILE or ===DELETE blocks")]
    NoBlocks,
    #[error(transparent)]
    Invalid(#[from] ChangeSetError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEdit {
    pub path: String,
    pub content: String,
}

/// Prior state of one touched path; `None` when the file did not exist.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PriorFile {
    pub path: String,
    pub content: Option<Vec<u8>>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Inverse {
    pub prior: Vec<PriorFile>,
    /// Directories created by the apply, parents before children.
    pub created_dirs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangeSet {
    pub edits: Vec<FileEdit>,
    pub deletions: Vec<String>,
    pub commit_message: String,
    #[serde(skip)]
    pub inverse: Option<Inverse>,
}

fn check_path(path: &str) -> Result<String, ChangeSetError> {
    let norm = normalize_rel(path).map_err(|e| ChangeSetError::Security(e.0))?;
    if norm.split('/').next() == Some(STATE_DIR_NAME) {
        return Err(ChangeSetError::Security(path.to_string()));
    }
    Ok(norm)
}

impl ChangeSet {
    /// Normalizes paths and checks the changeset invariants.
    pub fn new(edits: Vec<FileEdit>, deletions: Vec<String>, commit_message: impl Into<String>) -> Result<Self, ChangeSetError> {
        let commit_message = commit_message.into();
        if commit_message.trim().is_empty() {
            return Err(ChangeSetError::EmptyMessage);
        }
        if edits.is_empty() && deletions.is_empty() {
            return Err(ChangeSetError::Empty);
        }
        let mut seen = BTreeSet::new();
        let mut norm_edits = Vec::with_capacity(edits.len());
        for e in edits {
            let path = check_path(&e.path)?;
            if !seen.insert(path.clone()) {
                return Err(ChangeSetError::Duplicate(path));
            }
            norm_edits.push(FileEdit { path, content: e.content });
        }
        let mut norm_dels = Vec::with_capacity(deletions.len());
        for d in deletions {
            let path = check_path(&d)?;
            if !seen.insert(path.clone()) {
                return Err(ChangeSetError::Duplicate(path));
            }
            norm_dels.push(path);
        }
        Ok(ChangeSet { edits: norm_edits, deletions: norm_dels, commit_message, inverse: None })
    }

    /// Every path the changeset touches, edits first.
    pub fn paths(&self) -> Vec<String> {
        self.edits.iter().map(|e| e.path.clone()).chain(self.deletions.iter().cloned()).collect()
    }

    /// Serializes back into the response grammar.
    pub fn to_blocks(&self) -> String {
        let mut out = String::new();
        for e in &self.edits {
            out.push_str(&format!("{FILE_OPEN}{}{MARK_CLOSE}\n{}", e.path, e.content));
            if !e.content.is_empty() && !e.content.ends_with('\n') {
                out.push('\n');
            }
            out.push_str(END);
            out.push('\n');
        }
        for d in &self.deletions {
            out.push_str(&format!("{DELETE_OPEN}{d}{MARK_CLOSE}\n"));
        }
        out
    }
}

fn header_path<'a>(line: &'a str, open: &str) -> Option<&'a str> {
    line.strip_prefix(open)?.strip_suffix(MARK_CLOSE).map(str::trim).filter(|p| !p.is_empty())
}

/// Parses a model response. Text outside blocks is ignored; each body is
/// the lines between the header and `===END===`, each kept with its newline.
pub fn parse_changeset(response: &str, commit_message: &str) -> Result<ChangeSet, GrammarError> {
    let mut edits = Vec::new();
    let mut deletions = Vec::new();
    let mut lines = response.split_inclusive('\n').enumerate();
    while let Some((n, raw)) = lines.next() {
        let line = raw.trim_end_matches(['\n', '\r']);
        if line.starts_with(FILE_OPEN) {
            let path = header_path(line, FILE_OPEN).ok_or_else(|| GrammarError::BadHeader { line: n + 1, text: line.into() })?;
            let mut content = String::new();
            let mut closed = false;
            for (_, body) in lines.by_ref() {
                let trimmed = body.trim_end_matches(['\n', '\r']);
                if trimmed == END {
                    closed = true;
                    break;
                }
                if trimmed.starts_with(FILE_OPEN) || trimmed.starts_with(DELETE_OPEN) {
                    break;
                }
                content.push_str(trimmed);
                content.push('\n');
            }
            if !closed {
                return Err(GrammarError::MissingEnd { path: path.to_string() });
            }
            edits.push(FileEdit { path: path.to_string(), content });
        } else if line.starts_with(DELETE_OPEN) {
            let path = header_path(line, DELETE_OPEN).ok_or_else(|| GrammarError::BadHeader { line: n + 1, text: line.into() })?;
            deletions.push(path.to_string());
        } else if line.starts_with("===FILE") || line.starts_with("===DELETE") {
            return Err(GrammarError::BadHeader { line: n + 1, text: line.into() });
        }
    }
    if edits.is_empty() && deletions.is_empty() {
        return Err(GrammarError::NoBlocks);
    }
    Ok(ChangeSet::new(edits, deletions, commit_message)?)
}

fn io_err(path: &str) -> impl FnOnce(io::Error) -> ApplyError + '_ {
    move |source| ApplyError::Io { path: path.to_string(), source }
}

/// Refuses paths that would traverse an existing symlink.
fn check_no_symlinks(root: &Path, rel: &str) -> Result<(), ChangeSetError> {
    let mut cur = root.to_path_buf();
    for part in rel.split('/') {
        cur.push(part);
        match fs::symlink_metadata(&cur) {
            Ok(m) if m.file_type().is_symlink() => return Err(ChangeSetError::Security(rel.to_string())),
            Ok(_) => {}
            Err(_) => break,
        }
    }
    Ok(())
}

fn read_prior(root: &Path, rel: &str) -> Result<Option<Vec<u8>>, ApplyError> {
    match fs::read(fsutil::join_rel(root, rel)) {
        Ok(b) => Ok(Some(b)),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(io_err(rel)(e)),
    }
}

/// Writes all edits and deletions or none of them. On success the returned
/// changeset carries the inverse needed by [`rollback`].
pub fn apply(repo_root: &Path, changeset: &ChangeSet) -> Result<ChangeSet, ApplyError> {
    let cs = ChangeSet::new(changeset.edits.clone(), changeset.deletions.clone(), changeset.commit_message.clone())?;
    for p in cs.paths() {
        check_no_symlinks(repo_root, &p)?;
    }
    let mut inverse = Inverse::default();
    for e in &cs.edits {
        inverse.prior.push(PriorFile { path: e.path.clone(), content: read_prior(repo_root, &e.path)? });
    }
    for d in &cs.deletions {
        let prior = read_prior(repo_root, d)?.ok_or_else(|| ApplyError::MissingDeletion(d.clone()))?;
        inverse.prior.push(PriorFile { path: d.clone(), content: Some(prior) });
    }

    // Everything is written to a staging directory first, so the commit
    // step below is renames and removals only.
    let stage = tempfile::Builder::new()
        .prefix(".almas-stage-")
        .tempdir_in(repo_root)
        .map_err(io_err("staging directory"))?;
    let mut staged: Vec<PathBuf> = Vec::with_capacity(cs.edits.len());
    for (i, e) in cs.edits.iter().enumerate() {
        let p = stage.path().join(i.to_string());
        fs::write(&p, &e.content).map_err(io_err(&e.path))?;
        staged.push(p);
    }

    let result = commit_staged(repo_root, &cs, &staged, &mut inverse);
    match result {
        Ok(()) => Ok(ChangeSet { inverse: Some(inverse), ..cs }),
        Err(e) => {
            if let Err(undo) = restore(repo_root, &inverse) {
                log::error!("rollback after failed apply also failed: {undo}");
            }
            Err(e)
        }
    }
}

fn commit_staged(root: &Path, cs: &ChangeSet, staged: &[PathBuf], inverse: &mut Inverse) -> Result<(), ApplyError> {
    for (e, src) in cs.edits.iter().zip(staged) {
        let mut dir = String::new();
        for part in e.path.split('/').collect::<Vec<_>>().split_last().map(|(_, d)| d.to_vec()).unwrap_or_default() {
            if !dir.is_empty() {
                dir.push('/');
            }
            dir.push_str(part);
            let full = fsutil::join_rel(root, &dir);
            if !full.exists() {
                fs::create_dir(&full).map_err(io_err(&e.path))?;
                inverse.created_dirs.push(dir.clone());
            }
        }
        let target = fsutil::join_rel(root, &e.path);
        if target.is_dir() {
            return Err(io_err(&e.path)(io::Error::new(io::ErrorKind::IsADirectory, "target is a directory")));
        }
        fs::rename(src, &target).map_err(io_err(&e.path))?;
    }
    for d in &cs.deletions {
        fs::remove_file(fsutil::join_rel(root, d)).map_err(io_err(d))?;
    }
    Ok(())
}

fn restore(root: &Path, inverse: &Inverse) -> Result<(), ApplyError> {
    for prior in inverse.prior.iter().rev() {
        let full = fsutil::join_rel(root, &prior.path);
        match &prior.content {
            Some(bytes) => {
                if let Some(parent) = full.parent() {
                    fs::create_dir_all(parent).map_err(io_err(&prior.path))?;
                }
                fs::write(&full, bytes).map_err(io_err(&prior.path))?;
            }
            None if full.is_file() => fs::remove_file(&full).map_err(io_err(&prior.path))?,
            None => {}
        }
    }
    for dir in inverse.created_dirs.iter().rev() {
        // Only empty directories go; anything else was there for a reason.
        let _ = fs::remove_dir(fsutil::join_rel(root, dir));
    }
    Ok(())
}

/// Restores every touched path to its pre-apply bytes.
pub fn rollback(repo_root: &Path, applied: &ChangeSet) -> Result<(), ApplyError> {
    let inverse = applied.inverse.as_ref().ok_or(ApplyError::NotApplied)?;
    restore(repo_root, inverse)
}

/// Unified diff of an applied changeset, from its inverse to its new contents.
pub fn unified_diff(applied: &ChangeSet) -> Result<String, ApplyError> {
    let inverse = applied.inverse.as_ref().ok_or(ApplyError::NotApplied)?;
    let mut out = String::new();
    for prior in &inverse.prior {
        let old = prior.content.as_deref().map(String::from_utf8_lossy);
        let new = applied.edits.iter().find(|e| e.path == prior.path).map(|e| e.content.as_str());
        let old_text = old.as_deref().unwrap_or("");
        let new_text = new.unwrap_or("");
        if old.is_some() && new.is_some() && old_text == new_text {
            continue;
        }
        let a = if old.is_some() { format!("a/{}", prior.path) } else { "/dev/null".to_string() };
        let b = if new.is_some() { format!("b/{}", prior.path) } else { "/dev/null".to_string() };
        out.push_str(&format!("diff --git a/{0} b/{0}\n", prior.path));
        out.push_str(&TextDiff::from_lines(old_text, new_text).unified_diff().context_radius(3).header(&a, &b).to_string());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn edit(path: &str, content: &str) -> FileEdit {
        FileEdit { path: path.into(), content: content.into() }
    }

    #[test]
    fn parses_blocks() {
        let text = "Here you go:\n===FILE path=app.py===\nprint('hi')\n\n===END===\n===FILE path=tests/test_app.py===\nimport app\n===END===\n===DELETE path=old.py===\n";
        let cs = parse_changeset(text, "ST-1: app").unwrap();
        assert_eq!(cs.edits, vec![edit("app.py", "print('hi')\n\n"), edit("tests/test_app.py", "import app\n")]);
        assert_eq!(cs.deletions, vec!["old.py"]);
        assert_eq!(parse_changeset(&cs.to_blocks(), "m").unwrap().edits, cs.edits);
    }

    #[test]
    fn grammar_errors() {
        assert_eq!(parse_changeset("no blocks here", "m").unwrap_err(), GrammarError::NoBlocks);
        assert!(matches!(parse_changeset("===FILE path=a.py===\nx\n", "m"), Err(GrammarError::MissingEnd { .. })));
        assert!(matches!(
            parse_changeset("===FILE path=a.py===\nx\n===FILE path=b.py===\ny\n===END===\n", "m"),
            Err(GrammarError::MissingEnd { .. })
        ));
        assert!(matches!(parse_changeset("===FILE a.py===\n===END===\n", "m"), Err(GrammarError::BadHeader { .. })));
        assert!(matches!(
            parse_changeset("===FILE path=a.py===\n===END===\n===DELETE path=./a.py===\n", "m"),
            Err(GrammarError::Invalid(ChangeSetError::Duplicate(_)))
        ));
        assert!(matches!(
            parse_changeset("===FILE path=../a.py===\n===END===\n", "m"),
            Err(GrammarError::Invalid(ChangeSetError::Security(_)))
        ));
    }

    #[test]
    fn apply_then_rollback() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        fs::write(root.join("keep.py"), "a\n").unwrap();
        fs::write(root.join("gone.py"), "b\n").unwrap();
        let before = fsutil::tree_snapshot(root).unwrap();
        let cs = ChangeSet::new(vec![edit("keep.py", "a2\n"), edit("pkg/sub/new.py", "n\n")], vec!["gone.py".into()], "m").unwrap();
        let applied = apply(root, &cs).unwrap();
        assert_eq!(fs::read_to_string(root.join("pkg/sub/new.py")).unwrap(), "n\n");
        assert!(!root.join("gone.py").exists());
        let diff = unified_diff(&applied).unwrap();
        assert!(diff.contains("-a\n+a2\n"));
        assert!(diff.contains("--- /dev/null\n+++ b/pkg/sub/new.py"));
        assert!(diff.contains("+++ /dev/null"));
        rollback(root, &applied).unwrap();
        assert_eq!(fsutil::tree_snapshot(root).unwrap(), before);
        assert!(!root.join("pkg").exists());
        assert_eq!(fs::read_dir(root).unwrap().count(), 2);
    }

    #[test]
    fn escape_is_rejected_untouched() {
        let dir = tempfile::tempdir().unwrap();
        let cs = ChangeSet { edits: vec![edit("../x", "evil")], deletions: vec![], commit_message: "m".into(), inverse: None };
        assert!(matches!(apply(dir.path(), &cs), Err(ApplyError::Invalid(ChangeSetError::Security(_)))));
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
        assert!(ChangeSet::new(vec![edit(".almas/x", "")], vec![], "m").is_err());
        assert!(ChangeSet::new(vec![edit(".git/config", "")], vec![], "m").is_err());
    }

    #[cfg(unix)]
    #[test]
    fn symlinked_dir_is_rejected() {
        let outside = tempfile::tempdir().unwrap();
        let dir = tempfile::tempdir().unwrap();
        std::os::unix::fs::symlink(outside.path(), dir.path().join("link")).unwrap();
        let cs = ChangeSet::new(vec![edit("link/x.py", "x")], vec![], "m").unwrap();
        assert!(matches!(apply(dir.path(), &cs), Err(ApplyError::Invalid(ChangeSetError::Security(_)))));
        assert_eq!(fs::read_dir(outside.path()).unwrap().count(), 0);
    }

    #[test]
    fn failure_midway_restores_everything() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        fs::write(root.join("a.py"), "old\n").unwrap();
        fs::write(root.join("blocker"), "file\n").unwrap();
        let before = fsutil::tree_snapshot(root).unwrap();
        // The second edit needs `blocker` to be a directory.
        let cs = ChangeSet::new(vec![edit("a.py", "new\n"), edit("fresh/x.py", "x\n"), edit("blocker/y.py", "y\n")], vec![], "m").unwrap();
        assert!(matches!(apply(root, &cs), Err(ApplyError::Io { .. })));
        assert_eq!(fsutil::tree_snapshot(root).unwrap(), before);
        assert!(!root.join("fresh").exists());
        let leftovers: Vec<_> = fs::read_dir(root).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(leftovers.len(), 2);
    }

    #[test]
    fn missing_deletion_fails_before_writing() {
        let dir = tempfile::tempdir().unwrap();
        let cs = ChangeSet::new(vec![edit("a.py", "x")], vec!["nope.py".into()], "m").unwrap();
        assert!(matches!(apply(dir.path(), &cs), Err(ApplyError::MissingDeletion(_))));
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
    }
}
