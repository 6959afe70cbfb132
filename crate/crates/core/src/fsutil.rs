//! Repository walking, ignore rules, tree hashing and path hygiene.

use std::collections::BTreeMap;
use std::io;
use std::path::{Component, Path, PathBuf};

use sha2::{Digest, Sha256};
use walkdir::{DirEntry, WalkDir};

/// Directory holding pipeline state inside a workspace; never indexed,
/// never committed.
pub const STATE_DIR_NAME: &str = ".almas";

const VENDOR_DIRS: &[&str] = &[
    "node_modules",
    "vendor",
    "third_party",
    "site-packages",
    "venv",
    "__pycache__",
    "target",
];

fn is_hidden(entry: &DirEntry) -> bool {
    entry.depth() > 0 && entry.file_name().to_str().is_some_and(|n| n.starts_with('.'))
}

fn is_vendor(entry: &DirEntry) -> bool {
    entry.file_type().is_dir() && entry.file_name().to_str().is_some_and(|n| VENDOR_DIRS.contains(&n))
}

/// Null-byte sniff over the first 8000 bytes.
pub fn is_binary(bytes: &[u8]) -> bool {
    bytes.iter().take(8000).any(|&b| b == 0)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Repo-relative path with `/` separators.
pub fn rel_path(root: &Path, path: &Path) -> Option<String> {
    let rel = path.strip_prefix(root).ok()?;
    let parts: Vec<_> = rel.components().map(|c| c.as_os_str().to_str()).collect::<Option<_>>()?;
    Some(parts.join("/"))
}

/// Files eligible for indexing: not hidden, not under vendor/dependency
/// directories, not binary. Sorted by relative path.
pub fn scan_files(root: &Path) -> io::Result<Vec<(String, Vec<u8>)>> {
    let mut out = Vec::new();
    let walker = WalkDir::new(root).follow_links(false).into_iter().filter_entry(|e| !is_hidden(e) && !is_vendor(e));
    for entry in walker {
        let entry = entry.map_err(io::Error::other)?;
        if !entry.file_type().is_file() {
            continue;
        }
        let Some(rel) = rel_path(root, entry.path()) else { continue };
        let bytes = std::fs::read(entry.path())?;
        if is_binary(&bytes) {
            continue;
        }
        out.push((rel, bytes));
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(out)
}

/// Every regular file in the working tree except VCS and pipeline state.
pub fn tree_snapshot(root: &Path) -> io::Result<BTreeMap<String, Vec<u8>>> {
    let mut out = BTreeMap::new();
    let walker = WalkDir::new(root).follow_links(false).into_iter().filter_entry(|e| {
        !(e.depth() > 0 && e.file_type().is_dir() && matches!(e.file_name().to_str(), Some(".git") | Some(STATE_DIR_NAME)))
    });
    for entry in walker {
        let entry = entry.map_err(io::Error::other)?;
        if entry.file_type().is_file() {
            if let Some(rel) = rel_path(root, entry.path()) {
                out.insert(rel, std::fs::read(entry.path())?);
            }
        }
    }
    Ok(out)
}

/// Content hash of the working tree (paths and bytes), excluding `.git`
/// and the pipeline state directory.
pub fn tree_hash(root: &Path) -> io::Result<String> {
    let mut hasher = Sha256::new();
    for (path, bytes) in tree_snapshot(root)? {
        hasher.update(path.as_bytes());
        hasher.update([0]);
        hasher.update(sha256_hex(&bytes).as_bytes());
        hasher.update([0]);
    }
    Ok(hex::encode(hasher.finalize()))
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("path {0:?} escapes the repository root")]
pub struct PathEscape(pub String);

/// Normalizes a repo-relative path, rejecting absolute paths, `..`
/// components and anything inside `.git`.
pub fn normalize_rel(path: &str) -> Result<String, PathEscape> {
    let err = || PathEscape(path.to_string());
    if path.is_empty() {
        return Err(err());
    }
    let mut parts = Vec::new();
    for comp in Path::new(path).components() {
        match comp {
            Component::Normal(s) => parts.push(s.to_str().ok_or_else(err)?.to_string()),
            Component::CurDir => {}
            Component::ParentDir | Component::RootDir | Component::Prefix(_) => return Err(err()),
        }
    }
    if parts.is_empty() || parts[0] == ".git" {
        return Err(err());
    }
    Ok(parts.join("/"))
}

/// Resolves a user-supplied path (absolute or relative to `root`) to a
/// repo-relative one.
pub fn resolve_in_repo(root: &Path, path: &str) -> Result<String, PathEscape> {
    let p = Path::new(path);
    if p.is_absolute() {
        let canon_root = root.canonicalize().unwrap_or_else(|_| root.to_path_buf());
        let rel = p
            .strip_prefix(&canon_root)
            .or_else(|_| p.strip_prefix(root))
            .map_err(|_| PathEscape(path.to_string()))?;
        normalize_rel(&rel.to_string_lossy())
    } else {
        normalize_rel(path)
    }
}

pub fn join_rel(root: &Path, rel: &str) -> PathBuf {
    rel.split('/').fold(root.to_path_buf(), |p, seg| p.join(seg))
}
