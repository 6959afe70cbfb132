use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde::{Deserialize, Serialize};

use super::IntegrationError;
use crate::developer::ChangeSet;
use crate::fsutil::STATE_DIR_NAME;

const AUTHOR_NAME: &str = "ALMAS";
const AUTHOR_EMAIL: &str = "almas@localhost";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VcsRef {
    pub branch: String,
    pub commit_id: String,
}

/// Shells out to the `git` binary on the host.
#[derive(Debug, Clone)]
pub struct GitClient {
    root: PathBuf,
}

impl GitClient {
    pub fn open(root: &Path) -> Result<Self, IntegrationError> {
        let client = GitClient { root: root.to_path_buf() };
        client.run(&["rev-parse", "--is-inside-work-tree"])?;
        Ok(client)
    }

    /// Initializes a repository on `main` with an empty root commit.
    pub fn init(root: &Path) -> Result<Self, IntegrationError> {
        std::fs::create_dir_all(root)?;
        let client = GitClient { root: root.to_path_buf() };
        client.run(&["init", "-q", "-b", "main"])?;
        client.run(&["commit", "-q", "--allow-empty", "-m", "Initial commit"])?;
        Ok(client)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn command(&self, args: &[&str]) -> Command {
        let mut cmd = Command::new("git");
        cmd.current_dir(&self.root)
            .args(["-c", "commit.gpgsign=false", "-c", "core.hooksPath=/dev/null"])
            .args(args)
            .env("GIT_AUTHOR_NAME", AUTHOR_NAME)
            .env("GIT_AUTHOR_EMAIL", AUTHOR_EMAIL)
            .env("GIT_COMMITTER_NAME", AUTHOR_NAME)
            .env("GIT_COMMITTER_EMAIL", AUTHOR_EMAIL)
            .env("GIT_TERMINAL_PROMPT", "0");
        cmd
    }

    fn output(&self, args: &[&str]) -> Result<Output, IntegrationError> {
        Ok(self.command(args).output()?)
    }

    fn run(&self, args: &[&str]) -> Result<String, IntegrationError> {
        let out = self.output(args)?;
        if !out.status.success() {
            return Err(IntegrationError::Git { command: args.join(" "), stderr: String::from_utf8_lossy(&out.stderr).trim().to_string() });
        }
        Ok(String::from_utf8_lossy(&out.stdout).trim_end().to_string())
    }

    /// Keeps the run's metadata directory out of commits.
    pub fn exclude_state_dir(&self) -> Result<(), IntegrationError> {
        let rel = self.run(&["rev-parse", "--git-path", "info/exclude"])?;
        let path = self.root.join(rel);
        let line = format!("/{STATE_DIR_NAME}/");
        let existing = std::fs::read_to_string(&path).unwrap_or_default();
        if existing.lines().any(|l| l.trim() == line) {
            return Ok(());
        }
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let mut f = std::fs::OpenOptions::new().create(true).append(true).open(&path)?;
        if !existing.is_empty() && !existing.ends_with('\n') {
            writeln!(f)?;
        }
        writeln!(f, "{line}")?;
        Ok(())
    }

    pub fn current_branch(&self) -> Result<String, IntegrationError> {
        self.run(&["symbolic-ref", "--short", "HEAD"])
    }

    pub fn branch_exists(&self, branch: &str) -> Result<bool, IntegrationError> {
        Ok(self.output(&["rev-parse", "--verify", "--quiet", &format!("refs/heads/{branch}")])?.status.success())
    }

    /// Checks out `branch`, creating it from the current HEAD when missing.
    pub fn checkout(&self, branch: &str) -> Result<(), IntegrationError> {
        if self.current_branch().ok().as_deref() == Some(branch) {
            return Ok(());
        }
        let args: &[&str] = if self.branch_exists(branch)? { &["checkout", "-q", branch] } else { &["checkout", "-q", "-b", branch] };
        self.run(args).map(drop).map_err(|e| match e {
            IntegrationError::Git { stderr, .. } => IntegrationError::BranchCheckout { branch: branch.to_string(), stderr },
            other => other,
        })
    }

    pub fn is_clean(&self) -> Result<bool, IntegrationError> {
        Ok(self.run(&["status", "--porcelain"])?.is_empty())
    }

    pub fn head(&self) -> Result<String, IntegrationError> {
        self.run(&["rev-parse", "HEAD"])
    }

    /// Commits exactly the changeset's paths on `branch`.
    pub fn commit(&self, changeset: &ChangeSet, branch: &str) -> Result<VcsRef, IntegrationError> {
        self.checkout(branch)?;
        let paths = changeset.paths();
        let mut args = vec!["add", "-A", "--"];
        args.extend(paths.iter().map(String::as_str));
        self.run(&args)?;
        let mut check = vec!["diff", "--cached", "--quiet", "--"];
        check.extend(paths.iter().map(String::as_str));
        if self.output(&check)?.status.success() {
            return Err(IntegrationError::NothingToCommit);
        }
        let mut commit = vec!["commit", "-q", "-m", changeset.commit_message.as_str(), "--"];
        commit.extend(paths.iter().map(String::as_str));
        self.run(&commit)?;
        Ok(VcsRef { branch: branch.to_string(), commit_id: self.head()? })
    }

    /// Paths changed by a commit, as git itself reports them.
    pub fn changed_paths(&self, commit: &str) -> Result<Vec<String>, IntegrationError> {
        let out = self.run(&["diff-tree", "--root", "--no-commit-id", "--name-only", "-r", commit])?;
        Ok(out.lines().map(str::to_string).collect())
    }

    /// Paths that differ between two revisions.
    pub fn diff_names(&self, from: &str, to: &str) -> Result<Vec<String>, IntegrationError> {
        let out = self.run(&["diff", "--name-only", from, to])?;
        Ok(out.lines().map(str::to_string).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::developer::{apply, FileEdit};

    fn cs(files: &[(&str, &str)]) -> ChangeSet {
        ChangeSet::new(files.iter().map(|(p, c)| FileEdit { path: p.to_string(), content: c.to_string() }).collect(), vec![], "ST-1: add files").unwrap()
    }

    #[test]
    fn commit_lists_changed_paths() {
        let dir = tempfile::tempdir().unwrap();
        let git = GitClient::init(dir.path()).unwrap();
        git.exclude_state_dir().unwrap();
        git.exclude_state_dir().unwrap();
        std::fs::create_dir(dir.path().join(STATE_DIR_NAME)).unwrap();
        std::fs::write(dir.path().join(STATE_DIR_NAME).join("x.json"), "{}").unwrap();
        let change = cs(&[("app.py", "x = 1\n"), ("test_app.py", "import app\n")]);
        apply(dir.path(), &change).unwrap();
        let r = git.commit(&change, "almas/demo").unwrap();
        assert_eq!(r.branch, "almas/demo");
        assert_eq!(git.changed_paths(&r.commit_id).unwrap(), ["app.py", "test_app.py"]);
        assert!(git.is_clean().unwrap());
        assert!(matches!(git.commit(&change, "almas/demo"), Err(IntegrationError::NothingToCommit)));
        assert_eq!(git.diff_names("main", "almas/demo").unwrap().len(), 2);
    }

    #[test]
    fn commits_only_changeset_paths() {
        let dir = tempfile::tempdir().unwrap();
        let git = GitClient::init(dir.path()).unwrap();
        std::fs::write(dir.path().join("stray.txt"), "unrelated").unwrap();
        let change = cs(&[("a.py", "a\n")]);
        apply(dir.path(), &change).unwrap();
        let r = git.commit(&change, "main").unwrap();
        assert_eq!(git.changed_paths(&r.commit_id).unwrap(), ["a.py"]);
        assert!(!git.is_clean().unwrap());
    }

    #[test]
    fn not_a_repo() {
        let dir = tempfile::tempdir().unwrap();
        assert!(GitClient::open(dir.path()).is_err());
    }
}
