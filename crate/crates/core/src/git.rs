//! Read-only access to a git repository through the `git` executable.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

#[derive(Debug, thiserror::Error)]
pub enum GitError {
    #[error("cannot access repository {path}: {message}")]
    RepoAccess { path: String, message: String },
    #[error("git {args} failed (exit status {status:?}): {stderr}")]
    VcsInvocation { args: String, status: Option<i32>, stderr: String },
}

/// Handle to a repository on disk. All operations are read-only, so one
/// handle can serve concurrent callers.
#[derive(Debug, Clone)]
pub struct Repo {
    root: PathBuf,
}

impl Repo {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, GitError> {
        let path = path.as_ref();
        let access = |message: String| GitError::RepoAccess { path: path.display().to_string(), message };
        if !path.is_dir() {
            return Err(access("no such directory".into()));
        }
        let root = std::fs::canonicalize(path).map_err(|e| access(e.to_string()))?;
        let repo = Self { root };
        repo.run(&["rev-parse", "--git-dir"]).map_err(|_| access("not a git repository".into()))?;
        Ok(repo)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Resolves any revision expression to a full commit hash.
    pub fn resolve_commit(&self, rev: &str) -> Result<String, GitError> {
        let spec = format!("{rev}^{{commit}}");
        self.run(&["rev-parse", "--verify", "--quiet", &spec]).map(|out| out.trim().to_string()).map_err(|_| {
            GitError::RepoAccess { path: self.root.display().to_string(), message: format!("unknown commit {rev:?}") }
        })
    }

    pub fn first_parent(&self, commit: &str) -> Result<Option<String>, GitError> {
        let out = self.run(&["rev-list", "--parents", "-n", "1", commit])?;
        Ok(out.split_whitespace().nth(1).map(str::to_string))
    }

    /// Hash of the empty tree in this repository's object format.
    pub fn empty_tree(&self) -> Result<String, GitError> {
        self.run_with_input(&["hash-object", "-t", "tree", "--stdin"], b"")
            .map(|out| String::from_utf8_lossy(&out).trim().to_string())
    }

    pub fn diff(&self, base: &str, commit: &str, context_lines: u32) -> Result<String, GitError> {
        let unified = format!("-U{context_lines}");
        self.run(&[
            "-c",
            "core.quotepath=false",
            "diff",
            "--no-color",
            "--no-ext-diff",
            "--no-textconv",
            "--src-prefix=a/",
            "--dst-prefix=b/",
            &unified,
            base,
            commit,
            "--",
        ])
    }

    /// Commits reachable from `to` but not from `from`, oldest first.
    pub fn rev_list(&self, from: Option<&str>, to: &str) -> Result<Vec<String>, GitError> {
        let to = self.resolve_commit(to)?;
        let mut args = vec!["rev-list".to_string(), "--reverse".into(), "--topo-order".into(), to];
        if let Some(from) = from {
            args.push(format!("^{}", self.resolve_commit(from)?));
        }
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let out = self.run(&args)?;
        Ok(out.lines().map(str::to_string).collect())
    }

    /// All file paths in the commit's tree.
    pub fn list_files(&self, commit: &str) -> Result<Vec<String>, GitError> {
        let out = self.run(&["-c", "core.quotepath=false", "ls-tree", "-r", "-z", "--name-only", commit])?;
        Ok(out.split('\0').filter(|p| !p.is_empty()).map(str::to_string).collect())
    }

    /// Reads file contents at `commit`; missing paths yield `None`.
    pub fn read_files(&self, commit: &str, paths: &[String]) -> Result<Vec<Option<String>>, GitError> {
        if paths.is_empty() {
            return Ok(Vec::new());
        }
        let mut input = Vec::new();
        for path in paths {
            input.extend_from_slice(format!("{commit}:{path}\n").as_bytes());
        }
        let out = self.run_with_input(&["cat-file", "--batch"], &input)?;
        parse_batch_output(&out, paths.len()).ok_or_else(|| GitError::VcsInvocation {
            args: "cat-file --batch".into(),
            status: Some(0),
            stderr: "unexpected batch output".into(),
        })
    }

    fn command(&self) -> Command {
        let mut cmd = Command::new("git");
        cmd.arg("-C").arg(&self.root).env("LC_ALL", "C");
        cmd
    }

    fn run(&self, args: &[&str]) -> Result<String, GitError> {
        let output = self
            .command()
            .args(args)
            .stdin(Stdio::null())
            .output()
            .map_err(|e| invocation_error(args, None, e.to_string()))?;
        if !output.status.success() {
            return Err(invocation_error(
                args,
                output.status.code(),
                String::from_utf8_lossy(&output.stderr).trim().to_string(),
            ));
        }
        Ok(String::from_utf8_lossy(&output.stdout).into_owned())
    }

    fn run_with_input(&self, args: &[&str], input: &[u8]) -> Result<Vec<u8>, GitError> {
        let mut child = self
            .command()
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| invocation_error(args, None, e.to_string()))?;
        let mut stdin = child.stdin.take().expect("stdin piped");
        let input = input.to_vec();
        let writer = std::thread::spawn(move || stdin.write_all(&input));
        let output = child.wait_with_output().map_err(|e| invocation_error(args, None, e.to_string()))?;
        let _ = writer.join();
        if !output.status.success() {
            return Err(invocation_error(
                args,
                output.status.code(),
                String::from_utf8_lossy(&output.stderr).trim().to_string(),
            ));
        }
        Ok(output.stdout)
    }
}

fn invocation_error(args: &[&str], status: Option<i32>, stderr: String) -> GitError {
    GitError::VcsInvocation { args: args.join(" "), status, stderr }
}

fn parse_batch_output(out: &[u8], expected: usize) -> Option<Vec<Option<String>>> {
    let mut results = Vec::with_capacity(expected);
    let mut pos = 0;
    while results.len() < expected {
        let nl = pos + out[pos..].iter().position(|&b| b == b'\n')?;
        let header = std::str::from_utf8(&out[pos..nl]).ok()?;
        pos = nl + 1;
        if header.ends_with(" missing") || header.ends_with(" ambiguous") {
            results.push(None);
            continue;
        }
        let mut parts = header.rsplitn(3, ' ');
        let size: usize = parts.next()?.parse().ok()?;
        let kind = parts.next()?;
        let body = out.get(pos..pos + size)?;
        pos += size + 1;
        results.push((kind == "blob").then(|| String::from_utf8_lossy(body).into_owned()));
    }
    Some(results)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batch_output_parsing() {
        let out = b"abc blob 5\nhello\nHEAD:nope missing\ndef blob 0\n\n";
        let parsed = parse_batch_output(out, 3).unwrap();
        assert_eq!(parsed, vec![Some("hello".into()), None, Some(String::new())]);
    }

    #[test]
    fn open_missing_path_names_it() {
        let err = Repo::open("/definitely/not/here").unwrap_err();
        assert!(err.to_string().contains("/definitely/not/here"));
    }
}
