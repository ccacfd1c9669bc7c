use std::sync::OnceLock;

use regex::Regex;

use super::{ChangeKind, CommitDiff, DiffError, DiffLine, FileDiff, Hunk, LineTag, NULL_PATH};

fn hunk_header_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^@@ -(\d+)(?:,(\d+))? \+(\d+)(?:,(\d+))? @@ ?(.*)$").unwrap())
}

struct PendingFile {
    old_path: String,
    new_path: String,
    kind: ChangeKind,
    hunks: Vec<Hunk>,
    binary: bool,
    saw_file_header: bool,
}

impl PendingFile {
    fn new(old_path: String, new_path: String) -> Self {
        Self {
            old_path,
            new_path,
            kind: ChangeKind::Modified,
            hunks: Vec::new(),
            binary: false,
            saw_file_header: false,
        }
    }

    fn finish(self) -> FileDiff {
        let textual = !self.binary && !self.hunks.is_empty();
        FileDiff { old_path: self.old_path, new_path: self.new_path, kind: self.kind, hunks: self.hunks, textual }
    }
}

/// Parses git-style or plain unified diff text.
///
/// Binary and hunk-less entries are kept with `textual = false`. Hunk
/// bodies must agree exactly with their header counts.
pub fn parse_unified_diff(text: &str) -> Result<CommitDiff, DiffError> {
    let mut lines: Vec<&str> = text.split('\n').collect();
    if lines.last() == Some(&"") {
        lines.pop();
    }

    let mut files = Vec::new();
    let mut current: Option<PendingFile> = None;
    let mut skipping_binary_patch = false;
    let mut i = 0;

    while i < lines.len() {
        let line = lines[i];
        let header = line.trim_end_matches('\r');

        if let Some(rest) = header.strip_prefix("diff --git ") {
            if let Some(done) = current.take() {
                files.push(done.finish());
            }
            let (old, new) = split_git_header_paths(rest);
            current = Some(PendingFile::new(old, new));
            skipping_binary_patch = false;
            i += 1;
            continue;
        }

        if skipping_binary_patch {
            i += 1;
            continue;
        }

        if header.starts_with("--- ") && lines.get(i + 1).is_some_and(|next| next.starts_with("+++ ")) {
            let starts_new = match &current {
                None => true,
                Some(f) => f.saw_file_header || !f.hunks.is_empty(),
            };
            if starts_new {
                if let Some(done) = current.take() {
                    files.push(done.finish());
                }
                current = Some(PendingFile::new(String::new(), String::new()));
            }
            let file = current.as_mut().expect("file started above");
            let old = header_path(&header[4..], "a/");
            let new = header_path(lines[i + 1].trim_end_matches('\r').get(4..).unwrap_or(""), "b/");
            if old == NULL_PATH {
                file.kind = ChangeKind::Added;
            } else if new == NULL_PATH {
                file.kind = ChangeKind::Deleted;
            }
            file.old_path = old;
            file.new_path = new;
            file.saw_file_header = true;
            i += 2;
            continue;
        }

        if header.starts_with("@@ ") {
            let Some(file) = current.as_mut() else {
                return Err(malformed(i, "hunk header before any file header"));
            };
            let (hunk, consumed) = parse_hunk(&lines, i)?;
            file.hunks.push(hunk);
            i += consumed;
            continue;
        }

        if let Some(file) = current.as_mut() {
            if apply_extended_header(file, header) {
                if header == "GIT binary patch" {
                    skipping_binary_patch = true;
                }
                i += 1;
                continue;
            }
            if header == "-- " {
                // Mail signature trailer from format-patch output.
                if let Some(done) = current.take() {
                    files.push(done.finish());
                }
                skipping_binary_patch = true;
                i += 1;
                continue;
            }
            if !file.hunks.is_empty() && matches!(line.chars().next(), Some('+' | '-' | ' ')) {
                return Err(malformed(i, "hunk body longer than its header declares"));
            }
        }
        i += 1;
    }

    if let Some(done) = current.take() {
        files.push(done.finish());
    }

    Ok(CommitDiff { commit_id: String::new(), file_diffs: files, context_lines: 0 })
}

fn malformed(index: usize, message: &str) -> DiffError {
    DiffError::MalformedDiff { line: index + 1, message: message.to_string() }
}

/// Returns the hunk starting at `start` and the number of lines consumed.
fn parse_hunk(lines: &[&str], start: usize) -> Result<(Hunk, usize), DiffError> {
    let header = lines[start].trim_end_matches('\r');
    let caps = hunk_header_re().captures(header).ok_or_else(|| malformed(start, "unparsable hunk header"))?;
    let num = |idx: usize| -> Result<u32, DiffError> {
        match caps.get(idx) {
            Some(m) => m.as_str().parse().map_err(|_| malformed(start, "hunk header number out of range")),
            None => Ok(1),
        }
    };
    let old_start = num(1)?;
    let old_len = num(2)?;
    let new_start = num(3)?;
    let new_len = num(4)?;
    let section = caps.get(5).map_or("", |m| m.as_str()).to_string();

    let mut old_left = old_len;
    let mut new_left = new_len;
    let mut body: Vec<DiffLine> = Vec::new();
    let mut j = start + 1;

    while old_left > 0 || new_left > 0 {
        let Some(&line) = lines.get(j) else {
            return Err(malformed(start, "truncated hunk: body ends before header counts are met"));
        };
        let (tag, text) = match line.chars().next() {
            Some(' ') => (LineTag::Context, &line[1..]),
            None => (LineTag::Context, ""),
            Some('+') => (LineTag::Added, &line[1..]),
            Some('-') => (LineTag::Removed, &line[1..]),
            Some('\\') => {
                if let Some(last) = body.last_mut() {
                    last.no_newline = true;
                }
                j += 1;
                continue;
            }
            Some(_) => {
                return Err(malformed(j, "hunk body shorter than its header declares"));
            }
        };
        match tag {
            LineTag::Context if old_left > 0 && new_left > 0 => {
                old_left -= 1;
                new_left -= 1;
            }
            LineTag::Added if new_left > 0 => new_left -= 1,
            LineTag::Removed if old_left > 0 => old_left -= 1,
            _ => return Err(malformed(j, "hunk line does not fit the header counts")),
        }
        body.push(DiffLine { tag, text: text.to_string(), no_newline: false });
        j += 1;
    }
    if lines.get(j).is_some_and(|l| l.starts_with('\\')) {
        if let Some(last) = body.last_mut() {
            last.no_newline = true;
        }
        j += 1;
    }

    Ok((Hunk { old_start, old_len, new_start, new_len, section, lines: body }, j - start))
}

fn apply_extended_header(file: &mut PendingFile, line: &str) -> bool {
    if line.starts_with("new file mode ") {
        file.kind = ChangeKind::Added;
        file.old_path = NULL_PATH.to_string();
    } else if line.starts_with("deleted file mode ") {
        file.kind = ChangeKind::Deleted;
        file.new_path = NULL_PATH.to_string();
    } else if let Some(p) = line.strip_prefix("rename from ") {
        file.kind = ChangeKind::Renamed;
        file.old_path = unquote(p);
    } else if let Some(p) = line.strip_prefix("rename to ") {
        file.kind = ChangeKind::Renamed;
        file.new_path = unquote(p);
    } else if let Some(p) = line.strip_prefix("copy to ") {
        file.kind = ChangeKind::Added;
        file.old_path = NULL_PATH.to_string();
        file.new_path = unquote(p);
    } else if line.starts_with("Binary files ") && line.ends_with(" differ") || line == "GIT binary patch" {
        file.binary = true;
    } else {
        return ["index ", "old mode ", "new mode ", "similarity index ", "dissimilarity index ", "copy from "]
            .iter()
            .any(|p| line.starts_with(p));
    }
    true
}

fn header_path(raw: &str, prefix: &str) -> String {
    let raw = if raw.starts_with('"') { raw } else { raw.split('\t').next().unwrap_or(raw) };
    let path = unquote(raw.trim_end());
    if path == NULL_PATH {
        return path;
    }
    path.strip_prefix(prefix).map(str::to_string).unwrap_or(path)
}

fn split_git_header_paths(rest: &str) -> (String, String) {
    if rest.starts_with('"') {
        if let Some(end) = closing_quote(rest) {
            let old = unquote(&rest[..=end]);
            let new = unquote(rest[end + 1..].trim_start());
            return (strip(&old, "a/"), strip(&new, "b/"));
        }
    }
    // Unrenamed paths are identical on both sides, so try the midpoint first.
    if rest.len() % 2 == 1 {
        let mid = rest.len() / 2;
        if rest.is_char_boundary(mid) && rest.as_bytes()[mid] == b' ' {
            let (left, right) = (&rest[..mid], &rest[mid + 1..]);
            if let (Some(l), Some(r)) = (left.strip_prefix("a/"), right.strip_prefix("b/")) {
                if l == r {
                    return (l.to_string(), r.to_string());
                }
            }
        }
    }
    match rest.find(" b/") {
        Some(pos) => (strip(&rest[..pos], "a/"), rest[pos + 3..].to_string()),
        None => {
            let mut parts = rest.splitn(2, ' ');
            let old = parts.next().unwrap_or("").to_string();
            let new = parts.next().unwrap_or("").to_string();
            (old, new)
        }
    }
}

fn strip(path: &str, prefix: &str) -> String {
    path.strip_prefix(prefix).unwrap_or(path).to_string()
}

fn closing_quote(s: &str) -> Option<usize> {
    let bytes = s.as_bytes();
    let mut i = 1;
    while i < bytes.len() {
        match bytes[i] {
            b'\\' => i += 2,
            b'"' => return Some(i),
            _ => i += 1,
        }
    }
    None
}

/// Undoes git's C-style path quoting; unquoted input is returned as-is.
fn unquote(s: &str) -> String {
    let Some(inner) = s.strip_prefix('"').and_then(|r| r.strip_suffix('"')) else {
        return s.to_string();
    };
    let mut out: Vec<u8> = Vec::with_capacity(inner.len());
    let bytes = inner.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] != b'\\' || i + 1 == bytes.len() {
            out.push(bytes[i]);
            i += 1;
            continue;
        }
        let c = bytes[i + 1];
        match c {
            b'n' => out.push(b'\n'),
            b't' => out.push(b'\t'),
            b'"' => out.push(b'"'),
            b'\\' => out.push(b'\\'),
            b'0'..=b'7' if i + 4 <= bytes.len() => {
                let oct = std::str::from_utf8(&bytes[i + 1..i + 4]).unwrap_or("0");
                out.push(u8::from_str_radix(oct, 8).unwrap_or(b'?'));
                i += 4;
                continue;
            }
            other => out.push(other),
        }
        i += 2;
    }
    String::from_utf8_lossy(&out).into_owned()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_input_has_no_files() {
        let diff = parse_unified_diff("").unwrap();
        assert!(diff.file_diffs.is_empty());
    }

    #[test]
    fn minimal_hunk_counts() {
        let text = "\
--- a/f.txt
+++ b/f.txt
@@ -1,2 +1,3 @@
 one
 two
+three
";
        let diff = parse_unified_diff(text).unwrap();
        assert_eq!(diff.file_diffs.len(), 1);
        let file = &diff.file_diffs[0];
        assert_eq!(file.old_path, "f.txt");
        assert_eq!(file.kind, ChangeKind::Modified);
        let h = &file.hunks[0];
        assert_eq!((h.old_start, h.old_len, h.new_start, h.new_len), (1, 2, 1, 3));
        assert!(h.is_consistent());
    }

    #[test]
    fn binary_entry_is_flagged_not_dropped() {
        let text = "\
diff --git a/x.png b/x.png
index 1111111..2222222 100644
Binary files a/x.png and b/x.png differ
";
        let diff = parse_unified_diff(text).unwrap();
        assert_eq!(diff.file_diffs.len(), 1);
        let f = &diff.file_diffs[0];
        assert!(!f.textual);
        assert!(f.hunks.is_empty());
        assert_eq!(f.new_path, "x.png");
    }

    #[test]
    fn added_and_deleted_use_null_sentinel() {
        let text = "\
diff --git a/n.txt b/n.txt
new file mode 100644
index 0000000..3b18e51
--- /dev/null
+++ b/n.txt
@@ -0,0 +1 @@
+hello
diff --git a/gone.txt b/gone.txt
deleted file mode 100644
index 3b18e51..0000000
--- a/gone.txt
+++ /dev/null
@@ -1 +0,0 @@
-bye
";
        let diff = parse_unified_diff(text).unwrap();
        let added = &diff.file_diffs[0];
        assert_eq!(added.kind, ChangeKind::Added);
        assert_eq!(added.old_path, NULL_PATH);
        assert_eq!(added.hunks[0].new_len, 1);
        let deleted = &diff.file_diffs[1];
        assert_eq!(deleted.kind, ChangeKind::Deleted);
        assert_eq!(deleted.new_path, NULL_PATH);
        assert_eq!(deleted.path(), "gone.txt");
    }

    #[test]
    fn rename_only_is_non_textual() {
        let text = "\
diff --git a/old name.txt b/new name.txt
similarity index 100%
rename from old name.txt
rename to new name.txt
";
        let diff = parse_unified_diff(text).unwrap();
        let f = &diff.file_diffs[0];
        assert_eq!(f.kind, ChangeKind::Renamed);
        assert_eq!(f.old_path, "old name.txt");
        assert_eq!(f.new_path, "new name.txt");
        assert!(!f.textual);
    }

    #[test]
    fn truncated_hunk_reports_header_line() {
        let text = "--- a/f\n+++ b/f\n@@ -1,3 +1,3 @@\n a\n b\n";
        let err = parse_unified_diff(text).unwrap_err();
        assert_eq!(
            err,
            DiffError::MalformedDiff {
                line: 3,
                message: "truncated hunk: body ends before header counts are met".into()
            }
        );
    }

    #[test]
    fn overlong_hunk_is_rejected() {
        let text = "--- a/f\n+++ b/f\n@@ -1,1 +1,1 @@\n a\n+b\n";
        let err = parse_unified_diff(text).unwrap_err();
        assert!(matches!(err, DiffError::MalformedDiff { line: 5, .. }), "{err:?}");
    }

    #[test]
    fn missing_newline_marker_attaches_to_line() {
        let text =
            "--- a/f\n+++ b/f\n@@ -1 +1 @@\n-a\n\\ No newline at end of file\n+b\n\\ No newline at end of file\n";
        let diff = parse_unified_diff(text).unwrap();
        let lines = &diff.file_diffs[0].hunks[0].lines;
        assert_eq!(lines.len(), 2);
        assert!(lines.iter().all(|l| l.no_newline));
    }

    #[test]
    fn quoted_paths_are_unescaped() {
        let text = "diff --git \"a/caf\\303\\251.txt\" \"b/caf\\303\\251.txt\"\n--- \"a/caf\\303\\251.txt\"\n+++ \"b/caf\\303\\251.txt\"\n@@ -1 +1 @@\n-a\n+b\n";
        let diff = parse_unified_diff(text).unwrap();
        assert_eq!(diff.file_diffs[0].new_path, "café.txt");
    }
}
