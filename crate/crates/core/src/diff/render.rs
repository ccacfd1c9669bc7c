use std::fmt::Write;

use super::{ChangeKind, CommitDiff, FileDiff, Hunk, NULL_PATH};

/// Renders a diff in git's unified format with `a/` and `b/` prefixes.
pub fn render_commit_diff(diff: &CommitDiff) -> String {
    diff.file_diffs.iter().map(render_file_diff).collect()
}

pub fn render_file_diff(file: &FileDiff) -> String {
    let mut out = String::new();
    let old_name = if file.old_path == NULL_PATH { &file.new_path } else { &file.old_path };
    let new_name = if file.new_path == NULL_PATH { &file.old_path } else { &file.new_path };
    let _ = writeln!(out, "diff --git {} {}", quote(&format!("a/{old_name}")), quote(&format!("b/{new_name}")));
    match file.kind {
        ChangeKind::Added => out.push_str("new file mode 100644\n"),
        ChangeKind::Deleted => out.push_str("deleted file mode 100644\n"),
        ChangeKind::Renamed => {
            let _ = writeln!(out, "rename from {}", quote(&file.old_path));
            let _ = writeln!(out, "rename to {}", quote(&file.new_path));
        }
        ChangeKind::Modified => {}
    }
    if !file.textual {
        if file.kind == ChangeKind::Modified {
            let _ = writeln!(
                out,
                "Binary files {} and {} differ",
                side_path(&file.old_path, "a/"),
                side_path(&file.new_path, "b/")
            );
        }
        return out;
    }
    let _ = writeln!(out, "--- {}", side_path(&file.old_path, "a/"));
    let _ = writeln!(out, "+++ {}", side_path(&file.new_path, "b/"));
    for hunk in &file.hunks {
        render_hunk(&mut out, hunk);
    }
    out
}

fn render_hunk(out: &mut String, hunk: &Hunk) {
    let _ = write!(out, "@@ -{},{} +{},{} @@", hunk.old_start, hunk.old_len, hunk.new_start, hunk.new_len);
    if !hunk.section.is_empty() {
        out.push(' ');
        out.push_str(&hunk.section);
    }
    out.push('\n');
    for line in &hunk.lines {
        out.push(line.tag.prefix());
        out.push_str(&line.text);
        out.push('\n');
        if line.no_newline {
            out.push_str("\\ No newline at end of file\n");
        }
    }
}

fn side_path(path: &str, prefix: &str) -> String {
    if path == NULL_PATH {
        NULL_PATH.to_string()
    } else {
        quote(&format!("{prefix}{path}"))
    }
}

fn quote(path: &str) -> String {
    if !path.contains(['"', '\\', '\n', '\t']) {
        return path.to_string();
    }
    let mut out = String::from("\"");
    for c in path.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            other => out.push(other),
        }
    }
    out.push('"');
    out
}
