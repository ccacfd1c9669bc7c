//! Heuristic test-method extraction.
//!
//! Brace-delimited languages (Java, Kotlin, C#) are scanned on a copy of the
//! text where comments and literals are blanked out, so braces inside
//! strings never affect nesting. Indentation-delimited files (Python) use
//! `def` blocks.

use serde::{Deserialize, Serialize};

use super::{LineSpan, TestCase, TestId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SpanStyle {
    #[default]
    Braces,
    Indent,
}

/// How test methods are recognised in test files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TestConventions {
    /// Annotation/decorator tokens such as `@Test`. Matched against the full
    /// or last dotted segment of each annotation on the method.
    pub annotations: Vec<String>,
    /// Method-name prefixes that mark a test without an annotation.
    pub name_prefixes: Vec<String>,
    pub style: SpanStyle,
}

impl Default for TestConventions {
    fn default() -> Self {
        Self { annotations: vec!["@Test".into()], name_prefixes: vec!["test".into()], style: SpanStyle::Braces }
    }
}

impl TestConventions {
    pub fn python() -> Self {
        Self { annotations: Vec::new(), name_prefixes: vec!["test".into()], style: SpanStyle::Indent }
    }

    fn annotation_matches(&self, annotation: &str) -> bool {
        let last = annotation.rsplit('.').next().unwrap_or(annotation);
        self.annotations.iter().any(|marker| {
            let marker = marker.trim_start_matches('@');
            marker == annotation || marker == last
        })
    }

    fn name_matches(&self, name: &str) -> bool {
        self.name_prefixes.iter().any(|p| name.starts_with(p.as_str()))
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ExtractError {
    #[error("unparsable test file {path}: {reason}")]
    UnparsableFile { path: String, reason: String },
}

/// Extracts every test method of one file.
pub fn extract_test_cases(
    path: &str,
    file_text: &str,
    commit_id: &str,
    conventions: &TestConventions,
) -> Result<Vec<TestCase>, ExtractError> {
    let found = match conventions.style {
        SpanStyle::Braces => scan_braces(file_text, conventions)
            .map_err(|reason| ExtractError::UnparsableFile { path: path.to_string(), reason })?,
        SpanStyle::Indent => scan_indent(file_text, conventions),
    };

    let lines: Vec<&str> = file_text.lines().collect();
    let mut seen = std::collections::BTreeSet::new();
    let mut tests = Vec::new();
    for m in found {
        let id = TestId { file_path: path.to_string(), container: m.container, method: m.name };
        if !seen.insert(id.clone()) {
            log::warn!("duplicate test id {id} (overload?); keeping the first");
            continue;
        }
        let body = lines[(m.span.start - 1) as usize..(m.span.end as usize).min(lines.len())].join("\n");
        tests.push(TestCase { id, body, span: m.span, commit_id: commit_id.to_string() });
    }
    Ok(tests)
}

struct FoundMethod {
    container: String,
    name: String,
    span: LineSpan,
}

/// Replaces comments and string/char literals with spaces, keeping newlines
/// so byte offsets and line numbers are unchanged.
fn mask_literals(text: &str) -> Vec<u8> {
    let src = text.as_bytes();
    let mut out = src.to_vec();
    let blank = |out: &mut [u8], from: usize, to: usize| {
        for b in &mut out[from..to] {
            if *b != b'\n' {
                *b = b' ';
            }
        }
    };
    let mut i = 0;
    while i < src.len() {
        match src[i] {
            b'/' if src.get(i + 1) == Some(&b'/') => {
                let end = src[i..].iter().position(|&b| b == b'\n').map_or(src.len(), |p| i + p);
                blank(&mut out, i, end);
                i = end;
            }
            b'/' if src.get(i + 1) == Some(&b'*') => {
                let end = find(src, i + 2, b"*/").map_or(src.len(), |p| p + 2);
                blank(&mut out, i, end);
                i = end;
            }
            b'"' if src[i..].starts_with(b"\"\"\"") => {
                let end = find(src, i + 3, b"\"\"\"").map_or(src.len(), |p| p + 3);
                blank(&mut out, i, end);
                i = end;
            }
            quote @ (b'"' | b'\'') => {
                let mut j = i + 1;
                while j < src.len() && src[j] != quote && src[j] != b'\n' {
                    j += if src[j] == b'\\' { 2 } else { 1 };
                }
                let end = (j + 1).min(src.len());
                blank(&mut out, i, end);
                i = end;
            }
            _ => i += 1,
        }
    }
    out
}

fn find(hay: &[u8], from: usize, needle: &[u8]) -> Option<usize> {
    hay.get(from..)?.windows(needle.len()).position(|w| w == needle).map(|p| p + from)
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Punct(u8),
}

fn tokenize(masked: &[u8]) -> Vec<(Tok, usize)> {
    let mut toks = Vec::new();
    let mut i = 0;
    while i < masked.len() {
        let b = masked[i];
        if b.is_ascii_whitespace() {
            i += 1;
        } else if b.is_ascii_alphanumeric() || b == b'_' || b == b'$' || b >= 0x80 {
            let start = i;
            while i < masked.len()
                && (masked[i].is_ascii_alphanumeric() || masked[i] == b'_' || masked[i] == b'$' || masked[i] >= 0x80)
            {
                i += 1;
            }
            let word = String::from_utf8_lossy(&masked[start..i]).into_owned();
            toks.push((Tok::Ident(word), start));
        } else {
            toks.push((Tok::Punct(b), i));
            i += 1;
        }
    }
    toks
}

const NOT_METHOD_NAMES: &[&str] = &[
    "if",
    "for",
    "while",
    "switch",
    "catch",
    "synchronized",
    "return",
    "new",
    "throw",
    "else",
    "do",
    "try",
    "super",
    "this",
    "when",
    "foreach",
    "using",
    "lock",
    "fixed",
];

const TYPE_KEYWORDS: &[&str] = &["class", "interface", "enum", "record", "object"];

struct OpenClass {
    name: String,
    body_depth: usize,
}

fn scan_braces(text: &str, conventions: &TestConventions) -> Result<Vec<FoundMethod>, String> {
    let masked = mask_literals(text);
    let line_starts: Vec<usize> =
        std::iter::once(0).chain(masked.iter().enumerate().filter(|(_, &b)| b == b'\n').map(|(i, _)| i + 1)).collect();
    let line_of = |offset: usize| -> u32 { line_starts.partition_point(|&s| s <= offset) as u32 };

    let toks = tokenize(&masked);
    let mut found = Vec::new();
    let mut classes: Vec<OpenClass> = Vec::new();
    let mut pending_class: Option<String> = None;
    let mut depth: usize = 0;
    // First token of the current class member.
    let mut member_start = 0usize;

    let mut k = 0;
    while k < toks.len() {
        let in_class_body = classes.last().is_some_and(|c| c.body_depth == depth);
        match &toks[k].0 {
            Tok::Punct(b'{') => {
                depth += 1;
                if let Some(name) = pending_class.take() {
                    classes.push(OpenClass { name, body_depth: depth });
                    member_start = k + 1;
                }
            }
            Tok::Punct(b'}') => {
                if depth == 0 {
                    return Err(format!("unbalanced '}}' on line {}", line_of(toks[k].1)));
                }
                depth -= 1;
                while classes.last().is_some_and(|c| c.body_depth > depth) {
                    classes.pop();
                }
                if classes.last().is_some_and(|c| c.body_depth == depth) {
                    member_start = k + 1;
                }
            }
            Tok::Punct(b';') if in_class_body => member_start = k + 1,
            Tok::Ident(word) if TYPE_KEYWORDS.contains(&word.as_str()) && pending_class.is_none() => {
                let after_dot = k > 0 && toks[k - 1].0 == Tok::Punct(b'.');
                if let (false, Some((Tok::Ident(name), _))) = (after_dot, toks.get(k + 1)) {
                    pending_class = Some(name.clone());
                    k += 2;
                    continue;
                }
            }
            Tok::Ident(name)
                if in_class_body
                    && pending_class.is_none()
                    && toks.get(k + 1).is_some_and(|t| t.0 == Tok::Punct(b'('))
                    && !NOT_METHOD_NAMES.contains(&name.as_str())
                    && !(k > 0 && toks[k - 1].0 == Tok::Ident("new".into())) =>
            {
                if let Some(open_brace) = method_body_start(&toks, k + 1) {
                    let close = matching_brace(&toks, open_brace).ok_or_else(|| {
                        format!("method {name} opened on line {} is never closed", line_of(toks[open_brace].1))
                    })?;
                    let region = &toks[member_start..k];
                    if is_marked(region, name, conventions) {
                        let first = region.first().map_or(toks[k].1, |t| t.1);
                        found.push(FoundMethod {
                            container: classes.iter().map(|c| c.name.as_str()).collect::<Vec<_>>().join("."),
                            name: name.clone(),
                            span: LineSpan { start: line_of(first), end: line_of(toks[close].1) },
                        });
                    }
                    k = close + 1;
                    member_start = k;
                    continue;
                }
            }
            _ => {}
        }
        k += 1;
    }
    if depth != 0 {
        return Err(format!("{depth} unclosed '{{' at end of file"));
    }
    Ok(found)
}

/// From the `(` after a method name, finds the `{` opening its body, if
/// the declaration has one.
fn method_body_start(toks: &[(Tok, usize)], open_paren: usize) -> Option<usize> {
    let mut parens = 0i32;
    let mut k = open_paren;
    loop {
        match toks.get(k)?.0 {
            Tok::Punct(b'(') => parens += 1,
            Tok::Punct(b')') => {
                parens -= 1;
                if parens == 0 {
                    break;
                }
            }
            Tok::Punct(b'{' | b'}' | b';') => return None,
            _ => {}
        }
        k += 1;
    }
    k += 1;
    while let Some((tok, _)) = toks.get(k) {
        match tok {
            Tok::Punct(b'{') => return Some(k),
            Tok::Ident(_) | Tok::Punct(b'.' | b',' | b'<' | b'>' | b'?' | b':' | b'[' | b']' | b'@') => k += 1,
            _ => return None,
        }
    }
    None
}

fn matching_brace(toks: &[(Tok, usize)], open: usize) -> Option<usize> {
    let mut depth = 0usize;
    for (k, (tok, _)) in toks.iter().enumerate().skip(open) {
        match tok {
            Tok::Punct(b'{') => depth += 1,
            Tok::Punct(b'}') => {
                depth -= 1;
                if depth == 0 {
                    return Some(k);
                }
            }
            _ => {}
        }
    }
    None
}

fn is_marked(region: &[(Tok, usize)], name: &str, conventions: &TestConventions) -> bool {
    if conventions.name_matches(name) {
        return true;
    }
    let mut k = 0;
    while k < region.len() {
        if region[k].0 == Tok::Punct(b'@') {
            let mut parts = Vec::new();
            let mut j = k + 1;
            while let Some((Tok::Ident(w), _)) = region.get(j) {
                parts.push(w.as_str());
                if region.get(j + 1).is_some_and(|t| t.0 == Tok::Punct(b'.')) {
                    j += 2;
                } else {
                    j += 1;
                    break;
                }
            }
            if !parts.is_empty() && conventions.annotation_matches(&parts.join(".")) {
                return true;
            }
            k = j;
        } else {
            k += 1;
        }
    }
    false
}

fn indent_of(line: &str) -> usize {
    line.len() - line.trim_start().len()
}

fn scan_indent(text: &str, conventions: &TestConventions) -> Vec<FoundMethod> {
    let lines: Vec<&str> = text.lines().collect();
    let mut found = Vec::new();
    // (indent, name, is_class)
    let mut scopes: Vec<(usize, String, bool)> = Vec::new();
    let mut decorators: Vec<(usize, String)> = Vec::new();

    let mut i = 0;
    while i < lines.len() {
        let line = lines[i];
        let trimmed = line.trim_start();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            i += 1;
            continue;
        }
        let indent = indent_of(line);
        while scopes.last().is_some_and(|s| s.0 >= indent) {
            scopes.pop();
        }
        if let Some(deco) = trimmed.strip_prefix('@') {
            let name: String = deco.chars().take_while(|c| c.is_alphanumeric() || *c == '_' || *c == '.').collect();
            decorators.push((i, name));
            i += 1;
            continue;
        }
        let def_rest = trimmed.strip_prefix("async def ").or_else(|| trimmed.strip_prefix("def "));
        if let Some(rest) = def_rest {
            let name: String = rest.chars().take_while(|c| c.is_alphanumeric() || *c == '_').collect();
            let nested_in_function = scopes.iter().any(|s| !s.2);
            let end = block_end(&lines, i, indent);
            let marked =
                conventions.name_matches(&name) || decorators.iter().any(|(_, d)| conventions.annotation_matches(d));
            if marked && !nested_in_function {
                let start = decorators.first().map_or(i, |d| d.0);
                found.push(FoundMethod {
                    container: scopes.iter().filter(|s| s.2).map(|s| s.1.as_str()).collect::<Vec<_>>().join("."),
                    name,
                    span: LineSpan { start: start as u32 + 1, end: end as u32 + 1 },
                });
            }
            scopes.push((indent, String::new(), false));
            decorators.clear();
            i += 1;
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix("class ") {
            let name: String = rest.chars().take_while(|c| c.is_alphanumeric() || *c == '_').collect();
            scopes.push((indent, name, true));
        }
        decorators.clear();
        i += 1;
    }
    found
}

/// Index of the last non-blank line belonging to the block opened at `start`.
fn block_end(lines: &[&str], start: usize, indent: usize) -> usize {
    let mut last = start;
    for (j, line) in lines.iter().enumerate().skip(start + 1) {
        if line.trim().is_empty() {
            continue;
        }
        if indent_of(line) <= indent {
            break;
        }
        last = j;
    }
    last
}
