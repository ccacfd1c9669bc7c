//! Reading test names and stances out of free-text answers.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::dataset::TestId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stance {
    NeedsUpdate,
    ShouldReview,
    SuggestNew,
}

/// A mention of a code element in an answer.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Mention {
    name: String,
    container: Option<String>,
    /// Written with `()` or leading a list item, so it was meant as a test.
    test_like: bool,
}

/// One test name matched against the universe, with the text it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NameMatch {
    pub test_id: TestId,
    pub segment: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExtractedNames {
    pub matched: Vec<NameMatch>,
    /// Test-like names with no counterpart in the universe.
    pub unmatched: Vec<String>,
    /// Every backtick or `()` identifier, matched or not.
    pub identifiers: Vec<String>,
}

impl ExtractedNames {
    pub fn ids(&self) -> BTreeSet<TestId> {
        self.matched.iter().map(|m| m.test_id.clone()).collect()
    }
}

fn backtick_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"`([^`\n]+)`").unwrap())
}

fn call_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"([A-Za-z_$][\w$]*(?:[.#][A-Za-z_$][\w$]*)*)\(\)").unwrap())
}

fn code_ident_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^[A-Za-z_$][\w$]*(?:(?:\.|#|::)[A-Za-z_$][\w$]*)*(\(.*\))?$").unwrap())
}

fn list_item_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*(?:\d+[.)]|[-*\u{2022}])\s+(.*)$").unwrap())
}

fn list_lead_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^[*_]*([A-Za-z_$][\w$]*(?:[.#][A-Za-z_$][\w$]*)*)[*_]*\s*[(:]").unwrap())
}

fn split_qualified(raw: &str) -> (String, Option<String>) {
    let parts: Vec<&str> = raw.split(['.', '#']).flat_map(|p| p.split("::")).collect();
    let name = parts.last().copied().unwrap_or(raw).to_string();
    let container = (parts.len() > 1).then(|| parts[parts.len() - 2].to_string());
    (name, container)
}

fn mentions_in(segment: &str, list_item: bool) -> Vec<Mention> {
    let mut out = Vec::new();
    for caps in backtick_re().captures_iter(segment) {
        let inner = caps[1].trim();
        if let Some(m) = code_ident_re().captures(inner) {
            let has_parens = m.get(1).is_some();
            let base = inner.split('(').next().unwrap_or(inner);
            let (name, container) = split_qualified(base);
            out.push(Mention { name, container, test_like: has_parens });
        }
    }
    let without_backticks = backtick_re().replace_all(segment, " ");
    for caps in call_re().captures_iter(&without_backticks) {
        let (name, container) = split_qualified(&caps[1]);
        out.push(Mention { name, container, test_like: true });
    }
    if list_item {
        let body = list_item_re().captures(segment).map(|c| c.get(1).unwrap().as_str().to_string()).unwrap_or_default();
        let body = body.trim_start_matches('`');
        if let Some(caps) = list_lead_re().captures(body) {
            let (name, container) = split_qualified(&caps[1]);
            out.push(Mention { name, container, test_like: true });
        }
    }
    out
}

/// Splits an answer into list items (with their continuation lines) and
/// sentences of ordinary prose.
pub fn split_segments(text: &str) -> Vec<(String, bool)> {
    let mut segments: Vec<(String, bool)> = Vec::new();
    let mut prose = String::new();
    let mut item: Option<String> = None;

    fn flush_prose(prose: &mut String, segments: &mut Vec<(String, bool)>) {
        for sentence in split_sentences(prose) {
            segments.push((sentence, false));
        }
        prose.clear();
    }

    for line in text.lines() {
        if list_item_re().is_match(line) {
            flush_prose(&mut prose, &mut segments);
            if let Some(done) = item.take() {
                segments.push((done, true));
            }
            item = Some(line.trim().to_string());
        } else if line.trim().is_empty() {
            if let Some(done) = item.take() {
                segments.push((done, true));
            }
            flush_prose(&mut prose, &mut segments);
        } else if let Some(current) = item.as_mut() {
            if line.starts_with(char::is_whitespace) {
                current.push(' ');
                current.push_str(line.trim());
            } else {
                segments.push((item.take().unwrap(), true));
                prose.push_str(line.trim());
                prose.push(' ');
            }
        } else {
            prose.push_str(line.trim());
            prose.push(' ');
        }
    }
    if let Some(done) = item.take() {
        segments.push((done, true));
    }
    flush_prose(&mut prose, &mut segments);
    segments
}

fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut start = 0;
    let bytes = text.as_bytes();
    let mut in_code = false;
    for (i, &b) in bytes.iter().enumerate() {
        match b {
            b'`' => in_code = !in_code,
            b'.' | b'!' | b'?' if !in_code => {
                let next = bytes.get(i + 1).copied();
                if next.is_none_or(|c| c.is_ascii_whitespace()) {
                    let s = text[start..=i].trim();
                    if !s.is_empty() {
                        out.push(s.to_string());
                    }
                    start = i + 1;
                }
            }
            _ => {}
        }
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail.to_string());
    }
    out
}

fn in_container(test: &TestId, container: &str) -> bool {
    test.container == container || test.container.ends_with(&format!(".{container}"))
}

/// Exact method-name matches (all of them, narrowed by the container hint
/// when it selects anything), else a unique case-insensitive match.
fn resolve_all(mention: &Mention, universe: &BTreeSet<TestId>) -> Vec<TestId> {
    let narrow = |cands: Vec<&TestId>| -> Vec<TestId> {
        if let Some(c) = &mention.container {
            let hits: Vec<TestId> = cands.iter().filter(|t| in_container(t, c)).map(|t| (*t).clone()).collect();
            if !hits.is_empty() {
                return hits;
            }
        }
        cands.into_iter().cloned().collect()
    };
    let exact = narrow(universe.iter().filter(|t| t.method == mention.name).collect());
    if !exact.is_empty() {
        return exact;
    }
    let folded = narrow(universe.iter().filter(|t| t.method.eq_ignore_ascii_case(&mention.name)).collect());
    if folded.len() == 1 {
        folded
    } else {
        Vec::new()
    }
}

/// Harvests test names from `answer` and matches them against `universe`.
///
/// Candidates are backtick-quoted identifiers, identifiers written with
/// `()`, and identifiers leading a list item. Matching is exact on the
/// method name first, then case-insensitive when that is unambiguous.
/// Plain backtick identifiers that match nothing are treated as code
/// elements rather than test names.
pub fn extract_test_names(answer: &str, universe: &BTreeSet<TestId>) -> ExtractedNames {
    let mut result = ExtractedNames::default();
    let mut seen = BTreeSet::new();
    let mut seen_unmatched = BTreeSet::new();
    let mut seen_idents = BTreeSet::new();
    for (segment, list_item) in split_segments(answer) {
        for mention in mentions_in(&segment, list_item) {
            if seen_idents.insert(mention.name.clone()) {
                result.identifiers.push(mention.name.clone());
            }
            let ids = resolve_all(&mention, universe);
            if ids.is_empty() {
                if mention.test_like && seen_unmatched.insert(mention.name.clone()) {
                    result.unmatched.push(mention.name.clone());
                }
                continue;
            }
            for id in ids {
                if seen.insert(id.clone()) {
                    result.matched.push(NameMatch { test_id: id, segment: segment.clone() });
                }
            }
        }
    }
    result
}

struct StancePattern {
    stance: Stance,
    re: Regex,
}

fn stance_patterns() -> &'static [StancePattern] {
    static PATTERNS: OnceLock<Vec<StancePattern>> = OnceLock::new();
    PATTERNS.get_or_init(|| {
        const EDIT: &str = r"(?:updat\w*|chang\w*|modif\w*|adjust\w*|revis\w*|fix\w*|extend\w*|rewrit\w*|maint\w*|adapt\w*)";
        let table: [(Stance, String); 5] = [
            (
                Stance::NeedsUpdate,
                format!(r"(?i)\b(?:might|may|could|possibly)\s+(?:also\s+)?(?:need|require|have)\s+(?:to\s+)?(?:be\s+)?(?:an?\s+)?{EDIT}"),
            ),
            (
                Stance::NeedsUpdate,
                format!(r"(?i)\bshould\s+(?:also\s+)?(?:be\s+)?{EDIT}"),
            ),
            (
                Stance::NeedsUpdate,
                format!(r"(?i)\b(?:needs?|must|requires?|has\s+to|have\s+to)\s+(?:also\s+)?(?:to\s+)?(?:be\s+)?(?:an?\s+)?{EDIT}"),
            ),
            (
                Stance::ShouldReview,
                r"(?i)\b(?:review\w*|re-?examin\w*|double-check\w*|inspect\w*|verify\s+whether|check\s+whether)".to_string(),
            ),
            (
                Stance::SuggestNew,
                r"(?i)\b(?:new|additional)\s+tests?(?:\s+cases?)?\b|\b(?:create|add|write)\s+(?:a\s+|new\s+|additional\s+|more\s+)*tests?\b".to_string(),
            ),
        ];
        table
            .into_iter()
            .map(|(stance, re)| StancePattern { stance, re: Regex::new(&re).unwrap() })
            .collect()
    })
}

fn negation_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\b(?:no|not|none|nothing|without|neither|nor)\b|n't\b").unwrap())
}

fn clause_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)[,;:]|\s\u{2014}\s|\s-\s|\bbut\b|\bhowever\b|\bwhile\b").unwrap())
}

/// Classifies a passage by its phrasing. Phrases inside negated clauses are
/// ignored. Returns the stance and the phrase that decided it; `NeedsUpdate`
/// outranks `ShouldReview`, which outranks `SuggestNew`.
pub fn classify_stance(text: &str) -> Option<(Stance, String)> {
    let clauses: Vec<&str> = clause_re().split(text).collect();
    let mut best: Option<(Stance, String)> = None;
    for pattern in stance_patterns() {
        if best.as_ref().is_some_and(|(s, _)| *s <= pattern.stance) {
            continue;
        }
        for clause in &clauses {
            if negation_re().is_match(clause) {
                continue;
            }
            if let Some(m) = pattern.re.find(clause) {
                best = Some((pattern.stance, m.as_str().to_string()));
                break;
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn universe() -> BTreeSet<TestId> {
        [
            TestId::new("a/ConfigTest.java", "ConfigTest", "testParameters"),
            TestId::new("a/ConfigTest.java", "ConfigTest", "testConfigLoads"),
            TestId::new("a/FlowTest.java", "FlowTest", "testRename"),
            TestId::new("a/OtherTest.java", "OtherTest", "testRename"),
            TestId::new("a/CaseTest.java", "CaseTest", "TestUpper"),
        ]
        .into_iter()
        .collect()
    }

    #[test]
    fn list_answer_yields_tests_and_phrases() {
        let answer = "The following test cases require maintenance:\n\n\
            1. `testParameters()`: Needs to be updated to reflect the new parameter.\n\
            2. `testConfigLoads()`: May need to be updated to ensure the new\n   \
            configuration elements, including the `DEFAULT_KEY`, are loaded.";
        let names = extract_test_names(answer, &universe());
        let methods: Vec<&str> = names.matched.iter().map(|m| m.test_id.method.as_str()).collect();
        assert_eq!(methods, vec!["testParameters", "testConfigLoads"]);
        assert!(names.unmatched.is_empty());
        assert!(names.identifiers.contains(&"DEFAULT_KEY".to_string()));
        let (s1, p1) = classify_stance(&names.matched[0].segment).unwrap();
        assert_eq!((s1, p1.as_str()), (Stance::NeedsUpdate, "Needs to be updated"));
        let (s2, p2) = classify_stance(&names.matched[1].segment).unwrap();
        assert_eq!((s2, p2.as_str()), (Stance::NeedsUpdate, "May need to be updated"));
    }

    #[test]
    fn unknown_test_like_names_are_reported() {
        let names = extract_test_names("Update `testMissing()` and `SomeClass`.", &universe());
        assert!(names.matched.is_empty());
        assert_eq!(names.unmatched, vec!["testMissing"]);
    }

    #[test]
    fn same_name_in_two_classes_narrowed_by_container() {
        let names = extract_test_names("`FlowTest.testRename()` must be changed.", &universe());
        assert_eq!(names.ids().len(), 1);
        assert_eq!(names.matched[0].test_id.container, "FlowTest");
        let names = extract_test_names("`testRename()` must be changed.", &universe());
        assert_eq!(names.ids().len(), 2);
    }

    #[test]
    fn case_insensitive_fallback_when_unique() {
        let names = extract_test_names("Fix testupper() please.", &universe());
        assert_eq!(names.matched[0].test_id.method, "TestUpper");
    }

    #[test]
    fn stance_table() {
        let review = "While no specific test cases were identified as needing updates based on the \
            provided information, it is recommended to review and potentially update any test cases \
            that interact with the `FlowConfig` class.";
        assert_eq!(classify_stance(review).unwrap().0, Stance::ShouldReview);
        let create = "No existing test cases are directly impacted by this change, but new test \
            cases should be created to cover the updated behavior of `getNextTransformation`.";
        assert_eq!(classify_stance(create).unwrap().0, Stance::SuggestNew);
        assert_eq!(classify_stance("No test maintenance is needed."), None);
        assert_eq!(
            classify_stance("testX should be updated").unwrap(),
            (Stance::NeedsUpdate, "should be updated".into())
        );
        assert_eq!(classify_stance("testX does not need to be updated"), None);
    }

    #[test]
    fn sentences_do_not_split_inside_code() {
        let segs = split_segments("Check `a.b()` first. Then `c.d`.");
        assert_eq!(segs.len(), 2);
        assert_eq!(segs[0].0, "Check `a.b()` first.");
    }
}
