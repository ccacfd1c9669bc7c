use globset::{Glob, GlobBuilder, GlobMatcher};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PathClass {
    Source,
    Test,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathRule {
    pub pattern: String,
    pub class: PathClass,
}

impl PathRule {
    pub fn new(pattern: impl Into<String>, class: PathClass) -> Self {
        Self { pattern: pattern.into(), class }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("invalid path pattern {pattern:?}: {source}")]
pub struct PathRulesError {
    pub pattern: String,
    #[source]
    pub source: globset::Error,
}

/// Ordered glob rules; the first matching rule decides, `Other` otherwise.
///
/// Patterns are compiled when the rules are built, so a bad pattern fails
/// at load time and classification itself is infallible.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "Vec<PathRule>", into = "Vec<PathRule>")]
pub struct PathRules {
    rules: Vec<PathRule>,
    matchers: Vec<GlobMatcher>,
}

impl PathRules {
    pub fn new(rules: Vec<PathRule>) -> Result<Self, PathRulesError> {
        let matchers = rules.iter().map(|rule| compile(&rule.pattern)).collect::<Result<Vec<_>, _>>()?;
        Ok(Self { rules, matchers })
    }

    pub fn rules(&self) -> &[PathRule] {
        &self.rules
    }

    /// Stable hex digest of the rule list, recorded in dataset manifests.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_string(&self.rules).expect("rules serialize");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}

fn compile(pattern: &str) -> Result<GlobMatcher, PathRulesError> {
    GlobBuilder::new(pattern)
        .literal_separator(true)
        .build()
        .map(|g: Glob| g.compile_matcher())
        .map_err(|source| PathRulesError { pattern: pattern.to_string(), source })
}

impl TryFrom<Vec<PathRule>> for PathRules {
    type Error = PathRulesError;

    fn try_from(rules: Vec<PathRule>) -> Result<Self, Self::Error> {
        Self::new(rules)
    }
}

impl From<PathRules> for Vec<PathRule> {
    fn from(rules: PathRules) -> Self {
        rules.rules
    }
}

impl PartialEq for PathRules {
    fn eq(&self, other: &Self) -> bool {
        self.rules == other.rules
    }
}

impl Default for PathRules {
    /// Maven/Gradle layout: `src/test` trees and `*Test.java` files are
    /// tests, everything under `src/main` is source.
    fn default() -> Self {
        use PathClass::*;
        Self::new(vec![
            PathRule::new("**/src/test/**", Test),
            PathRule::new("**/src/it/**", Test),
            PathRule::new("**/*Test.java", Test),
            PathRule::new("**/*Tests.java", Test),
            PathRule::new("**/*IT.java", Test),
            PathRule::new("**/src/main/**", Source),
            PathRule::new("**/*.java", Source),
            PathRule::new("**/*.kt", Source),
        ])
        .expect("default rules compile")
    }
}

pub fn classify_path(path: &str, rules: &PathRules) -> PathClass {
    rules
        .matchers
        .iter()
        .zip(&rules.rules)
        .find(|(m, _)| m.is_match(path))
        .map_or(PathClass::Other, |(_, rule)| rule.class)
}
