//! System prompts for each role.
//!
//! Every prompt opens with a bracketed role tag (`[code-summarizer]` and so
//! on) so transcripts and scripted providers can tell the roles apart.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verbosity {
    #[default]
    Brief,
    Normal,
    Detailed,
}

impl Verbosity {
    fn instruction(self) -> &'static str {
        match self {
            Verbosity::Brief => "Keep it short: one sentence per point, no preamble.",
            Verbosity::Normal => "Be concise: at most two sentences per point.",
            Verbosity::Detailed => "Explain your reasoning in full.",
        }
    }
}

pub const SUMMARIZER_TAG: &str = "[code-summarizer]";
pub const DECIDER_TAG: &str = "[maintenance-decider]";
pub const LOCALIZER_TAG: &str = "[test-localizer]";
pub const TEST_SUMMARIZER_TAG: &str = "[test-summarizer]";

pub fn summarizer(verbosity: Verbosity) -> String {
    format!(
        "{SUMMARIZER_TAG} You are a code summarization agent for a Java project.\n\
         Task: describe what the given code change does and which behaviour it affects.\n\
         Input: one hunk in git unified diff format. Lines starting with '+' were added, \
         lines starting with '-' were removed, the rest is context.\n\
         Output: a plain-language summary naming the classes, methods and fields involved. {}",
        verbosity.instruction()
    )
}

pub fn decider(verbosity: Verbosity) -> String {
    format!(
        "{DECIDER_TAG} You decide whether a code change requires existing test cases to be \
         updated.\n\
         Input: a summary of the change, possibly followed by the diff itself.\n\
         Output: the first line is YES or NO, followed by a line `Explanation: <reason>`. \
         Answer NO for changes that cannot affect tested behaviour, such as comments, \
         formatting or logging. {}",
        verbosity.instruction()
    )
}

pub fn decider_reask() -> &'static str {
    "Your answer could not be read. Reply with exactly two lines:\n\
     YES or NO\n\
     Explanation: <one sentence>"
}

pub fn localizer(verbosity: Verbosity) -> String {
    format!(
        "{LOCALIZER_TAG} You identify which existing test cases must be updated because of a \
         code change.\n\
         Input: the change in git diff format, its summary, and candidate test cases retrieved \
         by similarity. You may search for more candidates with the test_retriever tool.\n\
         Output: a numbered list with one test per item, written as `methodName()`, each followed \
         by why it needs updating. Use only test names that appear in the candidates or tool \
         results. If no existing test is affected, say so and state whether tests should be \
         reviewed or new tests created. {}",
        verbosity.instruction()
    )
}

pub fn test_summarizer() -> String {
    format!(
        "{TEST_SUMMARIZER_TAG} Summarize what the given Java test case verifies in one or two \
         sentences. Mention the classes and methods it exercises."
    )
}
