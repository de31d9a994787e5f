//! Shared domain vocabulary used across the pipeline stages.

use std::fmt;

use serde::{Deserialize, Serialize};

/// The exact chain-of-thought preamble. Every CoT-mode prompt ends with this
/// string; its final colon is the pre-CoT token position t0 at which
/// activations are captured.
pub const COT_PREAMBLE: &str = "Let's think step by step:";

/// The answer-statement phrase models are instructed to use.
pub const ANSWER_PHRASE: &str = "The best answer is:";

/// The four binary classification tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskName {
    Anachronisms,
    LogicalDeduction,
    SocialChemistry,
    SportsUnderstanding,
}

impl TaskName {
    pub const ALL: [TaskName; 4] = [
        TaskName::Anachronisms,
        TaskName::LogicalDeduction,
        TaskName::SocialChemistry,
        TaskName::SportsUnderstanding,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskName::Anachronisms => "anachronisms",
            TaskName::LogicalDeduction => "logical_deduction",
            TaskName::SocialChemistry => "social_chemistry",
            TaskName::SportsUnderstanding => "sports_understanding",
        }
    }

    pub fn parse(s: &str) -> Option<TaskName> {
        Self::ALL.iter().copied().find(|t| t.as_str() == s)
    }

    /// Option texts placed in the answer-choice slots, `(yes_text, no_text)`.
    pub fn option_texts(self) -> (&'static str, &'static str) {
        match self {
            TaskName::Anachronisms => (
                "Yes, the sentence contains anachronistic elements",
                "No, the sentence does not contain anachronistic elements",
            ),
            TaskName::LogicalDeduction => (
                "Yes, the statement is plausible",
                "No, the statement is implausible",
            ),
            TaskName::SocialChemistry => (
                "Yes, the action is appropriate",
                "No, the action is inappropriate",
            ),
            TaskName::SportsUnderstanding => (
                "Yes, the sentence is plausible",
                "No, the sentence is implausible",
            ),
        }
    }
}

impl fmt::Display for TaskName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A semantic yes/no answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Semantic {
    Yes,
    No,
}

impl Semantic {
    pub fn flipped(self) -> Semantic {
        match self {
            Semantic::Yes => Semantic::No,
            Semantic::No => Semantic::Yes,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Semantic::Yes => "yes",
            Semantic::No => "no",
        }
    }
}

impl fmt::Display for Semantic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// An answer-choice slot letter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AnswerLetter {
    A,
    B,
}

impl AnswerLetter {
    pub fn other(self) -> AnswerLetter {
        match self {
            AnswerLetter::A => AnswerLetter::B,
            AnswerLetter::B => AnswerLetter::A,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            AnswerLetter::A => 'A',
            AnswerLetter::B => 'B',
        }
    }
}

impl fmt::Display for AnswerLetter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

/// Prompting mode: with or without verbalized reasoning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptMode {
    Cot,
    NoCot,
}

impl PromptMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PromptMode::Cot => "cot",
            PromptMode::NoCot => "no_cot",
        }
    }
}

impl fmt::Display for PromptMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Outcome of mapping a parsed generation back to semantic yes/no.
/// Parse failure is a value, never an error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerOutcome {
    Yes,
    No,
    Failed,
}

impl AnswerOutcome {
    pub fn from_semantic(s: Semantic) -> AnswerOutcome {
        match s {
            Semantic::Yes => AnswerOutcome::Yes,
            Semantic::No => AnswerOutcome::No,
        }
    }

    pub fn semantic(self) -> Option<Semantic> {
        match self {
            AnswerOutcome::Yes => Some(Semantic::Yes),
            AnswerOutcome::No => Some(Semantic::No),
            AnswerOutcome::Failed => None,
        }
    }

    pub fn is_parsed(self) -> bool {
        !matches!(self, AnswerOutcome::Failed)
    }
}

impl fmt::Display for AnswerOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            AnswerOutcome::Yes => "yes",
            AnswerOutcome::No => "no",
            AnswerOutcome::Failed => "failed",
        };
        f.write_str(s)
    }
}
