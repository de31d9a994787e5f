//! The persisted record of one evaluated generation: prompt, decoded text,
//! per-token metadata, parsed answer, and the instance it came from.

use serde::{Deserialize, Serialize};

use crate::backend::{DecodeParams, Generation};
use crate::corpus::{OptionAssignment, PromptInstance};
use crate::parsing::{parse_answer_with, to_semantic, ParsedAnswer, Strictness};
use crate::types::{AnswerOutcome, PromptMode, Semantic, TaskName};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub instance_id: String,
    pub task: TaskName,
    pub mode: PromptMode,
    pub assignment: OptionAssignment,
    pub gold: Semantic,
    pub question_text: String,
    pub prompt_text: String,
    pub completion: String,
    pub tokens: Vec<String>,
    pub params: DecodeParams,
    pub parse: ParsedAnswer,
    pub answer: AnswerOutcome,
}

impl GenerationRecord {
    /// Parses a raw generation and attaches instance metadata.
    pub fn from_generation(
        prompt: &PromptInstance,
        generation: Generation,
        strictness: Strictness,
    ) -> GenerationRecord {
        let parse = parse_answer_with(&generation.completion, strictness);
        let answer = to_semantic(&parse, &prompt.assignment);
        GenerationRecord {
            instance_id: prompt.instance.instance_id.clone(),
            task: prompt.instance.task_name,
            mode: prompt.mode,
            assignment: prompt.assignment,
            gold: prompt.instance.gold_answer,
            question_text: prompt.instance.question_text.clone(),
            prompt_text: generation.prompt_text,
            completion: generation.completion,
            tokens: generation.tokens,
            params: generation.params,
            parse,
            answer,
        }
    }

    /// Parsed and matching the gold label.
    pub fn is_correct(&self) -> bool {
        self.answer.semantic() == Some(self.gold)
    }

    pub fn is_parsed(&self) -> bool {
        self.answer.is_parsed()
    }
}
