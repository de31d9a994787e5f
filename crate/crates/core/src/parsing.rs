//! Extraction of the final (A)/(B) choice from generated text.
//!
//! Parsing is total: failure is a value, never an error. When several
//! answer statements appear (steered generations sometimes self-correct),
//! the last one wins — the final statement is the model's answer.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::OptionAssignment;
use crate::types::{AnswerLetter, AnswerOutcome, COT_PREAMBLE};

/// How much format deviation the answer pattern tolerates. The tolerant
/// setting is the shipped default; it defines what counts as a parse
/// failure everywhere rates are reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strictness {
    #[default]
    Tolerant,
    Strict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseStatus {
    Parsed,
    Failed,
}

/// The outcome of scanning one generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedAnswer {
    pub status: ParseStatus,
    pub letter: Option<AnswerLetter>,
    /// Filled by [`to_semantic`] once the option assignment is known.
    pub semantic: Option<crate::types::Semantic>,
    /// Reasoning text between the preamble and the final-answer sentence.
    pub cot_text: String,
}

impl ParsedAnswer {
    pub fn is_parsed(&self) -> bool {
        self.status == ParseStatus::Parsed
    }
}

/// End-of-text markers stripped before matching; generation backends differ
/// in which of these leak into decoded text.
const EOT_MARKERS: [&str; 5] = [
    "</s>",
    "<|endoftext|>",
    "<|eot_id|>",
    "<end_of_turn>",
    "<|im_end|>",
];

fn tolerant_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)best\s+answer\s+is\s*:?\s*\**\s*\(?\s*([ab])\b\)?").expect("valid regex")
    })
}

fn strict_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"The best answer is: \(([AB])\)").expect("valid regex"))
}

/// Extracts the final answer with the default tolerant pattern.
pub fn parse_answer(text: &str) -> ParsedAnswer {
    parse_answer_with(text, Strictness::Tolerant)
}

/// Extracts the final answer, last occurrence winning.
pub fn parse_answer_with(text: &str, strictness: Strictness) -> ParsedAnswer {
    let mut trimmed = text.trim_end();
    loop {
        let mut stripped = false;
        for marker in EOT_MARKERS {
            if let Some(rest) = trimmed.strip_suffix(marker) {
                trimmed = rest.trim_end();
                stripped = true;
            }
        }
        if !stripped {
            break;
        }
    }

    let pattern = match strictness {
        Strictness::Tolerant => tolerant_pattern(),
        Strictness::Strict => strict_pattern(),
    };

    let last = pattern.captures_iter(trimmed).last();
    match last {
        Some(caps) => {
            let letter_str = caps.get(1).expect("group 1 always present").as_str();
            let letter = if letter_str.eq_ignore_ascii_case("a") {
                AnswerLetter::A
            } else {
                AnswerLetter::B
            };
            let match_start = caps.get(0).expect("group 0").start();
            ParsedAnswer {
                status: ParseStatus::Parsed,
                letter: Some(letter),
                semantic: None,
                cot_text: extract_cot(trimmed, Some(match_start)),
            }
        }
        None => ParsedAnswer {
            status: ParseStatus::Failed,
            letter: None,
            semantic: None,
            cot_text: extract_cot(trimmed, None),
        },
    }
}

/// Maps a parsed letter to yes/no through the option assignment;
/// failures pass through.
pub fn to_semantic(parsed: &ParsedAnswer, assignment: &OptionAssignment) -> AnswerOutcome {
    match parsed.letter {
        Some(letter) => AnswerOutcome::from_semantic(assignment.semantic_of(letter)),
        None => AnswerOutcome::Failed,
    }
}

/// The chain-of-thought span: starts after the preamble (or at the start of
/// the generation when the preamble is absent), ends before the final-answer
/// sentence, with trailing conclusive "So, ... answer ..." clauses trimmed.
fn extract_cot(text: &str, answer_match_start: Option<usize>) -> String {
    let region_start = text
        .rfind(COT_PREAMBLE)
        .map(|p| p + COT_PREAMBLE.len())
        .unwrap_or(0);

    let region_end = match answer_match_start {
        Some(pos) if pos >= region_start => sentence_start(text, pos, region_start),
        _ => text.len(),
    };

    let mut cot = &text[region_start..region_end];
    // Trim further conclusive clauses that directly announce the answer.
    loop {
        let t = cot.trim_end();
        let last_sentence_start = sentence_start(text, region_start + t.len(), region_start);
        let rel = last_sentence_start - region_start;
        let sentence = cot[rel..].trim();
        if !sentence.is_empty() && is_conclusive_announcement(sentence) {
            cot = &cot[..rel];
        } else {
            break;
        }
    }
    cot.trim().to_string()
}

fn is_conclusive_announcement(sentence: &str) -> bool {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| {
        Regex::new(r"(?i)^(so|therefore|thus|hence)\b[^.!?]*\banswer\b").expect("valid regex")
    });
    re.is_match(sentence)
}

/// Byte offset where the sentence containing `pos` begins, bounded below by
/// `floor`. Sentence boundaries are `.`, `!`, `?`, and newlines.
fn sentence_start(text: &str, pos: usize, floor: usize) -> usize {
    let bytes = text.as_bytes();
    let mut i = pos.min(bytes.len());
    while i > floor {
        let b = bytes[i - 1];
        if b == b'.' || b == b'!' || b == b'?' || b == b'\n' {
            return i;
        }
        i -= 1;
    }
    floor
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Semantic;

    #[test]
    fn parses_canonical_format() {
        let p = parse_answer("Some reasoning. The best answer is: (B)");
        assert_eq!(p.status, ParseStatus::Parsed);
        assert_eq!(p.letter, Some(AnswerLetter::B));
    }

    #[test]
    fn empty_input_fails() {
        let p = parse_answer("");
        assert_eq!(p.status, ParseStatus::Failed);
        assert_eq!(p.letter, None);
    }

    #[test]
    fn last_occurrence_wins() {
        let p = parse_answer(
            "I think the best answer is (A) at first glance. \
             Actually, the best answer is: (B).",
        );
        assert_eq!(p.letter, Some(AnswerLetter::B));
    }

    #[test]
    fn tolerates_bold_case_and_missing_colon() {
        for text in [
            "the best answer is (a)",
            "The best answer is: **(B)**",
            "THE BEST ANSWER IS: (B).",
            "The best answer is B",
        ] {
            let p = parse_answer(text);
            assert!(p.is_parsed(), "should parse: {text:?}");
        }
    }

    #[test]
    fn does_not_match_embedded_letters() {
        let p = parse_answer("The best answer is Barcelona's defense.");
        assert_eq!(p.status, ParseStatus::Failed);
    }

    #[test]
    fn strict_mode_requires_exact_format() {
        let text = "the best answer is (a)";
        assert!(parse_answer_with(text, Strictness::Strict).letter.is_none());
        let exact = "The best answer is: (A)";
        assert_eq!(
            parse_answer_with(exact, Strictness::Strict).letter,
            Some(AnswerLetter::A)
        );
    }

    #[test]
    fn trailing_eot_markers_are_ignored() {
        let p = parse_answer("The best answer is: (A)</s>\n<|endoftext|>  ");
        assert_eq!(p.letter, Some(AnswerLetter::A));
    }

    #[test]
    fn semantic_mapping_follows_assignment() {
        let assignment = OptionAssignment {
            yes_slot: AnswerLetter::B,
            no_slot: AnswerLetter::A,
            rng_seed: 0,
        };
        let parsed = parse_answer("The best answer is: (A)");
        assert_eq!(to_semantic(&parsed, &assignment), AnswerOutcome::No);
        let parsed = parse_answer("The best answer is: (B)");
        assert_eq!(to_semantic(&parsed, &assignment), AnswerOutcome::Yes);
        let failed = parse_answer("no answer here");
        assert_eq!(to_semantic(&failed, &assignment), AnswerOutcome::Failed);
        let _ = Semantic::Yes;
    }

    #[test]
    fn cot_text_excludes_answer_sentence_and_conclusive_clause() {
        let text = "Let's think step by step: Messi plays soccer. Free throws \
                    are from basketball. So, the answer should be no. So, the \
                    best answer is: (A).";
        let p = parse_answer(text);
        assert_eq!(
            p.cot_text,
            "Messi plays soccer. Free throws are from basketball."
        );
    }

    #[test]
    fn cot_text_keeps_plain_reasoning_when_unparsed() {
        let p = parse_answer("Let's think step by step: some thoughts, no answer");
        assert_eq!(p.status, ParseStatus::Failed);
        assert_eq!(p.cot_text, "some thoughts, no answer");
    }
}
