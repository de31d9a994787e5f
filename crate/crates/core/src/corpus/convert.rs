//! Conversion of raw source files into binary yes/no task instances.
//!
//! Tasks 1-3 read BIG-Bench-Hard style JSON (`{"examples": [{"input", "target"}]}`),
//! task 4 reads a Social-Chemistry-101 TSV. Non-binary source items are
//! rewritten into yes/no questions; the exact rules are documented in
//! `data/README.md`. Items that cannot be converted are skipped and counted.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::types::{Semantic, TaskName};

use super::{CorpusError, TaskInstance};

pub(super) struct Converted {
    pub instances: Vec<TaskInstance>,
    pub skipped: usize,
}

#[derive(Deserialize)]
struct BbhFile {
    examples: Vec<BbhExample>,
}

#[derive(Deserialize)]
struct BbhExample {
    input: String,
    target: String,
}

pub(super) fn convert_source(
    task: TaskName,
    path: &Path,
    raw: &str,
) -> Result<Converted, CorpusError> {
    match task {
        TaskName::SocialChemistry => convert_social_chemistry(path, raw),
        _ => convert_bbh(task, path, raw),
    }
}

fn convert_bbh(task: TaskName, path: &Path, raw: &str) -> Result<Converted, CorpusError> {
    let file: BbhFile = serde_json::from_str(raw).map_err(|e| CorpusError::CorruptSource {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;

    let mut instances = Vec::with_capacity(file.examples.len());
    let mut skipped = 0;
    for (idx, ex) in file.examples.iter().enumerate() {
        let converted = match task {
            TaskName::Anachronisms => convert_anachronism(ex),
            TaskName::SportsUnderstanding => convert_sports(ex),
            TaskName::LogicalDeduction => convert_logical_deduction(ex, idx),
            TaskName::SocialChemistry => unreachable!("handled separately"),
        };
        match converted {
            Some((question_text, gold_answer)) => instances.push(TaskInstance {
                task_name: task,
                instance_id: format!("{task}-{idx:05}"),
                question_text,
                gold_answer,
            }),
            None => skipped += 1,
        }
    }
    Ok(Converted { instances, skipped })
}

fn parse_yes_no(target: &str) -> Option<Semantic> {
    match target.trim().to_ascii_lowercase().as_str() {
        "yes" | "plausible" | "appropriate" => Some(Semantic::Yes),
        "no" | "implausible" | "inappropriate" => Some(Semantic::No),
        _ => None,
    }
}

fn convert_sports(ex: &BbhExample) -> Option<(String, Semantic)> {
    let gold = parse_yes_no(&ex.target)?;
    let input = ex.input.trim();
    let question = if input.starts_with("Is the following sentence plausible?") {
        input.to_string()
    } else {
        format!("Is the following sentence plausible?\n\"{}\"", strip_quotes(input))
    };
    Some((question, gold))
}

fn convert_anachronism(ex: &BbhExample) -> Option<(String, Semantic)> {
    let gold = parse_yes_no(&ex.target)?;
    let input = ex.input.trim();
    let question = if input.starts_with("Does the following sentence") {
        input.to_string()
    } else {
        format!(
            "Does the following sentence contain anachronistic elements?\n\"{}\"",
            strip_quotes(input)
        )
    };
    Some((question, gold))
}

/// Logical deduction sources are multiple choice over orderings. One option
/// statement is selected per item — the correct option on even indices
/// (gold yes), the next option after it on odd indices (gold no) — keeping
/// the converted set near class balance without consuming randomness.
fn convert_logical_deduction(ex: &BbhExample, idx: usize) -> Option<(String, Semantic)> {
    let (description, options) = split_options(&ex.input)?;
    if options.is_empty() {
        return None;
    }
    let target_letter = ex.target.trim().trim_start_matches('(').chars().next()?;
    let target_idx = (target_letter as usize).checked_sub('A' as usize)?;
    if target_idx >= options.len() {
        return None;
    }
    let (chosen_idx, gold) = if idx % 2 == 0 {
        (target_idx, Semantic::Yes)
    } else {
        ((target_idx + 1) % options.len(), Semantic::No)
    };
    let statement = options[chosen_idx].trim().trim_end_matches('.');
    let question = format!(
        "{description}\nGiven this description, is the following statement plausible?\n\"{statement}.\""
    );
    Some((question, gold))
}

fn split_options(input: &str) -> Option<(String, Vec<String>)> {
    let marker = "Options:";
    let pos = input.find(marker)?;
    let description = input[..pos].trim().to_string();
    let mut options = Vec::new();
    for line in input[pos + marker.len()..].lines() {
        let line = line.trim();
        if line.len() >= 4 && line.starts_with('(') && line.as_bytes()[2] == b')' {
            options.push(line[3..].trim().to_string());
        }
    }
    Some((description, options))
}

fn strip_quotes(s: &str) -> &str {
    s.trim_matches(|c| c == '"' || c == '\u{201c}' || c == '\u{201d}')
}

/// Social-Chemistry-101 rows are binarized from the `action-moral-judgment`
/// column (−2..2): values ≥ 1 map to yes (appropriate), ≤ −1 to no, and
/// 0 / missing rows are skipped. Duplicate actions keep the first row.
fn convert_social_chemistry(path: &Path, raw: &str) -> Result<Converted, CorpusError> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .flexible(true)
        .from_reader(raw.as_bytes());

    let headers = reader
        .headers()
        .map_err(|e| corrupt(path, e.to_string()))?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let action_col = col("action")
        .ok_or_else(|| corrupt(path, "missing required column `action`".into()))?;
    let judgment_col = col("action-moral-judgment")
        .ok_or_else(|| corrupt(path, "missing required column `action-moral-judgment`".into()))?;

    let mut instances = Vec::new();
    let mut skipped = 0;
    let mut seen: HashSet<String> = HashSet::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| corrupt(path, e.to_string()))?;
        let action = record.get(action_col).unwrap_or("").trim();
        let judgment = record
            .get(judgment_col)
            .unwrap_or("")
            .trim()
            .parse::<f64>()
            .ok();
        let gold = match judgment {
            Some(j) if j >= 1.0 => Some(Semantic::Yes),
            Some(j) if j <= -1.0 => Some(Semantic::No),
            _ => None,
        };
        match gold {
            Some(gold) if !action.is_empty() && seen.insert(action.to_string()) => {
                instances.push(TaskInstance {
                    task_name: TaskName::SocialChemistry,
                    instance_id: format!("{}-{idx:05}", TaskName::SocialChemistry),
                    question_text: format!(
                        "Is the following action appropriate?\n\"{action}\""
                    ),
                    gold_answer: gold,
                });
            }
            _ => skipped += 1,
        }
    }
    Ok(Converted { instances, skipped })
}

fn corrupt(path: &Path, reason: String) -> CorpusError {
    CorpusError::CorruptSource {
        path: PathBuf::from(path),
        reason,
    }
}
