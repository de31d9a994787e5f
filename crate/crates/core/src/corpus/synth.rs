//! Synthetic source-file generation for model-free runs.
//!
//! Writes a complete task data directory (BBH-style `source.json` plus the
//! two few-shot files) whose gold labels are produced by a caller-supplied
//! label function over the final question text. Pairing this with the
//! planted backend's hidden-label function yields a corpus on which the
//! backend answers every question "correctly", which is what the synthetic
//! end-to-end pipeline and the acceptance checks run against.

use std::fs;
use std::io;
use std::path::Path;

use serde_json::json;

use crate::types::{Semantic, TaskName};

/// Writes `source.json`, `fewshot_cot.txt`, and `fewshot_nocot.txt` for
/// `task` under `data_dir/<task>/`. Questions are numbered synthetic
/// sentences; `label` decides each instance's gold answer from the exact
/// question text the corpus will produce for it.
pub fn write_synthetic_task_dir(
    data_dir: &Path,
    task: TaskName,
    n_instances: usize,
    mut label: impl FnMut(&str) -> Semantic,
) -> io::Result<()> {
    let task_dir = data_dir.join(task.as_str());
    fs::create_dir_all(&task_dir)?;

    let mut examples = Vec::with_capacity(n_instances);
    for i in 0..n_instances {
        let sentence = format!("Synthetic event number {i} took place as described.");
        let question = synthetic_question(task, &sentence);
        let gold = label(&question);
        // Emit the full question as the input so conversion keeps it verbatim.
        examples.push(json!({
            "input": question,
            "target": gold.as_str(),
        }));
    }
    let source = json!({ "examples": examples });
    fs::write(
        task_dir.join("source.json"),
        serde_json::to_string_pretty(&source)?,
    )?;

    fs::write(task_dir.join("fewshot_cot.txt"), synthetic_fewshot_cot(task))?;
    fs::write(
        task_dir.join("fewshot_nocot.txt"),
        synthetic_fewshot_nocot(task),
    )?;
    Ok(())
}

/// The question text the converted corpus will contain for a synthetic
/// sentence. Matches the conversion rules in `convert.rs`: inputs that
/// already start with the task's question prefix pass through verbatim.
pub fn synthetic_question(task: TaskName, sentence: &str) -> String {
    match task {
        TaskName::Anachronisms => format!(
            "Does the following sentence contain anachronistic elements?\n\"{sentence}\""
        ),
        TaskName::LogicalDeduction => format!(
            "Objects are arranged in a fixed order.\nGiven this description, is the following statement plausible?\n\"{sentence}\""
        ),
        TaskName::SocialChemistry => {
            format!("Is the following action appropriate?\n\"{sentence}\"")
        }
        TaskName::SportsUnderstanding => {
            format!("Is the following sentence plausible?\n\"{sentence}\"")
        }
    }
}

fn demo_question(task: TaskName, sentence: &str) -> String {
    synthetic_question(task, sentence)
}

fn synthetic_fewshot_cot(task: TaskName) -> String {
    let (yes_text, no_text) = task.option_texts();
    let mut out = String::new();
    for (i, (sentence, answer_yes, reasoning)) in [
        (
            "Synthetic demonstration alpha holds.",
            true,
            "The description is consistent with the stated facts.",
        ),
        (
            "Synthetic demonstration beta holds.",
            false,
            "The description conflicts with the stated facts.",
        ),
        (
            "Synthetic demonstration gamma holds.",
            true,
            "Each element of the claim checks out.",
        ),
        (
            "Synthetic demonstration delta holds.",
            false,
            "One element of the claim cannot be right.",
        ),
    ]
    .iter()
    .enumerate()
    {
        // Demonstrations pin their own A/B order: yes in slot A on even demos.
        let (a_text, b_text, letter) = if i % 2 == 0 {
            (yes_text, no_text, if *answer_yes { 'A' } else { 'B' })
        } else {
            (no_text, yes_text, if *answer_yes { 'B' } else { 'A' })
        };
        out.push_str(&format!(
            "Q: {question}\n\nAnswer choices:\n(A) {a_text}\n(B) {b_text}\n\n\
             A: Let's think step by step: {reasoning} So, the best answer is: ({letter}).\n\n",
            question = demo_question(task, sentence),
        ));
    }
    out
}

fn synthetic_fewshot_nocot(task: TaskName) -> String {
    let (yes_text, no_text) = task.option_texts();
    let mut out = String::new();
    for (i, (sentence, answer_yes)) in [
        ("Synthetic demonstration alpha holds.", true),
        ("Synthetic demonstration beta holds.", false),
        ("Synthetic demonstration gamma holds.", true),
        ("Synthetic demonstration delta holds.", false),
    ]
    .iter()
    .enumerate()
    {
        let (a_text, b_text, letter) = if i % 2 == 0 {
            (yes_text, no_text, if *answer_yes { 'A' } else { 'B' })
        } else {
            (no_text, yes_text, if *answer_yes { 'B' } else { 'A' })
        };
        out.push_str(&format!(
            "Q: {question}\n\nAnswer choices:\n(A) {a_text}\n(B) {b_text}\n\n\
             A: The best answer is: ({letter}).\n\n",
            question = demo_question(task, sentence),
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::load_task;

    #[test]
    fn synthetic_dir_loads_and_labels_align() {
        let dir = tempfile::tempdir().unwrap();
        let label = |q: &str| {
            if q.len() % 2 == 0 {
                Semantic::Yes
            } else {
                Semantic::No
            }
        };
        write_synthetic_task_dir(dir.path(), TaskName::SportsUnderstanding, 60, label).unwrap();
        let ds = load_task(dir.path(), TaskName::SportsUnderstanding, 0).unwrap();
        assert!(!ds.train.is_empty());
        for inst in ds.train.iter().chain(ds.test.iter()) {
            assert_eq!(inst.gold_answer, label(&inst.question_text));
        }
        assert!(ds.metadata.truncated);
    }
}
