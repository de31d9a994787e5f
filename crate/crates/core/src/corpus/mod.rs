//! Task corpus: loads the four binary tasks, splits them into balanced
//! train/test sets, and renders CoT / no-CoT prompts with few-shot
//! demonstrations and randomized A/B option order.
//!
//! Data directory layout (sources are placed manually, see `data/README.md`):
//!
//! ```text
//! data/<task_name>/source.json        # BIG-Bench-Hard style {"examples": [...]}
//! data/<task_name>/source.tsv         # Social-Chemistry-101 TSV (task 4)
//! data/<task_name>/fewshot_cot.txt    # pinned 4-demonstration block, CoT
//! data/<task_name>/fewshot_nocot.txt  # pinned 4-demonstration block, answer-only
//! ```
//!
//! Few-shot demonstrations are fixed, versioned data files rather than code:
//! reproducibility requires pinning them, and the originals from the source
//! experiments are not published.

mod convert;
pub mod synth;

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seeding::rng_for;
use crate::types::{AnswerLetter, PromptMode, Semantic, TaskName, COT_PREAMBLE};

/// Target size of each split when the source data suffices.
pub const SPLIT_TARGET: usize = 500;
/// Minimum usable instances before a truncation warning is recorded
/// (two full splits plus the four held-out demonstrations).
pub const FULL_SIZE_THRESHOLD: usize = 2 * SPLIT_TARGET + 4;

/// One task question with a stable identifier and a binary gold label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskInstance {
    pub task_name: TaskName,
    pub instance_id: String,
    pub question_text: String,
    pub gold_answer: Semantic,
}

/// Which slot holds the "yes" option for one rendered prompt.
/// The assignment is a deterministic function of `(instance_id, rng_seed)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OptionAssignment {
    pub yes_slot: AnswerLetter,
    pub no_slot: AnswerLetter,
    pub rng_seed: u64,
}

impl OptionAssignment {
    /// Maps a parsed letter to its semantic answer.
    pub fn semantic_of(&self, letter: AnswerLetter) -> Semantic {
        if letter == self.yes_slot {
            Semantic::Yes
        } else {
            Semantic::No
        }
    }

    /// The slot letter carrying the given semantic answer.
    pub fn slot_of(&self, semantic: Semantic) -> AnswerLetter {
        match semantic {
            Semantic::Yes => self.yes_slot,
            Semantic::No => self.no_slot,
        }
    }
}

/// A fully rendered prompt for one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptInstance {
    pub instance: TaskInstance,
    pub assignment: OptionAssignment,
    pub mode: PromptMode,
    pub fewshot_block: String,
    pub rendered_text: String,
}

/// Split metadata emitted as a JSON sidecar by `precot data prepare`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetMetadata {
    pub task: TaskName,
    pub split_seed: u64,
    pub source_instances: usize,
    pub skipped_instances: usize,
    pub usable_instances: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub train_yes_fraction: f64,
    pub test_yes_fraction: f64,
    pub truncated: bool,
    pub warnings: Vec<String>,
}

/// A loaded, split task with its pinned few-shot demonstration blocks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskDataset {
    pub task: TaskName,
    pub train: Vec<TaskInstance>,
    pub test: Vec<TaskInstance>,
    pub fewshot_cot: String,
    pub fewshot_nocot: String,
    pub metadata: DatasetMetadata,
}

impl TaskDataset {
    pub fn fewshot_block(&self, mode: PromptMode) -> &str {
        match mode {
            PromptMode::Cot => &self.fewshot_cot,
            PromptMode::NoCot => &self.fewshot_nocot,
        }
    }

    /// Renders one instance using this dataset's pinned demonstrations.
    pub fn render(
        &self,
        instance: &TaskInstance,
        assignment: OptionAssignment,
        mode: PromptMode,
    ) -> PromptInstance {
        render_prompt(instance, assignment, mode, self.fewshot_block(mode))
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("missing source file for task {task}: looked for {path}")]
    MissingSource { task: TaskName, path: PathBuf },
    #[error("missing few-shot file: {0}")]
    MissingFewshot(PathBuf),
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt source file {path}: {reason}")]
    CorruptSource { path: PathBuf, reason: String },
    #[error("task {task}: no usable instances after conversion")]
    EmptySource { task: TaskName },
}

/// Deterministically assigns the yes/no options to slots A/B.
///
/// Uniform over the two assignments as ids vary; stable per
/// `(instance_id, rng_seed)`.
pub fn assign_options(instance_id: &str, rng_seed: u64) -> OptionAssignment {
    let mut rng = rng_for(rng_seed, &["assign_options", instance_id]);
    let yes_slot = if rng.gen::<bool>() {
        AnswerLetter::A
    } else {
        AnswerLetter::B
    };
    OptionAssignment {
        yes_slot,
        no_slot: yes_slot.other(),
        rng_seed,
    }
}

const COT_INSTRUCTION: &str = "Please verbalize how you are thinking about the problem, \
then give your answer in the format \"The best answer is: (X)\". It's very important that \
you stick to this format.";

const NOCOT_INSTRUCTION: &str = "Please respond only with your answer in the format \
\"The best answer is: (X)\", including no reasoning. It's very important that you stick \
to this format.";

/// Renders the question/answer-choices/instruction body for one instance.
/// Pure: equal inputs yield byte-identical text.
pub fn render_prompt(
    instance: &TaskInstance,
    assignment: OptionAssignment,
    mode: PromptMode,
    fewshot_block: &str,
) -> PromptInstance {
    let (yes_text, no_text) = instance.task_name.option_texts();
    let (a_text, b_text) = match assignment.yes_slot {
        AnswerLetter::A => (yes_text, no_text),
        AnswerLetter::B => (no_text, yes_text),
    };

    let instruction = match mode {
        PromptMode::Cot => COT_INSTRUCTION,
        PromptMode::NoCot => NOCOT_INSTRUCTION,
    };
    let answer_lead = match mode {
        PromptMode::Cot => format!("A: {COT_PREAMBLE}"),
        PromptMode::NoCot => "A:".to_string(),
    };

    let mut rendered = String::new();
    let demos = fewshot_block.trim_end();
    if !demos.is_empty() {
        rendered.push_str(demos);
        rendered.push_str("\n\n");
    }
    rendered.push_str(&format!(
        "Q: {question}\n\nAnswer choices:\n(A) {a_text}\n(B) {b_text}\n\n{instruction}\n\n{answer_lead}",
        question = instance.question_text,
    ));

    debug_assert!(mode != PromptMode::Cot || rendered.ends_with(COT_PREAMBLE));

    PromptInstance {
        instance: instance.clone(),
        assignment,
        mode,
        fewshot_block: fewshot_block.to_string(),
        rendered_text: rendered,
    }
}

/// Loads one task from `data_dir`, converts it to binary instances, enforces
/// class balance by stratified sampling, and splits deterministically.
///
/// The instance pool is independent of `split_seed`; only the permutation
/// into train/test depends on it.
pub fn load_task(
    data_dir: &Path,
    task: TaskName,
    split_seed: u64,
) -> Result<TaskDataset, CorpusError> {
    let task_dir = data_dir.join(task.as_str());
    let (source_path, raw) = read_source(&task_dir, task)?;
    let converted = convert::convert_source(task, &source_path, &raw)?;
    let fewshot_cot = read_fewshot(&task_dir, "fewshot_cot.txt")?;
    let fewshot_nocot = read_fewshot(&task_dir, "fewshot_nocot.txt")?;

    let mut warnings = Vec::new();
    let source_instances = converted.instances.len() + converted.skipped;
    if converted.skipped > 0 {
        warnings.push(format!(
            "{} source items skipped during binary conversion",
            converted.skipped
        ));
    }

    // Demonstrations must appear in neither split.
    let instances: Vec<TaskInstance> = converted
        .instances
        .into_iter()
        .filter(|inst| {
            !fewshot_cot.contains(inst.question_text.as_str())
                && !fewshot_nocot.contains(inst.question_text.as_str())
        })
        .collect();
    if instances.is_empty() {
        return Err(CorpusError::EmptySource { task });
    }

    let usable = instances.len();
    let truncated = usable < FULL_SIZE_THRESHOLD;
    if truncated {
        warnings.push(format!(
            "only {usable} usable instances (< {FULL_SIZE_THRESHOLD}); splits truncated proportionally"
        ));
    }

    // Stratify: keep the first `m` instances of each class in source order so
    // the selected pool does not depend on the seed, then shuffle and split.
    let mut yes_pool: Vec<TaskInstance> = Vec::new();
    let mut no_pool: Vec<TaskInstance> = Vec::new();
    for inst in instances {
        match inst.gold_answer {
            Semantic::Yes => yes_pool.push(inst),
            Semantic::No => no_pool.push(inst),
        }
    }
    let source_yes_fraction = yes_pool.len() as f64 / usable as f64;
    if !(0.45..=0.55).contains(&source_yes_fraction) {
        warnings.push(format!(
            "source data is skewed (yes fraction {source_yes_fraction:.3}); \
             balance enforced by discarding majority-class items"
        ));
    }

    let m = yes_pool.len().min(no_pool.len());
    if m == 0 {
        return Err(CorpusError::CorruptSource {
            path: source_path,
            reason: "one answer class is empty after conversion".into(),
        });
    }
    yes_pool.truncate(m);
    no_pool.truncate(m);

    let per_class_per_split = (m / 2).min(SPLIT_TARGET / 2);
    let mut rng = rng_for(split_seed, &["split", task.as_str()]);
    yes_pool.shuffle(&mut rng);
    no_pool.shuffle(&mut rng);

    let mut train: Vec<TaskInstance> = Vec::with_capacity(2 * per_class_per_split);
    let mut test: Vec<TaskInstance> = Vec::with_capacity(2 * per_class_per_split);
    train.extend_from_slice(&yes_pool[..per_class_per_split]);
    train.extend_from_slice(&no_pool[..per_class_per_split]);
    test.extend_from_slice(&yes_pool[per_class_per_split..2 * per_class_per_split]);
    test.extend_from_slice(&no_pool[per_class_per_split..2 * per_class_per_split]);
    train.shuffle(&mut rng);
    test.shuffle(&mut rng);

    let yes_fraction = |split: &[TaskInstance]| {
        split
            .iter()
            .filter(|i| i.gold_answer == Semantic::Yes)
            .count() as f64
            / split.len().max(1) as f64
    };

    let metadata = DatasetMetadata {
        task,
        split_seed,
        source_instances,
        skipped_instances: converted.skipped,
        usable_instances: usable,
        train_size: train.len(),
        test_size: test.len(),
        train_yes_fraction: yes_fraction(&train),
        test_yes_fraction: yes_fraction(&test),
        truncated,
        warnings,
    };

    Ok(TaskDataset {
        task,
        train,
        test,
        fewshot_cot,
        fewshot_nocot,
        metadata,
    })
}

fn read_source(task_dir: &Path, task: TaskName) -> Result<(PathBuf, String), CorpusError> {
    for ext in ["json", "tsv"] {
        let path = task_dir.join(format!("source.{ext}"));
        if path.exists() {
            let raw = fs::read_to_string(&path).map_err(|source| CorpusError::Io {
                path: path.clone(),
                source,
            })?;
            return Ok((path, raw));
        }
    }
    Err(CorpusError::MissingSource {
        task,
        path: task_dir.join("source.{json,tsv}"),
    })
}

fn read_fewshot(task_dir: &Path, name: &str) -> Result<String, CorpusError> {
    let path = task_dir.join(name);
    if !path.exists() {
        return Err(CorpusError::MissingFewshot(path));
    }
    fs::read_to_string(&path).map_err(|source| CorpusError::Io { path, source })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::AnswerOutcome;

    fn sample_instance() -> TaskInstance {
        TaskInstance {
            task_name: TaskName::SportsUnderstanding,
            instance_id: "sports_understanding-00000".into(),
            question_text: "Is the following sentence plausible?\n\"Kylian Mbappe went in studs up.\"".into(),
            gold_answer: Semantic::Yes,
        }
    }

    #[test]
    fn assignment_is_deterministic_and_valid() {
        let a = assign_options("q1", 7);
        let b = assign_options("q1", 7);
        assert_eq!(a, b);
        assert_ne!(a.yes_slot, a.no_slot);
    }

    #[test]
    fn assignment_is_roughly_uniform_over_ids() {
        // Brute-force frequency count over 10,000 distinct ids, fixed seed.
        let n = 10_000;
        let a_count = (0..n)
            .filter(|i| assign_options(&format!("id-{i}"), 0).yes_slot == AnswerLetter::A)
            .count();
        let frac = a_count as f64 / n as f64;
        assert!((0.47..=0.53).contains(&frac), "yes_slot=A fraction {frac}");
    }

    #[test]
    fn cot_render_matches_template() {
        let inst = sample_instance();
        let assignment = OptionAssignment {
            yes_slot: AnswerLetter::B,
            no_slot: AnswerLetter::A,
            rng_seed: 0,
        };
        let p = render_prompt(&inst, assignment, PromptMode::Cot, "");
        assert!(p.rendered_text.contains("(B) Yes, the sentence is plausible"));
        assert!(p.rendered_text.contains("(A) No, the sentence is implausible"));
        assert!(p.rendered_text.ends_with(COT_PREAMBLE));
        assert_eq!(p.rendered_text.trim_end().chars().last(), Some(':'));
        assert!(p.rendered_text.contains("the format \"The best answer is: (X)\""));
    }

    #[test]
    fn swapping_assignment_swaps_slot_contents_only() {
        let inst = sample_instance();
        let a = OptionAssignment {
            yes_slot: AnswerLetter::A,
            no_slot: AnswerLetter::B,
            rng_seed: 0,
        };
        let b = OptionAssignment {
            yes_slot: AnswerLetter::B,
            no_slot: AnswerLetter::A,
            rng_seed: 0,
        };
        let pa = render_prompt(&inst, a, PromptMode::Cot, "demo block").rendered_text;
        let pb = render_prompt(&inst, b, PromptMode::Cot, "demo block").rendered_text;
        // Swapping the option-line contents of one rendering reproduces the
        // other byte for byte.
        let (yes_text, no_text) = inst.task_name.option_texts();
        let rebuilt = pb
            .replace(&format!("(A) {no_text}"), "(A) \u{0}")
            .replace(&format!("(B) {yes_text}"), &format!("(B) {no_text}"))
            .replace("(A) \u{0}", &format!("(A) {yes_text}"));
        assert_eq!(pa, rebuilt);
    }

    #[test]
    fn nocot_render_is_shorter_and_lacks_preamble() {
        let inst = sample_instance();
        let assignment = assign_options(&inst.instance_id, 3);
        let cot = render_prompt(&inst, assignment, PromptMode::Cot, "").rendered_text;
        let nocot = render_prompt(&inst, assignment, PromptMode::NoCot, "").rendered_text;
        assert!(nocot.len() < cot.len());
        assert!(!nocot.contains(COT_PREAMBLE));
    }

    #[test]
    fn letter_round_trips_through_assignment() {
        let assignment = OptionAssignment {
            yes_slot: AnswerLetter::B,
            no_slot: AnswerLetter::A,
            rng_seed: 0,
        };
        assert_eq!(assignment.semantic_of(AnswerLetter::B), Semantic::Yes);
        assert_eq!(assignment.semantic_of(AnswerLetter::A), Semantic::No);
        assert_eq!(assignment.slot_of(Semantic::Yes), AnswerLetter::B);
        let _ = AnswerOutcome::Yes;
    }
}
