//! LLM-as-judge classification of steered reasoning traces.
//!
//! A verdict is two booleans — does the trace state any false premises, and
//! does the conclusion follow from the stated premises — which map onto four
//! labels:
//!
//! | premises \ conclusion | follows       | does not follow |
//! |-----------------------|---------------|-----------------|
//! | all true              | sound         | non-entailment  |
//! | >= 1 false            | confabulation | hallucination   |
//!
//! The judge returns a strict JSON object; schema-invalid output gets one
//! retry and is then recorded as unclassifiable with the raw output
//! preserved. Sampling rules: per steering setting, classify min(50, n)
//! flipped generations and skip settings with fewer than 20.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm_client::{ChatClient, ChatRequest, ClientError};
use crate::seeding::rng_for;
use crate::steering::{DirectionKind, FlipRecord};
use crate::types::Semantic;

const JUDGE_PROMPT_TEMPLATE: &str = include_str!("../assets/judge_prompt.txt");

/// The judge's two findings plus its explanations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeVerdict {
    pub false_premises: bool,
    pub premises_explanation: String,
    pub conclusion_follows: bool,
    pub entailment_explanation: String,
}

/// Four-way trace label, a pure function of the two verdict booleans.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceLabel {
    Sound,
    NonEntailment,
    Confabulation,
    Hallucination,
}

impl TraceLabel {
    pub const ALL: [TraceLabel; 4] = [
        TraceLabel::Sound,
        TraceLabel::NonEntailment,
        TraceLabel::Confabulation,
        TraceLabel::Hallucination,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TraceLabel::Sound => "sound",
            TraceLabel::NonEntailment => "non_entailment",
            TraceLabel::Confabulation => "confabulation",
            TraceLabel::Hallucination => "hallucination",
        }
    }
}

impl std::fmt::Display for TraceLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Exhaustive mapping from verdict booleans to the trace label.
pub fn verdict_to_label(verdict: &JudgeVerdict) -> TraceLabel {
    match (verdict.false_premises, verdict.conclusion_follows) {
        (false, true) => TraceLabel::Sound,
        (false, false) => TraceLabel::NonEntailment,
        (true, true) => TraceLabel::Confabulation,
        (true, false) => TraceLabel::Hallucination,
    }
}

/// The booleans a label corresponds to, `(false_premises, conclusion_follows)`.
pub fn label_to_booleans(label: TraceLabel) -> (bool, bool) {
    match label {
        TraceLabel::Sound => (false, true),
        TraceLabel::NonEntailment => (false, false),
        TraceLabel::Confabulation => (true, true),
        TraceLabel::Hallucination => (true, false),
    }
}

#[derive(Debug, Error)]
pub enum JudgeError {
    #[error("judge output failed schema validation; raw output preserved")]
    Unclassifiable { raw: String },
    #[error("judge call failed: {0}")]
    Client(#[from] ClientError),
    #[error("audit: run 2 contains keys absent from run 1: {orphans:?}")]
    AuditOrphans { orphans: Vec<String> },
    #[error("audit: no paired records")]
    EmptyAudit,
}

/// One judge call over the four pieces of context. The response must be the
/// strict JSON schema; one retry is attempted before giving up.
pub fn classify_trace(
    client: &dyn ChatClient,
    question: &str,
    correct_answer: Semantic,
    model_answer: Semantic,
    full_response: &str,
) -> Result<JudgeVerdict, JudgeError> {
    if full_response.trim().is_empty() {
        return Err(JudgeError::Unclassifiable { raw: String::new() });
    }
    let prompt = JUDGE_PROMPT_TEMPLATE
        .replace("{question}", question)
        .replace("{correct_answer}", correct_answer.as_str())
        .replace("{model_answer}", model_answer.as_str())
        .replace("{full_response}", full_response);
    let request = ChatRequest {
        system: None,
        user: prompt,
        temperature: None,
        max_tokens: None,
    };

    let mut last_raw = String::new();
    for _ in 0..2 {
        let raw = client.complete(&request)?;
        match parse_verdict(&raw) {
            Some(verdict) => return Ok(verdict),
            None => last_raw = raw,
        }
    }
    Err(JudgeError::Unclassifiable { raw: last_raw })
}

/// Accepts the JSON object anywhere in the response (providers sometimes wrap
/// it in prose or code fences).
fn parse_verdict(raw: &str) -> Option<JudgeVerdict> {
    let start = raw.find('{')?;
    let end = raw.rfind('}')?;
    if end <= start {
        return None;
    }
    serde_json::from_str(&raw[start..=end]).ok()
}

/// A steering setting: the grouping key for judge sampling.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SettingKey {
    pub backend: String,
    pub task: String,
    pub direction_kind: DirectionKind,
    /// Formatted with one decimal so keys are totally ordered and stable.
    pub alpha_key: String,
}

impl SettingKey {
    pub fn id(&self) -> String {
        format!(
            "{}/{}/{}/{}",
            self.backend,
            self.task,
            self.direction_kind.as_str(),
            self.alpha_key
        )
    }
}

/// Groups probe-direction flip records (the generations steering pushed to
/// an incorrect answer) by setting. Orthogonal-baseline records are not
/// classified.
pub fn group_flips_for_judging(
    backend_name: &str,
    records: &[FlipRecord],
) -> BTreeMap<SettingKey, Vec<FlipRecord>> {
    let mut groups: BTreeMap<SettingKey, Vec<FlipRecord>> = BTreeMap::new();
    for record in records {
        if !record.flipped || record.direction_kind == DirectionKind::Orthogonal {
            continue;
        }
        let key = SettingKey {
            backend: backend_name.to_string(),
            task: record.task.to_string(),
            direction_kind: record.direction_kind,
            alpha_key: format!("{:+.1}", record.alpha),
        };
        groups.entry(key).or_default().push(record.clone());
    }
    groups
}

/// Applies the published sampling rules: per setting, uniformly sample
/// min(50, n); settings with n < 20 are excluded entirely (zero judge calls).
pub fn select_for_classification(
    groups: &BTreeMap<SettingKey, Vec<FlipRecord>>,
    seed: u64,
) -> BTreeMap<SettingKey, Vec<FlipRecord>> {
    const MIN_N: usize = 20;
    const CAP: usize = 50;
    let mut selected = BTreeMap::new();
    for (key, records) in groups {
        if records.len() < MIN_N {
            continue;
        }
        let mut indices: Vec<usize> = (0..records.len()).collect();
        indices.shuffle(&mut rng_for(seed, &["judge-sample", &key.id()]));
        indices.truncate(CAP);
        indices.sort_unstable();
        selected.insert(key.clone(), indices.iter().map(|&i| records[i].clone()).collect());
    }
    selected
}

/// Agreement report between an original classification run and a
/// re-classification of a subset of its inputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditReport {
    pub n_paired: usize,
    /// Fraction of run-1 labels unchanged in run 2.
    pub label_agreement: f64,
    /// Agreement per label, conditioned on the run-2 label. Absent labels
    /// map to `None`.
    pub per_label_agreement: BTreeMap<TraceLabel, Option<f64>>,
    pub premises_agreement: f64,
    pub entailment_agreement: f64,
    /// Rows are run-1 labels, columns run-2, in `TraceLabel::ALL` order.
    pub label_confusion: [[usize; 4]; 4],
    /// Rows run-1, columns run-2; index 0 = false, 1 = true.
    pub premises_confusion: [[usize; 2]; 2],
    pub entailment_confusion: [[usize; 2]; 2],
}

impl AuditReport {
    /// Renders the three confusion tables in the published layout.
    pub fn format_tables(&self) -> String {
        let mut out = String::new();
        out.push_str("False premises (run 1 rows / run 2 cols):\n");
        out.push_str("          False   True\n");
        for (i, name) in ["False", "True"].iter().enumerate() {
            out.push_str(&format!(
                "{name:>8} {:>6} {:>6}\n",
                self.premises_confusion[i][0], self.premises_confusion[i][1]
            ));
        }
        out.push_str("\nConclusion follows (run 1 rows / run 2 cols):\n");
        out.push_str("          False   True\n");
        for (i, name) in ["False", "True"].iter().enumerate() {
            out.push_str(&format!(
                "{name:>8} {:>6} {:>6}\n",
                self.entailment_confusion[i][0], self.entailment_confusion[i][1]
            ));
        }
        out.push_str("\nFinal labels (run 1 rows / run 2 cols):\n");
        out.push_str("                 Sound  NonEnt  Confab  Halluc\n");
        for (i, label) in TraceLabel::ALL.iter().enumerate() {
            out.push_str(&format!(
                "{:>16} {:>6} {:>7} {:>7} {:>7}\n",
                label.as_str(),
                self.label_confusion[i][0],
                self.label_confusion[i][1],
                self.label_confusion[i][2],
                self.label_confusion[i][3]
            ));
        }
        out.push_str(&format!(
            "\nAgreement: all labels {:.1}%",
            self.label_agreement * 100.0
        ));
        for label in TraceLabel::ALL {
            if let Some(Some(a)) = self.per_label_agreement.get(&label) {
                out.push_str(&format!(", {} {:.1}%", label.as_str(), a * 100.0));
            }
        }
        out.push_str(&format!(
            "; false premises {:.1}%; entailed conclusion {:.1}%\n",
            self.premises_agreement * 100.0,
            self.entailment_agreement * 100.0
        ));
        out
    }
}

fn label_index(label: TraceLabel) -> usize {
    TraceLabel::ALL
        .iter()
        .position(|l| *l == label)
        .expect("label in ALL")
}

/// Compares a re-classification run against the original. `run2` must be a
/// subset of `run1` by key; anything else is an audit error listing orphans.
pub fn consistency_audit(
    run1: &[(String, JudgeVerdict)],
    run2: &[(String, JudgeVerdict)],
) -> Result<AuditReport, JudgeError> {
    let run1_map: BTreeMap<&str, &JudgeVerdict> =
        run1.iter().map(|(k, v)| (k.as_str(), v)).collect();
    let orphans: Vec<String> = run2
        .iter()
        .filter(|(k, _)| !run1_map.contains_key(k.as_str()))
        .map(|(k, _)| k.clone())
        .collect();
    if !orphans.is_empty() {
        return Err(JudgeError::AuditOrphans { orphans });
    }
    let run2_keys: BTreeSet<&str> = run2.iter().map(|(k, _)| k.as_str()).collect();
    if run2_keys.len() != run2.len() {
        return Err(JudgeError::AuditOrphans {
            orphans: vec!["duplicate keys in run 2".into()],
        });
    }
    if run2.is_empty() {
        return Err(JudgeError::EmptyAudit);
    }

    let mut label_confusion = [[0usize; 4]; 4];
    let mut premises_confusion = [[0usize; 2]; 2];
    let mut entailment_confusion = [[0usize; 2]; 2];

    for (key, v2) in run2 {
        let v1 = run1_map[key.as_str()];
        let (l1, l2) = (verdict_to_label(v1), verdict_to_label(v2));
        label_confusion[label_index(l1)][label_index(l2)] += 1;
        premises_confusion[v1.false_premises as usize][v2.false_premises as usize] += 1;
        entailment_confusion[v1.conclusion_follows as usize][v2.conclusion_follows as usize] += 1;
    }

    let n = run2.len() as f64;
    let label_agreement = (0..4).map(|i| label_confusion[i][i]).sum::<usize>() as f64 / n;
    let premises_agreement =
        (premises_confusion[0][0] + premises_confusion[1][1]) as f64 / n;
    let entailment_agreement =
        (entailment_confusion[0][0] + entailment_confusion[1][1]) as f64 / n;

    let mut per_label_agreement = BTreeMap::new();
    for (col, label) in TraceLabel::ALL.iter().enumerate() {
        let col_total: usize = (0..4).map(|row| label_confusion[row][col]).sum();
        let value = (col_total > 0).then(|| label_confusion[col][col] as f64 / col_total as f64);
        per_label_agreement.insert(*label, value);
    }

    Ok(AuditReport {
        n_paired: run2.len(),
        label_agreement,
        per_label_agreement,
        premises_agreement,
        entailment_agreement,
        label_confusion,
        premises_confusion,
        entailment_confusion,
    })
}

/// Builds verdict pairs realizing a 4x4 label confusion matrix (rows run 1,
/// columns run 2, `TraceLabel::ALL` order). Used to replay published
/// consistency tables through the audit.
pub fn verdict_pairs_from_label_matrix(
    matrix: &[[usize; 4]; 4],
) -> (Vec<(String, JudgeVerdict)>, Vec<(String, JudgeVerdict)>) {
    let verdict_of = |label: TraceLabel| {
        let (false_premises, conclusion_follows) = label_to_booleans(label);
        JudgeVerdict {
            false_premises,
            premises_explanation: String::new(),
            conclusion_follows,
            entailment_explanation: String::new(),
        }
    };
    let mut run1 = Vec::new();
    let mut run2 = Vec::new();
    let mut counter = 0usize;
    for (i, row) in matrix.iter().enumerate() {
        for (j, &count) in row.iter().enumerate() {
            for _ in 0..count {
                let key = format!("trace-{counter:04}");
                counter += 1;
                run1.push((key.clone(), verdict_of(TraceLabel::ALL[i])));
                run2.push((key, verdict_of(TraceLabel::ALL[j])));
            }
        }
    }
    (run1, run2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm_client::scripted::ScriptedClient;

    fn verdict(false_premises: bool, follows: bool) -> JudgeVerdict {
        JudgeVerdict {
            false_premises,
            premises_explanation: "p".into(),
            conclusion_follows: follows,
            entailment_explanation: "e".into(),
        }
    }

    #[test]
    fn label_mapping_is_exhaustive_and_matches_framework() {
        // (premises all true, follows) -> sound reasoning
        assert_eq!(verdict_to_label(&verdict(false, true)), TraceLabel::Sound);
        // model ignores correct reasoning for steered answer
        assert_eq!(
            verdict_to_label(&verdict(false, false)),
            TraceLabel::NonEntailment
        );
        // model fabricates facts to support steered answer
        assert_eq!(
            verdict_to_label(&verdict(true, true)),
            TraceLabel::Confabulation
        );
        // incoherent reasoning
        assert_eq!(
            verdict_to_label(&verdict(true, false)),
            TraceLabel::Hallucination
        );
        // round trip through label_to_booleans
        for label in TraceLabel::ALL {
            let (p, f) = label_to_booleans(label);
            assert_eq!(verdict_to_label(&verdict(p, f)), label);
        }
    }

    #[test]
    fn classify_parses_strict_schema() {
        let client = ScriptedClient::new().respond(
            r#"{"false_premises": true, "premises_explanation": "claims Messi plays basketball",
                "conclusion_follows": true, "entailment_explanation": "conclusion matches premises"}"#,
        );
        let v = classify_trace(
            &client,
            "Is the following sentence plausible? \"Lionel Messi shot a free throw.\"",
            Semantic::No,
            Semantic::Yes,
            "Lionel Messi is a basketball player... plausible. The best answer is: (A)",
        )
        .unwrap();
        assert_eq!(verdict_to_label(&v), TraceLabel::Confabulation);
        assert_eq!(client.seen(), 1);
    }

    #[test]
    fn schema_invalid_output_gets_one_retry() {
        let client = ScriptedClient::new()
            .respond("I think the premises are wrong.")
            .respond(
                r#"{"false_premises": false, "premises_explanation": "all premises accurate",
                    "conclusion_follows": false, "entailment_explanation": "non sequitur"}"#,
            );
        let v = classify_trace(&client, "q", Semantic::Yes, Semantic::No, "trace").unwrap();
        assert_eq!(verdict_to_label(&v), TraceLabel::NonEntailment);
        assert_eq!(client.seen(), 2);

        let client = ScriptedClient::new()
            .respond("not json")
            .respond("also not json");
        let err = classify_trace(&client, "q", Semantic::Yes, Semantic::No, "trace").unwrap_err();
        match err {
            JudgeError::Unclassifiable { raw } => assert_eq!(raw, "also not json"),
            other => panic!("unexpected: {other}"),
        }
        assert_eq!(client.seen(), 2);
    }

    #[test]
    fn empty_trace_is_unclassifiable_without_judge_calls() {
        let client = ScriptedClient::new();
        let err = classify_trace(&client, "q", Semantic::Yes, Semantic::No, "  ").unwrap_err();
        assert!(matches!(err, JudgeError::Unclassifiable { .. }));
        assert_eq!(client.seen(), 0);
    }

    #[test]
    fn judge_accepts_fenced_json() {
        let client = ScriptedClient::new().respond(
            "```json\n{\"false_premises\": false, \"premises_explanation\": \"ok\", \
             \"conclusion_follows\": true, \"entailment_explanation\": \"ok\"}\n```",
        );
        let v = classify_trace(&client, "q", Semantic::Yes, Semantic::No, "trace").unwrap();
        assert_eq!(verdict_to_label(&v), TraceLabel::Sound);
    }

    fn flip(i: usize, flipped: bool, alpha: f64) -> FlipRecord {
        FlipRecord {
            instance_id: format!("sports_understanding-{i:05}"),
            task: crate::types::TaskName::SportsUnderstanding,
            direction_kind: DirectionKind::ProbeYes,
            alpha,
            original_answer: Semantic::No,
            steered_answer: crate::types::AnswerOutcome::Yes,
            flipped,
            question_text: "q".into(),
            gold: Semantic::No,
            completion: "text".into(),
            decode_seed: i as u64,
        }
    }

    #[test]
    fn sampling_rules_match_published_procedure() {
        let mut groups = BTreeMap::new();
        let key = |alpha: f64| SettingKey {
            backend: "planted".into(),
            task: "sports_understanding".into(),
            direction_kind: DirectionKind::ProbeYes,
            alpha_key: format!("{alpha:+.1}"),
        };
        groups.insert(key(2.0), (0..120).map(|i| flip(i, true, 2.0)).collect());
        groups.insert(key(4.0), (0..19).map(|i| flip(i, true, 4.0)).collect());
        groups.insert(key(6.0), (0..20).map(|i| flip(i, true, 6.0)).collect());

        let selected = select_for_classification(&groups, 3);
        assert_eq!(selected[&key(2.0)].len(), 50);
        assert!(!selected.contains_key(&key(4.0)), "n=19 is excluded");
        assert_eq!(selected[&key(6.0)].len(), 20);

        // deterministic per seed
        let again = select_for_classification(&groups, 3);
        assert_eq!(
            selected[&key(2.0)]
                .iter()
                .map(|r| r.instance_id.clone())
                .collect::<Vec<_>>(),
            again[&key(2.0)]
                .iter()
                .map(|r| r.instance_id.clone())
                .collect::<Vec<_>>()
        );
    }

    #[test]
    fn grouping_keeps_only_probe_direction_flips() {
        let mut records = vec![flip(0, true, 2.0), flip(1, false, 2.0)];
        let mut orth = flip(2, true, 2.0);
        orth.direction_kind = DirectionKind::Orthogonal;
        records.push(orth);
        let groups = group_flips_for_judging("planted", &records);
        let total: usize = groups.values().map(Vec::len).sum();
        assert_eq!(total, 1);
    }

    #[test]
    fn identical_runs_agree_everywhere() {
        let run: Vec<(String, JudgeVerdict)> = (0..10)
            .map(|i| {
                (
                    format!("k{i}"),
                    verdict(i % 2 == 0, i % 3 == 0),
                )
            })
            .collect();
        let report = consistency_audit(&run, &run).unwrap();
        assert_eq!(report.label_agreement, 1.0);
        assert_eq!(report.premises_agreement, 1.0);
        assert_eq!(report.entailment_agreement, 1.0);
    }

    /// The published consistency tables, replayed through the audit.
    #[test]
    fn published_consistency_tables_reproduce() {
        let matrix = [
            [2, 2, 1, 0],   // sound ->
            [0, 29, 0, 11], // non-entailment ->
            [0, 0, 34, 13], // confabulation ->
            [0, 4, 6, 98],  // hallucination ->
        ];
        let (run1, run2) = verdict_pairs_from_label_matrix(&matrix);
        assert_eq!(run1.len(), 200);
        let report = consistency_audit(&run1, &run2).unwrap();

        assert_eq!(report.premises_confusion, [[33, 12], [4, 151]]);
        assert_eq!(report.entailment_confusion, [[142, 6], [15, 37]]);
        assert_eq!(report.label_confusion, matrix);

        assert!((report.premises_agreement - 0.92).abs() < 1e-12);
        assert!((report.entailment_agreement - 0.895).abs() < 1e-12);
        assert!((report.label_agreement - 0.815).abs() < 1e-12);

        let pct = |label| {
            report.per_label_agreement[&label].map(|a| (a * 1000.0).round() / 10.0)
        };
        assert_eq!(pct(TraceLabel::Sound), Some(100.0));
        assert_eq!(pct(TraceLabel::NonEntailment), Some(82.9));
        assert_eq!(pct(TraceLabel::Confabulation), Some(82.9));
        assert_eq!(pct(TraceLabel::Hallucination), Some(80.3));
    }

    #[test]
    fn audit_rejects_orphans() {
        let run1 = vec![("a".to_string(), verdict(false, true))];
        let run2 = vec![("b".to_string(), verdict(false, true))];
        match consistency_audit(&run1, &run2).unwrap_err() {
            JudgeError::AuditOrphans { orphans } => assert_eq!(orphans, vec!["b".to_string()]),
            other => panic!("unexpected: {other}"),
        }
    }
}
