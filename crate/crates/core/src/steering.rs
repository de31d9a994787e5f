//! Steering sweeps: forced answer flips along the probe direction on
//! correct-answer subsets, and the per-example orthogonal norm-matched
//! baseline that separates targeted effects from generic perturbation damage.
//!
//! Sweeps run in ascending steering strength and terminate early once a
//! coefficient yields zero parsed generations (off-manifold degeneration
//! makes larger strengths pointless). Points with fewer than `min_parsed`
//! parsed generations are flagged for exclusion from plots but still
//! persisted.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{Backend, DecodeParams, SteeringSpec};
use crate::linalg;
use crate::parsing::{parse_answer_with, to_semantic, Strictness};
use crate::probe::Probe;
use crate::records::GenerationRecord;
use crate::seeding::{derive_seed, rng_for};
use crate::types::{AnswerOutcome, Semantic, TaskName};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionKind {
    /// `+w` applied to initially-no examples, pushing toward yes.
    ProbeYes,
    /// `−|alpha|·w` applied to initially-yes examples, pushing toward no.
    ProbeNo,
    /// Per-example random direction, orthogonal to `w` and norm-matched.
    Orthogonal,
}

impl DirectionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DirectionKind::ProbeYes => "probe_yes",
            DirectionKind::ProbeNo => "probe_no",
            DirectionKind::Orthogonal => "orthogonal",
        }
    }
}

/// Sweep parameters. The default grid matches the published sweeps:
/// `{0, 2, 4, ..., 20}` toward yes and `{0, -2, -4, ..., -20}` toward no.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepConfig {
    /// Nonnegative coefficients, applied on S_no (push toward yes).
    pub alphas_yes: Vec<f64>,
    /// Nonpositive coefficients, applied on S_yes (push toward no).
    pub alphas_no: Vec<f64>,
    /// Steering layer; must equal the probe's layer.
    pub layer: usize,
    /// Per-direction cap on subset size; `None` runs the full subset.
    pub subset_cap: Option<usize>,
    /// Number of examples in the orthogonal baseline.
    pub baseline_n: usize,
    /// Points with fewer parsed generations are flagged excluded-from-plots.
    pub min_parsed: usize,
    /// Resample the per-example orthogonal direction at each alpha instead
    /// of holding it fixed across the grid.
    pub resample_orthogonal_per_alpha: bool,
}

impl SweepConfig {
    pub fn with_layer(layer: usize) -> SweepConfig {
        SweepConfig {
            alphas_yes: (0..=10).map(|i| 2.0 * i as f64).collect(),
            alphas_no: (0..=10).map(|i| -2.0 * i as f64).collect(),
            layer,
            subset_cap: Some(50),
            baseline_n: 50,
            min_parsed: 20,
            resample_orthogonal_per_alpha: false,
        }
    }

    pub fn validate(&self) -> Result<(), SteeringError> {
        if !self.alphas_yes.contains(&0.0) || !self.alphas_no.contains(&0.0) {
            return Err(SteeringError::InvalidConfig(
                "both alpha grids must contain 0".into(),
            ));
        }
        if self.alphas_yes.iter().any(|&a| a < 0.0) {
            return Err(SteeringError::InvalidConfig(
                "alphas_yes must be nonnegative".into(),
            ));
        }
        if self.alphas_no.iter().any(|&a| a > 0.0) {
            return Err(SteeringError::InvalidConfig(
                "alphas_no must be nonpositive".into(),
            ));
        }
        Ok(())
    }
}

/// Flip statistics for one `(direction, alpha)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub direction_kind: DirectionKind,
    pub alpha: f64,
    pub n_total: usize,
    pub n_parsed: usize,
    pub n_flipped: usize,
    pub flip_rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub excluded_from_plots: bool,
}

/// One steered generation and whether it flipped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlipRecord {
    pub instance_id: String,
    pub task: TaskName,
    pub direction_kind: DirectionKind,
    pub alpha: f64,
    pub original_answer: Semantic,
    pub steered_answer: AnswerOutcome,
    pub flipped: bool,
    pub question_text: String,
    pub gold: Semantic,
    pub completion: String,
    pub decode_seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub points: Vec<SweepPoint>,
    pub flips: Vec<FlipRecord>,
}

#[derive(Debug, Error)]
pub enum SteeringError {
    #[error("subset for {0:?} is empty; sweep skipped")]
    EmptySubset(DirectionKind),
    #[error("cannot sample an orthogonal direction in dimension 1")]
    ImpossibleOrthogonal,
    #[error("cannot sample orthogonal to a zero vector")]
    ZeroDirection,
    #[error("Wilson interval undefined for n = 0")]
    UndefinedInterval,
    #[error("Wilson interval requires k <= n (got k={k}, n={n})")]
    InvalidCounts { k: usize, n: usize },
    #[error("probe layer {probe} does not match sweep layer {config}")]
    LayerMismatch { probe: usize, config: usize },
    #[error("invalid sweep config: {0}")]
    InvalidConfig(String),
}

/// 95% (by default, z = 1.96) Wilson score interval for `k` successes in
/// `n` trials, clipped to [0, 1].
pub fn wilson_ci(k: usize, n: usize, z: f64) -> Result<(f64, f64), SteeringError> {
    if n == 0 {
        return Err(SteeringError::UndefinedInterval);
    }
    if k > n {
        return Err(SteeringError::InvalidCounts { k, n });
    }
    let nf = n as f64;
    let p_hat = k as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p_hat + z2 / (2.0 * nf)) / denom;
    let half = z * (p_hat * (1.0 - p_hat) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    Ok(((center - half).max(0.0), (center + half).min(1.0)))
}

/// Samples a direction orthogonal to `w` with `‖r‖ = ‖w‖`, uniform on the
/// orthogonal subsphere, deterministic per seed.
pub fn sample_orthogonal(w: &[f64], rng_seed: u64) -> Result<Vec<f64>, SteeringError> {
    if w.len() < 2 {
        return Err(SteeringError::ImpossibleOrthogonal);
    }
    let w_norm = linalg::norm(w);
    if w_norm == 0.0 {
        return Err(SteeringError::ZeroDirection);
    }
    let mut rng = rng_for(rng_seed, &["orthogonal"]);
    loop {
        let g: Vec<f64> = (0..w.len())
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let along = linalg::dot(&g, w) / (w_norm * w_norm);
        let r = linalg::axpy(&g, -along, w);
        let r_norm = linalg::norm(&r);
        if r_norm > 1e-9 * w_norm.max(1.0) {
            return Ok(linalg::scale(&r, w_norm / r_norm));
        }
        // residual vanished (astronomically unlikely); draw again
    }
}

/// Partition of unsteered test generations into the steering subsets:
/// parsed, correct, and answering yes (`s_yes`) or no (`s_no`).
#[derive(Debug, Default)]
pub struct Subsets<'a> {
    pub s_yes: Vec<&'a GenerationRecord>,
    pub s_no: Vec<&'a GenerationRecord>,
}

pub fn build_subsets(records: &[GenerationRecord]) -> Subsets<'_> {
    let mut subsets = Subsets::default();
    for record in records {
        if !record.is_correct() {
            continue;
        }
        match record.answer {
            AnswerOutcome::Yes => subsets.s_yes.push(record),
            AnswerOutcome::No => subsets.s_no.push(record),
            AnswerOutcome::Failed => {}
        }
    }
    subsets
}

/// Caps a subset at `cap` examples, sampled uniformly without replacement,
/// preserving the original relative order.
fn cap_subset<'a>(
    subset: &[&'a GenerationRecord],
    cap: Option<usize>,
    seed: u64,
    context: &str,
) -> Vec<&'a GenerationRecord> {
    match cap {
        Some(cap) if subset.len() > cap => {
            let mut indices: Vec<usize> = (0..subset.len()).collect();
            indices.shuffle(&mut rng_for(seed, &["cap", context]));
            indices.truncate(cap);
            indices.sort_unstable();
            indices.into_iter().map(|i| subset[i]).collect()
        }
        _ => subset.to_vec(),
    }
}

/// Runs one steering sweep along the probe direction over `subset`.
///
/// A flip is a parsed steered answer differing from the example's original
/// answer. Backend failures on individual instances are recorded as parse
/// failures and never abort the sweep.
pub fn run_probe_sweep(
    backend: &mut dyn Backend,
    probe: &Probe,
    subset: &[&GenerationRecord],
    direction_kind: DirectionKind,
    config: &SweepConfig,
    decode: &DecodeParams,
    strictness: Strictness,
    base_seed: u64,
) -> Result<SweepOutcome, SteeringError> {
    config.validate()?;
    if probe.layer != config.layer {
        return Err(SteeringError::LayerMismatch {
            probe: probe.layer,
            config: config.layer,
        });
    }
    if subset.is_empty() {
        return Err(SteeringError::EmptySubset(direction_kind));
    }
    let alphas = match direction_kind {
        DirectionKind::ProbeYes => &config.alphas_yes,
        DirectionKind::ProbeNo => &config.alphas_no,
        DirectionKind::Orthogonal => {
            return Err(SteeringError::InvalidConfig(
                "orthogonal sweeps run through run_orthogonal_baseline".into(),
            ))
        }
    };
    let chosen = cap_subset(subset, config.subset_cap, base_seed, direction_kind.as_str());

    run_sweep_cells(
        backend,
        &chosen,
        direction_kind,
        alphas,
        config,
        decode,
        strictness,
        base_seed,
        |_, _| probe.direction.clone(),
    )
}

/// Runs the orthogonal norm-matched baseline on `baseline_n` test examples
/// sampled without any correctness restriction (only a parsed unsteered
/// answer is required, so a flip is well defined). Each example keeps its
/// own direction `r_j` across the alpha grid unless per-alpha resampling is
/// enabled.
pub fn run_orthogonal_baseline(
    backend: &mut dyn Backend,
    probe: &Probe,
    test_records: &[GenerationRecord],
    config: &SweepConfig,
    decode: &DecodeParams,
    strictness: Strictness,
    base_seed: u64,
) -> Result<SweepOutcome, SteeringError> {
    config.validate()?;
    if probe.layer != config.layer {
        return Err(SteeringError::LayerMismatch {
            probe: probe.layer,
            config: config.layer,
        });
    }
    let eligible: Vec<&GenerationRecord> =
        test_records.iter().filter(|r| r.is_parsed()).collect();
    if eligible.is_empty() {
        return Err(SteeringError::EmptySubset(DirectionKind::Orthogonal));
    }
    let chosen = cap_subset(
        &eligible,
        Some(config.baseline_n),
        base_seed,
        "orthogonal",
    );

    let direction = probe.direction.clone();
    let resample = config.resample_orthogonal_per_alpha;
    run_sweep_cells(
        backend,
        &chosen,
        DirectionKind::Orthogonal,
        &config.alphas_yes,
        config,
        decode,
        strictness,
        base_seed,
        move |record, alpha| {
            let mut parts: Vec<String> = vec!["orth-dir".into(), record.instance_id.clone()];
            if resample {
                parts.push(format!("{alpha}"));
            }
            let part_refs: Vec<&str> = parts.iter().map(String::as_str).collect();
            let seed = derive_seed(base_seed, &part_refs);
            sample_orthogonal(&direction, seed).expect("probe direction is valid")
        },
    )
}

/// Shared sweep loop: ascending |alpha|, per-(instance, alpha) decode seeds,
/// early termination on an all-unparsed cell.
#[allow(clippy::too_many_arguments)]
fn run_sweep_cells(
    backend: &mut dyn Backend,
    subset: &[&GenerationRecord],
    direction_kind: DirectionKind,
    alphas: &[f64],
    config: &SweepConfig,
    decode: &DecodeParams,
    strictness: Strictness,
    base_seed: u64,
    mut direction_for: impl FnMut(&GenerationRecord, f64) -> Vec<f64>,
) -> Result<SweepOutcome, SteeringError> {
    let mut alphas = alphas.to_vec();
    alphas.sort_by(|a, b| a.abs().partial_cmp(&b.abs()).expect("finite alphas"));
    alphas.dedup();

    let mut points = Vec::with_capacity(alphas.len());
    let mut flips = Vec::new();

    for &alpha in &alphas {
        let mut n_parsed = 0usize;
        let mut n_flipped = 0usize;
        let n_total = subset.len();

        for record in subset {
            let original = record
                .answer
                .semantic()
                .expect("sweep subsets contain only parsed records");
            let decode_seed = derive_seed(
                base_seed,
                &[
                    "steer",
                    direction_kind.as_str(),
                    &format!("{alpha}"),
                    &record.instance_id,
                ],
            );
            let params = DecodeParams {
                rng_seed: decode_seed,
                ..decode.clone()
            };
            let spec = SteeringSpec {
                layer: config.layer,
                direction: direction_for(record, alpha),
                alpha,
            };
            let steered_answer = match backend.generate_with_steering(
                &record.prompt_text,
                &params,
                &spec,
            ) {
                Ok(generation) => {
                    let parse = parse_answer_with(&generation.completion, strictness);
                    let answer = to_semantic(&parse, &record.assignment);
                    flips.push(FlipRecord {
                        instance_id: record.instance_id.clone(),
                        task: record.task,
                        direction_kind,
                        alpha,
                        original_answer: original,
                        steered_answer: answer,
                        flipped: answer
                            .semantic()
                            .is_some_and(|steered| steered != original),
                        question_text: record.question_text.clone(),
                        gold: record.gold,
                        completion: generation.completion,
                        decode_seed,
                    });
                    answer
                }
                // Individual backend failures count as parse failures.
                Err(_) => AnswerOutcome::Failed,
            };
            if steered_answer.is_parsed() {
                n_parsed += 1;
                if steered_answer.semantic() != Some(original) {
                    n_flipped += 1;
                }
            }
        }

        let (flip_rate, ci_low, ci_high) = if n_parsed > 0 {
            let rate = n_flipped as f64 / n_parsed as f64;
            let (low, high) = wilson_ci(n_flipped, n_parsed, 1.96)?;
            (rate, low, high)
        } else {
            (0.0, 0.0, 1.0)
        };
        points.push(SweepPoint {
            direction_kind,
            alpha,
            n_total,
            n_parsed,
            n_flipped,
            flip_rate,
            ci_low,
            ci_high,
            excluded_from_plots: n_parsed < config.min_parsed,
        });

        if n_parsed == 0 {
            break; // larger strengths cannot parse either
        }
    }

    Ok(SweepOutcome { points, flips })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::planted::{make_planted_backend, PlantedBackend, PlantedConfig};
    use crate::backend::Generation;
    use crate::corpus::{render_prompt, OptionAssignment, TaskInstance};
    use crate::records::GenerationRecord;
    use crate::types::{AnswerLetter, PromptMode, TaskName};

    #[test]
    fn wilson_known_values() {
        let (low, high) = wilson_ci(0, 50, 1.96).unwrap();
        assert_eq!(low, 0.0);
        assert!((high - 0.0713).abs() < 5e-4, "high = {high}");

        let (low, high) = wilson_ci(25, 50, 1.96).unwrap();
        assert!((low - 0.3664).abs() < 5e-4);
        assert!((high - 0.6336).abs() < 5e-4);

        let (_, high) = wilson_ci(50, 50, 1.96).unwrap();
        assert_eq!(high, 1.0);

        assert!(matches!(
            wilson_ci(0, 0, 1.96),
            Err(SteeringError::UndefinedInterval)
        ));
        assert!(matches!(
            wilson_ci(5, 4, 1.96),
            Err(SteeringError::InvalidCounts { .. })
        ));
    }

    #[test]
    fn orthogonal_sampler_in_two_dims_is_forced() {
        let w = [3.0, 0.0];
        let r = sample_orthogonal(&w, 5).unwrap();
        assert!(r[0].abs() < 1e-9);
        assert!((r[1].abs() - 3.0).abs() < 1e-9);
    }

    #[test]
    fn orthogonal_sampler_tolerances() {
        let mut rng = rng_for(9, &["orth-test"]);
        for dim in [2usize, 16, 64] {
            for seed in 0..50u64 {
                let w: Vec<f64> = (0..dim)
                    .map(|_| rng.sample::<f64, _>(StandardNormal) * 3.0)
                    .collect();
                let w_norm = linalg::norm(&w);
                if w_norm == 0.0 {
                    continue;
                }
                let r = sample_orthogonal(&w, seed).unwrap();
                assert!(linalg::dot(&r, &w).abs() <= 1e-6 * w_norm * w_norm);
                assert!((linalg::norm(&r) - w_norm).abs() <= 1e-6 * w_norm);
            }
        }
    }

    #[test]
    fn orthogonal_sampler_rejects_dim_one_and_zero() {
        assert!(matches!(
            sample_orthogonal(&[1.0], 0),
            Err(SteeringError::ImpossibleOrthogonal)
        ));
        assert!(matches!(
            sample_orthogonal(&[0.0, 0.0], 0),
            Err(SteeringError::ZeroDirection)
        ));
    }

    fn record_for(
        backend: &PlantedBackend,
        i: usize,
        mode: PromptMode,
    ) -> GenerationRecord {
        let question = format!("Is the following sentence plausible?\n\"Event {i}.\"");
        let label = backend.hidden_label(&question);
        let inst = TaskInstance {
            task_name: TaskName::SportsUnderstanding,
            instance_id: format!("sports_understanding-{i:05}"),
            question_text: question,
            gold_answer: label,
        };
        let assignment = OptionAssignment {
            yes_slot: AnswerLetter::A,
            no_slot: AnswerLetter::B,
            rng_seed: 0,
        };
        let prompt = render_prompt(&inst, assignment, mode, "");
        let mut b = backend.clone();
        let params = DecodeParams {
            temperature: 0.0,
            ..DecodeParams::default()
        };
        let generation = b.generate(&prompt.rendered_text, &params).unwrap();
        GenerationRecord::from_generation(&prompt, generation, Strictness::Tolerant)
    }

    fn failed_record(template: &GenerationRecord) -> GenerationRecord {
        let mut r = template.clone();
        r.completion = "no answer statement here".into();
        r.parse = parse_answer_with(&r.completion, Strictness::Tolerant);
        r.answer = AnswerOutcome::Failed;
        r
    }

    #[test]
    fn subsets_follow_definition() {
        let backend = make_planted_backend(16, 4, 2, 0.0, 1);
        let records: Vec<GenerationRecord> = (0..12)
            .map(|i| record_for(&backend, i, PromptMode::Cot))
            .collect();
        // planted backend answers its own label, so every record is correct
        let n_yes = records
            .iter()
            .filter(|r| r.answer == AnswerOutcome::Yes)
            .count();
        let subsets = build_subsets(&records);
        assert_eq!(subsets.s_yes.len(), n_yes);
        assert_eq!(subsets.s_no.len(), records.len() - n_yes);

        // wrong and failed records are excluded
        let mut wrong = records[0].clone();
        wrong.gold = wrong.gold.flipped();
        let failed = failed_record(&records[1]);
        let smaller = vec![wrong, failed, records[2].clone()];
        let subsets = build_subsets(&smaller);
        assert_eq!(subsets.s_yes.len() + subsets.s_no.len(), 1);
    }

    fn fit_planted_probe(backend: &PlantedBackend) -> Probe {
        Probe {
            layer: backend.config().planted_layer,
            direction: backend.planted_direction(),
            mean_yes: backend.class_mean(Semantic::Yes),
            mean_no: backend.class_mean(Semantic::No),
            n_yes: 1,
            n_no: 1,
            test_auc: None,
        }
    }

    #[test]
    fn probe_sweep_flips_monotonically_and_alpha_zero_is_clean() {
        let backend = make_planted_backend(32, 4, 2, 0.1, 3);
        let records: Vec<GenerationRecord> = (0..40)
            .map(|i| record_for(&backend, i, PromptMode::Cot))
            .collect();
        let subsets = build_subsets(&records);
        assert!(!subsets.s_no.is_empty());

        let probe = fit_planted_probe(&backend);
        let mut config = SweepConfig::with_layer(2);
        config.min_parsed = 1;
        let decode = DecodeParams {
            temperature: 0.0,
            ..DecodeParams::default()
        };
        let mut b = backend.clone();
        let outcome = run_probe_sweep(
            &mut b,
            &probe,
            &subsets.s_no,
            DirectionKind::ProbeYes,
            &config,
            &decode,
            Strictness::Tolerant,
            7,
        )
        .unwrap();

        let rates: Vec<f64> = outcome.points.iter().map(|p| p.flip_rate).collect();
        assert_eq!(rates[0], 0.0, "alpha=0 must not flip at temperature 0");
        for pair in rates.windows(2) {
            assert!(pair[1] >= pair[0], "flip rate must be nondecreasing: {rates:?}");
        }
        assert!(*rates.last().unwrap() >= 0.9);
        for p in &outcome.points {
            assert!(p.ci_low <= p.flip_rate && p.flip_rate <= p.ci_high);
            assert!(p.n_flipped <= p.n_parsed && p.n_parsed <= p.n_total);
        }
    }

    #[test]
    fn sweep_is_deterministic() {
        let backend = make_planted_backend(16, 4, 2, 0.05, 11);
        let records: Vec<GenerationRecord> = (0..20)
            .map(|i| record_for(&backend, i, PromptMode::Cot))
            .collect();
        let subsets = build_subsets(&records);
        let probe = fit_planted_probe(&backend);
        let config = SweepConfig::with_layer(2);
        let decode = DecodeParams::default();

        let run = || {
            let mut b = backend.clone();
            run_probe_sweep(
                &mut b,
                &probe,
                &subsets.s_no,
                DirectionKind::ProbeYes,
                &config,
                &decode,
                Strictness::Tolerant,
                13,
            )
            .unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(
            serde_json::to_string(&a.points).unwrap(),
            serde_json::to_string(&b.points).unwrap()
        );
        assert_eq!(
            serde_json::to_string(&a.flips).unwrap(),
            serde_json::to_string(&b.flips).unwrap()
        );
    }

    #[test]
    fn sweep_terminates_early_when_nothing_parses() {
        let mut cfg = PlantedConfig::new(16, 4, 2, 0.0, 5);
        // planted direction norm is 2.0, so alpha >= 6 degenerates
        cfg.degeneration_threshold = Some(12.0);
        let backend = PlantedBackend::new(cfg);
        let records: Vec<GenerationRecord> = (0..10)
            .map(|i| record_for(&backend, i, PromptMode::Cot))
            .collect();
        let subsets = build_subsets(&records);
        let probe = fit_planted_probe(&backend);
        let config = SweepConfig::with_layer(2);
        let decode = DecodeParams {
            temperature: 0.0,
            ..DecodeParams::default()
        };
        let mut b = backend.clone();
        let subset = if subsets.s_no.is_empty() {
            (&subsets.s_yes, DirectionKind::ProbeNo)
        } else {
            (&subsets.s_no, DirectionKind::ProbeYes)
        };
        let outcome = run_probe_sweep(
            &mut b,
            &probe,
            subset.0,
            subset.1,
            &config,
            &decode,
            Strictness::Tolerant,
            1,
        )
        .unwrap();
        let last = outcome.points.last().unwrap();
        assert_eq!(last.n_parsed, 0);
        assert_eq!(last.alpha.abs(), 6.0, "sweep should stop at first unparsed cell");
        assert_eq!(outcome.points.len(), 4); // alphas 0, 2, 4, 6
    }

    #[test]
    fn orthogonal_baseline_is_quiet_on_planted_backend() {
        let backend = make_planted_backend(64, 4, 2, 0.1, 21);
        let records: Vec<GenerationRecord> = (0..60)
            .map(|i| record_for(&backend, i, PromptMode::Cot))
            .collect();
        let probe = fit_planted_probe(&backend);
        let config = SweepConfig::with_layer(2);
        let decode = DecodeParams {
            temperature: 0.0,
            ..DecodeParams::default()
        };
        let mut b = backend.clone();
        let outcome = run_orthogonal_baseline(
            &mut b,
            &probe,
            &records,
            &config,
            &decode,
            Strictness::Tolerant,
            17,
        )
        .unwrap();
        assert_eq!(outcome.points.len(), 11);
        for p in &outcome.points {
            assert_eq!(p.n_total, 50);
            assert!(
                p.flip_rate <= 0.1,
                "orthogonal steering flipped {} at alpha {}",
                p.flip_rate,
                p.alpha
            );
        }
        // distinct per-example directions: spot-check two flip records at the
        // same alpha came from different decode seeds
        let at_two: Vec<&FlipRecord> =
            outcome.flips.iter().filter(|f| f.alpha == 2.0).collect();
        assert!(at_two.len() >= 2);
        assert_ne!(at_two[0].decode_seed, at_two[1].decode_seed);
    }

    #[test]
    fn sweep_rejects_mismatched_layer_and_empty_subset() {
        let backend = make_planted_backend(16, 4, 2, 0.0, 1);
        let probe = fit_planted_probe(&backend);
        let mut config = SweepConfig::with_layer(3);
        let decode = DecodeParams::default();
        let mut b = backend.clone();
        assert!(matches!(
            run_probe_sweep(
                &mut b,
                &probe,
                &[],
                DirectionKind::ProbeYes,
                &config,
                &decode,
                Strictness::Tolerant,
                0,
            ),
            Err(SteeringError::LayerMismatch { .. })
        ));
        config.layer = 2;
        assert!(matches!(
            run_probe_sweep(
                &mut b,
                &probe,
                &[],
                DirectionKind::ProbeYes,
                &config,
                &decode,
                Strictness::Tolerant,
                0,
            ),
            Err(SteeringError::EmptySubset(DirectionKind::ProbeYes))
        ));
        let _ = Generation {
            prompt_text: String::new(),
            completion: String::new(),
            tokens: vec![],
            params: DecodeParams::default(),
        };
    }
}
