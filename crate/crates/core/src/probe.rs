//! Difference-of-means probes on pre-CoT activations.
//!
//! A probe at layer `l` is the direction `w = mu_yes − mu_no` between the
//! class-conditional means of t0 activations, where classes partition
//! training examples by the model's own final answer (never the gold label —
//! enforced through the label provenance field). Held-out examples are
//! scored by cosine similarity to `w`; separation is summarized by rank-based
//! AUC with midrank tie handling.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{ActivationVector, Backend, BackendError, TokenLogit};
use crate::linalg;
use crate::types::Semantic;

/// Where a training label came from. Only model answers may train probes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelProvenance {
    /// Parsed from the model's own generation.
    ModelAnswer,
    /// Dataset gold label. Valid for evaluation, rejected for probe fitting.
    Gold,
}

/// A yes/no label carrying its provenance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeLabel {
    pub answer: Semantic,
    pub provenance: LabelProvenance,
}

impl ProbeLabel {
    pub fn model_answer(answer: Semantic) -> ProbeLabel {
        ProbeLabel {
            answer,
            provenance: LabelProvenance::ModelAnswer,
        }
    }
}

/// A fitted difference-of-means probe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub layer: usize,
    /// `mu_yes − mu_no`, exactly.
    pub direction: Vec<f64>,
    pub mean_yes: Vec<f64>,
    pub mean_no: Vec<f64>,
    pub n_yes: usize,
    pub n_no: usize,
    pub test_auc: Option<f64>,
}

/// One scored held-out example. `label` is the model's final answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeScore {
    pub instance_id: String,
    pub score: f64,
    pub label: Semantic,
}

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("training set contains only {0} examples; both labels required")]
    SingleClass(Semantic),
    #[error("no training examples supplied")]
    Empty,
    #[error("degenerate probe: class means are identical (zero direction)")]
    DegenerateProbe,
    #[error("activation at layer {got} fed to probe routine for layer {expected}")]
    LayerMismatch { expected: usize, got: usize },
    #[error("activation has {got} dims, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("gold labels must not enter probe fitting (label provenance violation)")]
    GoldLabelLeak,
    #[error("cannot score a zero-norm activation")]
    UndefinedScore,
    #[error("AUC undefined: scores contain only one label")]
    UndefinedAuc,
    #[error("layer sweep failed on every layer")]
    EmptySweep,
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// Fits the difference-of-means probe at `layer`.
pub fn fit_probe(
    train: &[(ActivationVector, ProbeLabel)],
    layer: usize,
) -> Result<Probe, ProbeError> {
    if train.is_empty() {
        return Err(ProbeError::Empty);
    }
    let dim = train[0].0.values.len();
    let mut sum_yes = vec![0.0; dim];
    let mut sum_no = vec![0.0; dim];
    let (mut n_yes, mut n_no) = (0usize, 0usize);

    for (activation, label) in train {
        if label.provenance == LabelProvenance::Gold {
            return Err(ProbeError::GoldLabelLeak);
        }
        if activation.layer != layer {
            return Err(ProbeError::LayerMismatch {
                expected: layer,
                got: activation.layer,
            });
        }
        if activation.values.len() != dim {
            return Err(ProbeError::DimensionMismatch {
                expected: dim,
                got: activation.values.len(),
            });
        }
        let (sum, n) = match label.answer {
            Semantic::Yes => (&mut sum_yes, &mut n_yes),
            Semantic::No => (&mut sum_no, &mut n_no),
        };
        for (s, v) in sum.iter_mut().zip(&activation.values) {
            *s += v;
        }
        *n += 1;
    }

    if n_yes == 0 {
        return Err(ProbeError::SingleClass(Semantic::No));
    }
    if n_no == 0 {
        return Err(ProbeError::SingleClass(Semantic::Yes));
    }

    let mean_yes: Vec<f64> = sum_yes.iter().map(|s| s / n_yes as f64).collect();
    let mean_no: Vec<f64> = sum_no.iter().map(|s| s / n_no as f64).collect();
    let direction = linalg::sub(&mean_yes, &mean_no);
    if linalg::norm(&direction) == 0.0 {
        return Err(ProbeError::DegenerateProbe);
    }

    Ok(Probe {
        layer,
        direction,
        mean_yes,
        mean_no,
        n_yes,
        n_no,
        test_auc: None,
    })
}

/// Cosine similarity between an activation and the probe direction.
pub fn score(probe: &Probe, activation: &ActivationVector) -> Result<f64, ProbeError> {
    if activation.values.len() != probe.direction.len() {
        return Err(ProbeError::DimensionMismatch {
            expected: probe.direction.len(),
            got: activation.values.len(),
        });
    }
    linalg::cosine(&activation.values, &probe.direction).ok_or(ProbeError::UndefinedScore)
}

/// Rank-based AUC with midrank tie handling: the probability that a
/// uniformly random yes-scored example outranks a random no-scored one,
/// ties counted one half. Equals the normalized Mann-Whitney U statistic.
pub fn auc(scores: &[ProbeScore]) -> Result<f64, ProbeError> {
    let n_yes = scores.iter().filter(|s| s.label == Semantic::Yes).count();
    let n_no = scores.len() - n_yes;
    if n_yes == 0 || n_no == 0 {
        return Err(ProbeError::UndefinedAuc);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| {
        scores[i]
            .score
            .partial_cmp(&scores[j].score)
            .expect("probe scores are finite")
    });

    // Midranks: tied scores share the average of their 1-based rank range.
    let mut rank_sum_yes = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]].score == scores[order[i]].score {
            j += 1;
        }
        let midrank = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            if scores[idx].label == Semantic::Yes {
                rank_sum_yes += midrank;
            }
        }
        i = j;
    }

    let u = rank_sum_yes - (n_yes * (n_yes + 1)) as f64 / 2.0;
    Ok(u / (n_yes as f64 * n_no as f64))
}

/// Outcome of fitting and evaluating one layer in a sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerOutcome {
    pub layer: usize,
    pub probe: Probe,
    pub auc: f64,
}

/// Fits a probe per layer on `train` and scores it on `test`.
/// Layers that fail to fit or evaluate are excluded (and reported);
/// an all-failed sweep is an error.
pub fn layer_sweep(
    train: &BTreeMap<usize, Vec<(ActivationVector, ProbeLabel)>>,
    test: &BTreeMap<usize, Vec<(ActivationVector, ProbeLabel, String)>>,
    layers: &[usize],
) -> Result<BTreeMap<usize, LayerOutcome>, ProbeError> {
    let mut outcomes = BTreeMap::new();
    for &layer in layers {
        let Some(train_layer) = train.get(&layer) else {
            continue;
        };
        let Some(test_layer) = test.get(&layer) else {
            continue;
        };
        let mut probe = match fit_probe(train_layer, layer) {
            Ok(p) => p,
            Err(_) => continue,
        };
        let mut scores = Vec::with_capacity(test_layer.len());
        let mut ok = true;
        for (activation, label, instance_id) in test_layer {
            match score(&probe, activation) {
                Ok(s) => scores.push(ProbeScore {
                    instance_id: instance_id.clone(),
                    score: s,
                    label: label.answer,
                }),
                Err(_) => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            continue;
        }
        let Ok(layer_auc) = auc(&scores) else {
            continue;
        };
        probe.test_auc = Some(layer_auc);
        outcomes.insert(
            layer,
            LayerOutcome {
                layer,
                probe,
                auc: layer_auc,
            },
        );
    }
    if outcomes.is_empty() {
        return Err(ProbeError::EmptySweep);
    }
    Ok(outcomes)
}

/// The steering layer: argmax of test AUC, ties broken by the smallest
/// layer index.
pub fn select_best_layer(sweep: &BTreeMap<usize, LayerOutcome>) -> Option<usize> {
    sweep
        .values()
        .map(|o| (o.layer, o.auc))
        .fold(None, |best, (layer, a)| match best {
            None => Some((layer, a)),
            Some((_, best_a)) if a > best_a => Some((layer, a)),
            other => other,
        })
        .map(|(layer, _)| layer)
}

/// Top-k unembedded tokens for the probe direction and its negation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogitLens {
    pub positive: Vec<TokenLogit>,
    pub negative: Vec<TokenLogit>,
}

/// Keeps a token only when it is purely alphabetical with no interior
/// capitals (leading capital allowed). Leading/trailing whitespace is
/// ignored for the check but preserved in output.
pub fn lens_token_filter(token: &str) -> bool {
    let t = token.trim();
    if t.is_empty() {
        return false;
    }
    if !t.chars().all(|c| c.is_ascii_alphabetic()) {
        return false;
    }
    !t.chars().skip(1).any(|c| c.is_ascii_uppercase())
}

/// Projects the probe direction (and its inverse) through the backend's
/// unembedding and reports the top-`k` filtered tokens per direction.
pub fn logit_lens(
    probe: &Probe,
    backend: &dyn Backend,
    k: usize,
    filter: impl Fn(&str) -> bool,
) -> Result<LogitLens, ProbeError> {
    let top = |logits: Vec<TokenLogit>| {
        let mut kept: Vec<TokenLogit> = logits
            .into_iter()
            .filter(|tl| filter(&tl.token))
            .collect();
        kept.sort_by(|a, b| {
            b.logit
                .partial_cmp(&a.logit)
                .expect("finite logits")
                .then_with(|| a.token.cmp(&b.token))
        });
        kept.truncate(k);
        kept
    };
    let positive = top(backend.unembed(&probe.direction)?);
    let negative = top(backend.unembed(&linalg::scale(&probe.direction, -1.0))?);
    Ok(LogitLens { positive, negative })
}
