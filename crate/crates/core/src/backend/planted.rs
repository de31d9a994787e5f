//! A deterministic synthetic language model with a planted answer direction.
//!
//! The backend assigns every question a hidden yes/no label (a stable hash of
//! the question text and the backend seed). Its pre-CoT residual state at the
//! planted layer is `offset + class_mean(label) + noise`; other layers carry
//! no label signal. The final answer is a threshold readout of the residual
//! projection onto the planted direction, averaged over decoding positions,
//! so additive steering at the planted layer moves the answer exactly the way
//! the probe/steering mathematics predicts. Responses are emitted in the
//! standard prompt format so the answer parser runs against them unmodified.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::linalg;
use crate::seeding::rng_for;
use crate::types::{AnswerLetter, Semantic, COT_PREAMBLE};

use super::{
    toy_tokenize, validate_steering, ActivationMap, ActivationVector, Backend, BackendDescriptor,
    BackendError, DecodeParams, Generation, SteeringSpec, TokenLogit,
};

/// Construction parameters for the planted backend.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlantedConfig {
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub planted_layer: usize,
    /// Std-dev of the Gaussian noise added around the class mean.
    pub noise_scale: f64,
    pub seed: u64,
    /// Distance between the class means, `‖mu_yes − mu_no‖`.
    pub class_separation: f64,
    /// Readout noise std-dev per unit temperature, as a fraction of the
    /// class margin. Zero temperature decodes greedily.
    pub temperature_noise: f64,
    /// When set, generations whose steering perturbation norm `‖alpha·w‖`
    /// reaches this value degenerate into unparseable text, mimicking
    /// off-manifold breakdown at large steering strengths.
    pub degeneration_threshold: Option<f64>,
    /// Context window in toy tokens.
    pub context_window: usize,
}

impl PlantedConfig {
    pub fn new(
        hidden_dim: usize,
        num_layers: usize,
        planted_layer: usize,
        noise_scale: f64,
        seed: u64,
    ) -> Self {
        PlantedConfig {
            hidden_dim,
            num_layers,
            planted_layer,
            noise_scale,
            seed,
            class_separation: 2.0,
            temperature_noise: 0.25,
            degeneration_threshold: None,
            context_window: 8192,
        }
    }
}

/// See module docs. Constructed via [`make_planted_backend`] or
/// [`PlantedBackend::new`].
#[derive(Debug, Clone)]
pub struct PlantedBackend {
    cfg: PlantedConfig,
    /// Unit vector of the planted direction.
    unit: Vec<f64>,
    /// Per-layer additive offsets (cancel out of difference-of-means).
    offsets: Vec<Vec<f64>>,
    vocab: Vec<String>,
    /// Unembedding rows, one per vocab entry.
    unembed_rows: Vec<Vec<f64>>,
}

/// Builds a deterministic planted backend with default extras
/// (class separation 2.0, no degeneration threshold).
pub fn make_planted_backend(
    hidden_dim: usize,
    num_layers: usize,
    planted_layer: usize,
    noise_scale: f64,
    seed: u64,
) -> PlantedBackend {
    PlantedBackend::new(PlantedConfig::new(
        hidden_dim,
        num_layers,
        planted_layer,
        noise_scale,
        seed,
    ))
}

impl PlantedBackend {
    pub fn new(cfg: PlantedConfig) -> PlantedBackend {
        assert!(cfg.hidden_dim >= 8, "planted backend needs hidden_dim >= 8");
        assert!(cfg.num_layers >= 1);
        assert!(cfg.planted_layer < cfg.num_layers);
        assert!(cfg.class_separation > 0.0);

        let unit = {
            let mut rng = rng_for(cfg.seed, &["planted", "direction"]);
            let v: Vec<f64> = (0..cfg.hidden_dim)
                .map(|_| rng.sample::<f64, _>(StandardNormal))
                .collect();
            let n = linalg::norm(&v);
            linalg::scale(&v, 1.0 / n)
        };

        let offsets = (0..cfg.num_layers)
            .map(|layer| {
                let mut rng = rng_for(cfg.seed, &["planted", "offset", &layer.to_string()]);
                (0..cfg.hidden_dim)
                    .map(|_| rng.sample::<f64, _>(StandardNormal))
                    .collect()
            })
            .collect();

        let vocab = toy_vocabulary();
        let unembed_rows = vocab
            .iter()
            .map(|tok| {
                // "yes" reads out exactly +unit, "no" exactly −unit; every
                // other row gets a bounded planted-direction component plus
                // an orthogonal remainder, so rankings are unambiguous.
                let coeff = match tok.as_str() {
                    "yes" => 1.0,
                    "no" => -1.0,
                    _ => {
                        let mut rng = rng_for(cfg.seed, &["planted", "unembed", tok]);
                        rng.gen_range(-0.4..0.4)
                    }
                };
                let mut rng = rng_for(cfg.seed, &["planted", "unembed-orth", tok]);
                let raw: Vec<f64> = (0..cfg.hidden_dim)
                    .map(|_| rng.sample::<f64, _>(StandardNormal))
                    .collect();
                let along = linalg::dot(&raw, &unit);
                let mut row = linalg::axpy(&raw, -along, &unit);
                let n = linalg::norm(&row);
                if n > 0.0 {
                    row = linalg::scale(&row, 0.6 / n);
                }
                linalg::axpy(&row, coeff, &unit)
            })
            .collect();

        PlantedBackend {
            cfg,
            unit,
            offsets,
            vocab,
            unembed_rows,
        }
    }

    pub fn config(&self) -> &PlantedConfig {
        &self.cfg
    }

    /// The planted class-difference direction `mu_yes − mu_no`.
    pub fn planted_direction(&self) -> Vec<f64> {
        linalg::scale(&self.unit, self.cfg.class_separation)
    }

    /// Unit vector of the planted direction.
    pub fn planted_unit(&self) -> &[f64] {
        &self.unit
    }

    /// The hidden label the backend will answer for a question. Stable in
    /// `(seed, question_text)`; used to construct aligned synthetic corpora.
    pub fn hidden_label(&self, question_text: &str) -> Semantic {
        let h = crate::seeding::derive_seed(self.cfg.seed, &["planted", "label", question_text]);
        if h & 1 == 0 {
            Semantic::Yes
        } else {
            Semantic::No
        }
    }

    /// Noise-free class mean at the planted layer (offset included).
    pub fn class_mean(&self, label: Semantic) -> Vec<f64> {
        let sign = match label {
            Semantic::Yes => 1.0,
            Semantic::No => -1.0,
        };
        linalg::axpy(
            &self.offsets[self.cfg.planted_layer],
            sign * self.cfg.class_separation / 2.0,
            &self.unit,
        )
    }

    fn t0_vector(&self, question: &str, layer: usize, position: usize) -> ActivationVector {
        let mut values = self.offsets[layer].clone();
        if layer == self.cfg.planted_layer {
            let sign = match self.hidden_label(question) {
                Semantic::Yes => 1.0,
                Semantic::No => -1.0,
            };
            values = linalg::axpy(&values, sign * self.cfg.class_separation / 2.0, &self.unit);
        }
        if self.cfg.noise_scale > 0.0 {
            let mut rng = rng_for(
                self.cfg.seed,
                &["planted", "noise", &layer.to_string(), question],
            );
            for v in values.iter_mut() {
                *v += self.cfg.noise_scale * rng.sample::<f64, _>(StandardNormal);
            }
        }
        ActivationVector {
            layer,
            position,
            values,
        }
    }

    fn decode(
        &self,
        prompt_text: &str,
        params: &DecodeParams,
        steering: Option<&SteeringSpec>,
    ) -> Result<Generation, BackendError> {
        if let Some(spec) = steering {
            validate_steering(&self.descriptor(), spec)?;
        }

        let prompt_tokens = toy_tokenize(prompt_text).len();
        if prompt_tokens + params.max_new_tokens > self.cfg.context_window {
            return Err(BackendError::ContextOverflow {
                prompt_tokens,
                max_new_tokens: params.max_new_tokens,
                context_window: self.cfg.context_window,
            });
        }

        let question = extract_question(prompt_text);
        let yes_slot = extract_yes_slot(prompt_text).unwrap_or(AnswerLetter::A);

        // Threshold readout: projection of the (possibly steered) planted-layer
        // residual onto the planted direction, constant across decoded
        // positions, so the per-position average equals the single-step value.
        let t0 = self.t0_vector(&question, self.cfg.planted_layer, 0);
        let centered = linalg::sub(&t0.values, &self.offsets[self.cfg.planted_layer]);
        let mut projection = linalg::dot(&centered, &self.unit);
        let mut perturbation_norm = 0.0;
        if let Some(spec) = steering {
            perturbation_norm = spec.alpha.abs() * linalg::norm(&spec.direction);
            if spec.layer == self.cfg.planted_layer {
                projection += spec.alpha * linalg::dot(&spec.direction, &self.unit);
            }
        }
        if params.temperature > 0.0 && self.cfg.temperature_noise > 0.0 {
            let mut rng = rng_for(
                self.cfg.seed,
                &[
                    "planted",
                    "decode",
                    &params.rng_seed.to_string(),
                    prompt_text,
                ],
            );
            let margin = self.cfg.class_separation / 2.0;
            projection += params.temperature
                * self.cfg.temperature_noise
                * margin
                * rng.sample::<f64, _>(StandardNormal);
        }
        let answer = if projection > 0.0 {
            Semantic::Yes
        } else {
            Semantic::No
        };
        let letter = if answer == Semantic::Yes {
            yes_slot
        } else {
            yes_slot.other()
        };

        let degenerated = self
            .cfg
            .degeneration_threshold
            .is_some_and(|th| perturbation_norm >= th);

        let completion = if degenerated {
            " the the answer answer the is the the answer the the the is the".to_string()
        } else {
            let tail = prompt_text.trim_end();
            if tail.to_ascii_lowercase().ends_with("best answer is:") {
                format!(" ({letter}).")
            } else if tail.ends_with(COT_PREAMBLE) {
                let cot = self.cot_template(&question, params);
                format!(" {cot} So, the best answer is: ({letter}).")
            } else {
                format!(" The best answer is: ({letter}).")
            }
        };

        let mut tokens = toy_tokenize(&completion);
        tokens.truncate(params.max_new_tokens);
        let completion = tokens.concat();

        Ok(Generation {
            prompt_text: prompt_text.to_string(),
            completion,
            tokens,
            params: params.clone(),
        })
    }

    fn cot_template(&self, question: &str, params: &DecodeParams) -> &'static str {
        const VARIANTS: [&str; 3] = [
            "The claim rests on a small number of checkable facts. Each fact is \
             consistent with the rest of the description.",
            "Consider what the statement asserts. The relevant background \
             knowledge settles the question directly.",
            "The statement can be checked against the description piece by \
             piece, and the pieces agree.",
        ];
        if params.temperature == 0.0 {
            return VARIANTS[0];
        }
        let mut rng = rng_for(
            self.cfg.seed,
            &["planted", "cot", &params.rng_seed.to_string(), question],
        );
        VARIANTS[rng.gen_range(0..VARIANTS.len())]
    }
}

impl Backend for PlantedBackend {
    fn descriptor(&self) -> BackendDescriptor {
        BackendDescriptor {
            name: "planted".into(),
            num_layers: self.cfg.num_layers,
            hidden_dim: self.cfg.hidden_dim,
            supports_unembedding: true,
        }
    }

    fn capture_pre_cot_activations(
        &mut self,
        prompt_text: &str,
        layers: &[usize],
    ) -> Result<ActivationMap, BackendError> {
        let trimmed = prompt_text.trim_end();
        if !trimmed.ends_with(COT_PREAMBLE) {
            let tail: String = trimmed.chars().rev().take(24).collect::<Vec<_>>().iter().rev().collect();
            return Err(BackendError::T0Mismatch { tail });
        }
        for &layer in layers {
            if layer >= self.cfg.num_layers {
                return Err(BackendError::InvalidLayer {
                    layer,
                    num_layers: self.cfg.num_layers,
                });
            }
        }
        let question = extract_question(prompt_text);
        let position = toy_tokenize(prompt_text).len().saturating_sub(1);
        Ok(layers
            .iter()
            .map(|&layer| (layer, self.t0_vector(&question, layer, position)))
            .collect())
    }

    fn generate(
        &mut self,
        prompt_text: &str,
        params: &DecodeParams,
    ) -> Result<Generation, BackendError> {
        self.decode(prompt_text, params, None)
    }

    fn generate_with_steering(
        &mut self,
        prompt_text: &str,
        params: &DecodeParams,
        spec: &SteeringSpec,
    ) -> Result<Generation, BackendError> {
        self.decode(prompt_text, params, Some(spec))
    }

    fn unembed(&self, vector: &[f64]) -> Result<Vec<TokenLogit>, BackendError> {
        if vector.len() != self.cfg.hidden_dim {
            return Err(BackendError::DimensionMismatch {
                expected: self.cfg.hidden_dim,
                got: vector.len(),
            });
        }
        Ok(self
            .vocab
            .iter()
            .zip(&self.unembed_rows)
            .map(|(token, row)| TokenLogit {
                token: token.clone(),
                logit: linalg::dot(row, vector),
            })
            .collect())
    }
}

/// The question block of the final prompt: text between the last `Q: ` and
/// the answer-choices header. Falls back to the whole prompt for
/// nonconforming inputs.
fn extract_question(prompt_text: &str) -> String {
    let choices = match prompt_text.rfind("\nAnswer choices:") {
        Some(p) => p,
        None => return prompt_text.trim().to_string(),
    };
    let q_start = match prompt_text[..choices].rfind("Q: ") {
        Some(p) => p + 3,
        None => return prompt_text.trim().to_string(),
    };
    prompt_text[q_start..choices].trim().to_string()
}

/// Which slot letter carries the "Yes, ..." option in the final
/// answer-choices block.
fn extract_yes_slot(prompt_text: &str) -> Option<AnswerLetter> {
    let choices = prompt_text.rfind("\nAnswer choices:")?;
    for line in prompt_text[choices..].lines().take(8) {
        let line = line.trim();
        if let Some(rest) = line.strip_prefix("(A) ") {
            if rest.starts_with("Yes") {
                return Some(AnswerLetter::A);
            }
        }
        if let Some(rest) = line.strip_prefix("(B) ") {
            if rest.starts_with("Yes") {
                return Some(AnswerLetter::B);
            }
        }
    }
    None
}

/// Fixed ~100-entry toy vocabulary. Includes answer-format pieces so the
/// response parser runs unmodified, concept words for the logit lens, and
/// deliberately filter-failing entries (non-alphabetical, camel-case).
fn toy_vocabulary() -> Vec<String> {
    let words: &[&str] = &[
        // concept words
        "yes", "no", "plausible", "implausible", "possible", "impossible", "true", "false",
        "correct", "incorrect", "likely", "unlikely", "valid", "invalid", "consistent",
        "inconsistent", "appropriate", "inappropriate", "acceptable", "unacceptable", "right",
        "wrong", "accurate", "inaccurate", "certain", "doubtful", "modern", "historical",
        "reasonable", "unreasonable", "sound", "flawed", "sensible", "absurd",
        // function words and format pieces
        "The", "the", "best", "answer", "is", "a", "an", "of", "to", "and", "or", "not", "it",
        "this", "that", "so", "So", "think", "step", "by", "Let's", "we", "know", "therefore",
        "because", "statement", "sentence", "action", "claim", "question", "premise",
        "conclusion", "follows", "given", "description", "fact", "facts", "check", "checks",
        "piece", "pieces", "agree", "rest", "settle", "settles", "directly", "background",
        "knowledge", "relevant", "consider", "asserts", "small", "number", "checkable",
        // non-alphabetical / camel-case entries exercising the lens filter
        "(A)", "(B)", "(C)", "(X)", ":", ".", ",", "123", "42", "step-by-step", "co2", "x86",
        "iPhone", "McDonald", "JavaScript", "eBay", "YouTube", "PayPal",
    ];
    words.iter().map(|w| w.to_string()).collect()
}
