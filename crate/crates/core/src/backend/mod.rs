//! Uniform interface to a causal language model: sampling, residual-stream
//! capture at the pre-CoT position t0, and additive steering during decoding.
//!
//! Two implementations ship with the crate:
//!
//! - [`planted::PlantedBackend`] — a deterministic synthetic model with a
//!   planted answer direction, used for model-free testing of the probe and
//!   steering mathematics.
//! - [`http::HttpBackend`] — an adapter speaking a small JSON protocol to an
//!   external inference sidecar that hosts a real model (see
//!   `scripts/serve_model.py`).

pub mod http;
pub mod planted;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg;

/// Static facts about a backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendDescriptor {
    pub name: String,
    pub num_layers: usize,
    pub hidden_dim: usize,
    pub supports_unembedding: bool,
}

/// Sampling parameters for one generation call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeParams {
    pub temperature: f64,
    pub max_new_tokens: usize,
    pub rng_seed: u64,
}

impl Default for DecodeParams {
    fn default() -> Self {
        DecodeParams {
            temperature: 0.7,
            max_new_tokens: 256,
            rng_seed: 0,
        }
    }
}

/// Residual-stream state at one (layer, position).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationVector {
    pub layer: usize,
    pub position: usize,
    pub values: Vec<f64>,
}

/// An additive residual-stream edit: `x <- x + alpha * direction` at `layer`,
/// applied to every decoded position after the prompt. Prompt positions are
/// never edited.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteeringSpec {
    pub layer: usize,
    pub direction: Vec<f64>,
    pub alpha: f64,
}

/// Raw output of one generation call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generation {
    pub prompt_text: String,
    pub completion: String,
    pub tokens: Vec<String>,
    pub params: DecodeParams,
}

/// One (token, logit) pair from the unembedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenLogit {
    pub token: String,
    pub logit: f64,
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("prompt does not end at the expected pre-CoT token; trailing text: {tail:?}")]
    T0Mismatch { tail: String },
    #[error(
        "context overflow: prompt has {prompt_tokens} tokens + {max_new_tokens} new \
         exceeds window of {context_window}"
    )]
    ContextOverflow {
        prompt_tokens: usize,
        max_new_tokens: usize,
        context_window: usize,
    },
    #[error("steering direction has {got} dims, backend hidden_dim is {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("layer {layer} out of range for backend with {num_layers} layers")]
    InvalidLayer { layer: usize, num_layers: usize },
    #[error("steering direction has zero norm")]
    ZeroDirection,
    #[error("backend {backend} does not support unembedding")]
    UnembeddingUnsupported { backend: String },
    #[error("transport failure talking to inference server: {0}")]
    Transport(String),
    #[error("malformed response from inference server: {0}")]
    Protocol(String),
}

/// Activations keyed by layer, as returned by a capture call.
pub type ActivationMap = BTreeMap<usize, ActivationVector>;

/// A causal LM with residual-stream access.
///
/// A backend instance serves one call at a time; steering state is confined
/// to the single `generate_with_steering` call and never leaks across calls.
pub trait Backend {
    fn descriptor(&self) -> BackendDescriptor;

    /// Residual-stream state at position t0 (the final prompt token, the
    /// colon of the CoT preamble) for each requested layer, from a single
    /// forward pass. No generation is performed. Capture is unaffected by
    /// any steering: edits apply only at positions after t0.
    fn capture_pre_cot_activations(
        &mut self,
        prompt_text: &str,
        layers: &[usize],
    ) -> Result<ActivationMap, BackendError>;

    /// Samples a continuation of `prompt_text`. Reproducible for a fixed
    /// `rng_seed` on a fixed backend.
    fn generate(
        &mut self,
        prompt_text: &str,
        params: &DecodeParams,
    ) -> Result<Generation, BackendError>;

    /// Like [`Backend::generate`], but adds `alpha * direction` to the
    /// layer-`spec.layer` residual stream at every decoded position after the
    /// prompt. With `alpha == 0` the output is identical to `generate` under
    /// the same seed.
    fn generate_with_steering(
        &mut self,
        prompt_text: &str,
        params: &DecodeParams,
        spec: &SteeringSpec,
    ) -> Result<Generation, BackendError>;

    /// Logits over the vocabulary for a residual vector.
    fn unembed(&self, vector: &[f64]) -> Result<Vec<TokenLogit>, BackendError>;
}

/// Shared validation for steering specs.
pub(crate) fn validate_steering(
    desc: &BackendDescriptor,
    spec: &SteeringSpec,
) -> Result<(), BackendError> {
    if spec.layer >= desc.num_layers {
        return Err(BackendError::InvalidLayer {
            layer: spec.layer,
            num_layers: desc.num_layers,
        });
    }
    if spec.direction.len() != desc.hidden_dim {
        return Err(BackendError::DimensionMismatch {
            expected: desc.hidden_dim,
            got: spec.direction.len(),
        });
    }
    if linalg::norm(&spec.direction) == 0.0 {
        return Err(BackendError::ZeroDirection);
    }
    Ok(())
}

/// Toy whitespace-aware tokenizer shared by the synthetic backend and token
/// accounting: a token is a maximal run of non-whitespace characters together
/// with the whitespace that precedes it.
pub(crate) fn toy_tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut in_word = false;
    for ch in text.chars() {
        if ch.is_whitespace() {
            if in_word {
                tokens.push(std::mem::take(&mut current));
                in_word = false;
            }
            current.push(ch);
        } else {
            in_word = true;
            current.push(ch);
        }
    }
    if !current.is_empty() && in_word {
        tokens.push(current);
    } else if !current.is_empty() {
        // trailing pure-whitespace run attaches to the last token
        match tokens.last_mut() {
            Some(last) => last.push_str(&current),
            None => tokens.push(current),
        }
    }
    tokens
}
