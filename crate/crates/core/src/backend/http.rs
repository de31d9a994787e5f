//! HTTP adapter for real models hosted by an external inference sidecar.
//!
//! Residual-stream capture and mid-decoding steering need hook access to
//! model internals, so real models run in a separate process (see
//! `scripts/serve_model.py` for a reference server over Hugging Face
//! checkpoints). The wire protocol is four JSON endpoints:
//!
//! ```text
//! GET  /v1/describe            -> { name, num_layers, hidden_dim, supports_unembedding }
//! POST /v1/capture             <- { prompt, layers, preamble }
//!                              -> { position, activations: { "<layer>": [f64, ...] } }
//! POST /v1/generate            <- { prompt, temperature, max_new_tokens, seed,
//!                                   steering: null | { layer, alpha, direction } }
//!                              -> { completion, tokens }
//! POST /v1/unembed             <- { vector }
//!                              -> { tokens: [[token, logit], ...] }
//! ```
//!
//! Errors come back as HTTP 4xx/5xx with body `{ "error": { "kind", "message" } }`.
//! The server owns chat templating; it must keep the preamble's colon as the
//! final prompt token and reject prompts where that fails (`kind: "t0_mismatch"`).

use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{
    validate_steering, ActivationMap, ActivationVector, Backend, BackendDescriptor, BackendError,
    DecodeParams, Generation, SteeringSpec, TokenLogit,
};
use crate::types::COT_PREAMBLE;

pub struct HttpBackend {
    base_url: String,
    client: reqwest::blocking::Client,
    descriptor: BackendDescriptor,
}

#[derive(Serialize)]
struct CaptureRequest<'a> {
    prompt: &'a str,
    layers: &'a [usize],
    preamble: &'a str,
}

#[derive(Deserialize)]
struct CaptureResponse {
    position: usize,
    activations: BTreeMap<String, Vec<f64>>,
}

#[derive(Serialize)]
struct GenerateRequest<'a> {
    prompt: &'a str,
    temperature: f64,
    max_new_tokens: usize,
    seed: u64,
    steering: Option<SteeringBody<'a>>,
}

#[derive(Serialize)]
struct SteeringBody<'a> {
    layer: usize,
    alpha: f64,
    direction: &'a [f64],
}

#[derive(Deserialize)]
struct GenerateResponse {
    completion: String,
    #[serde(default)]
    tokens: Vec<String>,
}

#[derive(Serialize)]
struct UnembedRequest<'a> {
    vector: &'a [f64],
}

#[derive(Deserialize)]
struct UnembedResponse {
    tokens: Vec<(String, f64)>,
}

#[derive(Deserialize)]
struct ErrorBody {
    error: ErrorDetail,
}

#[derive(Deserialize)]
struct ErrorDetail {
    #[serde(default)]
    kind: String,
    #[serde(default)]
    message: String,
}

impl HttpBackend {
    /// Connects and fetches the model descriptor. Fails fast when the
    /// sidecar is unreachable.
    pub fn connect(base_url: &str) -> Result<HttpBackend, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(600))
            .build()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let base_url = base_url.trim_end_matches('/').to_string();
        let resp = client
            .get(format!("{base_url}/v1/describe"))
            .send()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let descriptor: BackendDescriptor = check(resp)?;
        Ok(HttpBackend {
            base_url,
            client,
            descriptor,
        })
    }

    fn post<B: Serialize, R: for<'de> Deserialize<'de>>(
        &self,
        endpoint: &str,
        body: &B,
    ) -> Result<R, BackendError> {
        let resp = self
            .client
            .post(format!("{}{endpoint}", self.base_url))
            .json(body)
            .send()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        check(resp)
    }
}

fn check<R: for<'de> Deserialize<'de>>(
    resp: reqwest::blocking::Response,
) -> Result<R, BackendError> {
    let status = resp.status();
    let text = resp
        .text()
        .map_err(|e| BackendError::Transport(e.to_string()))?;
    if !status.is_success() {
        if let Ok(body) = serde_json::from_str::<ErrorBody>(&text) {
            return Err(match body.error.kind.as_str() {
                "t0_mismatch" => BackendError::T0Mismatch {
                    tail: body.error.message,
                },
                "context_overflow" => BackendError::ContextOverflow {
                    prompt_tokens: 0,
                    max_new_tokens: 0,
                    context_window: 0,
                },
                "invalid_layer" => BackendError::InvalidLayer {
                    layer: 0,
                    num_layers: 0,
                },
                "unembedding_unsupported" => BackendError::UnembeddingUnsupported {
                    backend: body.error.message,
                },
                _ => BackendError::Protocol(format!("{status}: {}", body.error.message)),
            });
        }
        return Err(BackendError::Protocol(format!("{status}: {text}")));
    }
    serde_json::from_str(&text).map_err(|e| BackendError::Protocol(e.to_string()))
}

impl Backend for HttpBackend {
    fn descriptor(&self) -> BackendDescriptor {
        self.descriptor.clone()
    }

    fn capture_pre_cot_activations(
        &mut self,
        prompt_text: &str,
        layers: &[usize],
    ) -> Result<ActivationMap, BackendError> {
        for &layer in layers {
            if layer >= self.descriptor.num_layers {
                return Err(BackendError::InvalidLayer {
                    layer,
                    num_layers: self.descriptor.num_layers,
                });
            }
        }
        let resp: CaptureResponse = self.post(
            "/v1/capture",
            &CaptureRequest {
                prompt: prompt_text,
                layers,
                preamble: COT_PREAMBLE,
            },
        )?;
        let mut out = ActivationMap::new();
        for (layer_str, values) in resp.activations {
            let layer: usize = layer_str
                .parse()
                .map_err(|_| BackendError::Protocol(format!("bad layer key {layer_str:?}")))?;
            if values.len() != self.descriptor.hidden_dim {
                return Err(BackendError::Protocol(format!(
                    "layer {layer} activation has {} dims, expected {}",
                    values.len(),
                    self.descriptor.hidden_dim
                )));
            }
            out.insert(
                layer,
                ActivationVector {
                    layer,
                    position: resp.position,
                    values,
                },
            );
        }
        Ok(out)
    }

    fn generate(
        &mut self,
        prompt_text: &str,
        params: &DecodeParams,
    ) -> Result<Generation, BackendError> {
        let resp: GenerateResponse = self.post(
            "/v1/generate",
            &GenerateRequest {
                prompt: prompt_text,
                temperature: params.temperature,
                max_new_tokens: params.max_new_tokens,
                seed: params.rng_seed,
                steering: None,
            },
        )?;
        Ok(Generation {
            prompt_text: prompt_text.to_string(),
            completion: resp.completion,
            tokens: resp.tokens,
            params: params.clone(),
        })
    }

    fn generate_with_steering(
        &mut self,
        prompt_text: &str,
        params: &DecodeParams,
        spec: &SteeringSpec,
    ) -> Result<Generation, BackendError> {
        validate_steering(&self.descriptor, spec)?;
        let resp: GenerateResponse = self.post(
            "/v1/generate",
            &GenerateRequest {
                prompt: prompt_text,
                temperature: params.temperature,
                max_new_tokens: params.max_new_tokens,
                seed: params.rng_seed,
                steering: Some(SteeringBody {
                    layer: spec.layer,
                    alpha: spec.alpha,
                    direction: &spec.direction,
                }),
            },
        )?;
        Ok(Generation {
            prompt_text: prompt_text.to_string(),
            completion: resp.completion,
            tokens: resp.tokens,
            params: params.clone(),
        })
    }

    fn unembed(&self, vector: &[f64]) -> Result<Vec<TokenLogit>, BackendError> {
        if !self.descriptor.supports_unembedding {
            return Err(BackendError::UnembeddingUnsupported {
                backend: self.descriptor.name.clone(),
            });
        }
        if vector.len() != self.descriptor.hidden_dim {
            return Err(BackendError::DimensionMismatch {
                expected: self.descriptor.hidden_dim,
                got: vector.len(),
            });
        }
        let resp: UnembedResponse = self.post("/v1/unembed", &UnembedRequest { vector })?;
        Ok(resp
            .tokens
            .into_iter()
            .map(|(token, logit)| TokenLogit { token, logit })
            .collect())
    }
}
