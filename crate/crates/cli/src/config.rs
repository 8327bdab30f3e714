//! `gwm.toml` configuration. Every key is optional; unknown keys are rejected.

use std::path::Path;

use gwm_core::action::RetrievalOptions;
use gwm_core::edges::EmbeddingSource;
use gwm_core::graph::{AdjacencyWeighting, GraphOptions, ModalityDims};
use gwm_core::tasks::KnnParams;
use gwm_core::token::{TokenBudget, Tokenizer};
use gwm_core::{GwmError, Result};
use gwm_http::HttpConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DimsConfig {
    pub image: usize,
    pub text: usize,
    pub table: usize,
    /// Graph token width for text decoders.
    pub out_text: usize,
    /// Graph token width for image decoders.
    pub out_image: usize,
}

impl Default for DimsConfig {
    fn default() -> Self {
        let m = ModalityDims::default();
        Self { image: m.image, text: m.text, table: m.table, out_text: 4096, out_image: 768 }
    }
}

impl DimsConfig {
    pub fn modality(&self) -> ModalityDims {
        ModalityDims { image: self.image, text: self.text, table: self.table }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenizerChoice {
    #[default]
    Whitespace,
    CharsOver4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecoderMode {
    /// In-process deterministic mock.
    #[default]
    Mock,
    Http,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecoderConfig {
    pub mode: DecoderMode,
    pub url: String,
    pub timeout_ms: u64,
    pub retries: u32,
    pub backoff_ms: u64,
    pub soft_tokens: bool,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        let h = HttpConfig::default();
        Self {
            mode: DecoderMode::Mock,
            url: h.url,
            timeout_ms: h.timeout_ms,
            retries: h.retries,
            backoff_ms: h.backoff_ms,
            soft_tokens: h.soft_tokens,
        }
    }
}

impl DecoderConfig {
    pub fn http(&self) -> HttpConfig {
        HttpConfig {
            url: self.url.clone(),
            timeout_ms: self.timeout_ms,
            retries: self.retries,
            backoff_ms: self.backoff_ms,
            soft_tokens: self.soft_tokens,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KnnConfig {
    pub source: EmbeddingSource,
    /// Similarity floor in `[-1, 1]`.
    pub threshold: f64,
}

impl Default for KnnConfig {
    fn default() -> Self {
        Self { source: EmbeddingSource::Text, threshold: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub seed: u64,
    /// Message-passing depth `L`.
    pub hops: usize,
    /// Neighbour count for similarity edges and retrieval.
    pub k: usize,
    /// Prompt budget in tokens.
    pub token_budget: usize,
    pub tokenizer: TokenizerChoice,
    pub allow_self_loops: bool,
    pub weighting: AdjacencyWeighting,
    pub chunk_tokens: usize,
    pub max_new_tokens: usize,
    pub dims: DimsConfig,
    pub knn: KnnConfig,
    pub retrieval: RetrievalOptions,
    pub decoder: DecoderConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 0,
            hops: 4,
            k: 5,
            token_budget: 2048,
            tokenizer: TokenizerChoice::Whitespace,
            allow_self_loops: false,
            weighting: AdjacencyWeighting::Binary,
            chunk_tokens: 128,
            max_new_tokens: 256,
            dims: DimsConfig::default(),
            knn: KnnConfig::default(),
            retrieval: RetrievalOptions::default(),
            decoder: DecoderConfig::default(),
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Config = toml::from_str(text).map_err(|e| GwmError::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.dims;
        if [d.image, d.text, d.table, d.out_text, d.out_image].contains(&0) {
            return Err(GwmError::Config("all dims must be positive".into()));
        }
        if self.k == 0 || self.token_budget == 0 || self.max_new_tokens == 0 {
            return Err(GwmError::Config("k, token_budget and max_new_tokens must be positive".into()));
        }
        if !(-1.0..=1.0).contains(&self.knn.threshold) {
            return Err(GwmError::Config(format!("knn.threshold {} is outside [-1, 1]", self.knn.threshold)));
        }
        Ok(())
    }

    pub fn graph_options(&self) -> GraphOptions {
        GraphOptions { allow_self_loops: self.allow_self_loops, dims: self.dims.modality() }
    }

    pub fn budget(&self) -> TokenBudget {
        let tokenizer = match self.tokenizer {
            TokenizerChoice::Whitespace => Tokenizer::Whitespace,
            TokenizerChoice::CharsOver4 => Tokenizer::CharsOver4,
        };
        TokenBudget { max_tokens: self.token_budget, tokenizer }
    }

    pub fn knn(&self) -> KnnParams {
        KnnParams { k: self.k, threshold: self.knn.threshold }
    }
}
