//! The target model: prompt rendering, completion backends and the
//! content-addressed completion cache.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::ValueId;

mod cache;
mod openai;
mod scripted;
mod template;

pub use cache::{cache_get_or_generate, fingerprint, Cache, CompletionRecord};
pub use openai::{ApiMode, OpenAiGenerator};
pub use scripted::{Script, ScriptedGenerator};
pub use template::{render_prompt, ASSISTANT_MARKER, USER_MARKER};

#[derive(Debug, Error)]
pub enum GeneratorError {
    #[error("missing value binding: candidate \"{candidate}\" needs a target value")]
    MissingValueBinding { candidate: String },
    #[error("generator unavailable after {attempts} attempt(s): {reason}")]
    Unavailable { attempts: u32, reason: String },
    #[error("generator rejected the request (HTTP {status}): {body}")]
    Rejected { status: u16, body: String },
    #[error("generator protocol violation: {0}")]
    Protocol(String),
    #[error("no scripted completion for prompt {fingerprint}")]
    Unscripted { fingerprint: String },
    #[error("invalid generator setting: {0}")]
    InvalidSetting(String),
    #[error("cache integrity: entry {entry}: {reason}")]
    CacheIntegrity { entry: String, reason: String },
    #[error("cache i/o at {path}: {source}")]
    CacheIo {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl GeneratorError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, GeneratorError::Unavailable { .. })
    }
}

/// Sampling settings sent with every completion request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationParams {
    pub model_name: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub stop_sequences: Vec<String>,
    pub template_name: String,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self {
            model_name: String::new(),
            temperature: 0.0,
            max_tokens: 256,
            stop_sequences: vec![USER_MARKER.to_string()],
            template_name: "vicuna".to_string(),
        }
    }
}

impl GenerationParams {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            out.push(format!("temperature must be >= 0, got {}", self.temperature));
        }
        if self.max_tokens == 0 {
            out.push("max_tokens must be positive".to_string());
        }
        if self.template_name != "vicuna" {
            out.push(format!(
                "unknown prompt template \"{}\" (supported: vicuna)",
                self.template_name
            ));
        }
        if self.stop_sequences.iter().any(|s| s.is_empty()) {
            out.push("stop sequences must be non-empty strings".to_string());
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

/// A prompt candidate applied to one dialogue (and optionally one value).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    /// Raw-completion text, ending with the assistant marker.
    pub full_text: String,
    /// The same conversation as chat messages, for chat-mode backends.
    pub messages: Vec<ChatMessage>,
    pub candidate_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value_id: Option<ValueId>,
    pub dialogue_id: String,
}

/// What a backend returned before stop-sequence handling.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawCompletion {
    pub text: String,
    pub finish_reason: Option<String>,
}

/// A language model reachable for completions. Must be deterministic for
/// identical requests at temperature 0 and callable from several threads.
pub trait GeneratorBackend: Send + Sync {
    /// Stable identifier; part of every request fingerprint.
    fn name(&self) -> &str;

    fn complete(&self, prompt: &RenderedPrompt, params: &GenerationParams) -> Result<RawCompletion, GeneratorError>;
}

impl<G: GeneratorBackend + ?Sized> GeneratorBackend for &G {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn complete(&self, prompt: &RenderedPrompt, params: &GenerationParams) -> Result<RawCompletion, GeneratorError> {
        (**self).complete(prompt, params)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Generation {
    pub text: String,
    /// The backend stopped at `max_tokens`.
    pub truncated: bool,
}

impl Generation {
    pub fn is_empty(&self) -> bool {
        self.text.is_empty()
    }
}

/// Cuts `text` at the earliest stop sequence.
pub fn strip_stop_sequences<'a>(text: &'a str, stops: &[String]) -> &'a str {
    let cut = stops
        .iter()
        .filter_map(|s| text.find(s.as_str()))
        .min()
        .unwrap_or(text.len());
    &text[..cut]
}

/// Requests a completion, cuts it at the first stop sequence and trims it.
pub fn generate<G: GeneratorBackend + ?Sized>(
    backend: &G,
    prompt: &RenderedPrompt,
    params: &GenerationParams,
) -> Result<Generation, GeneratorError> {
    let raw = backend.complete(prompt, params)?;
    let text = strip_stop_sequences(&raw.text, &params.stop_sequences)
        .trim()
        .to_string();
    Ok(Generation {
        text,
        truncated: raw.finish_reason.as_deref() == Some("length"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_params() {
        let p = GenerationParams::default();
        assert_eq!(p.temperature, 0.0);
        assert_eq!(p.max_tokens, 256);
        assert!(!p.stop_sequences.is_empty());
        assert!(p.violations().is_empty());
    }

    #[test]
    fn param_violations() {
        let p = GenerationParams {
            temperature: -1.0,
            max_tokens: 0,
            template_name: "chatml".into(),
            ..Default::default()
        };
        assert_eq!(p.violations().len(), 3);
    }

    #[test]
    fn earliest_stop_wins() {
        let stops = vec!["USER:".to_string(), "</s>".to_string()];
        assert_eq!(strip_stop_sequences("Hi there</s> USER: more", &stops), "Hi there");
        assert_eq!(strip_stop_sequences("Hi USER: x</s>", &stops), "Hi ");
        assert_eq!(strip_stop_sequences("no stop", &stops), "no stop");
    }
}
