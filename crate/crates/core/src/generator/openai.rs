//! Client for OpenAI-compatible completion servers (llama.cpp, vLLM and
//! friends). Raw-completion mode sends the client-side rendered template;
//! chat mode sends the structured messages instead.

use std::time::Duration;

use reqwest::blocking::Client;
use serde::{Deserialize, Serialize};

use super::{ChatMessage, GenerationParams, GeneratorBackend, GeneratorError, RawCompletion, RenderedPrompt};
use crate::transport::{join_url, post_json, RetryPolicy, TransportError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ApiMode {
    /// `POST /v1/completions` with the rendered prompt text.
    Completions,
    /// `POST /v1/chat/completions` with role-tagged messages.
    Chat,
}

#[derive(Debug, Clone)]
pub struct OpenAiGenerator {
    client: Client,
    endpoint: String,
    api_key: Option<String>,
    mode: ApiMode,
    retry: RetryPolicy,
}

#[derive(Serialize)]
struct CompletionsRequest<'a> {
    model: &'a str,
    prompt: &'a str,
    temperature: f64,
    max_tokens: u32,
    #[serde(skip_serializing_if = "<[String]>::is_empty")]
    stop: &'a [String],
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
    max_tokens: u32,
    #[serde(skip_serializing_if = "<[String]>::is_empty")]
    stop: &'a [String],
}

#[derive(Deserialize)]
struct CompletionsResponse {
    choices: Vec<CompletionChoice>,
}

#[derive(Deserialize)]
struct CompletionChoice {
    text: String,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatReply,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct ChatReply {
    #[serde(default)]
    content: Option<String>,
}

impl OpenAiGenerator {
    /// `endpoint` is the server root; `/v1/...` paths are appended.
    pub fn new(endpoint: &str, mode: ApiMode, timeout: Duration) -> Result<Self, GeneratorError> {
        let client = Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| GeneratorError::InvalidSetting(format!("http client: {e}")))?;
        Ok(Self {
            client,
            endpoint: endpoint.to_string(),
            api_key: None,
            mode,
            retry: RetryPolicy::default(),
        })
    }

    pub fn with_api_key(mut self, key: Option<String>) -> Self {
        self.api_key = key;
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn mode(&self) -> ApiMode {
        self.mode
    }
}

fn map_transport(error: TransportError) -> GeneratorError {
    match error {
        TransportError::Unavailable { attempts, reason } => GeneratorError::Unavailable { attempts, reason },
        TransportError::Rejected { status, body } => GeneratorError::Rejected { status, body },
        TransportError::Decode(reason) => GeneratorError::Protocol(format!("malformed response: {reason}")),
    }
}

impl GeneratorBackend for OpenAiGenerator {
    fn name(&self) -> &str {
        match self.mode {
            ApiMode::Completions => "openai-completions",
            ApiMode::Chat => "openai-chat",
        }
    }

    fn complete(&self, prompt: &RenderedPrompt, params: &GenerationParams) -> Result<RawCompletion, GeneratorError> {
        let key = self.api_key.as_deref();
        match self.mode {
            ApiMode::Completions => {
                let body = CompletionsRequest {
                    model: &params.model_name,
                    prompt: &prompt.full_text,
                    temperature: params.temperature,
                    max_tokens: params.max_tokens,
                    stop: &params.stop_sequences,
                };
                let url = join_url(&self.endpoint, "v1/completions");
                let reply: CompletionsResponse = post_json(&self.client, &url, key, &body, &self.retry)
                    .map_err(map_transport)?
                    .value;
                let choice = reply
                    .choices
                    .into_iter()
                    .next()
                    .ok_or_else(|| GeneratorError::Protocol("response has no choices".into()))?;
                Ok(RawCompletion {
                    text: choice.text,
                    finish_reason: choice.finish_reason,
                })
            }
            ApiMode::Chat => {
                let body = ChatRequest {
                    model: &params.model_name,
                    messages: &prompt.messages,
                    temperature: params.temperature,
                    max_tokens: params.max_tokens,
                    stop: &params.stop_sequences,
                };
                let url = join_url(&self.endpoint, "v1/chat/completions");
                let reply: ChatResponse = post_json(&self.client, &url, key, &body, &self.retry)
                    .map_err(map_transport)?
                    .value;
                let choice = reply
                    .choices
                    .into_iter()
                    .next()
                    .ok_or_else(|| GeneratorError::Protocol("response has no choices".into()))?;
                Ok(RawCompletion {
                    text: choice.message.content.unwrap_or_default(),
                    finish_reason: choice.finish_reason,
                })
            }
        }
    }
}
