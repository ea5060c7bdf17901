//! Blocking JSON-over-HTTP calls with bounded retries, shared by the remote
//! detector and the completions client.

use std::thread;
use std::time::Duration;

use reqwest::blocking::{Client, RequestBuilder};
use reqwest::StatusCode;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// Retry budget for transient failures (connection errors, timeouts, 429
/// and 5xx responses). Backoff doubles after every failed attempt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub initial_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            initial_backoff_ms: 500,
        }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        Self {
            max_retries: 0,
            initial_backoff_ms: 0,
        }
    }

    pub fn backoff(&self, failed_attempts: u32) -> Duration {
        let factor = 1u64 << failed_attempts.saturating_sub(1).min(16);
        Duration::from_millis(self.initial_backoff_ms.saturating_mul(factor))
    }
}

#[derive(Debug)]
pub(crate) enum TransportError {
    /// Every attempt failed transiently.
    Unavailable { attempts: u32, reason: String },
    /// The server answered with a non-retryable status.
    Rejected { status: u16, body: String },
    /// The server answered 2xx with a body that does not parse.
    Decode(String),
}

pub(crate) struct Reply<T> {
    pub value: T,
    pub attempts: u32,
}

pub(crate) fn join_url(base: &str, path: &str) -> String {
    format!("{}/{}", base.trim_end_matches('/'), path.trim_start_matches('/'))
}

pub(crate) fn post_json<B, T>(
    client: &Client,
    url: &str,
    bearer: Option<&str>,
    body: &B,
    policy: &RetryPolicy,
) -> Result<Reply<T>, TransportError>
where
    B: Serialize + ?Sized,
    T: DeserializeOwned,
{
    send_with_retry(policy, || {
        let request = client.post(url).json(body);
        match bearer {
            Some(token) => request.bearer_auth(token),
            None => request,
        }
    })
}

pub(crate) fn get_json<T: DeserializeOwned>(
    client: &Client,
    url: &str,
    policy: &RetryPolicy,
) -> Result<Reply<T>, TransportError> {
    send_with_retry(policy, || client.get(url))
}

fn send_with_retry<T, F>(policy: &RetryPolicy, build: F) -> Result<Reply<T>, TransportError>
where
    T: DeserializeOwned,
    F: Fn() -> RequestBuilder,
{
    let mut attempts = 0;
    loop {
        attempts += 1;
        let reason = match build().send() {
            Ok(response) => {
                let status = response.status();
                if status.is_success() {
                    let text = response
                        .text()
                        .map_err(|e| TransportError::Decode(format!("reading body: {e}")))?;
                    return serde_json::from_str(&text)
                        .map(|value| Reply { value, attempts })
                        .map_err(|e| TransportError::Decode(e.to_string()));
                }
                let body = response.text().unwrap_or_default();
                if status != StatusCode::TOO_MANY_REQUESTS && !status.is_server_error() {
                    return Err(TransportError::Rejected {
                        status: status.as_u16(),
                        body,
                    });
                }
                format!("HTTP {}: {}", status.as_u16(), body.trim())
            }
            Err(e) => e.to_string(),
        };
        if attempts > policy.max_retries {
            return Err(TransportError::Unavailable { attempts, reason });
        }
        log::debug!("attempt {attempts} failed ({reason}), retrying");
        thread::sleep(policy.backoff(attempts));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backoff_doubles() {
        let p = RetryPolicy {
            max_retries: 3,
            initial_backoff_ms: 100,
        };
        assert_eq!(p.backoff(1), Duration::from_millis(100));
        assert_eq!(p.backoff(2), Duration::from_millis(200));
        assert_eq!(p.backoff(3), Duration::from_millis(400));
    }

    #[test]
    fn url_joining() {
        assert_eq!(join_url("http://h:1/", "/classify"), "http://h:1/classify");
        assert_eq!(join_url("http://h:1", "v1/completions"), "http://h:1/v1/completions");
    }
}
