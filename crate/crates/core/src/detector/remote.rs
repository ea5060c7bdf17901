use std::collections::{BTreeMap, BTreeSet};
use std::time::Duration;

use reqwest::blocking::Client;
use serde::{Deserialize, Serialize};

use super::{Detection, DetectionRequest, DetectorBackend, DetectorError};
use crate::domain::{Label, ValueId, Verdict};
use crate::transport::{get_json, join_url, post_json, RetryPolicy, TransportError};

/// Per-class probabilities returned by a detector service.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub aligned: f64,
    pub neutral: f64,
    pub opposed: f64,
}

impl ClassScores {
    pub fn get(&self, label: Label) -> f64 {
        match label {
            Label::Aligned => self.aligned,
            Label::Neutral => self.neutral,
            Label::Opposed => self.opposed,
        }
    }

    fn validate(&self) -> Result<(), DetectorError> {
        for label in Label::ALL {
            let s = self.get(label);
            if !s.is_finite() || !(-1e-9..=1.0 + 1e-9).contains(&s) {
                return Err(DetectorError::ProtocolViolation(format!(
                    "{label} score {s} outside [0, 1]"
                )));
            }
        }
        let sum = self.aligned + self.neutral + self.opposed;
        if (sum - 1.0).abs() > 1e-3 {
            return Err(DetectorError::ProtocolViolation(format!(
                "class scores sum to {sum}, expected 1"
            )));
        }
        Ok(())
    }
}

/// The best-scoring class wins if it reaches `threshold`; otherwise, or
/// when aligned and opposed tie for the top, the text is NEUTRAL.
pub fn label_from_scores(scores: &ClassScores, threshold: f64) -> Label {
    let top = scores.aligned.max(scores.neutral).max(scores.opposed);
    let winner = if scores.neutral == top || scores.aligned == scores.opposed && scores.aligned == top {
        Label::Neutral
    } else if scores.aligned == top {
        Label::Aligned
    } else {
        Label::Opposed
    };
    if winner != Label::Neutral && top < threshold {
        Label::Neutral
    } else {
        winner
    }
}

#[derive(Debug, Serialize)]
struct ClassifyRequest<'a> {
    text: &'a str,
    value: &'a str,
}

#[derive(Debug, Deserialize)]
struct ClassifyResponse {
    value: ValueId,
    scores: ClassScores,
}

/// Answer of `GET /health`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HealthInfo {
    pub model: String,
    pub values: Vec<ValueId>,
}

/// Client for a detector service speaking the `/classify`,
/// `/classify_batch` and `/health` JSON protocol.
#[derive(Debug, Clone)]
pub struct RemoteDetector {
    client: Client,
    endpoint: String,
    timeout: Duration,
    threshold: f64,
    retry: RetryPolicy,
    model: Option<String>,
    supported: Option<BTreeSet<ValueId>>,
}

pub fn remote_backend(endpoint: &str, timeout: Duration, threshold: f64) -> Result<RemoteDetector, DetectorError> {
    RemoteDetector::new(endpoint, timeout, threshold)
}

impl RemoteDetector {
    pub fn new(endpoint: &str, timeout: Duration, threshold: f64) -> Result<Self, DetectorError> {
        if !(threshold > 0.0 && threshold <= 1.0) {
            return Err(DetectorError::InvalidSetting(format!(
                "threshold must be in (0, 1], got {threshold}"
            )));
        }
        let client = Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| DetectorError::InvalidSetting(format!("http client: {e}")))?;
        Ok(Self {
            client,
            endpoint: endpoint.to_string(),
            timeout,
            threshold,
            retry: RetryPolicy::default(),
            model: None,
            supported: None,
        })
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    /// Restricts requests to these values; others fail locally with
    /// [`DetectorError::ValueNotSupported`].
    pub fn with_supported_values(mut self, values: impl IntoIterator<Item = ValueId>) -> Self {
        self.supported = Some(values.into_iter().collect());
        self
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn health(&self) -> Result<HealthInfo, DetectorError> {
        let url = join_url(&self.endpoint, "health");
        get_json(&self.client, &url, &self.retry)
            .map(|reply| reply.value)
            .map_err(map_transport)
    }

    /// Queries `/health` and adopts the reported model and value list.
    pub fn connect(mut self) -> Result<Self, DetectorError> {
        let info = self.health()?;
        self.model = Some(info.model);
        self.supported = Some(info.values.into_iter().collect());
        Ok(self)
    }

    fn check_supported(&self, value: &ValueId) -> Result<(), DetectorError> {
        match &self.supported {
            Some(set) if !set.contains(value) => Err(DetectorError::ValueNotSupported(value.clone())),
            _ => Ok(()),
        }
    }

    fn to_verdict(&self, request: &DetectionRequest, response: ClassifyResponse) -> Result<Verdict, DetectorError> {
        if &response.value != request.value() {
            return Err(DetectorError::ProtocolViolation(format!(
                "asked about \"{}\", answered about \"{}\"",
                request.value(),
                response.value
            )));
        }
        response.scores.validate()?;
        let label = label_from_scores(&response.scores, self.threshold);
        Ok(Verdict {
            value: response.value,
            label,
            raw_score: Some(response.scores.get(label)),
        })
    }
}

fn map_transport(error: TransportError) -> DetectorError {
    match error {
        TransportError::Unavailable { attempts, reason } => DetectorError::Unavailable { attempts, reason },
        TransportError::Rejected { status, body } => {
            DetectorError::ProtocolViolation(format!("HTTP {status}: {}", body.trim()))
        }
        TransportError::Decode(reason) => DetectorError::ProtocolViolation(format!("malformed response: {reason}")),
    }
}

impl DetectorBackend for RemoteDetector {
    fn name(&self) -> &str {
        "remote"
    }

    fn parameters(&self) -> BTreeMap<String, String> {
        let mut params = BTreeMap::from([
            ("endpoint".to_string(), self.endpoint.clone()),
            (
                "threshold".to_string(),
                format!("assign label if result >= {}", self.threshold),
            ),
            ("timeout_secs".to_string(), format!("{}", self.timeout.as_secs_f64())),
            ("max_retries".to_string(), self.retry.max_retries.to_string()),
        ]);
        if let Some(model) = &self.model {
            params.insert("model".to_string(), model.clone());
        }
        params
    }

    fn classify(&self, request: &DetectionRequest) -> Result<Verdict, DetectorError> {
        self.classify_traced(request).map(|d| d.verdict)
    }

    fn classify_traced(&self, request: &DetectionRequest) -> Result<Detection, DetectorError> {
        self.check_supported(request.value())?;
        let body = ClassifyRequest {
            text: request.text(),
            value: request.value().as_str(),
        };
        let url = join_url(&self.endpoint, "classify");
        let reply =
            post_json::<_, ClassifyResponse>(&self.client, &url, None, &body, &self.retry).map_err(map_transport)?;
        Ok(Detection {
            verdict: self.to_verdict(request, reply.value)?,
            attempts: reply.attempts,
        })
    }

    fn classify_batch(&self, requests: &[DetectionRequest]) -> Result<Vec<Verdict>, DetectorError> {
        if requests.is_empty() {
            return Ok(Vec::new());
        }
        for request in requests {
            self.check_supported(request.value())?;
        }
        let body: Vec<ClassifyRequest> = requests
            .iter()
            .map(|r| ClassifyRequest {
                text: r.text(),
                value: r.value().as_str(),
            })
            .collect();
        let url = join_url(&self.endpoint, "classify_batch");
        let reply = post_json::<_, Vec<ClassifyResponse>>(&self.client, &url, None, &body, &self.retry)
            .map_err(map_transport)?;
        if reply.value.len() != requests.len() {
            return Err(DetectorError::ProtocolViolation(format!(
                "batch of {} answered with {} results",
                requests.len(),
                reply.value.len()
            )));
        }
        requests
            .iter()
            .zip(reply.value)
            .map(|(request, response)| self.to_verdict(request, response))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scores(aligned: f64, neutral: f64, opposed: f64) -> ClassScores {
        ClassScores {
            aligned,
            neutral,
            opposed,
        }
    }

    #[test]
    fn argmax_above_threshold() {
        assert_eq!(label_from_scores(&scores(0.81, 0.12, 0.07), 0.5), Label::Aligned);
        assert_eq!(label_from_scores(&scores(0.0, 0.0, 1.0), 0.5), Label::Opposed);
        assert_eq!(label_from_scores(&scores(0.1, 0.7, 0.2), 0.5), Label::Neutral);
    }

    #[test]
    fn below_threshold_is_neutral() {
        assert_eq!(label_from_scores(&scores(0.45, 0.35, 0.20), 0.5), Label::Neutral);
        assert_eq!(label_from_scores(&scores(0.2, 0.35, 0.45), 0.5), Label::Neutral);
    }

    #[test]
    fn exact_threshold_counts() {
        assert_eq!(label_from_scores(&scores(0.5, 0.25, 0.25), 0.5), Label::Aligned);
    }

    #[test]
    fn aligned_opposed_tie_is_neutral() {
        assert_eq!(label_from_scores(&scores(0.5, 0.0, 0.5), 0.5), Label::Neutral);
    }

    #[test]
    fn score_validation() {
        assert!(scores(0.2, 0.3, 0.5).validate().is_ok());
        assert!(scores(0.2, 0.3, 0.6).validate().is_err());
        assert!(scores(-0.2, 0.7, 0.5).validate().is_err());
        assert!(scores(f64::NAN, 0.5, 0.5).validate().is_err());
    }

    #[test]
    fn threshold_range() {
        let t = Duration::from_secs(1);
        assert!(RemoteDetector::new("http://x", t, 0.0).is_err());
        assert!(RemoteDetector::new("http://x", t, 1.5).is_err());
        assert!(RemoteDetector::new("http://x", t, 1.0).is_ok());
    }

    #[test]
    fn unsupported_value_fails_locally() {
        let d = RemoteDetector::new("http://127.0.0.1:9", Duration::from_secs(1), 0.5)
            .unwrap()
            .with_supported_values([ValueId::new("power")]);
        let req = DetectionRequest::new("text", ValueId::new("hedonism")).unwrap();
        assert!(matches!(d.classify(&req), Err(DetectorError::ValueNotSupported(_))));
    }

    fn score_vector() -> impl Strategy<Value = ClassScores> {
        (0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0).prop_map(|(a, n, o)| {
            let sum = a + n + o + 1e-9;
            scores(a / sum, n / sum, o / sum)
        })
    }

    proptest! {
        #[test]
        fn raising_threshold_only_moves_to_neutral(s in score_vector(), lo in 0.01f64..1.0, hi in 0.01f64..1.0) {
            let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
            let low = label_from_scores(&s, lo);
            let high = label_from_scores(&s, hi);
            prop_assert!(high == low || high == Label::Neutral);
        }
    }
}
