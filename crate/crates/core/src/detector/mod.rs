//! Value detection: the backend abstraction, the text window handed to it,
//! and validation of a backend against labelled examples.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::domain::{Turn, ValueId, Verdict};

mod lexicon;
mod metrics;
mod remote;

pub use lexicon::{lexicon_backend, LexiconBackend, LexiconEntry};
pub use metrics::{
    load_labeled_examples, validate_detector, ConfusionMatrix, LabeledExample, ValidationMetrics, ValueMetrics,
};
pub use remote::{label_from_scores, remote_backend, ClassScores, HealthInfo, RemoteDetector};

/// Separator placed between the utterances of the detection window.
pub const WINDOW_SEPARATOR: &str = "\n";

#[derive(Debug, Error)]
pub enum DetectorError {
    #[error("empty dialogue")]
    EmptyDialogue,
    #[error("detection text is empty")]
    EmptyText,
    #[error("detector unavailable after {attempts} attempt(s): {reason}")]
    Unavailable { attempts: u32, reason: String },
    #[error("detector protocol violation: {0}")]
    ProtocolViolation(String),
    #[error("value not supported by detector: \"{0}\"")]
    ValueNotSupported(ValueId),
    #[error("ambiguous lexicon: keyword \"{keyword}\" is both aligned and opposed for \"{value}\"")]
    AmbiguousLexicon { value: ValueId, keyword: String },
    #[error("invalid lexicon: {0}")]
    InvalidLexicon(String),
    #[error("invalid detector setting: {0}")]
    InvalidSetting(String),
    #[error("empty validation set")]
    EmptyValidationSet,
    #[error("labeled set {path}, record {record}: {reason}")]
    LabeledSetFormat { path: String, record: u64, reason: String },
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl DetectorError {
    /// Whether a later attempt at the same request might succeed.
    pub fn is_retryable(&self) -> bool {
        matches!(self, DetectorError::Unavailable { .. })
    }
}

/// Text and target value submitted to a detector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DetectionRequest {
    text: String,
    value: ValueId,
}

impl DetectionRequest {
    pub fn new(text: impl Into<String>, value: ValueId) -> Result<Self, DetectorError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(DetectorError::EmptyText);
        }
        Ok(Self { text, value })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn value(&self) -> &ValueId {
        &self.value
    }
}

/// A verdict together with how many attempts it took to obtain.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub verdict: Verdict,
    pub attempts: u32,
}

/// A value detector. Implementations must be deterministic for a fixed
/// configuration and safe to call from several threads at once.
pub trait DetectorBackend: Send + Sync {
    fn name(&self) -> &str;

    /// Settings reported verbatim in the run manifest.
    fn parameters(&self) -> BTreeMap<String, String>;

    fn classify(&self, request: &DetectionRequest) -> Result<Verdict, DetectorError>;

    fn classify_traced(&self, request: &DetectionRequest) -> Result<Detection, DetectorError> {
        self.classify(request).map(|verdict| Detection { verdict, attempts: 1 })
    }

    fn classify_batch(&self, requests: &[DetectionRequest]) -> Result<Vec<Verdict>, DetectorError> {
        requests.iter().map(|r| self.classify(r)).collect()
    }
}

impl<D: DetectorBackend + ?Sized> DetectorBackend for &D {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn parameters(&self) -> BTreeMap<String, String> {
        (**self).parameters()
    }
    fn classify(&self, request: &DetectionRequest) -> Result<Verdict, DetectorError> {
        (**self).classify(request)
    }
    fn classify_traced(&self, request: &DetectionRequest) -> Result<Detection, DetectorError> {
        (**self).classify_traced(request)
    }
    fn classify_batch(&self, requests: &[DetectionRequest]) -> Result<Vec<Verdict>, DetectorError> {
        (**self).classify_batch(requests)
    }
}

/// Classifies a request, checking the backend's answer is about the
/// requested value.
pub fn classify<D: DetectorBackend + ?Sized>(
    backend: &D,
    request: &DetectionRequest,
) -> Result<Verdict, DetectorError> {
    let verdict = backend.classify(request)?;
    if &verdict.value != request.value() {
        return Err(DetectorError::ProtocolViolation(format!(
            "asked about \"{}\", answered about \"{}\"",
            request.value(),
            verdict.value
        )));
    }
    if verdict.raw_score.is_some_and(|s| !s.is_finite()) {
        return Err(DetectorError::ProtocolViolation("non-finite score".into()));
    }
    Ok(verdict)
}

/// The text a detector sees for one dialogue: the last two utterances, or
/// the last utterance followed by the generated continuation. Speaker
/// names are not included.
pub fn detection_window(turns: &[Turn], generated: Option<&str>) -> Result<String, DetectorError> {
    let last = turns.last().ok_or(DetectorError::EmptyDialogue)?;
    Ok(match generated {
        Some(reply) => format!("{}{WINDOW_SEPARATOR}{reply}", last.text),
        None if turns.len() >= 2 => {
            format!("{}{WINDOW_SEPARATOR}{}", turns[turns.len() - 2].text, last.text)
        }
        None => last.text.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn turns(texts: &[&str]) -> Vec<Turn> {
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| Turn::new(if i % 2 == 0 { "a" } else { "b" }, *t))
            .collect()
    }

    #[test]
    fn last_two_turns() {
        let t = turns(&["one", "two", "three", "four"]);
        assert_eq!(detection_window(&t, None).unwrap(), "three\nfour");
    }

    #[test]
    fn single_turn_verbatim() {
        let t = turns(&["only"]);
        assert_eq!(detection_window(&t, None).unwrap(), "only");
    }

    #[test]
    fn last_turn_and_generation() {
        let t = turns(&["one", "two", "three", "four"]);
        assert_eq!(detection_window(&t, Some("reply")).unwrap(), "four\nreply");
    }

    #[test]
    fn empty_dialogue_faults() {
        assert!(matches!(detection_window(&[], None), Err(DetectorError::EmptyDialogue)));
    }

    #[test]
    fn blank_request_rejected() {
        assert!(matches!(
            DetectionRequest::new("  \n", ValueId::new("power")),
            Err(DetectorError::EmptyText)
        ));
    }

    proptest! {
        #[test]
        fn window_contains_final_turn(
            texts in prop::collection::vec("[a-z ]{1,12}", 1..6),
            generated in prop::option::of("[a-z ]{0,12}"),
        ) {
            let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
            let t = turns(&refs);
            let window = detection_window(&t, generated.as_deref()).unwrap();
            prop_assert!(window.contains(texts.last().unwrap().as_str()));
        }
    }
}
