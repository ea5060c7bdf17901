use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DetectionRequest, DetectorBackend, DetectorError};
use crate::domain::{Label, ValueId, Verdict};

/// Keywords signalling alignment with, or opposition to, one value.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexiconEntry {
    #[serde(default)]
    pub aligned: BTreeSet<String>,
    #[serde(default)]
    pub opposed: BTreeSet<String>,
}

impl LexiconEntry {
    pub fn new<A, O, S>(aligned: A, opposed: O) -> Self
    where
        A: IntoIterator<Item = S>,
        O: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            aligned: aligned.into_iter().map(Into::into).collect(),
            opposed: opposed.into_iter().map(Into::into).collect(),
        }
    }
}

/// Offline, deterministic keyword detector.
///
/// Text is lowercased; any aligned keyword occurring as a substring gives
/// ALIGNED, otherwise any opposed keyword gives OPPOSED, otherwise NEUTRAL.
#[derive(Debug, Clone)]
pub struct LexiconBackend {
    entries: BTreeMap<ValueId, LexiconEntry>,
}

pub fn lexicon_backend(keyword_map: BTreeMap<ValueId, LexiconEntry>) -> Result<LexiconBackend, DetectorError> {
    LexiconBackend::new(keyword_map)
}

impl LexiconBackend {
    pub fn new(keyword_map: BTreeMap<ValueId, LexiconEntry>) -> Result<Self, DetectorError> {
        let mut entries = BTreeMap::new();
        for (value, entry) in keyword_map {
            let normalise = |set: &BTreeSet<String>| -> Result<BTreeSet<String>, DetectorError> {
                set.iter()
                    .map(|k| {
                        if k.trim().is_empty() {
                            Err(DetectorError::InvalidLexicon(format!("empty keyword for \"{value}\"")))
                        } else {
                            Ok(k.to_lowercase())
                        }
                    })
                    .collect()
            };
            let aligned = normalise(&entry.aligned)?;
            let opposed = normalise(&entry.opposed)?;
            if let Some(keyword) = aligned.intersection(&opposed).next() {
                return Err(DetectorError::AmbiguousLexicon {
                    value,
                    keyword: keyword.clone(),
                });
            }
            entries.insert(value, LexiconEntry { aligned, opposed });
        }
        Ok(Self { entries })
    }

    /// Reads a JSON document mapping value ids to `{aligned, opposed}` keyword lists.
    pub fn from_path(path: &Path) -> Result<Self, DetectorError> {
        let raw = fs::read_to_string(path).map_err(|source| DetectorError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let map: BTreeMap<ValueId, LexiconEntry> = serde_json::from_str(&raw)
            .map_err(|e| DetectorError::InvalidLexicon(format!("{}: {e}", path.display())))?;
        Self::new(map)
    }

    pub fn values(&self) -> impl Iterator<Item = &ValueId> {
        self.entries.keys()
    }
}

impl DetectorBackend for LexiconBackend {
    fn name(&self) -> &str {
        "lexicon"
    }

    fn parameters(&self) -> BTreeMap<String, String> {
        let values: Vec<&str> = self.entries.keys().map(ValueId::as_str).collect();
        BTreeMap::from([
            (
                "rule".to_string(),
                "case-insensitive substring; aligned before opposed".to_string(),
            ),
            ("values".to_string(), values.join(", ")),
        ])
    }

    fn classify(&self, request: &DetectionRequest) -> Result<Verdict, DetectorError> {
        let entry = self
            .entries
            .get(request.value())
            .ok_or_else(|| DetectorError::ValueNotSupported(request.value().clone()))?;
        let text = request.text().to_lowercase();
        let label = if entry.aligned.iter().any(|k| text.contains(k.as_str())) {
            Label::Aligned
        } else if entry.opposed.iter().any(|k| text.contains(k.as_str())) {
            Label::Opposed
        } else {
            Label::Neutral
        };
        Ok(Verdict::new(request.value().clone(), label))
    }
}
