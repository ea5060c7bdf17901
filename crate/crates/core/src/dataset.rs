//! Loading test dialogues from supported corpora and drawing reproducible
//! samples from them.
//!
//! The canonical on-disk format is a JSON document
//! `{"records": [{"id", "context"?, "turns": [{"speaker", "text"}]}]}`.
//! The `commonsense` adapter reads the Commonsense-Dialogues layout: an
//! object keyed by dialogue id whose entries carry `context`, `speaker`
//! and a list of `turns` strings, with turns alternating between the named
//! speaker and their partner.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{DialogueRecord, Turn};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("dataset format: {path}:{line}:{column}: {reason}")]
    Format {
        path: String,
        line: usize,
        column: usize,
        reason: String,
    },
    #[error("unknown adapter \"{0}\" (known: canonical, commonsense)")]
    UnknownAdapter(String),
    #[error("sample too large: {requested} requested, {available} available")]
    SampleTooLarge { requested: usize, available: usize },
    #[error("invalid dataset manifest: {0}")]
    InvalidManifest(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Adapter {
    Canonical,
    Commonsense,
}

impl FromStr for Adapter {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "canonical" => Ok(Adapter::Canonical),
            "commonsense" | "commonsense-dialogues" => Ok(Adapter::Commonsense),
            other => Err(DatasetError::UnknownAdapter(other.to_string())),
        }
    }
}

/// Describes which part of which corpus a campaign ran on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    #[serde(rename = "type")]
    pub kind: String,
    pub source_path: String,
    pub split_description: String,
    pub sample_size: usize,
    pub shuffle_seed: u64,
}

/// A record left out of the dataset and why.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub id: String,
    pub reasons: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadedDataset {
    pub records: Vec<DialogueRecord>,
    pub rejects: Vec<Rejection>,
}

#[derive(Serialize, Deserialize)]
struct CanonicalDocument {
    records: Vec<DialogueRecord>,
}

#[derive(Deserialize)]
struct CommonsenseEntry {
    #[serde(default)]
    context: Option<String>,
    #[serde(default)]
    speaker: Option<String>,
    turns: Vec<String>,
}

const PARTNER: &str = "partner";

fn format_error(path: &Path, e: serde_json::Error) -> DatasetError {
    DatasetError::Format {
        path: path.display().to_string(),
        line: e.line(),
        column: e.column(),
        reason: e.to_string(),
    }
}

/// Reads dialogues in source order. Records breaking a dialogue invariant
/// (or repeating an earlier id) go to the reject list instead.
pub fn load_dialogues(path: &Path, adapter: &str) -> Result<LoadedDataset, DatasetError> {
    let adapter: Adapter = adapter.parse()?;
    let raw = fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let candidates = match adapter {
        Adapter::Canonical => {
            serde_json::from_str::<CanonicalDocument>(&raw)
                .map_err(|e| format_error(path, e))?
                .records
        }
        Adapter::Commonsense => {
            let entries: IndexMap<String, CommonsenseEntry> =
                serde_json::from_str(&raw).map_err(|e| format_error(path, e))?;
            entries
                .into_iter()
                .map(|(id, entry)| {
                    let speaker = entry.speaker.unwrap_or_else(|| "speaker".to_string());
                    let turns = entry
                        .turns
                        .into_iter()
                        .enumerate()
                        .map(|(i, text)| {
                            let who = if i % 2 == 0 { speaker.as_str() } else { PARTNER };
                            Turn::new(who, text)
                        })
                        .collect();
                    DialogueRecord {
                        id,
                        context: entry.context,
                        turns,
                    }
                })
                .collect()
        }
    };

    let mut seen = BTreeSet::new();
    let mut records = Vec::with_capacity(candidates.len());
    let mut rejects = Vec::new();
    for record in candidates {
        let mut reasons = record.violations();
        if record.id.trim().is_empty() {
            reasons.push("empty id".to_string());
        } else if !seen.insert(record.id.clone()) {
            reasons.push("duplicate id".to_string());
        }
        if reasons.is_empty() {
            records.push(record);
        } else {
            rejects.push(Rejection { id: record.id, reasons });
        }
    }
    if !rejects.is_empty() {
        log::warn!("{}: rejected {} record(s)", path.display(), rejects.len());
    }
    Ok(LoadedDataset { records, rejects })
}

/// Writes records in the canonical format read by the `canonical` adapter.
pub fn write_canonical(path: &Path, records: &[DialogueRecord]) -> Result<(), DatasetError> {
    let doc = CanonicalDocument {
        records: records.to_vec(),
    };
    let body = serde_json::to_string_pretty(&doc).expect("dialogue records always serialise");
    fs::write(path, body + "\n").map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// SplitMix64 (Steele, Lea & Flood 2014): a 64-bit state advanced by the
/// golden-ratio increment and passed through a two-multiply finaliser.
/// Chosen because it is trivial to reimplement bit-for-bit in any language.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform integer in `0..bound` by rejection of the biased low range.
    pub fn below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "bound must be positive");
        let threshold = bound.wrapping_neg() % bound;
        loop {
            let r = self.next_u64();
            if r >= threshold {
                return r % bound;
            }
        }
    }
}

/// Fisher-Yates shuffle driven by [`SplitMix64`]: for `i` from `len - 1`
/// down to 1, swap element `i` with element `below(i + 1)`.
pub fn seeded_permutation(len: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..len).collect();
    let mut rng = SplitMix64::new(seed);
    for i in (1..len).rev() {
        let j = rng.below(i as u64 + 1) as usize;
        order.swap(i, j);
    }
    order
}

/// Shuffles with the manifest's seed and takes the first `sample_size`
/// records; the rest form the holdout. Both keep shuffled order.
pub fn sample_split<T: Clone>(records: &[T], manifest: &DatasetManifest) -> Result<(Vec<T>, Vec<T>), DatasetError> {
    if manifest.sample_size > records.len() {
        return Err(DatasetError::SampleTooLarge {
            requested: manifest.sample_size,
            available: records.len(),
        });
    }
    let order = seeded_permutation(records.len(), manifest.shuffle_seed);
    let (selected, holdout) = order.split_at(manifest.sample_size);
    Ok((
        selected.iter().map(|&i| records[i].clone()).collect(),
        holdout.iter().map(|&i| records[i].clone()).collect(),
    ))
}
