//! Three-class validation of a detector: accuracy, macro F1 and
//! support-weighted F1 per value, plus the support-weighted mean across values.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{classify, DetectionRequest, DetectorBackend, DetectorError};
use crate::domain::{Label, ValueId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub text: String,
    pub value: ValueId,
    pub gold: Label,
}

/// Counts indexed `[gold][predicted]` in ALIGNED, NEUTRAL, OPPOSED order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 3]; 3],
}

impl ConfusionMatrix {
    pub fn from_counts(counts: [[u64; 3]; 3]) -> Self {
        Self { counts }
    }

    pub fn record(&mut self, gold: Label, predicted: Label) {
        self.counts[gold.index()][predicted.index()] += 1;
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for (row, other_row) in self.counts.iter_mut().zip(other.counts.iter()) {
            for (cell, add) in row.iter_mut().zip(other_row.iter()) {
                *cell += add;
            }
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn support(&self, label: Label) -> u64 {
        self.counts[label.index()].iter().sum()
    }

    fn predicted(&self, label: Label) -> u64 {
        self.counts.iter().map(|row| row[label.index()]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        let correct: u64 = (0..3).map(|i| self.counts[i][i]).sum();
        correct as f64 / total as f64
    }

    /// `2TP / (2TP + FP + FN)`, taken as 0 when the class never occurs in
    /// either gold or predictions.
    pub fn f1(&self, label: Label) -> f64 {
        let tp = self.counts[label.index()][label.index()];
        let denominator = self.support(label) + self.predicted(label);
        if denominator == 0 {
            0.0
        } else {
            2.0 * tp as f64 / denominator as f64
        }
    }

    pub fn f1_macro(&self) -> f64 {
        Label::ALL.iter().map(|l| self.f1(*l)).sum::<f64>() / 3.0
    }

    pub fn f1_weighted(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        Label::ALL
            .iter()
            .map(|l| self.support(*l) as f64 * self.f1(*l))
            .sum::<f64>()
            / total as f64
    }

    pub fn zero_support_classes(&self) -> Vec<Label> {
        Label::ALL.into_iter().filter(|l| self.support(*l) == 0).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueMetrics {
    pub accuracy: f64,
    pub f1_macro: f64,
    pub f1_weighted: f64,
    pub support: u64,
    /// Classes absent from the gold labels of this value; their F1 is 0.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub zero_support: Vec<Label>,
    pub confusion: ConfusionMatrix,
}

impl ValueMetrics {
    pub fn from_confusion(confusion: ConfusionMatrix) -> Self {
        Self {
            accuracy: confusion.accuracy(),
            f1_macro: confusion.f1_macro(),
            f1_weighted: confusion.f1_weighted(),
            support: confusion.total(),
            zero_support: confusion.zero_support_classes(),
            confusion,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationMetrics {
    pub per_value: BTreeMap<ValueId, ValueMetrics>,
    pub weighted_mean_f1: f64,
}

impl ValidationMetrics {
    pub fn from_confusions(confusions: BTreeMap<ValueId, ConfusionMatrix>) -> Self {
        let per_value: BTreeMap<_, _> = confusions
            .into_iter()
            .map(|(value, c)| (value, ValueMetrics::from_confusion(c)))
            .collect();
        let support: u64 = per_value.values().map(|m| m.support).sum();
        let weighted_mean_f1 = if support == 0 {
            0.0
        } else {
            per_value
                .values()
                .map(|m| m.support as f64 * m.f1_weighted)
                .sum::<f64>()
                / support as f64
        };
        Self {
            per_value,
            weighted_mean_f1,
        }
    }

    /// Markdown table with one row per value, listed in `order` first and
    /// then any remaining values alphabetically.
    pub fn to_markdown(&self, order: &[ValueId]) -> String {
        let mut ids: Vec<&ValueId> = order.iter().filter(|v| self.per_value.contains_key(*v)).collect();
        ids.extend(self.per_value.keys().filter(|v| !order.contains(v)));
        let mut out =
            String::from("| Value | Accuracy | F1 macro | F1 weighted | Support |\n|---|---:|---:|---:|---:|\n");
        for id in ids {
            let m = &self.per_value[id];
            let flag = if m.zero_support.is_empty() { "" } else { " *" };
            let _ = writeln!(
                out,
                "| {id}{flag} | {:.2} | {:.2} | {:.2} | {} |",
                m.accuracy, m.f1_macro, m.f1_weighted, m.support
            );
        }
        let _ = writeln!(out, "| **Weighted mean** | | | **{:.2}** | |", self.weighted_mean_f1);
        if self.per_value.values().any(|m| !m.zero_support.is_empty()) {
            out.push_str("\n\\* at least one class has no gold examples for this value; its F1 counts as 0.\n");
        }
        out
    }
}

/// Runs `backend` over every example and scores it against the gold labels.
pub fn validate_detector<D: DetectorBackend + ?Sized>(
    backend: &D,
    examples: &[LabeledExample],
) -> Result<ValidationMetrics, DetectorError> {
    if examples.is_empty() {
        return Err(DetectorError::EmptyValidationSet);
    }
    let mut confusions: BTreeMap<ValueId, ConfusionMatrix> = BTreeMap::new();
    for example in examples {
        let request = DetectionRequest::new(example.text.clone(), example.value.clone())?;
        let verdict = classify(backend, &request)?;
        confusions
            .entry(example.value.clone())
            .or_default()
            .record(example.gold, verdict.label);
    }
    let metrics = ValidationMetrics::from_confusions(confusions);
    for (value, m) in &metrics.per_value {
        if !m.zero_support.is_empty() {
            log::warn!(
                "validation slice for \"{value}\" has no gold examples of {:?}",
                m.zero_support
            );
        }
    }
    Ok(metrics)
}

#[derive(Debug, Deserialize)]
struct LabeledRow {
    text: String,
    value: String,
    label: String,
}

fn parse_label(raw: &str) -> Option<Label> {
    let raw = raw.trim();
    if let Ok(n) = raw.parse::<i64>() {
        return Label::from_numeric(n);
    }
    match raw.to_ascii_lowercase().as_str() {
        "aligned" => Some(Label::Aligned),
        "neutral" => Some(Label::Neutral),
        "opposed" => Some(Label::Opposed),
        _ => None,
    }
}

/// Reads a CSV file with a `text,value,label` header; labels are `1`, `0`
/// or `-1` (or the class names).
pub fn load_labeled_examples(path: &Path) -> Result<Vec<LabeledExample>, DetectorError> {
    let display = path.display().to_string();
    let mut reader = csv::Reader::from_path(path).map_err(|e| DetectorError::LabeledSetFormat {
        path: display.clone(),
        record: 0,
        reason: e.to_string(),
    })?;
    let mut examples = Vec::new();
    for (i, row) in reader.deserialize::<LabeledRow>().enumerate() {
        let record = i as u64 + 1;
        let fail = |reason: String| DetectorError::LabeledSetFormat {
            path: display.clone(),
            record,
            reason,
        };
        let row = row.map_err(|e| fail(e.to_string()))?;
        let gold = parse_label(&row.label).ok_or_else(|| fail(format!("unknown label \"{}\"", row.label)))?;
        let value = ValueId::new(&row.value);
        if value.as_str().is_empty() {
            return Err(fail("empty value id".into()));
        }
        examples.push(LabeledExample {
            text: row.text,
            value,
            gold,
        });
    }
    Ok(examples)
}
