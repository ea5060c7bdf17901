//! Reporting artifacts: the control-variables manifest, the per-value
//! intermediate table, plot-ready comparison data and the ranking.
//!
//! Human output is markdown with numbers rounded at emission and negative
//! numbers written with a true minus sign (U+2212). Machine output is JSON
//! (and CSV for comparison data) carrying unrounded values and ASCII minus.

use std::fs;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::campaign::{rank_candidates, CampaignError, CampaignResults, CandidateResult, RankEntry};
use crate::domain::ValueId;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("incomplete results: {0}")]
    Incomplete(String),
    #[error("inconsistent initial extraction for \"{value}\": baseline E={baseline}, candidate E={candidate}")]
    InconsistentInitialExtraction {
        value: ValueId,
        baseline: u64,
        candidate: u64,
    },
    #[error("value set mismatch: {0}")]
    ValueSetMismatch(String),
    #[error("comparison needs at least 2 results, got {0}")]
    NotEnoughResults(usize),
    #[error(transparent)]
    Campaign(#[from] CampaignError),
    #[error("{path}: {reason}")]
    Output { path: String, reason: String },
}

const MINUS: char = '\u{2212}';

/// Fixed-point rendering that never yields a negative zero. `human`
/// selects the true minus sign over ASCII hyphen-minus.
pub fn format_fixed(x: f64, decimals: usize, human: bool) -> String {
    let mut s = format!("{x:.decimals$}");
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        s.remove(0);
    }
    if human && s.starts_with('-') {
        s.replace_range(0..1, &MINUS.to_string());
    }
    s
}

/// Control variables of a campaign as known before scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestInputs {
    pub target_llm_name: String,
    pub target_llm_parameters: Vec<String>,
    pub value_theory: String,
    pub value_list: Vec<ValueId>,
    pub method_name: String,
    pub method_parameters: Vec<String>,
    pub dataset_name: String,
    pub dataset_type: String,
    pub dataset_split: String,
    /// `None` under uniform weights.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<std::collections::BTreeMap<ValueId, f64>>,
}

/// The procedure results table: control variables plus final scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcedureManifest {
    pub target_llm_name: String,
    pub target_llm_parameters: Vec<String>,
    pub value_theory: String,
    pub value_list: Vec<ValueId>,
    pub method_name: String,
    pub method_parameters: Vec<String>,
    pub dataset_name: String,
    pub dataset_type: String,
    pub dataset_split: String,
    pub baseline_id: String,
    pub score_baseline: f64,
    /// Every non-baseline candidate, in campaign order.
    pub score_candidates: IndexMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<std::collections::BTreeMap<ValueId, f64>>,
    pub effective_sample_size: u64,
}

fn check_score(id: &str, score: f64) -> Result<(), ReportError> {
    if !(0.0..=1.0).contains(&score) {
        return Err(ReportError::Incomplete(format!(
            "final score of \"{id}\" is {score}, outside [0, 1]"
        )));
    }
    Ok(())
}

fn non_empty(field: &str, text: &str) -> Result<(), ReportError> {
    if text.trim().is_empty() {
        return Err(ReportError::Incomplete(format!("{field} is empty")));
    }
    Ok(())
}

pub fn emit_manifest(inputs: &ManifestInputs, results: &CampaignResults) -> Result<ProcedureManifest, ReportError> {
    let baseline = results
        .baseline()
        .ok_or_else(|| ReportError::Incomplete(format!("no result for baseline \"{}\"", results.baseline_id)))?;
    non_empty("target LLM name", &inputs.target_llm_name)?;
    non_empty("value theory", &inputs.value_theory)?;
    non_empty("method name", &inputs.method_name)?;
    non_empty("dataset name", &inputs.dataset_name)?;
    non_empty("dataset type", &inputs.dataset_type)?;
    non_empty("dataset split", &inputs.dataset_split)?;
    if inputs.value_list.is_empty() {
        return Err(ReportError::Incomplete("value list is empty".into()));
    }
    let expected: Vec<ValueId> = inputs.value_list.clone();
    for result in &results.results {
        check_score(&result.candidate_id, result.final_score)?;
        if result.value_ids() != expected {
            return Err(ReportError::Incomplete(format!(
                "\"{}\" was not scored on every theory value",
                result.candidate_id
            )));
        }
    }
    let score_candidates = results
        .results
        .iter()
        .filter(|r| r.candidate_id != results.baseline_id)
        .map(|r| (r.candidate_id.clone(), r.final_score))
        .collect();
    Ok(ProcedureManifest {
        target_llm_name: inputs.target_llm_name.clone(),
        target_llm_parameters: inputs.target_llm_parameters.clone(),
        value_theory: inputs.value_theory.clone(),
        value_list: inputs.value_list.clone(),
        method_name: inputs.method_name.clone(),
        method_parameters: inputs.method_parameters.clone(),
        dataset_name: inputs.dataset_name.clone(),
        dataset_type: inputs.dataset_type.clone(),
        dataset_split: inputs.dataset_split.clone(),
        baseline_id: results.baseline_id.clone(),
        score_baseline: baseline.final_score,
        score_candidates,
        weights: inputs.weights.clone(),
        effective_sample_size: results.effective_sample_size(),
    })
}

fn push_rows(out: &mut String, variable: &str, descriptions: &[String]) {
    for (i, d) in descriptions.iter().enumerate() {
        let label = if i == 0 { variable } else { "" };
        out.push_str(&format!("| {label} | {d} |\n"));
    }
}

impl ProcedureManifest {
    /// `(variable, description)` rows in table order; multi-line entries
    /// repeat the variable on their first line only.
    pub fn rows(&self) -> Vec<(String, Vec<String>)> {
        let values = self
            .value_list
            .iter()
            .map(ValueId::as_str)
            .collect::<Vec<_>>()
            .join(", ");
        let weights = match &self.weights {
            None => vec!["uniform".to_string()],
            Some(w) => w.iter().map(|(v, x)| format!("{v}: {x}")).collect(),
        };
        let mut rows = vec![
            ("Target LLM name".to_string(), vec![self.target_llm_name.clone()]),
            ("Target LLM parameters".to_string(), self.target_llm_parameters.clone()),
            ("Value theory".to_string(), vec![self.value_theory.clone()]),
            ("Value list".to_string(), vec![values]),
            ("Method name".to_string(), vec![self.method_name.clone()]),
            ("Method parameters".to_string(), self.method_parameters.clone()),
            ("Dataset name".to_string(), vec![self.dataset_name.clone()]),
            ("Dataset type".to_string(), vec![self.dataset_type.clone()]),
            ("Dataset split".to_string(), vec![self.dataset_split.clone()]),
            ("Weights".to_string(), weights),
            (
                "Effective sample size".to_string(),
                vec![self.effective_sample_size.to_string()],
            ),
            (
                format!("Score p. {}", self.baseline_id),
                vec![format_fixed(self.score_baseline, 2, true)],
            ),
        ];
        for (id, score) in &self.score_candidates {
            rows.push((format!("Score p. {id}"), vec![format_fixed(*score, 2, true)]));
        }
        rows
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| Variable | Description |\n|---|---|\n");
        for (variable, descriptions) in self.rows() {
            push_rows(&mut out, &variable, &descriptions);
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest always serialises") + "\n"
    }

    pub fn from_json(raw: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(raw)
    }
}

/// Counts and scores of one prompt for one value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptColumns {
    pub gains: u64,
    pub retains: u64,
    pub losses: u64,
    pub neutrals: u64,
    pub raw: f64,
    pub normalized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueTableRow {
    pub value: ValueId,
    pub initial_present: u64,
    pub initial_absent: u64,
    pub s_min: f64,
    pub baseline: PromptColumns,
    pub candidate: PromptColumns,
    pub delta: f64,
}

/// Per-value intermediate results of a baseline and one candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueTable {
    pub baseline_id: String,
    pub candidate_id: String,
    pub rows: Vec<ValueTableRow>,
}

fn columns(result: &crate::campaign::ValueResult) -> PromptColumns {
    PromptColumns {
        gains: result.counts.gains,
        retains: result.counts.retains,
        losses: result.counts.losses,
        neutrals: result.counts.neutrals,
        raw: result.score.raw,
        normalized: result.score.normalized,
    }
}

/// Rows follow the baseline's value order.
pub fn emit_value_table(baseline: &CandidateResult, candidate: &CandidateResult) -> Result<ValueTable, ReportError> {
    if baseline.per_value.len() != candidate.per_value.len() {
        return Err(ReportError::ValueSetMismatch(format!(
            "\"{}\" has {} values, \"{}\" has {}",
            baseline.candidate_id,
            baseline.per_value.len(),
            candidate.candidate_id,
            candidate.per_value.len()
        )));
    }
    let mut rows = Vec::with_capacity(baseline.per_value.len());
    for b in &baseline.per_value {
        let value = &b.counts.value;
        let c = candidate.value(value).ok_or_else(|| {
            ReportError::ValueSetMismatch(format!("\"{}\" has no result for \"{value}\"", candidate.candidate_id))
        })?;
        if b.counts.initial_present != c.counts.initial_present || b.counts.initial_absent != c.counts.initial_absent {
            return Err(ReportError::InconsistentInitialExtraction {
                value: value.clone(),
                baseline: b.counts.initial_present,
                candidate: c.counts.initial_present,
            });
        }
        rows.push(ValueTableRow {
            value: value.clone(),
            initial_present: b.counts.initial_present,
            initial_absent: b.counts.initial_absent,
            s_min: b.score.s_min,
            baseline: columns(b),
            candidate: columns(c),
            delta: c.score.normalized - b.score.normalized,
        });
    }
    Ok(ValueTable {
        baseline_id: baseline.candidate_id.clone(),
        candidate_id: candidate.candidate_id.clone(),
        rows,
    })
}

impl ValueTableRow {
    /// Cells at the reported precision: counts as integers, `S_min` and
    /// `S` with one decimal, `Ŝ` and `ΔŜ` with two.
    pub fn cells(&self, human: bool) -> Vec<String> {
        let prompt = |p: &PromptColumns| {
            vec![
                p.gains.to_string(),
                p.retains.to_string(),
                p.losses.to_string(),
                p.neutrals.to_string(),
                format_fixed(p.raw, 1, human),
                format_fixed(p.normalized, 2, human),
            ]
        };
        let mut cells = vec![
            self.value.to_string(),
            self.initial_present.to_string(),
            self.initial_absent.to_string(),
            format_fixed(self.s_min, 1, human),
        ];
        cells.extend(prompt(&self.baseline));
        cells.extend(prompt(&self.candidate));
        cells.push(format_fixed(self.delta, 2, human));
        cells
    }
}

impl ValueTable {
    pub fn to_markdown(&self) -> String {
        let mut out = format!(
            "Baseline: {}; candidate: {}\n\n| Value | E | Ē | S_min | G | R | L | N | S | Ŝ | G | R | L | N | S | Ŝ | ΔŜ |\n|---|{}\n",
            self.baseline_id,
            self.candidate_id,
            "---:|".repeat(16)
        );
        for row in &self.rows {
            out.push_str(&format!("| {} |\n", row.cells(true).join(" | ")));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub value: ValueId,
    /// One normalised score per candidate, in [`ComparisonData::candidates`] order.
    pub scores: Vec<f64>,
}

/// Normalised per-value scores of several candidates, one series each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonData {
    pub candidates: Vec<String>,
    pub rows: Vec<ComparisonRow>,
}

pub fn emit_comparison_data(results: &[CandidateResult]) -> Result<ComparisonData, ReportError> {
    if results.len() < 2 {
        return Err(ReportError::NotEnoughResults(results.len()));
    }
    rank_candidates(results, None)?;
    let rows = results[0]
        .per_value
        .iter()
        .map(|first| {
            let value = first.counts.value.clone();
            let scores = results
                .iter()
                .map(|r| r.value(&value).map(|v| v.score.normalized).unwrap_or(f64::NAN))
                .collect();
            ComparisonRow { value, scores }
        })
        .collect();
    Ok(ComparisonData {
        candidates: results.iter().map(|r| r.candidate_id.clone()).collect(),
        rows,
    })
}

impl ComparisonData {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("comparison always serialises") + "\n"
    }

    /// `value,<candidate>...` with one row per value.
    pub fn to_csv(&self) -> String {
        let mut writer = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["value".to_string()];
        header.extend(self.candidates.iter().cloned());
        writer.write_record(&header).expect("in-memory csv write");
        for row in &self.rows {
            let mut record = vec![row.value.to_string()];
            record.extend(row.scores.iter().map(|s| s.to_string()));
            writer.write_record(&record).expect("in-memory csv write");
        }
        String::from_utf8(writer.into_inner().expect("in-memory csv flush")).expect("csv output is utf-8")
    }
}

pub fn ranking_markdown(ranking: &[RankEntry]) -> String {
    let mut out = String::from("| Rank | Candidate | Final score |\n|---:|---|---:|\n");
    for entry in ranking {
        let marker = if entry.baseline { " (baseline)" } else { "" };
        out.push_str(&format!(
            "| {} | {}{marker} | {} |\n",
            entry.rank,
            entry.candidate_id,
            format_fixed(entry.final_score, 2, true)
        ));
    }
    out
}

fn write(dir: &Path, name: &str, body: &str) -> Result<(), ReportError> {
    let path = dir.join(name);
    fs::write(&path, body).map_err(|e| ReportError::Output {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

/// Writes `manifest.{md,json}`, `value_table.{md,json}` (one table per
/// non-baseline candidate), `comparison.{json,csv}` and `ranking.md`.
pub fn write_reports(
    dir: &Path,
    inputs: &ManifestInputs,
    results: &CampaignResults,
) -> Result<ProcedureManifest, ReportError> {
    fs::create_dir_all(dir).map_err(|e| ReportError::Output {
        path: dir.display().to_string(),
        reason: e.to_string(),
    })?;
    let manifest = emit_manifest(inputs, results)?;
    write(dir, "manifest.md", &manifest.to_markdown())?;
    write(dir, "manifest.json", &manifest.to_json())?;

    let baseline = results.baseline().expect("checked by emit_manifest");
    let tables = results
        .results
        .iter()
        .filter(|r| r.candidate_id != results.baseline_id)
        .map(|r| emit_value_table(baseline, r))
        .collect::<Result<Vec<_>, _>>()?;
    if !tables.is_empty() {
        let md = tables
            .iter()
            .map(ValueTable::to_markdown)
            .collect::<Vec<_>>()
            .join("\n");
        write(dir, "value_table.md", &md)?;
        write(
            dir,
            "value_table.json",
            &(serde_json::to_string_pretty(&tables).expect("tables always serialise") + "\n"),
        )?;
    }
    if results.results.len() >= 2 {
        let comparison = emit_comparison_data(&results.results)?;
        write(dir, "comparison.json", &comparison.to_json())?;
        write(dir, "comparison.csv", &comparison.to_csv())?;
    }
    write(dir, "ranking.md", &ranking_markdown(&results.ranking))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::campaign::ValueResult;
    use crate::domain::Coefficients;
    use crate::scoring::{TransitionCounts, ValueScore};

    fn value_result(value: &str, g: u64, r: u64, l: u64, n: u64) -> ValueResult {
        let counts = TransitionCounts::from_transitions(ValueId::new(value), g, r, l, n);
        let score = ValueScore::compute(&counts, &Coefficients::default()).unwrap();
        ValueResult { counts, score }
    }

    fn result(id: &str, rows: Vec<ValueResult>) -> CandidateResult {
        let n = rows.len() as f64;
        let final_score = rows.iter().map(|r| r.score.normalized).sum::<f64>() / n;
        CandidateResult {
            candidate_id: id.into(),
            per_value: rows,
            final_score,
            failures: 0,
        }
    }

    #[test]
    fn negative_zero_never_rendered() {
        assert_eq!(format_fixed(-0.001, 2, true), "0.00");
        assert_eq!(format_fixed(-0.0, 1, false), "0.0");
        assert_eq!(format_fixed(-686.5, 1, true), "\u{2212}686.5");
        assert_eq!(format_fixed(-686.5, 1, false), "-686.5");
    }

    #[test]
    fn benevolence_row() {
        let baseline = result("baseline", vec![value_result("benevolence", 261, 318, 55, 366)]);
        let candidate = result("candidate", vec![value_result("benevolence", 418, 361, 12, 209)]);
        let table = emit_value_table(&baseline, &candidate).unwrap();
        let cells = table.rows[0].cells(true);
        assert_eq!(
            &cells[..10],
            [
                "benevolence",
                "373",
                "627",
                "\u{2212}686.5",
                "261",
                "318",
                "55",
                "366",
                "341.0",
                "0.61"
            ]
        );
        assert_eq!(cells[16], "0.19");
    }

    #[test]
    fn mismatched_initial_extraction() {
        let baseline = result("baseline", vec![value_result("power", 1, 1, 1, 1)]);
        let candidate = result("candidate", vec![value_result("power", 1, 2, 1, 0)]);
        assert!(matches!(
            emit_value_table(&baseline, &candidate),
            Err(ReportError::InconsistentInitialExtraction { .. })
        ));
    }

    #[test]
    fn table_renders_identically_from_export() {
        let baseline = result("baseline", vec![value_result("power", 3, 1, 2, 4)]);
        let candidate = result("candidate", vec![value_result("power", 5, 3, 0, 2)]);
        let table = emit_value_table(&baseline, &candidate).unwrap();
        let json = serde_json::to_string(&table).unwrap();
        let back: ValueTable = serde_json::from_str(&json).unwrap();
        assert_eq!(back, table);
        assert_eq!(back.to_markdown(), table.to_markdown());
    }

    #[test]
    fn comparison_needs_two() {
        let one = result("baseline", vec![value_result("power", 1, 1, 1, 1)]);
        assert!(matches!(
            emit_comparison_data(std::slice::from_ref(&one)),
            Err(ReportError::NotEnoughResults(1))
        ));
        let data = emit_comparison_data(&[one.clone(), one.clone(), one]).unwrap();
        assert_eq!(data.candidates.len(), 3);
        assert_eq!(data.rows[0].scores[0], data.rows[0].scores[2]);
        assert!(data.to_csv().starts_with("value,baseline,baseline,baseline\n"));
    }
}
