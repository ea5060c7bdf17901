//! End-to-end evaluation of prompt candidates.
//!
//! 1. The detector reads the values present in every dialogue (once,
//!    shared by all candidates).
//! 2. For every candidate, value and dialogue the candidate is rendered
//!    and the model continues the dialogue (through the cache).
//! 3. The detector reads the values of each continuation.
//! 4. Before/after pairs are tallied and scored per value, then averaged
//!    into the candidate's final score.
//!
//! Items that fail after retries are excluded from every candidate's
//! tallies so that all candidates are normalised over the same inputs.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::seeded_permutation;
use crate::detector::{detection_window, DetectionRequest, DetectorBackend, DetectorError};
use crate::domain::{presence_from_verdict, Coefficients, DialogueRecord, PromptCandidate, ValueId, ValueTheory};
use crate::generator::{
    cache_get_or_generate, render_prompt, Cache, GenerationParams, GeneratorBackend, GeneratorError,
};
use crate::pool::run_pool;
use crate::scoring::{self, classify_transition, ScoringError, TransitionCounts, ValueScore};

/// Share of failed items above which a stage aborts.
pub const MAX_FAILURE_RATE: f64 = 0.10;

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("empty dataset")]
    EmptyDataset,
    #[error("no prompt candidates")]
    NoCandidates,
    #[error("duplicate candidate id \"{0}\"")]
    DuplicateCandidate(String),
    #[error("excessive failure rate in {stage}: {failed} of {total} items failed")]
    ExcessiveFailureRate { stage: String, failed: usize, total: usize },
    #[error("value set mismatch: {0}")]
    ValueSetMismatch(String),
    #[error("initial presence missing for dialogue \"{dialogue}\", value \"{value}\"")]
    MissingInitialPresence { dialogue: String, value: ValueId },
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error(transparent)]
    Generator(#[from] GeneratorError),
    #[error(transparent)]
    Scoring(#[from] ScoringError),
    #[error("{path}: {reason}")]
    Output { path: String, reason: String },
}

/// One (dialogue, value) cell of the evaluation grid.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ItemKey {
    pub dialogue_id: String,
    pub value_id: ValueId,
}

impl ItemKey {
    pub fn new(dialogue_id: impl Into<String>, value_id: ValueId) -> Self {
        Self {
            dialogue_id: dialogue_id.into(),
            value_id,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunFlag {
    Truncated,
    Empty,
    DetectorRetried,
    Failed,
}

/// Initial presence of one value in one dialogue.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InitialRecord {
    pub dialogue_id: String,
    pub value_id: ValueId,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub present: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Step-one detections keyed by (dialogue, value).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InitialPresence {
    pub presence: BTreeMap<ItemKey, bool>,
    pub failures: BTreeMap<ItemKey, String>,
}

impl InitialPresence {
    pub fn get(&self, dialogue_id: &str, value_id: &ValueId) -> Option<bool> {
        self.presence.get(&ItemKey::new(dialogue_id, value_id.clone())).copied()
    }

    pub fn records(&self) -> Vec<InitialRecord> {
        let mut out: Vec<InitialRecord> = self
            .presence
            .iter()
            .map(|(k, present)| InitialRecord {
                dialogue_id: k.dialogue_id.clone(),
                value_id: k.value_id.clone(),
                present: Some(*present),
                error: None,
            })
            .chain(self.failures.iter().map(|(k, reason)| InitialRecord {
                dialogue_id: k.dialogue_id.clone(),
                value_id: k.value_id.clone(),
                present: None,
                error: Some(reason.clone()),
            }))
            .collect();
        out.sort_by(|a, b| (&a.dialogue_id, &a.value_id).cmp(&(&b.dialogue_id, &b.value_id)));
        out
    }
}

/// Outcome of one generation-and-detection item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunRecord {
    pub dialogue_id: String,
    pub value_id: ValueId,
    pub candidate_id: String,
    pub before: bool,
    pub completion: String,
    pub after: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<RunFlag>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub fingerprint: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RunRecord {
    pub fn key(&self) -> ItemKey {
        ItemKey::new(self.dialogue_id.clone(), self.value_id.clone())
    }

    pub fn failed(&self) -> bool {
        self.flags.contains(&RunFlag::Failed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueResult {
    pub counts: TransitionCounts,
    pub score: ValueScore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateResult {
    pub candidate_id: String,
    /// In theory order.
    pub per_value: Vec<ValueResult>,
    #[serde(rename = "final")]
    pub final_score: f64,
    /// Items of this candidate that failed after retries.
    pub failures: usize,
}

impl CandidateResult {
    pub fn value_ids(&self) -> Vec<ValueId> {
        self.per_value.iter().map(|r| r.counts.value.clone()).collect()
    }

    pub fn normalized_scores(&self) -> BTreeMap<ValueId, f64> {
        self.per_value
            .iter()
            .map(|r| (r.counts.value.clone(), r.score.normalized))
            .collect()
    }

    pub fn value(&self, id: &ValueId) -> Option<&ValueResult> {
        self.per_value.iter().find(|r| &r.counts.value == id)
    }

    /// Smallest number of inputs any value was scored over.
    pub fn effective_sample_size(&self) -> u64 {
        self.per_value.iter().map(|r| r.counts.total()).min().unwrap_or(0)
    }
}

/// Generation statistics; not part of the reproducible outputs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunStats {
    pub items: usize,
    pub generated: usize,
    pub cache_hits: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateRun {
    pub result: CandidateResult,
    /// Sorted by (value, dialogue).
    pub records: Vec<RunRecord>,
    pub stats: RunStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub rank: usize,
    pub candidate_id: String,
    #[serde(rename = "final")]
    pub final_score: f64,
    pub baseline: bool,
}

/// Everything a finished campaign produced that reports are built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignResults {
    pub baseline_id: String,
    pub dialogues: usize,
    pub excluded_items: Vec<ItemKey>,
    pub results: Vec<CandidateResult>,
    pub ranking: Vec<RankEntry>,
}

impl CampaignResults {
    pub fn baseline(&self) -> Option<&CandidateResult> {
        self.results.iter().find(|r| r.candidate_id == self.baseline_id)
    }

    pub fn effective_sample_size(&self) -> u64 {
        self.results
            .iter()
            .map(CandidateResult::effective_sample_size)
            .min()
            .unwrap_or(0)
    }

    pub fn load(path: &Path) -> Result<Self, CampaignError> {
        let raw = fs::read_to_string(path).map_err(|e| CampaignError::Output {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        serde_json::from_str(&raw).map_err(|e| CampaignError::Output {
            path: path.display().to_string(),
            reason: e.to_string(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct CampaignOutcome {
    pub initial: InitialPresence,
    pub runs: Vec<CandidateRun>,
    pub results: CampaignResults,
}

/// The fixed parts of an evaluation: theory, backends, generation settings
/// and scoring coefficients.
pub struct Campaign<'a> {
    pub theory: &'a ValueTheory,
    pub detector: &'a dyn DetectorBackend,
    pub generator: &'a dyn GeneratorBackend,
    pub cache: &'a Cache,
    pub params: GenerationParams,
    pub coefficients: Coefficients,
    pub parallelism: usize,
    /// Permutes the order work items are dispatched in; results do not
    /// depend on it.
    pub dispatch_seed: Option<u64>,
}

enum ItemOutcome<T> {
    Done(T),
    Failed(String),
}

fn item_failure(error: DetectorError) -> Result<ItemOutcome<(bool, u32)>, CampaignError> {
    match error {
        DetectorError::Unavailable { .. } | DetectorError::ProtocolViolation(_) => {
            Ok(ItemOutcome::Failed(error.to_string()))
        }
        other => Err(other.into()),
    }
}

fn check_failure_rate(stage: &str, failed: usize, total: usize) -> Result<(), CampaignError> {
    if total > 0 && failed as f64 > MAX_FAILURE_RATE * total as f64 {
        return Err(CampaignError::ExcessiveFailureRate {
            stage: stage.to_string(),
            failed,
            total,
        });
    }
    if failed > 0 {
        log::warn!("{stage}: {failed} of {total} items failed and are excluded");
    }
    Ok(())
}

impl<'a> Campaign<'a> {
    fn dispatch_order(&self, len: usize) -> Option<Vec<usize>> {
        self.dispatch_seed.map(|seed| seeded_permutation(len, seed))
    }

    fn detect(&self, text: String, value: &ValueId) -> Result<ItemOutcome<(bool, u32)>, CampaignError> {
        let request = DetectionRequest::new(text, value.clone())?;
        match self.detector.classify_traced(&request) {
            Ok(detection) => {
                if &detection.verdict.value != value {
                    return item_failure(DetectorError::ProtocolViolation(format!(
                        "asked about \"{value}\", answered about \"{}\"",
                        detection.verdict.value
                    )));
                }
                Ok(ItemOutcome::Done((
                    presence_from_verdict(&detection.verdict),
                    detection.attempts,
                )))
            }
            Err(e) => item_failure(e),
        }
    }

    /// Step one: value presence in the last two turns of every dialogue.
    pub fn extract_initial_presence(&self, dialogues: &[DialogueRecord]) -> Result<InitialPresence, CampaignError> {
        if dialogues.is_empty() {
            return Err(CampaignError::EmptyDataset);
        }
        let items: Vec<(&DialogueRecord, &ValueId)> = dialogues
            .iter()
            .flat_map(|d| self.theory.values.iter().map(move |v| (d, &v.id)))
            .collect();
        let order = self.dispatch_order(items.len());
        let outcomes = run_pool(&items, self.parallelism, order.as_deref(), |(dialogue, value)| {
            let window = detection_window(&dialogue.turns, None)?;
            self.detect(window, value)
        });

        let mut initial = InitialPresence::default();
        for ((dialogue, value), outcome) in items.iter().zip(outcomes) {
            let key = ItemKey::new(dialogue.id.clone(), (*value).clone());
            match outcome? {
                ItemOutcome::Done((present, _)) => {
                    initial.presence.insert(key, present);
                }
                ItemOutcome::Failed(reason) => {
                    initial.failures.insert(key, reason);
                }
            }
        }
        check_failure_rate("initial value extraction", initial.failures.len(), items.len())?;
        Ok(initial)
    }

    fn run_item(
        &self,
        candidate: &PromptCandidate,
        dialogue: &DialogueRecord,
        value: &ValueId,
        before: bool,
    ) -> Result<(RunRecord, bool), CampaignError> {
        let mut record = RunRecord {
            dialogue_id: dialogue.id.clone(),
            value_id: value.clone(),
            candidate_id: candidate.id.clone(),
            before,
            completion: String::new(),
            after: false,
            flags: Vec::new(),
            fingerprint: String::new(),
            error: None,
        };
        let prompt = render_prompt(candidate, Some(value), dialogue)?;
        let (completion, hit) = match cache_get_or_generate(self.cache, self.generator, &prompt, &self.params) {
            Ok(found) => found,
            Err(
                e @ (GeneratorError::Unavailable { .. }
                | GeneratorError::Rejected { .. }
                | GeneratorError::Protocol(_)
                | GeneratorError::Unscripted { .. }),
            ) => {
                record.flags.push(RunFlag::Failed);
                record.error = Some(e.to_string());
                return Ok((record, false));
            }
            Err(e) => return Err(e.into()),
        };
        record.fingerprint = completion.request_fingerprint;
        record.completion = completion.completion;
        if completion.truncated {
            record.flags.push(RunFlag::Truncated);
        }
        if completion.empty {
            record.flags.push(RunFlag::Empty);
        }
        let window = detection_window(&dialogue.turns, Some(&record.completion))?;
        match self.detect(window, value)? {
            ItemOutcome::Done((after, attempts)) => {
                record.after = after;
                if attempts > 1 {
                    record.flags.push(RunFlag::DetectorRetried);
                }
            }
            ItemOutcome::Failed(reason) => {
                record.flags.push(RunFlag::Failed);
                record.error = Some(reason);
            }
        }
        Ok((record, hit))
    }

    /// Steps two to four for one candidate.
    pub fn run_candidate(
        &self,
        candidate: &PromptCandidate,
        initial: &InitialPresence,
        dialogues: &[DialogueRecord],
    ) -> Result<CandidateRun, CampaignError> {
        if dialogues.is_empty() {
            return Err(CampaignError::EmptyDataset);
        }
        let mut items = Vec::new();
        for value in &self.theory.values {
            for dialogue in dialogues {
                let key = ItemKey::new(dialogue.id.clone(), value.id.clone());
                if initial.failures.contains_key(&key) {
                    continue;
                }
                let before =
                    initial
                        .presence
                        .get(&key)
                        .copied()
                        .ok_or_else(|| CampaignError::MissingInitialPresence {
                            dialogue: dialogue.id.clone(),
                            value: value.id.clone(),
                        })?;
                items.push((dialogue, &value.id, before));
            }
        }

        let order = self.dispatch_order(items.len());
        let outcomes = run_pool(
            &items,
            self.parallelism,
            order.as_deref(),
            |(dialogue, value, before)| self.run_item(candidate, dialogue, value, *before),
        );

        let mut stats = RunStats {
            items: items.len(),
            ..Default::default()
        };
        let mut records = Vec::with_capacity(items.len());
        for outcome in outcomes {
            let (record, hit) = outcome?;
            if record.failed() {
                stats.failed += 1;
            } else if hit {
                stats.cache_hits += 1;
            } else {
                stats.generated += 1;
            }
            records.push(record);
        }
        records.sort_by(|a, b| (&a.value_id, &a.dialogue_id).cmp(&(&b.value_id, &b.dialogue_id)));
        check_failure_rate(&format!("candidate \"{}\"", candidate.id), stats.failed, stats.items)?;

        let excluded: BTreeSet<ItemKey> = initial
            .failures
            .keys()
            .cloned()
            .chain(records.iter().filter(|r| r.failed()).map(RunRecord::key))
            .collect();
        let result = tally_candidate(self.theory, &self.coefficients, &candidate.id, &records, &excluded)?;
        Ok(CandidateRun { result, records, stats })
    }

    /// Runs every candidate (the first is the baseline) and ranks them.
    pub fn run(
        &self,
        candidates: &[PromptCandidate],
        dialogues: &[DialogueRecord],
    ) -> Result<CampaignOutcome, CampaignError> {
        let baseline = candidates.first().ok_or(CampaignError::NoCandidates)?;
        let mut ids = BTreeSet::new();
        for candidate in candidates {
            if !ids.insert(candidate.id.as_str()) {
                return Err(CampaignError::DuplicateCandidate(candidate.id.clone()));
            }
        }

        let initial = self.extract_initial_presence(dialogues)?;
        let mut runs = Vec::with_capacity(candidates.len());
        for candidate in candidates {
            let run = self.run_candidate(candidate, &initial, dialogues)?;
            log::info!(
                "candidate \"{}\": {} items, {} generated, {} cached, {} failed",
                candidate.id,
                run.stats.items,
                run.stats.generated,
                run.stats.cache_hits,
                run.stats.failed
            );
            runs.push(run);
        }

        let excluded: BTreeSet<ItemKey> = initial
            .failures
            .keys()
            .cloned()
            .chain(
                runs.iter()
                    .flat_map(|r| r.records.iter().filter(|x| x.failed()).map(RunRecord::key)),
            )
            .collect();
        for run in &mut runs {
            let failures = run.result.failures;
            run.result = tally_candidate(
                self.theory,
                &self.coefficients,
                &run.result.candidate_id,
                &run.records,
                &excluded,
            )?;
            run.result.failures = failures;
        }

        let results: Vec<CandidateResult> = runs.iter().map(|r| r.result.clone()).collect();
        let ranking = rank_candidates(&results, Some(&baseline.id))?;
        Ok(CampaignOutcome {
            initial,
            results: CampaignResults {
                baseline_id: baseline.id.clone(),
                dialogues: dialogues.len(),
                excluded_items: excluded.into_iter().collect(),
                results,
                ranking,
            },
            runs,
        })
    }
}

/// Tallies a candidate's records into per-value counts and scores,
/// skipping `excluded` items.
pub fn tally_candidate(
    theory: &ValueTheory,
    coeffs: &Coefficients,
    candidate_id: &str,
    records: &[RunRecord],
    excluded: &BTreeSet<ItemKey>,
) -> Result<CandidateResult, CampaignError> {
    let mut counts: BTreeMap<&ValueId, TransitionCounts> = theory
        .values
        .iter()
        .map(|v| (&v.id, TransitionCounts::empty(v.id.clone())))
        .collect();
    let mut failures = 0;
    for record in records {
        if record.failed() {
            failures += 1;
        }
        if record.failed() || excluded.contains(&record.key()) {
            continue;
        }
        let tally = counts.get_mut(&record.value_id).ok_or_else(|| {
            CampaignError::ValueSetMismatch(format!("record for unknown value \"{}\"", record.value_id))
        })?;
        tally.record(classify_transition(record.before, record.after));
    }

    let mut per_value = Vec::with_capacity(theory.values.len());
    for value in &theory.values {
        let counts = counts.remove(&value.id).expect("every theory value has a tally");
        let score = ValueScore::compute(&counts, coeffs)?;
        per_value.push(ValueResult { counts, score });
    }
    let normalized: BTreeMap<ValueId, f64> = per_value
        .iter()
        .map(|r| (r.counts.value.clone(), r.score.normalized))
        .collect();
    let final_score = scoring::final_score(&normalized, &theory.effective_weights())?;
    Ok(CandidateResult {
        candidate_id: candidate_id.to_string(),
        per_value,
        final_score,
        failures,
    })
}

/// Orders results by final score, best first; equal scores fall back to
/// candidate id order.
pub fn rank_candidates(
    results: &[CandidateResult],
    baseline_id: Option<&str>,
) -> Result<Vec<RankEntry>, CampaignError> {
    let first = results.first().ok_or(CampaignError::NoCandidates)?;
    let reference: BTreeSet<ValueId> = first.value_ids().into_iter().collect();
    for result in &results[1..] {
        let values: BTreeSet<ValueId> = result.value_ids().into_iter().collect();
        if values != reference {
            return Err(CampaignError::ValueSetMismatch(format!(
                "\"{}\" and \"{}\" were scored on different values",
                first.candidate_id, result.candidate_id
            )));
        }
    }
    let mut sorted: Vec<&CandidateResult> = results.iter().collect();
    sorted.sort_by(|a, b| {
        b.final_score
            .total_cmp(&a.final_score)
            .then_with(|| a.candidate_id.cmp(&b.candidate_id))
    });
    Ok(sorted
        .into_iter()
        .enumerate()
        .map(|(i, r)| RankEntry {
            rank: i + 1,
            candidate_id: r.candidate_id.clone(),
            final_score: r.final_score,
            baseline: baseline_id == Some(r.candidate_id.as_str()),
        })
        .collect())
}

fn file_stem(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn write_file(path: &Path, body: &str) -> Result<(), CampaignError> {
    fs::write(path, body).map_err(|e| CampaignError::Output {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

fn jsonl<T: Serialize>(rows: &[T]) -> String {
    let mut out = String::new();
    for row in rows {
        out.push_str(&serde_json::to_string(row).expect("run records always serialise"));
        out.push('\n');
    }
    out
}

/// Writes step-one detections, per-candidate run records and the results
/// document under `dir`.
pub fn write_run_outputs(dir: &Path, outcome: &CampaignOutcome) -> Result<(), CampaignError> {
    let records_dir = dir.join("records");
    fs::create_dir_all(&records_dir).map_err(|e| CampaignError::Output {
        path: records_dir.display().to_string(),
        reason: e.to_string(),
    })?;
    write_file(&dir.join("initial_presence.jsonl"), &jsonl(&outcome.initial.records()))?;
    for run in &outcome.runs {
        let path = records_dir.join(format!("{}.jsonl", file_stem(&run.result.candidate_id)));
        write_file(&path, &jsonl(&run.records))?;
    }
    let results = serde_json::to_string_pretty(&outcome.results).expect("results always serialise");
    write_file(&dir.join("results.json"), &(results + "\n"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Value;

    fn result(id: &str, final_score: f64, values: &[&str]) -> CandidateResult {
        CandidateResult {
            candidate_id: id.to_string(),
            per_value: values
                .iter()
                .map(|v| {
                    let counts = TransitionCounts::from_transitions(ValueId::new(v), 1, 0, 0, 0);
                    let score = ValueScore::compute(&counts, &Coefficients::default()).unwrap();
                    ValueResult { counts, score }
                })
                .collect(),
            final_score,
            failures: 0,
        }
    }

    #[test]
    fn ranking_by_score() {
        let results = [result("baseline", 0.57, &["a"]), result("candidate", 0.83, &["a"])];
        let ranking = rank_candidates(&results, Some("baseline")).unwrap();
        assert_eq!(ranking[0].candidate_id, "candidate");
        assert_eq!(ranking[1].rank, 2);
        assert!(ranking[1].baseline);
    }

    #[test]
    fn ranking_ties_by_id() {
        let results = [result("zeta", 0.5, &["a"]), result("alpha", 0.5, &["a"])];
        let ranking = rank_candidates(&results, None).unwrap();
        assert_eq!(ranking[0].candidate_id, "alpha");
    }

    #[test]
    fn ranking_singleton_and_mismatch() {
        assert_eq!(rank_candidates(&[result("only", 0.1, &["a"])], None).unwrap().len(), 1);
        let mixed = [result("x", 0.1, &["a"]), result("y", 0.2, &["b"])];
        assert!(matches!(
            rank_candidates(&mixed, None),
            Err(CampaignError::ValueSetMismatch(_))
        ));
        assert!(matches!(rank_candidates(&[], None), Err(CampaignError::NoCandidates)));
    }

    #[test]
    fn failed_records_are_excluded() {
        let theory = ValueTheory::new("t", vec![Value::new("a")]);
        let rec = |d: &str, before, after, failed| RunRecord {
            dialogue_id: d.into(),
            value_id: ValueId::new("a"),
            candidate_id: "c".into(),
            before,
            completion: String::new(),
            after,
            flags: if failed { vec![RunFlag::Failed] } else { vec![] },
            fingerprint: String::new(),
            error: None,
        };
        let records = [
            rec("1", true, true, false),
            rec("2", false, false, true),
            rec("3", false, true, false),
        ];
        let excluded = BTreeSet::from([ItemKey::new("3", ValueId::new("a"))]);
        let r = tally_candidate(&theory, &Coefficients::default(), "c", &records, &excluded).unwrap();
        assert_eq!(r.per_value[0].counts.total(), 1);
        assert_eq!(r.per_value[0].counts.retains, 1);
        assert_eq!(r.failures, 1);
    }

    #[test]
    fn file_stems_are_safe() {
        assert_eq!(file_stem("my cand/1"), "my_cand_1");
    }
}
