//! Campaign configuration file (TOML).
//!
//! ```toml
//! [model]
//! name = "my-model"
//! backend = "completions"        # completions | chat | scripted
//! endpoint = "http://localhost:8000"
//!
//! [detector]
//! kind = "remote"                # remote | lexicon
//! endpoint = "http://localhost:9000"
//!
//! [dataset]
//! name = "Commonsense-Dialogues"
//! path = "data/train.json"
//! adapter = "commonsense"
//! split = "train"
//! sample_size = 1000
//! ```
//!
//! Relative paths are resolved against the directory holding the file.
//! Omitted sections fall back to the case-study defaults: the ten Schwartz
//! values, the baseline and value-conditioned prompts, and coefficients
//! (1, 1, -1, -0.5).

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{load_dialogues, sample_split, Adapter, DatasetError, DatasetManifest, Rejection};
use crate::detector::{DetectorBackend, DetectorError, LexiconBackend, RemoteDetector};
use crate::domain::{
    validate_theory, Coefficients, DialogueRecord, PromptCandidate, Value, ValueId, ValueTheory, SCHWARTZ_VALUES,
};
use crate::generator::{
    ApiMode, GenerationParams, GeneratorBackend, GeneratorError, OpenAiGenerator, Script, ScriptedGenerator,
    USER_MARKER,
};
use crate::report::ManifestInputs;
use crate::transport::RetryPolicy;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid configuration:\n{}", .issues.iter().map(|i| format!("  - {i}")).collect::<Vec<_>>().join("\n"))]
    Invalid { issues: Vec<String> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelBackend {
    Completions,
    Chat,
    Scripted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorKind {
    Remote,
    Lexicon,
}

fn default_backend() -> ModelBackend {
    ModelBackend::Completions
}
fn default_model_timeout() -> u64 {
    120
}
fn default_detector_timeout() -> u64 {
    30
}
fn default_retries() -> u32 {
    3
}
fn default_max_tokens() -> u32 {
    256
}
fn default_stop() -> Vec<String> {
    vec![USER_MARKER.to_string()]
}
fn default_template() -> String {
    "vicuna".to_string()
}
fn default_threshold() -> f64 {
    0.5
}
fn default_theory_name() -> String {
    "Basic Human Values Theory".to_string()
}
fn default_values() -> Vec<String> {
    SCHWARTZ_VALUES.iter().map(|v| v.to_string()).collect()
}
fn default_dataset_type() -> String {
    "dialogues".to_string()
}
fn default_adapter() -> String {
    "canonical".to_string()
}
fn default_split() -> String {
    "full".to_string()
}
fn default_candidates() -> Vec<PromptCandidate> {
    vec![PromptCandidate::baseline(), PromptCandidate::value_conditioned()]
}
fn default_parallelism() -> usize {
    4
}
fn default_cache() -> PathBuf {
    PathBuf::from("cache")
}
fn default_output() -> PathBuf {
    PathBuf::from("output")
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub name: String,
    #[serde(default = "default_backend")]
    pub backend: ModelBackend,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    /// Name of the environment variable holding a bearer token.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    #[serde(default = "default_model_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "default_stop")]
    pub stop: Vec<String>,
    #[serde(default = "default_template")]
    pub template: String,
    /// Canned replies for the `scripted` backend.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script: Option<Script>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheorySection {
    #[serde(default = "default_theory_name")]
    pub name: String,
    #[serde(default = "default_values")]
    pub values: Vec<String>,
    /// Per-value weights of the final score; omitted values weigh 1.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub weights: BTreeMap<String, f64>,
}

impl Default for TheorySection {
    fn default() -> Self {
        Self {
            name: default_theory_name(),
            values: default_values(),
            weights: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSection {
    pub kind: DetectorKind,
    /// Name shown in the manifest; defaults to the backend's name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method_name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_detector_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    /// Keyword file for the `lexicon` kind.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lexicon: Option<PathBuf>,
}

impl DetectorSection {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        match self.kind {
            DetectorKind::Remote => {
                if self.endpoint.as_deref().is_none_or(|e| e.trim().is_empty()) {
                    out.push("detector.endpoint: required when detector.kind is \"remote\"".to_string());
                }
                if !(self.threshold > 0.0 && self.threshold <= 1.0) {
                    out.push(format!("detector.threshold: must be in (0, 1], got {}", self.threshold));
                }
                if self.timeout_secs == 0 {
                    out.push("detector.timeout_secs: must be positive".to_string());
                }
            }
            DetectorKind::Lexicon => match &self.lexicon {
                None => out.push("detector.lexicon: required when detector.kind is \"lexicon\"".to_string()),
                Some(path) if !path.is_file() => out.push(format!("detector.lexicon: no such file {}", path.display())),
                Some(_) => {}
            },
        }
        out
    }

    /// Builds the configured detector. With `connect`, a remote detector
    /// first queries the service's health endpoint.
    pub fn build(&self, connect: bool) -> Result<Box<dyn DetectorBackend>, DetectorError> {
        match self.kind {
            DetectorKind::Remote => {
                let endpoint = self
                    .endpoint
                    .as_deref()
                    .ok_or_else(|| DetectorError::InvalidSetting("detector.endpoint is not set".into()))?;
                let mut remote = RemoteDetector::new(endpoint, Duration::from_secs(self.timeout_secs), self.threshold)?
                    .with_retry(RetryPolicy {
                        max_retries: self.max_retries,
                        ..RetryPolicy::default()
                    });
                if connect {
                    remote = remote.connect()?;
                }
                Ok(Box::new(remote))
            }
            DetectorKind::Lexicon => {
                let path = self
                    .lexicon
                    .as_deref()
                    .ok_or_else(|| DetectorError::InvalidSetting("detector.lexicon is not set".into()))?;
                Ok(Box::new(LexiconBackend::from_path(path)?))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub name: String,
    #[serde(rename = "type", default = "default_dataset_type")]
    pub kind: String,
    pub path: PathBuf,
    #[serde(default = "default_adapter")]
    pub adapter: String,
    /// Name of the corpus split the file holds.
    #[serde(default = "default_split")]
    pub split: String,
    /// Records drawn from the file; all of them when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_size: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(default = "default_cache")]
    pub cache: PathBuf,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default = "default_true")]
    pub resume: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dispatch_seed: Option<u64>,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            parallelism: default_parallelism(),
            cache: default_cache(),
            output: default_output(),
            resume: true,
            dispatch_seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignFile {
    pub model: ModelSection,
    #[serde(default)]
    pub theory: TheorySection,
    pub detector: DetectorSection,
    pub dataset: DatasetSection,
    #[serde(default)]
    pub coefficients: Coefficients,
    #[serde(default)]
    pub run: RunSection,
    /// The first candidate is the baseline.
    #[serde(default = "default_candidates")]
    pub candidates: Vec<PromptCandidate>,
}

/// The parts of a campaign file needed to validate a detector; other
/// sections are ignored.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct DetectorFile {
    pub detector: DetectorSection,
    #[serde(default)]
    pub run: Option<RunSection>,
}

impl DetectorFile {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let raw = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut file: Self = toml::from_str(&raw).map_err(|e| ConfigError::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        file.detector.lexicon = file.detector.lexicon.as_deref().map(|p| resolve(base, p));
        if let Some(run) = &mut file.run {
            run.output = resolve(base, &run.output);
        }
        let issues = file.detector.violations();
        if !issues.is_empty() {
            return Err(ConfigError::Invalid { issues });
        }
        Ok(file)
    }
}

/// Dialogues selected for a campaign, with the records the loader refused.
#[derive(Debug, Clone)]
pub struct SelectedDataset {
    pub records: Vec<DialogueRecord>,
    /// Records not drawn into the sample, in shuffled order.
    pub holdout: Vec<DialogueRecord>,
    pub rejects: Vec<Rejection>,
    pub manifest: DatasetManifest,
}

fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

/// "1K samples from train split", "1500 samples from ...", or the whole file.
pub fn describe_split(split: &str, sample_size: Option<usize>, available: usize) -> String {
    match sample_size {
        Some(n) if n >= 1000 && n % 1000 == 0 => format!("{}K samples from {split} split", n / 1000),
        Some(n) => format!("{n} samples from {split} split"),
        None => format!("all {available} records of {split} split"),
    }
}

/// Formats a parameter without a trailing ".0" on whole numbers.
pub fn format_number(x: f64) -> String {
    if x.fract() == 0.0 && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        format!("{x}")
    }
}

impl CampaignFile {
    pub fn parse(raw: &str, origin: &str) -> Result<Self, ConfigError> {
        toml::from_str(raw).map_err(|e| ConfigError::Parse {
            path: origin.to_string(),
            message: e.to_string(),
        })
    }

    /// Reads and parses a file, resolving its relative paths against the
    /// file's directory. Semantic checks are left to [`CampaignFile::validate`].
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let raw = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut file = Self::parse(&raw, &path.display().to_string())?;
        let base = path.parent().unwrap_or(Path::new("."));
        file.dataset.path = resolve(base, &file.dataset.path);
        file.detector.lexicon = file.detector.lexicon.as_deref().map(|p| resolve(base, p));
        file.run.cache = resolve(base, &file.run.cache);
        file.run.output = resolve(base, &file.run.output);
        Ok(file)
    }

    /// The effective configuration, as persisted next to run outputs.
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("configuration always serialises")
    }

    /// Every problem found, one line each, prefixed by the offending field.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();

        let model = &self.model;
        if model.name.trim().is_empty() {
            out.push("model.name: must not be empty".to_string());
        }
        match model.backend {
            ModelBackend::Completions | ModelBackend::Chat => {
                if model.endpoint.as_deref().is_none_or(|e| e.trim().is_empty()) {
                    out.push(format!(
                        "model.endpoint: required when model.backend is \"{}\"",
                        if model.backend == ModelBackend::Chat {
                            "chat"
                        } else {
                            "completions"
                        }
                    ));
                }
            }
            ModelBackend::Scripted => {
                if model.script.is_none() {
                    out.push("model.script: required when model.backend is \"scripted\"".to_string());
                }
            }
        }
        if let Some(var) = &model.api_key_env {
            if std::env::var_os(var).is_none() {
                out.push(format!("model.api_key_env: environment variable {var} is not set"));
            }
        }
        if model.timeout_secs == 0 {
            out.push("model.timeout_secs: must be positive".to_string());
        }
        out.extend(
            self.generation_params()
                .violations()
                .into_iter()
                .map(|v| format!("model: {v}")),
        );

        out.extend(
            validate_theory(&self.theory())
                .into_iter()
                .map(|v| format!("theory: {v}")),
        );

        out.extend(self.detector.violations());

        let dataset = &self.dataset;
        if dataset.name.trim().is_empty() {
            out.push("dataset.name: must not be empty".to_string());
        }
        if !dataset.path.is_file() {
            out.push(format!("dataset.path: no such file {}", dataset.path.display()));
        }
        if let Err(e) = dataset.adapter.parse::<Adapter>() {
            out.push(format!("dataset.adapter: {e}"));
        }
        if dataset.sample_size == Some(0) {
            out.push("dataset.sample_size: must be positive".to_string());
        }

        if self.candidates.is_empty() {
            out.push("candidates: at least one candidate (the baseline) is required".to_string());
        }
        let mut ids = BTreeSet::new();
        for (i, c) in self.candidates.iter().enumerate() {
            if c.id.trim().is_empty() {
                out.push(format!("candidates[{i}].id: must not be empty"));
            } else if !ids.insert(c.id.as_str()) {
                out.push(format!("candidates[{i}].id: duplicate id \"{}\"", c.id));
            }
            if c.command_template.trim().is_empty() {
                out.push(format!("candidates[{i}].command: must not be empty"));
            }
        }

        if let Err(e) = self.coefficients.validate() {
            out.push(format!("coefficients: {e}"));
        }
        if self.run.parallelism == 0 {
            out.push("run.parallelism: must be at least 1".to_string());
        }
        out
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let issues = self.violations();
        if issues.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid { issues })
        }
    }

    pub fn theory(&self) -> ValueTheory {
        let values = self.theory.values.iter().map(Value::new).collect();
        let mut theory = ValueTheory::new(self.theory.name.clone(), values);
        if !self.theory.weights.is_empty() {
            theory = theory.with_weights(self.theory.weights.iter().map(|(k, w)| (ValueId::new(k), *w)));
        }
        theory
    }

    pub fn generation_params(&self) -> GenerationParams {
        GenerationParams {
            model_name: self.model.name.clone(),
            temperature: self.model.temperature,
            max_tokens: self.model.max_tokens,
            stop_sequences: self.model.stop.clone(),
            template_name: self.model.template.clone(),
        }
    }

    pub fn build_detector(&self, connect: bool) -> Result<Box<dyn DetectorBackend>, DetectorError> {
        self.detector.build(connect)
    }

    pub fn build_generator(&self) -> Result<Box<dyn GeneratorBackend>, GeneratorError> {
        let m = &self.model;
        let mode = match m.backend {
            ModelBackend::Scripted => {
                let script = m
                    .script
                    .clone()
                    .ok_or_else(|| GeneratorError::InvalidSetting("model.script is not set".into()))?;
                return Ok(Box::new(ScriptedGenerator::new(script)));
            }
            ModelBackend::Completions => ApiMode::Completions,
            ModelBackend::Chat => ApiMode::Chat,
        };
        let endpoint = m
            .endpoint
            .as_deref()
            .ok_or_else(|| GeneratorError::InvalidSetting("model.endpoint is not set".into()))?;
        let key = m.api_key_env.as_ref().and_then(|var| std::env::var(var).ok());
        Ok(Box::new(
            OpenAiGenerator::new(endpoint, mode, Duration::from_secs(m.timeout_secs))?
                .with_api_key(key)
                .with_retry(RetryPolicy {
                    max_retries: m.max_retries,
                    ..RetryPolicy::default()
                }),
        ))
    }

    /// Loads the dataset file and draws the configured sample.
    pub fn load_dataset(&self) -> Result<SelectedDataset, DatasetError> {
        let d = &self.dataset;
        let loaded = load_dialogues(&d.path, &d.adapter)?;
        let available = loaded.records.len();
        let manifest = DatasetManifest {
            name: d.name.clone(),
            kind: d.kind.clone(),
            source_path: d.path.display().to_string(),
            split_description: describe_split(&d.split, d.sample_size, available),
            sample_size: d.sample_size.unwrap_or(available),
            shuffle_seed: d.seed,
        };
        let (records, holdout) = match d.sample_size {
            Some(_) => sample_split(&loaded.records, &manifest)?,
            None => (loaded.records, Vec::new()),
        };
        Ok(SelectedDataset {
            records,
            holdout,
            rejects: loaded.rejects,
            manifest,
        })
    }

    /// The control-variable rows of the procedure manifest.
    pub fn manifest_inputs(&self, dataset: &DatasetManifest) -> ManifestInputs {
        let theory = self.theory();
        let m = &self.model;
        let mut llm_parameters = vec![
            format!("temperature: {}", format_number(m.temperature)),
            format!("max tokens: {}", m.max_tokens),
        ];
        if m.stop == default_stop() {
            llm_parameters.push(format!("prompt template and stop words: {}", m.template));
        } else {
            llm_parameters.push(format!("prompt template: {}", m.template));
            llm_parameters.push(format!("stop words: {}", m.stop.join(", ")));
        }

        let d = &self.detector;
        let (default_method, mut method_parameters) = match d.kind {
            DetectorKind::Remote => (
                "remote classifier".to_string(),
                vec![format!(
                    "thresholds: assign label if result >= {}",
                    format_number(d.threshold)
                )],
            ),
            DetectorKind::Lexicon => (
                "keyword lexicon".to_string(),
                vec![format!(
                    "lexicon: {}",
                    d.lexicon
                        .as_deref()
                        .and_then(Path::file_name)
                        .map(|n| n.to_string_lossy().into_owned())
                        .unwrap_or_default()
                )],
            ),
        };
        method_parameters.push("value extraction covers only the last two turns of the conversation".to_string());

        ManifestInputs {
            target_llm_name: m.name.clone(),
            target_llm_parameters: llm_parameters,
            value_theory: theory.name.clone(),
            value_list: theory.value_ids(),
            method_name: d.method_name.clone().unwrap_or(default_method),
            method_parameters,
            dataset_name: dataset.name.clone(),
            dataset_type: dataset.kind.clone(),
            dataset_split: dataset.split_description.clone(),
            weights: if theory.has_uniform_weights() {
                None
            } else {
                Some(theory.effective_weights())
            },
        }
    }
}
