use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use super::{fingerprint, GenerationParams, GeneratorBackend, GeneratorError, RawCompletion, RenderedPrompt};
use crate::domain::{ValueId, VALUE_PLACEHOLDER};

/// Canned completions, looked up by request fingerprint, then by target
/// value, then by candidate id, then the default. `{VALUE}` in a reply is
/// replaced by the target value id.
///
/// Value-keyed replies only make sense for candidates whose rendering
/// names the value. A value-independent rendering has one fingerprint, so
/// a single cached completion serves every value.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Script {
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub by_fingerprint: BTreeMap<String, String>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub by_value: BTreeMap<ValueId, String>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub by_candidate: BTreeMap<String, String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub default: Option<String>,
}

type Rule = Box<dyn Fn(&RenderedPrompt) -> Option<String> + Send + Sync>;

/// Offline generator replaying a [`Script`] or a rule closure; counts calls.
pub struct ScriptedGenerator {
    script: Script,
    rule: Option<Rule>,
    calls: AtomicUsize,
}

impl ScriptedGenerator {
    pub fn new(script: Script) -> Self {
        Self {
            script,
            rule: None,
            calls: AtomicUsize::new(0),
        }
    }

    /// A generator answering every prompt through `rule`, falling back to
    /// the script when the rule returns `None`.
    pub fn with_rule<F>(mut self, rule: F) -> Self
    where
        F: Fn(&RenderedPrompt) -> Option<String> + Send + Sync + 'static,
    {
        self.rule = Some(Box::new(rule));
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn reset_calls(&self) {
        self.calls.store(0, Ordering::SeqCst);
    }
}

impl std::fmt::Debug for ScriptedGenerator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ScriptedGenerator")
            .field("script", &self.script)
            .field("has_rule", &self.rule.is_some())
            .field("calls", &self.calls())
            .finish()
    }
}

impl GeneratorBackend for ScriptedGenerator {
    fn name(&self) -> &str {
        "scripted"
    }

    fn complete(&self, prompt: &RenderedPrompt, params: &GenerationParams) -> Result<RawCompletion, GeneratorError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let fp = fingerprint(&prompt.full_text, params, self.name());
        let reply = self
            .script
            .by_fingerprint
            .get(&fp)
            .cloned()
            .or_else(|| self.rule.as_ref().and_then(|rule| rule(prompt)))
            .or_else(|| {
                prompt
                    .value_id
                    .as_ref()
                    .and_then(|v| self.script.by_value.get(v).cloned())
            })
            .or_else(|| self.script.by_candidate.get(&prompt.candidate_id).cloned())
            .or_else(|| self.script.default.clone())
            .ok_or(GeneratorError::Unscripted { fingerprint: fp })?;
        let text = match &prompt.value_id {
            Some(v) => reply.replace(VALUE_PLACEHOLDER, v.as_str()),
            None => reply,
        };
        Ok(RawCompletion {
            text,
            finish_reason: Some("stop".to_string()),
        })
    }
}
