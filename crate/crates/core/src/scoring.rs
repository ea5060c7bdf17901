//! Transition counting, per-value scores, score bounds, normalisation and
//! the weighted final score.
//!
//! For a value `v`, every test input contributes one `(before, after)`
//! presence pair. The pairs are tallied into gains, retains, losses and
//! neutrals, combined linearly with [`Coefficients`] into a raw score, and
//! mapped onto `[0, 1]` using the best and worst scores attainable given how
//! many inputs initially carried the value.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Coefficients, ValueId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScoringError {
    #[error("empty dataset for value \"{0}\"")]
    EmptyDataset(ValueId),
    #[error("degenerate bounds: min {min} is not below max {max}")]
    DegenerateBounds { min: f64, max: f64 },
    #[error("score out of bounds: {raw} not in [{min}, {max}]")]
    ScoreOutOfBounds { raw: f64, min: f64, max: f64 },
    #[error("incomplete weights: no weight for value \"{0}\"")]
    IncompleteWeights(ValueId),
    #[error("degenerate weights: {0}")]
    DegenerateWeights(String),
    #[error("no per-value scores given")]
    NoScores,
    #[error("value set mismatch: {0}")]
    ValueSetMismatch(String),
    #[error("inconsistent counts for \"{value}\": {detail}")]
    InconsistentCounts { value: ValueId, detail: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transition {
    Gain,
    Retain,
    Loss,
    Neutral,
}

pub fn classify_transition(before: bool, after: bool) -> Transition {
    match (before, after) {
        (false, true) => Transition::Gain,
        (true, true) => Transition::Retain,
        (true, false) => Transition::Loss,
        (false, false) => Transition::Neutral,
    }
}

/// Tallies of the four transitions for one value, with the initial
/// presence split (`E_v`, `Ē_v`) they imply.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionCounts {
    pub value: ValueId,
    pub gains: u64,
    pub retains: u64,
    pub losses: u64,
    pub neutrals: u64,
    pub initial_present: u64,
    pub initial_absent: u64,
}

impl TransitionCounts {
    pub fn empty(value: ValueId) -> Self {
        Self::from_transitions(value, 0, 0, 0, 0)
    }

    pub fn from_transitions(value: ValueId, gains: u64, retains: u64, losses: u64, neutrals: u64) -> Self {
        Self {
            value,
            gains,
            retains,
            losses,
            neutrals,
            initial_present: retains + losses,
            initial_absent: gains + neutrals,
        }
    }

    /// Builds counts from a published row, checking `E_v` and `Ē_v`
    /// against the transitions.
    pub fn with_initial(
        value: ValueId,
        initial_present: u64,
        initial_absent: u64,
        gains: u64,
        retains: u64,
        losses: u64,
        neutrals: u64,
    ) -> Result<Self, ScoringError> {
        let counts = Self {
            value,
            gains,
            retains,
            losses,
            neutrals,
            initial_present,
            initial_absent,
        };
        counts.check()?;
        Ok(counts)
    }

    pub fn record(&mut self, transition: Transition) {
        match transition {
            Transition::Gain => {
                self.gains += 1;
                self.initial_absent += 1;
            }
            Transition::Retain => {
                self.retains += 1;
                self.initial_present += 1;
            }
            Transition::Loss => {
                self.losses += 1;
                self.initial_present += 1;
            }
            Transition::Neutral => {
                self.neutrals += 1;
                self.initial_absent += 1;
            }
        }
    }

    /// Component-wise sum of two partial tallies of the same value.
    pub fn merge(&mut self, other: &TransitionCounts) -> Result<(), ScoringError> {
        if self.value != other.value {
            return Err(ScoringError::ValueSetMismatch(format!(
                "cannot merge counts of \"{}\" into \"{}\"",
                other.value, self.value
            )));
        }
        self.gains += other.gains;
        self.retains += other.retains;
        self.losses += other.losses;
        self.neutrals += other.neutrals;
        self.initial_present += other.initial_present;
        self.initial_absent += other.initial_absent;
        Ok(())
    }

    /// Number of inputs, `|D|`.
    pub fn total(&self) -> u64 {
        self.gains + self.retains + self.losses + self.neutrals
    }

    pub fn check(&self) -> Result<(), ScoringError> {
        let fail = |detail: String| ScoringError::InconsistentCounts {
            value: self.value.clone(),
            detail,
        };
        if self.retains + self.losses != self.initial_present {
            return Err(fail(format!(
                "retains {} + losses {} != initially present {}",
                self.retains, self.losses, self.initial_present
            )));
        }
        if self.gains + self.neutrals != self.initial_absent {
            return Err(fail(format!(
                "gains {} + neutrals {} != initially absent {}",
                self.gains, self.neutrals, self.initial_absent
            )));
        }
        Ok(())
    }
}

/// Tallies `(before, after)` presence pairs for one value.
pub fn accumulate_counts<I>(value: ValueId, pairs: I) -> Result<TransitionCounts, ScoringError>
where
    I: IntoIterator<Item = (bool, bool)>,
{
    let mut counts = TransitionCounts::empty(value);
    for (before, after) in pairs {
        counts.record(classify_transition(before, after));
    }
    if counts.total() == 0 {
        return Err(ScoringError::EmptyDataset(counts.value));
    }
    Ok(counts)
}

/// Raw score `S_v`.
pub fn score_value(counts: &TransitionCounts, coeffs: &Coefficients) -> f64 {
    coeffs.alpha * counts.gains as f64
        + coeffs.beta * counts.retains as f64
        + coeffs.gamma * counts.losses as f64
        + coeffs.delta * counts.neutrals as f64
}

/// Worst and best raw scores attainable given the initial presence split:
/// every absent input gained and every present one retained at best, every
/// present one lost and every absent one left neutral at worst.
pub fn score_bounds(counts: &TransitionCounts, coeffs: &Coefficients) -> Result<(f64, f64), ScoringError> {
    if counts.initial_present + counts.initial_absent == 0 {
        return Err(ScoringError::EmptyDataset(counts.value.clone()));
    }
    let present = counts.initial_present as f64;
    let absent = counts.initial_absent as f64;
    let s_max = coeffs.alpha * absent + coeffs.beta * present;
    let s_min = coeffs.gamma * present + coeffs.delta * absent;
    if s_min >= s_max {
        return Err(ScoringError::DegenerateBounds { min: s_min, max: s_max });
    }
    Ok((s_min, s_max))
}

/// Affine map of `raw` from `[s_min, s_max]` onto `[0, 1]`.
///
/// A raw score outside the bounds means the counts were mis-accounted
/// upstream, so it is reported rather than clamped. Only float noise of a
/// few ulps is absorbed.
pub fn normalize_score(raw: f64, s_min: f64, s_max: f64) -> Result<f64, ScoringError> {
    if s_min.partial_cmp(&s_max) != Some(Ordering::Less) || !s_min.is_finite() || !s_max.is_finite() {
        return Err(ScoringError::DegenerateBounds { min: s_min, max: s_max });
    }
    let slack = 1e-9 * s_min.abs().max(s_max.abs()).max(1.0);
    if !raw.is_finite() || raw < s_min - slack || raw > s_max + slack {
        return Err(ScoringError::ScoreOutOfBounds {
            raw,
            min: s_min,
            max: s_max,
        });
    }
    Ok(((raw - s_min) / (s_max - s_min)).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueScore {
    pub value: ValueId,
    pub raw: f64,
    pub s_min: f64,
    pub s_max: f64,
    pub normalized: f64,
}

impl ValueScore {
    pub fn compute(counts: &TransitionCounts, coeffs: &Coefficients) -> Result<Self, ScoringError> {
        counts.check()?;
        let raw = score_value(counts, coeffs);
        let (s_min, s_max) = score_bounds(counts, coeffs)?;
        let normalized = normalize_score(raw, s_min, s_max)?;
        Ok(Self {
            value: counts.value.clone(),
            raw,
            s_min,
            s_max,
            normalized,
        })
    }
}

/// Weighted mean of normalised per-value scores; the arithmetic mean under
/// uniform weights.
pub fn final_score(per_value: &BTreeMap<ValueId, f64>, weights: &BTreeMap<ValueId, f64>) -> Result<f64, ScoringError> {
    if per_value.is_empty() {
        return Err(ScoringError::NoScores);
    }
    let mut weighted = 0.0;
    let mut total_weight = 0.0;
    for (value, score) in per_value {
        let weight = *weights
            .get(value)
            .ok_or_else(|| ScoringError::IncompleteWeights(value.clone()))?;
        if !weight.is_finite() || weight < 0.0 {
            return Err(ScoringError::DegenerateWeights(format!(
                "weight of \"{value}\" is {weight}"
            )));
        }
        weighted += weight * score;
        total_weight += weight;
    }
    if total_weight <= 0.0 {
        return Err(ScoringError::DegenerateWeights("all weights are zero".into()));
    }
    Ok(weighted / total_weight)
}

/// Per-value `candidate - baseline` of normalised scores.
pub fn delta_scores(
    baseline: &BTreeMap<ValueId, f64>,
    candidate: &BTreeMap<ValueId, f64>,
) -> Result<BTreeMap<ValueId, f64>, ScoringError> {
    if !baseline.keys().eq(candidate.keys()) {
        let only_baseline: Vec<_> = baseline
            .keys()
            .filter(|k| !candidate.contains_key(*k))
            .map(ValueId::as_str)
            .collect();
        let only_candidate: Vec<_> = candidate
            .keys()
            .filter(|k| !baseline.contains_key(*k))
            .map(ValueId::as_str)
            .collect();
        return Err(ScoringError::ValueSetMismatch(format!(
            "only in baseline: [{}]; only in candidate: [{}]",
            only_baseline.join(", "),
            only_candidate.join(", ")
        )));
    }
    Ok(baseline
        .iter()
        .map(|(value, base)| (value.clone(), candidate[value] - base))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(id: &str) -> ValueId {
        ValueId::new(id)
    }

    #[test]
    fn transition_table() {
        assert_eq!(classify_transition(false, true), Transition::Gain);
        assert_eq!(classify_transition(true, true), Transition::Retain);
        assert_eq!(classify_transition(true, false), Transition::Loss);
        assert_eq!(classify_transition(false, false), Transition::Neutral);
    }

    #[test]
    fn one_of_each_pair() {
        let c = accumulate_counts(v("power"), [(false, true), (true, true), (true, false), (false, false)]).unwrap();
        assert_eq!((c.gains, c.retains, c.losses, c.neutrals), (1, 1, 1, 1));
        assert_eq!((c.initial_present, c.initial_absent), (2, 2));
    }

    #[test]
    fn uniform_retains() {
        let c = accumulate_counts(v("power"), std::iter::repeat_n((true, true), 5)).unwrap();
        assert_eq!(
            (c.gains, c.retains, c.losses, c.neutrals, c.initial_present),
            (0, 5, 0, 0, 5)
        );
    }

    #[test]
    fn empty_pairs_fault() {
        assert_eq!(
            accumulate_counts(v("power"), std::iter::empty()),
            Err(ScoringError::EmptyDataset(v("power")))
        );
    }

    #[test]
    fn benevolence_baseline_identity() {
        let mut pairs = Vec::new();
        pairs.extend(std::iter::repeat_n((false, true), 261));
        pairs.extend(std::iter::repeat_n((true, true), 318));
        pairs.extend(std::iter::repeat_n((true, false), 55));
        pairs.extend(std::iter::repeat_n((false, false), 366));
        let c = accumulate_counts(v("benevolence"), pairs).unwrap();
        assert_eq!((c.initial_present, c.initial_absent), (373, 627));
    }

    #[test]
    fn raw_scores_from_published_rows() {
        let coeffs = Coefficients::default();
        let bene = TransitionCounts::from_transitions(v("benevolence"), 261, 318, 55, 366);
        assert_eq!(score_value(&bene, &coeffs), 341.0);
        let conf = TransitionCounts::from_transitions(v("conformity"), 313, 201, 48, 438);
        assert_eq!(score_value(&conf, &coeffs), 247.0);
        assert_eq!(score_value(&TransitionCounts::empty(v("x")), &coeffs), 0.0);
    }

    #[test]
    fn bounds_from_published_rows() {
        let coeffs = Coefficients::default();
        let bene = TransitionCounts::with_initial(v("benevolence"), 373, 627, 261, 318, 55, 366).unwrap();
        assert_eq!(score_bounds(&bene, &coeffs).unwrap(), (-686.5, 1000.0));
        let conf = TransitionCounts::with_initial(v("conformity"), 249, 751, 232, 180, 69, 519).unwrap();
        assert_eq!(score_bounds(&conf, &coeffs).unwrap(), (-624.5, 1000.0));
        let absent = TransitionCounts::from_transitions(v("x"), 0, 0, 0, 4);
        assert_eq!(score_bounds(&absent, &coeffs).unwrap(), (-2.0, 4.0));
        assert!(matches!(
            score_bounds(&TransitionCounts::empty(v("x")), &coeffs),
            Err(ScoringError::EmptyDataset(_))
        ));
    }

    #[test]
    fn inconsistent_published_row_is_rejected() {
        assert!(TransitionCounts::with_initial(v("x"), 10, 5, 1, 2, 3, 4).is_err());
    }

    #[test]
    fn normalisation_examples() {
        let bene = normalize_score(341.0, -686.5, 1000.0).unwrap();
        assert!((bene - 1027.5 / 1686.5).abs() < 1e-12, "{bene}");
        let selfdir = normalize_score(-8.5, -655.0, 1000.0).unwrap();
        assert!((selfdir - 646.5 / 1655.0).abs() < 1e-12, "{selfdir}");
        assert_eq!(normalize_score(1000.0, -686.5, 1000.0).unwrap(), 1.0);
        assert_eq!(normalize_score(-686.5, -686.5, 1000.0).unwrap(), 0.0);
    }

    #[test]
    fn normalisation_faults() {
        assert!(matches!(
            normalize_score(0.0, 1.0, 1.0),
            Err(ScoringError::DegenerateBounds { .. })
        ));
        assert!(matches!(
            normalize_score(0.0, 2.0, 1.0),
            Err(ScoringError::DegenerateBounds { .. })
        ));
        assert!(matches!(
            normalize_score(5.0, 0.0, 4.0),
            Err(ScoringError::ScoreOutOfBounds { .. })
        ));
        assert!(matches!(
            normalize_score(-0.1, 0.0, 4.0),
            Err(ScoringError::ScoreOutOfBounds { .. })
        ));
    }

    fn map(pairs: &[(&str, f64)]) -> BTreeMap<ValueId, f64> {
        pairs.iter().map(|(k, s)| (v(k), *s)).collect()
    }

    #[test]
    fn final_score_examples() {
        let single = map(&[("power", 0.7)]);
        assert_eq!(final_score(&single, &map(&[("power", 1.0)])).unwrap(), 0.7);

        let scores = map(&[("a", 0.2), ("b", 0.8)]);
        let weighted = final_score(&scores, &map(&[("a", 3.0), ("b", 1.0)])).unwrap();
        assert!((weighted - 0.35).abs() < 1e-12);
    }

    #[test]
    fn final_score_faults() {
        let scores = map(&[("a", 0.2), ("b", 0.8)]);
        assert_eq!(
            final_score(&scores, &map(&[("a", 1.0)])),
            Err(ScoringError::IncompleteWeights(v("b")))
        );
        assert!(matches!(
            final_score(&scores, &map(&[("a", 0.0), ("b", 0.0)])),
            Err(ScoringError::DegenerateWeights(_))
        ));
        assert_eq!(
            final_score(&BTreeMap::new(), &BTreeMap::new()),
            Err(ScoringError::NoScores)
        );
    }

    #[test]
    fn delta_examples() {
        let base = map(&[("benevolence", 0.61), ("self-direction", 0.39)]);
        let cand = map(&[("benevolence", 0.80), ("self-direction", 0.85)]);
        let d = delta_scores(&base, &cand).unwrap();
        assert!((d[&v("benevolence")] - 0.19).abs() < 1e-12);
        assert!((d[&v("self-direction")] - 0.46).abs() < 1e-12);
        assert!(delta_scores(&base, &base).unwrap().values().all(|x| *x == 0.0));
        let other = map(&[("benevolence", 0.5)]);
        assert!(matches!(
            delta_scores(&base, &other),
            Err(ScoringError::ValueSetMismatch(_))
        ));
    }

    #[test]
    fn merge_requires_same_value() {
        let mut a = TransitionCounts::from_transitions(v("a"), 1, 2, 3, 4);
        let b = TransitionCounts::from_transitions(v("a"), 4, 3, 2, 1);
        a.merge(&b).unwrap();
        assert_eq!(a, TransitionCounts::from_transitions(v("a"), 5, 5, 5, 5));
        let c = TransitionCounts::from_transitions(v("c"), 0, 0, 0, 1);
        assert!(a.merge(&c).is_err());
    }

    fn fold_oracle(pairs: &[(bool, bool)], c: &Coefficients) -> f64 {
        pairs
            .iter()
            .map(|&(before, after)| match (before, after) {
                (false, true) => c.alpha,
                (true, true) => c.beta,
                (true, false) => c.gamma,
                (false, false) => c.delta,
            })
            .sum()
    }

    proptest! {
        #[test]
        fn counts_match_direct_fold(pairs in prop::collection::vec(any::<(bool, bool)>(), 1..=64)) {
            let coeffs = Coefficients::default();
            let counts = accumulate_counts(v("x"), pairs.iter().copied()).unwrap();
            prop_assert_eq!(counts.total() as usize, pairs.len());
            prop_assert_eq!(counts.initial_present as usize, pairs.iter().filter(|p| p.0).count());
            prop_assert!(counts.check().is_ok());
            prop_assert_eq!(score_value(&counts, &coeffs), fold_oracle(&pairs, &coeffs));
        }

        #[test]
        fn default_bounds_closed_form(g in 0u64..500, r in 0u64..500, l in 0u64..500, n in 0u64..500) {
            prop_assume!(g + r + l + n > 0);
            let counts = TransitionCounts::from_transitions(v("x"), g, r, l, n);
            let (lo, hi) = score_bounds(&counts, &Coefficients::default()).unwrap();
            prop_assert_eq!(hi, counts.total() as f64);
            prop_assert_eq!(lo, -(counts.initial_present as f64) - 0.5 * counts.initial_absent as f64);
            let score = ValueScore::compute(&counts, &Coefficients::default()).unwrap();
            prop_assert!((0.0..=1.0).contains(&score.normalized));
        }

        #[test]
        fn normalisation_is_monotone(lo in -1e4f64..0.0, span in 1e-3f64..1e4, a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let hi = lo + span;
            let (x, y) = (lo + a * span, lo + b * span);
            let nx = normalize_score(x, lo, hi).unwrap();
            let ny = normalize_score(y, lo, hi).unwrap();
            if x < y { prop_assert!(nx <= ny); } else { prop_assert!(nx >= ny); }
        }

        #[test]
        fn positive_scaling_keeps_normalised_score(
            g in 0u64..200, r in 0u64..200, l in 0u64..200, n in 0u64..200, k in 0.01f64..100.0
        ) {
            prop_assume!(g + r + l + n > 0);
            let counts = TransitionCounts::from_transitions(v("x"), g, r, l, n);
            let c = Coefficients::default();
            let base = ValueScore::compute(&counts, &c).unwrap();
            let scaled = ValueScore::compute(&counts, &c.scaled(k)).unwrap();
            prop_assert!((base.normalized - scaled.normalized).abs() < 1e-9);
            prop_assert!((scaled.raw - k * base.raw).abs() < 1e-6 * (1.0 + base.raw.abs() * k));
        }

        #[test]
        fn uniform_final_score_ignores_order(scores in prop::collection::vec(0.0f64..=1.0, 1..12)) {
            let ids: Vec<ValueId> = (0..scores.len()).map(|i| v(&format!("v{i}"))).collect();
            let weights: BTreeMap<_, _> = ids.iter().map(|id| (id.clone(), 1.0)).collect();
            let forward: BTreeMap<_, _> = ids.iter().cloned().zip(scores.iter().copied()).collect();
            let reversed: BTreeMap<_, _> = ids.iter().cloned().zip(scores.iter().rev().copied()).collect();
            let mean = scores.iter().sum::<f64>() / scores.len() as f64;
            prop_assert!((final_score(&forward, &weights).unwrap() - mean).abs() < 1e-12);
            prop_assert!((final_score(&reversed, &weights).unwrap() - mean).abs() < 1e-12);
        }
    }
}
