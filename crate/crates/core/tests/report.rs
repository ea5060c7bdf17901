use std::collections::BTreeMap;
use std::fs;

use valsteer_core::campaign::{
    rank_candidates, write_run_outputs, Campaign, CampaignResults, CandidateResult, ValueResult,
};
use valsteer_core::detector::{LexiconBackend, LexiconEntry};
use valsteer_core::generator::{Cache, GenerationParams, Script, ScriptedGenerator};
use valsteer_core::report::{
    emit_comparison_data, emit_manifest, emit_value_table, write_reports, ManifestInputs, ProcedureManifest,
    ReportError,
};
use valsteer_core::scoring::{final_score, TransitionCounts, ValueScore};
use valsteer_core::{Coefficients, DialogueRecord, PromptCandidate, Turn, Value, ValueId, ValueTheory};

fn value_result(value: &str, g: u64, r: u64, l: u64, n: u64) -> ValueResult {
    let counts = TransitionCounts::from_transitions(ValueId::new(value), g, r, l, n);
    let score = ValueScore::compute(&counts, &Coefficients::default()).unwrap();
    ValueResult { counts, score }
}

fn candidate(id: &str, rows: Vec<ValueResult>) -> CandidateResult {
    let normalized: BTreeMap<ValueId, f64> = rows
        .iter()
        .map(|r| (r.counts.value.clone(), r.score.normalized))
        .collect();
    let weights = normalized.keys().map(|v| (v.clone(), 1.0)).collect();
    CandidateResult {
        candidate_id: id.into(),
        final_score: final_score(&normalized, &weights).unwrap(),
        per_value: rows,
        failures: 0,
    }
}

fn results() -> CampaignResults {
    let results = vec![
        candidate(
            "baseline",
            vec![
                value_result("security", 1, 2, 1, 6),
                value_result("hedonism", 0, 1, 2, 7),
            ],
        ),
        candidate(
            "candidate",
            vec![
                value_result("security", 5, 3, 0, 2),
                value_result("hedonism", 4, 2, 1, 3),
            ],
        ),
        candidate(
            "terse",
            vec![
                value_result("security", 2, 2, 1, 5),
                value_result("hedonism", 1, 3, 0, 6),
            ],
        ),
    ];
    let ranking = rank_candidates(&results, Some("baseline")).unwrap();
    CampaignResults {
        baseline_id: "baseline".into(),
        dialogues: 10,
        excluded_items: Vec::new(),
        results,
        ranking,
    }
}

fn inputs() -> ManifestInputs {
    ManifestInputs {
        target_llm_name: "scripted-demo".into(),
        target_llm_parameters: vec!["temperature: 0".into(), "max tokens: 256".into()],
        value_theory: "Basic Human Values Theory".into(),
        value_list: vec![ValueId::new("security"), ValueId::new("hedonism")],
        method_name: "keyword lexicon".into(),
        method_parameters: vec![
            "lexicon: lexicon.json".into(),
            "value extraction covers only the last two turns of the conversation".into(),
        ],
        dataset_name: "desk".into(),
        dataset_type: "dialogues".into(),
        dataset_split: "all 10 records of full split".into(),
        weights: None,
    }
}

#[test]
fn manifest_rows_follow_the_results_table() {
    let manifest = emit_manifest(&inputs(), &results()).unwrap();
    let rows = manifest.rows();
    let variables: Vec<&str> = rows.iter().map(|(v, _)| v.as_str()).collect();
    assert_eq!(
        variables,
        [
            "Target LLM name",
            "Target LLM parameters",
            "Value theory",
            "Value list",
            "Method name",
            "Method parameters",
            "Dataset name",
            "Dataset type",
            "Dataset split",
            "Weights",
            "Effective sample size",
            "Score p. baseline",
            "Score p. candidate",
            "Score p. terse",
        ]
    );
    let lookup = |name: &str| rows.iter().find(|(v, _)| v == name).unwrap().1.clone();
    assert_eq!(lookup("Value list"), ["security, hedonism"]);
    assert_eq!(lookup("Weights"), ["uniform"]);
    assert_eq!(lookup("Effective sample size"), ["10"]);
    assert_eq!(lookup("Method parameters").len(), 2);

    let md = manifest.to_markdown();
    assert!(md.starts_with("| Variable | Description |\n|---|---|\n"));
    assert!(md.contains("| Target LLM parameters | temperature: 0 |\n|  | max tokens: 256 |\n"));
}

#[test]
fn explicit_weights_are_listed() {
    let mut inputs = inputs();
    inputs.weights = Some(BTreeMap::from([
        (ValueId::new("hedonism"), 1.0),
        (ValueId::new("security"), 3.0),
    ]));
    let manifest = emit_manifest(&inputs, &results()).unwrap();
    let weights = manifest.rows().into_iter().find(|(v, _)| v == "Weights").unwrap().1;
    assert_eq!(weights, ["hedonism: 1", "security: 3"]);
}

#[test]
fn manifest_json_round_trip() {
    let manifest = emit_manifest(&inputs(), &results()).unwrap();
    let json = manifest.to_json();
    assert!(json.ends_with('\n'));
    assert_eq!(ProcedureManifest::from_json(&json).unwrap(), manifest);
    let order: Vec<&String> = manifest.score_candidates.keys().collect();
    assert_eq!(order, ["candidate", "terse"]);
}

#[test]
fn incomplete_inputs_are_refused() {
    let mut blank = inputs();
    blank.dataset_split = "  ".into();
    assert!(matches!(
        emit_manifest(&blank, &results()),
        Err(ReportError::Incomplete(_))
    ));

    let mut missing_baseline = results();
    missing_baseline.baseline_id = "nobody".into();
    assert!(matches!(
        emit_manifest(&inputs(), &missing_baseline),
        Err(ReportError::Incomplete(_))
    ));

    let mut reordered = inputs();
    reordered.value_list.reverse();
    assert!(matches!(
        emit_manifest(&reordered, &results()),
        Err(ReportError::Incomplete(_))
    ));
}

#[test]
fn value_table_and_comparison() {
    let results = results();
    let table = emit_value_table(&results.results[0], &results.results[1]).unwrap();
    let security = &table.rows[0];
    assert_eq!((security.initial_present, security.initial_absent), (3, 7));
    assert!((security.delta - (security.candidate.normalized - security.baseline.normalized)).abs() < 1e-15);
    assert_eq!(table.to_markdown().lines().count(), 2 + 2 + 2);

    let comparison = emit_comparison_data(&results.results).unwrap();
    assert_eq!(comparison.candidates, ["baseline", "candidate", "terse"]);
    let csv = comparison.to_csv();
    assert_eq!(csv.lines().next().unwrap(), "value,baseline,candidate,terse");
    assert_eq!(csv.lines().count(), 3);
    assert!(matches!(
        emit_comparison_data(&results.results[..1]),
        Err(ReportError::NotEnoughResults(1))
    ));
}

#[test]
fn write_reports_produces_every_file() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_reports(dir.path(), &inputs(), &results()).unwrap();
    for name in [
        "manifest.md",
        "manifest.json",
        "value_table.md",
        "value_table.json",
        "comparison.json",
        "comparison.csv",
        "ranking.md",
    ] {
        assert!(dir.path().join(name).is_file(), "{name}");
    }
    let stored = fs::read_to_string(dir.path().join("manifest.json")).unwrap();
    assert_eq!(ProcedureManifest::from_json(&stored).unwrap(), manifest);
    let tables: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("value_table.json")).unwrap()).unwrap();
    assert_eq!(tables.as_array().unwrap().len(), 2);
    let ranking = fs::read_to_string(dir.path().join("ranking.md")).unwrap();
    assert!(ranking.contains("(baseline)"));
}

#[test]
fn results_document_round_trip() {
    let theory = ValueTheory::new("t", vec![Value::new("security")]);
    let detector = LexiconBackend::new(BTreeMap::from([(
        ValueId::new("security"),
        LexiconEntry::new(["safe"], ["danger"]),
    )]))
    .unwrap();
    let generator = ScriptedGenerator::new(Script {
        default: Some("All safe.".into()),
        ..Script::default()
    });
    let cache_dir = tempfile::tempdir().unwrap();
    let cache = Cache::open(cache_dir.path()).unwrap();
    let dialogues: Vec<DialogueRecord> = (0..3)
        .map(|i| DialogueRecord::new(format!("d{i}"), vec![Turn::new("a", "Hi."), Turn::new("b", "Hello.")]))
        .collect();
    let outcome = Campaign {
        theory: &theory,
        detector: &detector,
        generator: &generator,
        cache: &cache,
        params: GenerationParams::default(),
        coefficients: Coefficients::default(),
        parallelism: 2,
        dispatch_seed: None,
    }
    .run(
        &[PromptCandidate::baseline(), PromptCandidate::value_conditioned()],
        &dialogues,
    )
    .unwrap();

    let out = tempfile::tempdir().unwrap();
    write_run_outputs(out.path(), &outcome).unwrap();
    let loaded = CampaignResults::load(&out.path().join("results.json")).unwrap();
    assert_eq!(loaded, outcome.results);
    let lines = fs::read_to_string(out.path().join("records/candidate.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 3);
    let initial = fs::read_to_string(out.path().join("initial_presence.jsonl")).unwrap();
    assert_eq!(initial.lines().count(), 3);
}
