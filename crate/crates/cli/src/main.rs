//! `valsteer`: command-line entry point of the evaluation harness.
//!
//! Exit status: 0 on success, 1 when the configuration or an input file
//! is invalid, 2 when a run fails (unreachable backend, I/O, too many
//! failed items).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use valsteer_core::campaign::{rank_candidates, write_run_outputs, Campaign, CampaignResults, CandidateResult};
use valsteer_core::config::{CampaignFile, ConfigError, DetectorFile};
use valsteer_core::dataset::{write_canonical, DatasetError};
use valsteer_core::detector::{load_labeled_examples, validate_detector, DetectorError};
use valsteer_core::generator::{fingerprint, render_prompt, Cache};
use valsteer_core::report::{emit_comparison_data, ranking_markdown, write_reports, ManifestInputs, ReportError};

#[derive(Parser)]
#[command(
    name = "valsteer",
    version,
    about = "Measure how well prompt candidates steer a model toward a set of values"
)]
struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate every prompt candidate of a campaign and rank them.
    Run(RunArgs),
    /// Score the configured detector against a labeled CSV set.
    ValidateDetector(ValidateArgs),
    /// Draw the configured sample and write it (and the holdout) to disk.
    Split(SplitArgs),
    /// Rebuild the reports of a finished run from its stored results.
    Report(ReportArgs),
    /// Rank and compare candidates across stored results files.
    Compare(CompareArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `run.output`.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Overrides `run.cache`.
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Overrides `run.parallelism`.
    #[arg(long)]
    parallelism: Option<usize>,
    /// Render prompts and fingerprints without calling any backend.
    #[arg(long)]
    dry_run: bool,
    /// Reuse cached completions (the default).
    #[arg(long, overrides_with = "no_resume")]
    resume: bool,
    /// Regenerate every completion, overwriting cached entries.
    #[arg(long, overrides_with = "resume")]
    no_resume: bool,
}

#[derive(Args)]
struct ValidateArgs {
    /// Campaign file; only its `[detector]` section is read.
    #[arg(long)]
    config: PathBuf,
    /// CSV with a `text,value,label` header.
    #[arg(long)]
    labeled: PathBuf,
    /// Directory for `validation.json`; defaults to `run.output`.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Run directory holding `results.json` and `control_variables.json`.
    #[arg(long, required_unless_present = "config")]
    output: Option<PathBuf>,
    /// Campaign file whose `run.output` names the run directory.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// `results.json` files or run directories containing one.
    #[arg(required = true)]
    results: Vec<PathBuf>,
    #[arg(long)]
    output: PathBuf,
}

enum Fault {
    Validation(String),
    Runtime(String),
}

impl Fault {
    fn runtime(e: impl std::fmt::Display) -> Self {
        Fault::Runtime(e.to_string())
    }
}

impl From<ConfigError> for Fault {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => Fault::Runtime(e.to_string()),
            _ => Fault::Validation(e.to_string()),
        }
    }
}

impl From<DatasetError> for Fault {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::Io { .. } => Fault::Runtime(e.to_string()),
            _ => Fault::Validation(e.to_string()),
        }
    }
}

impl From<DetectorError> for Fault {
    fn from(e: DetectorError) -> Self {
        match e {
            DetectorError::InvalidLexicon(_)
            | DetectorError::AmbiguousLexicon { .. }
            | DetectorError::InvalidSetting(_)
            | DetectorError::LabeledSetFormat { .. }
            | DetectorError::EmptyValidationSet => Fault::Validation(e.to_string()),
            _ => Fault::Runtime(e.to_string()),
        }
    }
}

impl From<ReportError> for Fault {
    fn from(e: ReportError) -> Self {
        Fault::Runtime(e.to_string())
    }
}

fn write_file(path: &Path, body: &str) -> Result<(), Fault> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Fault::Runtime(format!("{}: {e}", parent.display())))?;
    }
    fs::write(path, body).map_err(|e| Fault::Runtime(format!("{}: {e}", path.display())))
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("output documents always serialise") + "\n"
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Fault> {
    let raw = fs::read_to_string(path).map_err(|e| Fault::Runtime(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&raw).map_err(|e| Fault::Validation(format!("{}: {e}", path.display())))
}

fn load_campaign(args: &RunArgs) -> Result<CampaignFile, Fault> {
    let mut file = CampaignFile::load(&args.config)?;
    if let Some(output) = &args.output {
        file.run.output = output.clone();
    }
    if let Some(cache) = &args.cache {
        file.run.cache = cache.clone();
    }
    if let Some(parallelism) = args.parallelism {
        file.run.parallelism = parallelism;
    }
    if args.no_resume {
        file.run.resume = false;
    } else if args.resume {
        file.run.resume = true;
    }
    file.validate()?;
    Ok(file)
}

fn command_run(args: &RunArgs) -> Result<(), Fault> {
    let file = load_campaign(args)?;
    let out = file.run.output.clone();
    let dataset = file.load_dataset()?;
    if dataset.records.is_empty() {
        return Err(Fault::Validation(format!(
            "{}: empty dataset",
            file.dataset.path.display()
        )));
    }
    write_file(&out.join("config.snapshot.toml"), &file.to_toml())?;
    write_file(&out.join("rejects.json"), &to_json(&dataset.rejects))?;
    write_file(&out.join("dataset_manifest.json"), &to_json(&dataset.manifest))?;

    let theory = file.theory();
    let params = file.generation_params();
    let generator = file.build_generator().map_err(Fault::runtime)?;

    if args.dry_run {
        let mut lines = String::new();
        let mut cached = 0;
        let mut total = 0;
        for candidate in &file.candidates {
            for value in &theory.values {
                for dialogue in &dataset.records {
                    let prompt = render_prompt(candidate, Some(&value.id), dialogue).map_err(Fault::runtime)?;
                    let fp = fingerprint(&prompt.full_text, &params, generator.name());
                    let hit = file.run.resume && file.run.cache.join(format!("{fp}.json")).is_file();
                    cached += usize::from(hit);
                    total += 1;
                    lines.push_str(
                        &serde_json::json!({
                            "candidate_id": candidate.id,
                            "value_id": value.id,
                            "dialogue_id": dialogue.id,
                            "fingerprint": fp,
                            "cached": hit,
                            "prompt": prompt.full_text,
                        })
                        .to_string(),
                    );
                    lines.push('\n');
                }
            }
        }
        write_file(&out.join("dry_run.jsonl"), &lines)?;
        println!(
            "dry run: {total} generation items ({cached} cached) over {} dialogues; prompts in {}",
            dataset.records.len(),
            out.join("dry_run.jsonl").display()
        );
        return Ok(());
    }

    let detector = file.build_detector(true)?;
    let mut cache = Cache::open(&file.run.cache).map_err(Fault::runtime)?;
    if !file.run.resume {
        cache = cache.write_only();
    }
    let campaign = Campaign {
        theory: &theory,
        detector: detector.as_ref(),
        generator: generator.as_ref(),
        cache: &cache,
        params,
        coefficients: file.coefficients,
        parallelism: file.run.parallelism,
        dispatch_seed: file.run.dispatch_seed,
    };
    let outcome = campaign
        .run(&file.candidates, &dataset.records)
        .map_err(Fault::runtime)?;
    for run in &outcome.runs {
        log::info!(
            "{}: {} generated, {} from cache, {} failed",
            run.result.candidate_id,
            run.stats.generated,
            run.stats.cache_hits,
            run.stats.failed
        );
    }
    write_run_outputs(&out, &outcome).map_err(Fault::runtime)?;
    let inputs = file.manifest_inputs(&dataset.manifest);
    write_file(&out.join("control_variables.json"), &to_json(&inputs))?;
    write_reports(&out, &inputs, &outcome.results)?;

    if !outcome.results.excluded_items.is_empty() {
        eprintln!(
            "warning: {} (dialogue, value) items failed and were excluded from every candidate",
            outcome.results.excluded_items.len()
        );
    }
    print!("{}", ranking_markdown(&outcome.results.ranking));
    println!("reports written to {}", out.display());
    Ok(())
}

fn command_validate_detector(args: &ValidateArgs) -> Result<(), Fault> {
    let file = DetectorFile::load(&args.config)?;
    let examples = load_labeled_examples(&args.labeled)?;
    let detector = file.detector.build(true)?;
    let metrics = validate_detector(detector.as_ref(), &examples)?;
    let mut order: Vec<_> = Vec::new();
    for example in &examples {
        if !order.contains(&example.value) {
            order.push(example.value.clone());
        }
    }
    print!("{}", metrics.to_markdown(&order));
    let out = args
        .output
        .clone()
        .or_else(|| file.run.as_ref().map(|r| r.output.clone()))
        .unwrap_or_else(|| PathBuf::from("output"));
    write_file(&out.join("validation.json"), &to_json(&metrics))?;
    Ok(())
}

fn command_split(args: &SplitArgs) -> Result<(), Fault> {
    let file = CampaignFile::load(&args.config)?;
    let issues: Vec<String> = file
        .violations()
        .into_iter()
        .filter(|i| i.starts_with("dataset"))
        .collect();
    if !issues.is_empty() {
        return Err(ConfigError::Invalid { issues }.into());
    }
    let dataset = file.load_dataset()?;
    fs::create_dir_all(&args.output).map_err(|e| Fault::Runtime(format!("{}: {e}", args.output.display())))?;
    write_canonical(&args.output.join("sample.json"), &dataset.records)?;
    write_canonical(&args.output.join("holdout.json"), &dataset.holdout)?;
    write_file(&args.output.join("dataset_manifest.json"), &to_json(&dataset.manifest))?;
    write_file(&args.output.join("rejects.json"), &to_json(&dataset.rejects))?;
    println!(
        "{}: {} sampled, {} held out, {} rejected",
        dataset.manifest.split_description,
        dataset.records.len(),
        dataset.holdout.len(),
        dataset.rejects.len()
    );
    Ok(())
}

fn command_report(args: &ReportArgs) -> Result<(), Fault> {
    let dir = match (&args.output, &args.config) {
        (Some(dir), _) => dir.clone(),
        (None, Some(config)) => CampaignFile::load(config)?.run.output,
        (None, None) => unreachable!("clap requires one of --output and --config"),
    };
    let results = CampaignResults::load(&dir.join("results.json")).map_err(Fault::runtime)?;
    let inputs: ManifestInputs = read_json(&dir.join("control_variables.json"))?;
    let manifest = write_reports(&dir, &inputs, &results)?;
    print!("{}", manifest.to_markdown());
    Ok(())
}

fn command_compare(args: &CompareArgs) -> Result<(), Fault> {
    let mut all: Vec<CandidateResult> = Vec::new();
    let mut baseline = None;
    for path in &args.results {
        let path = if path.is_dir() {
            path.join("results.json")
        } else {
            path.clone()
        };
        let stored = CampaignResults::load(&path).map_err(Fault::runtime)?;
        baseline.get_or_insert(stored.baseline_id.clone());
        for result in stored.results {
            if all.iter().any(|r| r.candidate_id == result.candidate_id) {
                if stored.baseline_id == result.candidate_id {
                    continue;
                }
                return Err(Fault::Validation(format!(
                    "candidate \"{}\" appears in more than one results file",
                    result.candidate_id
                )));
            }
            all.push(result);
        }
    }
    let ranking = rank_candidates(&all, baseline.as_deref()).map_err(Fault::runtime)?;
    fs::create_dir_all(&args.output).map_err(|e| Fault::Runtime(format!("{}: {e}", args.output.display())))?;
    if all.len() >= 2 {
        let comparison = emit_comparison_data(&all)?;
        write_file(&args.output.join("comparison.json"), &comparison.to_json())?;
        write_file(&args.output.join("comparison.csv"), &comparison.to_csv())?;
    }
    let table = ranking_markdown(&ranking);
    write_file(&args.output.join("ranking.md"), &table)?;
    print!("{table}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let outcome = match &cli.command {
        Command::Run(args) => command_run(args),
        Command::ValidateDetector(args) => command_validate_detector(args),
        Command::Split(args) => command_split(args),
        Command::Report(args) => command_report(args),
        Command::Compare(args) => command_compare(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Fault::Validation(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
        Err(Fault::Runtime(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
    }
}
