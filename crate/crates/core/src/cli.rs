//! The `mixprompt` command line.
//!
//! Exit status: 0 on success, 1 on usage or validation errors, 2 on backend or
//! other runtime failures. Every artifact-producing command writes a manifest
//! (`<out>.manifest.json`, or `manifest.json` in an output directory) holding the
//! effective configuration; passing that manifest back as `--config` reruns the
//! command with the same settings.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::augment::{gpt3mix_augment, to_hard_label, AugmentConfig};
use crate::bench::{
    format_report, read_reports_jsonl, reports_jsonl, run_ablation, run_trials, AblationKind,
    BackendConfig, BackendKind, BenchError, ExperimentConfig, LabelMode, ReportStyle,
};
use crate::classify::{
    evaluate, train, ClassifierModel, ClassifyError, FeatureConfig, SoftExample, TrainConfig,
    ValidationMetric,
};
use crate::corpus::{
    class_balanced_subsample, load_dataset, normalize_text, resolve_task_spec, save_dataset,
    Amount, CorpusError, Dataset, DatasetFormat, LabeledExample, LoadOptions, SpecConfig,
    SpecError,
};
use crate::extract::{read_augmented, write_augmented};
use crate::lmclient::{HttpConfig, LmClient, MockConfig};
use crate::promptgen::header_line;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, configs or input data: exit 1.
    Validation(String),
    /// Backend or I/O failure: exit 2.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::Io { .. } => CliError::Runtime(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<SpecError> for CliError {
    fn from(e: SpecError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<ClassifyError> for CliError {
    fn from(e: ClassifyError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<BenchError> for CliError {
    fn from(e: BenchError) -> Self {
        match e {
            BenchError::Corpus(c) => c.into(),
            other => CliError::Validation(other.to_string()),
        }
    }
}

fn invalid(m: impl Into<String>) -> CliError {
    CliError::Validation(m.into())
}

#[derive(Parser, Debug)]
#[command(
    name = "mixprompt",
    version,
    about = "Prompt-based data augmentation for text classification"
)]
pub struct Cli {
    /// More log output on standard error (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Class-balanced seeded sub-sample of a dataset.
    Subsample(SubsampleArgs),
    /// Generate synthetic examples with soft labels.
    Augment(AugmentArgs),
    /// Train a classifier on real and (optionally) augmented data.
    Train(TrainArgs),
    /// Accuracy of a trained model on a dataset.
    Evaluate(EvaluateArgs),
    /// Run a multi-trial experiment.
    Bench(BenchArgs),
    /// Run an ablation sweep.
    Ablate(AblateArgs),
    /// Normalize the texts of a dataset.
    Normalize(NormalizeArgs),
    /// Check a task specification.
    ValidateSpec(ValidateSpecArgs),
}

#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// jsonl or tsv; guessed from the extension when omitted.
    #[arg(long)]
    pub format: Option<DatasetFormat>,
    /// TSV input has a header row.
    #[arg(long)]
    pub header: bool,
}

impl DataArgs {
    fn load(&self, path: &Path, labels: Option<Vec<String>>) -> Result<Dataset, CliError> {
        let options = LoadOptions {
            format: self
                .format
                .unwrap_or_else(|| DatasetFormat::from_path(path)),
            header: self.header,
            labels,
        };
        Ok(load_dataset(path, &options)?)
    }
}

fn select_split(data: Dataset, split: Option<&str>) -> Result<Dataset, CliError> {
    match split {
        Some(name) => Ok(data.split(name)?),
        None => Ok(data),
    }
}

#[derive(Args, Debug)]
pub struct SubsampleArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// Take only this split of the input.
    #[arg(long)]
    pub split: Option<String>,
    /// Per-class count (`10`) or fraction of each class (`0.01`).
    #[arg(long)]
    pub amount: Amount,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Default)]
pub struct BackendArgs {
    /// mock or http.
    #[arg(long)]
    pub backend: Option<BackendKind>,
    /// TOML file with mock settings (seed, noise, pools, canned, next_token, echo).
    #[arg(long)]
    pub mock_config: Option<PathBuf>,
    /// Mock label-noise rate.
    #[arg(long)]
    pub mock_noise: Option<f64>,
    /// HTTP server root; requests go to <base-url>/v1/completions.
    #[arg(long)]
    pub base_url: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub timeout_secs: Option<u64>,
    /// Attempts per request including the first.
    #[arg(long)]
    pub max_attempts: Option<u32>,
}

impl BackendArgs {
    fn apply(&self, cfg: &mut BackendConfig) -> Result<(), CliError> {
        if let Some(kind) = self.backend {
            cfg.kind = kind;
        }
        if let Some(path) = &self.mock_config {
            cfg.mock = MockConfig::from_toml(&read_text(path)?)
                .map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        }
        if let Some(noise) = self.mock_noise {
            cfg.mock.noise = noise;
        }
        if self.base_url.is_some() || self.model.is_some() || self.timeout_secs.is_some() {
            let mut http = cfg.http.clone().unwrap_or(HttpConfig {
                base_url: String::new(),
                model: String::new(),
                timeout_secs: 120,
            });
            if let Some(u) = &self.base_url {
                http.base_url = u.clone();
            }
            if let Some(m) = &self.model {
                http.model = m.clone();
            }
            if let Some(t) = self.timeout_secs {
                http.timeout_secs = t;
            }
            cfg.http = Some(http);
        }
        if let Some(n) = self.max_attempts {
            cfg.retry.max_attempts = n;
        }
        if cfg.kind == BackendKind::Http {
            match &cfg.http {
                Some(h) if !h.base_url.is_empty() && !h.model.is_empty() => {}
                _ => return Err(invalid("the http backend needs --base-url and --model")),
            }
        }
        cfg.mock.validate().map_err(invalid)?;
        Ok(())
    }
}

/// Settings of an `augment` run; also the `config` section of its manifest.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentJob {
    pub dataset: Option<PathBuf>,
    pub split: Option<String>,
    pub spec: Option<SpecConfig>,
    pub augment: AugmentConfig,
    pub backend: BackendConfig,
}

#[derive(Args, Debug)]
pub struct AugmentArgs {
    /// TOML job file or a previous run's manifest; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub split: Option<String>,
    /// Built-in name (sst2, cr, subj, cola, trec6, mpqa, generic) or a spec file.
    #[arg(long)]
    pub spec: Option<String>,
    #[arg(long)]
    pub ratio: Option<f64>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub max_retries: Option<usize>,
    /// Keep generations that duplicate a source text or an earlier record.
    #[arg(long)]
    pub no_dedup: bool,
    #[arg(long)]
    pub concurrency: Option<usize>,
    #[arg(long)]
    pub max_tokens: Option<usize>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub top_p: Option<f64>,
    #[arg(long)]
    pub frequency_penalty: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub backend: BackendArgs,
    #[arg(long)]
    pub out: PathBuf,
}

/// Settings of a `train` run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainJob {
    pub dataset: Option<PathBuf>,
    pub split: Option<String>,
    pub augmented: Option<PathBuf>,
    pub label_mode: LabelMode,
    pub validation: Option<PathBuf>,
    pub validation_split: Option<String>,
    pub train: TrainConfig,
    pub features: FeatureConfig,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Real training examples.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub split: Option<String>,
    /// Augmented records from `augment`.
    #[arg(long)]
    pub augmented: Option<PathBuf>,
    /// soft or hard.
    #[arg(long)]
    pub label_mode: Option<String>,
    /// Validation file for early stopping.
    #[arg(long)]
    pub validation: Option<PathBuf>,
    /// Validation split of the file given by --validation (or --dataset).
    #[arg(long)]
    pub validation_split: Option<String>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub warmup_epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// accuracy or loss.
    #[arg(long)]
    pub metric: Option<String>,
    #[arg(long)]
    pub hash_buckets: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub split: Option<String>,
}

#[derive(Args, Debug, Clone)]
pub struct ExperimentArgs {
    /// Experiment config (TOML) or a previous run's manifest.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Master data seed; trial t sub-samples with seed + t.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub parallel_trials: Option<usize>,
    #[arg(long)]
    pub concurrency: Option<usize>,
    #[command(flatten)]
    pub backend: BackendArgs,
    /// markdown or tsv.
    #[arg(long, default_value = "markdown")]
    pub style: ReportStyle,
    /// Directory for trials.jsonl, the report table and manifest.json.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[command(flatten)]
    pub experiment: ExperimentArgs,
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    /// k_sweep, label_mode, task_spec or ratio_sweep.
    #[arg(long)]
    pub kind: AblationKind,
    /// Comma-separated axis values; defaults depend on the kind.
    #[arg(long, value_delimiter = ',')]
    pub values: Vec<String>,
    #[command(flatten)]
    pub experiment: ExperimentArgs,
}

#[derive(Args, Debug)]
pub struct NormalizeArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ValidateSpecArgs {
    /// Built-in name or spec file.
    #[arg(long)]
    pub spec: String,
    /// Check the spec against this dataset's labels.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataArgs,
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

/// Reads a job from TOML, or from JSON; a manifest contributes its `config` field.
fn load_job<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = read_text(path)?;
    let bad = |e: String| invalid(format!("{}: {e}", path.display()));
    if path.extension().and_then(|e| e.to_str()) == Some("json") {
        let mut value: Value = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
        if value.get("command").is_some() {
            value = value["config"].take();
        }
        serde_json::from_value(value).map_err(|e| bad(e.to_string()))
    } else {
        toml::from_str(&text).map_err(|e| bad(e.to_string()))
    }
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

fn write_manifest(
    path: &Path,
    command: &str,
    config: Value,
    inputs: Value,
    outputs: Value,
    extra: Value,
) -> Result<(), CliError> {
    let mut m = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "config": config,
        "inputs": inputs,
        "outputs": outputs,
    });
    if let Value::Object(extra) = extra {
        m.as_object_mut().expect("object").extend(extra);
    }
    write_text(
        path,
        &(serde_json::to_string_pretty(&m).expect("manifest serializes") + "\n"),
    )
}

fn input_entry(path: &Path, data: &Dataset) -> Value {
    json!({"path": path, "examples": data.len(), "fingerprint": format!("{:016x}", data.fingerprint())})
}

fn cmd_subsample(args: &SubsampleArgs) -> Result<(), CliError> {
    let data = select_split(args.data.load(&args.dataset, None)?, args.split.as_deref())?;
    let sample = class_balanced_subsample(&data, args.amount, args.seed)?;
    let format = args
        .data
        .format
        .unwrap_or_else(|| DatasetFormat::from_path(&args.out));
    save_dataset(&sample, &args.out, format, args.data.header)?;
    let counts: Vec<Value> = sample
        .labels()
        .iter()
        .zip(sample.class_counts())
        .map(|(l, c)| json!({"label": l, "count": c}))
        .collect();
    write_manifest(
        &manifest_path(&args.out),
        "subsample",
        json!({"dataset": args.dataset, "split": args.split, "amount": args.amount, "seed": args.seed,
               "format": args.data.format, "header": args.data.header}),
        json!([input_entry(&args.dataset, &data)]),
        json!([{"path": args.out, "examples": sample.len(), "fingerprint": format!("{:016x}", sample.fingerprint())}]),
        json!({"class_counts": counts}),
    )
}

fn cmd_augment(args: &AugmentArgs) -> Result<(), CliError> {
    let mut job: AugmentJob = match &args.config {
        Some(p) => load_job(p)?,
        None => AugmentJob::default(),
    };
    if let Some(d) = &args.dataset {
        job.dataset = Some(d.clone());
    }
    if let Some(s) = &args.split {
        job.split = Some(s.clone());
    }
    if let Some(s) = &args.spec {
        job.spec = Some(SpecConfig::from_arg(s)?);
    }
    let a = &mut job.augment;
    if let Some(v) = args.ratio {
        a.ratio = v;
    }
    if let Some(v) = args.k {
        a.k = v;
    }
    if let Some(v) = args.max_retries {
        a.max_retries = v;
    }
    if args.no_dedup {
        a.dedup = false;
    }
    if let Some(v) = args.concurrency {
        a.concurrency = v;
    }
    if let Some(v) = args.seed {
        a.seed = v;
    }
    let g = &mut a.generation;
    if let Some(v) = args.max_tokens {
        g.max_tokens = v;
    }
    if let Some(v) = args.temperature {
        g.temperature = v;
    }
    if let Some(v) = args.top_p {
        g.top_p = v;
    }
    if let Some(v) = args.frequency_penalty {
        g.frequency_penalty = v;
    }
    args.backend.apply(&mut job.backend)?;
    job.augment.validate().map_err(|e| invalid(e.to_string()))?;

    let path = job
        .dataset
        .clone()
        .ok_or_else(|| invalid("--dataset is required"))?;
    let spec_cfg = job
        .spec
        .clone()
        .ok_or_else(|| invalid("--spec is required"))?;
    let data = select_split(args.data.load(&path, None)?, job.split.as_deref())?;
    let spec = resolve_task_spec(&spec_cfg, data.labels())?;
    let backend = job.backend.build()?;
    let client = LmClient::new(Arc::clone(&backend), job.backend.retry.clone());
    let run =
        gpt3mix_augment(&data, &spec, &client, &job.augment).map_err(|e| invalid(e.to_string()))?;

    write_text(&args.out, &write_augmented(&run.records, data.labels()))?;
    write_manifest(
        &manifest_path(&args.out),
        "augment",
        serde_json::to_value(&job).expect("job serializes"),
        json!([input_entry(&path, &data)]),
        json!([{"path": args.out, "records": run.records.len()}]),
        json!({"model": run.model, "target": run.target, "skipped": run.skipped,
               "requests": run.requests_made, "aborted": run.aborted}),
    )?;
    log::info!(
        "{} of {} records, {} skipped, {} requests",
        run.records.len(),
        run.target,
        run.skipped,
        run.requests_made
    );
    match run.aborted {
        Some(reason) => Err(CliError::Runtime(format!(
            "augmentation aborted after {} records ({reason}); partial output kept",
            run.records.len()
        ))),
        None => Ok(()),
    }
}

fn cmd_train(args: &TrainArgs) -> Result<(), CliError> {
    let mut job: TrainJob = match &args.config {
        Some(p) => load_job(p)?,
        None => TrainJob::default(),
    };
    macro_rules! set {
        ($flag:expr, $field:expr) => {
            if let Some(v) = $flag.clone() {
                $field = v;
            }
        };
    }
    if args.dataset.is_some() {
        job.dataset = args.dataset.clone();
    }
    if args.split.is_some() {
        job.split = args.split.clone();
    }
    if args.augmented.is_some() {
        job.augmented = args.augmented.clone();
    }
    if args.validation.is_some() {
        job.validation = args.validation.clone();
    }
    if args.validation_split.is_some() {
        job.validation_split = args.validation_split.clone();
    }
    if let Some(m) = &args.label_mode {
        job.label_mode = match m.as_str() {
            "soft" => LabelMode::Soft,
            "hard" => LabelMode::Hard,
            other => {
                return Err(invalid(format!(
                    "unknown label mode {other:?} (expected soft or hard)"
                )))
            }
        };
    }
    if let Some(m) = &args.metric {
        job.train.metric = match m.as_str() {
            "accuracy" => ValidationMetric::Accuracy,
            "loss" => ValidationMetric::Loss,
            other => {
                return Err(invalid(format!(
                    "unknown metric {other:?} (expected accuracy or loss)"
                )))
            }
        };
    }
    set!(args.lr, job.train.learning_rate);
    set!(args.weight_decay, job.train.weight_decay);
    set!(args.epochs, job.train.max_epochs);
    set!(args.patience, job.train.patience);
    set!(args.warmup_epochs, job.train.warmup_epochs);
    set!(args.batch_size, job.train.batch_size);
    set!(args.seed, job.train.seed);
    set!(args.hash_buckets, job.features.hash_buckets);

    let path = job
        .dataset
        .clone()
        .ok_or_else(|| invalid("--dataset is required"))?;
    let full = args.data.load(&path, None)?;
    let labels = full.labels().to_vec();
    let real = select_split(full.clone(), job.split.as_deref())?;
    let n = labels.len();
    let mut examples: Vec<SoftExample> = real
        .examples()
        .iter()
        .map(|e| SoftExample::one_hot(e, n))
        .collect();
    let mut inputs = vec![input_entry(&path, &real)];
    if let Some(aug) = &job.augmented {
        let records = read_augmented(&read_text(aug)?, &labels)
            .map_err(|e| invalid(format!("{}: {e}", aug.display())))?;
        inputs.push(json!({"path": aug, "records": records.len()}));
        examples.extend(records.iter().map(|r| match job.label_mode {
            LabelMode::Soft => SoftExample {
                text: r.text.clone(),
                target: r.soft_label.clone(),
            },
            LabelMode::Hard => SoftExample::one_hot(&to_hard_label(r), n),
        }));
    }
    let validation: Vec<LabeledExample> = match (&job.validation, &job.validation_split) {
        (Some(p), split) => {
            let v = select_split(args.data.load(p, Some(labels.clone()))?, split.as_deref())?;
            inputs.push(input_entry(p, &v));
            v.examples().to_vec()
        }
        (None, Some(split)) => full.split(split)?.examples().to_vec(),
        (None, None) => Vec::new(),
    };
    let outcome = train(&examples, &validation, &labels, &job.train, &job.features)?;
    write_text(&args.out, &outcome.model.to_jsonl())?;
    write_manifest(
        &manifest_path(&args.out),
        "train",
        serde_json::to_value(&job).expect("job serializes"),
        json!(inputs),
        json!([{"path": args.out}]),
        json!({"best_epoch": outcome.best_epoch, "epochs_run": outcome.epochs_run,
               "validation_history": outcome.validation_history}),
    )
}

fn cmd_evaluate(args: &EvaluateArgs) -> Result<(), CliError> {
    let model = ClassifierModel::from_jsonl(&read_text(&args.model)?)?;
    let data = select_split(
        args.data
            .load(&args.dataset, Some(model.labels().to_vec()))?,
        args.split.as_deref(),
    )?;
    let acc = evaluate(&model, &data)?;
    println!("{}", json!({"accuracy": acc, "examples": data.len()}));
    Ok(())
}

fn experiment_config(args: &ExperimentArgs) -> Result<ExperimentConfig, CliError> {
    let mut cfg = if args.config.extension().and_then(|e| e.to_str()) == Some("json") {
        load_job::<ExperimentConfig>(&args.config)?
    } else {
        ExperimentConfig::load(&args.config)?
    };
    if let Some(v) = args.trials {
        cfg.trials = v;
    }
    if let Some(v) = args.seed {
        cfg.master_seed = v;
    }
    if let Some(v) = args.parallel_trials {
        cfg.parallel_trials = v;
    }
    if let Some(v) = args.concurrency {
        cfg.augment.concurrency = v;
    }
    args.backend.apply(&mut cfg.backend)?;
    cfg.validate()?;
    Ok(cfg)
}

fn finish_experiment(
    command: &str,
    args: &ExperimentArgs,
    cfg: &ExperimentConfig,
    reports: &[crate::bench::TrialReport],
    extra: Value,
) -> Result<(), CliError> {
    let table = format_report(reports, args.style);
    let ext = match args.style {
        ReportStyle::Markdown => "md",
        ReportStyle::Tsv => "tsv",
    };
    let trials_path = args.out_dir.join("trials.jsonl");
    let table_path = args.out_dir.join(format!("report.{ext}"));
    let log = reports_jsonl(reports);
    debug_assert_eq!(
        read_reports_jsonl(&log).map(|r| r.len()).ok(),
        Some(reports.len())
    );
    write_text(&trials_path, &log)?;
    write_text(&table_path, &table)?;
    write_manifest(
        &args.out_dir.join("manifest.json"),
        command,
        serde_json::to_value(cfg).expect("config serializes"),
        json!([{"path": cfg.dataset}]),
        json!([trials_path, table_path]),
        extra,
    )?;
    print!("{table}");
    Ok(())
}

fn cmd_bench(args: &BenchArgs) -> Result<(), CliError> {
    let cfg = experiment_config(&args.experiment)?;
    let reports = run_trials(&cfg)?;
    finish_experiment("bench", &args.experiment, &cfg, &reports, json!({}))
}

fn cmd_ablate(args: &AblateArgs) -> Result<(), CliError> {
    let cfg = experiment_config(&args.experiment)?;
    let values = if args.values.is_empty() {
        args.kind.default_values()
    } else {
        args.values.clone()
    };
    let reports = run_ablation(args.kind, &cfg, &values)?;
    finish_experiment(
        "ablate",
        &args.experiment,
        &cfg,
        &reports,
        json!({"ablation": {"kind": args.kind, "values": values}}),
    )
}

fn cmd_normalize(args: &NormalizeArgs) -> Result<(), CliError> {
    let data = args.data.load(&args.dataset, None)?;
    let examples: Vec<LabeledExample> = data
        .examples()
        .iter()
        .map(|e| LabeledExample::new(normalize_text(&e.text), e.label))
        .collect();
    let normalized = Dataset::with_splits(
        data.labels().to_vec(),
        examples,
        data.split_indices().clone(),
    )?;
    let format = args
        .data
        .format
        .unwrap_or_else(|| DatasetFormat::from_path(&args.out));
    save_dataset(&normalized, &args.out, format, args.data.header)?;
    write_manifest(
        &manifest_path(&args.out),
        "normalize",
        json!({"dataset": args.dataset, "format": args.data.format, "header": args.data.header}),
        json!([input_entry(&args.dataset, &data)]),
        json!([{"path": args.out, "fingerprint": format!("{:016x}", normalized.fingerprint())}]),
        json!({}),
    )
}

fn cmd_validate_spec(args: &ValidateSpecArgs) -> Result<(), CliError> {
    let cfg = SpecConfig::from_arg(&args.spec)?;
    let labels = match &args.dataset {
        Some(p) => args.data.load(p, None)?.labels().to_vec(),
        None => Vec::new(),
    };
    let spec = resolve_task_spec(&cfg, &labels)?;
    println!("{}", header_line(&spec));
    for (label, token) in spec.labels().iter().zip(spec.tokens()) {
        println!("{label}\t{token}");
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Subsample(a) => cmd_subsample(a),
        Command::Augment(a) => cmd_augment(a),
        Command::Train(a) => cmd_train(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Ablate(a) => cmd_ablate(a),
        Command::Normalize(a) => cmd_normalize(a),
        Command::ValidateSpec(a) => cmd_validate_spec(a),
    }
}

/// Parses `args` (including the program name) and runs the command, returning the
/// process exit status. Errors go to standard error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .try_init();
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
