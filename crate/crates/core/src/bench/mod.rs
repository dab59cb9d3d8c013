//! Seeded multi-trial experiments and ablations.
//!
//! A trial sub-samples the training split, optionally augments the sample, trains a
//! classifier on real (one-hot) plus synthetic targets and scores it on the test
//! split. Trial `t` sub-samples with seed `master_seed + t`; every arm of an
//! experiment sees the same sub-samples and the same augmentation seeds, so arms
//! are paired.

mod report;
pub mod synthetic;

pub use report::{format_cell, format_report, mean_std, percent, ReportStyle, INCOMPLETE};

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::{
    eda_augment, gpt3mix_augment, to_hard_label, AugmentConfig, EdaConfig, EdaOp, Lexicon,
};
use crate::classify::{evaluate, train, ClassifyError, FeatureConfig, SoftExample, TrainConfig};
use crate::corpus::{
    class_balanced_subsample, load_dataset, resolve_task_spec, Amount, CorpusError, Dataset,
    DatasetFormat, LoadOptions, SpecConfig, SpecError, TaskSpecification,
};
use crate::lmclient::{
    CompletionBackend, HttpBackend, HttpConfig, LmClient, MockBackend, MockConfig, RetryPolicy,
};
use crate::seeds;

const AUGMENT_STREAM: u64 = 1;
const TRAIN_STREAM: u64 = 2;
const EDA_STREAM: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Augmenter {
    None,
    Gpt3mix,
    Eda,
}

impl Augmenter {
    pub fn name(self) -> &'static str {
        match self {
            Augmenter::None => "none",
            Augmenter::Gpt3mix => "gpt3mix",
            Augmenter::Eda => "eda",
        }
    }
}

impl std::str::FromStr for Augmenter {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(Augmenter::None),
            "gpt3mix" => Ok(Augmenter::Gpt3mix),
            "eda" => Ok(Augmenter::Eda),
            other => Err(format!(
                "unknown augmenter {other:?} (expected none, gpt3mix or eda)"
            )),
        }
    }
}

/// How synthetic examples are labelled for training.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelMode {
    #[default]
    Soft,
    /// The generated label token, as a one-hot target.
    Hard,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Mock,
    Http,
}

impl std::str::FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mock" => Ok(BackendKind::Mock),
            "http" => Ok(BackendKind::Http),
            other => Err(format!("unknown backend {other:?} (expected mock or http)")),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub mock: MockConfig,
    pub http: Option<HttpConfig>,
    pub retry: RetryPolicy,
}

impl BackendConfig {
    /// Builds the backend. HTTP backends read the API key from the environment.
    pub fn build(&self) -> Result<Arc<dyn CompletionBackend>, BenchError> {
        match self.kind {
            BackendKind::Mock => Ok(Arc::new(
                MockBackend::new(self.mock.clone()).map_err(BenchError::Config)?,
            )),
            BackendKind::Http => {
                let http = self.http.as_ref().ok_or_else(|| {
                    BenchError::Config("backend kind is http but [backend.http] is missing".into())
                })?;
                Ok(Arc::new(HttpBackend::from_env(http)))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EdaSettings {
    pub alpha: f64,
    pub ops: Vec<EdaOp>,
    /// Copies per real example; defaults to `ceil(ratio)` of the arm.
    pub n_aug_per_example: Option<usize>,
    /// Synonym file, needed by `synonym_replace` and `random_insert`.
    pub lexicon: Option<PathBuf>,
}

impl Default for EdaSettings {
    fn default() -> Self {
        let d = EdaConfig::default();
        Self {
            alpha: d.alpha,
            ops: d.ops,
            n_aug_per_example: None,
            lexicon: None,
        }
    }
}

/// One experiment: every amount crossed with every augmenter, `trials` times each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Row label in reports; defaults to the dataset file stem.
    pub name: String,
    /// Dataset with `train`, `validation` and `test` splits. Relative paths are
    /// resolved against the config file's directory.
    pub dataset: PathBuf,
    pub format: Option<DatasetFormat>,
    pub spec: SpecConfig,
    pub amounts: Vec<Amount>,
    pub augmenters: Vec<Augmenter>,
    pub label_mode: LabelMode,
    pub trials: usize,
    pub master_seed: u64,
    /// Trials run concurrently; results do not depend on it.
    pub parallel_trials: usize,
    pub augment: AugmentConfig,
    pub eda: EdaSettings,
    pub train: TrainConfig,
    pub features: FeatureConfig,
    pub backend: BackendConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: String::new(),
            dataset: PathBuf::new(),
            format: None,
            spec: SpecConfig::Named("generic".into()),
            amounts: vec![Amount::PerClass(10)],
            augmenters: vec![Augmenter::None, Augmenter::Gpt3mix],
            label_mode: LabelMode::Soft,
            trials: 10,
            master_seed: 0,
            parallel_trials: 4,
            augment: AugmentConfig::default(),
            eda: EdaSettings::default(),
            train: TrainConfig::default(),
            features: FeatureConfig::default(),
            backend: BackendConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, BenchError> {
        toml::from_str(text).map_err(|e| BenchError::Config(e.to_string()))
    }

    /// Reads a config file and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self, BenchError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        if cfg.dataset.is_relative() && !cfg.dataset.as_os_str().is_empty() {
            cfg.dataset = base.join(&cfg.dataset);
        }
        if let Some(lex) = cfg.eda.lexicon.as_mut().filter(|l| l.is_relative()) {
            *lex = base.join(&*lex);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: String| Err(BenchError::Config(m));
        if self.trials < 1 {
            return bad("trials must be at least 1".into());
        }
        if self.parallel_trials < 1 {
            return bad("parallel_trials must be at least 1".into());
        }
        if self.amounts.is_empty() || self.augmenters.is_empty() {
            return bad("amounts and augmenters must be non-empty".into());
        }
        for a in &self.amounts {
            match *a {
                Amount::PerClass(0) => return bad("per-class amount must be at least 1".into()),
                Amount::Fraction(f) if !(f > 0.0 && f <= 1.0) => {
                    return bad(format!("fraction {f} is outside (0, 1]"))
                }
                _ => {}
            }
        }
        self.augment
            .validate()
            .map_err(|e| BenchError::Config(e.to_string()))?;
        self.train.validate()?;
        self.features.validate()?;
        Ok(())
    }

    /// Row label: `name`, else the dataset file stem.
    pub fn display_name(&self) -> String {
        if !self.name.is_empty() {
            return self.name.clone();
        }
        self.dataset
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "dataset".into())
    }

    pub fn load_dataset(&self) -> Result<Dataset, BenchError> {
        let format = self
            .format
            .unwrap_or_else(|| DatasetFormat::from_path(&self.dataset));
        Ok(load_dataset(&self.dataset, &LoadOptions::new(format))?)
    }
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid experiment: {0}")]
    Config(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
}

/// Augmentation counts for one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentStats {
    pub target: usize,
    pub generated: usize,
    pub skipped: usize,
    pub requests: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    /// Sub-sampling seed, `master_seed + trial`.
    pub seed: u64,
    /// Fingerprint of the sub-sample, equal across arms of the same trial.
    pub subset_hash: String,
    pub train_size: usize,
    pub accuracy: Option<f64>,
    pub best_epoch: Option<usize>,
    pub augmentation: Option<AugmentStats>,
    pub error: Option<String>,
}

/// What distinguishes one arm from another.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ArmSettings {
    pub augmenter: Option<Augmenter>,
    pub label_mode: Option<LabelMode>,
    pub k: Option<usize>,
    pub ratio: Option<f64>,
    pub spec: Option<String>,
}

/// All trials of one (dataset, amount, arm) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub dataset: String,
    pub amount: String,
    pub arm: String,
    pub settings: ArmSettings,
    pub trials: Vec<TrialResult>,
    /// Set only when every trial produced an accuracy.
    pub mean: Option<f64>,
    pub std: Option<f64>,
}

impl TrialReport {
    pub fn new(
        dataset: String,
        amount: String,
        arm: String,
        settings: ArmSettings,
        trials: Vec<TrialResult>,
    ) -> Self {
        let mut r = Self {
            dataset,
            amount,
            arm,
            settings,
            trials,
            mean: None,
            std: None,
        };
        if let Some((m, s)) = r.summary() {
            r.mean = Some(m);
            r.std = Some(s);
        }
        r
    }

    pub fn accuracies(&self) -> Vec<f64> {
        self.trials.iter().filter_map(|t| t.accuracy).collect()
    }

    pub fn is_complete(&self) -> bool {
        !self.trials.is_empty() && self.trials.iter().all(|t| t.accuracy.is_some())
    }

    /// Mean and population std, recomputed from the per-trial list.
    pub fn summary(&self) -> Option<(f64, f64)> {
        if self.is_complete() {
            mean_std(&self.accuracies())
        } else {
            None
        }
    }
}

/// One line of JSON per report, in order.
pub fn reports_jsonl(reports: &[TrialReport]) -> String {
    reports
        .iter()
        .map(|r| serde_json::to_string(r).expect("report serializes") + "\n")
        .collect()
}

pub fn read_reports_jsonl(text: &str) -> Result<Vec<TrialReport>, serde_json::Error> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}

#[derive(Debug, Clone)]
struct Arm {
    label: String,
    augmenter: Augmenter,
    label_mode: LabelMode,
    augment: AugmentConfig,
    spec: TaskSpecification,
    settings: ArmSettings,
}

struct Context<'a> {
    config: &'a ExperimentConfig,
    name: String,
    validation: Dataset,
    test: Dataset,
    labels: Vec<String>,
    backend: Option<Arc<dyn CompletionBackend>>,
    lexicon: Option<Lexicon>,
}

impl<'a> Context<'a> {
    fn new(config: &'a ExperimentConfig, data: &Dataset, arms: &[Arm]) -> Result<Self, BenchError> {
        let needs = |a: Augmenter| arms.iter().any(|arm| arm.augmenter == a);
        let backend = if needs(Augmenter::Gpt3mix) {
            Some(config.backend.build()?)
        } else {
            None
        };
        let lexicon = match (&config.eda.lexicon, needs(Augmenter::Eda)) {
            (Some(path), true) => Some(
                Lexicon::load(path)
                    .map_err(|e| BenchError::Config(format!("lexicon {}: {e}", path.display())))?,
            ),
            _ => None,
        };
        Ok(Self {
            config,
            name: config.display_name(),
            validation: data.split("validation")?,
            test: data.split("test")?,
            labels: data.labels().to_vec(),
            backend,
            lexicon,
        })
    }

    fn run_trial(&self, arm: &Arm, t: usize, subset: &Dataset) -> Result<TrialResult, BenchError> {
        let seed = self.config.master_seed.wrapping_add(t as u64);
        let n = self.labels.len();
        let mut result = TrialResult {
            trial: t,
            seed,
            subset_hash: format!("{:016x}", subset.fingerprint()),
            train_size: subset.len(),
            accuracy: None,
            best_epoch: None,
            augmentation: None,
            error: None,
        };
        let mut train_set: Vec<SoftExample> = subset
            .examples()
            .iter()
            .map(|e| SoftExample::one_hot(e, n))
            .collect();
        match arm.augmenter {
            Augmenter::None => {}
            Augmenter::Gpt3mix => {
                let backend = self
                    .backend
                    .clone()
                    .expect("backend built for gpt3mix arms");
                let client = LmClient::new(backend, self.config.backend.retry.clone());
                let cfg = AugmentConfig {
                    seed: seeds::derive(seed, &[AUGMENT_STREAM]),
                    ..arm.augment.clone()
                };
                let run = match gpt3mix_augment(subset, &arm.spec, &client, &cfg) {
                    Ok(run) => run,
                    Err(e) => {
                        result.error = Some(e.to_string());
                        return Ok(result);
                    }
                };
                result.augmentation = Some(AugmentStats {
                    target: run.target,
                    generated: run.records.len(),
                    skipped: run.skipped,
                    requests: run.requests_made,
                });
                if let Some(reason) = run.aborted {
                    result.error = Some(format!("augmentation aborted: {reason}"));
                    return Ok(result);
                }
                train_set.extend(run.records.iter().map(|r| match arm.label_mode {
                    LabelMode::Soft => SoftExample {
                        text: r.text.clone(),
                        target: r.soft_label.clone(),
                    },
                    LabelMode::Hard => SoftExample::one_hot(&to_hard_label(r), n),
                }));
            }
            Augmenter::Eda => {
                let eda = &self.config.eda;
                let cfg = EdaConfig {
                    alpha: eda.alpha,
                    ops: eda.ops.clone(),
                    n_aug_per_example: eda
                        .n_aug_per_example
                        .unwrap_or_else(|| arm.augment.target(1)),
                    lexicon: self.lexicon.clone(),
                    seed: seeds::derive(seed, &[EDA_STREAM]),
                };
                let extra =
                    eda_augment(subset, &cfg).map_err(|e| BenchError::Config(e.to_string()))?;
                result.augmentation = Some(AugmentStats {
                    target: extra.len(),
                    generated: extra.len(),
                    skipped: 0,
                    requests: 0,
                });
                train_set.extend(extra.iter().map(|e| SoftExample::one_hot(e, n)));
            }
        }
        let train_cfg = TrainConfig {
            seed: seeds::derive(seed, &[TRAIN_STREAM]),
            ..self.config.train.clone()
        };
        let outcome = train(
            &train_set,
            self.validation.examples(),
            &self.labels,
            &train_cfg,
            &self.config.features,
        )?;
        result.accuracy = Some(evaluate(&outcome.model, &self.test)?);
        result.best_epoch = Some(outcome.best_epoch);
        Ok(result)
    }
}

fn base_arm(config: &ExperimentConfig, labels: &[String]) -> Result<Arm, BenchError> {
    let spec = resolve_task_spec(&config.spec, labels)?;
    Ok(Arm {
        label: String::new(),
        augmenter: Augmenter::None,
        label_mode: config.label_mode,
        augment: config.augment.clone(),
        settings: ArmSettings::default(),
        spec,
    })
}

fn spec_name(config: &SpecConfig) -> String {
    match config {
        SpecConfig::Named(n) => n.clone(),
        SpecConfig::Explicit(f) => format!("{}/{}", f.text_type, f.label_type),
    }
}

fn finish_arm(mut arm: Arm, label: String) -> Arm {
    arm.label = label;
    arm.settings.augmenter = Some(arm.augmenter);
    if arm.augmenter == Augmenter::Gpt3mix {
        arm.settings.label_mode = Some(arm.label_mode);
        arm.settings.k = Some(arm.augment.k);
        arm.settings.ratio = Some(arm.augment.ratio);
    }
    arm
}

fn run_arms(
    config: &ExperimentConfig,
    data: &Dataset,
    arms: &[Arm],
) -> Result<Vec<TrialReport>, BenchError> {
    config.validate()?;
    let ctx = Context::new(config, data, arms)?;
    let train_split = data.split("train")?;

    // Paired sub-samples: one per (amount, trial), shared by all arms.
    let mut subsets: Vec<Vec<Dataset>> = Vec::new();
    for amount in &config.amounts {
        let per_trial = (0..config.trials)
            .map(|t| {
                class_balanced_subsample(
                    &train_split,
                    *amount,
                    config.master_seed.wrapping_add(t as u64),
                )
            })
            .collect::<Result<Vec<_>, _>>()?;
        subsets.push(per_trial);
    }

    let jobs: Vec<(usize, usize, usize)> = (0..config.amounts.len())
        .flat_map(|a| (0..arms.len()).flat_map(move |r| (0..config.trials).map(move |t| (a, r, t))))
        .collect();
    let results: Mutex<Vec<Option<Result<TrialResult, BenchError>>>> =
        Mutex::new((0..jobs.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..config.parallel_trials.min(jobs.len()) {
            scope.spawn(|| loop {
                let j = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(a, r, t)) = jobs.get(j) else { break };
                let res = ctx.run_trial(&arms[r], t, &subsets[a][t]);
                if let Ok(tr) = &res {
                    log::info!(
                        "{} {} {} trial {t}: {}",
                        ctx.name,
                        config.amounts[a].describe(),
                        arms[r].label,
                        tr.accuracy.map_or_else(
                            || tr.error.clone().unwrap_or_default(),
                            |acc| format!("{acc:.4}")
                        )
                    );
                }
                results.lock().expect("results lock")[j] = Some(res);
            });
        }
    });

    let mut results = results.into_inner().expect("results lock").into_iter();
    let mut reports = Vec::new();
    for amount in &config.amounts {
        for arm in arms {
            let trials = (0..config.trials)
                .map(|_| results.next().flatten().expect("every job ran"))
                .collect::<Result<Vec<_>, _>>()?;
            reports.push(TrialReport::new(
                ctx.name.clone(),
                amount.describe(),
                arm.label.clone(),
                arm.settings.clone(),
                trials,
            ));
        }
    }
    Ok(reports)
}

/// Runs every (amount, augmenter) cell of `config` on an in-memory dataset.
pub fn run_trials_on(
    config: &ExperimentConfig,
    data: &Dataset,
) -> Result<Vec<TrialReport>, BenchError> {
    let base = base_arm(config, data.labels())?;
    let arms: Vec<Arm> = config
        .augmenters
        .iter()
        .map(|&a| {
            let arm = Arm {
                augmenter: a,
                ..base.clone()
            };
            finish_arm(arm, a.name().to_string())
        })
        .collect();
    run_arms(config, data, &arms)
}

/// Loads `config.dataset` and runs [`run_trials_on`].
pub fn run_trials(config: &ExperimentConfig) -> Result<Vec<TrialReport>, BenchError> {
    run_trials_on(config, &config.load_dataset()?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationKind {
    KSweep,
    LabelMode,
    TaskSpec,
    RatioSweep,
}

impl AblationKind {
    pub fn default_values(self) -> Vec<String> {
        let v: &[&str] = match self {
            AblationKind::KSweep => &["1", "2", "4", "8"],
            AblationKind::LabelMode => &["none", "hard", "soft"],
            AblationKind::TaskSpec => &["generic", "optimal"],
            AblationKind::RatioSweep => &["1", "2", "5", "10"],
        };
        v.iter().map(|s| s.to_string()).collect()
    }
}

impl std::str::FromStr for AblationKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "k_sweep" => Ok(AblationKind::KSweep),
            "label_mode" => Ok(AblationKind::LabelMode),
            "task_spec" => Ok(AblationKind::TaskSpec),
            "ratio_sweep" => Ok(AblationKind::RatioSweep),
            other => Err(format!(
                "unknown ablation {other:?} (expected k_sweep, label_mode, task_spec or ratio_sweep)"
            )),
        }
    }
}

/// Runs one arm per value along `kind`, everything else fixed to `base`.
///
/// Values: `k_sweep` takes k in 1..=8; `label_mode` takes none, hard or soft;
/// `task_spec` takes `optimal` (the base spec), `generic`, or any spec name or file;
/// `ratio_sweep` takes non-negative ratios. All arms except `none` use the prompt
/// augmenter.
pub fn run_ablation_on(
    kind: AblationKind,
    base: &ExperimentConfig,
    data: &Dataset,
    values: &[String],
) -> Result<Vec<TrialReport>, BenchError> {
    if values.is_empty() {
        return Err(BenchError::Config(
            "ablation needs at least one value".into(),
        ));
    }
    let template = Arm {
        augmenter: Augmenter::Gpt3mix,
        ..base_arm(base, data.labels())?
    };
    let bad = |v: &str, what: &str| BenchError::Config(format!("invalid {what} value {v:?}"));
    let mut arms = Vec::new();
    for v in values {
        let mut arm = template.clone();
        match kind {
            AblationKind::KSweep => {
                let k: usize = v.parse().map_err(|_| bad(v, "k"))?;
                if !(1..=crate::promptgen::MAX_K).contains(&k) {
                    return Err(bad(v, "k"));
                }
                arm.augment.k = k;
                arm = finish_arm(arm, format!("k={k}"));
            }
            AblationKind::LabelMode => {
                match v.as_str() {
                    "none" => arm.augmenter = Augmenter::None,
                    "hard" => arm.label_mode = LabelMode::Hard,
                    "soft" => arm.label_mode = LabelMode::Soft,
                    _ => return Err(bad(v, "label_mode")),
                }
                arm = finish_arm(arm, v.clone());
            }
            AblationKind::TaskSpec => {
                let (cfg, name) = if v == "optimal" {
                    (base.spec.clone(), spec_name(&base.spec))
                } else {
                    (SpecConfig::from_arg(v)?, v.clone())
                };
                arm.spec = resolve_task_spec(&cfg, data.labels())?;
                arm = finish_arm(arm, v.clone());
                arm.settings.spec = Some(name);
            }
            AblationKind::RatioSweep => {
                let ratio: f64 = v.parse().map_err(|_| bad(v, "ratio"))?;
                if !(ratio >= 0.0 && ratio.is_finite()) {
                    return Err(bad(v, "ratio"));
                }
                arm.augment.ratio = ratio;
                arm = finish_arm(arm, format!("ratio={v}"));
            }
        }
        arms.push(arm);
    }
    run_arms(base, data, &arms)
}

pub fn run_ablation(
    kind: AblationKind,
    base: &ExperimentConfig,
    values: &[String],
) -> Result<Vec<TrialReport>, BenchError> {
    run_ablation_on(kind, base, &base.load_dataset()?, values)
}
