//! Hashed n-gram features and a linear softmax classifier trained on soft labels.
//!
//! Training minimizes the mean cross-entropy between each example's target
//! distribution and the model's softmax output, with decoupled weight decay,
//! linear learning-rate warm-up and validation-based early stopping that keeps the
//! best snapshot. Real examples enter as one-hot targets.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Dataset, LabeledExample};
use crate::seeds;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub ngram_min: usize,
    pub ngram_max: usize,
    pub hash_buckets: usize,
    pub hash_seed: u64,
    pub lowercase: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            ngram_min: 1,
            ngram_max: 2,
            hash_buckets: 1 << 18,
            hash_seed: 0,
            lowercase: true,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<(), ClassifyError> {
        if self.ngram_min < 1 || self.ngram_min > self.ngram_max {
            return Err(ClassifyError::InvalidConfig(format!(
                "n-gram range {}..={} is invalid",
                self.ngram_min, self.ngram_max
            )));
        }
        if self.hash_buckets < 2 || self.hash_buckets > u32::MAX as usize {
            return Err(ClassifyError::InvalidConfig(
                "hash_buckets must be in 2..=u32::MAX".into(),
            ));
        }
        Ok(())
    }
}

/// Sparse vector with strictly increasing indices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseVector {
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl SparseVector {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (u32, f64)>) -> Self {
        let map: BTreeMap<u32, f64> = pairs.into_iter().fold(BTreeMap::new(), |mut m, (i, v)| {
            *m.entry(i).or_insert(0.0) += v;
            m
        });
        let (indices, values) = map.into_iter().unzip();
        Self { indices, values }
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices
            .iter()
            .map(|&i| i as usize)
            .zip(self.values.iter().copied())
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Hashed bag of n-grams, L2-normalized. Tokens are maximal alphanumeric runs.
pub fn featurize(text: &str, config: &FeatureConfig) -> SparseVector {
    let text = if config.lowercase {
        text.to_lowercase()
    } else {
        text.to_string()
    };
    let tokens: Vec<&str> = text
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .collect();
    let mut counts: BTreeMap<u32, f64> = BTreeMap::new();
    for n in config.ngram_min..=config.ngram_max {
        for gram in tokens.windows(n) {
            let h = seeds::hash_str(config.hash_seed, &gram.join(" "));
            *counts
                .entry((h % config.hash_buckets as u64) as u32)
                .or_insert(0.0) += 1.0;
        }
    }
    let mut v = SparseVector::from_pairs(counts);
    let norm = v.norm();
    if norm > 0.0 {
        v.values.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("training example {index}: {reason}")]
    InvalidSoftLabel { index: usize, reason: String },
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("evaluation set is empty")]
    EmptyTestSet,
    #[error("label sets differ: model has {model:?}, data has {data:?}")]
    LabelMismatch {
        model: Vec<String>,
        data: Vec<String>,
    },
    #[error("model file: {0}")]
    Format(String),
}

/// Linear model: `softmax(W x + b)` over hashed features.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    labels: Vec<String>,
    features: FeatureConfig,
    /// Row-major, one row of `hash_buckets` weights per label.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

pub(crate) fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

/// `-sum_c q_c log p_c`, skipping zero-mass classes.
pub fn soft_cross_entropy(logits: &[f64], target: &[f64]) -> f64 {
    let lsm = log_softmax(logits);
    -target
        .iter()
        .zip(&lsm)
        .filter(|(q, _)| **q > 0.0)
        .map(|(q, l)| q * l)
        .sum::<f64>()
}

pub fn hard_cross_entropy(logits: &[f64], label: usize) -> f64 {
    -log_softmax(logits)[label]
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

impl ClassifierModel {
    pub fn zeros(labels: Vec<String>, features: FeatureConfig) -> Self {
        let n = labels.len();
        Self {
            weights: vec![0.0; n * features.hash_buckets],
            bias: vec![0.0; n],
            labels,
            features,
        }
    }

    pub fn from_parts(
        labels: Vec<String>,
        features: FeatureConfig,
        weights: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self, ClassifyError> {
        features.validate()?;
        if labels.is_empty()
            || bias.len() != labels.len()
            || weights.len() != labels.len() * features.hash_buckets
        {
            return Err(ClassifyError::Format(
                "parameter shapes do not match the label set".into(),
            ));
        }
        if weights.iter().chain(&bias).any(|w| !w.is_finite()) {
            return Err(ClassifyError::Format("non-finite parameter".into()));
        }
        Ok(Self {
            labels,
            features,
            weights,
            bias,
        })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn feature_config(&self) -> &FeatureConfig {
        &self.features
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn logits(&self, x: &SparseVector) -> Vec<f64> {
        let b = self.features.hash_buckets;
        (0..self.labels.len())
            .map(|c| {
                let row = &self.weights[c * b..(c + 1) * b];
                self.bias[c] + x.iter().map(|(i, v)| row[i] * v).sum::<f64>()
            })
            .collect()
    }

    pub fn predict(&self, text: &str) -> Vec<f64> {
        crate::extract::softmax(&self.logits(&featurize(text, &self.features)))
    }

    pub fn predict_label(&self, text: &str) -> usize {
        argmax(&self.logits(&featurize(text, &self.features)))
    }

    /// Mean soft cross-entropy over `(features, target)` pairs.
    pub fn loss(&self, batch: &[(SparseVector, Vec<f64>)]) -> f64 {
        batch
            .iter()
            .map(|(x, q)| soft_cross_entropy(&self.logits(x), q))
            .sum::<f64>()
            / batch.len() as f64
    }

    /// Mean loss and its gradient with respect to the weights and bias.
    pub fn loss_and_gradient(
        &self,
        batch: &[(SparseVector, Vec<f64>)],
    ) -> (f64, Vec<f64>, Vec<f64>) {
        let b = self.features.hash_buckets;
        let n = batch.len() as f64;
        let mut gw = vec![0.0; self.weights.len()];
        let mut gb = vec![0.0; self.bias.len()];
        let mut loss = 0.0;
        for (x, q) in batch {
            let logits = self.logits(x);
            loss += soft_cross_entropy(&logits, q);
            let p = crate::extract::softmax(&logits);
            for c in 0..self.labels.len() {
                let d = (p[c] - q[c]) / n;
                gb[c] += d;
                for (i, v) in x.iter() {
                    gw[c * b + i] += d * v;
                }
            }
        }
        (loss / n, gw, gb)
    }

    /// Serializes as jsonl: a header line, then one line per label with its bias
    /// and non-zero weights as `[index, value]` pairs.
    pub fn to_jsonl(&self) -> String {
        let b = self.features.hash_buckets;
        let mut out = serde_json::to_string(&ModelHeader {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            labels: self.labels.clone(),
            features: self.features.clone(),
        })
        .expect("header serializes");
        out.push('\n');
        for (c, label) in self.labels.iter().enumerate() {
            let weights: Vec<(usize, f64)> = self.weights[c * b..(c + 1) * b]
                .iter()
                .enumerate()
                .filter(|(_, w)| **w != 0.0)
                .map(|(i, w)| (i, *w))
                .collect();
            let row = ModelRow {
                label: label.clone(),
                bias: self.bias[c],
                weights,
            };
            out.push_str(&serde_json::to_string(&row).expect("row serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, ClassifyError> {
        let bad = |m: String| ClassifyError::Format(m);
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: ModelHeader =
            serde_json::from_str(lines.next().ok_or_else(|| bad("empty file".into()))?)
                .map_err(|e| bad(e.to_string()))?;
        if header.format != MODEL_FORMAT || header.version != MODEL_VERSION {
            return Err(bad(format!(
                "unsupported model {} v{}",
                header.format, header.version
            )));
        }
        header.features.validate()?;
        let b = header.features.hash_buckets;
        let mut weights = vec![0.0; header.labels.len() * b];
        let mut bias = vec![0.0; header.labels.len()];
        for (c, label) in header.labels.iter().enumerate() {
            let row: ModelRow = serde_json::from_str(
                lines
                    .next()
                    .ok_or_else(|| bad(format!("missing row for {label:?}")))?,
            )
            .map_err(|e| bad(e.to_string()))?;
            if row.label != *label {
                return Err(bad(format!(
                    "row {c} is for {:?}, expected {label:?}",
                    row.label
                )));
            }
            bias[c] = row.bias;
            for (i, w) in row.weights {
                if i >= b {
                    return Err(bad(format!("weight index {i} out of range")));
                }
                weights[c * b + i] = w;
            }
        }
        Self::from_parts(header.labels, header.features, weights, bias)
    }
}

const MODEL_FORMAT: &str = "mixprompt-linear";
const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelHeader {
    format: String,
    version: u32,
    labels: Vec<String>,
    features: FeatureConfig,
}

#[derive(Serialize, Deserialize)]
struct ModelRow {
    label: String,
    bias: f64,
    weights: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidationMetric {
    Accuracy,
    /// Negated mean cross-entropy, so that higher is still better.
    Loss,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Decoupled: each step shrinks weights by `lr * weight_decay`.
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub warmup_epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub metric: ValidationMetric,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            weight_decay: 1e-4,
            max_epochs: 200,
            patience: 20,
            warmup_epochs: 3,
            batch_size: 1,
            seed: 0,
            metric: ValidationMetric::Accuracy,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ClassifyError> {
        let bad = |m: &str| Err(ClassifyError::InvalidConfig(m.into()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.weight_decay >= 0.0 && self.learning_rate * self.weight_decay < 1.0) {
            return bad("weight_decay must be >= 0 and lr * weight_decay < 1");
        }
        if self.patience < 1 {
            return bad("patience must be at least 1");
        }
        if self.batch_size < 1 || self.max_epochs < 1 {
            return bad("batch_size and max_epochs must be at least 1");
        }
        Ok(())
    }
}

/// A training text with its target distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftExample {
    pub text: String,
    pub target: Vec<f64>,
}

impl SoftExample {
    pub fn one_hot(example: &LabeledExample, num_labels: usize) -> Self {
        let mut target = vec![0.0; num_labels];
        target[example.label] = 1.0;
        Self {
            text: example.text.clone(),
            target,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

/// Patience-based early stopping on a higher-is-better score.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<(usize, f64)>,
    since_best: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: None,
            since_best: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, score: f64) -> StopDecision {
        match self.best {
            Some((_, best)) if score <= best => {
                self.since_best += 1;
                if self.since_best >= self.patience {
                    StopDecision::Stop
                } else {
                    StopDecision::Continue
                }
            }
            _ => {
                self.best = Some((epoch, score));
                self.since_best = 0;
                StopDecision::Improved
            }
        }
    }

    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ClassifierModel,
    /// 1-based epoch of the returned snapshot.
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub validation_history: Vec<f64>,
}

fn validate_targets(train: &[SoftExample], num_labels: usize) -> Result<(), ClassifyError> {
    for (index, ex) in train.iter().enumerate() {
        let reason = if ex.target.len() != num_labels {
            Some(format!(
                "target has {} entries, expected {num_labels}",
                ex.target.len()
            ))
        } else if ex.target.iter().any(|p| !p.is_finite() || *p < 0.0) {
            Some("target has a negative or non-finite entry".into())
        } else if (ex.target.iter().sum::<f64>() - 1.0).abs() > 1e-6 {
            Some(format!("target sums to {}", ex.target.iter().sum::<f64>()))
        } else {
            None
        };
        if let Some(reason) = reason {
            return Err(ClassifyError::InvalidSoftLabel { index, reason });
        }
    }
    Ok(())
}

fn validation_score(
    model: &ClassifierModel,
    validation: &[(SparseVector, usize)],
    metric: ValidationMetric,
) -> f64 {
    let n = validation.len() as f64;
    match metric {
        ValidationMetric::Accuracy => {
            validation
                .iter()
                .filter(|(x, y)| argmax(&model.logits(x)) == *y)
                .count() as f64
                / n
        }
        ValidationMetric::Loss => {
            -validation
                .iter()
                .map(|(x, y)| hard_cross_entropy(&model.logits(x), *y))
                .sum::<f64>()
                / n
        }
    }
}

/// Weights stored as `scale * raw` so that decay is O(1) per step.
struct ScaledWeights {
    raw: Vec<f64>,
    scale: f64,
}

impl ScaledWeights {
    fn materialize(&self) -> Vec<f64> {
        self.raw.iter().map(|r| r * self.scale).collect()
    }
}

/// Mini-batch gradient descent with decoupled weight decay and early stopping.
///
/// An empty validation set disables early stopping; the final weights are returned.
pub fn train(
    train: &[SoftExample],
    validation: &[LabeledExample],
    labels: &[String],
    config: &TrainConfig,
    features: &FeatureConfig,
) -> Result<TrainOutcome, ClassifyError> {
    config.validate()?;
    features.validate()?;
    if train.is_empty() {
        return Err(ClassifyError::EmptyTrainingSet);
    }
    let k = labels.len();
    validate_targets(train, k)?;
    if let Some(bad) = validation.iter().find(|e| e.label >= k) {
        return Err(ClassifyError::InvalidConfig(format!(
            "validation label {} out of range",
            bad.label
        )));
    }

    let b = features.hash_buckets;
    let xs: Vec<SparseVector> = train.iter().map(|e| featurize(&e.text, features)).collect();
    let val: Vec<(SparseVector, usize)> = validation
        .iter()
        .map(|e| (featurize(&e.text, features), e.label))
        .collect();

    let mut model = ClassifierModel::zeros(labels.to_vec(), features.clone());
    let mut w = ScaledWeights {
        raw: std::mem::take(&mut model.weights),
        scale: 1.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let steps_per_epoch = train.len().div_ceil(config.batch_size);
    let warmup_steps = config.warmup_epochs * steps_per_epoch;
    let mut step = 0usize;

    let mut stopper = EarlyStopping::new(config.patience);
    let mut best: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut history = Vec::new();
    let mut epochs_run = 0;

    let mut updates: Vec<(usize, f64)> = Vec::new();
    for epoch in 1..=config.max_epochs {
        epochs_run = epoch;
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            step += 1;
            let lr = if warmup_steps > 0 {
                config.learning_rate * (step as f64 / warmup_steps as f64).min(1.0)
            } else {
                config.learning_rate
            };
            let n = chunk.len() as f64;
            updates.clear();
            let mut gb = vec![0.0; k];
            for &i in chunk {
                let x = &xs[i];
                let logits: Vec<f64> = (0..k)
                    .map(|c| {
                        model.bias[c]
                            + w.scale * x.iter().map(|(j, v)| w.raw[c * b + j] * v).sum::<f64>()
                    })
                    .collect();
                let p = crate::extract::softmax(&logits);
                for c in 0..k {
                    let d = (p[c] - train[i].target[c]) / n;
                    gb[c] += d;
                    updates.extend(x.iter().map(|(j, v)| (c * b + j, d * v)));
                }
            }
            w.scale *= 1.0 - lr * config.weight_decay;
            for &(j, g) in &updates {
                w.raw[j] -= lr * g / w.scale;
            }
            for (bias, g) in model.bias.iter_mut().zip(&gb) {
                *bias -= lr * g;
            }
            if w.scale < 1e-3 {
                w.raw.iter_mut().for_each(|r| *r *= w.scale);
                w.scale = 1.0;
            }
        }

        if val.is_empty() {
            continue;
        }
        model.weights = w.materialize();
        let score = validation_score(&model, &val, config.metric);
        history.push(score);
        match stopper.observe(epoch, score) {
            StopDecision::Improved => {
                best = Some((std::mem::take(&mut model.weights), model.bias.clone()))
            }
            StopDecision::Continue => {}
            StopDecision::Stop => break,
        }
    }

    let best_epoch = match (best, stopper.best()) {
        (Some((weights, bias)), Some((epoch, _))) => {
            model.weights = weights;
            model.bias = bias;
            epoch
        }
        _ => {
            model.weights = w.materialize();
            epochs_run
        }
    };
    Ok(TrainOutcome {
        model,
        best_epoch,
        epochs_run,
        validation_history: history,
    })
}

/// Fraction of examples whose argmax prediction matches the label.
pub fn evaluate(model: &ClassifierModel, test: &Dataset) -> Result<f64, ClassifyError> {
    if model.labels() != test.labels() {
        return Err(ClassifyError::LabelMismatch {
            model: model.labels().to_vec(),
            data: test.labels().to_vec(),
        });
    }
    if test.is_empty() {
        return Err(ClassifyError::EmptyTestSet);
    }
    let correct = test
        .examples()
        .iter()
        .filter(|e| model.predict_label(&e.text) == e.label)
        .count();
    Ok(correct as f64 / test.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels() -> Vec<String> {
        vec!["a".into(), "b".into()]
    }

    fn small_features() -> FeatureConfig {
        FeatureConfig {
            ngram_max: 1,
            hash_buckets: 1 << 10,
            ..FeatureConfig::default()
        }
    }

    #[test]
    fn featurize_counts_and_normalizes() {
        let cfg = FeatureConfig {
            ngram_max: 1,
            ..FeatureConfig::default()
        };
        let v = featurize("a b a", &cfg);
        assert_eq!(v.indices.len(), 2);
        assert!((v.norm() - 1.0).abs() < 1e-12);
        let ia = (seeds::hash_str(0, "a") % cfg.hash_buckets as u64) as u32;
        let pos = v.indices.iter().position(|&i| i == ia).unwrap();
        assert!((v.values[pos] - 2.0 / 5f64.sqrt()).abs() < 1e-12);
        assert_eq!(featurize("", &cfg), SparseVector::default());
        assert_eq!(featurize("A, b; A!", &cfg), v);
    }

    #[test]
    fn bigrams_add_features() {
        let v = featurize("a b c", &FeatureConfig::default());
        assert_eq!(v.indices.len(), 5);
    }

    #[test]
    fn zero_model_is_uniform_and_ties_go_low() {
        let m = ClassifierModel::zeros(labels(), small_features());
        assert_eq!(m.predict("anything"), [0.5, 0.5]);
        assert_eq!(m.predict_label("anything"), 0);
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
    }

    #[test]
    fn evaluate_arithmetic_and_errors() {
        let cfg = small_features();
        let b = cfg.hash_buckets;
        let hot = (seeds::hash_str(0, "yes") % b as u64) as usize;
        let mut weights = vec![0.0; 2 * b];
        weights[b + hot] = 5.0;
        let m = ClassifierModel::from_parts(labels(), cfg, weights, vec![0.0, 0.0]).unwrap();
        // "yes" -> b, otherwise tie -> a
        let mut examples = Vec::new();
        for i in 0..10 {
            let (text, label) = match i {
                0..=3 => ("yes", 1),
                4..=6 => ("no", 0),
                _ => ("no", 1),
            };
            examples.push(LabeledExample::new(text, label));
        }
        let test = Dataset::new(labels(), examples).unwrap();
        assert!((evaluate(&m, &test).unwrap() - 0.7).abs() < 1e-12);
        let other = Dataset::new(
            vec!["x".into(), "y".into()],
            vec![LabeledExample::new("t", 0)],
        )
        .unwrap();
        assert!(matches!(
            evaluate(&m, &other),
            Err(ClassifyError::LabelMismatch { .. })
        ));
    }

    #[test]
    fn one_hot_soft_loss_equals_hard_loss_bitwise() {
        let logits = [0.3, -1.2, 2.5];
        for y in 0..3 {
            let mut q = [0.0; 3];
            q[y] = 1.0;
            assert_eq!(
                soft_cross_entropy(&logits, &q).to_bits(),
                hard_cross_entropy(&logits, y).to_bits()
            );
        }
    }

    #[test]
    fn rejects_invalid_soft_labels() {
        let bad = [SoftExample {
            text: "x".into(),
            target: vec![0.7, 0.7],
        }];
        let err = train(
            &bad,
            &[],
            &labels(),
            &TrainConfig::default(),
            &small_features(),
        )
        .unwrap_err();
        assert!(matches!(
            err,
            ClassifyError::InvalidSoftLabel { index: 0, .. }
        ));
        let bad = [SoftExample {
            text: "x".into(),
            target: vec![1.5, -0.5],
        }];
        assert!(train(
            &bad,
            &[],
            &labels(),
            &TrainConfig::default(),
            &small_features()
        )
        .is_err());
        assert!(matches!(
            train(
                &[],
                &[],
                &labels(),
                &TrainConfig::default(),
                &small_features()
            ),
            Err(ClassifyError::EmptyTrainingSet)
        ));
    }

    #[test]
    fn separable_toy_set_is_learned() {
        let mut data = Vec::new();
        for i in 0..10 {
            data.push(LabeledExample::new(format!("alpha apple{i} red"), 0));
            data.push(LabeledExample::new(format!("beta banana{i} blue"), 1));
        }
        let soft: Vec<SoftExample> = data.iter().map(|e| SoftExample::one_hot(e, 2)).collect();
        let out = train(
            &soft,
            &data,
            &labels(),
            &TrainConfig::default(),
            &small_features(),
        )
        .unwrap();
        let ds = Dataset::new(labels(), data).unwrap();
        assert_eq!(evaluate(&out.model, &ds).unwrap(), 1.0);
    }

    #[test]
    fn early_stopping_keeps_peak() {
        let mut s = EarlyStopping::new(1);
        let scores = [0.5, 0.6, 0.7, 0.65, 0.8];
        let mut stopped_at = None;
        for (i, &score) in scores.iter().enumerate() {
            if s.observe(i + 1, score) == StopDecision::Stop {
                stopped_at = Some(i + 1);
                break;
            }
        }
        assert_eq!(stopped_at, Some(4));
        assert_eq!(s.best(), Some((3, 0.7)));

        let mut s = EarlyStopping::new(3);
        assert_eq!(s.observe(1, 0.5), StopDecision::Improved);
        assert_eq!(s.observe(2, 0.5), StopDecision::Continue);
        assert_eq!(s.observe(3, 0.4), StopDecision::Continue);
        assert_eq!(s.observe(4, 0.5), StopDecision::Stop);
    }

    #[test]
    fn training_is_deterministic_and_serializes() {
        let data: Vec<LabeledExample> = (0..12)
            .map(|i| LabeledExample::new(format!("w{} shared w{}", i % 5, i % 3), i % 2))
            .collect();
        let soft: Vec<SoftExample> = data.iter().map(|e| SoftExample::one_hot(e, 2)).collect();
        let cfg = TrainConfig {
            seed: 5,
            max_epochs: 30,
            ..TrainConfig::default()
        };
        let a = train(&soft, &data, &labels(), &cfg, &small_features()).unwrap();
        let b = train(&soft, &data, &labels(), &cfg, &small_features()).unwrap();
        assert_eq!(a.model.to_jsonl(), b.model.to_jsonl());
        let back = ClassifierModel::from_jsonl(&a.model.to_jsonl()).unwrap();
        assert_eq!(back, a.model);
        assert!(ClassifierModel::from_jsonl("{}").is_err());
    }

    #[test]
    fn lazy_decay_matches_dense_update() {
        // one example, one step, no warm-up: w' = w(1 - lr wd) - lr g
        let data = [LabeledExample::new("x y", 0)];
        let soft = [SoftExample::one_hot(&data[0], 2)];
        let cfg = TrainConfig {
            max_epochs: 2,
            warmup_epochs: 0,
            weight_decay: 0.1,
            learning_rate: 0.5,
            ..TrainConfig::default()
        };
        let f = small_features();
        let out = train(&soft, &[], &labels(), &cfg, &f).unwrap();

        let mut m = ClassifierModel::zeros(labels(), f.clone());
        let batch = vec![(featurize("x y", &f), vec![1.0, 0.0])];
        for _ in 0..2 {
            let (_, gw, gb) = m.loss_and_gradient(&batch);
            let weights = m
                .weights
                .iter()
                .zip(&gw)
                .map(|(w, g)| w * (1.0 - 0.05) - 0.5 * g)
                .collect();
            let bias = m.bias.iter().zip(&gb).map(|(b, g)| b - 0.5 * g).collect();
            m = ClassifierModel::from_parts(labels(), f.clone(), weights, bias).unwrap();
        }
        for (a, b) in out.model.weights().iter().zip(m.weights()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(out.model.bias(), m.bias());
    }
}
