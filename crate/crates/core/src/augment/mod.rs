//! Augmentation runs: the prompt-mixing generation loop and the EDA baseline.

mod eda;

pub use eda::{eda_augment, EdaConfig, EdaOp, Lexicon};

use std::collections::HashSet;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{capitalize_first, normalize_text, Dataset, LabeledExample, TaskSpecification};
use crate::extract::{compute_soft_label, parse_augmentation, AugmentationRecord};
use crate::lmclient::{BackendError, GenerationParams, LmClient, ScoreError};
use crate::promptgen::{build_label_query, build_mix_prompt, select_examples, MAX_K};
use crate::seeds;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    /// Anchors per prompt.
    pub k: usize,
    /// Synthetic examples per real example.
    pub ratio: f64,
    /// Extra attempts per slot after the first one fails.
    pub max_retries: usize,
    /// Reject generations that normalize to a source text or an earlier record.
    pub dedup: bool,
    pub seed: u64,
    /// Slots generated concurrently.
    pub concurrency: usize,
    /// Empty `stop` means `["\n<Text type>:", "\n\n"]`.
    pub generation: GenerationParams,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            k: 2,
            ratio: 10.0,
            max_retries: 4,
            dedup: true,
            seed: 0,
            concurrency: 4,
            generation: GenerationParams::default(),
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<(), AugmentError> {
        let bad = |m: String| Err(AugmentError::InvalidConfig(m));
        if self.k < 1 || self.k > MAX_K {
            return bad(format!("k must be in 1..={MAX_K}, got {}", self.k));
        }
        if !(self.ratio >= 0.0 && self.ratio.is_finite()) {
            return bad(format!(
                "ratio must be a finite value >= 0, got {}",
                self.ratio
            ));
        }
        if self.concurrency < 1 {
            return bad("concurrency must be at least 1".into());
        }
        self.generation
            .validate()
            .map_err(AugmentError::InvalidConfig)
    }

    /// Number of synthetic slots for a source of `n` examples: `ceil(ratio * n)`.
    pub fn target(&self, n: usize) -> usize {
        let raw = self.ratio * n as f64;
        // absorb representation error such as 0.1 * 30 = 3.0000000000000004
        (raw - 1e-9).ceil().max(0.0) as usize
    }
}

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("invalid augmentation config: {0}")]
    InvalidConfig(String),
    #[error("source has {n} examples, fewer than k = {k}")]
    SourceTooSmall { n: usize, k: usize },
}

/// Result of one augmentation run.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentRun {
    pub records: Vec<AugmentationRecord>,
    /// Slots that failed every attempt.
    pub skipped: usize,
    pub requests_made: u64,
    pub target: usize,
    /// Set when a fatal backend error stopped the run; `records` holds what was
    /// committed before it.
    pub aborted: Option<String>,
    pub model: String,
    pub config: AugmentConfig,
}

struct Candidate {
    text: String,
    normalized: String,
    soft_label: Vec<f64>,
    generated_label: usize,
    anchors: Vec<usize>,
    raw: String,
}

enum Attempt {
    Success(Candidate),
    Retry(String),
    Fatal(BackendError),
}

enum SlotOutcome {
    Found(Candidate, usize),
    Skipped,
    Fatal(BackendError),
}

struct Generator<'a> {
    source: &'a Dataset,
    spec: &'a TaskSpecification,
    client: &'a LmClient,
    config: &'a AugmentConfig,
    params: GenerationParams,
    display_tokens: Vec<String>,
    source_texts: HashSet<String>,
}

impl Generator<'_> {
    fn attempt(&self, slot: usize, attempt: usize) -> Attempt {
        let seed = seeds::derive(self.config.seed, &[slot as u64, attempt as u64]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let anchors = match select_examples(self.source, self.config.k, &mut rng) {
            Ok(a) => a,
            Err(e) => return Attempt::Retry(e.to_string()),
        };
        let prompt = build_mix_prompt(&anchors, self.spec);
        let params = GenerationParams {
            seed: Some(seeds::mix64(seed)),
            ..self.params.clone()
        };
        let completion = match self.client.complete(&prompt.text, &params) {
            Ok(c) => c,
            Err(e) => return Attempt::Fatal(e),
        };
        let (text, generated_label) = match parse_augmentation(&completion.text, self.spec) {
            Ok(v) => v,
            Err(e) => return Attempt::Retry(e.to_string()),
        };
        let normalized = normalize_text(&text);
        if self.config.dedup && self.source_texts.contains(&normalized) {
            return Attempt::Retry("duplicate of a source text".into());
        }
        let query = match build_label_query(&prompt, &text, self.spec) {
            Ok(q) => q,
            Err(e) => return Attempt::Retry(e.to_string()),
        };
        let scores = match self
            .client
            .score_label_tokens(&query.text, &self.display_tokens)
        {
            Ok(s) => s,
            Err(ScoreError::Backend(e)) => return Attempt::Fatal(e),
            Err(e) => return Attempt::Retry(e.to_string()),
        };
        let soft_label = match compute_soft_label(&scores, self.spec) {
            Ok(p) => p,
            Err(e) => return Attempt::Retry(e.to_string()),
        };
        Attempt::Success(Candidate {
            text,
            normalized,
            soft_label,
            generated_label,
            anchors: anchors.source_indices,
            raw: completion.text,
        })
    }

    /// Tries attempts `from..=max_retries` until one passes `accept`.
    fn search(&self, slot: usize, from: usize, accept: impl Fn(&Candidate) -> bool) -> SlotOutcome {
        for attempt in from..=self.config.max_retries {
            match self.attempt(slot, attempt) {
                Attempt::Success(c) if accept(&c) => return SlotOutcome::Found(c, attempt),
                Attempt::Success(_) => {
                    log::debug!("slot {slot} attempt {attempt}: duplicate generation")
                }
                Attempt::Retry(reason) => log::debug!("slot {slot} attempt {attempt}: {reason}"),
                Attempt::Fatal(e) => return SlotOutcome::Fatal(e),
            }
        }
        log::warn!(
            "slot {slot}: no usable generation after {} attempts",
            self.config.max_retries + 1
        );
        SlotOutcome::Skipped
    }
}

/// Generates `ceil(ratio * |source|)` synthetic examples with soft labels.
///
/// Each slot is independent and seeded from `(seed, slot, attempt)`. Slots are
/// generated concurrently but committed in slot order, and duplicate checks against
/// earlier records happen at commit time, so the output does not depend on
/// `concurrency` or on completion order.
pub fn gpt3mix_augment(
    source: &Dataset,
    spec: &TaskSpecification,
    client: &LmClient,
    config: &AugmentConfig,
) -> Result<AugmentRun, AugmentError> {
    config.validate()?;
    let target = config.target(source.len());
    let mut run = AugmentRun {
        records: Vec::new(),
        skipped: 0,
        requests_made: 0,
        target,
        aborted: None,
        model: client.model_name().to_string(),
        config: config.clone(),
    };
    if target == 0 {
        return Ok(run);
    }
    if source.len() < config.k {
        return Err(AugmentError::SourceTooSmall {
            n: source.len(),
            k: config.k,
        });
    }

    let mut params = config.generation.clone();
    if params.stop.is_empty() {
        params.stop = vec![
            format!("\n{}:", capitalize_first(spec.text_type())),
            "\n\n".into(),
        ];
    }
    let generator = Generator {
        source,
        spec,
        client,
        config,
        params,
        display_tokens: spec.display_tokens(),
        source_texts: if config.dedup {
            source
                .examples()
                .iter()
                .map(|e| normalize_text(&e.text))
                .collect()
        } else {
            HashSet::new()
        },
    };
    let requests_before = client.requests_made();

    let outcomes: Mutex<Vec<Option<SlotOutcome>>> = Mutex::new((0..target).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    std::thread::scope(|scope| {
        for _ in 0..config.concurrency.min(target) {
            scope.spawn(|| loop {
                if stop.load(Ordering::Relaxed) {
                    break;
                }
                let slot = next.fetch_add(1, Ordering::Relaxed);
                if slot >= target {
                    break;
                }
                let outcome = generator.search(slot, 0, |_| true);
                if matches!(outcome, SlotOutcome::Fatal(_)) {
                    stop.store(true, Ordering::Relaxed);
                }
                outcomes.lock().expect("outcome lock")[slot] = Some(outcome);
            });
        }
    });

    let mut committed: HashSet<String> = HashSet::new();
    for (slot, outcome) in outcomes
        .into_inner()
        .expect("outcome lock")
        .into_iter()
        .enumerate()
    {
        let outcome = match outcome {
            Some(SlotOutcome::Found(c, attempt))
                if config.dedup && committed.contains(&c.normalized) =>
            {
                generator.search(slot, attempt + 1, |c| !committed.contains(&c.normalized))
            }
            Some(o) => o,
            // only slots after a fatal one are left unprocessed
            None => break,
        };
        match outcome {
            SlotOutcome::Found(c, _) => {
                if config.dedup {
                    committed.insert(c.normalized.clone());
                }
                run.records.push(AugmentationRecord {
                    text: c.text,
                    soft_label: c.soft_label,
                    generated_label: c.generated_label,
                    anchor_indices: c.anchors,
                    raw_completion: c.raw,
                    model: run.model.clone(),
                });
            }
            SlotOutcome::Skipped => run.skipped += 1,
            SlotOutcome::Fatal(e) => {
                log::error!("augmentation aborted at slot {slot}: {e}");
                run.aborted = Some(format!("slot {slot}: {e}"));
                break;
            }
        }
    }
    run.requests_made = client.requests_made() - requests_before;
    Ok(run)
}

/// The generated label token as a hard label (not the soft-label argmax).
pub fn to_hard_label(record: &AugmentationRecord) -> LabeledExample {
    LabeledExample::new(record.text.clone(), record.generated_label)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(soft: Vec<f64>, generated: usize) -> AugmentationRecord {
        AugmentationRecord {
            text: "x".into(),
            soft_label: soft,
            generated_label: generated,
            anchor_indices: vec![0, 1],
            raw_completion: String::new(),
            model: "mock".into(),
        }
    }

    #[test]
    fn hard_label_is_the_generated_token() {
        assert_eq!(to_hard_label(&record(vec![0.6, 0.4], 1)).label, 1);
        assert_eq!(to_hard_label(&record(vec![1.0, 0.0], 0)).label, 0);
        let recs = [record(vec![0.5, 0.5], 0), record(vec![0.5, 0.5], 1)];
        assert_eq!(recs.iter().map(to_hard_label).count(), 2);
    }

    #[test]
    fn target_arithmetic() {
        let cfg = AugmentConfig::default();
        assert_eq!(cfg.target(10), 100);
        let cfg = AugmentConfig {
            ratio: 0.1,
            ..AugmentConfig::default()
        };
        assert_eq!(cfg.target(30), 3);
        assert_eq!(cfg.target(31), 4);
        let cfg = AugmentConfig {
            ratio: 0.0,
            ..AugmentConfig::default()
        };
        assert_eq!(cfg.target(30), 0);
    }

    #[test]
    fn config_validation() {
        assert!(AugmentConfig::default().validate().is_ok());
        assert!(AugmentConfig {
            k: 0,
            ..AugmentConfig::default()
        }
        .validate()
        .is_err());
        assert!(AugmentConfig {
            k: 9,
            ..AugmentConfig::default()
        }
        .validate()
        .is_err());
        assert!(AugmentConfig {
            ratio: -1.0,
            ..AugmentConfig::default()
        }
        .validate()
        .is_err());
        assert!(AugmentConfig {
            concurrency: 0,
            ..AugmentConfig::default()
        }
        .validate()
        .is_err());
    }
}
