//! Easy Data Augmentation: label-preserving word-level perturbations.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::AugmentError;
use crate::corpus::{Dataset, LabeledExample};
use crate::seeds;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdaOp {
    SynonymReplace,
    RandomInsert,
    RandomSwap,
    RandomDelete,
}

impl EdaOp {
    pub const ALL: [EdaOp; 4] = [
        EdaOp::SynonymReplace,
        EdaOp::RandomInsert,
        EdaOp::RandomSwap,
        EdaOp::RandomDelete,
    ];

    fn needs_lexicon(self) -> bool {
        matches!(self, EdaOp::SynonymReplace | EdaOp::RandomInsert)
    }
}

impl std::str::FromStr for EdaOp {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "synonym_replace" => Ok(EdaOp::SynonymReplace),
            "random_insert" => Ok(EdaOp::RandomInsert),
            "random_swap" => Ok(EdaOp::RandomSwap),
            "random_delete" => Ok(EdaOp::RandomDelete),
            other => Err(format!("unknown EDA op {other:?}")),
        }
    }
}

/// Synonym sets. File format: one set per line, members separated by commas;
/// blank lines and `#` comments are ignored.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Lexicon {
    synonyms: BTreeMap<String, Vec<String>>,
}

impl Lexicon {
    pub fn parse(text: &str) -> Self {
        let mut synonyms: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let group: Vec<String> = line
                .split(',')
                .map(|w| w.trim().to_lowercase())
                .filter(|w| !w.is_empty())
                .collect();
            for w in &group {
                let entry = synonyms.entry(w.clone()).or_default();
                for other in group.iter().filter(|o| *o != w) {
                    if !entry.contains(other) {
                        entry.push(other.clone());
                    }
                }
            }
        }
        synonyms.retain(|_, v| !v.is_empty());
        Self { synonyms }
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        Ok(Self::parse(&std::fs::read_to_string(path)?))
    }

    pub fn synonyms(&self, word: &str) -> &[String] {
        self.synonyms
            .get(&word.to_lowercase())
            .map_or(&[], Vec::as_slice)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdaConfig {
    /// Fraction of words touched per operation.
    pub alpha: f64,
    pub ops: Vec<EdaOp>,
    pub n_aug_per_example: usize,
    pub lexicon: Option<Lexicon>,
    pub seed: u64,
}

impl Default for EdaConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            ops: EdaOp::ALL.to_vec(),
            n_aug_per_example: 10,
            lexicon: None,
            seed: 0,
        }
    }
}

/// Produces `n_aug_per_example` perturbed copies of every source example.
///
/// Copy `j` of an example applies `ops[j % ops.len()]` to `round(alpha * words)`
/// positions, drawing from a generator seeded by `(seed, example, j)`. Labels are
/// copied unchanged.
pub fn eda_augment(
    source: &Dataset,
    config: &EdaConfig,
) -> Result<Vec<LabeledExample>, AugmentError> {
    if config.ops.is_empty() {
        return Err(AugmentError::InvalidConfig(
            "no EDA operations enabled".into(),
        ));
    }
    if !(config.alpha >= 0.0 && config.alpha <= 1.0) {
        return Err(AugmentError::InvalidConfig(format!(
            "alpha must be in [0, 1], got {}",
            config.alpha
        )));
    }
    let empty = Lexicon::default();
    let lexicon = match (
        &config.lexicon,
        config.ops.iter().find(|op| op.needs_lexicon()),
    ) {
        (Some(l), _) => l,
        (None, Some(op)) => {
            return Err(AugmentError::InvalidConfig(format!(
                "{op:?} requires a synonym lexicon"
            )));
        }
        (None, None) => &empty,
    };

    let mut out = Vec::with_capacity(source.len() * config.n_aug_per_example);
    for (i, ex) in source.examples().iter().enumerate() {
        for j in 0..config.n_aug_per_example {
            let mut rng =
                ChaCha8Rng::seed_from_u64(seeds::derive(config.seed, &[i as u64, j as u64]));
            let op = config.ops[j % config.ops.len()];
            let text = perturb(&ex.text, op, config.alpha, lexicon, &mut rng);
            out.push(LabeledExample::new(text, ex.label));
        }
    }
    Ok(out)
}

fn perturb(text: &str, op: EdaOp, alpha: f64, lexicon: &Lexicon, rng: &mut ChaCha8Rng) -> String {
    let mut words: Vec<String> = text.split_whitespace().map(str::to_string).collect();
    let n = (alpha * words.len() as f64).round() as usize;
    match op {
        EdaOp::SynonymReplace => {
            let mut positions: Vec<usize> = (0..words.len())
                .filter(|&p| !lexicon.synonyms(&words[p]).is_empty())
                .collect();
            positions.shuffle(rng);
            for p in positions.into_iter().take(n) {
                words[p] = lexicon
                    .synonyms(&words[p])
                    .choose(rng)
                    .expect("non-empty")
                    .clone();
            }
        }
        EdaOp::RandomInsert => {
            for _ in 0..n {
                let candidates: Vec<&String> = words
                    .iter()
                    .filter(|w| !lexicon.synonyms(w).is_empty())
                    .collect();
                let Some(word) = candidates.choose(rng) else {
                    break;
                };
                let synonym = lexicon
                    .synonyms(word)
                    .choose(rng)
                    .expect("non-empty")
                    .clone();
                let at = rng.gen_range(0..=words.len());
                words.insert(at, synonym);
            }
        }
        EdaOp::RandomSwap => {
            if words.len() >= 2 {
                for _ in 0..n {
                    let a = rng.gen_range(0..words.len());
                    let mut b = rng.gen_range(0..words.len() - 1);
                    if b >= a {
                        b += 1;
                    }
                    words.swap(a, b);
                }
            }
        }
        EdaOp::RandomDelete => {
            for _ in 0..n {
                if words.len() <= 1 {
                    break;
                }
                let p = rng.gen_range(0..words.len());
                words.remove(p);
            }
        }
    }
    words.join(" ")
}
