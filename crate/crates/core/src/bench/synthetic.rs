//! A synthetic two-class task for offline experiments.
//!
//! Each class owns a disjoint vocabulary of made-up words; every example mixes a
//! few class words into shared filler words. The matching mock configuration gives
//! each label a phrase pool drawn from its class vocabulary, which stands in for the
//! knowledge a real language model brings to augmentation.

use std::collections::{BTreeMap, BTreeSet};

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Dataset, LabeledExample};
use crate::lmclient::MockConfig;

const SYLLABLES: [&str; 16] = [
    "ka", "lo", "mi", "ru", "te", "no", "si", "ba", "de", "fu", "ga", "hi", "jo", "pe", "va", "zu",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub vocab_per_class: usize,
    pub filler_words: usize,
    pub class_words_per_example: usize,
    pub filler_words_per_example: usize,
    pub train_per_class: usize,
    pub validation_per_class: usize,
    pub test_per_class: usize,
    /// Mock label noise.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            vocab_per_class: 60,
            filler_words: 40,
            class_words_per_example: 2,
            filler_words_per_example: 6,
            train_per_class: 100,
            validation_per_class: 50,
            test_per_class: 200,
            noise: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticTask {
    /// Labels `positive` and `negative`, with `train`, `validation` and `test` splits.
    pub dataset: Dataset,
    pub vocabularies: [Vec<String>; 2],
    pub mock: MockConfig,
}

fn pseudo_words(rng: &mut ChaCha8Rng, count: usize, taken: &mut BTreeSet<String>) -> Vec<String> {
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let len = rng.gen_range(2..=3);
        let w: String = (0..len)
            .map(|_| *SYLLABLES.choose(rng).expect("non-empty"))
            .collect();
        if taken.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

pub fn synthetic_task(config: &SyntheticConfig) -> SyntheticTask {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut taken = BTreeSet::new();
    let vocabularies = [
        pseudo_words(&mut rng, config.vocab_per_class, &mut taken),
        pseudo_words(&mut rng, config.vocab_per_class, &mut taken),
    ];
    let filler = pseudo_words(&mut rng, config.filler_words, &mut taken);

    let mut examples = Vec::new();
    let mut splits: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (split, per_class) in [
        ("train", config.train_per_class),
        ("validation", config.validation_per_class),
        ("test", config.test_per_class),
    ] {
        for i in 0..2 * per_class {
            let label = i % 2;
            let mut words: Vec<&str> = Vec::new();
            for _ in 0..config.class_words_per_example {
                words.push(vocabularies[label].choose(&mut rng).expect("vocabulary"));
            }
            for _ in 0..config.filler_words_per_example {
                words.push(filler.choose(&mut rng).expect("filler"));
            }
            words.shuffle(&mut rng);
            splits
                .entry(split.to_string())
                .or_default()
                .push(examples.len());
            examples.push(LabeledExample::new(words.join(" "), label));
        }
    }
    let dataset =
        Dataset::with_splits(vec!["positive".into(), "negative".into()], examples, splits)
            .expect("synthetic dataset is well formed");

    let mut pools = IndexMap::new();
    pools.insert("positive".to_string(), vocabularies[0].clone());
    pools.insert("negative".to_string(), vocabularies[1].clone());
    let mock = MockConfig {
        seed: config.seed,
        noise: config.noise,
        pools,
        ..MockConfig::default()
    };
    SyntheticTask {
        dataset,
        vocabularies,
        mock,
    }
}
