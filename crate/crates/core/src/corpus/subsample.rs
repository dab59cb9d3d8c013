use rand::seq::index;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CorpusError, Dataset};
use crate::seeds;

/// How much of each class to keep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Amount {
    /// Exact number of examples per class.
    PerClass(usize),
    /// Fraction in (0, 1] of each class, rounded, with a floor of one.
    Fraction(f64),
}

impl Amount {
    /// Number of examples drawn from a class of size `n`.
    pub fn count_for(&self, n: usize) -> usize {
        match *self {
            Amount::PerClass(c) => c,
            Amount::Fraction(f) => ((f * n as f64).round() as usize).max(1),
        }
    }

    pub fn describe(&self) -> String {
        match *self {
            Amount::PerClass(c) => format!("{c}/class"),
            Amount::Fraction(f) => format!("{}%", f * 100.0),
        }
    }
}

impl std::str::FromStr for Amount {
    type Err = String;

    /// `"0.01"` is a fraction, `"10"` a per-class count.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Ok(n) = s.parse::<usize>() {
            return Ok(Amount::PerClass(n));
        }
        s.parse::<f64>()
            .map(Amount::Fraction)
            .map_err(|_| format!("invalid amount {s:?}"))
    }
}

/// Seeded per-class uniform sample without replacement.
///
/// Each class `c` draws from its own generator seeded by `(seed, c)`, so adding a
/// class never perturbs the others. Output is class-major, original order within
/// a class. Classes without examples contribute nothing.
pub fn class_balanced_subsample(
    dataset: &Dataset,
    amount: Amount,
    seed: u64,
) -> Result<Dataset, CorpusError> {
    if dataset.is_empty() {
        return Err(CorpusError::Subsample("dataset is empty".into()));
    }
    match amount {
        Amount::Fraction(f) if !(f > 0.0 && f <= 1.0) => {
            return Err(CorpusError::Subsample(format!(
                "fraction {f} is outside (0, 1]"
            )));
        }
        Amount::PerClass(0) => {
            return Err(CorpusError::Subsample(
                "per-class count must be at least 1".into(),
            ))
        }
        _ => {}
    }

    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); dataset.labels().len()];
    for (i, ex) in dataset.examples().iter().enumerate() {
        by_class[ex.label].push(i);
    }

    let mut examples = Vec::new();
    for (class, members) in by_class.iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        let take = amount.count_for(members.len());
        if take > members.len() {
            return Err(CorpusError::Subsample(format!(
                "class {:?} has {} examples, {} requested",
                dataset.label_name(class),
                members.len(),
                take
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(seed, &[class as u64]));
        let mut picked = index::sample(&mut rng, members.len(), take).into_vec();
        picked.sort_unstable();
        examples.extend(
            picked
                .into_iter()
                .map(|p| dataset.examples()[members[p]].clone()),
        );
    }
    Dataset::new(dataset.labels().to_vec(), examples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::LabeledExample;

    fn dataset(counts: &[usize]) -> Dataset {
        let labels = (0..counts.len()).map(|c| format!("c{c}")).collect();
        let mut examples = Vec::new();
        // interleave classes so class-major output is observable
        let max = counts.iter().copied().max().unwrap_or(0);
        for i in 0..max {
            for (c, &n) in counts.iter().enumerate() {
                if i < n {
                    examples.push(LabeledExample::new(format!("c{c} item {i}"), c));
                }
            }
        }
        Dataset::new(labels, examples).unwrap()
    }

    #[test]
    fn one_percent_of_balanced_thousand() {
        let ds = dataset(&[500, 500]);
        for seed in [0, 1, 99] {
            let sub = class_balanced_subsample(&ds, Amount::Fraction(0.01), seed).unwrap();
            assert_eq!(sub.len(), 10);
            assert_eq!(sub.class_counts(), [5, 5]);
        }
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let ds = dataset(&[50, 30]);
        let a = class_balanced_subsample(&ds, Amount::Fraction(0.2), 3).unwrap();
        let b = class_balanced_subsample(&ds, Amount::Fraction(0.2), 3).unwrap();
        let c = class_balanced_subsample(&ds, Amount::Fraction(0.2), 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn golden_six_four_half_seed_seven() {
        let ds = dataset(&[6, 4]);
        let sub = class_balanced_subsample(&ds, Amount::Fraction(0.5), 7).unwrap();
        let texts: Vec<&str> = sub.examples().iter().map(|e| e.text.as_str()).collect();
        assert_eq!(sub.class_counts(), [3, 2]);
        assert_eq!(texts, GOLDEN_6_4);
    }

    const GOLDEN_6_4: [&str; 5] = [
        "c0 item 2",
        "c0 item 3",
        "c0 item 4",
        "c1 item 1",
        "c1 item 3",
    ];

    #[test]
    fn floor_of_one_and_errors() {
        let ds = dataset(&[3, 200]);
        let sub = class_balanced_subsample(&ds, Amount::Fraction(0.01), 0).unwrap();
        assert_eq!(sub.class_counts(), [1, 2]);
        assert!(class_balanced_subsample(&ds, Amount::Fraction(0.0), 0).is_err());
        assert!(class_balanced_subsample(&ds, Amount::Fraction(1.5), 0).is_err());
        assert!(class_balanced_subsample(&ds, Amount::PerClass(4), 0).is_err());
        assert_eq!(
            class_balanced_subsample(&ds, Amount::PerClass(3), 0)
                .unwrap()
                .class_counts(),
            [3, 3]
        );
    }

    #[test]
    fn amount_parsing() {
        assert_eq!("10".parse::<Amount>().unwrap(), Amount::PerClass(10));
        assert_eq!("0.01".parse::<Amount>().unwrap(), Amount::Fraction(0.01));
        assert!("lots".parse::<Amount>().is_err());
    }
}
