//! Train the hashed linear classifier with early stopping and evaluate it.
//!
//! Run with `cargo run --release --example train_classifier`.

use mixprompt::bench::synthetic::{synthetic_task, SyntheticConfig};
use mixprompt::classify::{
    evaluate, train, ClassifierModel, FeatureConfig, SoftExample, TrainConfig,
};
use mixprompt::corpus::{class_balanced_subsample, Amount};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let task = synthetic_task(&SyntheticConfig::default());
    let labels = task.dataset.labels().to_vec();
    let subset = class_balanced_subsample(&task.dataset.split("train")?, Amount::PerClass(20), 0)?;
    let validation = task.dataset.split("validation")?;
    let test = task.dataset.split("test")?;

    let examples: Vec<SoftExample> = subset
        .examples()
        .iter()
        .map(|e| SoftExample::one_hot(e, labels.len()))
        .collect();
    let features = FeatureConfig {
        hash_buckets: 1 << 14,
        ..FeatureConfig::default()
    };
    let outcome = train(
        &examples,
        validation.examples(),
        &labels,
        &TrainConfig::default(),
        &features,
    )?;
    println!(
        "best epoch {} of {}, test accuracy {:.3}",
        outcome.best_epoch,
        outcome.epochs_run,
        evaluate(&outcome.model, &test)?
    );

    let restored = ClassifierModel::from_jsonl(&outcome.model.to_jsonl())?;
    let sample = &test.examples()[0].text;
    println!("{sample:?} -> {:?}", restored.predict(sample));
    Ok(())
}
