//! Generate soft-labelled synthetic examples with the offline mock backend.
//!
//! Run with `cargo run --example mock_augment`.

use std::sync::Arc;

use mixprompt::augment::{gpt3mix_augment, AugmentConfig};
use mixprompt::bench::synthetic::{synthetic_task, SyntheticConfig};
use mixprompt::corpus::{class_balanced_subsample, resolve_task_spec, Amount, SpecConfig};
use mixprompt::extract::write_augmented;
use mixprompt::lmclient::{LmClient, MockBackend, RetryPolicy};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let task = synthetic_task(&SyntheticConfig::default());
    let source = class_balanced_subsample(&task.dataset.split("train")?, Amount::PerClass(5), 0)?;
    let spec = resolve_task_spec(&SpecConfig::Named("sst2".into()), source.labels())?;
    let client = LmClient::new(Arc::new(MockBackend::new(task.mock)?), RetryPolicy::none());

    let config = AugmentConfig {
        ratio: 1.0,
        seed: 3,
        ..AugmentConfig::default()
    };
    let run = gpt3mix_augment(&source, &spec, &client, &config)?;
    println!(
        "{} records, {} skipped, {} requests",
        run.records.len(),
        run.skipped,
        run.requests_made
    );
    print!("{}", write_augmented(&run.records, source.labels()));
    Ok(())
}
