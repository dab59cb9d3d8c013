//! Turn label-token log-likelihoods into a soft label, and parse a raw completion.
//!
//! Run with `cargo run --example soft_label`.

use std::collections::BTreeMap;

use mixprompt::corpus::{resolve_task_spec, SpecConfig};
use mixprompt::extract::{compute_soft_label, parse_augmentation};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = resolve_task_spec(&SpecConfig::Named("sst2".into()), &[])?;

    let completion =
        " A quiet film (with a loud finale) that grows on you. (Sentiment: Positive)\n";
    let (text, label) = parse_augmentation(completion, &spec)?;
    println!("text {text:?}\ngenerated label {}", spec.labels()[label]);

    let scores: BTreeMap<String, f64> = [
        ("Positive".to_string(), -0.31),
        ("Negative".to_string(), -1.42),
    ]
    .into();
    let soft = compute_soft_label(&scores, &spec)?;
    for (l, p) in spec.labels().iter().zip(&soft) {
        println!("p({l}) = {p:.4}");
    }
    Ok(())
}
