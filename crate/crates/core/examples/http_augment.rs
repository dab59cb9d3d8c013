//! Augment against a real completions endpoint.
//!
//! Needs `MIXPROMPT_API_KEY`; exits quietly without it.
//!
//! Run with `cargo run --example http_augment -- <base-url> <model>`.

use std::sync::Arc;

use mixprompt::augment::{gpt3mix_augment, AugmentConfig};
use mixprompt::corpus::{resolve_task_spec, Dataset, LabeledExample, SpecConfig};
use mixprompt::extract::write_augmented;
use mixprompt::lmclient::{HttpBackend, HttpConfig, LmClient, RetryPolicy, API_KEY_ENV};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    if std::env::var_os(API_KEY_ENV).is_none() {
        eprintln!("{API_KEY_ENV} is not set; skipping");
        return Ok(());
    }
    let mut args = std::env::args().skip(1);
    let base_url = args
        .next()
        .unwrap_or_else(|| "https://api.openai.com".into());
    let model = args.next().unwrap_or_else(|| "davinci-002".into());

    let data = Dataset::new(
        vec!["positive".into(), "negative".into()],
        vec![
            LabeledExample::new("A warm, witty and wonderfully acted film.", 0),
            LabeledExample::new("Two hours I will never get back.", 1),
            LabeledExample::new("The best thing to hit screens this year.", 0),
            LabeledExample::new("The plot collapses under its own weight.", 1),
        ],
    )?;
    let spec = resolve_task_spec(&SpecConfig::Named("sst2".into()), data.labels())?;
    let backend = HttpBackend::from_env(&HttpConfig {
        base_url,
        model,
        timeout_secs: 60,
    });
    let client = LmClient::new(Arc::new(backend), RetryPolicy::default());
    let run = gpt3mix_augment(
        &data,
        &spec,
        &client,
        &AugmentConfig {
            ratio: 1.0,
            ..AugmentConfig::default()
        },
    )?;
    if let Some(reason) = &run.aborted {
        eprintln!("aborted: {reason}");
    }
    print!("{}", write_augmented(&run.records, data.labels()));
    Ok(())
}
