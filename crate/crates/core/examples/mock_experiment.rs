//! Offline experiment on a synthetic two-class task: no augmentation versus
//! prompt-mixing augmentation with hard and soft labels, ten paired trials each.
//!
//! Run with `cargo run --release --example mock_experiment`.

use mixprompt::bench::synthetic::{synthetic_task, SyntheticConfig};
use mixprompt::bench::{
    format_report, run_ablation_on, AblationKind, BackendConfig, ExperimentConfig, ReportStyle,
};
use mixprompt::classify::FeatureConfig;
use mixprompt::corpus::{Amount, SpecConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let task = synthetic_task(&SyntheticConfig::default());
    let config = ExperimentConfig {
        name: "synthetic".into(),
        spec: SpecConfig::Named("sst2".into()),
        amounts: vec![Amount::PerClass(10)],
        trials: 10,
        features: FeatureConfig {
            hash_buckets: 1 << 14,
            ..FeatureConfig::default()
        },
        backend: BackendConfig {
            mock: task.mock.clone(),
            ..BackendConfig::default()
        },
        ..ExperimentConfig::default()
    };

    let values = AblationKind::LabelMode.default_values();
    let reports = run_ablation_on(AblationKind::LabelMode, &config, &task.dataset, &values)?;
    print!("{}", format_report(&reports, ReportStyle::Markdown));
    for r in &reports {
        let accs: Vec<String> = r.accuracies().iter().map(|a| format!("{a:.3}")).collect();
        println!("{:>5}: {}", r.arm, accs.join(" "));
    }
    Ok(())
}
