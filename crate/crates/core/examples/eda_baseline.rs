//! Rule-based augmentation: synonym replacement, insertion, swap and deletion.
//!
//! Run with `cargo run --example eda_baseline`.

use mixprompt::augment::{eda_augment, EdaConfig, Lexicon};
use mixprompt::corpus::{Dataset, LabeledExample};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = Dataset::new(
        vec!["positive".into(), "negative".into()],
        vec![
            LabeledExample::new("a good film with a great cast and a fine script", 0),
            LabeledExample::new("a bad film with a poor cast and a weak script", 1),
        ],
    )?;
    let lexicon =
        Lexicon::parse("good, fine, nice\ngreat, superb\nbad, poor, awful\nfilm, movie, picture\n");
    let config = EdaConfig {
        alpha: 0.2,
        n_aug_per_example: 4,
        lexicon: Some(lexicon),
        ..EdaConfig::default()
    };
    for ex in eda_augment(&data, &config)? {
        println!("{}\t{}", data.label_name(ex.label), ex.text);
    }
    Ok(())
}
