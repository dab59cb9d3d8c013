//! Load a dataset, normalize it and draw class-balanced few-shot subsets.
//!
//! Run with `cargo run --example prepare_data`.

use mixprompt::corpus::{
    class_balanced_subsample, normalize_text, parse_dataset, write_dataset, Amount, Dataset,
    DatasetFormat, LabeledExample, LoadOptions,
};

const RAW: &str = "\
A gripping,beautifully shot drama!\tpositive\ttrain
the plot collapses under its own weight\tnegative\ttrain
charming   and  funny\tpositive\ttrain
tedious from start to finish\tnegative\ttrain
an instant classic\tpositive\ttrain
a mess of clichés\tnegative\ttrain
sharp writing and a great cast\tpositive\ttest
dull and overlong\tnegative\ttest
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = parse_dataset(RAW, &LoadOptions::new(DatasetFormat::Tsv))?;
    println!(
        "labels {:?}, class counts {:?}",
        data.labels(),
        data.class_counts()
    );

    let normalized = Dataset::with_splits(
        data.labels().to_vec(),
        data.examples()
            .iter()
            .map(|e| LabeledExample::new(normalize_text(&e.text), e.label))
            .collect(),
        data.split_indices().clone(),
    )?;
    println!(
        "{:?} -> {:?}",
        data.examples()[0].text,
        normalized.examples()[0].text
    );

    let train = normalized.split("train")?;
    for (amount, seed) in [
        (Amount::PerClass(2), 0),
        (Amount::PerClass(2), 1),
        (Amount::Fraction(0.1), 0),
    ] {
        let subset = class_balanced_subsample(&train, amount, seed)?;
        println!(
            "\n{} seed {seed} -> {:016x}",
            amount.describe(),
            subset.fingerprint()
        );
        print!("{}", write_dataset(&subset, DatasetFormat::Jsonl, false)?);
    }
    Ok(())
}
