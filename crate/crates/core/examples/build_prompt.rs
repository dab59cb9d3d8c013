//! Render a mix prompt from sampled anchors, then the label query for a generated item.
//!
//! Run with `cargo run --example build_prompt`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use mixprompt::corpus::{resolve_task_spec, Dataset, LabeledExample, SpecConfig};
use mixprompt::promptgen::{
    build_label_query, build_mix_prompt, parse_mix_prompt, select_examples,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = Dataset::new(
        vec!["pos".into(), "neg".into()],
        vec![
            LabeledExample::new("A warm, witty and wonderfully acted film.", 0),
            LabeledExample::new("And people make fun of me for liking Showgirls.", 1),
            LabeledExample::new("Two hours I will never get back.", 1),
            LabeledExample::new("The best thing to hit screens this year.", 0),
        ],
    )?;
    let spec = resolve_task_spec(&SpecConfig::Named("sst2".into()), data.labels())?;

    let anchors = select_examples(&data, 2, &mut ChaCha8Rng::seed_from_u64(7))?;
    let prompt = build_mix_prompt(&anchors, &spec);
    println!(
        "--- mix prompt (anchors {:?}) ---\n{}",
        anchors.source_indices, prompt.text
    );

    let query = build_label_query(&prompt, "A quiet film that grows on you.", &spec)?;
    println!("\n--- label query ---\n{}", query.text);

    let parsed = parse_mix_prompt(&prompt.text)?;
    println!("\nparsed back {} examples", parsed.examples.len());
    Ok(())
}
