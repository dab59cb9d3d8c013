//! Anchor selection and prompt rendering.
//!
//! A mix prompt is a description header, a blank line, one line per anchor example
//! and a trailing text-type prefix that asks the model for a new item:
//!
//! ```text
//! Each item in the following list contains a movie review and the respective sentiment. The sentiment is one of 'positive' or 'negative'.
//!
//! Movie review: And people make fun of me for liking Showgirls. (Sentiment: Negative)
//! Movie review:
//! ```
//!
//! The parsers in this module accept exactly what the builders emit; the mock
//! backend relies on them, so any drift in the format fails its tests.

use rand::seq::index;
use rand::Rng;
use thiserror::Error;

use crate::corpus::{capitalize_first, Dataset, LabeledExample, TaskSpecification};
use crate::extract::split_label_suffix;

pub const DEFAULT_K: usize = 2;
pub const MAX_K: usize = 8;

const HEADER_PREFIX: &str = "Each item in the following list contains a ";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("k must be between 1 and {max}, got {k}")]
    InvalidK { k: usize, max: usize },
    #[error("cannot draw {k} anchors from {n} examples")]
    NotEnoughExamples { k: usize, n: usize },
    #[error("generated text is empty")]
    EmptyGeneratedText,
    #[error("generated text spans more than one line")]
    MultilineGeneratedText,
    #[error("not a mix prompt: {0}")]
    Unparseable(String),
}

/// The anchors embedded in one prompt, in sampled order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptExamples {
    pub examples: Vec<LabeledExample>,
    pub source_indices: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PromptKind {
    MixGeneration,
    LabelQuery,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompt<'a> {
    pub text: String,
    pub spec: &'a TaskSpecification,
    pub kind: PromptKind,
}

/// Draws `k` distinct anchors uniformly without replacement.
pub fn select_examples<R: Rng + ?Sized>(
    dataset: &Dataset,
    k: usize,
    rng: &mut R,
) -> Result<PromptExamples, PromptError> {
    if k == 0 || k > MAX_K {
        return Err(PromptError::InvalidK { k, max: MAX_K });
    }
    if k > dataset.len() {
        return Err(PromptError::NotEnoughExamples {
            k,
            n: dataset.len(),
        });
    }
    let source_indices = index::sample(rng, dataset.len(), k).into_vec();
    let examples = source_indices
        .iter()
        .map(|&i| dataset.examples()[i].clone())
        .collect();
    Ok(PromptExamples {
        examples,
        source_indices,
    })
}

/// `'a'`, `'a' or 'b'`, `'a', 'b', or 'c'`.
fn enumerate_tokens(tokens: &[String]) -> String {
    let quoted: Vec<String> = tokens.iter().map(|t| format!("'{t}'")).collect();
    match quoted.as_slice() {
        [] => String::new(),
        [one] => one.clone(),
        [a, b] => format!("{a} or {b}"),
        [init @ .., last] => format!("{}, or {last}", init.join(", ")),
    }
}

pub fn header_line(spec: &TaskSpecification) -> String {
    format!(
        "{HEADER_PREFIX}{t} and the respective {l}. The {l} is one of {e}.",
        t = spec.text_type(),
        l = spec.label_type(),
        e = enumerate_tokens(spec.tokens()),
    )
}

/// The `(Label: Token)` suffix that closes every example line.
pub fn label_suffix(spec: &TaskSpecification, label: usize) -> String {
    format!(
        "({}: {})",
        capitalize_first(spec.label_type()),
        capitalize_first(spec.token(label))
    )
}

/// Body of an example line without the text-type prefix: `text (Label: Token)`.
pub fn format_example_body(text: &str, label: usize, spec: &TaskSpecification) -> String {
    format!("{} {}", single_line(text), label_suffix(spec, label))
}

pub fn format_example_line(example: &LabeledExample, spec: &TaskSpecification) -> String {
    format!(
        "{}: {}",
        capitalize_first(spec.text_type()),
        format_example_body(&example.text, example.label, spec)
    )
}

fn single_line(text: &str) -> String {
    if text.contains(['\n', '\r']) {
        text.split(['\n', '\r'])
            .filter(|s| !s.is_empty())
            .collect::<Vec<_>>()
            .join(" ")
    } else {
        text.to_string()
    }
}

pub fn augmentation_prefix(spec: &TaskSpecification) -> String {
    format!("{}:", capitalize_first(spec.text_type()))
}

pub fn build_mix_prompt<'a>(examples: &PromptExamples, spec: &'a TaskSpecification) -> Prompt<'a> {
    let mut text = header_line(spec);
    text.push_str("\n\n");
    for ex in &examples.examples {
        text.push_str(&format_example_line(ex, spec));
        text.push('\n');
    }
    text.push_str(&augmentation_prefix(spec));
    Prompt {
        text,
        spec,
        kind: PromptKind::MixGeneration,
    }
}

/// The context under which each label token's likelihood is read: the mix prompt,
/// the generated text, and an open `(Label: ` group.
pub fn build_label_query<'a>(
    mix_prompt: &Prompt<'a>,
    generated_text: &str,
    spec: &'a TaskSpecification,
) -> Result<Prompt<'a>, PromptError> {
    if generated_text.trim().is_empty() {
        return Err(PromptError::EmptyGeneratedText);
    }
    if generated_text.contains(['\n', '\r']) {
        return Err(PromptError::MultilineGeneratedText);
    }
    let text = format!(
        "{} {} ({}: ",
        mix_prompt.text,
        generated_text,
        capitalize_first(spec.label_type())
    );
    Ok(Prompt {
        text,
        spec,
        kind: PromptKind::LabelQuery,
    })
}

/// Header fields recovered from a rendered prompt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptHeader {
    pub text_type: String,
    pub label_type: String,
    pub tokens: Vec<String>,
}

impl PromptHeader {
    pub fn token_index(&self, token: &str) -> Option<usize> {
        let needle = token.to_lowercase();
        self.tokens.iter().position(|t| t.to_lowercase() == needle)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedMixPrompt {
    pub header: PromptHeader,
    /// Anchor text and the index of its label token in `header.tokens`.
    pub examples: Vec<(String, usize)>,
}

fn bad(msg: impl Into<String>) -> PromptError {
    PromptError::Unparseable(msg.into())
}

pub fn parse_header(line: &str) -> Result<PromptHeader, PromptError> {
    let rest = line
        .strip_prefix(HEADER_PREFIX)
        .ok_or_else(|| bad("header prefix missing"))?;
    let (text_type, rest) = rest
        .split_once(" and the respective ")
        .ok_or_else(|| bad("header lacks the label type"))?;
    let (label_type, rest) = rest
        .split_once(". The ")
        .ok_or_else(|| bad("header lacks the label enumeration"))?;
    let enumeration = rest
        .strip_prefix(label_type)
        .and_then(|r| r.strip_prefix(" is one of "))
        .and_then(|r| r.strip_suffix('.'))
        .ok_or_else(|| bad("header enumeration malformed"))?;
    let tokens = parse_enumeration(enumeration)?;
    if enumerate_tokens(&tokens) != enumeration {
        return Err(bad("header enumeration malformed"));
    }
    Ok(PromptHeader {
        text_type: text_type.to_string(),
        label_type: label_type.to_string(),
        tokens,
    })
}

fn parse_enumeration(mut s: &str) -> Result<Vec<String>, PromptError> {
    let mut tokens = Vec::new();
    loop {
        s = s
            .strip_prefix('\'')
            .ok_or_else(|| bad("expected a quoted label token"))?;
        // A token ends at a quote followed by a separator or the end of the list.
        let end = s
            .match_indices('\'')
            .map(|(i, _)| i)
            .find(|&i| {
                let after = &s[i + 1..];
                after.is_empty() || after.starts_with(", ") || after.starts_with(" or ")
            })
            .ok_or_else(|| bad("unterminated label token"))?;
        tokens.push(s[..end].to_string());
        s = &s[end + 1..];
        if s.is_empty() {
            return Ok(tokens);
        }
        s = s
            .strip_prefix(", or ")
            .or_else(|| s.strip_prefix(", "))
            .or_else(|| s.strip_prefix(" or "))
            .ok_or_else(|| bad("bad enumeration separator"))?;
    }
}

/// Parses a prompt produced by [`build_mix_prompt`].
pub fn parse_mix_prompt(text: &str) -> Result<ParsedMixPrompt, PromptError> {
    let lines: Vec<&str> = text.split('\n').collect();
    if lines.len() < 4 {
        return Err(bad("too few lines"));
    }
    let header = parse_header(lines[0])?;
    if !lines[1].is_empty() {
        return Err(bad("missing blank line after header"));
    }
    let prefix = format!("{}:", capitalize_first(&header.text_type));
    if lines[lines.len() - 1] != prefix {
        return Err(bad("missing augmentation prefix"));
    }
    let line_prefix = format!("{prefix} ");
    let label_type = capitalize_first(&header.label_type);
    let mut examples = Vec::new();
    for line in &lines[2..lines.len() - 1] {
        let body = line
            .strip_prefix(&line_prefix)
            .ok_or_else(|| bad(format!("example line without {prefix:?} prefix")))?;
        let (text, token) = split_label_suffix(body, &label_type)
            .ok_or_else(|| bad("example line without label"))?;
        let idx = header
            .token_index(token)
            .ok_or_else(|| bad(format!("example label {token:?} not in header")))?;
        if text.trim().is_empty() {
            return Err(bad("example line with empty text"));
        }
        examples.push((text.trim().to_string(), idx));
    }
    if examples.is_empty() {
        return Err(bad("no example lines"));
    }
    Ok(ParsedMixPrompt { header, examples })
}

/// Splits a prompt produced by [`build_label_query`] into the mix prompt and the
/// generated text.
pub fn parse_label_query(text: &str) -> Result<(ParsedMixPrompt, String), PromptError> {
    let (before, last) = text
        .rsplit_once('\n')
        .ok_or_else(|| bad("single-line prompt"))?;
    let header = parse_header(before.split('\n').next().unwrap_or_default())?;
    let prefix = format!("{}:", capitalize_first(&header.text_type));
    let open = format!(" ({}: ", capitalize_first(&header.label_type));
    let generated = last
        .strip_prefix(&prefix)
        .and_then(|r| r.strip_prefix(' '))
        .and_then(|r| r.strip_suffix(&open))
        .ok_or_else(|| bad("last line is not an open label query"))?;
    if generated.trim().is_empty() {
        return Err(bad("empty generated text"));
    }
    let parsed = parse_mix_prompt(&format!("{before}\n{prefix}"))?;
    Ok((parsed, generated.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{resolve_task_spec, SpecConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spec(name: &str, labels: &[&str]) -> TaskSpecification {
        let labels: Vec<String> = labels.iter().map(|s| s.to_string()).collect();
        resolve_task_spec(&SpecConfig::Named(name.into()), &labels).unwrap()
    }

    fn anchors(items: &[(&str, usize)]) -> PromptExamples {
        PromptExamples {
            examples: items
                .iter()
                .map(|(t, l)| LabeledExample::new(*t, *l))
                .collect(),
            source_indices: (0..items.len()).collect(),
        }
    }

    #[test]
    fn generic_single_example() {
        let s = spec("generic", &["yes", "no"]);
        let p = build_mix_prompt(&anchors(&[("ok", 0)]), &s);
        assert_eq!(
            p.text,
            "Each item in the following list contains a text and the respective label. \
             The label is one of 'yes' or 'no'.\n\nText: ok (Label: Yes)\nText:"
        );
        assert_eq!(p.kind, PromptKind::MixGeneration);
    }

    #[test]
    fn enumeration_forms() {
        let t = |v: &[&str]| enumerate_tokens(&v.iter().map(|s| s.to_string()).collect::<Vec<_>>());
        assert_eq!(t(&["a"]), "'a'");
        assert_eq!(t(&["a", "b"]), "'a' or 'b'");
        assert_eq!(t(&["a", "b", "c"]), "'a', 'b', or 'c'");
        for v in [vec!["a"], vec!["a", "b"], vec!["it's", "b", "c", "d"]] {
            let tokens: Vec<String> = v.iter().map(|s| s.to_string()).collect();
            assert_eq!(
                parse_enumeration(&enumerate_tokens(&tokens)).unwrap(),
                tokens
            );
        }
    }

    #[test]
    fn label_query_appends_open_group() {
        let s = spec("sst2", &["pos", "neg"]);
        let mix = build_mix_prompt(&anchors(&[("fine", 0)]), &s);
        let q = build_label_query(&mix, "Groundbreaking, disturbing.", &s).unwrap();
        assert_eq!(
            q.text,
            format!("{} Groundbreaking, disturbing. (Sentiment: ", mix.text)
        );
        assert_eq!(q.kind, PromptKind::LabelQuery);
        assert_eq!(
            build_label_query(&mix, "Groundbreaking, disturbing.", &s).unwrap(),
            q
        );
        assert_eq!(
            build_label_query(&mix, "  ", &s),
            Err(PromptError::EmptyGeneratedText)
        );
        assert_eq!(
            build_label_query(&mix, "a\nb", &s),
            Err(PromptError::MultilineGeneratedText)
        );

        let (parsed, generated) = parse_label_query(&q.text).unwrap();
        assert_eq!(generated, "Groundbreaking, disturbing.");
        assert_eq!(parsed.examples, vec![("fine".to_string(), 0)]);
    }

    #[test]
    fn select_bounds() {
        let ds = Dataset::new(
            vec!["a".into(), "b".into()],
            vec![LabeledExample::new("x", 0), LabeledExample::new("y", 1)],
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let both = select_examples(&ds, 2, &mut rng).unwrap();
        let mut idx = both.source_indices.clone();
        idx.sort();
        assert_eq!(idx, [0, 1]);
        assert_eq!(both.examples[0], ds.examples()[both.source_indices[0]]);
        assert_eq!(
            select_examples(&ds, 0, &mut rng),
            Err(PromptError::InvalidK { k: 0, max: MAX_K })
        );
        assert_eq!(
            select_examples(&ds, 3, &mut rng),
            Err(PromptError::NotEnoughExamples { k: 3, n: 2 })
        );
        assert!(select_examples(&ds, 9, &mut rng).is_err());
    }

    #[test]
    fn parse_inverts_build_with_k_lines() {
        let s = spec("trec6", &["ABBR", "LOC", "DESC", "NUM", "ENTY", "HUM"]);
        let ex = anchors(&[
            ("Where is (it)?", 1),
            ("How many (Type: numeric) things?", 3),
            ("Who?", 5),
        ]);
        let p = build_mix_prompt(&ex, &s);
        let parsed = parse_mix_prompt(&p.text).unwrap();
        assert_eq!(parsed.header.tokens, s.tokens());
        assert_eq!(parsed.header.text_type, "question");
        let got: Vec<(String, usize)> = parsed.examples;
        let want: Vec<(String, usize)> = ex
            .examples
            .iter()
            .map(|e| (e.text.clone(), e.label))
            .collect();
        assert_eq!(got, want);
        let lines: Vec<&str> = p.text.split('\n').collect();
        assert_eq!(lines.len(), 2 + 3 + 1);
    }

    #[test]
    fn parser_rejects_drift() {
        let s = spec("sst2", &["pos", "neg"]);
        let p = build_mix_prompt(&anchors(&[("fine", 0)]), &s).text;
        assert!(parse_mix_prompt(&p.replace("respective", "corresponding")).is_err());
        assert!(parse_mix_prompt(&p.replace("\n\n", "\n")).is_err());
        assert!(parse_mix_prompt(&format!("{p} ")).is_err());
        assert!(parse_mix_prompt(&p.replace("(Sentiment: Positive)", "(Sentiment: Meh)")).is_err());
        assert!(parse_mix_prompt(&p.replace("'positive' or", "'positive', or")).is_err());
    }
}
