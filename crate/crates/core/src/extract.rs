//! Pulling `(text, label)` out of completions and turning label-token scores into
//! soft labels.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::TaskSpecification;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("no label group found")]
    NoLabel,
    #[error("label token {0:?} is not produced by the verbalizer")]
    UnknownLabel(String),
    #[error("generated text is empty")]
    EmptyText,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SoftLabelError {
    #[error("no score for label token {0:?}")]
    MissingToken(String),
    #[error("label token {0:?} is scored more than once")]
    DuplicateToken(String),
    #[error("score for {token:?} is not finite ({value})")]
    NonFinite { token: String, value: f64 },
}

/// Case-insensitive prefix strip, returning the rest of `s`.
fn strip_prefix_ci<'a>(s: &'a str, prefix: &str) -> Option<&'a str> {
    let mut rest = s.char_indices();
    for p in prefix.chars() {
        let (_, c) = rest.next()?;
        if !c.to_lowercase().eq(p.to_lowercase()) {
            return None;
        }
    }
    Some(rest.next().map_or("", |(i, _)| &s[i..]))
}

/// Finds the rightmost `(<label_type>: <token>)` group that closes `line` and
/// returns the text before it and the raw token. Matching on the label type is
/// case-insensitive; only trailing whitespace may follow the group.
pub fn split_label_suffix<'a>(line: &'a str, label_type: &str) -> Option<(&'a str, &'a str)> {
    let line = line.trim_end();
    let inner_end = line.strip_suffix(')')?.len();
    let open = line[..inner_end]
        .char_indices()
        .rev()
        .filter(|&(_, c)| c == '(')
        .find(|&(i, _)| {
            strip_prefix_ci(&line[i + 1..inner_end], label_type).is_some_and(|r| r.starts_with(':'))
        })?
        .0;
    let after_type = strip_prefix_ci(&line[open + 1..inner_end], label_type)?;
    let token = after_type[1..].trim();
    Some((&line[..open], token))
}

/// Extracts the synthetic text and its generated label from a completion.
///
/// Only the first generated item (up to the first line break) is considered.
pub fn parse_augmentation(
    completion_text: &str,
    spec: &TaskSpecification,
) -> Result<(String, usize), ParseError> {
    let item = completion_text
        .trim_start()
        .split(['\n', '\r'])
        .next()
        .unwrap_or_default();
    let (text, token) = split_label_suffix(item, spec.label_type()).ok_or(ParseError::NoLabel)?;
    let label = spec
        .label_for_token(token)
        .ok_or_else(|| ParseError::UnknownLabel(token.to_string()))?;
    let text = text.trim();
    if text.is_empty() {
        return Err(ParseError::EmptyText);
    }
    Ok((text.to_string(), label))
}

/// Normalizes label-token log-likelihoods into a distribution ordered by label
/// index. Keys are matched to verbalized tokens ignoring case; unrelated keys are
/// ignored.
pub fn compute_soft_label(
    scores: &BTreeMap<String, f64>,
    spec: &TaskSpecification,
) -> Result<Vec<f64>, SoftLabelError> {
    let mut logits = Vec::with_capacity(spec.num_labels());
    for token in spec.tokens() {
        let lower = token.to_lowercase();
        let mut hits = scores.iter().filter(|(k, _)| k.to_lowercase() == lower);
        let (_, &value) = hits
            .next()
            .ok_or_else(|| SoftLabelError::MissingToken(token.clone()))?;
        if hits.next().is_some() {
            return Err(SoftLabelError::DuplicateToken(token.clone()));
        }
        if !value.is_finite() {
            return Err(SoftLabelError::NonFinite {
                token: token.clone(),
                value,
            });
        }
        logits.push(value);
    }
    Ok(softmax(&logits))
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// One synthetic example with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentationRecord {
    pub text: String,
    pub soft_label: Vec<f64>,
    pub generated_label: usize,
    pub anchor_indices: Vec<usize>,
    pub raw_completion: String,
    pub model: String,
}

#[derive(Serialize, Deserialize)]
struct RecordLine {
    text: String,
    soft_label: Vec<f64>,
    generated_label: String,
    anchors: Vec<usize>,
    model: String,
}

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
}

impl AugmentationRecord {
    /// One line of the augmented-dataset jsonl format. `labels` names the label
    /// indices; soft labels are written in that order.
    pub fn to_jsonl(&self, labels: &[String]) -> String {
        serde_json::to_string(&RecordLine {
            text: self.text.clone(),
            soft_label: self.soft_label.clone(),
            generated_label: labels[self.generated_label].clone(),
            anchors: self.anchor_indices.clone(),
            model: self.model.clone(),
        })
        .expect("record serializes")
    }
}

pub fn write_augmented(records: &[AugmentationRecord], labels: &[String]) -> String {
    records.iter().map(|r| r.to_jsonl(labels) + "\n").collect()
}

/// Reads the augmented-dataset jsonl format back. Raw completions are not persisted.
pub fn read_augmented(
    content: &str,
    labels: &[String],
) -> Result<Vec<AugmentationRecord>, RecordError> {
    let mut out = Vec::new();
    for (i, raw) in content.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| RecordError::Malformed {
            line: i + 1,
            reason,
        };
        let rec: RecordLine = serde_json::from_str(raw).map_err(|e| bad(e.to_string()))?;
        let generated_label = labels
            .iter()
            .position(|l| *l == rec.generated_label)
            .ok_or_else(|| bad(format!("unknown label {:?}", rec.generated_label)))?;
        if rec.soft_label.len() != labels.len() {
            return Err(bad(format!(
                "soft label has {} entries, expected {}",
                rec.soft_label.len(),
                labels.len()
            )));
        }
        out.push(AugmentationRecord {
            text: rec.text,
            soft_label: rec.soft_label,
            generated_label,
            anchor_indices: rec.anchors,
            raw_completion: String::new(),
            model: rec.model,
        });
    }
    Ok(out)
}
