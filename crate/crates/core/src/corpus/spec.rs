use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Text type, label type and a verbalizer mapping every label to one token.
///
/// `labels[i]` is verbalized as `tokens[i]`; both follow the label order of the
/// dataset the specification was resolved against.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpecification {
    text_type: String,
    label_type: String,
    labels: Vec<String>,
    tokens: Vec<String>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SpecError {
    #[error("{0} must be a non-empty single line")]
    EmptyField(&'static str),
    #[error("verbalizer is not injective: labels {labels:?} all map to {token:?}")]
    NonInjective { token: String, labels: Vec<String> },
    #[error("verbalizer has no token for label {0:?}")]
    MissingLabel(String),
    #[error("verbalizer maps label {0:?}, which is not in the label set")]
    UnknownLabel(String),
    #[error("label {label:?} has invalid token {token:?}: {reason}")]
    InvalidToken {
        label: String,
        token: String,
        reason: &'static str,
    },
    #[error("unknown task specification {0:?}; built-ins are generic, sst2, cr, subj, cola, trec6, mpqa")]
    UnknownName(String),
    #[error("cannot parse task specification: {0}")]
    Parse(String),
}

impl TaskSpecification {
    pub fn new(
        text_type: impl Into<String>,
        label_type: impl Into<String>,
        labels: Vec<String>,
        tokens: Vec<String>,
    ) -> Result<Self, SpecError> {
        let spec = Self {
            text_type: text_type.into(),
            label_type: label_type.into(),
            labels,
            tokens,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// The identity specification: ("text", "label", each label verbalized as itself).
    pub fn generic(labels: &[String]) -> Result<Self, SpecError> {
        Self::new("text", "label", labels.to_vec(), labels.to_vec())
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        let single_line = |s: &str| !s.trim().is_empty() && !s.contains(['\n', '\r']);
        if !single_line(&self.text_type) {
            return Err(SpecError::EmptyField("text type"));
        }
        if !single_line(&self.label_type) {
            return Err(SpecError::EmptyField("label type"));
        }
        if self.labels.is_empty() {
            return Err(SpecError::EmptyField("label set"));
        }
        if self.labels.len() != self.tokens.len() {
            return Err(SpecError::MissingLabel(
                self.labels
                    .get(self.tokens.len())
                    .cloned()
                    .unwrap_or_default(),
            ));
        }
        for (label, token) in self.labels.iter().zip(&self.tokens) {
            let reason = if token.trim().is_empty() {
                Some("empty")
            } else if token.contains(['\n', '\r']) {
                Some("contains a line break")
            } else if token.contains(['(', ')']) {
                Some("contains a parenthesis")
            } else if token.trim() != token {
                Some("has surrounding whitespace")
            } else {
                None
            };
            if let Some(reason) = reason {
                return Err(SpecError::InvalidToken {
                    label: label.clone(),
                    token: token.clone(),
                    reason,
                });
            }
        }
        // Extraction matches tokens case-insensitively, so injectivity must too.
        for (i, token) in self.tokens.iter().enumerate() {
            let clash: Vec<String> = self
                .tokens
                .iter()
                .enumerate()
                .filter(|(_, t)| t.to_lowercase() == token.to_lowercase())
                .map(|(j, _)| self.labels[j].clone())
                .collect();
            if clash.len() > 1 {
                return Err(SpecError::NonInjective {
                    token: self.tokens[i].clone(),
                    labels: clash,
                });
            }
        }
        Ok(())
    }

    pub fn text_type(&self) -> &str {
        &self.text_type
    }

    pub fn label_type(&self) -> &str {
        &self.label_type
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn num_labels(&self) -> usize {
        self.labels.len()
    }

    pub fn token(&self, label: usize) -> &str {
        &self.tokens[label]
    }

    /// Label index whose token equals `token`, ignoring case.
    pub fn label_for_token(&self, token: &str) -> Option<usize> {
        let needle = token.to_lowercase();
        self.tokens.iter().position(|t| t.to_lowercase() == needle)
    }

    /// Tokens as they appear in example lines (first letter capitalized).
    pub fn display_tokens(&self) -> Vec<String> {
        self.tokens.iter().map(|t| capitalize_first(t)).collect()
    }
}

pub fn capitalize_first(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// (name, text type, label type, label -> token).
pub type BuiltinSpec = (
    &'static str,
    &'static str,
    &'static str,
    &'static [(&'static str, &'static str)],
);

/// Built-in task specifications.
pub const BUILTIN_SPECS: &[BuiltinSpec] = &[
    (
        "sst2",
        "movie review",
        "sentiment",
        &[("pos", "positive"), ("neg", "negative")],
    ),
    (
        "cr",
        "customer review",
        "sentiment",
        &[("pos", "positive"), ("neg", "negative")],
    ),
    (
        "subj",
        "text",
        "objective",
        &[("subjective", "no"), ("objective", "yes")],
    ),
    (
        "cola",
        "text",
        "grammar",
        &[("acceptable", "correct"), ("unacceptable", "incorrect")],
    ),
    (
        "trec6",
        "question",
        "type",
        &[
            ("ABBR", "abbreviation"),
            ("LOC", "location"),
            ("DESC", "description"),
            ("NUM", "numeric"),
            ("ENTY", "entity"),
            ("HUM", "human"),
        ],
    ),
    (
        "mpqa",
        "text",
        "sentiment",
        &[("pos", "positive"), ("neg", "negative")],
    ),
];

/// Task-spec config document (TOML):
///
/// ```toml
/// text_type = "movie review"
/// label_type = "sentiment"
/// [verbalizer]
/// pos = "positive"
/// neg = "negative"
/// ```
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpecFile {
    pub text_type: String,
    pub label_type: String,
    pub verbalizer: IndexMap<String, String>,
}

impl TaskSpecFile {
    pub fn from_toml(text: &str) -> Result<Self, SpecError> {
        toml::from_str(text).map_err(|e| SpecError::Parse(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SpecConfig {
    Named(String),
    Explicit(TaskSpecFile),
}

impl SpecConfig {
    /// A built-in name (or `generic`), otherwise a path to a spec file.
    pub fn from_arg(arg: &str) -> Result<Self, SpecError> {
        if arg == "generic" || BUILTIN_SPECS.iter().any(|(n, ..)| *n == arg) {
            return Ok(SpecConfig::Named(arg.to_string()));
        }
        match std::fs::read_to_string(arg) {
            Ok(text) => Ok(SpecConfig::Explicit(TaskSpecFile::from_toml(&text)?)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                Err(SpecError::UnknownName(arg.to_string()))
            }
            Err(e) => Err(SpecError::Parse(format!("{arg}: {e}"))),
        }
    }
}

/// Resolves a named or explicit specification against a dataset's label list.
///
/// Built-in verbalizers match dataset labels by their key or by their token,
/// ignoring case, so a dataset labelled `positive`/`negative` works with `sst2`.
/// An empty `labels` slice takes the label list from the specification itself.
pub fn resolve_task_spec(
    config: &SpecConfig,
    labels: &[String],
) -> Result<TaskSpecification, SpecError> {
    match config {
        SpecConfig::Named(name) if name == "generic" => {
            if labels.is_empty() {
                return Err(SpecError::EmptyField("label set"));
            }
            TaskSpecification::generic(labels)
        }
        SpecConfig::Named(name) => {
            let (_, text_type, label_type, map) = BUILTIN_SPECS
                .iter()
                .find(|(n, ..)| *n == name.as_str())
                .ok_or_else(|| SpecError::UnknownName(name.clone()))?;
            if labels.is_empty() {
                let (l, t): (Vec<_>, Vec<_>) = map
                    .iter()
                    .map(|(l, t)| (l.to_string(), t.to_string()))
                    .unzip();
                return TaskSpecification::new(*text_type, *label_type, l, t);
            }
            let tokens = labels
                .iter()
                .map(|label| {
                    let lower = label.to_lowercase();
                    map.iter()
                        .find(|(k, t)| k.to_lowercase() == lower || t.to_lowercase() == lower)
                        .map(|(_, t)| t.to_string())
                        .ok_or_else(|| SpecError::MissingLabel(label.clone()))
                })
                .collect::<Result<Vec<_>, _>>()?;
            TaskSpecification::new(*text_type, *label_type, labels.to_vec(), tokens)
        }
        SpecConfig::Explicit(file) => {
            if labels.is_empty() {
                let (l, t): (Vec<_>, Vec<_>) = file
                    .verbalizer
                    .iter()
                    .map(|(l, t)| (l.clone(), t.clone()))
                    .unzip();
                return TaskSpecification::new(&file.text_type, &file.label_type, l, t);
            }
            if let Some(extra) = file.verbalizer.keys().find(|k| !labels.contains(k)) {
                return Err(SpecError::UnknownLabel(extra.clone()));
            }
            let tokens = labels
                .iter()
                .map(|l| {
                    file.verbalizer
                        .get(l)
                        .cloned()
                        .ok_or_else(|| SpecError::MissingLabel(l.clone()))
                })
                .collect::<Result<Vec<_>, _>>()?;
            TaskSpecification::new(&file.text_type, &file.label_type, labels.to_vec(), tokens)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strings(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn sst2_builtin() {
        let spec = resolve_task_spec(&SpecConfig::Named("sst2".into()), &strings(&["pos", "neg"]))
            .unwrap();
        assert_eq!(spec.text_type(), "movie review");
        assert_eq!(spec.label_type(), "sentiment");
        assert_eq!(spec.tokens(), ["positive", "negative"]);
    }

    #[test]
    fn builtin_follows_dataset_label_order_and_token_names() {
        let spec = resolve_task_spec(
            &SpecConfig::Named("sst2".into()),
            &strings(&["negative", "positive"]),
        )
        .unwrap();
        assert_eq!(spec.tokens(), ["negative", "positive"]);
        let err = resolve_task_spec(&SpecConfig::Named("sst2".into()), &strings(&["pos", "meh"]))
            .unwrap_err();
        assert_eq!(err, SpecError::MissingLabel("meh".into()));
    }

    #[test]
    fn generic_is_identity() {
        let spec = resolve_task_spec(
            &SpecConfig::Named("generic".into()),
            &strings(&["yes", "no"]),
        )
        .unwrap();
        assert_eq!((spec.text_type(), spec.label_type()), ("text", "label"));
        assert_eq!(spec.tokens(), ["yes", "no"]);
    }

    #[test]
    fn every_builtin_validates() {
        for (name, _, _, map) in BUILTIN_SPECS {
            let spec = resolve_task_spec(&SpecConfig::Named(name.to_string()), &[]).unwrap();
            assert_eq!(spec.num_labels(), map.len());
            spec.validate().unwrap();
        }
    }

    #[test]
    fn non_injective_names_both_labels() {
        let file = TaskSpecFile {
            text_type: "review".into(),
            label_type: "quality".into(),
            verbalizer: [("a", "good"), ("b", "good")]
                .into_iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        };
        let err =
            resolve_task_spec(&SpecConfig::Explicit(file), &strings(&["a", "b"])).unwrap_err();
        assert_eq!(
            err,
            SpecError::NonInjective {
                token: "good".into(),
                labels: strings(&["a", "b"])
            }
        );
    }

    #[test]
    fn explicit_coverage() {
        let file = TaskSpecFile::from_toml(
            "text_type = \"t\"\nlabel_type = \"l\"\n[verbalizer]\nb = \"bee\"\na = \"ay\"\n",
        )
        .unwrap();
        let spec = resolve_task_spec(&SpecConfig::Explicit(file.clone()), &[]).unwrap();
        assert_eq!(spec.labels(), ["b", "a"]);
        assert_eq!(
            resolve_task_spec(
                &SpecConfig::Explicit(file.clone()),
                &strings(&["a", "b", "c"])
            )
            .unwrap_err(),
            SpecError::MissingLabel("c".into())
        );
        assert_eq!(
            resolve_task_spec(&SpecConfig::Explicit(file), &strings(&["a"])).unwrap_err(),
            SpecError::UnknownLabel("b".into())
        );
    }

    #[test]
    fn token_validation() {
        let bad = TaskSpecification::new("t", "l", strings(&["a"]), strings(&["x\ny"]));
        assert!(matches!(bad, Err(SpecError::InvalidToken { .. })));
        let bad = TaskSpecification::new("t", "l", strings(&["a", "b"]), strings(&["Yes", "yes"]));
        assert!(matches!(bad, Err(SpecError::NonInjective { .. })));
        assert!(matches!(
            resolve_task_spec(&SpecConfig::Named("imdb".into()), &[]),
            Err(SpecError::UnknownName(_))
        ));
    }

    #[test]
    fn capitalization() {
        assert_eq!(capitalize_first("movie review"), "Movie review");
        assert_eq!(capitalize_first(""), "");
        assert_eq!(capitalize_first("éa"), "Éa");
    }
}
