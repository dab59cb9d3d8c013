use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::CorpusError;
use crate::seeds::StableHasher;

/// One text with its label index into the owning dataset's label list.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabeledExample {
    pub text: String,
    pub label: usize,
}

impl LabeledExample {
    pub fn new(text: impl Into<String>, label: usize) -> Self {
        Self {
            text: text.into(),
            label,
        }
    }
}

/// An ordered collection of labeled texts over a fixed label set.
///
/// Optional named splits (`train`, `validation`, `test`, ...) partition the examples
/// by index. Values are immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    labels: Vec<String>,
    examples: Vec<LabeledExample>,
    splits: BTreeMap<String, Vec<usize>>,
}

impl Dataset {
    pub fn new(labels: Vec<String>, examples: Vec<LabeledExample>) -> Result<Self, CorpusError> {
        Self::with_splits(labels, examples, BTreeMap::new())
    }

    pub fn with_splits(
        labels: Vec<String>,
        examples: Vec<LabeledExample>,
        splits: BTreeMap<String, Vec<usize>>,
    ) -> Result<Self, CorpusError> {
        if labels.is_empty() {
            return Err(CorpusError::Invalid("empty label set".into()));
        }
        for (i, l) in labels.iter().enumerate() {
            if l.trim().is_empty() {
                return Err(CorpusError::Invalid(format!("label {i} is empty")));
            }
            if labels[..i].contains(l) {
                return Err(CorpusError::Invalid(format!("duplicate label {l:?}")));
            }
        }
        for (i, ex) in examples.iter().enumerate() {
            if ex.text.trim().is_empty() {
                return Err(CorpusError::Invalid(format!("example {i} has empty text")));
            }
            if ex.label >= labels.len() {
                return Err(CorpusError::Invalid(format!(
                    "example {i} has label index {} but only {} labels exist",
                    ex.label,
                    labels.len()
                )));
            }
        }
        let mut seen = vec![false; examples.len()];
        for (name, idx) in &splits {
            for &i in idx {
                if i >= examples.len() {
                    return Err(CorpusError::Invalid(format!(
                        "split {name:?} references example {i}"
                    )));
                }
                if std::mem::replace(&mut seen[i], true) {
                    return Err(CorpusError::Invalid(format!(
                        "example {i} belongs to more than one split"
                    )));
                }
            }
        }
        Ok(Self {
            labels,
            examples,
            splits,
        })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn examples(&self) -> &[LabeledExample] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn label_index(&self, name: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == name)
    }

    pub fn label_name(&self, index: usize) -> &str {
        &self.labels[index]
    }

    pub fn split_names(&self) -> impl Iterator<Item = &str> {
        self.splits.keys().map(String::as_str)
    }

    /// Split name -> example indices.
    pub fn split_indices(&self) -> &BTreeMap<String, Vec<usize>> {
        &self.splits
    }

    /// Extracts a named split as a standalone dataset with the same label set.
    pub fn split(&self, name: &str) -> Result<Dataset, CorpusError> {
        let idx = self
            .splits
            .get(name)
            .ok_or_else(|| CorpusError::Invalid(format!("dataset has no {name:?} split")))?;
        let examples = idx.iter().map(|&i| self.examples[i].clone()).collect();
        Dataset::new(self.labels.clone(), examples)
    }

    /// Example counts per label index.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.labels.len()];
        for ex in &self.examples {
            counts[ex.label] += 1;
        }
        counts
    }

    /// Stable content hash over labels and examples (splits excluded).
    pub fn fingerprint(&self) -> u64 {
        let mut h = StableHasher::new(0);
        for l in &self.labels {
            h.write_str(l);
        }
        for ex in &self.examples {
            h.write_str(&ex.text);
            h.write_u64(ex.label as u64);
        }
        h.finish()
    }

    fn split_of(&self) -> Vec<Option<&str>> {
        let mut out = vec![None; self.examples.len()];
        for (name, idx) in &self.splits {
            for &i in idx {
                out[i] = Some(name.as_str());
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetFormat {
    Jsonl,
    Tsv,
}

impl DatasetFormat {
    /// Guesses from the file extension, defaulting to jsonl.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("tsv") | Some("tab") => DatasetFormat::Tsv,
            _ => DatasetFormat::Jsonl,
        }
    }
}

impl std::str::FromStr for DatasetFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "jsonl" => Ok(DatasetFormat::Jsonl),
            "tsv" => Ok(DatasetFormat::Tsv),
            other => Err(format!(
                "unknown dataset format {other:?} (expected jsonl or tsv)"
            )),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub format: DatasetFormat,
    /// TSV only: skip the first row.
    pub header: bool,
    /// Fixed label list. Records with any other label are rejected.
    pub labels: Option<Vec<String>>,
}

impl LoadOptions {
    pub fn new(format: DatasetFormat) -> Self {
        Self {
            format,
            header: false,
            labels: None,
        }
    }
}

#[derive(Deserialize)]
struct JsonRecord {
    text: Option<String>,
    label: Option<String>,
    #[serde(default)]
    split: Option<String>,
}

#[derive(Serialize)]
struct JsonRecordOut<'a> {
    text: &'a str,
    label: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    split: Option<&'a str>,
}

pub fn load_dataset(path: &Path, options: &LoadOptions) -> Result<Dataset, CorpusError> {
    let content = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_dataset(&content, options)
}

/// Parses dataset text. Labels are collected in first-appearance order unless
/// `options.labels` fixes them.
pub fn parse_dataset(content: &str, options: &LoadOptions) -> Result<Dataset, CorpusError> {
    let mut labels: Vec<String> = options.labels.clone().unwrap_or_default();
    let fixed = options.labels.is_some();
    let mut examples = Vec::new();
    let mut splits: BTreeMap<String, Vec<usize>> = BTreeMap::new();

    for (i, raw) in content.lines().enumerate() {
        let line = i + 1;
        if options.format == DatasetFormat::Tsv && options.header && i == 0 {
            continue;
        }
        if raw.trim().is_empty() {
            continue;
        }
        let (text, label, split) = match options.format {
            DatasetFormat::Jsonl => parse_json_line(raw, line)?,
            DatasetFormat::Tsv => parse_tsv_line(raw, line)?,
        };
        let text = text.trim().to_string();
        if text.is_empty() {
            return Err(CorpusError::Malformed {
                line,
                reason: "empty text".into(),
            });
        }
        let label = match labels.iter().position(|l| *l == label) {
            Some(idx) => idx,
            None if fixed => return Err(CorpusError::UnknownLabel { line, label }),
            None => {
                if label.trim().is_empty() {
                    return Err(CorpusError::Malformed {
                        line,
                        reason: "empty label".into(),
                    });
                }
                labels.push(label);
                labels.len() - 1
            }
        };
        if let Some(split) = split {
            splits.entry(split).or_default().push(examples.len());
        }
        examples.push(LabeledExample { text, label });
    }

    if examples.is_empty() {
        return Err(CorpusError::NoRecords);
    }
    Dataset::with_splits(labels, examples, splits)
}

fn parse_json_line(
    raw: &str,
    line: usize,
) -> Result<(String, String, Option<String>), CorpusError> {
    let rec: JsonRecord = serde_json::from_str(raw).map_err(|e| CorpusError::Malformed {
        line,
        reason: e.to_string(),
    })?;
    let text = rec.text.ok_or_else(|| CorpusError::Malformed {
        line,
        reason: "missing field \"text\"".into(),
    })?;
    let label = rec.label.ok_or_else(|| CorpusError::Malformed {
        line,
        reason: "missing field \"label\"".into(),
    })?;
    Ok((text, label, rec.split))
}

fn parse_tsv_line(raw: &str, line: usize) -> Result<(String, String, Option<String>), CorpusError> {
    let cols: Vec<&str> = raw.split('\t').collect();
    match cols.as_slice() {
        [text, label] => Ok((text.to_string(), label.trim().to_string(), None)),
        [text, label, split] => Ok((
            text.to_string(),
            label.trim().to_string(),
            Some(split.trim().to_string()).filter(|s| !s.is_empty()),
        )),
        _ => Err(CorpusError::Malformed {
            line,
            reason: format!(
                "expected 2 or 3 tab-separated columns, found {}",
                cols.len()
            ),
        }),
    }
}

/// Renders a dataset in the given format. Split membership is written as a
/// `split` field (jsonl) or third column (tsv).
pub fn write_dataset(
    dataset: &Dataset,
    format: DatasetFormat,
    header: bool,
) -> Result<String, CorpusError> {
    let split_of = dataset.split_of();
    let mut out = String::new();
    match format {
        DatasetFormat::Jsonl => {
            for (ex, split) in dataset.examples.iter().zip(split_of) {
                let rec = JsonRecordOut {
                    text: &ex.text,
                    label: dataset.label_name(ex.label),
                    split,
                };
                out.push_str(&serde_json::to_string(&rec).expect("record serializes"));
                out.push('\n');
            }
        }
        DatasetFormat::Tsv => {
            let with_split = !dataset.splits.is_empty();
            if header {
                out.push_str(if with_split {
                    "text\tlabel\tsplit\n"
                } else {
                    "text\tlabel\n"
                });
            }
            for (i, (ex, split)) in dataset.examples.iter().zip(split_of).enumerate() {
                if ex.text.contains(['\t', '\n', '\r']) {
                    return Err(CorpusError::Invalid(format!(
                        "example {i} contains a tab or line break and cannot be written as tsv"
                    )));
                }
                let _ = write!(out, "{}\t{}", ex.text, dataset.label_name(ex.label));
                if with_split {
                    let _ = write!(out, "\t{}", split.unwrap_or(""));
                }
                out.push('\n');
            }
        }
    }
    Ok(out)
}

pub fn save_dataset(
    dataset: &Dataset,
    path: &Path,
    format: DatasetFormat,
    header: bool,
) -> Result<(), CorpusError> {
    let text = write_dataset(dataset, format, header)?;
    std::fs::write(path, text).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn jsonl() -> LoadOptions {
        LoadOptions::new(DatasetFormat::Jsonl)
    }

    #[test]
    fn loads_jsonl_in_first_appearance_order() {
        let ds = parse_dataset(
            "{\"text\":\"good\",\"label\":\"positive\"}\n{\"text\":\"bad\",\"label\":\"negative\"}\n",
            &jsonl(),
        )
        .unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.labels(), ["positive", "negative"]);
        assert_eq!(ds.examples()[1], LabeledExample::new("bad", 1));
    }

    #[test]
    fn empty_file_has_no_records() {
        let err = parse_dataset("", &jsonl()).unwrap_err();
        assert_eq!(err.to_string(), "no records");
        assert!(matches!(
            parse_dataset("\n  \n", &jsonl()),
            Err(CorpusError::NoRecords)
        ));
    }

    #[test]
    fn tsv_single_column_names_the_row() {
        let opts = LoadOptions::new(DatasetFormat::Tsv);
        let err = parse_dataset("fine\tpos\nbroken row\n", &opts).unwrap_err();
        match err {
            CorpusError::Malformed { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_field_and_empty_text_are_rejected() {
        let err = parse_dataset("{\"text\":\"x\"}", &jsonl()).unwrap_err();
        assert!(err.to_string().contains("line 1"));
        assert!(err.to_string().contains("label"));
        let err = parse_dataset(
            "{\"text\":\"a\",\"label\":\"p\"}\n{\"text\":\"  \",\"label\":\"p\"}",
            &jsonl(),
        )
        .unwrap_err();
        assert!(matches!(err, CorpusError::Malformed { line: 2, .. }));
    }

    #[test]
    fn fixed_label_list_rejects_unknown_labels() {
        let mut opts = jsonl();
        opts.labels = Some(vec!["neg".into(), "pos".into()]);
        let ds = parse_dataset("{\"text\":\"a\",\"label\":\"pos\"}", &opts).unwrap();
        assert_eq!(ds.labels(), ["neg", "pos"]);
        assert_eq!(ds.examples()[0].label, 1);
        let err = parse_dataset("{\"text\":\"a\",\"label\":\"meh\"}", &opts).unwrap_err();
        assert!(matches!(err, CorpusError::UnknownLabel { line: 1, .. }));
    }

    #[test]
    fn tsv_header_is_skipped_when_requested() {
        let mut opts = LoadOptions::new(DatasetFormat::Tsv);
        opts.header = true;
        let ds = parse_dataset("text\tlabel\nhello\ta\n", &opts).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.labels(), ["a"]);
    }

    #[test]
    fn splits_are_extracted() {
        let content = "{\"text\":\"a\",\"label\":\"x\",\"split\":\"train\"}\n\
                       {\"text\":\"b\",\"label\":\"y\",\"split\":\"test\"}\n\
                       {\"text\":\"c\",\"label\":\"y\",\"split\":\"train\"}\n";
        let ds = parse_dataset(content, &jsonl()).unwrap();
        let train = ds.split("train").unwrap();
        assert_eq!(train.labels(), ds.labels());
        assert_eq!(
            train
                .examples()
                .iter()
                .map(|e| e.text.as_str())
                .collect::<Vec<_>>(),
            ["a", "c"]
        );
        assert!(ds.split("validation").is_err());
        let again = parse_dataset(
            &write_dataset(&ds, DatasetFormat::Jsonl, false).unwrap(),
            &jsonl(),
        )
        .unwrap();
        assert_eq!(again, ds);
    }

    #[test]
    fn invalid_construction() {
        assert!(Dataset::new(vec!["a".into(), "a".into()], vec![]).is_err());
        assert!(Dataset::new(vec!["a".into()], vec![LabeledExample::new("x", 1)]).is_err());
        assert!(Dataset::new(vec!["a".into()], vec![LabeledExample::new(" ", 0)]).is_err());
    }
}
