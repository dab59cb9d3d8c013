//! Labeled text datasets and the task metadata that describes them.

mod dataset;
mod normalize;
mod spec;
mod subsample;

pub use dataset::{
    load_dataset, parse_dataset, save_dataset, write_dataset, Dataset, DatasetFormat,
    LabeledExample, LoadOptions,
};
pub use normalize::normalize_text;
pub use spec::{
    capitalize_first, resolve_task_spec, BuiltinSpec, SpecConfig, SpecError, TaskSpecFile,
    TaskSpecification, BUILTIN_SPECS,
};
pub use subsample::{class_balanced_subsample, Amount};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("no records")]
    NoRecords,
    #[error("line {line}: unknown label {label:?}")]
    UnknownLabel { line: usize, label: String },
    #[error("invalid dataset: {0}")]
    Invalid(String),
    #[error("sub-sampling: {0}")]
    Subsample(String),
}
