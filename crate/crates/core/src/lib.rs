//! Prompt-based text augmentation for low-resource classification.
//!
//! The pipeline samples anchor examples from a labeled dataset, renders them into a
//! list-style prompt described by a [`TaskSpecification`], asks a completion backend
//! to continue the list with a new item, and labels that item with the normalized
//! likelihood of each label token. A small hashed linear classifier and a seeded
//! trial harness measure what the synthetic data is worth.
//!
//! Module map:
//!
//! - [`corpus`]: datasets, text normalization, task specifications, class-balanced sub-sampling
//! - [`promptgen`]: anchor selection and prompt rendering/parsing
//! - [`lmclient`]: completion backends (HTTP and an offline mock) with retry and label scoring
//! - [`extract`]: completion parsing and soft labels
//! - [`augment`]: the generation loop and an EDA baseline
//! - [`classify`]: featurization and soft-label training
//! - [`bench`]: multi-trial experiments, ablations and report tables
//! - [`cli`]: the `mixprompt` command line

pub mod augment;
pub mod bench;
pub mod classify;
pub mod cli;
pub mod corpus;
pub mod extract;
pub mod lmclient;
pub mod promptgen;
mod seeds;

pub use corpus::{Dataset, LabeledExample, TaskSpecification};
pub use extract::AugmentationRecord;
pub use lmclient::{CompletionBackend, LmClient};
