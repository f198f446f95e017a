//! Multi-annotator toxicity classification with sociodemographic
//! group-specific layers, together with the evaluation protocol used to test
//! whether group membership helps predict individual annotator decisions:
//! stratified cross-validation, per-group macro-F1, paired bootstrap tests
//! and replicability counts across folds.

pub mod corpus;
pub mod error;
pub mod evalsplit;
pub mod experiment;
pub mod features;
pub mod kvconfig;
pub mod model;
pub mod seed;
pub mod stats;
pub mod synthgen;

pub use error::{Error, ErrorKind, Result};
