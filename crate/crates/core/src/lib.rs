//! Toolkit for probing how text classifiers respond to destructively
//! transformed ("word salad") inputs, and for training them to notice.
//!
//! - [`corpus`]: tokenization, datasets, TSV/JSONL loading.
//! - [`xform`]: the nine transforms (lexical, saliency-guided, statistical).
//! - [`providers`]: predictions and saliency from an embedded, replayed or
//!   remote classifier.
//! - [`toyclf`]: a small bag-of-embeddings classifier with analytic gradients.
//! - [`metrics`]: agreement, confidence, ECE and report assembly.
//! - [`mitigate`]: augmentation, entropic training, thresholds, invalid class.

pub mod corpus;
pub mod error;
pub mod metrics;
pub mod mitigate;
pub mod par;
pub mod providers;
pub mod toyclf;
pub mod xform;

pub use error::{Error, ErrorClass, Result};
