//! Usability assessment from Likert-scale survey data.
//!
//! The pipeline: ingest or synthesize a survey, encode responses into a
//! feature matrix, score usability features with a genetic algorithm,
//! tune and train an SVM, select dominant features with a GA-wrapped SVM,
//! evaluate against baseline classifiers, and emit a ranked usability report.

pub mod baselines;
pub mod error;
pub mod evaluation;
pub mod ga;
pub mod pipeline;
pub mod report;
pub mod rng;
pub mod scoring;
pub mod selection;
pub mod survey;
pub mod svm;

pub use error::{Error, ErrorClass, Result};
pub use rng::RngSpec;
