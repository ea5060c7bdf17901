//! Harness for measuring how well a prompt candidate steers a language
//! model's output toward each value of a value theory.
//!
//! The pipeline extracts the values present in every test dialogue, asks
//! the target model to continue each dialogue once per value under a
//! prompt candidate, extracts the values of the continuation, and scores
//! the before/after transitions per value. See [`campaign`] for the
//! orchestration and [`scoring`] for the arithmetic.

pub mod campaign;
pub mod config;
pub mod dataset;
pub mod detector;
pub mod domain;
pub mod generator;
pub mod pool;
pub mod report;
pub mod scoring;
mod transport;

pub use domain::{
    presence_from_verdict, validate_theory, Coefficients, DialogueRecord, Label, PromptCandidate, Turn, Value, ValueId,
    ValueTheory, Verdict,
};
pub use transport::RetryPolicy;
