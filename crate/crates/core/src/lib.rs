//! Claim/bias scoring, threshold calibration, cohort selection and retweet
//! cascade reconstruction for tweet corpora, with a seeded synthetic corpus
//! generator for testing the whole chain against known ground truth.
//!
//! Data-parallel paths use rayon behind the default `parallel` feature;
//! [`Exec::Sequential`] (or building without the feature) gives the same
//! results on one thread.

pub mod calibration;
pub mod cascade;
pub mod cohort;
pub mod config;
pub mod corpusprep;
pub mod exec;
pub mod ingest;
pub mod pipeline;
pub mod plot;
pub mod report;
pub mod scoring;
pub mod synth;

pub use exec::{with_threads, Exec};
