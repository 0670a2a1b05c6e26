//! Fake-news detection by majority vote over nine classifiers on
//! bag-of-words features.

pub mod bundle;
pub mod config;
pub mod ensemble;
pub mod error;
pub mod eval;
pub mod ingest;
pub mod learners;
pub mod pipeline;
pub mod preprocess;
pub mod rng;
pub mod vectorize;
