//! Personalized binary affect classification for longitudinal,
//! multi-participant studies.
//!
//! The crate covers the whole pipeline: loading study manifests and per-frame
//! feature tables ([`dataset`]), sliding-window aggregation and
//! standardization ([`preprocess`]), a sample-weighted classifier zoo
//! ([`classifiers`]), supervised adaptation by loss reweighting and the CORAL
//! baseline ([`adaptation`]), the chronological session-based evaluation
//! protocol ([`protocol`]), metrics and rank statistics ([`analysis`]) and a
//! deterministic synthetic study generator ([`synthgen`]).

pub mod adaptation;
pub mod analysis;
pub mod classifiers;
pub mod dataset;
pub mod preprocess;
pub mod protocol;
pub mod seeding;
pub mod synthgen;
