//! Evaluation metrics and statistics.

mod distribution;
mod kappa;
mod metrics;
mod wilcoxon;

use thiserror::Error;

pub use distribution::{class_distribution, ClassDistribution, ParticipantClassShare, SessionClassShare};
pub use kappa::fleiss_kappa;
pub use metrics::{auroc, f1, roc_points, trapezoid_area};
pub use wilcoxon::{
    wilcoxon_one_sided, PairedSample, WilcoxonMode, WilcoxonOutcome, ZeroMethod, EXACT_MAX_N,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("both classes must be present")]
    SingleClass,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("all paired differences are zero")]
    AllZeroDifferences,
    #[error("row {row} sums to {got}, expected {expected}")]
    RowSumMismatch { row: usize, expected: u64, got: u64 },
    #[error("expected agreement is 1 but observed agreement is not")]
    DegenerateAgreement,
}
