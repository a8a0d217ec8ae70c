//! Fleiss' kappa for a fixed number of raters per item.

use super::AnalysisError;

/// Chance-corrected agreement `κ = (P̄ − P̄e)/(1 − P̄e)` from an
/// items × categories count matrix whose rows all sum to the rater count.
///
/// The statistic is formed from exact integer numerators and denominators,
/// so an agreement exactly at chance level yields exactly 0.
pub fn fleiss_kappa(ratings: &[Vec<u64>]) -> Result<f64, AnalysisError> {
    let first = ratings
        .first()
        .ok_or_else(|| AnalysisError::InvalidInput("no rated items".into()))?;
    let k = first.len();
    if k == 0 {
        return Err(AnalysisError::InvalidInput("no categories".into()));
    }
    let raters: u64 = first.iter().sum();
    if raters < 2 {
        return Err(AnalysisError::RowSumMismatch {
            row: 0,
            expected: 2,
            got: raters,
        });
    }
    let mut col = vec![0u128; k];
    // Σ_i (Σ_j n_ij² − n)
    let mut agree: u128 = 0;
    for (i, row) in ratings.iter().enumerate() {
        if row.len() != k {
            return Err(AnalysisError::InvalidInput(format!(
                "row {i} has {} categories, expected {k}",
                row.len()
            )));
        }
        let s: u64 = row.iter().sum();
        if s != raters {
            return Err(AnalysisError::RowSumMismatch {
                row: i,
                expected: raters,
                got: s,
            });
        }
        let sq: u128 = row.iter().map(|&c| u128::from(c) * u128::from(c)).sum();
        agree += sq - u128::from(raters);
        for (c, &v) in col.iter_mut().zip(row) {
            *c += u128::from(v);
        }
    }
    let n = u128::from(raters);
    let items = ratings.len() as u128;
    // P̄ = agree / b,  P̄e = c / d
    let b = items * n * (n - 1);
    let c: u128 = col.iter().map(|v| v * v).sum();
    let d = (items * n) * (items * n);
    if c == d {
        return if agree == b {
            Ok(1.0)
        } else {
            Err(AnalysisError::DegenerateAgreement)
        };
    }
    let num = agree as i128 * d as i128 - c as i128 * b as i128;
    let den = b as i128 * (d as i128 - c as i128);
    Ok(num as f64 / den as f64)
}
