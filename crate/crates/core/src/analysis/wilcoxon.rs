//! One-sided Wilcoxon signed-rank test for paired samples.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::AnalysisError;

/// Largest effective sample size for which the exact null distribution is used.
pub const EXACT_MAX_N: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedSample {
    pub name_a: String,
    pub name_b: String,
    pub values_a: Vec<f64>,
    pub values_b: Vec<f64>,
}

impl PairedSample {
    pub fn new(
        name_a: impl Into<String>,
        name_b: impl Into<String>,
        values_a: Vec<f64>,
        values_b: Vec<f64>,
    ) -> Result<Self, AnalysisError> {
        if values_a.len() != values_b.len() {
            return Err(AnalysisError::LengthMismatch {
                left: values_a.len(),
                right: values_b.len(),
            });
        }
        if values_a.is_empty() {
            return Err(AnalysisError::InvalidInput("paired sample is empty".into()));
        }
        if values_a.iter().chain(&values_b).any(|v| !v.is_finite()) {
            return Err(AnalysisError::InvalidInput("non-finite paired value".into()));
        }
        Ok(Self {
            name_a: name_a.into(),
            name_b: name_b.into(),
            values_a,
            values_b,
        })
    }

    pub fn differences(&self) -> Vec<f64> {
        self.values_a
            .iter()
            .zip(&self.values_b)
            .map(|(a, b)| a - b)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WilcoxonMode {
    Exact,
    NormalApprox,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ZeroMethod {
    /// Discard zero differences before ranking.
    #[default]
    Wilcox,
    /// Rank zero differences with the rest, then drop their ranks.
    Pratt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonOutcome {
    pub n_pairs: usize,
    pub n_effective: usize,
    pub w_plus: f64,
    pub z: f64,
    pub p_one_sided: f64,
    pub effect_size_r: f64,
    pub mode: WilcoxonMode,
}

/// Midranks (1-based) of `values` sorted ascending; also returns whether any
/// ties occurred and the tie-correction term `Σ(t³ − t)`.
fn midranks(values: &[f64]) -> (Vec<f64>, bool, f64) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = false;
    let mut correction = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        if j > i {
            ties = true;
            correction += t * t * t - t;
        }
        let mid = (i + j + 2) as f64 / 2.0;
        for &k in &order[i..=j] {
            ranks[k] = mid;
        }
        i = j + 1;
    }
    (ranks, ties, correction)
}

/// Exact upper-tail probability `P(W+ ≥ w)` under the null for untied ranks
/// `1..=n`, by dynamic programming over attainable rank sums.
fn exact_upper_tail(n: usize, w: f64) -> f64 {
    let max = n * (n + 1) / 2;
    let mut counts = vec![0u64; max + 1];
    counts[0] = 1;
    for r in 1..=n {
        for s in (r..=max).rev() {
            counts[s] += counts[s - r];
        }
    }
    let threshold = w.ceil() as usize;
    let tail: u64 = counts.iter().skip(threshold).sum();
    tail as f64 / (1u64 << n) as f64
}

/// Tests `a > b`. Zero differences are discarded (or handled by Pratt's
/// method). The exact null is used when `n_effective ≤ 12` with no ties and
/// no zeros; otherwise the tie-corrected normal approximation without
/// continuity correction. `r = Z/√(2·n_pairs)` with `n_pairs` counted before
/// any zero removal.
pub fn wilcoxon_one_sided(
    sample: &PairedSample,
    zero_method: ZeroMethod,
) -> Result<WilcoxonOutcome, AnalysisError> {
    let diffs = sample.differences();
    let n_pairs = diffs.len();
    let nonzero: Vec<f64> = diffs.iter().copied().filter(|d| *d != 0.0).collect();
    if nonzero.is_empty() {
        return Err(AnalysisError::AllZeroDifferences);
    }
    let n_zero = n_pairs - nonzero.len();
    let ranked: &[f64] = match zero_method {
        ZeroMethod::Wilcox => &nonzero,
        ZeroMethod::Pratt => &diffs,
    };
    let abs: Vec<f64> = ranked.iter().map(|d| d.abs()).collect();
    let (ranks, _, tie_term) = midranks(&abs);
    let w_plus: f64 = ranked
        .iter()
        .zip(&ranks)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| r)
        .sum();

    let n_eff = nonzero.len();
    let n = ranked.len() as f64;
    let (mut mean, mut var) = (n * (n + 1.0) / 4.0, n * (n + 1.0) * (2.0 * n + 1.0) / 24.0);
    if zero_method == ZeroMethod::Pratt && n_zero > 0 {
        let z0 = n_zero as f64;
        mean -= z0 * (z0 + 1.0) / 4.0;
        var -= z0 * (z0 + 1.0) * (2.0 * z0 + 1.0) / 24.0;
    }
    var -= tie_term / 48.0;
    let z = if var > 0.0 { (w_plus - mean) / var.sqrt() } else { 0.0 };

    let untied = tie_term == 0.0 && (zero_method == ZeroMethod::Wilcox || n_zero == 0);
    let (p, mode) = if n_eff <= EXACT_MAX_N && untied {
        (exact_upper_tail(n_eff, w_plus), WilcoxonMode::Exact)
    } else {
        let normal = Normal::new(0.0, 1.0).expect("standard normal");
        (normal.sf(z), WilcoxonMode::NormalApprox)
    };
    Ok(WilcoxonOutcome {
        n_pairs,
        n_effective: n_eff,
        w_plus,
        z,
        p_one_sided: p.clamp(0.0, 1.0),
        effect_size_r: z / (2.0 * n_pairs as f64).sqrt(),
        mode,
    })
}
