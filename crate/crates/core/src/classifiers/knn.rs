//! k-nearest-neighbour vote under Euclidean distance.

use serde::{Deserialize, Serialize};

use super::TrainingRows;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KnnParams {
    pub k: usize,
}

impl Default for KnnParams {
    fn default() -> Self {
        Self { k: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    pub dim: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub w: Vec<f64>,
}

pub(super) fn fit(rows: &TrainingRows, p: &KnnParams) -> KnnModel {
    KnnModel {
        k: p.k.min(rows.len()),
        dim: rows.dim,
        x: rows.x.clone(),
        y: rows.y.clone(),
        w: rows.w.clone(),
    }
}

impl KnnModel {
    /// Weighted fraction of positives among the `k` nearest stored rows.
    /// Distance ties resolve to the earlier row in canonical order.
    pub fn score(&self, q: &[f64]) -> f64 {
        let n = self.y.len();
        let mut dist: Vec<(f64, usize)> = (0..n)
            .map(|i| {
                let row = &self.x[i * self.dim..(i + 1) * self.dim];
                let d2: f64 = row.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
                (d2, i)
            })
            .collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if self.k < n {
            dist.select_nth_unstable_by(self.k - 1, cmp);
        }
        let (mut pos, mut tot) = (0.0, 0.0);
        for &(_, i) in &dist[..self.k] {
            pos += self.w[i] * self.y[i];
            tot += self.w[i];
        }
        pos / tot
    }
}
