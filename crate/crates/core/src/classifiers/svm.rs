//! Linear SVM: weighted hinge loss with L2 penalty, minimized by full-batch
//! projected subgradient descent (Pegasos schedule) with iterate averaging.
//! The bias is treated as a constant feature.

use serde::{Deserialize, Serialize};

use super::TrainingRows;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinearSvmParams {
    pub c: f64,
    pub iterations: usize,
}

impl Default for LinearSvmParams {
    fn default() -> Self {
        Self {
            c: 1.0,
            iterations: 300,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSvmModel {
    pub coef: Vec<f64>,
    pub intercept: f64,
}

impl LinearSvmModel {
    pub fn margin(&self, x: &[f64]) -> f64 {
        self.intercept + self.coef.iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
    }
}

pub(super) fn fit(rows: &TrainingRows, p: &LinearSvmParams) -> LinearSvmModel {
    let d = rows.dim;
    let n = rows.len();
    let total_w: f64 = rows.w.iter().sum();
    // 1/2 ||w||^2 + C sum w_i hinge_i  ==  lambda/2 ||w||^2 + mean hinge
    let lambda = 1.0 / (p.c * total_w);
    let radius = 1.0 / lambda.sqrt();

    let mut w = vec![0.0; d + 1];
    let mut avg = vec![0.0; d + 1];
    let mut n_avg = 0.0;
    let mut sub = vec![0.0; d + 1];
    for t in 1..=p.iterations {
        let eta = 1.0 / (lambda * t as f64);
        sub.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            let x = rows.row(i);
            let y = 2.0 * rows.y[i] - 1.0;
            let m = w[d] + x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
            if y * m < 1.0 {
                let c = rows.w[i] * y / total_w;
                for (s, v) in sub.iter_mut().zip(x) {
                    *s += c * v;
                }
                sub[d] += c;
            }
        }
        let shrink = 1.0 - eta * lambda;
        for j in 0..=d {
            w[j] = shrink * w[j] + eta * sub[j];
        }
        let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > radius {
            let s = radius / norm;
            w.iter_mut().for_each(|v| *v *= s);
        }
        if 2 * t > p.iterations {
            for (a, v) in avg.iter_mut().zip(&w) {
                *a += v;
            }
            n_avg += 1.0;
        }
    }
    avg.iter_mut().for_each(|v| *v /= n_avg);
    LinearSvmModel {
        coef: avg[..d].to_vec(),
        intercept: avg[d],
    }
}
