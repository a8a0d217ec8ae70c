//! L2-regularized weighted logistic regression fitted by damped Newton steps.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::TrainingRows;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogRegParams {
    /// Penalty `l2/2 · ||coef||²`; the intercept is not penalized.
    pub l2: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for LogRegParams {
    fn default() -> Self {
        Self {
            l2: 1.0,
            max_iter: 200,
            tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegModel {
    pub coef: Vec<f64>,
    pub intercept: f64,
    pub iterations: usize,
}

impl LogRegModel {
    pub fn margin(&self, x: &[f64]) -> f64 {
        self.intercept + self.coef.iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
    }
}

/// `log(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn objective(rows: &TrainingRows, beta: &DVector<f64>, l2: f64) -> f64 {
    let d = rows.dim;
    let mut loss = 0.0;
    for i in 0..rows.len() {
        let z = margin_of(rows.row(i), beta);
        loss += rows.w[i] * (softplus(z) - rows.y[i] * z);
    }
    let penalty: f64 = beta.iter().take(d).map(|b| b * b).sum();
    loss + 0.5 * l2 * penalty
}

fn margin_of(x: &[f64], beta: &DVector<f64>) -> f64 {
    let d = x.len();
    beta[d] + x.iter().zip(beta.iter()).map(|(v, b)| v * b).sum::<f64>()
}

pub(super) fn fit(rows: &TrainingRows, p: &LogRegParams) -> LogRegModel {
    let d = rows.dim;
    let m = d + 1;
    let mut beta = DVector::<f64>::zeros(m);
    let mut current = objective(rows, &beta, p.l2);
    let mut iterations = 0;
    for it in 0..p.max_iter {
        iterations = it + 1;
        let mut grad = DVector::<f64>::zeros(m);
        let mut hess = DMatrix::<f64>::zeros(m, m);
        for i in 0..rows.len() {
            let x = rows.row(i);
            let prob = super::sigmoid(margin_of(x, &beta));
            let r = rows.w[i] * (prob - rows.y[i]);
            let s = rows.w[i] * prob * (1.0 - prob);
            for a in 0..m {
                let xa = if a < d { x[a] } else { 1.0 };
                grad[a] += r * xa;
                for b in 0..=a {
                    let xb = if b < d { x[b] } else { 1.0 };
                    hess[(a, b)] += s * xa * xb;
                }
            }
        }
        for a in 0..m {
            for b in 0..a {
                hess[(b, a)] = hess[(a, b)];
            }
        }
        for a in 0..d {
            grad[a] += p.l2 * beta[a];
            hess[(a, a)] += p.l2;
        }
        // a tiny ridge keeps the system solvable for separable data at l2 = 0
        for a in 0..m {
            hess[(a, a)] += 1e-12;
        }
        let step = match hess.clone().cholesky() {
            Some(ch) => ch.solve(&grad),
            None => match hess.lu().solve(&grad) {
                Some(s) => s,
                None => break,
            },
        };
        let mut t = 1.0;
        let mut accepted = false;
        // near the optimum the decrease drops below rounding of the objective;
        // full Newton steps are taken there
        let local = step.amax() < 1e-6;
        for _ in 0..50 {
            let cand = &beta - &step * t;
            let val = objective(rows, &cand, p.l2);
            if val <= current || local {
                beta = cand;
                current = val;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        let size = step.amax() * t;
        if !accepted || size < p.tol {
            break;
        }
    }
    LogRegModel {
        coef: beta.iter().take(d).copied().collect(),
        intercept: beta[d],
        iterations,
    }
}
