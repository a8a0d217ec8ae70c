//! One-hidden-layer perceptron (tanh) trained on weighted cross-entropy with
//! minibatch Adam. The shuffle order and initialization come from the seed.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::TrainingRows;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpParams {
    pub hidden: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl Default for MlpParams {
    fn default() -> Self {
        Self {
            hidden: 64,
            epochs: 50,
            learning_rate: 1e-3,
            batch_size: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub dim: usize,
    pub hidden: usize,
    /// `hidden × dim`, row-major.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl MlpModel {
    fn hidden_activations(&self, x: &[f64], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            let row = &self.w1[j * self.dim..(j + 1) * self.dim];
            let z = self.b1[j] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            *o = z.tanh();
        }
    }

    pub fn margin(&self, x: &[f64]) -> f64 {
        let mut h = vec![0.0; self.hidden];
        self.hidden_activations(x, &mut h);
        self.b2 + h.iter().zip(&self.w2).map(|(a, b)| a * b).sum::<f64>()
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [&mut f64], grads: &[f64], lr: f64) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        self.t += 1;
        let c1 = 1.0 - B1.powi(self.t);
        let c2 = 1.0 - B2.powi(self.t);
        for (k, p) in params.iter_mut().enumerate() {
            let g = grads[k];
            self.m[k] = B1 * self.m[k] + (1.0 - B1) * g;
            self.v[k] = B2 * self.v[k] + (1.0 - B2) * g * g;
            let mh = self.m[k] / c1;
            let vh = self.v[k] / c2;
            **p -= lr * mh / (vh.sqrt() + EPS);
        }
    }
}

pub(super) fn fit(rows: &TrainingRows, p: &MlpParams, seed: u64) -> MlpModel {
    let d = rows.dim;
    let h = p.hidden;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lim1 = (6.0 / (d + h) as f64).sqrt();
    let lim2 = (6.0 / (h + 1) as f64).sqrt();
    let mut model = MlpModel {
        dim: d,
        hidden: h,
        w1: (0..h * d).map(|_| rng.random_range(-lim1..lim1)).collect(),
        b1: vec![0.0; h],
        w2: (0..h).map(|_| rng.random_range(-lim2..lim2)).collect(),
        b2: 0.0,
    };
    let n_params = h * d + h + h + 1;
    let mut adam = Adam::new(n_params);
    let mut order: Vec<usize> = (0..rows.len()).collect();
    let mut grads = vec![0.0; n_params];
    let mut act = vec![0.0; h];
    for _ in 0..p.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(p.batch_size) {
            grads.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let x = rows.row(i);
                model.hidden_activations(x, &mut act);
                let z = model.b2 + act.iter().zip(&model.w2).map(|(a, b)| a * b).sum::<f64>();
                let dz = rows.w[i] * (super::sigmoid(z) - rows.y[i]) * scale;
                let (g_w1, rest) = grads.split_at_mut(h * d);
                let (g_b1, rest) = rest.split_at_mut(h);
                let (g_w2, g_b2) = rest.split_at_mut(h);
                g_b2[0] += dz;
                for j in 0..h {
                    g_w2[j] += dz * act[j];
                    let dh = dz * model.w2[j] * (1.0 - act[j] * act[j]);
                    g_b1[j] += dh;
                    for (g, v) in g_w1[j * d..(j + 1) * d].iter_mut().zip(x) {
                        *g += dh * v;
                    }
                }
            }
            let mut params: Vec<&mut f64> = model
                .w1
                .iter_mut()
                .chain(model.b1.iter_mut())
                .chain(model.w2.iter_mut())
                .chain(std::iter::once(&mut model.b2))
                .collect();
            adam.step(&mut params, &grads, p.learning_rate);
        }
    }
    model
}
