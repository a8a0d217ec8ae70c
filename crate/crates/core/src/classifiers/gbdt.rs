//! Second-order gradient boosting of the weighted logistic loss with exact
//! greedy split enumeration over presorted feature columns.

use serde::{Deserialize, Serialize};

use super::{sigmoid, ClassifierError, TrainingRows, WeightedDataset};

/// Minimum split gain, matching the usual exact-greedy epsilon.
const MIN_SPLIT_GAIN: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbdtParams {
    pub n_rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub min_child_weight: f64,
}

impl Default for GbdtParams {
    fn default() -> Self {
        Self {
            n_rounds: 100,
            max_depth: 6,
            learning_rate: 0.3,
            l2: 1.0,
            min_child_weight: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TreeNode {
    /// Rows with `x[feature] < threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    /// Each tree is a node arena rooted at index 0.
    pub trees: Vec<Vec<TreeNode>>,
}

impl GbdtModel {
    pub fn margin(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| tree_value(t, x)).sum()
    }
}

fn tree_value(nodes: &[TreeNode], x: &[f64]) -> f64 {
    let mut at = 0;
    loop {
        match &nodes[at] {
            TreeNode::Leaf { value } => return *value,
            TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            } => at = if x[*feature] < *threshold { *left } else { *right },
        }
    }
}

#[inline]
fn score(g: f64, h: f64, l2: f64) -> f64 {
    g * g / (h + l2)
}

/// Split gain `G_L²/(H_L+λ) + G_R²/(H_R+λ) − G²/(H+λ)` of a root split
/// `x[feature] < threshold`, with gradients of the logistic loss at an initial
/// margin of zero. Zero-weight instances contribute nothing.
pub fn gbdt_root_gain(
    data: &WeightedDataset,
    feature: usize,
    threshold: f64,
    l2: f64,
) -> Result<f64, ClassifierError> {
    if feature >= data.dim() {
        return Err(ClassifierError::InvalidSplit(format!(
            "feature {feature} out of range for dimension {}",
            data.dim()
        )));
    }
    if !threshold.is_finite() {
        return Err(ClassifierError::InvalidSplit("threshold must be finite".into()));
    }
    if !(l2 >= 0.0) {
        return Err(ClassifierError::InvalidSplit("l2 must be >= 0".into()));
    }
    let p = 0.5;
    let (mut gl, mut hl, mut gr, mut hr) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..data.len() {
        let w = data.weights()[i];
        if w == 0.0 {
            continue;
        }
        let g = w * (p - f64::from(data.labels()[i]));
        let h = w * p * (1.0 - p);
        if data.row(i)[feature] < threshold {
            gl += g;
            hl += h;
        } else {
            gr += g;
            hr += h;
        }
    }
    let part = |g: f64, h: f64| if h + l2 > 0.0 { score(g, h, l2) } else { 0.0 };
    Ok(part(gl, hl) + part(gr, hr) - part(gl + gr, hl + hr))
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

/// Per-node accumulator used during the column scan.
#[derive(Debug, Clone, Copy)]
struct ScanState {
    g_left: f64,
    h_left: f64,
    last: f64,
    seen: bool,
}

pub(super) fn fit(rows: &TrainingRows, p: &GbdtParams) -> GbdtModel {
    let n = rows.len();
    let dim = rows.dim;
    let sorted: Vec<Vec<u32>> = (0..dim)
        .map(|f| {
            let mut idx: Vec<u32> = (0..n as u32).collect();
            idx.sort_by(|&a, &b| {
                rows.x[a as usize * dim + f]
                    .total_cmp(&rows.x[b as usize * dim + f])
                    .then(a.cmp(&b))
            });
            idx
        })
        .collect();

    let mut margin = vec![0.0; n];
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut trees = Vec::with_capacity(p.n_rounds);
    for _ in 0..p.n_rounds {
        for i in 0..n {
            let prob = sigmoid(margin[i]);
            grad[i] = rows.w[i] * (prob - rows.y[i]);
            hess[i] = rows.w[i] * prob * (1.0 - prob);
        }
        let (tree, leaf_of) = grow_tree(rows, &sorted, &grad, &hess, p);
        for i in 0..n {
            if let TreeNode::Leaf { value } = tree[leaf_of[i]] {
                margin[i] += value;
            }
        }
        trees.push(tree);
    }
    GbdtModel { trees }
}

/// Grows one tree level by level. Returns the node arena and the leaf index
/// of every training row.
fn grow_tree(
    rows: &TrainingRows,
    sorted: &[Vec<u32>],
    grad: &[f64],
    hess: &[f64],
    p: &GbdtParams,
) -> (Vec<TreeNode>, Vec<usize>) {
    let n = rows.len();
    let dim = rows.dim;
    let lambda = p.l2;

    let mut nodes: Vec<TreeNode> = vec![TreeNode::Leaf { value: 0.0 }];
    let mut node_of = vec![0usize; n];
    let (g0, h0) = (grad.iter().sum::<f64>(), hess.iter().sum::<f64>());
    // (node index, G, H) of nodes that may still split
    let mut frontier: Vec<(usize, f64, f64)> = vec![(0, g0, h0)];
    let mut finished: Vec<(usize, f64, f64)> = Vec::new();
    // maps node index -> slot in the current frontier
    let mut slot_of: Vec<usize> = vec![0];

    for _depth in 0..p.max_depth {
        if frontier.is_empty() {
            break;
        }
        slot_of.resize(nodes.len(), usize::MAX);
        for (s, (node, _, _)) in frontier.iter().enumerate() {
            slot_of[*node] = s;
        }
        let mut best: Vec<Option<Candidate>> = vec![None; frontier.len()];
        let mut state = vec![
            ScanState {
                g_left: 0.0,
                h_left: 0.0,
                last: 0.0,
                seen: false,
            };
            frontier.len()
        ];
        for (f, order) in sorted.iter().enumerate() {
            state.iter_mut().for_each(|s| {
                s.g_left = 0.0;
                s.h_left = 0.0;
                s.seen = false;
            });
            for &i in order {
                let i = i as usize;
                let node = node_of[i];
                let slot = match slot_of.get(node) {
                    Some(&s) if s != usize::MAX => s,
                    _ => continue,
                };
                let v = rows.x[i * dim + f];
                let st = &mut state[slot];
                if st.seen && v > st.last {
                    let (_, g, h) = frontier[slot];
                    let (gl, hl) = (st.g_left, st.h_left);
                    let (gr, hr) = (g - gl, h - hl);
                    if hl >= p.min_child_weight && hr >= p.min_child_weight {
                        let gain = score(gl, hl, lambda) + score(gr, hr, lambda)
                            - score(g, h, lambda);
                        if gain > MIN_SPLIT_GAIN
                            && best[slot].map_or(true, |b| gain > b.gain)
                        {
                            let mid = st.last + (v - st.last) / 2.0;
                            let threshold = if mid > st.last { mid } else { v };
                            best[slot] = Some(Candidate {
                                gain,
                                feature: f,
                                threshold,
                            });
                        }
                    }
                }
                st.g_left += grad[i];
                st.h_left += hess[i];
                st.last = v;
                st.seen = true;
            }
        }

        let mut next = Vec::new();
        let mut children: Vec<Option<(usize, usize, Candidate)>> = vec![None; frontier.len()];
        for (slot, &(node, g, h)) in frontier.iter().enumerate() {
            match best[slot] {
                Some(c) => {
                    let left = nodes.len();
                    let right = left + 1;
                    nodes.push(TreeNode::Leaf { value: 0.0 });
                    nodes.push(TreeNode::Leaf { value: 0.0 });
                    nodes[node] = TreeNode::Split {
                        feature: c.feature,
                        threshold: c.threshold,
                        left,
                        right,
                    };
                    children[slot] = Some((left, right, c));
                }
                None => finished.push((node, g, h)),
            }
        }
        let mut sums = vec![(0.0, 0.0); nodes.len()];
        for i in 0..n {
            let node = node_of[i];
            let slot = match slot_of.get(node) {
                Some(&s) if s != usize::MAX => s,
                _ => continue,
            };
            if let Some((left, right, c)) = children[slot] {
                let to = if rows.x[i * dim + c.feature] < c.threshold {
                    left
                } else {
                    right
                };
                node_of[i] = to;
                sums[to].0 += grad[i];
                sums[to].1 += hess[i];
            }
        }
        for (slot, &(node, _, _)) in frontier.iter().enumerate() {
            slot_of[node] = usize::MAX;
            if let Some((left, right, _)) = children[slot] {
                next.push((left, sums[left].0, sums[left].1));
                next.push((right, sums[right].0, sums[right].1));
            }
        }
        frontier = next;
    }
    finished.extend(frontier);
    for (node, g, h) in finished {
        let value = if h + lambda > 0.0 {
            -g / (h + lambda) * p.learning_rate
        } else {
            0.0
        };
        nodes[node] = TreeNode::Leaf { value };
    }
    (nodes, node_of)
}
