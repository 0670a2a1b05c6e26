//! Newton boosting on the logistic loss with depth-limited regression trees.
//!
//! Trees grow level by level over a column store whose posting lists are
//! presorted by value, so one pass over the stored entries evaluates every
//! candidate threshold of every active node at that level. As in the
//! classification trees, rows missing from a posting list have value 0.

use super::linear::sigmoid;
use super::tree::midpoint;
use crate::rng::SplitMix64;
use crate::vectorize::{FeatureMatrix, SparseVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoostParams {
    pub n_rounds: usize,
    pub max_depth: usize,
    /// Shrinkage applied to every tree.
    pub eta: f64,
    /// L2 penalty on leaf values.
    pub lambda: f64,
    /// Fraction of columns sampled per round.
    pub colsample: f64,
    /// Minimum hessian sum in a child.
    pub min_child_weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RegNode {
    Leaf {
        value: f64,
    },
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTree {
    pub nodes: Vec<RegNode>,
}

impl RegressionTree {
    pub fn eval(&self, x: &SparseVector) -> f64 {
        let mut i = 0usize;
        loop {
            match &self.nodes[i] {
                RegNode::Leaf { value } => return *value,
                RegNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x.get(*feature) <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientBoost {
    pub base_score: f64,
    pub eta: f64,
    pub trees: Vec<RegressionTree>,
}

impl GradientBoost {
    /// Raw log-odds score `F(x)`.
    pub fn decision(&self, x: &SparseVector) -> f64 {
        self.base_score + self.eta * self.trees.iter().map(|t| t.eval(x)).sum::<f64>()
    }
}

/// Gradient and hessian of the logistic loss w.r.t. the raw score, `y` in {0, 1}.
pub fn logistic_grad_hess(score: f64, y: f64) -> (f64, f64) {
    let p = sigmoid(score);
    (p - y, p * (1.0 - p))
}

/// `-[y ln p + (1 - y) ln(1 - p)]` with `p = sigmoid(score)`.
pub fn logistic_loss(score: f64, y: f64) -> f64 {
    super::linear::softplus(score) - y * score
}

/// `-G / (H + lambda)`
pub fn leaf_value(g: f64, h: f64, lambda: f64) -> f64 {
    -g / (h + lambda)
}

/// `0.5 [G_L^2/(H_L+l) + G_R^2/(H_R+l) - G^2/(H+l)]`
pub fn split_gain(gl: f64, hl: f64, gr: f64, hr: f64, lambda: f64) -> f64 {
    let term = |g: f64, h: f64| g * g / (h + lambda);
    0.5 * (term(gl, hl) + term(gr, hr) - term(gl + gr, hl + hr))
}

/// Per-feature posting lists sorted by value.
struct ColumnStore {
    columns: Vec<Vec<(u32, f64)>>,
}

impl ColumnStore {
    fn new(data: &FeatureMatrix) -> Self {
        let mut columns: Vec<Vec<(u32, f64)>> = vec![Vec::new(); data.width];
        for (r, row) in data.rows.iter().enumerate() {
            for (f, v) in row.iter() {
                columns[f as usize].push((r as u32, v));
            }
        }
        for col in &mut columns {
            col.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        }
        ColumnStore { columns }
    }
}

#[derive(Clone, Copy, Default, Debug)]
struct GH {
    g: f64,
    h: f64,
    n: usize,
}

impl GH {
    fn add(&mut self, o: GH) {
        self.g += o.g;
        self.h += o.h;
        self.n += o.n;
    }

    fn minus(self, o: GH) -> GH {
        GH {
            g: self.g - o.g,
            h: self.h - o.h,
            n: self.n - o.n,
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Best {
    gain: f64,
    feature: u32,
    threshold: f64,
}

/// Round-by-round training record.
#[derive(Debug, Clone, PartialEq)]
pub struct BoostTrace {
    /// Mean training log-loss before any tree, then after each round.
    pub losses: Vec<f64>,
}

pub fn fit_gradient_boost(data: &FeatureMatrix, params: &BoostParams, seed: u64) -> (GradientBoost, BoostTrace) {
    let n = data.len();
    let y: Vec<f64> = data.labels.iter().map(|&l| l as f64).collect();
    let pos = y.iter().sum::<f64>();
    let base_score = (pos / (n as f64 - pos)).ln();
    let store = ColumnStore::new(data);
    let mut rng = SplitMix64::new(seed);
    let mut scores = vec![base_score; n];
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mean_loss = |scores: &[f64]| scores.iter().zip(&y).map(|(&s, &t)| logistic_loss(s, t)).sum::<f64>() / n as f64;
    let mut losses = vec![mean_loss(&scores)];
    let mut trees = Vec::with_capacity(params.n_rounds);

    let mut all_features: Vec<u32> = (0..data.width as u32).collect();
    let n_cols = ((data.width as f64 * params.colsample).round() as usize).clamp(1, data.width.max(1));
    for _ in 0..params.n_rounds {
        for i in 0..n {
            (grad[i], hess[i]) = logistic_grad_hess(scores[i], y[i]);
        }
        rng.partial_shuffle(&mut all_features, n_cols);
        let mut features = all_features[..n_cols].to_vec();
        features.sort_unstable();

        let tree = grow_regression_tree(data, &store, &features, &grad, &hess, params);
        for (i, row) in data.rows.iter().enumerate() {
            scores[i] += params.eta * tree.eval(row);
        }
        trees.push(tree);
        losses.push(mean_loss(&scores));
    }
    (
        GradientBoost {
            base_score,
            eta: params.eta,
            trees,
        },
        BoostTrace { losses },
    )
}

fn grow_regression_tree(
    data: &FeatureMatrix,
    store: &ColumnStore,
    features: &[u32],
    grad: &[f64],
    hess: &[f64],
    params: &BoostParams,
) -> RegressionTree {
    const NONE: u32 = u32::MAX;
    let n = data.len();
    let mut nodes = vec![RegNode::Leaf { value: 0.0 }];
    // slot of the active node each row sits in at the current level
    let mut slot_of_row = vec![0u32; n];
    let mut root = GH::default();
    for i in 0..n {
        root.add(GH {
            g: grad[i],
            h: hess[i],
            n: 1,
        });
    }
    // (node id, totals) of the nodes being split at this level
    let mut active: Vec<(u32, GH)> = vec![(0, root)];

    for _depth in 0..params.max_depth {
        if active.is_empty() {
            break;
        }
        let totals: Vec<GH> = active.iter().map(|a| a.1).collect();
        let mut best: Vec<Option<Best>> = vec![None; active.len()];
        let mut nz = vec![GH::default(); active.len()];
        let mut left = vec![GH::default(); active.len()];
        let mut prev: Vec<Option<f64>> = vec![None; active.len()];

        for &f in features {
            let column = &store.columns[f as usize];
            if column.is_empty() {
                continue;
            }
            nz.iter_mut().for_each(|s| *s = GH::default());
            for &(r, _) in column {
                let s = slot_of_row[r as usize];
                if s != NONE {
                    nz[s as usize].add(GH {
                        g: grad[r as usize],
                        h: hess[r as usize],
                        n: 1,
                    });
                }
            }
            left.iter_mut().for_each(|s| *s = GH::default());
            prev.iter_mut().for_each(|p| *p = None);

            let mut consider = |s: usize, v: f64, item: GH, left: &mut [GH], prev: &mut [Option<f64>]| {
                if let Some(p) = prev[s] {
                    if v > p {
                        let l = left[s];
                        let r = totals[s].minus(l);
                        if l.h >= params.min_child_weight && r.h >= params.min_child_weight {
                            let gain = split_gain(l.g, l.h, r.g, r.h, params.lambda);
                            if best[s].is_none_or(|b| gain > b.gain) {
                                best[s] = Some(Best {
                                    gain,
                                    feature: f,
                                    threshold: midpoint(p, v),
                                });
                            }
                        }
                    }
                }
                left[s].add(item);
                prev[s] = Some(v);
            };

            let zeros_at = column.partition_point(|e| e.1 < 0.0);
            let mut zeros_done = false;
            for (k, &(r, v)) in column.iter().enumerate() {
                if k == zeros_at && !zeros_done {
                    zeros_done = true;
                    for s in 0..totals.len() {
                        let z = totals[s].minus(nz[s]);
                        if z.n > 0 {
                            consider(s, 0.0, z, &mut left, &mut prev);
                        }
                    }
                }
                let s = slot_of_row[r as usize];
                if s != NONE {
                    let item = GH {
                        g: grad[r as usize],
                        h: hess[r as usize],
                        n: 1,
                    };
                    consider(s as usize, v, item, &mut left, &mut prev);
                }
            }
            if !zeros_done {
                for s in 0..totals.len() {
                    let z = totals[s].minus(nz[s]);
                    if z.n > 0 {
                        consider(s, 0.0, z, &mut left, &mut prev);
                    }
                }
            }
        }

        // Split the nodes that found a positive gain; the rest become leaves.
        let mut next_active = Vec::new();
        let mut child_slot: Vec<Option<(u32, u32, Best)>> = vec![None; active.len()];
        for (s, &(node, tot)) in active.iter().enumerate() {
            match best[s] {
                Some(b) if b.gain > 1e-12 => {
                    let l = nodes.len() as u32;
                    nodes.push(RegNode::Leaf { value: 0.0 });
                    nodes.push(RegNode::Leaf { value: 0.0 });
                    nodes[node as usize] = RegNode::Split {
                        feature: b.feature,
                        threshold: b.threshold,
                        left: l,
                        right: l + 1,
                    };
                    let ls = next_active.len() as u32;
                    next_active.push((l, GH::default()));
                    next_active.push((l + 1, GH::default()));
                    child_slot[s] = Some((ls, ls + 1, b));
                }
                _ => {
                    nodes[node as usize] = RegNode::Leaf {
                        value: leaf_value(tot.g, tot.h, params.lambda),
                    };
                }
            }
        }
        for r in 0..n {
            let s = slot_of_row[r];
            if s == NONE {
                continue;
            }
            slot_of_row[r] = match child_slot[s as usize] {
                None => NONE,
                Some((ls, rs, b)) => {
                    let c = if data.rows[r].get(b.feature) <= b.threshold {
                        ls
                    } else {
                        rs
                    };
                    next_active[c as usize].1.add(GH {
                        g: grad[r],
                        h: hess[r],
                        n: 1,
                    });
                    c
                }
            };
        }
        active = next_active;
    }
    for (node, tot) in active {
        nodes[node as usize] = RegNode::Leaf {
            value: leaf_value(tot.g, tot.h, params.lambda),
        };
    }
    RegressionTree { nodes }
}
