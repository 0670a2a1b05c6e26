//! Random forests and extremely randomized trees, combined by majority vote.

use rayon::prelude::*;

use super::tree::{grow_tree, DecisionTree, MaxFeatures, Sample, ThresholdMode, TreeParams};
use crate::ingest::Label;
use crate::rng::SplitMix64;
use crate::vectorize::{FeatureMatrix, SparseVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForestParams {
    pub n_trees: usize,
    pub tree: TreeParams,
    pub bootstrap: bool,
}

impl ForestParams {
    /// Random forest: bootstrap samples, exhaustive thresholds.
    pub fn random_forest(tree: TreeParams, n_trees: usize) -> Self {
        ForestParams {
            n_trees,
            tree: TreeParams {
                thresholds: ThresholdMode::Exhaustive,
                ..tree
            },
            bootstrap: true,
        }
    }

    /// Extra trees: full sample, one random threshold per examined feature.
    pub fn extra_trees(tree: TreeParams, n_trees: usize) -> Self {
        ForestParams {
            n_trees,
            tree: TreeParams {
                thresholds: ThresholdMode::Random,
                ..tree
            },
            bootstrap: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    pub trees: Vec<DecisionTree>,
}

/// Draws `n` rows with replacement; returns one sample per distinct row
/// with its multiplicity.
fn bootstrap(n: usize, rng: &mut SplitMix64) -> Vec<Sample> {
    let mut counts = vec![0u32; n];
    for _ in 0..n {
        counts[rng.below(n)] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .filter(|&(_, c)| c > 0)
        .map(|(row, c)| Sample {
            row: row as u32,
            weight: c as f64,
            count: c,
        })
        .collect()
}

/// Fits `n_trees` trees; tree `t` draws from its own stream derived from `(seed, t)`.
pub fn fit_forest(data: &FeatureMatrix, params: &ForestParams, seed: u64) -> Forest {
    let n = data.len();
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = SplitMix64::derive(seed, t as u64);
            let samples = if params.bootstrap {
                bootstrap(n, &mut rng)
            } else {
                (0..n).map(Sample::unit).collect()
            };
            grow_tree(&data.rows, &data.labels, data.width, samples, &params.tree, &mut rng)
        })
        .collect();
    Forest { trees }
}

impl Forest {
    pub fn votes(&self, x: &SparseVector) -> Vec<Label> {
        self.trees.iter().map(|t| t.predict(x)).collect()
    }

    /// Share of trees voting class 1.
    pub fn vote_fraction(&self, x: &SparseVector) -> f64 {
        let ones = self.trees.iter().filter(|t| t.predict(x) == 1).count();
        ones as f64 / self.trees.len() as f64
    }
}

/// Default per-node feature budget for forests.
pub const FOREST_MAX_FEATURES: MaxFeatures = MaxFeatures::Sqrt;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::tree::{Criterion, TreeNode};
    use crate::vectorize::FeatureKind;

    fn stump(feature: u32, left_class: Label) -> DecisionTree {
        let leaf = |c: Label| TreeNode::Leaf {
            counts: if c == 1 { [0.0, 1.0] } else { [1.0, 0.0] },
            n_samples: 1,
        };
        DecisionTree::from_nodes(vec![
            TreeNode::Split {
                feature,
                threshold: 0.5,
                left: 1,
                right: 2,
            },
            leaf(left_class),
            leaf(1 - left_class),
        ])
    }

    #[test]
    fn vote_counting() {
        // x = (1, 0): stumps on feature 0 with left=0 vote 1, stumps on feature 1 with left=1 vote 1
        let forest = Forest {
            trees: vec![stump(0, 0), stump(0, 0), stump(1, 1), stump(0, 1), stump(1, 0)],
        };
        let x = SparseVector::from_dense(&[1.0, 0.0]);
        assert_eq!(forest.votes(&x), vec![1, 1, 1, 0, 0]);
        assert!((forest.vote_fraction(&x) - 0.6).abs() < 1e-15);

        let four = Forest {
            trees: vec![stump(0, 0), stump(0, 0), stump(0, 1), stump(0, 1)],
        };
        assert_eq!(four.vote_fraction(&x), 0.5);
    }

    fn noisy_separable() -> FeatureMatrix {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..60usize {
            let label = (i % 2) as Label;
            let mut dense = vec![0.0; 12];
            dense[label as usize] = 1.0 + (i % 3) as f64;
            dense[2 + i % 10] += 0.5;
            rows.push(SparseVector::from_dense(&dense));
            labels.push(label);
        }
        FeatureMatrix {
            rows,
            labels,
            width: 12,
            kind: FeatureKind::Tfidf,
        }
    }

    fn tree_params() -> TreeParams {
        TreeParams {
            criterion: Criterion::Gini,
            max_depth: 40,
            min_leaf: 1,
            max_features: MaxFeatures::Sqrt,
            thresholds: ThresholdMode::Exhaustive,
        }
    }

    #[test]
    fn single_tree_without_bootstrap_is_that_tree() {
        let data = noisy_separable();
        let params = ForestParams {
            n_trees: 1,
            tree: tree_params(),
            bootstrap: false,
        };
        let forest = fit_forest(&data, &params, 11);
        let mut rng = SplitMix64::derive(11, 0);
        let tree = grow_tree(
            &data.rows,
            &data.labels,
            data.width,
            (0..data.len()).map(Sample::unit).collect(),
            &params.tree,
            &mut rng,
        );
        for x in &data.rows {
            assert_eq!(forest.vote_fraction(x), tree.predict(x) as f64);
        }
    }

    #[test]
    fn both_modes_fit_separable_data() {
        let data = noisy_separable();
        for params in [
            ForestParams::random_forest(tree_params(), 25),
            ForestParams::extra_trees(tree_params(), 25),
        ] {
            let forest = fit_forest(&data, &params, 5);
            for (x, &y) in data.rows.iter().zip(&data.labels) {
                assert_eq!((forest.vote_fraction(x) > 0.5) as Label, y);
            }
        }
    }

    #[test]
    fn bootstrap_multiplicities_sum_to_n() {
        let mut rng = SplitMix64::new(3);
        let samples = bootstrap(100, &mut rng);
        assert_eq!(samples.iter().map(|s| s.count).sum::<u32>(), 100);
        assert!(samples.len() < 100);
    }

    #[test]
    fn deterministic_given_seed() {
        let data = noisy_separable();
        let params = ForestParams::extra_trees(tree_params(), 8);
        assert_eq!(fit_forest(&data, &params, 9), fit_forest(&data, &params, 9));
        assert_ne!(fit_forest(&data, &params, 9), fit_forest(&data, &params, 10));
    }
}
