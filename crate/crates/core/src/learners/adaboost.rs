//! Discrete AdaBoost with decision stumps.

use super::tree::{grow_tree, Criterion, DecisionTree, MaxFeatures, Sample, ThresholdMode, TreeParams};
use crate::rng::SplitMix64;
use crate::vectorize::{FeatureMatrix, SparseVector};

/// Error floor used when a stump classifies every row correctly.
pub const PERFECT_STUMP_EPS: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct AdaBoost {
    /// (stump, stage weight alpha)
    pub stages: Vec<(DecisionTree, f64)>,
}

/// `alpha = 0.5 * ln((1 - e) / e)`
pub fn stage_weight(error: f64) -> f64 {
    0.5 * ((1.0 - error) / error).ln()
}

/// What happened in one boosting round; handed to the observer of
/// [`fit_adaboost_observed`].
#[derive(Debug)]
pub struct RoundReport<'a> {
    pub round: usize,
    pub error: f64,
    pub alpha: f64,
    /// Stump output per training row, in {-1, +1}.
    pub outputs: &'a [f64],
    /// Example weights after this round's update.
    pub weights: &'a [f64],
}

fn stump_params() -> TreeParams {
    TreeParams {
        criterion: Criterion::Gini,
        max_depth: 1,
        min_leaf: 1,
        max_features: MaxFeatures::All,
        thresholds: ThresholdMode::Exhaustive,
    }
}

pub fn fit_adaboost(data: &FeatureMatrix, n_rounds: usize, seed: u64) -> AdaBoost {
    fit_adaboost_observed(data, n_rounds, seed, |_| {})
}

/// Boosting loop. Stops early when a stump's weighted error reaches 0.5
/// (the stump is discarded) or 0 (kept with a capped alpha).
pub fn fit_adaboost_observed(
    data: &FeatureMatrix,
    n_rounds: usize,
    seed: u64,
    mut observe: impl FnMut(&RoundReport),
) -> AdaBoost {
    let n = data.len();
    let y: Vec<f64> = data.labels.iter().map(|&l| if l == 1 { 1.0 } else { -1.0 }).collect();
    let mut weights = vec![1.0 / n as f64; n];
    let mut outputs = vec![0.0; n];
    let mut stages = Vec::new();
    let mut rng = SplitMix64::new(seed);
    let params = stump_params();
    for round in 0..n_rounds {
        let samples = weights
            .iter()
            .enumerate()
            .map(|(i, &w)| Sample {
                row: i as u32,
                weight: w,
                count: 1,
            })
            .collect();
        let stump = grow_tree(&data.rows, &data.labels, data.width, samples, &params, &mut rng);
        let mut error = 0.0;
        for i in 0..n {
            outputs[i] = if stump.predict(&data.rows[i]) == 1 { 1.0 } else { -1.0 };
            if outputs[i] != y[i] {
                error += weights[i];
            }
        }
        if error >= 0.5 {
            break;
        }
        if error <= 0.0 {
            let alpha = stage_weight(PERFECT_STUMP_EPS);
            stages.push((stump, alpha));
            observe(&RoundReport {
                round,
                error,
                alpha,
                outputs: &outputs,
                weights: &weights,
            });
            break;
        }
        let alpha = stage_weight(error);
        let mut total = 0.0;
        for i in 0..n {
            weights[i] *= (-alpha * y[i] * outputs[i]).exp();
            total += weights[i];
        }
        for w in &mut weights {
            *w /= total;
        }
        stages.push((stump, alpha));
        observe(&RoundReport {
            round,
            error,
            alpha,
            outputs: &outputs,
            weights: &weights,
        });
    }
    AdaBoost { stages }
}

impl AdaBoost {
    /// `sum_m alpha_m h_m(x)` with `h_m` in {-1, +1}.
    pub fn decision(&self, x: &SparseVector) -> f64 {
        self.stages
            .iter()
            .map(|(stump, alpha)| if stump.predict(x) == 1 { *alpha } else { -*alpha })
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vectorize::FeatureKind;

    #[test]
    fn stage_weight_for_quarter_error() {
        assert!((stage_weight(0.25) - 0.5 * 3f64.ln()).abs() < 1e-15);
        assert!((stage_weight(0.25) - 0.5493).abs() < 1e-4);
    }

    #[test]
    fn separable_by_one_stump_converges_in_round_one() {
        let rows: Vec<SparseVector> = (0..20).map(|i| SparseVector::from_dense(&[(i % 2) as f64])).collect();
        let data = FeatureMatrix {
            labels: (0..20).map(|i| (i % 2) as u8).collect(),
            rows,
            width: 1,
            kind: FeatureKind::Tfidf,
        };
        let mut rounds = 0;
        let model = fit_adaboost_observed(&data, 50, 0, |r| {
            rounds += 1;
            assert_eq!(r.error, 0.0);
        });
        assert_eq!(rounds, 1);
        assert_eq!(model.stages.len(), 1);
        assert!((model.stages[0].1 - stage_weight(PERFECT_STUMP_EPS)).abs() < 1e-15);
        for (x, &y) in data.rows.iter().zip(&data.labels) {
            assert_eq!((model.decision(x) > 0.0) as u8, y);
        }
    }

    #[test]
    fn updated_weights_make_last_stump_a_coin_flip() {
        // 50 rows, labels not separable by any single stump
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..50usize {
            rows.push(SparseVector::from_dense(&[
                (i % 7) as f64,
                ((i * 3) % 5) as f64,
                (i % 2) as f64,
            ]));
            labels.push(((i * 7 + i / 3) % 3 == 0) as u8);
        }
        let data = FeatureMatrix {
            rows,
            labels,
            width: 3,
            kind: FeatureKind::Tfidf,
        };
        let y: Vec<f64> = data.labels.iter().map(|&l| if l == 1 { 1.0 } else { -1.0 }).collect();
        let mut rounds = 0;
        fit_adaboost_observed(&data, 20, 0, |r| {
            rounds += 1;
            let sum: f64 = r.weights.iter().sum();
            assert!((sum - 1.0).abs() < 1e-10);
            if r.error > 0.0 {
                let post: f64 = (0..y.len())
                    .filter(|&i| r.outputs[i] != y[i])
                    .map(|i| r.weights[i])
                    .sum();
                assert!((post - 0.5).abs() < 1e-10, "round {}: {post}", r.round);
            }
        });
        assert!(rounds > 3);
    }
}
