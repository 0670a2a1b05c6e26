//! Multinomial naive Bayes over count features.

use crate::error::LearnerError;
use crate::vectorize::{FeatureMatrix, SparseVector};

#[derive(Debug, Clone, PartialEq)]
pub struct NaiveBayes {
    /// `ln P(c)`
    pub log_prior: [f64; 2],
    /// `ln P(t | c)` per class, indexed by feature.
    pub log_likelihood: [Vec<f64>; 2],
}

/// Fits class priors `n_c / n` and smoothed term likelihoods
/// `(count(t, c) + alpha) / (total(c) + alpha * V)`.
pub fn fit_naive_bayes(data: &FeatureMatrix, alpha: f64) -> Result<NaiveBayes, LearnerError> {
    let width = data.width;
    let mut class_docs = [0usize; 2];
    let mut counts = [vec![0.0; width], vec![0.0; width]];
    let mut totals = [0.0f64; 2];
    for (row, &label) in data.rows.iter().zip(&data.labels) {
        let c = label as usize;
        class_docs[c] += 1;
        for (i, v) in row.iter() {
            if v < 0.0 {
                return Err(LearnerError::NegativeFeature {
                    index: i as usize,
                    value: v,
                });
            }
            counts[c][i as usize] += v;
            totals[c] += v;
        }
    }
    let n = data.len() as f64;
    let log_prior = [(class_docs[0] as f64 / n).ln(), (class_docs[1] as f64 / n).ln()];
    let log_likelihood = [0, 1].map(|c| {
        let denom = totals[c] + alpha * width as f64;
        counts[c]
            .iter()
            .map(|&k| {
                if denom > 0.0 {
                    ((k + alpha) / denom).ln()
                } else {
                    f64::NEG_INFINITY
                }
            })
            .collect()
    });
    Ok(NaiveBayes {
        log_prior,
        log_likelihood,
    })
}

impl NaiveBayes {
    /// `ln P(c) + sum_t f_t ln P(t | c)` for both classes.
    pub fn joint_log_likelihood(&self, x: &SparseVector) -> [f64; 2] {
        [0, 1].map(|c| {
            self.log_prior[c]
                + x.iter()
                    .map(|(i, v)| v * self.log_likelihood[c][i as usize])
                    .sum::<f64>()
        })
    }

    /// `ln P(1|x) - ln P(0|x)`. Zero when both classes are impossible.
    pub fn log_odds(&self, x: &SparseVector) -> f64 {
        let [j0, j1] = self.joint_log_likelihood(x);
        let d = j1 - j0;
        if d.is_nan() {
            0.0
        } else {
            d
        }
    }

    /// Normalized posterior `[P(0|x), P(1|x)]`.
    pub fn posterior(&self, x: &SparseVector) -> [f64; 2] {
        let [j0, j1] = self.joint_log_likelihood(x);
        let m = j0.max(j1);
        if m == f64::NEG_INFINITY {
            return [0.5, 0.5];
        }
        let (e0, e1) = ((j0 - m).exp(), (j1 - m).exp());
        [e0 / (e0 + e1), e1 / (e0 + e1)]
    }
}
