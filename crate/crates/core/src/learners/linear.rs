//! Linear classifiers trained by plain per-example SGD.
//!
//! Minimizes `(1/n) sum loss(y (w.x + b)) + (lambda/2) |w|^2` with step
//! `eta_t = eta0 / (1 + eta0 * lambda * t)`. The L2 shrink is applied through
//! a global scale factor so each step costs O(nnz) of the example.

use crate::rng::SplitMix64;
use crate::vectorize::{FeatureMatrix, SparseVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinearLoss {
    /// `ln(1 + e^-m)`
    Logistic,
    /// `max(0, 1 - m)`
    Hinge,
}

impl LinearLoss {
    pub fn value(self, margin: f64) -> f64 {
        match self {
            LinearLoss::Logistic => softplus(-margin),
            LinearLoss::Hinge => (1.0 - margin).max(0.0),
        }
    }

    /// d loss / d margin (a subgradient for hinge at the kink).
    pub fn derivative(self, margin: f64) -> f64 {
        match self {
            LinearLoss::Logistic => -sigmoid(-margin),
            LinearLoss::Hinge => {
                if margin < 1.0 {
                    -1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LinearLoss::Logistic => "logistic",
            LinearLoss::Hinge => "hinge",
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdParams {
    pub loss: LinearLoss,
    pub lambda: f64,
    pub epochs: usize,
    pub eta0: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub loss: LinearLoss,
}

impl LinearModel {
    /// `w.x + b`
    pub fn decision(&self, x: &SparseVector) -> f64 {
        x.dot(&self.weights) + self.bias
    }

    /// `sigma(w.x + b)`; meaningful for the logistic loss.
    pub fn probability(&self, x: &SparseVector) -> f64 {
        sigmoid(self.decision(x))
    }

    /// Regularized mean training loss.
    pub fn objective(&self, data: &FeatureMatrix, lambda: f64) -> f64 {
        let n = data.len() as f64;
        let data_loss: f64 = data
            .rows
            .iter()
            .zip(&data.labels)
            .map(|(x, &label)| self.loss.value(signed(label) * self.decision(x)))
            .sum();
        data_loss / n + 0.5 * lambda * self.weights.iter().map(|w| w * w).sum::<f64>()
    }
}

fn signed(label: u8) -> f64 {
    if label == 1 {
        1.0
    } else {
        -1.0
    }
}

/// Gradient of the single-example objective `loss(y(w.x+b)) + (lambda/2)|w|^2`
/// with respect to `(w, b)`.
pub fn example_gradient(
    loss: LinearLoss,
    weights: &[f64],
    bias: f64,
    x: &SparseVector,
    y: f64,
    lambda: f64,
) -> (Vec<f64>, f64) {
    let margin = y * (x.dot(weights) + bias);
    let d = loss.derivative(margin) * y;
    let mut grad: Vec<f64> = weights.iter().map(|w| lambda * w).collect();
    for (i, v) in x.iter() {
        grad[i as usize] += d * v;
    }
    (grad, d)
}

/// Plain per-example SGD with `eta_t = eta0 / (1 + eta0 * lambda * t)`.
/// The returned model is the average of the iterates visited during the
/// final epoch; the last iterate alone carries a bias that random-walks by
/// `eta_t` on every margin violation.
pub fn fit_linear_sgd(data: &FeatureMatrix, params: &SgdParams, seed: u64) -> LinearModel {
    let n = data.len();
    let width = data.width;
    let mut rng = SplitMix64::new(seed);
    let mut order: Vec<usize> = (0..n).collect();
    // true weights are `scale * v`
    let mut v = vec![0.0; width];
    let mut scale = 1.0f64;
    let mut bias = 0.0;
    let mut t = 0u64;
    // Averaging over the last epoch, lazily: coordinate j contributes
    // v_j * (sum of scales) over every stretch where v_j is constant.
    let mut avg = Averager::new(width);
    for epoch in 0..params.epochs {
        let averaging = epoch + 1 == params.epochs;
        rng.shuffle(&mut order);
        for &i in &order {
            let eta = params.eta0 / (1.0 + params.eta0 * params.lambda * t as f64);
            let x = &data.rows[i];
            let y = signed(data.labels[i]);
            let margin = y * (scale * x.dot(&v) + bias);
            let d = params.loss.derivative(margin);
            scale *= 1.0 - eta * params.lambda;
            if d != 0.0 {
                let step = -eta * d * y;
                for (j, xv) in x.iter() {
                    if averaging {
                        avg.flush(j as usize, v[j as usize]);
                    }
                    v[j as usize] += step * xv / scale;
                }
                bias += step;
            }
            if averaging {
                avg.scale_sum += scale;
                avg.bias_sum += bias;
            }
            if scale < 1e-9 {
                if averaging {
                    avg.flush_all(&v);
                }
                for w in &mut v {
                    *w *= scale;
                }
                scale = 1.0;
            }
            t += 1;
        }
    }
    if n == 0 {
        return LinearModel {
            weights: v,
            bias,
            loss: params.loss,
        };
    }
    avg.flush_all(&v);
    LinearModel {
        weights: avg.acc.into_iter().map(|a| a / n as f64).collect(),
        bias: avg.bias_sum / n as f64,
        loss: params.loss,
    }
}

struct Averager {
    acc: Vec<f64>,
    /// Value of `scale_sum` when each coordinate was last flushed.
    mark: Vec<f64>,
    scale_sum: f64,
    bias_sum: f64,
}

impl Averager {
    fn new(width: usize) -> Self {
        Averager {
            acc: vec![0.0; width],
            mark: vec![0.0; width],
            scale_sum: 0.0,
            bias_sum: 0.0,
        }
    }

    fn flush(&mut self, j: usize, vj: f64) {
        self.acc[j] += vj * (self.scale_sum - self.mark[j]);
        self.mark[j] = self.scale_sum;
    }

    fn flush_all(&mut self, v: &[f64]) {
        for (j, &vj) in v.iter().enumerate() {
            self.flush(j, vj);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vectorize::FeatureKind;
    use proptest::prelude::*;

    fn one_d() -> FeatureMatrix {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..100 {
            let label = (i % 2) as u8;
            rows.push(SparseVector::from_dense(&[if label == 1 { 1.0 } else { -1.0 }]));
            labels.push(label);
        }
        FeatureMatrix {
            rows,
            labels,
            width: 1,
            kind: FeatureKind::Tfidf,
        }
    }

    #[test]
    fn logistic_on_symmetric_data() {
        let data = one_d();
        let params = SgdParams {
            loss: LinearLoss::Logistic,
            lambda: 1e-4,
            epochs: 20,
            eta0: 0.1,
        };
        let model = fit_linear_sgd(&data, &params, 3);
        assert!(model.weights[0] > 0.0);
        for (x, &y) in data.rows.iter().zip(&data.labels) {
            assert_eq!((model.decision(x) > 0.0) as u8, y);
        }
    }

    #[test]
    fn hinge_on_symmetric_data() {
        let data = one_d();
        let params = SgdParams {
            loss: LinearLoss::Hinge,
            lambda: 1e-4,
            epochs: 20,
            eta0: 0.1,
        };
        let model = fit_linear_sgd(&data, &params, 3);
        for (x, &y) in data.rows.iter().zip(&data.labels) {
            assert!(signed(y) * model.decision(x) >= 0.0);
            assert_eq!((model.decision(x) > 0.0) as u8, y);
        }
    }

    #[test]
    fn zero_model_probability_is_half() {
        let model = LinearModel {
            weights: vec![0.0; 3],
            bias: 0.0,
            loss: LinearLoss::Logistic,
        };
        assert_eq!(model.probability(&SparseVector::from_dense(&[1.0, 2.0, 3.0])), 0.5);
    }

    #[test]
    fn stable_softplus_and_sigmoid() {
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(softplus(-1000.0), 0.0);
        assert!((softplus(1000.0) - 1000.0).abs() < 1e-12);
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert_eq!(sigmoid(1000.0), 1.0);
    }

    fn objective(loss: LinearLoss, w: &[f64], b: f64, x: &SparseVector, y: f64, lambda: f64) -> f64 {
        loss.value(y * (x.dot(w) + b)) + 0.5 * lambda * w.iter().map(|v| v * v).sum::<f64>()
    }

    fn assert_close(analytic: f64, numeric: f64) -> Result<(), TestCaseError> {
        let scale = analytic.abs().max(numeric.abs()).max(1e-2);
        prop_assert!((analytic - numeric).abs() / scale < 1e-6, "{analytic} vs {numeric}");
        Ok(())
    }

    #[test]
    fn logistic_gradient_at_origin_matches_finite_difference() {
        let x = SparseVector::from_dense(&[0.5, 0.0, -1.5]);
        let w = vec![0.0; 3];
        let (g, gb) = example_gradient(LinearLoss::Logistic, &w, 0.0, &x, 1.0, 0.0);
        let h = 1e-6;
        for j in 0..3 {
            let mut wp = w.clone();
            let mut wm = w.clone();
            wp[j] += h;
            wm[j] -= h;
            let fd = (objective(LinearLoss::Logistic, &wp, 0.0, &x, 1.0, 0.0)
                - objective(LinearLoss::Logistic, &wm, 0.0, &x, 1.0, 0.0))
                / (2.0 * h);
            assert!((g[j] - fd).abs() <= 1e-6 * fd.abs().max(1e-8), "{} vs {fd}", g[j]);
        }
        let fd_b = (objective(LinearLoss::Logistic, &w, h, &x, 1.0, 0.0)
            - objective(LinearLoss::Logistic, &w, -h, &x, 1.0, 0.0))
            / (2.0 * h);
        assert!((gb - fd_b).abs() <= 1e-6 * fd_b.abs());
    }

    /// Dense SGD without the scale trick, averaging the stored iterates of
    /// the final epoch.
    fn dense_reference(data: &FeatureMatrix, p: &SgdParams, seed: u64) -> (Vec<f64>, f64) {
        let mut rng = SplitMix64::new(seed);
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut w = vec![0.0; data.width];
        let mut b = 0.0;
        let mut t = 0u64;
        let mut last_epoch = Vec::new();
        for epoch in 0..p.epochs {
            rng.shuffle(&mut order);
            for &i in &order {
                let eta = p.eta0 / (1.0 + p.eta0 * p.lambda * t as f64);
                let x = data.rows[i].to_dense(data.width);
                let y = signed(data.labels[i]);
                let margin = y * (x.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>() + b);
                let d = p.loss.derivative(margin);
                for (wj, xj) in w.iter_mut().zip(&x) {
                    *wj = *wj * (1.0 - eta * p.lambda) - eta * d * y * xj;
                }
                b -= eta * d * y;
                if epoch + 1 == p.epochs {
                    last_epoch.push((w.clone(), b));
                }
                t += 1;
            }
        }
        let k = last_epoch.len() as f64;
        let mut mean = vec![0.0; data.width];
        for (wi, _) in &last_epoch {
            mean.iter_mut().zip(wi).for_each(|(m, v)| *m += v / k);
        }
        (mean, last_epoch.iter().map(|(_, b)| b / k).sum())
    }

    #[test]
    fn averaged_iterate_matches_dense_reference() {
        let mut rng = SplitMix64::new(21);
        let rows: Vec<SparseVector> = (0..40)
            .map(|_| SparseVector::from_dense(&[0; 6].map(|_| if rng.below(3) == 0 { rng.next_f64() } else { 0.0 })))
            .collect();
        let labels = (0..40).map(|i| (i % 3 == 0) as u8).collect();
        let data = FeatureMatrix {
            rows,
            labels,
            width: 6,
            kind: FeatureKind::Tfidf,
        };
        for (loss, lambda) in [(LinearLoss::Hinge, 0.3), (LinearLoss::Logistic, 1e-3)] {
            let p = SgdParams {
                loss,
                lambda,
                epochs: 4,
                eta0: 0.5,
            };
            let model = fit_linear_sgd(&data, &p, 8);
            let (w, b) = dense_reference(&data, &p, 8);
            for (a, r) in model.weights.iter().zip(&w) {
                assert!((a - r).abs() <= 1e-9 * r.abs().max(1e-3), "{a} vs {r}");
            }
            assert!((model.bias - b).abs() < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn gradients_match_finite_differences(
            dense in prop::collection::vec(prop_oneof![Just(0.0), -2.0f64..2.0], 5),
            w in prop::collection::vec(-1.0f64..1.0, 5),
            b in -1.0f64..1.0,
            positive in any::<bool>(),
            hinge in any::<bool>(),
            lambda in 0.0f64..0.1,
        ) {
            let loss = if hinge { LinearLoss::Hinge } else { LinearLoss::Logistic };
            let x = SparseVector::from_dense(&dense);
            let y = if positive { 1.0 } else { -1.0 };
            let margin = y * (x.dot(&w) + b);
            // hinge is not differentiable at margin 1
            prop_assume!(!hinge || (margin - 1.0).abs() > 1e-3);
            let (g, gb) = example_gradient(loss, &w, b, &x, y, lambda);
            let h = 1e-6;
            for j in 0..5 {
                let mut wp = w.clone();
                let mut wm = w.clone();
                wp[j] += h;
                wm[j] -= h;
                let fd = (objective(loss, &wp, b, &x, y, lambda) - objective(loss, &wm, b, &x, y, lambda)) / (2.0 * h);
                assert_close(g[j], fd)?;
            }
            let fd_b = (objective(loss, &w, b + h, &x, y, lambda) - objective(loss, &w, b - h, &x, y, lambda)) / (2.0 * h);
            assert_close(gb, fd_b)?;
        }
    }
}
