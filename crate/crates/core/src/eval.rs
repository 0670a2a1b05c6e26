//! Confusion counts, accuracy / precision / recall / F1, ROC curves and
//! the comparison reports. Class 1 (fake) is the positive class.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::ensemble::{Ensemble, FeatureViews};
use crate::error::{EnsembleError, EvalError};
use crate::ingest::Label;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    /// The same predictions with class 0 treated as positive.
    pub fn swapped(&self) -> Self {
        ConfusionMatrix {
            tp: self.tn,
            tn: self.tp,
            fp: self.fn_,
            fn_: self.fp,
        }
    }
}

pub fn confusion(y_true: &[Label], y_pred: &[Label]) -> Result<ConfusionMatrix, EvalError> {
    if y_true.len() != y_pred.len() {
        return Err(EvalError::LengthMismatch(y_true.len(), y_pred.len()));
    }
    if y_true.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut cm = ConfusionMatrix::default();
    for (&t, &p) in y_true.iter().zip(y_pred) {
        match (t == 1, p == 1) {
            (true, true) => cm.tp += 1,
            (false, false) => cm.tn += 1,
            (false, true) => cm.fp += 1,
            (true, false) => cm.fn_ += 1,
        }
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Averaged {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    /// Index 0 is the real class, index 1 the fake class.
    pub per_class: [ClassMetrics; 2],
    pub macro_avg: Averaged,
    pub weighted_avg: Averaged,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Harmonic mean, 0 when both inputs are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

fn positive_class(cm: &ConfusionMatrix) -> ClassMetrics {
    let precision = ratio(cm.tp, cm.tp + cm.fp);
    let recall = ratio(cm.tp, cm.tp + cm.fn_);
    ClassMetrics {
        precision,
        recall,
        f1: f1_score(precision, recall),
        support: cm.tp + cm.fn_,
    }
}

pub fn metrics(cm: &ConfusionMatrix) -> Result<MetricsReport, EvalError> {
    let total = cm.total();
    if total == 0 {
        return Err(EvalError::Empty);
    }
    let per_class = [positive_class(&cm.swapped()), positive_class(cm)];
    let avg = |w: [f64; 2]| {
        let pick = |f: fn(&ClassMetrics) -> f64| w[0] * f(&per_class[0]) + w[1] * f(&per_class[1]);
        Averaged {
            precision: pick(|c| c.precision),
            recall: pick(|c| c.recall),
            f1: pick(|c| c.f1),
        }
    };
    let support = [per_class[0].support as f64, per_class[1].support as f64];
    Ok(MetricsReport {
        accuracy: ratio(cm.tp + cm.tn, total),
        per_class,
        macro_avg: avg([0.5, 0.5]),
        weighted_avg: avg([support[0] / total as f64, support[1] / total as f64]),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// `(fpr, tpr)` from `(0, 0)` to `(1, 1)`.
    pub points: Vec<(f64, f64)>,
    /// Score cut for each point: `score >= threshold` counts as positive.
    /// The first entry is `+inf`.
    pub thresholds: Vec<f64>,
    pub auc: f64,
}

/// Sweeps the distinct scores from high to low; tied scores enter as one
/// block, so ties contribute a diagonal segment. AUC by trapezoids.
pub fn roc_curve(y_true: &[Label], scores: &[f64]) -> Result<RocCurve, EvalError> {
    if y_true.len() != scores.len() {
        return Err(EvalError::LengthMismatch(y_true.len(), scores.len()));
    }
    if let Some(&s) = scores.iter().find(|s| s.is_nan()) {
        return Err(EvalError::NonFiniteScore(s));
    }
    let pos = y_true.iter().filter(|&&y| y == 1).count();
    let neg = y_true.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(EvalError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![(0.0, 0.0)];
    let mut thresholds = vec![f64::INFINITY];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if y_true[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let point = (fp as f64 / neg as f64, tp as f64 / pos as f64);
        let (x0, y0) = *points.last().unwrap();
        auc += (point.0 - x0) * (point.1 + y0) / 2.0;
        points.push(point);
        thresholds.push(s);
    }
    Ok(RocCurve {
        points,
        thresholds,
        auc,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEvaluation {
    pub name: String,
    pub confusion: ConfusionMatrix,
    pub metrics: MetricsReport,
    /// Absent when the evaluated set holds a single class.
    pub roc: Option<RocCurve>,
    /// Ensemble only: predictions decided by the tie rule.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ties_broken: Option<usize>,
}

pub fn evaluate_predictions(
    name: &str,
    y_true: &[Label],
    y_pred: &[Label],
    scores: &[f64],
) -> Result<ModelEvaluation, EvalError> {
    let confusion = confusion(y_true, y_pred)?;
    let roc = match roc_curve(y_true, scores) {
        Ok(r) => Some(r),
        Err(EvalError::SingleClass) => None,
        Err(e) => return Err(e),
    };
    Ok(ModelEvaluation {
        name: name.to_string(),
        confusion,
        metrics: metrics(&confusion)?,
        roc,
        ties_broken: None,
    })
}

/// Name of the majority-vote row in reports.
pub const ENSEMBLE_ROW: &str = "ensemble";

#[derive(Debug, thiserror::Error)]
pub enum EvaluateError {
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// One row per member, in member order, then the ensemble row scored by
/// vote fraction.
pub fn evaluate_all(
    ensemble: &Ensemble,
    test: &[FeatureViews],
    labels: &[Label],
) -> Result<Vec<ModelEvaluation>, EvaluateError> {
    if test.len() != labels.len() {
        return Err(EvalError::LengthMismatch(labels.len(), test.len()).into());
    }
    let n_members = ensemble.len();
    let mut preds = vec![Vec::with_capacity(test.len()); n_members + 1];
    let mut scores = vec![Vec::with_capacity(test.len()); n_members + 1];
    let mut ties = 0usize;
    for x in test {
        let p = ensemble.predict(x)?;
        for j in 0..n_members {
            preds[j].push(p.votes[j]);
            scores[j].push(p.scores[j]);
        }
        preds[n_members].push(p.label);
        scores[n_members].push(p.vote_fraction);
        ties += p.tie_broken as usize;
    }
    let mut rows = Vec::with_capacity(n_members + 1);
    for (j, m) in ensemble.members().iter().enumerate() {
        rows.push(evaluate_predictions(&m.name, labels, &preds[j], &scores[j])?);
    }
    let mut ens = evaluate_predictions(ENSEMBLE_ROW, labels, &preds[n_members], &scores[n_members])?;
    ens.ties_broken = Some(ties);
    rows.push(ens);
    Ok(rows)
}

fn round4(v: f64) -> f64 {
    (v * 1e4).round() / 1e4
}

fn rounded(e: &ModelEvaluation) -> ModelEvaluation {
    let avg = |a: Averaged| Averaged {
        precision: round4(a.precision),
        recall: round4(a.recall),
        f1: round4(a.f1),
    };
    let class = |c: ClassMetrics| ClassMetrics {
        precision: round4(c.precision),
        recall: round4(c.recall),
        f1: round4(c.f1),
        support: c.support,
    };
    let m = e.metrics;
    ModelEvaluation {
        metrics: MetricsReport {
            accuracy: round4(m.accuracy),
            per_class: m.per_class.map(class),
            macro_avg: avg(m.macro_avg),
            weighted_avg: avg(m.weighted_avg),
        },
        roc: e.roc.as_ref().map(|r| RocCurve {
            points: r.points.iter().map(|&(x, y)| (round4(x), round4(y))).collect(),
            thresholds: r.thresholds.clone(),
            auc: round4(r.auc),
        }),
        ..e.clone()
    }
}

#[derive(Debug, Serialize)]
struct JsonReport<'a> {
    format: &'static str,
    evaluated_rows: u64,
    models: Vec<ModelEvaluation>,
    #[serde(flatten)]
    extra: &'a serde_json::Map<String, serde_json::Value>,
}

/// Machine-readable report; ratios rounded to 4 decimals. Infinite ROC
/// thresholds serialize as `null`.
pub fn json_report(rows: &[ModelEvaluation], extra: &serde_json::Map<String, serde_json::Value>) -> String {
    let report = JsonReport {
        format: "newsvote-report/1",
        evaluated_rows: rows.first().map_or(0, |r| r.confusion.total()),
        models: rows.iter().map(rounded).collect(),
        extra,
    };
    serde_json::to_string_pretty(&report).expect("report serializes")
}

/// Plain-text table in percent with two decimals, macro-averaged
/// precision / recall / F1.
pub fn text_table(rows: &[ModelEvaluation]) -> String {
    let width = rows
        .iter()
        .map(|r| r.name.len())
        .max()
        .unwrap_or(0)
        .max("Classifier".len());
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<width$}  {:>8}  {:>9}  {:>8}  {:>8}  {:>6}",
        "Classifier", "Accuracy", "Precision", "Recall", "F1", "AUC"
    );
    for r in rows {
        let m = &r.metrics;
        let auc = r.roc.as_ref().map_or("-".to_string(), |c| format!("{:.4}", c.auc));
        let _ = writeln!(
            out,
            "{:<width$}  {:>8.2}  {:>9.2}  {:>8.2}  {:>8.2}  {:>6}",
            r.name,
            100.0 * m.accuracy,
            100.0 * m.macro_avg.precision,
            100.0 * m.macro_avg.recall,
            100.0 * m.macro_avg.f1,
            auc
        );
    }
    out
}

/// ROC points as two-column CSV with a header line.
pub fn roc_csv(curve: &RocCurve) -> String {
    let mut out = String::from("fpr,tpr\n");
    for (x, y) in &curve.points {
        let _ = writeln!(out, "{x},{y}");
    }
    out
}
