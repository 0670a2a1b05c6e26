//! The nine base classifiers behind one fit / predict / score contract.

pub mod adaboost;
pub mod boost;
pub mod forest;
pub mod linear;
pub mod naive_bayes;
pub mod tree;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::LearnerError;
use crate::ingest::Label;
use crate::rng::SplitMix64;
use crate::vectorize::{FeatureKind, FeatureMatrix, SparseVector};

use adaboost::{fit_adaboost, AdaBoost};
use boost::{fit_gradient_boost, BoostParams, GradientBoost};
use forest::{fit_forest, Forest, ForestParams, FOREST_MAX_FEATURES};
use linear::{fit_linear_sgd, LinearLoss, LinearModel, SgdParams};
use naive_bayes::{fit_naive_bayes, NaiveBayes};
use tree::{grow_tree, Criterion, DecisionTree, MaxFeatures, Sample, ThresholdMode, TreeParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    DecisionTree,
    LogisticRegression,
    GradientBoost,
    RandomForest,
    ExtraTrees,
    Adaboost,
    LinearSvm,
    SgdLinear,
    NaiveBayes,
}

impl Family {
    pub const ALL: [Family; 9] = [
        Family::DecisionTree,
        Family::LogisticRegression,
        Family::GradientBoost,
        Family::RandomForest,
        Family::ExtraTrees,
        Family::Adaboost,
        Family::LinearSvm,
        Family::SgdLinear,
        Family::NaiveBayes,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::DecisionTree => "decision_tree",
            Family::LogisticRegression => "logistic_regression",
            Family::GradientBoost => "gradient_boost",
            Family::RandomForest => "random_forest",
            Family::ExtraTrees => "extra_trees",
            Family::Adaboost => "adaboost",
            Family::LinearSvm => "linear_svm",
            Family::SgdLinear => "sgd_linear",
            Family::NaiveBayes => "naive_bayes",
        }
    }

    /// Naive Bayes reads raw counts; everything else reads TF-IDF.
    pub fn default_features(self) -> FeatureKind {
        match self {
            Family::NaiveBayes => FeatureKind::Count,
            _ => FeatureKind::Tfidf,
        }
    }

    /// `predict(x) = score(x) > threshold`.
    pub fn threshold(self) -> f64 {
        match self {
            Family::DecisionTree | Family::RandomForest | Family::ExtraTrees => 0.5,
            _ => 0.0,
        }
    }

    fn keys(self) -> &'static [&'static str] {
        match self {
            Family::DecisionTree => &["criterion", "max_depth", "min_leaf", "max_features", "thresholds"],
            Family::LogisticRegression | Family::LinearSvm | Family::SgdLinear => &["loss", "lambda", "epochs", "eta0"],
            Family::RandomForest | Family::ExtraTrees => {
                &["n_trees", "criterion", "max_depth", "min_leaf", "max_features"]
            }
            Family::Adaboost => &["n_rounds"],
            Family::GradientBoost => &[
                "n_rounds",
                "max_depth",
                "eta",
                "lambda",
                "colsample",
                "min_child_weight",
            ],
            Family::NaiveBayes => &["alpha"],
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Family::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| format!("unknown learner family `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Bool(bool),
    Num(f64),
    Text(String),
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Bool(b) => write!(f, "{b}"),
            ParamValue::Num(v) => write!(f, "{v}"),
            ParamValue::Text(s) => write!(f, "{s:?}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnerSpec {
    pub family: Family,
    /// Overrides of the family defaults.
    pub params: BTreeMap<String, ParamValue>,
    pub seed: u64,
}

impl LearnerSpec {
    pub fn new(family: Family, seed: u64) -> Self {
        LearnerSpec {
            family,
            params: BTreeMap::new(),
            seed,
        }
    }

    pub fn with(mut self, key: &str, value: ParamValue) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    /// Checks keys and ranges and fills in defaults.
    pub fn resolve(&self) -> Result<LearnerParams, LearnerError> {
        let family = self.family;
        let fam = family.as_str();
        let keys = family.keys();
        if let Some(key) = self.params.keys().find(|k| !keys.contains(&k.as_str())) {
            return Err(LearnerError::UnknownHyperparameter {
                family: fam,
                key: key.clone(),
            });
        }
        let p = Params { spec: self };
        let resolved = match family {
            Family::DecisionTree => LearnerParams::Tree(TreeParams {
                criterion: p.criterion(Criterion::Entropy)?,
                max_depth: p.count("max_depth", 60, 1)?,
                min_leaf: p.count("min_leaf", 2, 1)?,
                max_features: p.max_features(MaxFeatures::All)?,
                thresholds: p.thresholds()?,
            }),
            Family::LogisticRegression => LearnerParams::Linear(p.sgd(LinearLoss::Logistic, 1e-5, 30, 0.1)?),
            Family::LinearSvm => LearnerParams::Linear(p.sgd(LinearLoss::Hinge, 1e-4, 30, 0.1)?),
            Family::SgdLinear => LearnerParams::Linear(p.sgd(LinearLoss::Hinge, 1e-4, 10, 0.05)?),
            Family::RandomForest | Family::ExtraTrees => {
                let tree = TreeParams {
                    criterion: p.criterion(Criterion::Gini)?,
                    max_depth: p.count("max_depth", 40, 1)?,
                    min_leaf: p.count("min_leaf", 2, 1)?,
                    max_features: p.max_features(FOREST_MAX_FEATURES)?,
                    thresholds: ThresholdMode::Exhaustive,
                };
                let n_trees = p.count("n_trees", 100, 1)?;
                LearnerParams::Forest(if family == Family::RandomForest {
                    ForestParams::random_forest(tree, n_trees)
                } else {
                    ForestParams::extra_trees(tree, n_trees)
                })
            }
            Family::Adaboost => LearnerParams::AdaBoost {
                n_rounds: p.count("n_rounds", 100, 1)?,
            },
            Family::GradientBoost => LearnerParams::Boost(BoostParams {
                n_rounds: p.count("n_rounds", 150, 1)?,
                max_depth: p.count("max_depth", 6, 1)?,
                eta: p.real("eta", 0.3, |v| v > 0.0 && v <= 1.0, "must lie in (0, 1]")?,
                lambda: p.real("lambda", 1.0, |v| v >= 0.0, "must be >= 0")?,
                colsample: p.real("colsample", 0.8, |v| v > 0.0 && v <= 1.0, "must lie in (0, 1]")?,
                min_child_weight: p.real("min_child_weight", 1.0, |v| v >= 0.0, "must be >= 0")?,
            }),
            Family::NaiveBayes => LearnerParams::NaiveBayes {
                alpha: p.real("alpha", 1.0, |v| v >= 0.0, "must be >= 0")?,
            },
        };
        Ok(resolved)
    }
}

/// Fully resolved hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LearnerParams {
    Tree(TreeParams),
    Linear(SgdParams),
    Forest(ForestParams),
    AdaBoost { n_rounds: usize },
    Boost(BoostParams),
    NaiveBayes { alpha: f64 },
}

struct Params<'a> {
    spec: &'a LearnerSpec,
}

impl Params<'_> {
    fn invalid(&self, key: &str, reason: impl Into<String>) -> LearnerError {
        LearnerError::InvalidHyperparameter {
            family: self.spec.family.as_str(),
            key: key.to_string(),
            reason: reason.into(),
        }
    }

    fn get(&self, key: &str) -> Option<&ParamValue> {
        self.spec.params.get(key)
    }

    fn real(&self, key: &str, default: f64, ok: impl Fn(f64) -> bool, rule: &str) -> Result<f64, LearnerError> {
        let v = match self.get(key) {
            None => return Ok(default),
            Some(ParamValue::Num(v)) => *v,
            Some(other) => return Err(self.invalid(key, format!("expected a number, got {other}"))),
        };
        if v.is_finite() && ok(v) {
            Ok(v)
        } else {
            Err(self.invalid(key, format!("{v} {rule}")))
        }
    }

    fn count(&self, key: &str, default: usize, min: usize) -> Result<usize, LearnerError> {
        let v = self.real(key, default as f64, |v| v.fract() == 0.0, "must be an integer")?;
        if v < min as f64 {
            return Err(self.invalid(key, format!("{v} must be >= {min}")));
        }
        Ok(v as usize)
    }

    fn text(&self, key: &str) -> Result<Option<&str>, LearnerError> {
        match self.get(key) {
            None => Ok(None),
            Some(ParamValue::Text(s)) => Ok(Some(s)),
            Some(other) => Err(self.invalid(key, format!("expected a string, got {other}"))),
        }
    }

    fn criterion(&self, default: Criterion) -> Result<Criterion, LearnerError> {
        match self.text("criterion")? {
            None => Ok(default),
            Some("gini") => Ok(Criterion::Gini),
            Some("entropy") => Ok(Criterion::Entropy),
            Some(s) => Err(self.invalid("criterion", format!("`{s}` is not gini or entropy"))),
        }
    }

    fn thresholds(&self) -> Result<ThresholdMode, LearnerError> {
        match self.text("thresholds")? {
            None | Some("exhaustive") => Ok(ThresholdMode::Exhaustive),
            Some("random") => Ok(ThresholdMode::Random),
            Some(s) => Err(self.invalid("thresholds", format!("`{s}` is not exhaustive or random"))),
        }
    }

    fn max_features(&self, default: MaxFeatures) -> Result<MaxFeatures, LearnerError> {
        match self.get("max_features") {
            None => Ok(default),
            Some(ParamValue::Text(s)) if s == "all" => Ok(MaxFeatures::All),
            Some(ParamValue::Text(s)) if s == "sqrt" => Ok(MaxFeatures::Sqrt),
            Some(ParamValue::Num(f)) if *f > 0.0 && *f <= 1.0 => Ok(MaxFeatures::Fraction(*f)),
            Some(other) => Err(self.invalid(
                "max_features",
                format!("{other} is not \"all\", \"sqrt\" or a fraction in (0, 1]"),
            )),
        }
    }

    fn sgd(&self, loss: LinearLoss, lambda: f64, epochs: usize, eta0: f64) -> Result<SgdParams, LearnerError> {
        let loss = match self.text("loss")? {
            None => loss,
            Some("logistic") => LinearLoss::Logistic,
            Some("hinge") => LinearLoss::Hinge,
            Some(s) => return Err(self.invalid("loss", format!("`{s}` is not logistic or hinge"))),
        };
        let params = SgdParams {
            loss,
            lambda: self.real("lambda", lambda, |v| v >= 0.0, "must be >= 0")?,
            epochs: self.count("epochs", epochs, 1)?,
            eta0: self.real("eta0", eta0, |v| v > 0.0, "must be > 0")?,
        };
        // the per-step shrink factor 1 - eta*lambda must stay positive
        if params.eta0 * params.lambda >= 1.0 {
            return Err(self.invalid("eta0", "eta0 * lambda must be < 1"));
        }
        Ok(params)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Tree(DecisionTree),
    Linear(LinearModel),
    Forest(Forest),
    AdaBoost(AdaBoost),
    Boost(GradientBoost),
    NaiveBayes(NaiveBayes),
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrainingMeta {
    /// Epochs, trees, or boosting stages actually fitted.
    pub rounds: usize,
    /// Final training objective where the family has one.
    pub final_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedLearner {
    pub family: Family,
    pub model: Model,
    pub feature_width: usize,
    pub meta: TrainingMeta,
}

fn check_training_set(train: &FeatureMatrix) -> Result<(), LearnerError> {
    if train.rows.len() != train.labels.len() {
        return Err(LearnerError::LabelCount {
            labels: train.labels.len(),
            rows: train.rows.len(),
        });
    }
    if train.is_empty() {
        return Err(LearnerError::EmptyTrainingSet);
    }
    let ones = train.labels.iter().filter(|&&l| l == 1).count();
    if ones == 0 || ones == train.len() {
        return Err(LearnerError::SingleClass);
    }
    if let Some(row) = train.rows.iter().find(|r| r.min_width() > train.width) {
        return Err(LearnerError::WidthMismatch {
            expected: train.width,
            found: row.min_width(),
        });
    }
    Ok(())
}

/// Validates the spec, then fits the family's model.
pub fn fit(spec: &LearnerSpec, train: &FeatureMatrix) -> Result<TrainedLearner, LearnerError> {
    let params = spec.resolve()?;
    check_training_set(train)?;
    let seed = spec.seed;
    let (model, meta) = match params {
        LearnerParams::Tree(p) => {
            let mut rng = SplitMix64::new(seed);
            let samples = (0..train.len()).map(Sample::unit).collect();
            let tree = grow_tree(&train.rows, &train.labels, train.width, samples, &p, &mut rng);
            let meta = TrainingMeta {
                rounds: 1,
                final_loss: None,
            };
            (Model::Tree(tree), meta)
        }
        LearnerParams::Linear(p) => {
            let model = fit_linear_sgd(train, &p, seed);
            let meta = TrainingMeta {
                rounds: p.epochs,
                final_loss: Some(model.objective(train, p.lambda)),
            };
            (Model::Linear(model), meta)
        }
        LearnerParams::Forest(p) => {
            let meta = TrainingMeta {
                rounds: p.n_trees,
                final_loss: None,
            };
            (Model::Forest(fit_forest(train, &p, seed)), meta)
        }
        LearnerParams::AdaBoost { n_rounds } => {
            let model = fit_adaboost(train, n_rounds, seed);
            let meta = TrainingMeta {
                rounds: model.stages.len(),
                final_loss: None,
            };
            (Model::AdaBoost(model), meta)
        }
        LearnerParams::Boost(p) => {
            let (model, trace) = fit_gradient_boost(train, &p, seed);
            let meta = TrainingMeta {
                rounds: model.trees.len(),
                final_loss: trace.losses.last().copied(),
            };
            (Model::Boost(model), meta)
        }
        LearnerParams::NaiveBayes { alpha } => {
            let meta = TrainingMeta {
                rounds: 1,
                final_loss: None,
            };
            (Model::NaiveBayes(fit_naive_bayes(train, alpha)?), meta)
        }
    };
    Ok(TrainedLearner {
        family: spec.family,
        model,
        feature_width: train.width,
        meta,
    })
}

impl TrainedLearner {
    fn check_width(&self, x: &SparseVector) -> Result<(), LearnerError> {
        if x.min_width() > self.feature_width {
            return Err(LearnerError::WidthMismatch {
                expected: self.feature_width,
                found: x.min_width(),
            });
        }
        Ok(())
    }

    /// Larger means more likely class 1. Trees give the leaf's class-1
    /// share, forests the share of trees voting 1, NB the log-odds, and
    /// the rest a raw margin.
    pub fn score(&self, x: &SparseVector) -> Result<f64, LearnerError> {
        self.check_width(x)?;
        Ok(match &self.model {
            Model::Tree(t) => t.prob1(x),
            Model::Linear(m) => m.decision(x),
            Model::Forest(f) => f.vote_fraction(x),
            Model::AdaBoost(a) => a.decision(x),
            Model::Boost(b) => b.decision(x),
            Model::NaiveBayes(nb) => nb.log_odds(x),
        })
    }

    pub fn predict(&self, x: &SparseVector) -> Result<Label, LearnerError> {
        Ok((self.score(x)? > self.family.threshold()) as Label)
    }

    pub fn threshold(&self) -> f64 {
        self.family.threshold()
    }

    /// Class-1 probability for the logistic model.
    pub fn probability(&self, x: &SparseVector) -> Option<f64> {
        match &self.model {
            Model::Linear(m) if m.loss == LinearLoss::Logistic => Some(m.probability(x)),
            _ => None,
        }
    }

    pub fn accuracy(&self, data: &FeatureMatrix) -> Result<f64, LearnerError> {
        let mut correct = 0usize;
        for (x, &y) in data.rows.iter().zip(&data.labels) {
            correct += (self.predict(x)? == y) as usize;
        }
        Ok(correct as f64 / data.len().max(1) as f64)
    }
}

/// Small datasets with known answers, shared by the unit and acceptance tests.
pub mod fixtures {
    use crate::vectorize::{FeatureKind, FeatureMatrix, SparseVector};

    /// 100 rows: class 0 fires feature 0, class 1 fires feature 1, and every
    /// fifth row also carries feature 2 as noise.
    pub fn separable(kind: FeatureKind) -> FeatureMatrix {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..100usize {
            let label = (i % 2) as u8;
            let mut pairs = if label == 0 {
                vec![(0, 1.0 + (i % 3) as f64)]
            } else {
                vec![(1, 1.0 + (i % 4) as f64)]
            };
            if i % 5 == 0 {
                pairs.push((2, 1.0));
            }
            rows.push(SparseVector::from_pairs(pairs));
            labels.push(label);
        }
        FeatureMatrix {
            rows,
            labels,
            width: 3,
            kind,
        }
    }
}
