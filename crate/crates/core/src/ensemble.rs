//! Hard majority voting over trained learners.

use crate::error::EnsembleError;
use crate::ingest::Label;
use crate::learners::TrainedLearner;
use crate::vectorize::{FeatureKind, FeatureMatrix, SparseVector};

/// Mode of binary votes. On an even split returns `(1, true)`; callers with
/// member scores settle the tie with [`break_tie`].
pub fn majority_vote(votes: &[Label]) -> Result<(Label, bool), EnsembleError> {
    if votes.is_empty() {
        return Err(EnsembleError::NoVotes);
    }
    let ones = votes.iter().filter(|&&v| v == 1).count();
    let zeros = votes.len() - ones;
    Ok(match ones.cmp(&zeros) {
        std::cmp::Ordering::Greater => (1, false),
        std::cmp::Ordering::Less => (0, false),
        std::cmp::Ordering::Equal => (1, true),
    })
}

/// Tie rule: mean normalized score `s'` of the members voting 1 against the
/// mean of `1 - s'` over the members voting 0. Label 1 wins equality.
pub fn break_tie(votes: &[Label], normalized: &[f64]) -> Label {
    let (mut one, mut n_one, mut zero, mut n_zero) = (0.0, 0usize, 0.0, 0usize);
    for (&v, &s) in votes.iter().zip(normalized) {
        if v == 1 {
            one += s;
            n_one += 1;
        } else {
            zero += 1.0 - s;
            n_zero += 1;
        }
    }
    let mean = |sum: f64, n: usize| if n == 0 { 0.0 } else { sum / n as f64 };
    (mean(one, n_one) >= mean(zero, n_zero)) as Label
}

/// Both encodings of one document.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureViews {
    pub count: SparseVector,
    pub tfidf: SparseVector,
}

impl FeatureViews {
    pub fn get(&self, kind: FeatureKind) -> &SparseVector {
        match kind {
            FeatureKind::Count => &self.count,
            FeatureKind::Tfidf => &self.tfidf,
        }
    }

    /// The same vector under both kinds; for members that share one encoding.
    pub fn uniform(x: SparseVector) -> Self {
        FeatureViews {
            count: x.clone(),
            tfidf: x,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Member {
    pub name: String,
    pub learner: TrainedLearner,
    pub features: FeatureKind,
    /// Finite score range seen on the training rows, for tie breaking.
    pub score_range: (f64, f64),
}

impl Member {
    pub fn new(name: impl Into<String>, learner: TrainedLearner, features: FeatureKind) -> Self {
        Member {
            name: name.into(),
            learner,
            features,
            score_range: (0.0, 0.0),
        }
    }

    /// Records the finite min/max score over `train`.
    pub fn calibrate(&mut self, train: &FeatureMatrix) -> Result<(), EnsembleError> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for x in &train.rows {
            let s = self.learner.score(x).map_err(|e| self.fail(e))?;
            if s.is_finite() {
                lo = lo.min(s);
                hi = hi.max(s);
            }
        }
        self.score_range = if lo <= hi { (lo, hi) } else { (0.0, 0.0) };
        Ok(())
    }

    /// Min-max normalized score clamped to [0, 1]; 0.5 on a flat range.
    pub fn normalize(&self, score: f64) -> f64 {
        let (lo, hi) = self.score_range;
        if score.is_nan() {
            0.5
        } else if hi > lo {
            ((score - lo) / (hi - lo)).clamp(0.0, 1.0)
        } else if score > hi {
            1.0
        } else if score < lo {
            0.0
        } else {
            0.5
        }
    }

    fn fail(&self, source: crate::error::LearnerError) -> EnsembleError {
        EnsembleError::Member {
            name: self.name.clone(),
            source,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VotedPrediction {
    pub label: Label,
    pub votes: Vec<Label>,
    /// Share of members voting 1.
    pub vote_fraction: f64,
    pub tie_broken: bool,
    /// Raw member scores, aligned with `votes`.
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    members: Vec<Member>,
}

impl Ensemble {
    /// Members sharing a feature kind must share a feature width.
    pub fn new(members: Vec<Member>) -> Result<Self, EnsembleError> {
        if members.is_empty() {
            return Err(EnsembleError::NoMembers);
        }
        for kind in [FeatureKind::Count, FeatureKind::Tfidf] {
            let mut widths = members
                .iter()
                .filter(|m| m.features == kind)
                .map(|m| m.learner.feature_width);
            if let Some(first) = widths.next() {
                if widths.any(|w| w != first) {
                    return Err(EnsembleError::InconsistentWidth(kind));
                }
            }
        }
        Ok(Ensemble { members })
    }

    pub fn members(&self) -> &[Member] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn predict(&self, x: &FeatureViews) -> Result<VotedPrediction, EnsembleError> {
        let mut votes = Vec::with_capacity(self.members.len());
        let mut scores = Vec::with_capacity(self.members.len());
        for m in &self.members {
            let s = m.learner.score(x.get(m.features)).map_err(|e| m.fail(e))?;
            votes.push((s > m.learner.threshold()) as Label);
            scores.push(s);
        }
        let (mut label, tie_broken) = majority_vote(&votes)?;
        if tie_broken {
            let normalized: Vec<f64> = self.members.iter().zip(&scores).map(|(m, &s)| m.normalize(s)).collect();
            label = break_tie(&votes, &normalized);
        }
        let ones = votes.iter().filter(|&&v| v == 1).count();
        Ok(VotedPrediction {
            label,
            vote_fraction: ones as f64 / votes.len() as f64,
            votes,
            tie_broken,
            scores,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::linear::{LinearLoss, LinearModel};
    use crate::learners::{Family, Model, TrainingMeta};
    use crate::rng::SplitMix64;

    /// Member with score `w * x0 + b` and the given training score range.
    fn linear(name: &str, w: f64, b: f64, range: (f64, f64)) -> Member {
        let learner = TrainedLearner {
            family: Family::LinearSvm,
            model: Model::Linear(LinearModel {
                weights: vec![w],
                bias: b,
                loss: LinearLoss::Hinge,
            }),
            feature_width: 1,
            meta: TrainingMeta::default(),
        };
        Member {
            score_range: range,
            ..Member::new(name, learner, FeatureKind::Tfidf)
        }
    }

    /// Member whose vote is fixed regardless of input.
    fn constant(vote: Label) -> Member {
        linear("c", 0.0, if vote == 1 { 1.0 } else { -1.0 }, (-1.0, 1.0))
    }

    fn x() -> FeatureViews {
        FeatureViews::uniform(SparseVector::from_dense(&[1.0]))
    }

    fn brute_mode(votes: &[Label]) -> Option<Label> {
        let ones = votes.iter().filter(|&&v| v == 1).count() * 2;
        match ones.cmp(&votes.len()) {
            std::cmp::Ordering::Greater => Some(1),
            std::cmp::Ordering::Less => Some(0),
            std::cmp::Ordering::Equal => None,
        }
    }

    #[test]
    fn small_votes() {
        assert_eq!(majority_vote(&[1, 1, 0]).unwrap(), (1, false));
        assert_eq!(majority_vote(&[0; 9]).unwrap(), (0, false));
        assert_eq!(majority_vote(&[1, 1, 1, 1, 1, 0, 0, 0, 0]).unwrap(), (1, false));
        assert_eq!(majority_vote(&[]).unwrap_err(), EnsembleError::NoVotes);
    }

    #[test]
    fn matches_brute_force_mode_on_all_short_vectors() {
        for len in 1..=9usize {
            for bits in 0u32..(1 << len) {
                let votes: Vec<Label> = (0..len).map(|i| ((bits >> i) & 1) as Label).collect();
                let (label, tie) = majority_vote(&votes).unwrap();
                match brute_mode(&votes) {
                    Some(m) => assert_eq!((label, tie), (m, false)),
                    None => assert!(tie && len % 2 == 0),
                }
            }
        }
    }

    #[test]
    fn five_of_nine() {
        let members: Vec<Member> = [1, 1, 1, 1, 1, 0, 0, 0, 0].into_iter().map(constant).collect();
        let p = Ensemble::new(members).unwrap().predict(&x()).unwrap();
        assert_eq!(p.label, 1);
        assert_eq!(p.vote_fraction, 5.0 / 9.0);
        assert!(!p.tie_broken);
    }

    #[test]
    fn tie_goes_to_the_higher_mean_normalized_score() {
        // voters for 1 score 0.9 and 0.8 on [0, 1]; voters for 0 score -0.2
        // and -0.1 on [-1, 1] (normalized 0.4 and 0.45, so 1 - s' = 0.6, 0.55)
        let members = vec![
            linear("a", 0.0, 0.9, (0.0, 1.0)),
            linear("b", 0.0, 0.8, (0.0, 1.0)),
            linear("c", 0.0, -0.2, (-1.0, 1.0)),
            linear("d", 0.0, -0.1, (-1.0, 1.0)),
        ];
        let p = Ensemble::new(members).unwrap().predict(&x()).unwrap();
        assert_eq!((p.label, p.tie_broken), (1, true));
        assert_eq!(p.vote_fraction, 0.5);

        let members = vec![
            linear("a", 0.0, 0.1, (0.0, 1.0)),
            linear("b", 0.0, 0.2, (0.0, 1.0)),
            linear("c", 0.0, -0.9, (-1.0, 1.0)),
            linear("d", 0.0, -0.8, (-1.0, 1.0)),
        ];
        let p = Ensemble::new(members).unwrap().predict(&x()).unwrap();
        assert_eq!((p.label, p.tie_broken), (0, true));
    }

    #[test]
    fn exact_tie_of_means_picks_one() {
        assert_eq!(break_tie(&[1, 0], &[0.7, 0.3]), 1);
    }

    #[test]
    fn identical_members_follow_the_model() {
        let mut rng = SplitMix64::new(5);
        let ens = Ensemble::new(vec![linear("m", 2.0, -1.0, (-1.0, 1.0)); 9]).unwrap();
        for _ in 0..100 {
            let v = rng.next_f64() * 2.0 - 0.5;
            let views = FeatureViews::uniform(SparseVector::from_dense(&[v]));
            let single = ens.members()[0].learner.predict(&views.tfidf).unwrap();
            assert_eq!(ens.predict(&views).unwrap().label, single);
        }
    }

    #[test]
    fn permutation_and_padding_invariance() {
        let mut rng = SplitMix64::new(11);
        for _ in 0..500 {
            let n = 1 + 2 * rng.below(5);
            let mut members: Vec<Member> = (0..n).map(|_| constant(rng.below(2) as Label)).collect();
            let base = Ensemble::new(members.clone()).unwrap().predict(&x()).unwrap();
            assert!(!base.tie_broken);
            rng.shuffle(&mut members);
            let shuffled = Ensemble::new(members.clone()).unwrap().predict(&x()).unwrap();
            assert_eq!(
                (shuffled.label, shuffled.vote_fraction),
                (base.label, base.vote_fraction)
            );
            members.push(constant(base.label));
            members.push(constant(base.label));
            let padded = Ensemble::new(members).unwrap().predict(&x()).unwrap();
            assert_eq!(padded.label, base.label);
        }
    }

    #[test]
    fn rejects_mixed_widths() {
        let mut wide = linear("w", 1.0, 0.0, (0.0, 1.0));
        wide.learner.feature_width = 2;
        let err = Ensemble::new(vec![linear("n", 1.0, 0.0, (0.0, 1.0)), wide]).unwrap_err();
        assert_eq!(err, EnsembleError::InconsistentWidth(FeatureKind::Tfidf));
        assert_eq!(Ensemble::new(vec![]).unwrap_err(), EnsembleError::NoMembers);
    }

    #[test]
    fn normalization_handles_infinite_scores() {
        let m = linear("nb", 0.0, 0.0, (-4.0, 4.0));
        assert_eq!(m.normalize(f64::INFINITY), 1.0);
        assert_eq!(m.normalize(f64::NEG_INFINITY), 0.0);
        assert_eq!(m.normalize(0.0), 0.5);
    }
}
