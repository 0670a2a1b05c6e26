//! Greedy top-down classification trees over sparse rows.
//!
//! Features absent from a row's posting list count as value 0 and route
//! by `0 <= threshold`. Candidate thresholds for a feature at a node come
//! from the sorted non-zero values of the rows reaching the node plus one
//! implicit zero block, so split search costs O(nnz) per node instead of
//! O(rows x features).

use crate::ingest::Label;
use crate::rng::SplitMix64;
use crate::vectorize::SparseVector;

/// Gains at or below `GAIN_EPS * node_weight` do not justify a split.
const GAIN_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Criterion {
    Gini,
    /// Shannon entropy in bits (information gain).
    Entropy,
}

impl Criterion {
    pub fn impurity(self, counts: [f64; 2]) -> f64 {
        let c0 = counts[0].max(0.0);
        let c1 = counts[1].max(0.0);
        let total = c0 + c1;
        if total <= 0.0 {
            return 0.0;
        }
        let (p0, p1) = (c0 / total, c1 / total);
        match self {
            Criterion::Gini => 1.0 - p0 * p0 - p1 * p1,
            Criterion::Entropy => {
                let h = |p: f64| if p > 0.0 { -p * p.log2() } else { 0.0 };
                h(p0) + h(p1)
            }
        }
    }

    /// Impurity scaled by the node's weight.
    fn mass(self, counts: [f64; 2]) -> f64 {
        (counts[0] + counts[1]) * self.impurity(counts)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MaxFeatures {
    All,
    Sqrt,
    Fraction(f64),
}

impl MaxFeatures {
    /// Features examined per node for a matrix of `width` columns.
    pub fn count(self, width: usize) -> usize {
        match self {
            MaxFeatures::All => width,
            MaxFeatures::Sqrt => ((width as f64).sqrt().floor() as usize).max(1),
            MaxFeatures::Fraction(f) => ((width as f64 * f).floor() as usize).max(1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThresholdMode {
    /// Midpoints between consecutive distinct values.
    Exhaustive,
    /// One uniform draw in `[min, max)` per examined feature.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    pub criterion: Criterion,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub max_features: MaxFeatures,
    pub thresholds: ThresholdMode,
}

/// A training row reaching a node. `weight` drives impurity; `count` is the
/// row's multiplicity and drives `min_leaf`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub row: u32,
    pub weight: f64,
    pub count: u32,
}

impl Sample {
    pub fn unit(row: usize) -> Self {
        Sample {
            row: row as u32,
            weight: 1.0,
            count: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Leaf {
        /// Weighted class mass `[class 0, class 1]`.
        counts: [f64; 2],
        n_samples: u32,
    },
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
}

/// Flat arena of nodes; the root is node 0.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    pub(crate) nodes: Vec<TreeNode>,
}

impl DecisionTree {
    pub fn from_nodes(nodes: Vec<TreeNode>) -> Self {
        DecisionTree { nodes }
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    fn leaf_counts(&self, x: &SparseVector) -> [f64; 2] {
        let mut i = 0usize;
        loop {
            match &self.nodes[i] {
                TreeNode::Leaf { counts, .. } => return *counts,
                TreeNode::Split {
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

    /// Class-1 share of the leaf reached by `x`.
    pub fn prob1(&self, x: &SparseVector) -> f64 {
        let [c0, c1] = self.leaf_counts(x);
        if c0 + c1 > 0.0 {
            c1 / (c0 + c1)
        } else {
            0.5
        }
    }

    pub fn predict(&self, x: &SparseVector) -> Label {
        (self.prob1(x) > 0.5) as Label
    }

    /// Length of the longest root-to-leaf path (a lone leaf has depth 0).
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], i: usize) -> usize {
            match &nodes[i] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => {
                    1 + walk(nodes, *left as usize).max(walk(nodes, *right as usize))
                }
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, TreeNode::Leaf { .. })).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    pub feature: u32,
    pub threshold: f64,
    /// Weighted impurity decrease.
    pub gain: f64,
}

/// Midpoint of `a < b` that still separates them.
pub(crate) fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    if m >= b {
        a
    } else {
        m
    }
}

/// Grows a tree on the given samples of `rows`.
pub fn grow_tree(
    rows: &[SparseVector],
    labels: &[Label],
    width: usize,
    samples: Vec<Sample>,
    params: &TreeParams,
    rng: &mut SplitMix64,
) -> DecisionTree {
    let mut grower = Grower::new(rows, labels, width, params, rng);
    let mut samples = samples;
    grower.grow(&mut samples, 0);
    DecisionTree { nodes: grower.nodes }
}

/// Best split of the node formed by `samples`, as `grow_tree` would choose it.
pub fn best_split(
    rows: &[SparseVector],
    labels: &[Label],
    width: usize,
    samples: &[Sample],
    params: &TreeParams,
    rng: &mut SplitMix64,
) -> Option<SplitCandidate> {
    let mut grower = Grower::new(rows, labels, width, params, rng);
    let (counts, n) = grower.totals(samples);
    grower.best_split(samples, counts, n)
}

struct Grower<'a> {
    rows: &'a [SparseVector],
    labels: &'a [Label],
    width: usize,
    params: &'a TreeParams,
    rng: &'a mut SplitMix64,
    nodes: Vec<TreeNode>,
    scratch: Scratch,
}

/// Per-feature bookkeeping reused across nodes; `stamp == epoch` marks
/// entries that belong to the current node.
struct Scratch {
    epoch: u32,
    stamp: Vec<u32>,
    picked: Vec<u32>,
    count: Vec<u32>,
    first: Vec<f64>,
    uniform: Vec<bool>,
    cursor: Vec<u32>,
    present: Vec<u32>,
    entries: Vec<(f64, u32)>,
}

impl<'a> Grower<'a> {
    fn new(
        rows: &'a [SparseVector],
        labels: &'a [Label],
        width: usize,
        params: &'a TreeParams,
        rng: &'a mut SplitMix64,
    ) -> Self {
        Grower {
            rows,
            labels,
            width,
            params,
            rng,
            nodes: Vec::new(),
            scratch: Scratch {
                epoch: 0,
                stamp: vec![0; width],
                picked: vec![0; width],
                count: vec![0; width],
                first: vec![0.0; width],
                uniform: vec![false; width],
                cursor: vec![0; width],
                present: Vec::new(),
                entries: Vec::new(),
            },
        }
    }

    fn totals(&self, samples: &[Sample]) -> ([f64; 2], usize) {
        let mut counts = [0.0; 2];
        let mut n = 0usize;
        for s in samples {
            counts[self.labels[s.row as usize] as usize] += s.weight;
            n += s.count as usize;
        }
        (counts, n)
    }

    fn grow(&mut self, samples: &mut [Sample], depth: usize) -> u32 {
        let (counts, n) = self.totals(samples);
        let idx = self.nodes.len();
        self.nodes.push(TreeNode::Leaf {
            counts,
            n_samples: n as u32,
        });
        let first = self.labels[samples[0].row as usize];
        let pure = samples.iter().all(|s| self.labels[s.row as usize] == first);
        if depth >= self.params.max_depth || pure || n < 2 * self.params.min_leaf {
            return idx as u32;
        }
        let Some(split) = self.best_split(samples, counts, n) else {
            return idx as u32;
        };

        let rows = self.rows;
        let (left, right): (Vec<Sample>, Vec<Sample>) = samples
            .iter()
            .partition(|s| rows[s.row as usize].get(split.feature) <= split.threshold);
        let n_left = left.len();
        samples[..n_left].copy_from_slice(&left);
        samples[n_left..].copy_from_slice(&right);
        drop((left, right));

        let (l, r) = samples.split_at_mut(n_left);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[idx] = TreeNode::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        idx as u32
    }

    fn best_split(&mut self, samples: &[Sample], totals: [f64; 2], n_total: usize) -> Option<SplitCandidate> {
        let sc = &mut self.scratch;
        sc.epoch += 1;
        let epoch = sc.epoch;
        sc.present.clear();
        for s in samples {
            for (f, v) in self.rows[s.row as usize].iter() {
                let fi = f as usize;
                if sc.stamp[fi] != epoch {
                    sc.stamp[fi] = epoch;
                    sc.count[fi] = 0;
                    sc.first[fi] = v;
                    sc.uniform[fi] = true;
                    sc.present.push(f);
                } else if v != sc.first[fi] {
                    sc.uniform[fi] = false;
                }
                sc.count[fi] += 1;
            }
        }
        sc.present.sort_unstable();

        // A feature is constant at this node when every row stores the same value.
        let m = samples.len() as u32;
        let mut chosen: Vec<u32> = sc
            .present
            .iter()
            .copied()
            .filter(|&f| sc.count[f as usize] < m || !sc.uniform[f as usize])
            .collect();
        let k = self.params.max_features.count(self.width);
        if chosen.len() > k {
            self.rng.partial_shuffle(&mut chosen, k);
            chosen.truncate(k);
            chosen.sort_unstable();
        }
        if chosen.is_empty() {
            return None;
        }

        let mut starts = Vec::with_capacity(chosen.len());
        let mut total = 0u32;
        for &f in &chosen {
            sc.picked[f as usize] = epoch;
            sc.cursor[f as usize] = total;
            starts.push(total as usize);
            total += sc.count[f as usize];
        }
        sc.entries.clear();
        sc.entries.resize(total as usize, (0.0, 0));
        for (si, s) in samples.iter().enumerate() {
            for (f, v) in self.rows[s.row as usize].iter() {
                let fi = f as usize;
                if sc.picked[fi] == epoch {
                    sc.entries[sc.cursor[fi] as usize] = (v, si as u32);
                    sc.cursor[fi] += 1;
                }
            }
        }

        let ctx = NodeContext {
            samples,
            labels: self.labels,
            totals,
            n_total,
            n_rows: samples.len(),
            parent_mass: self.params.criterion.mass(totals),
            params: self.params,
        };
        let mut best: Option<SplitCandidate> = None;
        let mut entries = std::mem::take(&mut self.scratch.entries);
        for (i, &f) in chosen.iter().enumerate() {
            let slice = &mut entries[starts[i]..starts[i] + self.scratch.count[f as usize] as usize];
            let found = match self.params.thresholds {
                ThresholdMode::Exhaustive => ctx.sweep(f, slice),
                ThresholdMode::Random => ctx.random(f, slice, self.rng),
            };
            if let Some(c) = found {
                if best.is_none_or(|b| c.gain > b.gain) {
                    best = Some(c);
                }
            }
        }
        self.scratch.entries = entries;
        best.filter(|b| b.gain > GAIN_EPS * (totals[0] + totals[1]))
    }
}

struct NodeContext<'a> {
    samples: &'a [Sample],
    labels: &'a [Label],
    totals: [f64; 2],
    n_total: usize,
    n_rows: usize,
    parent_mass: f64,
    params: &'a TreeParams,
}

/// Sufficient statistics of a group of rows.
#[derive(Clone, Copy, Default)]
struct Stats {
    w: [f64; 2],
    n: usize,
}

impl Stats {
    fn add(&mut self, other: Stats) {
        self.w[0] += other.w[0];
        self.w[1] += other.w[1];
        self.n += other.n;
    }
}

impl NodeContext<'_> {
    fn stats_of(&self, sample_index: u32) -> Stats {
        let s = self.samples[sample_index as usize];
        let mut st = Stats::default();
        st.w[self.labels[s.row as usize] as usize] = s.weight;
        st.n = s.count as usize;
        st
    }

    /// Rows whose feature value is implicitly zero.
    fn zero_block(&self, entries: &[(f64, u32)]) -> Option<Stats> {
        if entries.len() == self.n_rows {
            return None;
        }
        let mut nz = Stats::default();
        for &(_, si) in entries {
            nz.add(self.stats_of(si));
        }
        Some(Stats {
            w: [self.totals[0] - nz.w[0], self.totals[1] - nz.w[1]],
            n: self.n_total - nz.n,
        })
    }

    fn evaluate(&self, feature: u32, threshold: f64, left: Stats) -> Option<SplitCandidate> {
        let right = Stats {
            w: [self.totals[0] - left.w[0], self.totals[1] - left.w[1]],
            n: self.n_total - left.n,
        };
        let min_leaf = self.params.min_leaf;
        if left.n < min_leaf || right.n < min_leaf {
            return None;
        }
        let c = self.params.criterion;
        Some(SplitCandidate {
            feature,
            threshold,
            gain: self.parent_mass - c.mass(left.w) - c.mass(right.w),
        })
    }

    fn sweep(&self, feature: u32, entries: &mut [(f64, u32)]) -> Option<SplitCandidate> {
        entries.sort_by(|a, b| a.0.total_cmp(&b.0));
        let zero = self.zero_block(entries);
        let split_at = entries.partition_point(|e| e.0 < 0.0);
        let items = entries[..split_at]
            .iter()
            .map(|&(v, si)| (v, self.stats_of(si)))
            .chain(zero.map(|z| (0.0, z)))
            .chain(entries[split_at..].iter().map(|&(v, si)| (v, self.stats_of(si))));

        let mut best: Option<SplitCandidate> = None;
        let mut left = Stats::default();
        let mut prev: Option<f64> = None;
        for (v, st) in items {
            if let Some(p) = prev {
                if v > p {
                    if let Some(c) = self.evaluate(feature, midpoint(p, v), left) {
                        if best.is_none_or(|b| c.gain > b.gain) {
                            best = Some(c);
                        }
                    }
                }
            }
            left.add(st);
            prev = Some(v);
        }
        best
    }

    fn random(&self, feature: u32, entries: &[(f64, u32)], rng: &mut SplitMix64) -> Option<SplitCandidate> {
        let zero = self.zero_block(entries);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &(v, _) in entries {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if zero.is_some() {
            lo = lo.min(0.0);
            hi = hi.max(0.0);
        }
        let mut t = lo + rng.next_f64() * (hi - lo);
        if t >= hi {
            t = lo;
        }
        let mut left = Stats::default();
        for &(v, si) in entries {
            if v <= t {
                left.add(self.stats_of(si));
            }
        }
        if let Some(z) = zero {
            if 0.0 <= t {
                left.add(z);
            }
        }
        self.evaluate(feature, t, left)
    }
}
