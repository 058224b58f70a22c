use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::HyperParams;
use crate::error::{Error, Result};
use crate::ingest::DesignMatrix;
use crate::num::Scalar;

/// Tree node, serialized as nested arrays: a leaf is `[value, n]`, a split
/// is `[feature, threshold, left, right]`. Rows with `x <= threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Node<T> {
    Split(usize, T, Box<Node<T>>, Box<Node<T>>),
    Leaf(T, usize),
}

impl<T: Scalar> Node<T> {
    pub fn predict(&self, row: &[T]) -> T {
        let mut node = self;
        loop {
            match node {
                Node::Leaf(v, _) => return *v,
                Node::Split(f, t, l, r) => node = if row[*f] <= *t { l } else { r },
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Node::Leaf(..) => 0,
            Node::Split(_, _, l, r) => 1 + l.depth().max(r.depth()),
        }
    }

    pub fn n_leaves(&self) -> usize {
        match self {
            Node::Leaf(..) => 1,
            Node::Split(_, _, l, r) => l.n_leaves() + r.n_leaves(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree<T> {
    pub root: Node<T>,
    /// Per-column impurity decrease, `sum (n_node / n_total) * delta var`.
    pub importances: Vec<f64>,
}

impl<T: Scalar> DecisionTree<T> {
    pub fn predict_row(&self, row: &[T]) -> T {
        self.root.predict(row)
    }
}

/// Best split of one node: feature, threshold, and SSE decrease.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitChoice<T> {
    pub feature: usize,
    pub threshold: T,
    pub gain: f64,
}

/// Tie tolerance on SSE decreases, relative to the node SSE.
fn tie_eps(sse: f64) -> f64 {
    1e-9 * (1.0 + sse)
}

fn sse_of(ys: impl Iterator<Item = f64>) -> (f64, f64, usize) {
    let (mut s, mut s2, mut n) = (0.0, 0.0, 0usize);
    for y in ys {
        s += y;
        s2 += y * y;
        n += 1;
    }
    (s, (s2 - s * s / n.max(1) as f64).max(0.0), n)
}

fn midpoint<T: Scalar>(a: T, b: T) -> T {
    let m = (a + b) / T::lit(2.0);
    // rounding can land on b, which would send b left
    if m < b {
        m
    } else {
        a
    }
}

/// Whether `cand` beats `best`: larger gain beyond the tolerance, or a tie
/// resolved toward the lower (feature, threshold).
fn better<T: Scalar>(cand: &SplitChoice<T>, best: &Option<SplitChoice<T>>, eps: f64) -> bool {
    match best {
        None => true,
        Some(b) => {
            cand.gain > b.gain + eps
                || ((cand.gain - b.gain).abs() <= eps && (cand.feature, cand.threshold) < (b.feature, b.threshold))
        }
    }
}

/// Scans every midpoint threshold of `feature` over the node rows. Returns
/// `None` when the feature is constant on the node.
fn best_threshold<T: Scalar>(
    m: &DesignMatrix<T>,
    y: &[f64],
    idx: &[usize],
    feature: usize,
    scratch: &mut Vec<(T, f64)>,
) -> Option<SplitChoice<T>> {
    scratch.clear();
    scratch.extend(idx.iter().map(|&i| (m.get(i, feature), y[i])));
    scratch.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite features"));
    if scratch[0].0 == scratch[scratch.len() - 1].0 {
        return None;
    }
    let n = scratch.len() as f64;
    let (tot, tot2) = scratch.iter().fold((0.0, 0.0), |(s, s2), (_, y)| (s + y, s2 + y * y));
    let parent = tot2 - tot * tot / n;
    let eps = tie_eps(parent.max(0.0));
    let (mut ls, mut ls2) = (0.0, 0.0);
    let mut best: Option<SplitChoice<T>> = None;
    for k in 0..scratch.len() - 1 {
        let (x, yv) = scratch[k];
        ls += yv;
        ls2 += yv * yv;
        let next = scratch[k + 1].0;
        if next == x {
            continue;
        }
        let nl = (k + 1) as f64;
        let nr = n - nl;
        let (rs, rs2) = (tot - ls, tot2 - ls2);
        let child = (ls2 - ls * ls / nl) + (rs2 - rs * rs / nr);
        let cand = SplitChoice { feature, threshold: midpoint(x, next), gain: parent - child };
        if better(&cand, &best, eps) {
            best = Some(cand);
        }
    }
    best
}

pub(crate) struct TreeBuilder<'a, T, R> {
    m: &'a DesignMatrix<T>,
    y: Vec<f64>,
    hp: &'a HyperParams,
    mtry: usize,
    rng: &'a mut R,
    importances: Vec<f64>,
    n_total: f64,
    scratch: Vec<(T, f64)>,
    features: Vec<usize>,
}

impl<'a, T: Scalar, R: Rng> TreeBuilder<'a, T, R> {
    pub(crate) fn new(m: &'a DesignMatrix<T>, hp: &'a HyperParams, rng: &'a mut R) -> Result<Self> {
        let y: Vec<f64> = m.target()?.iter().map(|v| v.to_f64_lossy()).collect();
        if m.n_rows() == 0 {
            return Err(Error::InsufficientData("cannot fit a tree on an empty matrix".into()));
        }
        let d = m.n_cols();
        Ok(Self {
            m,
            y,
            hp,
            mtry: hp.max_features.resolve(d),
            rng,
            importances: vec![0.0; d],
            n_total: 0.0,
            scratch: Vec::new(),
            features: (0..d).collect(),
        })
    }

    /// Grows a tree on `idx` (a bootstrap multiset or all rows).
    pub(crate) fn fit(mut self, idx: &mut [usize]) -> Result<DecisionTree<T>> {
        if idx.is_empty() {
            return Err(Error::InsufficientData("cannot fit a tree on zero rows".into()));
        }
        self.n_total = idx.len() as f64;
        let root = self.grow(idx, 0);
        Ok(DecisionTree { root, importances: self.importances })
    }

    /// Features are visited in a random order until `mtry` non-constant ones
    /// have been evaluated, so constant indicator columns do not waste draws.
    fn choose(&mut self, idx: &[usize], parent_sse: f64) -> Option<SplitChoice<T>> {
        let d = self.features.len();
        if self.mtry < d {
            self.features.shuffle(self.rng);
        }
        let eps = tie_eps(parent_sse);
        let mut best = None;
        let mut evaluated = 0;
        for k in 0..d {
            if evaluated == self.mtry {
                break;
            }
            let f = self.features[k];
            if let Some(c) = best_threshold(self.m, &self.y, idx, f, &mut self.scratch) {
                evaluated += 1;
                if better(&c, &best, eps) {
                    best = Some(c);
                }
            }
        }
        if self.mtry < d {
            self.features.sort_unstable();
        }
        best.filter(|b| b.gain > eps)
    }

    fn grow(&mut self, idx: &mut [usize], depth: usize) -> Node<T> {
        let (sum, sse, n) = sse_of(idx.iter().map(|&i| self.y[i]));
        let mean = T::lit(sum / n as f64);
        let scale = (sum * sum / n as f64).max(1.0);
        if depth >= self.hp.max_depth || n < self.hp.min_samples_split || sse <= 1e-12 * scale {
            return Node::Leaf(mean, n);
        }
        let Some(split) = self.choose(idx, sse) else { return Node::Leaf(mean, n) };
        self.importances[split.feature] += split.gain / self.n_total;
        let f = split.feature;
        let m = self.m;
        idx.sort_by_key(|&i| m.get(i, f) > split.threshold);
        let cut = idx.partition_point(|&i| m.get(i, f) <= split.threshold);
        let (l, r) = idx.split_at_mut(cut);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        Node::Split(f, split.threshold, Box::new(left), Box::new(right))
    }
}

/// Fits one tree on every row of `m`.
pub fn fit_tree<T: Scalar, R: Rng>(m: &DesignMatrix<T>, hp: &HyperParams, rng: &mut R) -> Result<DecisionTree<T>> {
    hp.validate()?;
    let mut idx: Vec<usize> = (0..m.n_rows()).collect();
    TreeBuilder::new(m, hp, rng)?.fit(&mut idx)
}
