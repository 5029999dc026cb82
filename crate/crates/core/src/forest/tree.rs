//! CART trees shared by the classifier and the quantile forest.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major design matrix.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Matrix {
    n_cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(n_cols: usize) -> Self {
        Self {
            n_cols,
            data: Vec::new(),
        }
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let n_cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut m = Self::new(n_cols);
        for r in rows {
            m.push_row(r.as_ref());
        }
        m
    }

    pub fn push_row(&mut self, row: &[f64]) {
        assert_eq!(row.len(), self.n_cols, "row width mismatch");
        self.data.extend_from_slice(row);
    }

    pub fn n_rows(&self) -> usize {
        self.data.len().checked_div(self.n_cols).unwrap_or(0)
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n_cols + j]
    }
}

/// Impurity used to score candidate splits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitCriterion {
    /// Binary labels encoded as 0.0 / 1.0.
    Gini,
    Variance,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    pub max_features: usize,
    pub min_leaf_size: usize,
    pub max_depth: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        /// Training rows routed here, with bootstrap multiplicity.
        rows: Vec<u32>,
        /// Class-1 frequency (classification) or target mean (regression).
        value: f64,
    },
}

/// A fitted tree stored as a node arena with the root at index 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    /// Index of the leaf reached by `x` (`x[feature] <= threshold` goes left).
    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x[*feature] <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    }
                }
                TreeNode::Leaf { .. } => return i,
            }
        }
    }

    pub fn leaf(&self, x: &[f64]) -> (&[u32], f64) {
        match &self.nodes[self.leaf_index(x)] {
            TreeNode::Leaf { rows, value } => (rows, *value),
            TreeNode::Split { .. } => unreachable!("leaf_index returns a leaf"),
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, TreeNode::Leaf { .. }))
            .count()
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match &t.nodes[i] {
                TreeNode::Split { left, right, .. } => {
                    1 + go(t, *left as usize).max(go(t, *right as usize))
                }
                TreeNode::Leaf { .. } => 0,
            }
        }
        go(self, 0)
    }
}

struct Candidate {
    feature: usize,
    threshold: f64,
    gain: f64,
}

/// Node impurity scaled by node size (`n * gini` or the sum of squared deviations).
fn weighted_impurity(criterion: SplitCriterion, n: f64, sum: f64, sum_sq: f64) -> f64 {
    match criterion {
        // with 0/1 labels, sum == count of class 1
        SplitCriterion::Gini => {
            let p1 = sum / n;
            n * (1.0 - p1 * p1 - (1.0 - p1) * (1.0 - p1))
        }
        SplitCriterion::Variance => (sum_sq - sum * sum / n).max(0.0),
    }
}

fn best_split<R: Rng>(
    x: &Matrix,
    y: &[f64],
    rows: &[u32],
    criterion: SplitCriterion,
    params: &TreeParams,
    rng: &mut R,
    scratch: &mut Vec<(f64, f64)>,
) -> Option<Candidate> {
    let d = x.n_cols();
    let m = params.max_features.clamp(1, d);
    let mut features: Vec<usize> = index::sample(rng, d, m).into_vec();
    features.sort_unstable();

    let n = rows.len();
    let (tot, tot_sq) = rows.iter().fold((0.0, 0.0), |(s, q), &r| {
        let v = y[r as usize];
        (s + v, q + v * v)
    });
    let parent = weighted_impurity(criterion, n as f64, tot, tot_sq);
    let min_leaf = params.min_leaf_size.max(1);
    let mut best: Option<Candidate> = None;

    for &f in &features {
        scratch.clear();
        scratch.extend(rows.iter().map(|&r| (x.get(r as usize, f), y[r as usize])));
        scratch.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (mut ls, mut lq) = (0.0, 0.0);
        for i in 0..n - 1 {
            let (v, t) = scratch[i];
            ls += t;
            lq += t * t;
            let nl = i + 1;
            let next = scratch[i + 1].0;
            if v == next || nl < min_leaf || n - nl < min_leaf {
                continue;
            }
            let gain = parent
                - weighted_impurity(criterion, nl as f64, ls, lq)
                - weighted_impurity(criterion, (n - nl) as f64, tot - ls, tot_sq - lq);
            if gain > -1e-12 && best.as_ref().is_none_or(|b| gain > b.gain) {
                let mut threshold = v + (next - v) / 2.0;
                if threshold >= next {
                    threshold = v;
                }
                best = Some(Candidate {
                    feature: f,
                    threshold,
                    gain,
                });
            }
        }
    }
    best
}

/// Grows one tree on `rows` (indices into `x`/`y`, repeats allowed).
///
/// Greedy CART: each node draws `max_features` candidate features, scans
/// midpoint thresholds between consecutive distinct values, and keeps the
/// strictly best impurity decrease (lower feature index, then lower
/// threshold, wins ties). An impure node splits even when the best gain
/// is zero. Nodes stop splitting when pure, when smaller
/// than `2 * min_leaf_size`, or at `max_depth`.
pub fn fit_tree<R: Rng>(
    x: &Matrix,
    y: &[f64],
    rows: Vec<u32>,
    criterion: SplitCriterion,
    params: &TreeParams,
    rng: &mut R,
) -> Result<Tree> {
    if rows.is_empty() || x.n_rows() == 0 {
        return Err(Error::Model("cannot fit a tree on empty input".into()));
    }
    if x.n_rows() != y.len() {
        return Err(Error::Model(format!(
            "{} feature rows but {} targets",
            x.n_rows(),
            y.len()
        )));
    }
    let mut nodes: Vec<TreeNode> = Vec::new();
    let mut scratch = Vec::with_capacity(rows.len());
    // (node slot, rows, depth)
    let mut stack = vec![(0usize, rows, 0usize)];
    nodes.push(TreeNode::Leaf {
        rows: Vec::new(),
        value: 0.0,
    });
    while let Some((slot, rows, depth)) = stack.pop() {
        let first = y[rows[0] as usize];
        let pure = rows.iter().all(|&r| y[r as usize] == first);
        let can_split = !pure
            && rows.len() >= 2 * params.min_leaf_size.max(1)
            && params.max_depth.is_none_or(|m| depth < m);
        let split = if can_split {
            best_split(x, y, &rows, criterion, params, rng, &mut scratch)
        } else {
            None
        };
        match split {
            Some(c) => {
                let (l, r): (Vec<u32>, Vec<u32>) = rows
                    .iter()
                    .partition(|&&i| x.get(i as usize, c.feature) <= c.threshold);
                let left = nodes.len();
                let right = left + 1;
                let placeholder = || TreeNode::Leaf {
                    rows: Vec::new(),
                    value: 0.0,
                };
                nodes.push(placeholder());
                nodes.push(placeholder());
                nodes[slot] = TreeNode::Split {
                    feature: c.feature,
                    threshold: c.threshold,
                    left: left as u32,
                    right: right as u32,
                };
                stack.push((right, r, depth + 1));
                stack.push((left, l, depth + 1));
            }
            None => {
                let value = rows.iter().map(|&r| y[r as usize]).sum::<f64>() / rows.len() as f64;
                nodes[slot] = TreeNode::Leaf { rows, value };
            }
        }
    }
    Ok(Tree { nodes })
}
