//! Random forests: a probability-estimating binary classifier and a
//! quantile regression forest over a shared CART core.

mod classifier;
mod qrf;
mod tree;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, StreamRng};

pub use classifier::{fit_classifier, ProbClassifier};
pub use qrf::{fit_qrf, QuantileForest};
pub use tree::{fit_tree, Matrix, SplitCriterion, Tree, TreeNode, TreeParams};

/// Number of candidate features tried at each split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    /// `ceil(sqrt(d))`
    Sqrt,
    /// `ceil(d / 3)`
    Third,
    All,
    Count(usize),
    Fraction(f64),
}

impl MaxFeatures {
    pub fn resolve(&self, d: usize) -> Result<usize> {
        let m = match *self {
            MaxFeatures::Sqrt => (d as f64).sqrt().ceil() as usize,
            MaxFeatures::Third => d.div_ceil(3),
            MaxFeatures::All => d,
            MaxFeatures::Count(c) => c,
            MaxFeatures::Fraction(f) => {
                if !(f > 0.0 && f <= 1.0) {
                    return Err(Error::invalid("max_features", "fraction must lie in (0, 1]"));
                }
                (f * d as f64).ceil() as usize
            }
        };
        if m == 0 || m > d {
            return Err(Error::invalid(
                "max_features",
                format!("resolves to {m}, must lie in 1..={d}"),
            ));
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForestHyperparams {
    pub n_trees: usize,
    pub max_features: MaxFeatures,
    pub min_leaf_size: usize,
    #[serde(default)]
    pub max_depth: Option<usize>,
    pub bootstrap: bool,
    /// Overwritten by the run seed when fit through a model set.
    #[serde(default)]
    pub seed: u64,
}

impl ForestHyperparams {
    pub fn classifier_default() -> Self {
        Self {
            n_trees: 500,
            max_features: MaxFeatures::Sqrt,
            min_leaf_size: 5,
            max_depth: None,
            bootstrap: true,
            seed: 0,
        }
    }

    pub fn regression_default() -> Self {
        Self {
            n_trees: 500,
            max_features: MaxFeatures::Third,
            min_leaf_size: 10,
            max_depth: None,
            bootstrap: true,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub(crate) fn tree_params(&self, d: usize) -> Result<TreeParams> {
        if self.n_trees == 0 {
            return Err(Error::invalid("n_trees", "must be at least 1"));
        }
        if self.min_leaf_size == 0 {
            return Err(Error::invalid("min_leaf_size", "must be at least 1"));
        }
        Ok(TreeParams {
            max_features: self.max_features.resolve(d)?,
            min_leaf_size: self.min_leaf_size,
            max_depth: self.max_depth,
        })
    }
}

/// Seed stream for tree `t`; depends only on the master seed and `t`.
pub(crate) fn tree_rng(seed: u64, t: usize) -> StreamRng {
    rng::stream(seed, &[0x7472_6565, t as u64])
}

/// In-bag rows for one tree: a bootstrap resample of size `n`, or all rows.
pub(crate) fn in_bag_rows<R: Rng>(n: usize, bootstrap: bool, rng: &mut R) -> Vec<u32> {
    if bootstrap {
        let mut rows: Vec<u32> = (0..n).map(|_| rng.random_range(0..n as u32)).collect();
        rows.sort_unstable();
        rows
    } else {
        (0..n as u32).collect()
    }
}

/// Fits `hyper.n_trees` trees, each on its own seed stream, in tree order.
pub(crate) fn grow_forest(
    x: &Matrix,
    y: &[f64],
    criterion: SplitCriterion,
    hyper: &ForestHyperparams,
) -> Result<Vec<(Tree, Vec<u32>)>> {
    let params = hyper.tree_params(x.n_cols())?;
    let n = x.n_rows();
    crate::par::map_range(hyper.n_trees, |t| {
        let mut rng = tree_rng(hyper.seed, t);
        let rows = in_bag_rows(n, hyper.bootstrap, &mut rng);
        let tree = fit_tree(x, y, rows.clone(), criterion, &params, &mut rng)?;
        Ok((tree, rows))
    })
    .into_iter()
    .collect()
}

pub(crate) fn check_dim(expected: usize, x: &[f64]) -> Result<()> {
    if x.len() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            got: x.len(),
        });
    }
    Ok(())
}
