use serde::{Deserialize, Serialize};

use super::{check_dim, grow_forest, ForestHyperparams, Matrix, SplitCriterion, Tree};
use crate::error::{Error, Result};

/// Binary random-forest classifier with averaged leaf frequencies as
/// probability estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbClassifier {
    pub hyper: ForestHyperparams,
    pub n_features: usize,
    pub trees: Vec<Tree>,
    /// Out-of-bag accuracy; `None` without bootstrap or when no row was ever out of bag.
    pub oob_accuracy: Option<f64>,
}

impl ProbClassifier {
    /// Probability pair `(p(false), p(true))`.
    pub fn predict_proba(&self, x: &[f64]) -> Result<[f64; 2]> {
        check_dim(self.n_features, x)?;
        let p1 = self.trees.iter().map(|t| t.leaf(x).1).sum::<f64>() / self.trees.len() as f64;
        Ok([1.0 - p1, p1])
    }
}

/// Fits a bootstrap forest on binary labels. Both classes must be present.
pub fn fit_classifier(x: &Matrix, y: &[bool], hyper: &ForestHyperparams) -> Result<ProbClassifier> {
    if x.n_rows() == 0 {
        return Err(Error::Model("cannot fit a classifier on empty input".into()));
    }
    if x.n_rows() != y.len() {
        return Err(Error::Model(format!(
            "{} feature rows but {} labels",
            x.n_rows(),
            y.len()
        )));
    }
    let positives = y.iter().filter(|&&v| v).count();
    if positives == 0 || positives == y.len() {
        return Err(Error::Model("classifier labels contain a single class".into()));
    }
    let targets: Vec<f64> = y.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect();
    let grown = grow_forest(x, &targets, SplitCriterion::Gini, hyper)?;

    let oob_accuracy = if hyper.bootstrap {
        let n = x.n_rows();
        let mut sum = vec![0.0; n];
        let mut votes = vec![0u32; n];
        let mut in_bag = vec![false; n];
        for (tree, rows) in &grown {
            in_bag.iter_mut().for_each(|b| *b = false);
            for &r in rows {
                in_bag[r as usize] = true;
            }
            for i in (0..n).filter(|&i| !in_bag[i]) {
                sum[i] += tree.leaf(x.row(i)).1;
                votes[i] += 1;
            }
        }
        let scored: Vec<usize> = (0..n).filter(|&i| votes[i] > 0).collect();
        (!scored.is_empty()).then(|| {
            let hits = scored
                .iter()
                .filter(|&&i| (sum[i] / votes[i] as f64 > 0.5) == y[i])
                .count();
            hits as f64 / scored.len() as f64
        })
    } else {
        None
    };

    Ok(ProbClassifier {
        hyper: *hyper,
        n_features: x.n_cols(),
        trees: grown.into_iter().map(|(t, _)| t).collect(),
        oob_accuracy,
    })
}
