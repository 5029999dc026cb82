use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_dim, grow_forest, ForestHyperparams, Matrix, SplitCriterion, Tree};
use crate::error::{Error, Result};

/// Slack when comparing the accumulated CDF against `q`; absorbs rounding
/// in sums of `1 / (trees * leaf size)` terms.
const CDF_EPS: f64 = 1e-12;

/// Quantile regression forest.
///
/// Leaves keep the training rows that reached them. For an input `x`, row
/// `i` gets weight `(1 / T) * sum_t count_t(i) / |leaf_t(x)|`, and the
/// conditional distribution is the weighted empirical distribution of the
/// stored targets. Splits may be grown on `ln(1 + y)` while the stored and
/// returned values stay on the original scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileForest {
    pub hyper: ForestHyperparams,
    pub n_features: usize,
    pub log_target: bool,
    pub targets: Vec<f64>,
    pub trees: Vec<Tree>,
}

impl QuantileForest {
    /// Weighted support `(y, w)` at `x`, unsorted, possibly with repeated `y`.
    pub fn weights_into(&self, x: &[f64], out: &mut Vec<(f64, f64)>) -> Result<()> {
        check_dim(self.n_features, x)?;
        out.clear();
        let nt = self.trees.len() as f64;
        for tree in &self.trees {
            let (rows, _) = tree.leaf(x);
            let w = 1.0 / (nt * rows.len() as f64);
            out.extend(rows.iter().map(|&r| (self.targets[r as usize], w)));
        }
        Ok(())
    }

    /// Generalized inverse of the weighted CDF: the smallest support value
    /// `y` with `F(y | x) >= q`.
    pub fn quantile(&self, x: &[f64], q: f64) -> Result<f64> {
        let mut buf = Vec::new();
        self.quantile_with(x, q, &mut buf)
    }

    /// [`QuantileForest::quantile`] with a caller-owned scratch buffer.
    pub fn quantile_with(&self, x: &[f64], q: f64, buf: &mut Vec<(f64, f64)>) -> Result<f64> {
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::invalid("q", format!("quantile level {q} outside [0, 1]")));
        }
        self.weights_into(x, buf)?;
        buf.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
        let mut cum = 0.0;
        for i in 0..buf.len() {
            cum += buf[i].1;
            let run_ends = i + 1 == buf.len() || buf[i + 1].0 != buf[i].0;
            if run_ends && cum >= q - CDF_EPS {
                return Ok(buf[i].0);
            }
        }
        Ok(buf[buf.len() - 1].0)
    }

    /// Draws `u ~ U(0, 1)` and returns the `u`-quantile at `x`.
    pub fn sample<R: Rng>(&self, x: &[f64], rng: &mut R, buf: &mut Vec<(f64, f64)>) -> Result<f64> {
        let u: f64 = rng.random();
        self.quantile_with(x, u, buf)
    }

    pub fn min_target(&self) -> f64 {
        self.targets.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max_target(&self) -> f64 {
        self.targets.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Fits a quantile regression forest on non-negative targets.
pub fn fit_qrf(
    x: &Matrix,
    y: &[f64],
    hyper: &ForestHyperparams,
    log_target: bool,
) -> Result<QuantileForest> {
    if x.n_rows() == 0 || y.is_empty() {
        return Err(Error::Model("cannot fit a quantile forest on empty input".into()));
    }
    if x.n_rows() != y.len() {
        return Err(Error::Model(format!(
            "{} feature rows but {} targets",
            x.n_rows(),
            y.len()
        )));
    }
    if let Some(bad) = y.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
        return Err(Error::Model(format!("quantile forest target {bad} is not a non-negative number")));
    }
    let fit_scale: Vec<f64> = if log_target {
        y.iter().map(|v| v.ln_1p()).collect()
    } else {
        y.to_vec()
    };
    let grown = grow_forest(x, &fit_scale, SplitCriterion::Variance, hyper)?;
    Ok(QuantileForest {
        hyper: *hyper,
        n_features: x.n_cols(),
        log_target,
        targets: y.to_vec(),
        trees: grown.into_iter().map(|(t, _)| t).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::{MaxFeatures, TreeNode};
    use rand::SeedableRng;

    fn hyper(n_trees: usize, min_leaf: usize) -> ForestHyperparams {
        ForestHyperparams {
            n_trees,
            max_features: MaxFeatures::All,
            min_leaf_size: min_leaf,
            max_depth: None,
            bootstrap: true,
            seed: 21,
        }
    }

    fn single_leaf(targets: Vec<f64>) -> QuantileForest {
        let rows = (0..targets.len() as u32).collect();
        QuantileForest {
            hyper: hyper(1, 1),
            n_features: 1,
            log_target: false,
            targets,
            trees: vec![Tree {
                nodes: vec![TreeNode::Leaf { rows, value: 0.0 }],
            }],
        }
    }

    #[test]
    fn constant_target_every_quantile() {
        let x = Matrix::from_rows(&(0..30).map(|i| [i as f64]).collect::<Vec<_>>());
        let y = vec![7.0; 30];
        let f = fit_qrf(&x, &y, &hyper(10, 3), true).unwrap();
        for q in [0.0, 0.1, 0.5, 0.99, 1.0] {
            assert_eq!(f.quantile(&[4.0], q).unwrap(), 7.0);
        }
    }

    #[test]
    fn inverse_cdf_two_points() {
        let f = single_leaf(vec![2.0, 8.0]);
        assert_eq!(f.quantile(&[0.0], 0.25).unwrap(), 2.0);
        assert_eq!(f.quantile(&[0.0], 0.5).unwrap(), 2.0);
        assert_eq!(f.quantile(&[0.0], 0.51).unwrap(), 8.0);
        assert_eq!(f.quantile(&[0.0], 0.0).unwrap(), 2.0);
        assert_eq!(f.quantile(&[0.0], 1.0).unwrap(), 8.0);
    }

    #[test]
    fn single_leaf_median() {
        let f = single_leaf(vec![5.0, 1.0, 4.0, 2.0, 3.0]);
        assert_eq!(f.quantile(&[0.0], 0.5).unwrap(), 3.0);
        let f = single_leaf((0..100).map(f64::from).collect());
        // lower median under the inverse-CDF rule
        assert_eq!(f.quantile(&[0.0], 0.5).unwrap(), 49.0);
    }

    #[test]
    fn out_of_range_q_rejected() {
        let f = single_leaf(vec![1.0]);
        assert!(f.quantile(&[0.0], 1.5).is_err());
        assert!(f.quantile(&[0.0], -0.1).is_err());
    }

    #[test]
    fn step_function_median() {
        let x = Matrix::from_rows(&(0..200).map(|i| [(i as f64 - 100.0) / 10.0]).collect::<Vec<_>>());
        let y: Vec<f64> = (0..200).map(|i| if i < 100 { 0.0 } else { 10.0 }).collect();
        let f = fit_qrf(&x, &y, &hyper(50, 5), false).unwrap();
        assert_eq!(f.quantile(&[1.0], 0.5).unwrap(), 10.0);
        assert_eq!(f.quantile(&[-1.0], 0.5).unwrap(), 0.0);
    }

    #[test]
    fn constant_forest_samples_constant() {
        let x = Matrix::from_rows(&(0..20).map(|i| [i as f64]).collect::<Vec<_>>());
        let f = fit_qrf(&x, &[3.0; 20], &hyper(5, 2), true).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut buf = Vec::new();
        for _ in 0..100 {
            assert_eq!(f.sample(&[2.0], &mut rng, &mut buf).unwrap(), 3.0);
        }
    }

    #[test]
    fn negative_target_rejected() {
        let x = Matrix::from_rows(&[[0.0], [1.0]]);
        assert!(fit_qrf(&x, &[1.0, -1.0], &hyper(1, 1), false).is_err());
    }
}
