//! Bagged regression forests and gradient-boosted regression trees.

use ndarray::ArrayView2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sampling::bootstrap;
use super::tree::{Columns, RegressionTree, TreeParams};
use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};

/// Shared hyperparameters of both tree ensembles. `learn_rate` is ignored
/// by the forest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeHparams {
    pub n_cycles: usize,
    pub learn_rate: f64,
    pub min_leaf: usize,
    pub max_splits: usize,
}

impl TreeHparams {
    fn validate(&self) -> Result<()> {
        if self.min_leaf == 0 {
            return Err(Error::InvalidInput("minimum leaf size must be at least 1".into()));
        }
        if !(self.learn_rate > 0.0 && self.learn_rate <= 1.0) {
            return Err(Error::InvalidInput(format!("learn rate {} outside (0, 1]", self.learn_rate)));
        }
        Ok(())
    }

    fn tree_params(&self) -> TreeParams {
        TreeParams {
            min_leaf: self.min_leaf,
            max_splits: self.max_splits,
        }
    }
}

fn response(y: &[u8], n: usize) -> Result<Vec<f64>> {
    if y.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: y.len(),
        });
    }
    if let Some(v) = y.iter().find(|&&v| v > 1) {
        return Err(Error::InvalidInput(format!("response value {v} is not binary")));
    }
    Ok(y.iter().map(|&v| f64::from(v)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<RegressionTree>,
    /// Training rows drawn for each tree.
    pub samples: Vec<Vec<usize>>,
    pub hparams: TreeHparams,
    pub mtry: usize,
    pub n_features: usize,
}

/// Features tried per split: ⌈p/3⌉.
pub fn default_mtry(p: usize) -> usize {
    p.div_ceil(3).max(1)
}

pub fn fit_forest(x: ArrayView2<f64>, y: &[u8], hp: &TreeHparams, seed: u64) -> Result<ForestModel> {
    hp.validate()?;
    if hp.n_cycles == 0 {
        return Err(Error::InvalidInput("a forest needs at least one tree".into()));
    }
    let n = x.nrows();
    let yf = response(y, n)?;
    if n < 2 * hp.min_leaf {
        return Err(Error::InvalidInput(format!(
            "{n} rows cannot fill two leaves of {} rows",
            hp.min_leaf
        )));
    }
    let cols = Columns::new(x)?;
    let mtry = default_mtry(cols.n_features());
    let params = hp.tree_params();
    let fitted: Vec<(RegressionTree, Vec<usize>)> = (0..hp.n_cycles)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream(seed, Purpose::Tree, t as u64);
            let rows = bootstrap(n, &mut rng);
            let tree = RegressionTree::fit(&cols, &yf, &rows, &params, Some((mtry, &mut rng)))?;
            Ok((tree, rows))
        })
        .collect::<Result<_>>()?;
    let (trees, samples) = fitted.into_iter().unzip();
    Ok(ForestModel {
        trees,
        samples,
        hparams: *hp,
        mtry,
        n_features: cols.n_features(),
    })
}

impl ForestModel {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict_row(x)).sum::<f64>() / self.trees.len() as f64
    }

    /// Weight of each training row in the prediction at `x`: every tree gives
    /// its leaf members (with bootstrap multiplicity) equal shares, and trees
    /// are averaged. The weights sum to one and reproduce the prediction.
    pub fn training_weights(&self, x_train: ArrayView2<f64>, x: &[f64]) -> Vec<f64> {
        let mut w = vec![0.0; x_train.nrows()];
        let m = self.trees.len() as f64;
        for (tree, rows) in self.trees.iter().zip(&self.samples) {
            let target = tree.leaf_index(x);
            let members: Vec<usize> = rows
                .iter()
                .copied()
                .filter(|&i| tree.leaf_index(&x_train.row(i).to_vec()) == target)
                .collect();
            for &i in &members {
                w[i] += 1.0 / (members.len() as f64 * m);
            }
        }
        w
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbrtModel {
    pub f0: f64,
    pub trees: Vec<RegressionTree>,
    pub learn_rate: f64,
    pub hparams: TreeHparams,
    pub stop_threshold: f64,
    /// Training MSE after 0, 1, …, M trees.
    pub train_mse: Vec<f64>,
    pub n_features: usize,
}

pub const DEFAULT_STOP_THRESHOLD: f64 = 1e-6;

/// Least-squares boosting: `F₀ = ȳ`, each tree fits the current residuals
/// with leaf means, `F_m = F_{m−1} + ν·tree_m`. Stops after `n_cycles` trees
/// or once the training MSE improves by less than `stop_threshold`.
pub fn fit_gbrt(x: ArrayView2<f64>, y: &[u8], hp: &TreeHparams, stop_threshold: f64) -> Result<GbrtModel> {
    hp.validate()?;
    let n = x.nrows();
    if n == 0 {
        return Err(Error::InvalidInput("no training rows".into()));
    }
    let yf = response(y, n)?;
    let cols = Columns::new(x)?;
    let f0 = yf.iter().sum::<f64>() / n as f64;
    let mut f = vec![f0; n];
    let mse = |f: &[f64]| f.iter().zip(&yf).map(|(a, b)| (b - a).powi(2)).sum::<f64>() / n as f64;
    let mut train_mse = vec![mse(&f)];
    let mut trees = Vec::new();
    let rows: Vec<usize> = (0..n).collect();
    let params = hp.tree_params();
    for _ in 0..hp.n_cycles {
        let resid: Vec<f64> = yf.iter().zip(&f).map(|(a, b)| a - b).collect();
        let tree = RegressionTree::fit::<rand_chacha::ChaCha8Rng>(&cols, &resid, &rows, &params, None)?;
        let mut buf = vec![0.0; cols.n_features()];
        let next: Vec<f64> = (0..n)
            .map(|i| {
                cols.row_into(i, &mut buf);
                f[i] + hp.learn_rate * tree.predict_row(&buf)
            })
            .collect();
        let prev = *train_mse.last().expect("initial MSE");
        let cur = mse(&next);
        if cur > prev {
            // only rounding can make a leaf-mean update worse; keep F unchanged
            break;
        }
        trees.push(tree);
        f = next;
        train_mse.push(cur);
        if prev - cur < stop_threshold {
            break;
        }
    }
    Ok(GbrtModel {
        f0,
        trees,
        learn_rate: hp.learn_rate,
        hparams: *hp,
        stop_threshold,
        train_mse,
        n_features: cols.n_features(),
    })
}

impl GbrtModel {
    /// Unclamped boosted regression output.
    pub fn raw_row(&self, x: &[f64]) -> f64 {
        self.trees
            .iter()
            .fold(self.f0, |acc, t| acc + self.learn_rate * t.predict_row(x))
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.raw_row(x).clamp(0.0, 1.0)
    }
}
