//! Stratified k-fold selection of λ and of tree-ensemble hyperparameters.

use ndarray::{ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ensemble::{fit_forest, fit_gbrt, TreeHparams};
use super::logistic::LrProblem;
use super::sampling::stratified_folds;
use super::Method;
use crate::error::{Error, Result};
use crate::eval::roc::auc;
use crate::rng::{derive_seed, stream, Purpose};

/// Two selection scores closer than this count as tied.
pub const SELECTION_TIE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvLambda {
    pub lambda: f64,
    pub index: usize,
    /// Mean out-of-fold AUC per grid value.
    pub mean_auc: Vec<f64>,
}

/// Row indices of each fold's training and validation parts.
pub fn fold_partitions(y: &[u8], k: usize, seed: u64) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    let fold = stratified_folds(y, k, &mut stream(seed, Purpose::CvFolds, 0))?;
    Ok((0..k)
        .map(|f| {
            let (val, train): (Vec<usize>, Vec<usize>) = (0..y.len()).partition(|&i| fold[i] == f);
            (train, val)
        })
        .collect())
}

fn take(y: &[u8], idx: &[usize]) -> Vec<u8> {
    idx.iter().map(|&i| y[i]).collect()
}

/// λ maximizing the mean out-of-fold AUC; ties go to the larger λ.
pub fn cv_lambda(x: ArrayView2<f64>, y: &[u8], lambdas: &[f64], k: usize, seed: u64) -> Result<CvLambda> {
    if lambdas.is_empty() {
        return Err(Error::InvalidInput("empty λ grid".into()));
    }
    let parts = fold_partitions(y, k, seed)?;
    let per_fold: Vec<Vec<f64>> = parts
        .par_iter()
        .map(|(train, val)| {
            let prob = LrProblem::new(x.select(Axis(0), train).view(), &take(y, train))?;
            let path = prob.fit_path(lambdas)?;
            let xv = x.select(Axis(0), val);
            let yv = take(y, val);
            let rows: Vec<Vec<f64>> = xv.rows().into_iter().map(|r| r.to_vec()).collect();
            path.iter()
                .map(|m| {
                    let s: Vec<f64> = rows.iter().map(|r| m.linear_score(r)).collect();
                    auc(&yv, &s)
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let mean_auc: Vec<f64> = (0..lambdas.len())
        .map(|j| per_fold.iter().map(|f| f[j]).sum::<f64>() / k as f64)
        .collect();
    let best = mean_auc.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let index = (0..lambdas.len())
        .filter(|&j| mean_auc[j] >= best - SELECTION_TIE_EPS)
        .max_by(|&a, &b| lambdas[a].total_cmp(&lambdas[b]))
        .expect("non-empty grid");
    Ok(CvLambda {
        lambda: lambdas[index],
        index,
        mean_auc,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvTrees {
    pub hparams: TreeHparams,
    pub index: usize,
    pub mean_auc: Vec<f64>,
}

/// Grid search over tree hyperparameters with the same stratified folds as
/// `cv_lambda`; ties go to the earlier grid entry.
pub fn tune_tree_hparams(
    x: ArrayView2<f64>,
    y: &[u8],
    method: Method,
    grid: &[TreeHparams],
    k: usize,
    stop_threshold: f64,
    seed: u64,
) -> Result<CvTrees> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("empty hyperparameter grid".into()));
    }
    if method == Method::LrL1 {
        return Err(Error::InvalidInput("tree tuning needs a tree method".into()));
    }
    let parts = fold_partitions(y, k, seed)?;
    let mut mean_auc = Vec::with_capacity(grid.len());
    for (g, hp) in grid.iter().enumerate() {
        let aucs: Vec<f64> = parts
            .par_iter()
            .enumerate()
            .map(|(f, (train, val))| {
                let xt = x.select(Axis(0), train);
                let yt = take(y, train);
                let xv = x.select(Axis(0), val);
                let tree_seed = derive_seed(seed, Purpose::Tuning, (g * k + f) as u64);
                let s: Vec<f64> = match method {
                    Method::Rf => {
                        let m = fit_forest(xt.view(), &yt, hp, tree_seed)?;
                        xv.rows().into_iter().map(|r| m.predict_row(&r.to_vec())).collect()
                    }
                    _ => {
                        let m = fit_gbrt(xt.view(), &yt, hp, stop_threshold)?;
                        xv.rows().into_iter().map(|r| m.predict_row(&r.to_vec())).collect()
                    }
                };
                auc(&take(y, val), &s)
            })
            .collect::<Result<_>>()?;
        mean_auc.push(aucs.iter().sum::<f64>() / k as f64);
    }
    let best = mean_auc.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let index = mean_auc
        .iter()
        .position(|&a| a >= best - SELECTION_TIE_EPS)
        .expect("non-empty grid");
    Ok(CvTrees {
        hparams: grid[index],
        index,
        mean_auc,
    })
}
