//! Repeated stratified train/test splits and bootstrap coefficient stability.

use ndarray::{ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::roc::{auc, roc_curve, RocPoint};
use super::{select_thresholds, sweep, MetricCurves, ThresholdSelection};
use crate::error::{Error, Result};
use crate::models::cv::cv_lambda;
use crate::models::sampling::{stratified_bootstrap, stratified_split};
use crate::models::{train, LrProblem, Method, Selection, TrainSettings};
use crate::rng::{derive_seed, stream, Purpose};

fn take<T: Copy>(v: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| v[i]).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitResult {
    pub split: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub test_positives: usize,
    pub auc: f64,
    pub oracle_auc: Option<f64>,
    pub selection: Selection,
    pub roc: Vec<RocPoint>,
    #[serde(skip)]
    pub curves: MetricCurves,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleReport {
    pub method: Method,
    pub n_splits: usize,
    pub test_fraction: f64,
    pub thetas: Vec<f64>,
    pub mean: MetricCurves,
    pub std: MetricCurves,
    /// Threshold maximizers of the mean curves.
    pub selection: ThresholdSelection,
    pub aucs: Vec<f64>,
    pub mean_auc: f64,
    pub oracle_aucs: Option<Vec<f64>>,
    pub splits: Vec<SplitResult>,
}

/// Trains on a stratified `1 − test_fraction` share of rows (with internal
/// cross-validation) and sweeps θ on the rest, `n_splits` times. `oracle`
/// optionally gives reference scores whose test AUC is recorded per split.
#[allow(clippy::too_many_arguments)]
pub fn ensemble_experiment(
    x: ArrayView2<f64>,
    y: &[u8],
    method: Method,
    settings: &TrainSettings,
    n_splits: usize,
    test_fraction: f64,
    thetas: &[f64],
    oracle: Option<&[f64]>,
    seed: u64,
) -> Result<EnsembleReport> {
    if n_splits == 0 {
        return Err(Error::InvalidInput("need at least one split".into()));
    }
    if y.len() != x.nrows() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            got: y.len(),
        });
    }
    if let Some(o) = oracle {
        if o.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: y.len(),
                got: o.len(),
            });
        }
    }
    if thetas.is_empty() {
        return Err(Error::InvalidInput("empty θ grid".into()));
    }
    let splits: Vec<SplitResult> = (0..n_splits)
        .into_par_iter()
        .map(|s| {
            let split_seed = derive_seed(seed, Purpose::Split, s as u64);
            let (tr, te) = stratified_split(y, test_fraction, &mut stream(split_seed, Purpose::Split, 0))?;
            let xt = x.select(Axis(0), &tr);
            let (model, selection) = train(method, xt.view(), &take(y, &tr), settings, split_seed)?;
            let yv = take(y, &te);
            let scores = model.predict_proba(x.select(Axis(0), &te).view())?;
            Ok(SplitResult {
                split: s,
                n_train: tr.len(),
                n_test: te.len(),
                test_positives: yv.iter().filter(|&&v| v == 1).count(),
                auc: auc(&yv, &scores)?,
                oracle_auc: oracle.map(|o| auc(&yv, &take(o, &te))).transpose()?,
                selection,
                roc: roc_curve(&yv, &scores)?,
                curves: sweep(&yv, &scores, thetas)?,
            })
        })
        .collect::<Result<_>>()?;
    let curves: Vec<MetricCurves> = splits.iter().map(|s| s.curves.clone()).collect();
    let (mean, std) = MetricCurves::mean_std(&curves);
    let aucs: Vec<f64> = splits.iter().map(|s| s.auc).collect();
    Ok(EnsembleReport {
        method,
        n_splits,
        test_fraction,
        selection: select_thresholds(thetas, &mean),
        thetas: thetas.to_vec(),
        mean,
        std,
        mean_auc: aucs.iter().sum::<f64>() / n_splits as f64,
        aucs,
        oracle_aucs: oracle.map(|_| splits.iter().filter_map(|s| s.oracle_auc).collect()),
        splits,
    })
}

/// How a coefficient on the original scale is put on a common footing.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientScaling {
    /// β̂ⱼ / sⱼ with sⱼ the predictor's sample standard deviation.
    #[default]
    DivideBySd,
    /// β̂ⱼ · sⱼ, the effect of a one-sd change.
    MultiplyBySd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSummary {
    pub predictor: String,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub selection_frequency: f64,
    pub zero_fraction: f64,
    pub stable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapReport {
    pub b: usize,
    pub scaling: CoefficientScaling,
    pub stability_threshold: f64,
    pub predictors: Vec<CoefficientSummary>,
    /// λ chosen per resample.
    pub lambdas: Vec<f64>,
    /// Scaled coefficients, one row per resample.
    pub draws: Vec<Vec<f64>>,
}

impl BootstrapReport {
    pub fn stable(&self) -> impl Iterator<Item = &CoefficientSummary> {
        self.predictors.iter().filter(|p| p.stable)
    }
}

/// Linear-interpolation sample quantile (Hyndman–Fan type 7).
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn sample_sd(col: ndarray::ArrayView1<f64>) -> f64 {
    let n = col.len() as f64;
    let m = col.sum() / n;
    (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

pub const STABILITY_THRESHOLD: f64 = 0.9;

/// Fits ℓ1 logistic regression with a cross-validated λ on `b` stratified
/// bootstrap resamples and summarizes each predictor's coefficients.
#[allow(clippy::too_many_arguments)]
pub fn bootstrap_coefficients(
    x: ArrayView2<f64>,
    names: &[String],
    y: &[u8],
    b: usize,
    lambdas: &[f64],
    k_folds: usize,
    scaling: CoefficientScaling,
    seed: u64,
) -> Result<BootstrapReport> {
    if names.len() != x.ncols() {
        return Err(Error::DimensionMismatch {
            expected: x.ncols(),
            got: names.len(),
        });
    }
    if b == 0 {
        return Err(Error::InvalidInput("need at least one resample".into()));
    }
    let sd: Vec<f64> = x.columns().into_iter().map(sample_sd).collect();
    let fits: Vec<(f64, Vec<f64>)> = (0..b)
        .into_par_iter()
        .map(|i| {
            let idx = stratified_bootstrap(y, &mut stream(seed, Purpose::Bootstrap, i as u64))?;
            let xb = x.select(Axis(0), &idx);
            let yb = take(y, &idx);
            let cv = cv_lambda(xb.view(), &yb, lambdas, k_folds, derive_seed(seed, Purpose::Bootstrap, i as u64))?;
            let m = LrProblem::new(xb.view(), &yb)?.fit(cv.lambda)?;
            let (_, beta) = m.coefficients();
            let scaled = beta
                .iter()
                .zip(&sd)
                .map(|(&c, &s)| match scaling {
                    _ if c == 0.0 => 0.0,
                    CoefficientScaling::DivideBySd if s > 0.0 => c / s,
                    CoefficientScaling::DivideBySd => 0.0,
                    CoefficientScaling::MultiplyBySd => c * s,
                })
                .collect();
            Ok((cv.lambda, scaled))
        })
        .collect::<Result<_>>()?;
    let predictors = names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let mut v: Vec<f64> = fits.iter().map(|f| f.1[j]).collect();
            let nonzero = v.iter().filter(|c| **c != 0.0).count() as f64 / b as f64;
            v.sort_by(f64::total_cmp);
            CoefficientSummary {
                predictor: name.clone(),
                median: quantile(&v, 0.5),
                q1: quantile(&v, 0.25),
                q3: quantile(&v, 0.75),
                selection_frequency: nonzero,
                zero_fraction: 1.0 - nonzero,
                stable: nonzero >= STABILITY_THRESHOLD,
            }
        })
        .collect();
    let (lambdas, draws) = fits.into_iter().unzip();
    Ok(BootstrapReport {
        b,
        scaling,
        stability_threshold: STABILITY_THRESHOLD,
        predictors,
        lambdas,
        draws,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn type7_quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.5), 2.5);
        assert_eq!(quantile(&v, 0.25), 1.75);
        assert_eq!(quantile(&v, 0.75), 3.25);
        assert_eq!(quantile(&[7.0], 0.3), 7.0);
    }
}
