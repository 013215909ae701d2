//! Classification metrics, threshold sweeps, null-model baselines, split
//! ensembles, AUC comparison and bootstrap coefficient stability.

pub mod experiment;
pub mod roc;
pub mod stats;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::classify;

pub use experiment::{bootstrap_coefficients, ensemble_experiment, BootstrapReport, EnsembleReport};
pub use roc::{auc, roc_curve, RocPoint};
pub use stats::{compare_auc, AucComparison};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn n(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

pub fn confusion(y: &[u8], scores: &[f64], theta: f64) -> Result<ConfusionMatrix> {
    if y.len() != scores.len() {
        return Err(Error::DimensionMismatch {
            expected: y.len(),
            got: scores.len(),
        });
    }
    let mut c = ConfusionMatrix::default();
    for (&t, &s) in y.iter().zip(scores) {
        match (t, classify(s, theta)) {
            (1, 1) => c.tp += 1,
            (1, _) => c.fn_ += 1,
            (0, 1) => c.fp += 1,
            (0, _) => c.tn += 1,
            (v, _) => return Err(Error::InvalidInput(format!("label {v} is not binary"))),
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub accuracy: f64,
    pub precision: f64,
    pub sensitivity: f64,
    pub fall_out: f64,
    pub f_score: f64,
    pub mcc: f64,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// The six measures; any zero denominator yields 0.
pub fn metrics(c: &ConfusionMatrix) -> MetricSet {
    let (tp, fp, tn, fn_) = (c.tp as f64, c.fp as f64, c.tn as f64, c.fn_ as f64);
    let precision = ratio(tp, tp + fp);
    let sensitivity = ratio(tp, tp + fn_);
    let den = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
    MetricSet {
        accuracy: ratio(tp + tn, c.n() as f64),
        precision,
        sensitivity,
        fall_out: ratio(fp, fp + tn),
        f_score: ratio(2.0 * sensitivity * precision, sensitivity + precision),
        mcc: ratio(tp * tn - fp * fn_, den.sqrt()),
    }
}

/// Thresholds `k/100` for `k = 0..=99`.
pub fn theta_grid() -> Vec<f64> {
    (0..100).map(|k| k as f64 / 100.0).collect()
}

/// Expected measures of a classifier whose scores are Uniform(0, 1) and
/// independent of the truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NullExpectation {
    pub theta: f64,
    pub prevalence: f64,
    pub metrics: MetricSet,
    /// The precision and sensitivity expressions as they are commonly
    /// tabulated for this baseline, with the two labels exchanged.
    pub tabulated_precision: f64,
    pub tabulated_sensitivity: f64,
}

pub fn null_expectations(theta: f64, prevalence: f64) -> Result<NullExpectation> {
    if !(0.0..1.0).contains(&theta) || !(prevalence > 0.0 && prevalence < 1.0) {
        return Err(Error::InvalidInput(format!("θ = {theta}, prevalence = {prevalence} out of range")));
    }
    let (pi, q) = (prevalence, 1.0 - theta);
    Ok(NullExpectation {
        theta,
        prevalence,
        metrics: MetricSet {
            accuracy: pi + (1.0 - 2.0 * pi) * theta,
            precision: pi,
            sensitivity: q,
            fall_out: q,
            f_score: 2.0 * pi * q / (pi + q),
            mcc: 0.0,
        },
        tabulated_precision: q,
        tabulated_sensitivity: pi,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricCurves {
    pub accuracy: Vec<f64>,
    pub precision: Vec<f64>,
    pub sensitivity: Vec<f64>,
    pub fall_out: Vec<f64>,
    pub f_score: Vec<f64>,
    pub mcc: Vec<f64>,
}

impl MetricCurves {
    fn push(&mut self, m: &MetricSet) {
        self.accuracy.push(m.accuracy);
        self.precision.push(m.precision);
        self.sensitivity.push(m.sensitivity);
        self.fall_out.push(m.fall_out);
        self.f_score.push(m.f_score);
        self.mcc.push(m.mcc);
    }

    pub fn at(&self, k: usize) -> MetricSet {
        MetricSet {
            accuracy: self.accuracy[k],
            precision: self.precision[k],
            sensitivity: self.sensitivity[k],
            fall_out: self.fall_out[k],
            f_score: self.f_score[k],
            mcc: self.mcc[k],
        }
    }

    fn series(&self) -> [&Vec<f64>; 6] {
        [
            &self.accuracy,
            &self.precision,
            &self.sensitivity,
            &self.fall_out,
            &self.f_score,
            &self.mcc,
        ]
    }

    fn from_series(s: [Vec<f64>; 6]) -> Self {
        let [accuracy, precision, sensitivity, fall_out, f_score, mcc] = s;
        Self {
            accuracy,
            precision,
            sensitivity,
            fall_out,
            f_score,
            mcc,
        }
    }

    /// Element-wise mean and sample standard deviation over `curves`.
    pub fn mean_std(curves: &[MetricCurves]) -> (MetricCurves, MetricCurves) {
        let m = curves.len() as f64;
        let len = curves.first().map_or(0, |c| c.accuracy.len());
        let mut means: [Vec<f64>; 6] = Default::default();
        let mut sds: [Vec<f64>; 6] = Default::default();
        for s in 0..6 {
            for k in 0..len {
                let vals: Vec<f64> = curves.iter().map(|c| c.series()[s][k]).collect();
                let mean = vals.iter().sum::<f64>() / m;
                let var = if m > 1.0 {
                    vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0)
                } else {
                    0.0
                };
                means[s].push(mean);
                sds[s].push(var.sqrt());
            }
        }
        (Self::from_series(means), Self::from_series(sds))
    }
}

/// Metrics at every θ of `thetas`.
pub fn sweep(y: &[u8], scores: &[f64], thetas: &[f64]) -> Result<MetricCurves> {
    let mut c = MetricCurves::default();
    for &t in thetas {
        c.push(&metrics(&confusion(y, scores, t)?));
    }
    Ok(c)
}

/// Index of the first maximum.
pub fn argmax_first(v: &[f64]) -> usize {
    let mut best = 0;
    for (k, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = k;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSelection {
    pub theta_mcc_max: f64,
    pub theta_f_max: f64,
    pub at_mcc_max: MetricSet,
    pub at_f_max: MetricSet,
}

pub fn select_thresholds(thetas: &[f64], curves: &MetricCurves) -> ThresholdSelection {
    let km = argmax_first(&curves.mcc);
    let kf = argmax_first(&curves.f_score);
    ThresholdSelection {
        theta_mcc_max: thetas[km],
        theta_f_max: thetas[kf],
        at_mcc_max: curves.at(km),
        at_f_max: curves.at(kf),
    }
}

/// Sweep the standard grid and pick the MCC and F-score maximizers
/// (smallest θ on ties).
pub fn sweep_and_select(y: &[u8], scores: &[f64]) -> Result<(ThresholdSelection, MetricCurves)> {
    let grid = theta_grid();
    let curves = sweep(y, scores, &grid)?;
    Ok((select_thresholds(&grid, &curves), curves))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_counted_confusion() {
        let c = confusion(&[1, 1, 0, 0], &[0.9, 0.2, 0.6, 0.1], 0.5).unwrap();
        assert_eq!((c.tp, c.fn_, c.fp, c.tn), (1, 1, 1, 1));
        let all = confusion(&[1, 0, 0], &[0.1, 0.2, 0.3], 0.0).unwrap();
        assert_eq!((all.fn_, all.tn), (0, 0));
        assert!(confusion(&[1], &[0.1, 0.2], 0.5).is_err());
    }

    #[test]
    fn table_formulas() {
        let m = metrics(&ConfusionMatrix { tp: 3, fp: 1, tn: 5, fn_: 1 });
        assert_eq!(m.accuracy, 0.8);
        assert_eq!(m.precision, 0.75);
        assert_eq!(m.sensitivity, 0.75);
        assert!((m.mcc - 14.0 / 24.0).abs() < 1e-15);
        assert!((m.f_score - 0.75).abs() < 1e-15);
        let none = metrics(&ConfusionMatrix { tp: 0, fp: 0, tn: 6, fn_: 2 });
        assert_eq!((none.mcc, none.precision, none.f_score), (0.0, 0.0, 0.0));
        let all = metrics(&ConfusionMatrix { tp: 1, fp: 3, tn: 0, fn_: 0 });
        assert_eq!((all.precision, all.sensitivity, all.accuracy), (0.25, 1.0, 0.25));
    }

    #[test]
    fn null_model_values() {
        assert_eq!(null_expectations(0.5, 0.25).unwrap().metrics.accuracy, 0.5);
        assert_eq!(null_expectations(0.0, 0.25).unwrap().metrics.accuracy, 0.25);
        let f0 = null_expectations(0.0, 0.25).unwrap().metrics.f_score;
        assert!((f0 - 0.4).abs() < 1e-15);
        for k in 0..100 {
            let t = k as f64 / 100.0;
            let e = null_expectations(t, 0.25).unwrap();
            assert!((e.metrics.f_score - (1.0 - t) / (2.5 - 2.0 * t)).abs() < 1e-12);
        }
        assert!(null_expectations(1.0, 0.25).is_err());
    }

    #[test]
    fn argmax_ties_and_boundary() {
        let mut v = vec![0.0; 100];
        v[30] = 0.7;
        v[40] = 0.7;
        assert_eq!(argmax_first(&v), 30);
        let decreasing: Vec<f64> = (0..100).map(|k| 1.0 - k as f64 / 100.0).collect();
        assert_eq!(argmax_first(&decreasing), 0);
        let g = theta_grid();
        assert_eq!(g.len(), 100);
        assert_eq!(g[34], 0.34);
        assert_eq!(g[99], 0.99);
    }
}
