//! ROC staircase and AUC with tied scores grouped.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    /// Scores at or above this are predicted positive.
    pub threshold: f64,
    pub fall_out: f64,
    pub sensitivity: f64,
}

fn check(y: &[u8], scores: &[f64]) -> Result<(u64, u64)> {
    if y.len() != scores.len() {
        return Err(Error::DimensionMismatch {
            expected: y.len(),
            got: scores.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidInput("scores contain NaN".into()));
    }
    let mut pos = 0;
    for &v in y {
        match v {
            0 => {}
            1 => pos += 1,
            _ => return Err(Error::InvalidInput(format!("label {v} is not binary"))),
        }
    }
    let neg = y.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::InvalidInput("ROC needs both classes".into()));
    }
    Ok((pos, neg))
}

/// Cumulative (negatives, positives) counts per distinct score, highest first.
fn groups(y: &[u8], scores: &[f64]) -> Vec<(f64, u64, u64)> {
    let mut idx: Vec<usize> = (0..y.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut out: Vec<(f64, u64, u64)> = Vec::new();
    for i in idx {
        let s = scores[i];
        match out.last_mut() {
            Some(g) if g.0 == s => {
                if y[i] == 1 {
                    g.2 += 1
                } else {
                    g.1 += 1
                }
            }
            _ => out.push((s, u64::from(y[i] == 0), u64::from(y[i] == 1))),
        }
    }
    out
}

/// ROC points from (0, 0) to (1, 1) as the threshold falls through the
/// distinct scores.
pub fn roc_curve(y: &[u8], scores: &[f64]) -> Result<Vec<RocPoint>> {
    let (p, n) = check(y, scores)?;
    let mut pts = vec![RocPoint {
        threshold: f64::INFINITY,
        fall_out: 0.0,
        sensitivity: 0.0,
    }];
    let (mut fp, mut tp) = (0, 0);
    for (s, gn, gp) in groups(y, scores) {
        fp += gn;
        tp += gp;
        pts.push(RocPoint {
            threshold: s,
            fall_out: fp as f64 / n as f64,
            sensitivity: tp as f64 / p as f64,
        });
    }
    Ok(pts)
}

/// Trapezoidal area under the ROC curve, accumulated in integer counts.
pub fn auc(y: &[u8], scores: &[f64]) -> Result<f64> {
    let (p, n) = check(y, scores)?;
    let mut tp_before: u128 = 0;
    let mut twice_area: u128 = 0;
    for (_, gn, gp) in groups(y, scores) {
        twice_area += gn as u128 * (2 * tp_before + gp as u128);
        tp_before += gp as u128;
    }
    Ok(twice_area as f64 / (2.0 * p as f64 * n as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extremes() {
        assert_eq!(auc(&[0, 0, 1, 1], &[0.1, 0.2, 0.8, 0.9]).unwrap(), 1.0);
        assert_eq!(auc(&[0, 0, 1, 1], &[0.9, 0.8, 0.2, 0.1]).unwrap(), 0.0);
        assert_eq!(auc(&[0, 1, 0, 1], &[0.5; 4]).unwrap(), 0.5);
        assert!(auc(&[1, 1], &[0.1, 0.2]).is_err());
    }

    #[test]
    fn curve_is_a_staircase() {
        let y = [1, 0, 1, 0, 0, 1];
        let s = [0.9, 0.8, 0.8, 0.3, 0.2, 0.1];
        let pts = roc_curve(&y, &s).unwrap();
        assert_eq!(pts.first().unwrap().fall_out, 0.0);
        let last = pts.last().unwrap();
        assert_eq!((last.fall_out, last.sensitivity), (1.0, 1.0));
        assert!(pts.windows(2).all(|w| w[1].fall_out >= w[0].fall_out && w[1].sensitivity >= w[0].sensitivity));
        // concordant pairs: (0.9 beats all 3 negatives) + (0.8 ties one, beats two) + (0.1 beats none)
        let expect = (3.0 + 0.5 + 2.0) / 9.0;
        assert!((auc(&y, &s).unwrap() - expect).abs() < 1e-15);
    }
}
