//! Ordinary least squares goodness of fit, used to screen indicators and radii.

use nalgebra::{DMatrix, DVector};
use ndarray::ArrayView2;

use crate::error::{Error, Result};

const RIDGE: f64 = 1e-8;

/// In-sample R² of an OLS fit with intercept. Columns are standardized and a
/// tiny ridge term keeps rank-deficient designs solvable.
pub fn ols_r2(x: ArrayView2<f64>, y: &[f64]) -> Result<f64> {
    let n = x.nrows();
    if y.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: y.len(),
        });
    }
    if n < 2 {
        return Err(Error::InvalidInput("OLS needs at least two rows".into()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("OLS inputs must be finite".into()));
    }
    let ym = y.iter().sum::<f64>() / n as f64;
    let sst: f64 = y.iter().map(|v| (v - ym).powi(2)).sum();
    if sst == 0.0 {
        return Err(Error::InvalidInput("response has zero variance".into()));
    }
    let mut cols = Vec::new();
    for col in x.columns() {
        let m = col.sum() / n as f64;
        let sd = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64).sqrt();
        if sd > 0.0 {
            cols.push(col.iter().map(|v| (v - m) / sd).collect::<Vec<f64>>());
        }
    }
    if cols.is_empty() {
        return Ok(0.0);
    }
    let p = cols.len();
    let z = DMatrix::from_fn(n, p, |i, j| cols[j][i]);
    let yc = DVector::from_iterator(n, y.iter().map(|v| v - ym));
    let mut gram = z.transpose() * &z;
    for j in 0..p {
        gram[(j, j)] += RIDGE * n as f64;
    }
    let rhs = z.transpose() * &yc;
    let beta = gram
        .cholesky()
        .ok_or_else(|| Error::InvalidInput("normal equations are not positive definite".into()))?
        .solve(&rhs);
    let resid = yc - z * beta;
    Ok(1.0 - resid.norm_squared() / sst)
}
