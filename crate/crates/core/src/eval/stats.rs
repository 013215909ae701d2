//! Variance F-test followed by a pooled or Welch t-test on two AUC ensembles.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor, StudentsT};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanTest {
    Pooled,
    Welch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AucComparison {
    pub mean_a: f64,
    pub mean_b: f64,
    pub var_a: f64,
    pub var_b: f64,
    pub f_statistic: f64,
    pub f_test_p: f64,
    pub variances_differ: bool,
    pub test_used: MeanTest,
    pub t_statistic: f64,
    pub df: f64,
    pub mean_test_p: f64,
    pub means_differ: bool,
    pub alpha: f64,
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0))
}

fn two_sided_t(t: f64, df: f64) -> Result<f64> {
    if t == 0.0 {
        return Ok(1.0);
    }
    let d = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::InvalidInput(e.to_string()))?;
    Ok((2.0 * d.cdf(-t.abs())).min(1.0))
}

pub fn compare_auc(a: &[f64], b: &[f64], alpha: f64) -> Result<AucComparison> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InvalidInput("each ensemble needs at least two AUC values".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput(format!("α = {alpha} out of range")));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    if va == 0.0 && vb == 0.0 {
        return Err(Error::InvalidInput("both AUC ensembles have zero variance".into()));
    }

    let (f, f_test_p) = if va == 0.0 || vb == 0.0 {
        (if va == 0.0 { 0.0 } else { f64::INFINITY }, 0.0)
    } else {
        let f = va / vb;
        let d = FisherSnedecor::new(na - 1.0, nb - 1.0).map_err(|e| Error::InvalidInput(e.to_string()))?;
        let lower = d.cdf(f);
        (f, (2.0 * lower.min(1.0 - lower)).min(1.0))
    };
    let variances_differ = f_test_p < alpha;

    let (test_used, t, df) = if variances_differ {
        let (sa, sb) = (va / na, vb / nb);
        let se = (sa + sb).sqrt();
        let df = (sa + sb).powi(2) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
        (MeanTest::Welch, (ma - mb) / se, df)
    } else {
        let df = na + nb - 2.0;
        let sp = ((na - 1.0) * va + (nb - 1.0) * vb) / df;
        (MeanTest::Pooled, (ma - mb) / (sp * (1.0 / na + 1.0 / nb)).sqrt(), df)
    };
    let mean_test_p = two_sided_t(t, df)?;
    Ok(AucComparison {
        mean_a: ma,
        mean_b: mb,
        var_a: va,
        var_b: vb,
        f_statistic: f,
        f_test_p,
        variances_differ,
        test_used,
        t_statistic: t,
        df,
        mean_test_p,
        means_differ: mean_test_p < alpha,
        alpha,
    })
}
