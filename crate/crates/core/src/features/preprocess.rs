//! Median imputation, sparsity filtering and correlation pruning.

use serde::{Deserialize, Serialize};

use super::FeatureMatrix;
use crate::error::Result;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationGrouping {
    /// Repeatedly take the lowest-index column with a strong partner, grow a
    /// clique in which every pair exceeds the threshold, keep its first member.
    #[default]
    Clique,
    /// Keep the lowest-index member of each connected component.
    Component,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreprocessOptions {
    /// Columns with a missing fraction below this are median-imputed, others dropped.
    pub max_missing_fraction: f64,
    /// Columns with a zero fraction above this are dropped.
    pub max_zero_fraction: f64,
    pub max_abs_correlation: f64,
    pub grouping: CorrelationGrouping,
}

impl Default for PreprocessOptions {
    fn default() -> Self {
        Self {
            max_missing_fraction: 0.015,
            max_zero_fraction: 0.95,
            max_abs_correlation: 0.95,
            grouping: CorrelationGrouping::Clique,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum DropReason {
    Missing { fraction: f64 },
    Sparse { zero_fraction: f64 },
    Constant,
    Correlated { kept: String, r: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnDrop {
    pub name: String,
    #[serde(flatten)]
    pub reason: DropReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MedianImputation {
    pub name: String,
    pub n_missing: usize,
    pub median: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
    pub zero_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessReport {
    pub n_rows: usize,
    pub n_input_columns: usize,
    pub n_output_columns: usize,
    pub imputed: Vec<MedianImputation>,
    pub dropped: Vec<ColumnDrop>,
    pub stats: Vec<ColumnStats>,
}

impl PreprocessReport {
    pub fn count(&self, pred: impl Fn(&DropReason) -> bool) -> usize {
        self.dropped.iter().filter(|d| pred(&d.reason)).count()
    }
}

/// Median of finite values (mean of the two middle values for even counts).
pub fn median(values: &[f64]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

/// Pearson correlation; 0 when either input is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        (sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0)
    }
}

/// Columns centred and scaled to unit norm, so dot products are correlations.
fn unit_columns(cols: &[Vec<f64>]) -> Vec<Vec<f64>> {
    cols.iter()
        .map(|c| {
            let n = c.len() as f64;
            let m = c.iter().sum::<f64>() / n;
            let d: Vec<f64> = c.iter().map(|x| x - m).collect();
            let norm = d.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                vec![0.0; c.len()]
            } else {
                d.iter().map(|x| x / norm).collect()
            }
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>().clamp(-1.0, 1.0)
}

/// Indices (into `cols`) to drop, each with the index it was grouped under
/// and their correlation.
pub fn correlation_drops(cols: &[Vec<f64>], threshold: f64, grouping: CorrelationGrouping) -> Vec<(usize, usize, f64)> {
    let p = cols.len();
    let units = unit_columns(cols);
    let mut r = vec![vec![0.0; p]; p];
    for i in 0..p {
        for j in (i + 1)..p {
            let v = dot(&units[i], &units[j]);
            r[i][j] = v;
            r[j][i] = v;
        }
    }
    let edge = |i: usize, j: usize| r[i][j].abs() > threshold;
    let mut alive = vec![true; p];
    let mut drops = Vec::new();
    match grouping {
        CorrelationGrouping::Clique => loop {
            let seed = (0..p).find(|&i| alive[i] && (0..p).any(|j| j != i && alive[j] && edge(i, j)));
            let Some(i) = seed else { break };
            let mut clique = vec![i];
            for j in (i + 1)..p {
                if alive[j] && clique.iter().all(|&k| edge(k, j)) {
                    clique.push(j);
                }
            }
            for &j in &clique[1..] {
                alive[j] = false;
                drops.push((j, i, r[i][j]));
            }
        },
        CorrelationGrouping::Component => {
            let mut root: Vec<usize> = (0..p).collect();
            fn find(root: &mut [usize], mut i: usize) -> usize {
                while root[i] != i {
                    root[i] = root[root[i]];
                    i = root[i];
                }
                i
            }
            for i in 0..p {
                for j in (i + 1)..p {
                    if edge(i, j) {
                        let (a, b) = (find(&mut root, i), find(&mut root, j));
                        let (lo, hi) = (a.min(b), a.max(b));
                        root[hi] = lo;
                    }
                }
            }
            for j in 0..p {
                let k = find(&mut root, j);
                if k != j {
                    drops.push((j, k, r[k][j]));
                }
            }
        }
    }
    drops.sort_by_key(|d| d.0);
    drops
}

/// Missing-value handling, sparsity and constant filters, then correlation
/// pruning. Running it again on its own output changes nothing.
pub fn preprocess(raw: &FeatureMatrix, opts: &PreprocessOptions) -> Result<(FeatureMatrix, PreprocessReport)> {
    let n = raw.n_rows();
    let names = raw.column_names();
    let mut cols: Vec<Vec<f64>> = (0..raw.n_cols()).map(|j| raw.values().column(j).to_vec()).collect();
    let mut keep = vec![true; cols.len()];
    let mut dropped = Vec::new();
    let mut imputed = Vec::new();

    for (j, col) in cols.iter_mut().enumerate() {
        let n_missing = col.iter().filter(|x| !x.is_finite()).count();
        if n_missing == 0 {
            continue;
        }
        let fraction = n_missing as f64 / n as f64;
        match median(col) {
            Some(med) if fraction < opts.max_missing_fraction => {
                for x in col.iter_mut().filter(|x| !x.is_finite()) {
                    *x = med;
                }
                imputed.push(MedianImputation {
                    name: names[j].clone(),
                    n_missing,
                    median: med,
                });
            }
            _ => {
                keep[j] = false;
                dropped.push(ColumnDrop {
                    name: names[j].clone(),
                    reason: DropReason::Missing { fraction },
                });
            }
        }
    }

    for (j, col) in cols.iter().enumerate() {
        if !keep[j] {
            continue;
        }
        let zero_fraction = col.iter().filter(|&&x| x == 0.0).count() as f64 / n as f64;
        let reason = if zero_fraction > opts.max_zero_fraction {
            Some(DropReason::Sparse { zero_fraction })
        } else if col.iter().all(|&x| x == col[0]) {
            Some(DropReason::Constant)
        } else {
            None
        };
        if let Some(reason) = reason {
            keep[j] = false;
            dropped.push(ColumnDrop {
                name: names[j].clone(),
                reason,
            });
        }
    }

    let survivors: Vec<usize> = (0..cols.len()).filter(|&j| keep[j]).collect();
    let sub: Vec<Vec<f64>> = survivors.iter().map(|&j| cols[j].clone()).collect();
    for (a, b, r) in correlation_drops(&sub, opts.max_abs_correlation, opts.grouping) {
        keep[survivors[a]] = false;
        dropped.push(ColumnDrop {
            name: names[survivors[a]].clone(),
            reason: DropReason::Correlated {
                kept: names[survivors[b]].clone(),
                r,
            },
        });
    }

    let kept: Vec<usize> = (0..cols.len()).filter(|&j| keep[j]).collect();
    let mut out = raw.select_columns(&kept);
    for (k, &j) in kept.iter().enumerate() {
        out.values_mut().column_mut(k).assign(&ndarray::ArrayView1::from(&cols[j]));
    }
    let stats = kept
        .iter()
        .map(|&j| {
            let c = &cols[j];
            let mean = c.iter().sum::<f64>() / n as f64;
            let var = c.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0).max(1.0);
            ColumnStats {
                name: names[j].clone(),
                mean,
                sd: var.sqrt(),
                min: c.iter().copied().fold(f64::INFINITY, f64::min),
                max: c.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                zero_fraction: c.iter().filter(|&&x| x == 0.0).count() as f64 / n as f64,
            }
        })
        .collect();
    let report = PreprocessReport {
        n_rows: n,
        n_input_columns: raw.n_cols(),
        n_output_columns: kept.len(),
        imputed,
        dropped,
        stats,
    };
    log::info!(
        "preprocess: {} of {} predictors kept",
        report.n_output_columns,
        report.n_input_columns
    );
    Ok((out, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{ColumnKind, ColumnMeta};
    use ndarray::Array2;

    fn matrix(cols: &[Vec<f64>]) -> FeatureMatrix {
        let n = cols[0].len();
        let values = Array2::from_shape_fn((n, cols.len()), |(i, j)| cols[j][i]);
        let columns = (0..cols.len())
            .map(|j| ColumnMeta {
                name: format!("c{j}"),
                source: "t".into(),
                kind: ColumnKind::Unspecified,
            })
            .collect();
        FeatureMatrix::new((0..n).map(|i| i.to_string()).collect(), columns, values).unwrap()
    }

    fn ramp(n: usize, f: impl Fn(usize) -> f64) -> Vec<f64> {
        (0..n).map(f).collect()
    }

    #[test]
    fn missing_threshold() {
        let n = 100;
        let mut two_pct = ramp(n, |i| i as f64);
        two_pct[0] = f64::NAN;
        two_pct[1] = f64::NAN;
        let mut one_pct = ramp(n, |i| ((i * 7) % 13) as f64);
        one_pct[5] = f64::NAN;
        let (out, rep) = preprocess(&matrix(&[two_pct, one_pct.clone()]), &PreprocessOptions::default()).unwrap();
        assert_eq!(out.column_names(), vec!["c1"]);
        assert!(matches!(rep.dropped[0].reason, DropReason::Missing { .. }));
        let med = median(&one_pct).unwrap();
        assert_eq!(out.values()[[5, 0]], med);
        assert_eq!(rep.imputed[0].n_missing, 1);
    }

    #[test]
    fn duplicates_sparse_and_constant() {
        let n = 100;
        let a = ramp(n, |i| (i as f64).sin());
        let sparse = ramp(n, |i| if i < 4 { 1.0 } else { 0.0 });
        let constant = vec![3.0; n];
        let (out, rep) = preprocess(&matrix(&[a.clone(), a, sparse, constant]), &PreprocessOptions::default()).unwrap();
        assert_eq!(out.column_names(), vec!["c0"]);
        assert_eq!(rep.count(|r| matches!(r, DropReason::Correlated { .. })), 1);
        assert_eq!(rep.count(|r| matches!(r, DropReason::Sparse { .. })), 1);
        assert_eq!(rep.count(|r| matches!(r, DropReason::Constant)), 1);
    }

    #[test]
    fn clique_versus_component() {
        // a~b and b~c strongly, a and c less so: a chain
        let n = 200;
        let a = ramp(n, |i| i as f64);
        let wiggle = ramp(n, |i| if i % 2 == 0 { 1.0 } else { -1.0 });
        let b: Vec<f64> = a.iter().zip(&wiggle).map(|(x, w)| x + 15.0 * w).collect();
        let c: Vec<f64> = b.iter().zip(&wiggle).map(|(x, w)| x + 15.0 * w).collect();
        let cols = vec![a, b, c];
        let r_ab = pearson(&cols[0], &cols[1]);
        let r_ac = pearson(&cols[0], &cols[2]);
        assert!(r_ab > 0.95 && r_ac < 0.95, "{r_ab} {r_ac}");
        let clique: Vec<usize> = correlation_drops(&cols, 0.95, CorrelationGrouping::Clique).iter().map(|d| d.0).collect();
        let comp: Vec<usize> = correlation_drops(&cols, 0.95, CorrelationGrouping::Component).iter().map(|d| d.0).collect();
        assert_eq!(clique, vec![1]);
        assert_eq!(comp, vec![1, 2]);
    }

    #[test]
    fn median_and_pearson_basics() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, f64::NAN, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[f64::NAN]), None);
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]) - 1.0).abs() < 1e-15);
        assert_eq!(pearson(&[1.0, 1.0], &[1.0, 2.0]), 0.0);
    }
}
