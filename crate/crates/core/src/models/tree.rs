//! CART regression trees grown breadth-first under a split budget.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Predictors in column-major order, shared by the tree learners.
pub struct Columns {
    cols: Vec<Vec<f64>>,
    n: usize,
}

impl Columns {
    pub fn new(x: ndarray::ArrayView2<f64>) -> Result<Self> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("predictors must be finite".into()));
        }
        Ok(Self {
            cols: x.columns().into_iter().map(|c| c.to_vec()).collect(),
            n: x.nrows(),
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n
    }

    pub fn n_features(&self) -> usize {
        self.cols.len()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.cols.iter().map(|c| c[i]).collect()
    }

    pub fn row_into(&self, i: usize, out: &mut [f64]) {
        for (o, c) in out.iter_mut().zip(&self.cols) {
            *o = c[i];
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub min_leaf: usize,
    pub max_splits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum TreeNode {
    Leaf {
        value: f64,
        n: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<TreeNode>,
}

/// A candidate split must beat the incumbent by this fraction of the node's
/// sum of squares; earlier (feature, threshold) pairs win ties.
pub const GAIN_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitChoice {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
}

/// Sum-of-squares reduction of the best split of `rows` over `features`
/// (ascending), each side keeping at least `min_leaf` rows.
pub fn best_split(x: &Columns, y: &[f64], rows: &[usize], features: &[usize], min_leaf: usize) -> Option<SplitChoice> {
    let n = rows.len();
    if n < 2 * min_leaf.max(1) {
        return None;
    }
    let total: f64 = rows.iter().map(|&i| y[i]).sum();
    let mean = total / n as f64;
    let sse: f64 = rows.iter().map(|&i| (y[i] - mean).powi(2)).sum();
    if sse <= 0.0 {
        return None;
    }
    let tol = GAIN_EPS * sse;
    let mut best: Option<SplitChoice> = None;
    let mut order: Vec<usize> = rows.to_vec();
    for &f in features {
        let col = &x.cols[f];
        order.sort_by(|&a, &b| col[a].total_cmp(&col[b]).then(a.cmp(&b)));
        let mut left = 0.0;
        for k in 1..n {
            left += y[order[k - 1]];
            let (lo, hi) = (col[order[k - 1]], col[order[k]]);
            if k < min_leaf || n - k < min_leaf || lo == hi {
                continue;
            }
            let right = total - left;
            let gain = left * left / k as f64 + right * right / (n - k) as f64 - total * total / n as f64;
            let beats = match best {
                None => gain > tol,
                Some(b) => gain > b.gain + tol,
            };
            if beats {
                let mid = 0.5 * (lo + hi);
                best = Some(SplitChoice {
                    feature: f,
                    threshold: if mid < hi { mid } else { lo },
                    gain,
                });
            }
        }
    }
    best
}

impl RegressionTree {
    /// Grows a tree on `rows` (duplicates allowed, as in a bootstrap sample).
    /// With `mtry`, each split considers that many randomly drawn features.
    pub fn fit<R: Rng>(
        x: &Columns,
        y: &[f64],
        rows: &[usize],
        params: &TreeParams,
        mtry: Option<(usize, &mut R)>,
    ) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidInput("cannot grow a tree on no rows".into()));
        }
        if params.min_leaf == 0 {
            return Err(Error::InvalidInput("minimum leaf size must be at least 1".into()));
        }
        let p = x.n_features();
        let all: Vec<usize> = (0..p).collect();
        let mut mtry = mtry;
        let mut nodes = Vec::new();
        let mut queue = std::collections::VecDeque::new();
        nodes.push(leaf(y, rows));
        queue.push_back((0usize, rows.to_vec()));
        let mut splits = 0;
        while let Some((id, members)) = queue.pop_front() {
            if splits >= params.max_splits {
                break;
            }
            let features = match mtry.as_mut() {
                Some((m, rng)) if *m < p => {
                    let mut f = sample(*rng, p, *m).into_vec();
                    f.sort_unstable();
                    f
                }
                _ => all.clone(),
            };
            let Some(s) = best_split(x, y, &members, &features, params.min_leaf) else {
                continue;
            };
            let col = &x.cols[s.feature];
            let (l, r): (Vec<usize>, Vec<usize>) = members.iter().partition(|&&i| col[i] <= s.threshold);
            let (li, ri) = (nodes.len(), nodes.len() + 1);
            nodes.push(leaf(y, &l));
            nodes.push(leaf(y, &r));
            nodes[id] = TreeNode::Split {
                feature: s.feature,
                threshold: s.threshold,
                left: li,
                right: ri,
            };
            splits += 1;
            queue.push_back((li, l));
            queue.push_back((ri, r));
        }
        Ok(Self { nodes })
    }

    /// Index of the leaf that `x` falls into.
    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                TreeNode::Leaf { .. } => return i,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        match self.nodes[self.leaf_index(x)] {
            TreeNode::Leaf { value, .. } => value,
            TreeNode::Split { .. } => unreachable!("leaf_index stops at leaves"),
        }
    }

    pub fn n_splits(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, TreeNode::Split { .. })).count()
    }

    pub fn max_feature(&self) -> Option<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                TreeNode::Split { feature, .. } => Some(*feature),
                _ => None,
            })
            .max()
    }
}

fn leaf(y: &[f64], rows: &[usize]) -> TreeNode {
    TreeNode::Leaf {
        value: rows.iter().map(|&i| y[i]).sum::<f64>() / rows.len() as f64,
        n: rows.len(),
    }
}
