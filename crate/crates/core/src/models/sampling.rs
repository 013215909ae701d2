//! Class-stratified folds, splits and bootstrap resamples.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};

fn class_indices(y: &[u8]) -> Result<[Vec<usize>; 2]> {
    let mut by_class = [Vec::new(), Vec::new()];
    for (i, &v) in y.iter().enumerate() {
        match v {
            0 | 1 => by_class[v as usize].push(i),
            _ => return Err(Error::InvalidInput(format!("label {v} at row {i} is not binary"))),
        }
    }
    Ok(by_class)
}

/// Fold id in `0..k` for every row. Each class is shuffled and dealt
/// round-robin, the deal continuing from one class to the next, so fold
/// sizes differ by at most one and every fold holds both classes.
pub fn stratified_folds<R: Rng>(y: &[u8], k: usize, rng: &mut R) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::InvalidInput("need at least 2 folds".into()));
    }
    let mut classes = class_indices(y)?;
    for (c, idx) in classes.iter().enumerate() {
        if idx.len() < k {
            return Err(Error::Stratification(format!(
                "class {c} has {} rows, fewer than {k} folds",
                idx.len()
            )));
        }
    }
    let mut fold = vec![0; y.len()];
    let mut next = 0;
    for idx in &mut classes {
        idx.shuffle(rng);
        for &i in idx.iter() {
            fold[i] = next % k;
            next += 1;
        }
    }
    Ok(fold)
}

/// Sorted (train, test) row indices; each class contributes
/// `round(test_fraction · n_class)` rows to the test set.
pub fn stratified_split<R: Rng>(y: &[u8], test_fraction: f64, rng: &mut R) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidInput(format!("test fraction {test_fraction} outside (0, 1)")));
    }
    let classes = class_indices(y)?;
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (c, mut idx) in classes.into_iter().enumerate() {
        let n_test = (test_fraction * idx.len() as f64).round() as usize;
        if n_test == 0 || n_test == idx.len() {
            return Err(Error::Stratification(format!(
                "class {c} with {} rows cannot appear in both train and test",
                idx.len()
            )));
        }
        idx.shuffle(rng);
        test.extend_from_slice(&idx[..n_test]);
        train.extend_from_slice(&idx[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Resample with replacement within each class, preserving class counts.
pub fn stratified_bootstrap<R: Rng>(y: &[u8], rng: &mut R) -> Result<Vec<usize>> {
    let classes = class_indices(y)?;
    if classes.iter().any(Vec::is_empty) {
        return Err(Error::Stratification("bootstrap needs both classes".into()));
    }
    let mut out = Vec::with_capacity(y.len());
    for idx in &classes {
        for _ in 0..idx.len() {
            out.push(idx[rng.random_range(0..idx.len())]);
        }
    }
    out.sort_unstable();
    Ok(out)
}

/// Plain bootstrap of `n` draws from `0..n`.
pub fn bootstrap<R: Rng>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut out: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
    out.sort_unstable();
    out
}
