//! Run configuration with the study protocol as defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::experiment::CoefficientScaling;
use crate::features::preprocess::PreprocessOptions;
use crate::geo::{BufferSpec, CANDIDATE_RADII};
use crate::ingest::{LabelingSpec, UseTimeBasis};
use crate::models::ensemble::DEFAULT_STOP_THRESHOLD;
use crate::models::{lambda_grid, Method, TrainSettings, TreeHparams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodChoice {
    LrL1,
    Rf,
    Gbrt,
    All,
}

impl MethodChoice {
    pub fn methods(&self) -> Vec<Method> {
        match self {
            MethodChoice::LrL1 => vec![Method::LrL1],
            MethodChoice::Rf => vec![Method::Rf],
            MethodChoice::Gbrt => vec![Method::Gbrt],
            MethodChoice::All => Method::ALL.to_vec(),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "all" => Some(MethodChoice::All),
            _ => Method::parse(s).map(|m| match m {
                Method::LrL1 => MethodChoice::LrL1,
                Method::Rf => MethodChoice::Rf,
                Method::Gbrt => MethodChoice::Gbrt,
            }),
        }
    }
}

/// `10^(base + step·i)` for `i = 0..count`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaGridSpec {
    pub base: f64,
    pub step: f64,
    pub count: usize,
}

impl Default for LambdaGridSpec {
    fn default() -> Self {
        Self {
            base: -4.0,
            step: 0.015,
            count: 201,
        }
    }
}

impl LambdaGridSpec {
    pub fn values(&self) -> Vec<f64> {
        lambda_grid(self.base, self.step, self.count)
    }
}

/// `k / divisor` for `k = 0..count`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaGridSpec {
    pub divisor: u32,
    pub count: u32,
}

impl Default for ThetaGridSpec {
    fn default() -> Self {
        Self { divisor: 100, count: 100 }
    }
}

impl ThetaGridSpec {
    pub fn values(&self) -> Vec<f64> {
        (0..self.count).map(|k| k as f64 / self.divisor as f64).collect()
    }
}

/// Input files; relative paths resolve against the config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataPaths {
    pub manifest: PathBuf,
    pub stations: PathBuf,
    pub transactions: PathBuf,
}

impl Default for DataPaths {
    fn default() -> Self {
        Self {
            manifest: "attributes.json".into(),
            stations: "stations.csv".into(),
            transactions: "transactions.csv".into(),
        }
    }
}

pub fn default_rf_grid() -> Vec<TreeHparams> {
    [1, 5]
        .into_iter()
        .map(|min_leaf| TreeHparams {
            n_cycles: 100,
            learn_rate: 1.0,
            min_leaf,
            max_splits: 10_000,
        })
        .collect()
}

pub fn default_gbrt_grid() -> Vec<TreeHparams> {
    let mut g = Vec::new();
    for learn_rate in [0.1, 0.5] {
        for max_splits in [4, 16] {
            g.push(TreeHparams {
                n_cycles: 100,
                learn_rate,
                min_leaf: 5,
                max_splits,
            });
        }
    }
    g
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub data: DataPaths,
    /// Projection reference latitude; the mean station latitude when absent.
    pub reference_latitude: Option<f64>,
    pub pool_merge_distance_m: f64,
    pub buffer: BufferSpec,
    pub labeling: LabelingSpec,
    pub use_time_basis: UseTimeBasis,
    pub preprocess: PreprocessOptions,
    pub thetas: ThetaGridSpec,
    pub lambdas: LambdaGridSpec,
    pub k_folds: usize,
    pub n_splits: usize,
    pub test_fraction: f64,
    pub bootstrap_samples: usize,
    pub coefficient_scaling: CoefficientScaling,
    pub method: MethodChoice,
    pub rf_grid: Vec<TreeHparams>,
    pub gbrt_grid: Vec<TreeHparams>,
    pub gbrt_stop_threshold: f64,
    pub alpha: f64,
    pub rank_theta: f64,
    pub radius_sweep: Vec<f64>,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: DataPaths::default(),
            reference_latitude: None,
            pool_merge_distance_m: 50.0,
            buffer: BufferSpec::default(),
            labeling: LabelingSpec::default(),
            use_time_basis: UseTimeBasis::default(),
            preprocess: PreprocessOptions::default(),
            thetas: ThetaGridSpec::default(),
            lambdas: LambdaGridSpec::default(),
            k_folds: 10,
            n_splits: 100,
            test_fraction: 0.2,
            bootstrap_samples: 500,
            coefficient_scaling: CoefficientScaling::default(),
            method: MethodChoice::LrL1,
            rf_grid: default_rf_grid(),
            gbrt_grid: default_gbrt_grid(),
            gbrt_stop_threshold: DEFAULT_STOP_THRESHOLD,
            alpha: 0.01,
            rank_theta: 0.34,
            radius_sweep: CANDIDATE_RADII.to_vec(),
            seed: 2015,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(format!("config: {m}")));
        if self.lambdas.count == 0 || self.thetas.count == 0 || self.thetas.divisor == 0 {
            return bad("λ and θ grids must be non-empty");
        }
        if self.thetas.values().iter().any(|t| !(0.0..1.0).contains(t)) {
            return bad("θ values must lie in [0, 1)");
        }
        if self.k_folds < 2 {
            return bad("k_folds must be at least 2");
        }
        if self.n_splits == 0 || self.bootstrap_samples == 0 {
            return bad("n_splits and bootstrap_samples must be positive");
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return bad("test_fraction must lie in (0, 1)");
        }
        if self.rf_grid.is_empty() || self.gbrt_grid.is_empty() {
            return bad("tree grids must be non-empty");
        }
        if self.radius_sweep.is_empty() {
            return bad("radius_sweep must be non-empty");
        }
        if !(0.0..1.0).contains(&self.rank_theta) {
            return bad("rank_theta must lie in [0, 1)");
        }
        self.buffer.validate()
    }

    pub fn train_settings(&self) -> TrainSettings {
        TrainSettings {
            lambdas: self.lambdas.values(),
            k_folds: self.k_folds,
            rf_grid: self.rf_grid.clone(),
            gbrt_grid: self.gbrt_grid.clone(),
            gbrt_stop_threshold: self.gbrt_stop_threshold,
        }
    }

    /// Reads a config and makes its data paths absolute.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::schema(path.display().to_string(), format!("cannot read: {e}")))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::schema(path.display().to_string(), e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        for p in [&mut self.data.manifest, &mut self.data.stations, &mut self.data.transactions] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn protocol_defaults() {
        let c = RunConfig::default();
        c.validate().unwrap();
        let l = c.lambdas.values();
        assert_eq!(l.len(), 201);
        assert!((l[0] - 1e-4).abs() < 1e-18);
        assert!((l[200] - 0.1).abs() < 1e-15);
        let t = c.thetas.values();
        assert_eq!(t.len(), 100);
        assert_eq!(t[99], 0.99);
        assert_eq!((c.k_folds, c.n_splits, c.bootstrap_samples), (10, 100, 500));
        assert_eq!(c.test_fraction, 0.2);
        assert_eq!(c.buffer.radius, 350.0);
        assert_eq!(c.labeling.top_fraction, 0.25);
        assert_eq!(c.rank_theta, 0.34);
    }

    #[test]
    fn partial_json_takes_defaults() {
        let c: RunConfig = serde_json::from_str(r#"{"seed": 7, "method": "all"}"#).unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.method, MethodChoice::All);
        assert_eq!(c.n_splits, 100);
        let back: RunConfig = serde_json::from_str(&c.to_json().unwrap()).unwrap();
        assert_eq!(back, c);
    }
}
