//! End-to-end steps shared by the command-line tool and the tests. Each
//! `run_*` function reads its inputs, writes its artifacts into an output
//! directory (including the resolved `run_config.json`) and returns what it
//! wrote.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::eval::experiment::{bootstrap_coefficients, ensemble_experiment, BootstrapReport, EnsembleReport};
use crate::eval::{compare_auc, null_expectations, AucComparison, NullExpectation};
use crate::features::extract::{extract_matrix, load_layers};
use crate::features::manifest::Manifest;
use crate::features::preprocess::preprocess;
use crate::features::{FeatureMatrix, FeatureReport};
use crate::geo::{BufferSpec, Projection};
use crate::ingest::io::{read_pool_columns, read_stations, read_transactions, write_pools};
use crate::ingest::{
    aggregate_pools, assign_indicators, filter_transactions, label_top, AssignmentReport, FilterReport, Indicator,
    PoolRecord, StationRecord,
};
use crate::models::{ols_r2, train, Method, ModelDocument, Selection};

pub const RUN_CONFIG_FILE: &str = "run_config.json";

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Writes the resolved configuration next to a command's outputs.
pub fn write_run_config(cfg: &RunConfig, out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    write_json(&out_dir.join(RUN_CONFIG_FILE), cfg)
}

/// Stations with planar locations. Without a configured reference latitude
/// the mean station latitude is used.
pub fn load_stations(cfg: &RunConfig) -> Result<(Vec<StationRecord>, Projection)> {
    let provisional = Projection::new(cfg.reference_latitude.unwrap_or(0.0));
    let mut stations = read_stations(&cfg.data.stations, &provisional)?;
    if stations.is_empty() {
        return Err(Error::schema(cfg.data.stations.display().to_string(), "no stations"));
    }
    let proj = match cfg.reference_latitude {
        Some(_) => provisional,
        None => {
            let lat = stations.iter().map(|s| s.lat).sum::<f64>() / stations.len() as f64;
            let p = Projection::new(lat);
            for s in &mut stations {
                s.location = p.forward(s.lon, s.lat);
            }
            p
        }
    };
    Ok((stations, proj))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub reference_latitude: f64,
    pub n_stations: usize,
    pub n_pools: usize,
    pub n_raw_transactions: usize,
    pub filter: FilterReport,
    pub assignment: AssignmentReport,
    pub n_positive: usize,
    pub tie_at_cutoff: bool,
}

/// Pools with indicators and top-fraction popularity labels.
pub fn load_labelled_pools(cfg: &RunConfig) -> Result<(Vec<PoolRecord>, Vec<u8>, Projection, IngestReport)> {
    let (stations, proj) = load_stations(cfg)?;
    let mut pools = aggregate_pools(&stations, cfg.pool_merge_distance_m)?;
    let raw = read_transactions(&cfg.data.transactions)?;
    let n_raw = raw.len();
    let (kept, filter) = filter_transactions(raw, &cfg.labeling.period);
    let assignment = assign_indicators(&mut pools, &kept, &cfg.labeling.period, cfg.use_time_basis)?;
    let popularity: Vec<f64> = pools.iter().map(|p| p.indicators.get(Indicator::Popularity)).collect();
    let ids: Vec<String> = pools.iter().map(|p| p.pool_id.clone()).collect();
    let labels = label_top(&popularity, &ids, cfg.labeling.top_fraction)?;
    let report = IngestReport {
        reference_latitude: proj.ref_lat,
        n_stations: stations.len(),
        n_pools: pools.len(),
        n_raw_transactions: n_raw,
        filter,
        assignment,
        n_positive: labels.y.iter().filter(|&&v| v == 1).count(),
        tie_at_cutoff: labels.tie_at_cutoff,
    };
    Ok((pools, labels.y, proj, report))
}

/// Raw and preprocessed predictor matrices for `pools` with the given buffer.
pub fn build_features(
    cfg: &RunConfig,
    pools: &[PoolRecord],
    proj: &Projection,
    buffer: &BufferSpec,
) -> Result<(FeatureMatrix, FeatureMatrix, FeatureReport)> {
    let manifest = Manifest::read(&cfg.data.manifest)?;
    let base = cfg.data.manifest.parent().unwrap_or(Path::new("."));
    let (layers, load) = load_layers(&manifest, base, proj)?;
    let raw = extract_matrix(pools, &layers, buffer, proj)?;
    let (processed, pre) = preprocess(&raw, &cfg.preprocess)?;
    let raw_missing = raw
        .column_names()
        .into_iter()
        .enumerate()
        .map(|(j, name)| (name, raw.column(j).iter().filter(|v| v.is_nan()).count()))
        .filter(|(_, m)| *m > 0)
        .collect();
    let report = FeatureReport {
        buffer_radius_m: buffer.radius,
        raw_columns: raw.columns().to_vec(),
        raw_missing,
        load,
        preprocess: pre,
    };
    Ok((raw, processed, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusRow {
    pub radius_m: f64,
    pub n_predictors: usize,
    pub r2: f64,
    pub best: bool,
}

/// OLS R² of popularity on the preprocessed predictors, per buffer radius.
pub fn radius_sweep(cfg: &RunConfig, pools: &[PoolRecord], proj: &Projection) -> Result<Vec<RadiusRow>> {
    let y: Vec<f64> = pools.iter().map(|p| p.indicators.get(Indicator::Popularity)).collect();
    let mut rows = Vec::new();
    for &r in &cfg.radius_sweep {
        let buffer = BufferSpec::new(r, cfg.buffer.n_segments)?;
        let (_, x, _) = build_features(cfg, pools, proj, &buffer)?;
        rows.push(RadiusRow {
            radius_m: r,
            n_predictors: x.n_cols(),
            r2: ols_r2(x.values(), &y)?,
            best: false,
        });
    }
    let best = crate::eval::argmax_first(&rows.iter().map(|r| r.r2).collect::<Vec<_>>());
    rows[best].best = true;
    Ok(rows)
}

fn write_radius_sweep(rows: &[RadiusRow], out_dir: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(out_dir.join("radius_sweep.csv"))?;
    w.write_record(["radius_m", "n_predictors", "r2", "best"])?;
    for r in rows {
        w.write_record([
            r.radius_m.to_string(),
            r.n_predictors.to_string(),
            r.r2.to_string(),
            u8::from(r.best).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `radius_sweep.csv`.
pub fn run_radius_sweep(cfg: &RunConfig, out_dir: &Path) -> Result<Vec<RadiusRow>> {
    cfg.validate()?;
    fs::create_dir_all(out_dir)?;
    let (pools, _, proj, _) = load_labelled_pools(cfg)?;
    let rows = radius_sweep(cfg, &pools, &proj)?;
    write_radius_sweep(&rows, out_dir)?;
    write_run_config(cfg, out_dir)?;
    Ok(rows)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExtractSummary {
    pub ingest: IngestReport,
    pub features: FeatureReport,
    pub radius_sweep: Option<Vec<RadiusRow>>,
}

pub const POOLS_FILE: &str = "pools.csv";
pub const FEATURES_FILE: &str = "features.csv";
pub const RAW_FEATURES_FILE: &str = "raw_features.csv";
pub const FEATURE_REPORT_FILE: &str = "feature_report.json";

/// Ingest, label, extract and preprocess; writes `pools.csv`,
/// `raw_features.csv`, `features.csv`, `feature_report.json` and, with
/// `sweep`, `radius_sweep.csv`.
pub fn run_extract(cfg: &RunConfig, out_dir: &Path, sweep: bool) -> Result<ExtractSummary> {
    cfg.validate()?;
    fs::create_dir_all(out_dir)?;
    let (pools, y, proj, ingest) = load_labelled_pools(cfg)?;
    let (raw, processed, features) = build_features(cfg, &pools, &proj, &cfg.buffer)?;
    write_pools(&out_dir.join(POOLS_FILE), &pools, &y, &proj)?;
    raw.write_csv(&out_dir.join(RAW_FEATURES_FILE))?;
    processed.write_csv(&out_dir.join(FEATURES_FILE))?;
    let radius = if sweep {
        let rows = radius_sweep(cfg, &pools, &proj)?;
        write_radius_sweep(&rows, out_dir)?;
        Some(rows)
    } else {
        None
    };
    let summary = ExtractSummary {
        ingest,
        features,
        radius_sweep: radius,
    };
    write_json(&out_dir.join(FEATURE_REPORT_FILE), &summary)?;
    write_run_config(cfg, out_dir)?;
    Ok(summary)
}

/// Preprocessed predictors and labels from an extract directory, rows in
/// the same order.
pub fn load_dataset(extract_dir: &Path) -> Result<(FeatureMatrix, Vec<u8>)> {
    let x = FeatureMatrix::read_csv(&extract_dir.join(FEATURES_FILE))?;
    let (ids, cols) = read_pool_columns(&extract_dir.join(POOLS_FILE), &["label"])?;
    let by_id: std::collections::BTreeMap<&str, f64> = ids.iter().map(String::as_str).zip(cols[0].iter().copied()).collect();
    let y = x
        .row_ids()
        .iter()
        .map(|id| match by_id.get(id.as_str()) {
            Some(&v) if v == 0.0 || v == 1.0 => Ok(v as u8),
            Some(v) => Err(Error::schema(POOLS_FILE, format!("label {v} for pool `{id}` is not 0/1"))),
            None => Err(Error::schema(POOLS_FILE, format!("no label for pool `{id}`"))),
        })
        .collect::<Result<Vec<u8>>>()?;
    Ok((x, y))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub method: Method,
    pub selection: Selection,
    pub model_file: PathBuf,
}

pub fn model_file_name(method: Method) -> String {
    format!("model_{}.json", method.as_str())
}

/// Fits every configured method on all rows; writes `model_<method>.json`.
pub fn run_train(cfg: &RunConfig, extract_dir: &Path, out_dir: &Path) -> Result<Vec<TrainSummary>> {
    cfg.validate()?;
    fs::create_dir_all(out_dir)?;
    let (x, y) = load_dataset(extract_dir)?;
    let settings = cfg.train_settings();
    let mut out = Vec::new();
    for method in cfg.method.methods() {
        let (model, selection) = train(method, x.values(), &y, &settings, cfg.seed)?;
        let path = out_dir.join(model_file_name(method));
        ModelDocument::new(x.column_names(), model)?.save(&path)?;
        out.push(TrainSummary {
            method,
            selection,
            model_file: PathBuf::from(model_file_name(method)),
        });
    }
    write_json(&out_dir.join("train_report.json"), &out)?;
    write_run_config(cfg, out_dir)?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub a: Method,
    pub b: Method,
    pub result: AucComparison,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub prevalence: f64,
    pub null_model: Vec<NullExpectation>,
    pub ensembles: Vec<EnsembleReport>,
    pub comparisons: Vec<Comparison>,
}

/// Runs the split ensemble for every configured method and the pairwise AUC
/// tests; `oracle` gives optional reference scores in row order.
pub fn evaluate(cfg: &RunConfig, x: &FeatureMatrix, y: &[u8], oracle: Option<&[f64]>) -> Result<EvalReport> {
    let settings = cfg.train_settings();
    let thetas = cfg.thetas.values();
    let ensembles = cfg
        .method
        .methods()
        .into_iter()
        .map(|m| {
            ensemble_experiment(
                x.values(),
                y,
                m,
                &settings,
                cfg.n_splits,
                cfg.test_fraction,
                &thetas,
                oracle,
                cfg.seed,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let mut comparisons = Vec::new();
    for i in 0..ensembles.len() {
        for j in i + 1..ensembles.len() {
            comparisons.push(Comparison {
                a: ensembles[i].method,
                b: ensembles[j].method,
                result: compare_auc(&ensembles[i].aucs, &ensembles[j].aucs, cfg.alpha)?,
            });
        }
    }
    let prevalence = y.iter().filter(|&&v| v == 1).count() as f64 / y.len() as f64;
    let null_model = thetas
        .iter()
        .map(|&t| null_expectations(t, prevalence))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport {
        prevalence,
        null_model,
        ensembles,
        comparisons,
    })
}

/// Reference scores from a CSV with a `pool_id` column, reordered to
/// `row_ids`.
pub fn read_reference_scores(path: &Path, column: &str, row_ids: &[String]) -> Result<Vec<f64>> {
    let (ids, cols) = read_pool_columns(path, &[column])?;
    let by_id: std::collections::BTreeMap<&str, f64> = ids.iter().map(String::as_str).zip(cols[0].iter().copied()).collect();
    row_ids
        .iter()
        .map(|id| {
            by_id
                .get(id.as_str())
                .copied()
                .ok_or_else(|| Error::schema(path.display().to_string(), format!("no `{column}` for pool `{id}`")))
        })
        .collect()
}

/// Writes `eval_report.json`, `curves.csv` and `roc_points.csv`. `oracle`
/// names a CSV with a `signal` column whose per-split AUC is recorded.
pub fn run_evaluate(cfg: &RunConfig, extract_dir: &Path, out_dir: &Path, oracle: Option<&Path>) -> Result<EvalReport> {
    cfg.validate()?;
    fs::create_dir_all(out_dir)?;
    let (x, y) = load_dataset(extract_dir)?;
    let scores = oracle.map(|p| read_reference_scores(p, "signal", x.row_ids())).transpose()?;
    let report = evaluate(cfg, &x, &y, scores.as_deref())?;
    write_eval_outputs(&report, out_dir)?;
    write_run_config(cfg, out_dir)?;
    Ok(report)
}

pub fn write_eval_outputs(report: &EvalReport, out_dir: &Path) -> Result<()> {
    write_json(&out_dir.join("eval_report.json"), report)?;
    let mut w = csv::Writer::from_path(out_dir.join("curves.csv"))?;
    w.write_record([
        "method",
        "theta",
        "accuracy_mean",
        "accuracy_sd",
        "precision_mean",
        "precision_sd",
        "sensitivity_mean",
        "sensitivity_sd",
        "fall_out_mean",
        "fall_out_sd",
        "f_score_mean",
        "f_score_sd",
        "mcc_mean",
        "mcc_sd",
    ])?;
    for e in &report.ensembles {
        for (k, t) in e.thetas.iter().enumerate() {
            let (m, s) = (e.mean.at(k), e.std.at(k));
            let mut rec = vec![e.method.as_str().to_string(), t.to_string()];
            for (a, b) in [
                (m.accuracy, s.accuracy),
                (m.precision, s.precision),
                (m.sensitivity, s.sensitivity),
                (m.fall_out, s.fall_out),
                (m.f_score, s.f_score),
                (m.mcc, s.mcc),
            ] {
                rec.push(a.to_string());
                rec.push(b.to_string());
            }
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(out_dir.join("roc_points.csv"))?;
    w.write_record(["method", "split", "threshold", "fall_out", "sensitivity"])?;
    for e in &report.ensembles {
        for s in &e.splits {
            for p in &s.roc {
                w.write_record([
                    e.method.as_str().to_string(),
                    s.split.to_string(),
                    p.threshold.to_string(),
                    p.fall_out.to_string(),
                    p.sensitivity.to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedPool {
    pub rank: usize,
    pub pool_id: String,
    pub score: f64,
    pub predicted: u8,
}

/// Scores candidate sites with a saved model, highest first (ties by id).
pub fn rank(doc: &ModelDocument, candidates: &FeatureMatrix, theta: f64) -> Result<Vec<RankedPool>> {
    let x = candidates.align_to(&doc.feature_names)?;
    if x.n_missing() > 0 {
        return Err(Error::InvalidInput("candidate predictors contain missing values".into()));
    }
    let scores = doc.model.predict_proba(x.values())?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    let ids = x.row_ids();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then_with(|| ids[a].cmp(&ids[b])));
    Ok(order
        .into_iter()
        .enumerate()
        .map(|(r, i)| RankedPool {
            rank: r + 1,
            pool_id: ids[i].clone(),
            score: scores[i],
            predicted: crate::models::classify(scores[i], theta),
        })
        .collect())
}

/// Writes `ranking.csv`.
pub fn run_rank(cfg: &RunConfig, model: &Path, features: &Path, out_dir: &Path) -> Result<Vec<RankedPool>> {
    cfg.validate()?;
    fs::create_dir_all(out_dir)?;
    let doc = ModelDocument::load(model)?;
    let ranked = rank(&doc, &FeatureMatrix::read_csv(features)?, cfg.rank_theta)?;
    let mut w = csv::Writer::from_path(out_dir.join("ranking.csv"))?;
    w.write_record(["rank", "pool_id", "score", "predicted"])?;
    for r in &ranked {
        w.write_record([r.rank.to_string(), r.pool_id.clone(), r.score.to_string(), r.predicted.to_string()])?;
    }
    w.flush()?;
    write_run_config(cfg, out_dir)?;
    Ok(ranked)
}

pub fn bootstrap(cfg: &RunConfig, x: &FeatureMatrix, y: &[u8]) -> Result<BootstrapReport> {
    bootstrap_coefficients(
        x.values(),
        &x.column_names(),
        y,
        cfg.bootstrap_samples,
        &cfg.lambdas.values(),
        cfg.k_folds,
        cfg.coefficient_scaling,
        cfg.seed,
    )
}

/// Writes `coefficients.csv` and `bootstrap_report.json`.
pub fn run_bootstrap(cfg: &RunConfig, extract_dir: &Path, out_dir: &Path) -> Result<BootstrapReport> {
    cfg.validate()?;
    fs::create_dir_all(out_dir)?;
    let (x, y) = load_dataset(extract_dir)?;
    let report = bootstrap(cfg, &x, &y)?;
    let mut w = csv::Writer::from_path(out_dir.join("coefficients.csv"))?;
    w.write_record(["predictor", "median", "q1", "q3", "selection_frequency", "zero_fraction", "stable"])?;
    for p in &report.predictors {
        w.write_record([
            p.predictor.clone(),
            p.median.to_string(),
            p.q1.to_string(),
            p.q3.to_string(),
            p.selection_frequency.to_string(),
            p.zero_fraction.to_string(),
            u8::from(p.stable).to_string(),
        ])?;
    }
    w.flush()?;
    write_json(&out_dir.join("bootstrap_report.json"), &report)?;
    write_run_config(cfg, out_dir)?;
    Ok(report)
}
