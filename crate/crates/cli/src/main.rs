use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use evsite_core::config::RunConfig;
use evsite_core::synth::{generate, ScenarioSpec};
use evsite_core::{pipeline, Error};
use serde_json::Value;

#[derive(Parser)]
#[command(name = "evsite", version, about = "Charging-pool popularity prediction from GIS predictors")]
struct Cli {
    #[command(flatten)]
    config: ConfigArgs,
    #[command(subcommand)]
    command: Command,
}

/// Each flag overrides the config key of the same name.
#[derive(Args)]
struct ConfigArgs {
    /// JSON run configuration; missing keys take the protocol defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// lr_l1, rf, gbrt or all.
    #[arg(long, global = true)]
    method: Option<String>,
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    #[arg(long, global = true)]
    stations: Option<PathBuf>,
    #[arg(long, global = true)]
    transactions: Option<PathBuf>,
    #[arg(long, global = true)]
    reference_latitude: Option<f64>,
    /// Buffer radius in metres.
    #[arg(long, global = true)]
    radius: Option<f64>,
    #[arg(long, global = true)]
    top_fraction: Option<f64>,
    #[arg(long, global = true)]
    k_folds: Option<usize>,
    #[arg(long, global = true)]
    n_splits: Option<usize>,
    #[arg(long, global = true)]
    test_fraction: Option<f64>,
    #[arg(long, global = true)]
    bootstrap_samples: Option<usize>,
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// Threshold for the predicted class in `rank`.
    #[arg(long, global = true)]
    rank_theta: Option<f64>,
    /// Any other key as `dotted.path=json`, e.g. `preprocess.max_abs_correlation=0.9`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest, label and extract predictors into an output directory.
    Extract {
        #[arg(long)]
        out: PathBuf,
        /// Also tabulate OLS R² of popularity per candidate radius.
        #[arg(long)]
        radius_sweep: bool,
    },
    /// OLS R² of popularity per candidate buffer radius.
    RadiusSweep {
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit models on all rows of an extract directory.
    Train {
        #[arg(long)]
        extract: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Repeated stratified splits with threshold sweeps and AUC comparison.
    Evaluate {
        #[arg(long)]
        extract: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// CSV with `pool_id` and `signal` columns (a scenario's oracle.csv).
        #[arg(long)]
        oracle: Option<PathBuf>,
    },
    /// Score candidate sites with a saved model.
    Rank {
        #[arg(long)]
        model: PathBuf,
        /// Predictor table with the model's columns.
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Bootstrap stability of ℓ1 logistic coefficients.
    Bootstrap {
        #[arg(long)]
        extract: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic scenario directory.
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// Scenario description as JSON; missing keys take the reference values.
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Use the scaled-down scenario.
        #[arg(long)]
        small: bool,
    },
}

fn input_error(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

fn set_path(root: &mut Value, key: &str, value: Value) -> Result<(), Error> {
    let mut cur = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| input_error(format!("config key `{key}` does not name an object field")))?;
        if i + 1 == parts.len() {
            if !obj.contains_key(*part) {
                return Err(input_error(format!("unknown config key `{key}`")));
            }
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        cur = obj
            .get_mut(*part)
            .ok_or_else(|| input_error(format!("unknown config key `{key}`")))?;
    }
    Ok(())
}

fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig, Error> {
        let cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let mut v = serde_json::to_value(&cfg)?;
        let mut sets: Vec<(String, Value)> = Vec::new();
        let mut put = |k: &str, val: Value| sets.push((k.to_string(), val));
        if let Some(s) = self.seed {
            put("seed", s.into());
        }
        if let Some(m) = &self.method {
            put("method", m.as_str().into());
        }
        for (k, p) in [
            ("data.manifest", &self.manifest),
            ("data.stations", &self.stations),
            ("data.transactions", &self.transactions),
        ] {
            if let Some(p) = p {
                put(k, p.display().to_string().into());
            }
        }
        for (k, x) in [
            ("reference_latitude", self.reference_latitude),
            ("buffer.radius", self.radius),
            ("labeling.top_fraction", self.top_fraction),
            ("test_fraction", self.test_fraction),
            ("alpha", self.alpha),
            ("rank_theta", self.rank_theta),
        ] {
            if let Some(x) = x {
                put(k, x.into());
            }
        }
        for (k, x) in [
            ("k_folds", self.k_folds),
            ("n_splits", self.n_splits),
            ("bootstrap_samples", self.bootstrap_samples),
        ] {
            if let Some(x) = x {
                put(k, x.into());
            }
        }
        for s in &self.set {
            let (k, raw) = s
                .split_once('=')
                .ok_or_else(|| input_error(format!("`--set {s}` is not KEY=VALUE")))?;
            put(k.trim(), parse_value(raw.trim()));
        }
        for (k, val) in sets {
            set_path(&mut v, &k, val)?;
        }
        let cfg: RunConfig =
            serde_json::from_value(v).map_err(|e| Error::InvalidInput(format!("config override: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn load_scenario(path: Option<&Path>, small: bool, seed: Option<u64>) -> Result<ScenarioSpec, Error> {
    let mut spec = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            serde_json::from_str(&text).map_err(|e| Error::Schema {
                file: p.display().to_string(),
                message: e.to_string(),
            })?
        }
        None if small => ScenarioSpec::small(ScenarioSpec::default().seed),
        None => ScenarioSpec::default(),
    };
    if let Some(s) = seed {
        spec.seed = s;
    }
    Ok(spec)
}

fn run(cli: Cli) -> Result<(), Error> {
    if let Command::Synth { out, scenario, small } = &cli.command {
        let spec = load_scenario(scenario.as_deref(), *small, cli.config.seed)?;
        let truth = generate(&spec, out)?;
        println!(
            "scenario in {}: {} pools, {} raw predictors, oracle AUC {:.3}",
            out.display(),
            truth.n_pools,
            truth.n_raw_predictors,
            truth.oracle_auc
        );
        return Ok(());
    }
    let cfg = cli.config.resolve()?;
    match &cli.command {
        Command::Extract { out, radius_sweep } => {
            let s = pipeline::run_extract(&cfg, out, *radius_sweep)?;
            println!(
                "{} pools ({} positive), {} raw and {} retained predictors",
                s.ingest.n_pools,
                s.ingest.n_positive,
                s.features.raw_columns.len(),
                s.features.preprocess.n_output_columns
            );
        }
        Command::RadiusSweep { out } => {
            for r in pipeline::run_radius_sweep(&cfg, out)? {
                println!("{:>5} m  R² {:.4}{}", r.radius_m, r.r2, if r.best { "  *" } else { "" });
            }
        }
        Command::Train { extract, out } => {
            for t in pipeline::run_train(&cfg, extract, out)? {
                println!("{}: {}", t.method.as_str(), t.model_file.display());
            }
        }
        Command::Evaluate { extract, out, oracle } => {
            let r = pipeline::run_evaluate(&cfg, extract, out, oracle.as_deref())?;
            for e in &r.ensembles {
                let s = &e.selection;
                println!(
                    "{}: mean AUC {:.3}, θ(MCC max) {:.2} MCC {:.3}, θ(F max) {:.2} F {:.3}",
                    e.method.as_str(),
                    e.mean_auc,
                    s.theta_mcc_max,
                    s.at_mcc_max.mcc,
                    s.theta_f_max,
                    s.at_f_max.f_score
                );
            }
            for c in &r.comparisons {
                println!(
                    "{} vs {}: {:?} test p = {:.3e}",
                    c.a.as_str(),
                    c.b.as_str(),
                    c.result.test_used,
                    c.result.mean_test_p
                );
            }
        }
        Command::Rank { model, features, out } => {
            let ranked = pipeline::run_rank(&cfg, model, features, out)?;
            let positive = ranked.iter().filter(|r| r.predicted == 1).count();
            println!("{} sites ranked, {positive} predicted top tier", ranked.len());
        }
        Command::Bootstrap { extract, out } => {
            let r = pipeline::run_bootstrap(&cfg, extract, out)?;
            println!("{} of {} predictors stable", r.stable().count(), r.predictors.len());
        }
        Command::Synth { .. } => unreachable!("handled above"),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_input_error() || matches!(e, Error::InvalidInput(_) | Error::ModelVersion { .. }) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
