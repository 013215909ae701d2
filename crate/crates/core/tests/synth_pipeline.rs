use std::fs;
use std::path::Path;

use evsite_core::config::RunConfig;
use evsite_core::eval::auc;
use evsite_core::geo::layer::read_geojson;
use evsite_core::geo::Projection;
use evsite_core::pipeline::{evaluate, load_dataset, read_reference_scores, run_extract};
use evsite_core::synth::{generate, ScenarioSpec, SCENARIO_CONFIG};

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

#[test]
fn generated_scenario_round_trips_through_the_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let (scen, out) = (tmp.path().join("scen"), tmp.path().join("extract"));
    let spec = ScenarioSpec::small(3);
    let truth = generate(&spec, &scen).unwrap();
    let cfg = RunConfig::load(&scen.join(SCENARIO_CONFIG)).unwrap();
    let summary = run_extract(&cfg, &out, false).unwrap();
    assert_eq!(summary.ingest.n_pools, truth.n_pools);
    assert_eq!(summary.features.preprocess.n_output_columns, truth.n_processed_predictors);

    // labels recovered from transactions equal the planted ones
    let (x, y) = load_dataset(&out).unwrap();
    let planted = read_reference_scores(&scen.join("oracle.csv"), "label", x.row_ids()).unwrap();
    assert!(y.iter().zip(&planted).all(|(&a, &b)| f64::from(a) == b));
    let signal = read_reference_scores(&scen.join("oracle.csv"), "signal", x.row_ids()).unwrap();
    assert!((auc(&y, &signal).unwrap() - truth.oracle_auc).abs() < 1e-12);

    // polygon counts match the scenario settings and land use tiles the study area
    let proj = Projection::new(spec.center_lat);
    let (hoods, _) = read_geojson(&scen.join("neighbourhoods.geojson"), "n", &proj).unwrap();
    assert_eq!(hoods.features.len(), spec.n_neighbourhoods);
    let (landuse, _) = read_geojson(&scen.join("landuse.geojson"), "l", &proj).unwrap();
    assert_eq!(landuse.features.len(), spec.n_landuse);
    let covered: f64 = landuse.features.iter().map(|f| f.area()).sum();
    let side = spec.bbox_km * 1000.0;
    assert!((covered / (side * side) - 1.0).abs() < 1e-3, "land use covers {covered}");
}

#[test]
fn same_seed_gives_identical_files() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = ScenarioSpec::small(8);
    generate(&spec, &tmp.path().join("a")).unwrap();
    generate(&spec, &tmp.path().join("b")).unwrap();
    let (a, b) = (files(&tmp.path().join("a")), files(&tmp.path().join("b")));
    assert!(!a.is_empty());
    assert_eq!(a.len(), b.len());
    for (fa, fb) in a.iter().zip(&b) {
        assert_eq!(fa.0, fb.0);
        assert!(fa.1 == fb.1, "{} differs", fa.0);
    }
    let other = files(&{
        let d = tmp.path().join("c");
        generate(&ScenarioSpec::small(9), &d).unwrap();
        d
    });
    assert!(other.iter().zip(&a).any(|(x, y)| x.1 != y.1));
}

#[test]
fn without_planted_effects_models_stay_near_chance() {
    // A single small null dataset carries its own chance associations into every
    // split, so average over independent scenarios instead.
    let tmp = tempfile::tempdir().unwrap();
    let mut means = Vec::new();
    for seed in 0..6 {
        let (scen, out) = (tmp.path().join(format!("s{seed}")), tmp.path().join(format!("e{seed}")));
        let spec = ScenarioSpec {
            coefficient_scale: 0.0,
            ..ScenarioSpec::small(100 + seed)
        };
        generate(&spec, &scen).unwrap();
        let mut cfg = RunConfig::load(&scen.join(SCENARIO_CONFIG)).unwrap();
        cfg.n_splits = 8;
        cfg.k_folds = 5;
        run_extract(&cfg, &out, false).unwrap();
        let (x, y) = load_dataset(&out).unwrap();
        let report = evaluate(&cfg, &x, &y, None).unwrap();
        assert_eq!(report.ensembles[0].aucs.len(), 8);
        means.push(report.ensembles[0].mean_auc);
    }
    let overall = means.iter().sum::<f64>() / means.len() as f64;
    assert!((0.4..=0.6).contains(&overall), "mean AUC {overall} per scenario {means:?}");
}
