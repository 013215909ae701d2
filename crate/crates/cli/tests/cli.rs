use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn evsite(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evsite")).args(args).output().expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn small_scenario_runs_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let (scen, ex, tr, ev, rk) = (
        tmp.path().join("scen"),
        tmp.path().join("extract"),
        tmp.path().join("train"),
        tmp.path().join("eval"),
        tmp.path().join("rank"),
    );
    ok(&evsite(&["synth", "--small", "--seed", "4", "--out", p(&scen)]));
    let cfg = scen.join("config.json");
    let common = ["--config", p(&cfg), "--n-splits", "3", "--k-folds", "3"];
    ok(&evsite(&[&common[..], &["extract", "--out", p(&ex)]].concat()));
    ok(&evsite(&[&common[..], &["train", "--extract", p(&ex), "--out", p(&tr)]].concat()));
    let oracle = scen.join("oracle.csv");
    let out = evsite(&[&common[..], &["evaluate", "--extract", p(&ex), "--out", p(&ev), "--oracle", p(&oracle)]].concat());
    ok(&out);
    assert!(String::from_utf8_lossy(&out.stdout).contains("mean AUC"));
    let model = tr.join("model_lr_l1.json");
    let features = ex.join("features.csv");
    ok(&evsite(&[&common[..], &["rank", "--model", p(&model), "--features", p(&features), "--out", p(&rk)]].concat()));
    for f in [ev.join("eval_report.json"), ev.join("curves.csv"), rk.join("ranking.csv")] {
        assert!(f.is_file(), "{} missing", f.display());
    }
    let ranking = fs::read_to_string(rk.join("ranking.csv")).unwrap();
    assert_eq!(ranking.lines().count(), 201);
}

#[test]
fn missing_station_column_is_an_input_error() {
    let tmp = tempfile::tempdir().unwrap();
    let scen = tmp.path().join("scen");
    ok(&evsite(&["synth", "--small", "--out", p(&scen)]));
    // drop the `lat` column
    let stations = scen.join("stations.csv");
    let text = fs::read_to_string(&stations).unwrap();
    let cut: String = text
        .lines()
        .map(|l| {
            let mut f: Vec<&str> = l.split(',').collect();
            f.remove(2);
            f.join(",") + "\n"
        })
        .collect();
    fs::write(&stations, cut).unwrap();
    let out = evsite(&["--config", p(&scen.join("config.json")), "extract", "--out", p(&tmp.path().join("x"))]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("lat"), "stderr: {err}");
}

#[test]
fn unknown_override_key_is_rejected() {
    let out = evsite(&["--set", "no_such_key=1", "radius-sweep", "--out", "/nonexistent"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no_such_key"));
}

#[test]
fn synth_is_deterministic_across_invocations() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&evsite(&["synth", "--small", "--seed", "12", "--out", p(&a)]));
    ok(&evsite(&["synth", "--small", "--seed", "12", "--out", p(&b)]));
    for name in ["stations.csv", "transactions.csv", "oracle.csv", "neighbourhoods.geojson"] {
        assert!(fs::read(a.join(name)).unwrap() == fs::read(b.join(name)).unwrap(), "{name} differs");
    }
}
