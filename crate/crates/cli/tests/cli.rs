use std::path::Path;
use std::process::{Command, Output};

fn floodrisk(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_floodrisk"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn floodrisk")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn simulate(dir: &Path) {
    let o = floodrisk(&["simulate", "--profile", "small", "--seed", "21", "--data-dir", "data"], dir);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn missing_seed_exits_2_and_names_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let o = floodrisk(&["simulate", "--profile", "small"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("seed"), "{}", stderr(&o));
}

#[test]
fn bad_flags_and_config_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let o = floodrisk(&["fit", "--task", "occurrence", "--layer", "ins+x", "--seed", "1"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("ins+x"));

    let o = floodrisk(&["fit", "--task", "occurrence", "--layer", "ins", "--all-layers", "--seed", "1"], tmp.path());
    assert_eq!(o.status.code(), Some(2));

    std::fs::write(tmp.path().join("run.json"), r#"{"seed": 1, "fold_count": 5}"#).unwrap();
    let o = floodrisk(&["ingest", "--config", "run.json"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("fold_count"), "{}", stderr(&o));

    let o = floodrisk(&["simulate", "--profile", "huge", "--seed", "1"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn ingest_reports_missing_inputs() {
    let tmp = tempfile::tempdir().unwrap();
    let o = floodrisk(&["ingest", "--seed", "1", "--data-dir", "nowhere"], tmp.path());
    assert_ne!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("nowhere"), "{}", stderr(&o));
}

#[test]
fn features_fail_without_elevation_raster() {
    let tmp = tempfile::tempdir().unwrap();
    simulate(tmp.path());
    let data = tmp.path().join("data");
    let _ = std::fs::remove_file(data.join("elevation.asc"));
    let _ = std::fs::remove_dir_all(data.join("elevation"));
    let o = floodrisk(&["features", "--seed", "21", "--data-dir", "data"], tmp.path());
    assert_ne!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("elevation"), "{}", stderr(&o));

    // without geo the pipeline still runs
    let o = floodrisk(&["features", "--seed", "21", "--data-dir", "data", "--no-geo"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn fit_all_layers_then_importance_and_residuals() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    simulate(dir);
    let common = ["--seed", "21", "--data-dir", "data", "--output-dir", "out"];
    let run = |cmd: &[&str]| {
        let args: Vec<&str> = cmd.iter().chain(common.iter()).copied().collect();
        let o = floodrisk(&args, dir);
        assert!(o.status.success(), "{}: {}", args.join(" "), stderr(&o));
        String::from_utf8(o.stdout).unwrap()
    };
    assert!(run(&["ingest"]).contains("=== summary ==="));
    run(&["features"]);
    run(&["fit", "--task", "occurrence", "--all-layers"]);

    let task = dir.join("out/occurrence");
    let mut rd = csv::Reader::from_path(task.join("metrics.csv")).unwrap();
    let header = rd.headers().unwrap().clone();
    assert!(header.iter().any(|h| h == "gini_delta_pct"));
    let rows: Vec<csv::StringRecord> = rd.records().map(Result::unwrap).collect();
    let models: Vec<&str> = rows.iter().map(|r| r.get(0).unwrap()).collect();
    assert_eq!(models.len(), 4, "{models:?}");
    for slug in ["ins", "ins_c", "ins_r", "all"] {
        assert!(task.join(slug).join("model.json").is_file(), "{slug}");
    }

    run(&["importance", "--task", "occurrence", "--layer", "ins+r"]);
    let imp = std::fs::read_to_string(task.join("ins_r/importance.csv")).unwrap();
    assert!(imp.lines().count() > 2);

    run(&["residuals", "--task", "occurrence", "--layer", "ins"]);
    assert!(task.join("ins/residual_map.csv").is_file());
    let geo: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(task.join("ins/residual_map.geojson")).unwrap()).unwrap();
    assert_eq!(geo["type"], "FeatureCollection");
}
