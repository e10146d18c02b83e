use std::path::Path;

use latent_rcps::config::RunConfig;
use latent_rcps::pipeline::{self, RunPaths};
use latent_rcps::Error;
use serde_json::Value;

fn small(dir: &Path) -> RunConfig {
    let mut cfg = RunConfig {
        experiment: "small".into(),
        seed: 4,
        ..RunConfig::default()
    };
    cfg.data.n = 2000;
    cfg.train.epochs = 3;
    cfg.train.hidden = vec![32];
    cfg.coverage.trials = 7;
    cfg.coverage.pool = 300;
    cfg.adaptivity.per_level = 20;
    cfg.output.dir = dir.to_path_buf();
    cfg
}

fn json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_rows(path: impl AsRef<Path>) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path)
        .unwrap()
        .records()
        .map(Result::unwrap)
        .collect()
}

#[test]
fn full_pipeline_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small(tmp.path());
    let paths = RunPaths::new(&cfg);
    assert_eq!(paths.root, tmp.path().join("small-seed4"));

    pipeline::generate(&cfg).unwrap();
    for split in ["train", "calibration", "validation"] {
        assert!(paths.root.join(format!("data/{split}.lrds")).is_file());
        assert!(paths.root.join(format!("data/{split}.csv")).is_file());
    }
    let manifest = json(paths.root.join("data/manifest.json"));
    assert_eq!(
        (manifest["train"].as_u64(), manifest["calibration"].as_u64()),
        (Some(1600), Some(200))
    );
    assert_eq!(RunConfig::load(&paths.config()).unwrap(), cfg);

    pipeline::train(&cfg).unwrap();
    let trace = csv_rows(paths.model().join("loss_trace.csv"));
    assert_eq!(trace.len(), 3);
    let summary = json(paths.model().join("summary.json"));
    assert!(summary["last_epoch_loss"].as_f64() < summary["first_epoch_loss"].as_f64());

    pipeline::calibrate_cmd(&cfg).unwrap();
    let cal = json(paths.calibration().join("summary.json"));
    assert_eq!(csv_rows(paths.calibration().join("curve.csv")).len(), 1000);
    assert_eq!(cal["n"], 200);
    assert_eq!(cal["bound_kind"], "hoeffding-bentkus");

    pipeline::evaluate(&cfg).unwrap();
    let eval = json(paths.evaluation().join("summary.json"));
    assert_eq!(eval["lambda_hat"], cal["lambda_hat"]);
    assert_eq!(eval["calibration_risk"], cal["risk_at_lambda_hat"]);
    assert_eq!(
        csv_rows(paths.evaluation().join("adaptivity.csv")).len(),
        60
    );
    assert_eq!(
        csv_rows(paths.evaluation().join("adaptivity_histogram.csv")).len(),
        3 * 41
    );

    pipeline::coverage(&cfg).unwrap();
    assert_eq!(csv_rows(paths.coverage().join("trials.csv")).len(), 7);
    let cov = json(paths.coverage().join("summary.json"));
    assert_eq!(
        (cov["n_calibration"].as_u64(), cov["n_eval"].as_u64()),
        (Some(150), Some(150))
    );

    pipeline::visualize(&cfg).unwrap();
    let manifest = csv_rows(paths.visualize().join("manifest.csv"));
    assert_eq!(manifest.len(), 2 + 2 * 8);
    for row in &manifest {
        assert!(paths.visualize().join(&row[0]).is_file());
    }
    let rows = csv_rows(paths.visualize().join("intervals.csv"));
    assert_eq!(rows.len(), 8);
    for r in rows {
        let v: Vec<f64> = (1..7).map(|i| r[i].parse().unwrap()).collect();
        let covered = v[3] <= v[5] && v[5] <= v[4];
        assert_eq!(&r[7], if covered { "true" } else { "false" });
    }
}

#[test]
fn visualize_without_dims_writes_input_and_point_only() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small(tmp.path());
    cfg.data.policy = "mask:0.3,0.6,0.9".into();
    cfg.visualize.dims = Some(vec![]);
    pipeline::generate(&cfg).unwrap();
    pipeline::train(&cfg).unwrap();
    pipeline::calibrate_cmd(&cfg).unwrap();
    pipeline::visualize(&cfg).unwrap();
    let dir = RunPaths::new(&cfg).visualize();
    let files: Vec<String> = csv_rows(dir.join("manifest.csv"))
        .iter()
        .map(|r| r[0].to_string())
        .collect();
    assert_eq!(files, ["input.pgm", "input_mask.pgm", "point.pgm"]);
}

#[test]
fn infeasible_calibration_still_writes_results() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small(tmp.path());
    cfg.data.n = 200;
    cfg.train.epochs = 1;
    cfg.grid.max = 0.01;
    cfg.grid.count = 2;
    pipeline::generate(&cfg).unwrap();
    pipeline::train(&cfg).unwrap();
    let err = pipeline::calibrate_cmd(&cfg).unwrap_err();
    assert!(matches!(err, Error::Infeasible { .. }));
    assert_eq!(err.exit_code(), 4);
    let paths = RunPaths::new(&cfg);
    let cal = json(paths.calibration().join("summary.json"));
    assert_eq!(cal["lambda_hat"], Value::Null);
    assert_eq!(cal["feasible"], false);
    assert_eq!(pipeline::evaluate(&cfg).unwrap_err().exit_code(), 4);
}

#[test]
fn near_vacuous_alpha_selects_the_grid_start() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small(tmp.path());
    cfg.data.n = 1000;
    cfg.train.epochs = 1;
    cfg.risk.alpha = 0.999;
    pipeline::generate(&cfg).unwrap();
    pipeline::train(&cfg).unwrap();
    pipeline::calibrate_cmd(&cfg).unwrap();
    let cal = json(RunPaths::new(&cfg).calibration().join("summary.json"));
    // Within the first 5% of the grid.
    assert!(
        cal["lambda_hat"].as_f64().unwrap() <= 0.05 * cfg.grid.max,
        "{cal}"
    );
}

#[test]
fn missing_and_mismatched_inputs() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small(tmp.path());
    cfg.data.n = 100;
    assert_eq!(pipeline::train(&cfg).unwrap_err().exit_code(), 2);
    pipeline::generate(&cfg).unwrap();
    assert_eq!(pipeline::calibrate_cmd(&cfg).unwrap_err().exit_code(), 2);

    let header = RunPaths::new(&cfg).root.join("data/train.lrds");
    let mut bytes = std::fs::read(&header).unwrap();
    bytes[0] = 0;
    std::fs::write(&header, bytes).unwrap();
    assert_eq!(pipeline::train(&cfg).unwrap_err().exit_code(), 2);

    pipeline::generate(&cfg).unwrap();
    cfg.data.policy = "downsample:1,4".into();
    assert!(matches!(
        pipeline::train(&cfg).unwrap_err(),
        Error::Config(_)
    ));
}

#[test]
fn tiny_datasets_fail_validation_without_writing() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small(tmp.path());
    cfg.data.n = 5;
    let err = pipeline::generate(&cfg).unwrap_err();
    assert_eq!(err.exit_code(), 1);
    assert_eq!(std::fs::read_dir(tmp.path()).unwrap().count(), 0);
}

#[test]
fn config_validation() {
    let ok = RunConfig::from_toml("seed = 3\n[data]\nn = 100\n").unwrap();
    assert_eq!(ok.seed, 3);
    for bad in [
        "unknown = 1",
        "[data]\npolicy = \"blur:3\"",
        "[data]\npolicy = \"downsample:3\"",
        "[data]\nrelevant_dims = 9",
        "[risk]\nalpha = 1.0",
        "[risk]\nbound = \"chernoff\"",
        "[train]\nlearning_rate = -1.0",
        "[train]\noptimizer = \"lbfgs\"",
        "[grid]\ncount = 0",
        "[adaptivity]\nlevels = \"mask\"",
        "[visualize]\ndims = [8]",
        "experiment = \"a/b\"",
        "[generator]\ndim = 4",
    ] {
        let err = RunConfig::from_toml(bad).unwrap_err();
        assert_eq!(err.exit_code(), 1, "{bad}: {err}");
    }
}

#[test]
fn ablation_covers_each_weight() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small(tmp.path());
    cfg.data.n = 300;
    cfg.train.epochs = 1;
    cfg.train.hidden = vec![8];
    pipeline::generate(&cfg).unwrap();
    pipeline::ablate(&cfg).unwrap();
    let dir = RunPaths::new(&cfg).ablate();
    let rows = csv_rows(dir.join("summary.csv"));
    let weights: Vec<f64> = rows.iter().map(|r| r[0].parse().unwrap()).collect();
    assert_eq!(weights, pipeline::ABLATION_WEIGHTS);
    for c in ["c0", "c1", "c10"] {
        assert!(dir.join(c).join("encoder.lrck").is_file());
        assert!(dir.join(c).join("curve.csv").is_file());
    }
}
