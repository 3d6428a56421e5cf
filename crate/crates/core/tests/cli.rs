use std::fs;
use std::path::Path;

use infgcn::checks::{equivariance_check_with, EquivarianceReport};
use infgcn::cli::run_from;
use infgcn::geometry::grid_coordinates;
use infgcn::io::dataset::blob_path;
use infgcn::io::{generate, load_record, read_cube, SyntheticSpec};
use infgcn::model::{Model, ModelConfig};
use infgcn::so3::wigner_blocks;
use infgcn::Error;
use serde_json::{json, Value};

fn small_model() -> Value {
    json!({ "max_degree": 1, "channels": 3, "layers": 1, "radial_embed": 6, "radial_hidden": 8 })
}

fn setup(dir: &Path, steps: usize) -> std::path::PathBuf {
    let data = dir.join("data");
    let out = run_from([
        "infgcn",
        "generate-synthetic",
        "--out",
        data.to_str().unwrap(),
        "--molecules",
        "3",
        "--grid",
        "8",
    ])
    .unwrap();
    assert_eq!(serde_json::from_str::<Value>(&out).unwrap()["written"], 3);
    let cfg = json!({
        "dataset": data,
        "train": ["synthetic_0000", "synthetic_0001"],
        "val": ["synthetic_0002"],
        "test": ["synthetic_0002"],
        "model": small_model(),
        "optim": { "steps": steps, "batch": 2, "train_sample": 64, "inf_sample": 100, "lr": 0.01, "val_every": 2 },
        "output": dir.join("run"),
    });
    let path = dir.join("config.json");
    fs::write(&path, cfg.to_string()).unwrap();
    path
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn train_is_reproducible_in_deterministic_mode() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), 4);
    let a = run_from(["infgcn", "train", "--config", arg(&cfg), "--deterministic"]).unwrap();
    let log_a = fs::read(dir.path().join("run/train.jsonl")).unwrap();
    let b = run_from(["infgcn", "train", "--config", arg(&cfg), "--deterministic"]).unwrap();
    let log_b = fs::read(dir.path().join("run/train.jsonl")).unwrap();
    assert_eq!(a, b);
    assert_eq!(log_a, log_b);
    assert_eq!(String::from_utf8(log_a).unwrap().lines().count(), 4);
    assert!(dir.path().join("run/best.ckpt").exists());
}

#[test]
fn zero_steps_write_the_initialization() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), 0);
    run_from(["infgcn", "train", "--config", arg(&cfg), "--seed", "5"]).unwrap();
    let (model, params) = Model::load_checkpoint(&dir.path().join("run/best.ckpt")).unwrap();
    assert_eq!(params, model.init_params(5));
}

#[test]
fn eval_is_independent_of_batch_size_and_runs_rotated() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = setup(dir.path(), 2);
    run_from(["infgcn", "train", "--config", arg(&cfg_path)]).unwrap();
    let ckpt = dir.path().join("run/best.ckpt");
    let mut scores = Vec::new();
    for batch in [1, 37, 512] {
        let mut cfg: Value = serde_json::from_str(&fs::read_to_string(&cfg_path).unwrap()).unwrap();
        cfg["optim"]["inf_sample"] = json!(batch);
        let p = dir.path().join(format!("cfg{batch}.json"));
        fs::write(&p, cfg.to_string()).unwrap();
        let out: Value = serde_json::from_str(
            &run_from([
                "infgcn",
                "eval",
                "--config",
                arg(&p),
                "--checkpoint",
                arg(&ckpt),
            ])
            .unwrap(),
        )
        .unwrap();
        scores.push(out["mean_nmae"].as_f64().unwrap());
    }
    assert!(
        scores.iter().all(|s| (s - scores[0]).abs() < 1e-12),
        "{scores:?}"
    );
    let rotated: Value = serde_json::from_str(
        &run_from([
            "infgcn",
            "eval",
            "--config",
            arg(&cfg_path),
            "--checkpoint",
            arg(&ckpt),
            "--rotated",
            "--jobs",
            "2",
        ])
        .unwrap(),
    )
    .unwrap();
    assert!(rotated["mean_nmae"].as_f64().unwrap().is_finite());
}

#[test]
fn predict_exports_readable_cubes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), 1);
    run_from(["infgcn", "train", "--config", arg(&cfg)]).unwrap();
    let out_dir = dir.path().join("pred");
    let ckpt = dir.path().join("run/last.ckpt");
    run_from([
        "infgcn",
        "predict",
        "--config",
        arg(&cfg),
        "--checkpoint",
        arg(&ckpt),
        "--record",
        "synthetic_0001",
        "--out",
        arg(&out_dir),
    ])
    .unwrap();
    let pred = read_cube(&out_dir.join("synthetic_0001.pred.cube")).unwrap();
    let err = read_cube(&out_dir.join("synthetic_0001.error.cube")).unwrap();
    let rec = load_record(&dir.path().join("data"), "synthetic_0001").unwrap();
    assert_eq!(pred.atoms.len(), 5);
    for ((p, e), t) in pred
        .grid
        .values
        .iter()
        .zip(&err.grid.values)
        .zip(&rec.grid.values)
    {
        assert!((p - e - t).abs() < 1e-4 * (1.0 + t.abs()));
    }
}

#[test]
fn check_subcommands_pass() {
    let dir = tempfile::tempdir().unwrap();
    for model in [
        json!({ "max_degree": 0, "channels": 2, "radial_embed": 6, "radial_hidden": 8 }),
        small_model(),
    ] {
        let p = dir.path().join("c.json");
        fs::write(&p, json!({ "model": model }).to_string()).unwrap();
        let eq: EquivarianceReport = serde_json::from_str(
            &run_from([
                "infgcn",
                "equivariance-check",
                "--config",
                arg(&p),
                "--rotations",
                "4",
            ])
            .unwrap(),
        )
        .unwrap();
        assert!(eq.passed, "{eq:?}");
        let g: Value = serde_json::from_str(
            &run_from(["infgcn", "gradcheck", "--config", arg(&p), "--params", "40"]).unwrap(),
        )
        .unwrap();
        assert_eq!(g["passed"], true, "{g}");
    }
    let demo_dir = dir.path().join("graphon");
    let d: Value = serde_json::from_str(
        &run_from([
            "infgcn",
            "graphon-demo",
            "--nodes",
            "64",
            "--out",
            arg(&demo_dir),
        ])
        .unwrap(),
    )
    .unwrap();
    assert!(d["checks"].as_array().unwrap().len() > 5);
    assert!(demo_dir.join("eigenvalue_decay.csv").exists());
}

#[test]
fn corrupted_wigner_table_fails_the_check() {
    let model = Model::new(ModelConfig {
        max_degree: 2,
        channels: 3,
        layers: 1,
        radial_embed: 6,
        radial_hidden: 8,
        ..Default::default()
    })
    .unwrap();
    let mut p = model.init_params(0);
    model.randomize_heads(&mut p, 1, 0.2);
    let inst = generate(&SyntheticSpec {
        molecules: 1,
        grid: 6,
        ..Default::default()
    })
    .unwrap()[0]
        .to_instance(3.0)
        .unwrap();
    let q = grid_coordinates(&inst.grid).unwrap();
    let corrupt = |l: usize, r: &infgcn::so3::RotationMatrix| {
        let mut b = wigner_blocks(l, r);
        b[1].d[(0, 1)] += 0.05;
        b
    };
    let rep = equivariance_check_with(&model, &p, &inst.graph, &q, 3, 0, &corrupt).unwrap();
    assert!(!rep.passed);
    assert!(rep.max_coefficient_deviation > 1e-3);
}

#[test]
fn truncated_blobs_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let rec = &generate(&SyntheticSpec {
        molecules: 1,
        grid: 4,
        ..Default::default()
    })
    .unwrap()[0];
    infgcn::io::save_record(dir.path(), rec).unwrap();
    let bp = blob_path(dir.path(), &rec.id);
    let bytes = fs::read(&bp).unwrap();
    for cut in [1, 3, 4, 100, bytes.len() - 1] {
        fs::write(&bp, &bytes[..bytes.len() - cut]).unwrap();
        assert!(
            matches!(load_record(dir.path(), &rec.id), Err(Error::Corrupt { .. })),
            "cut {cut}"
        );
    }
    let mut longer = bytes.clone();
    longer.extend_from_slice(&[0; 4]);
    fs::write(&bp, &longer).unwrap();
    assert!(load_record(dir.path(), &rec.id).is_err());
}

#[test]
fn bad_arguments_and_configs_are_reported() {
    assert!(matches!(
        run_from(["infgcn", "no-such-command"]),
        Err(Error::Parse { .. })
    ));
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.json");
    fs::write(&p, r#"{"optim": {"train_sample": 0}}"#).unwrap();
    assert!(matches!(
        run_from(["infgcn", "gradcheck", "--config", arg(&p)]),
        Err(Error::Parse { .. })
    ));
}
