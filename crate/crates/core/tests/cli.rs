use std::path::Path;
use std::process::{Command, Output};

fn pal(dir: &Path, args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_pal")).current_dir(dir).args(args).output().unwrap();
    assert!(
        out.status.success(),
        "pal {args:?} failed\nstdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

#[test]
fn every_subcommand_runs_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    pal(d, &["gen-data", "--out", "data", "--n-train", "28", "--n-test", "14"]);
    assert!(d.join("data/train.json").is_file() && d.join("data/test/000013.pgm").is_file());

    pal(d, &["train", "--epochs", "1", "--method", "grad", "--strategy", "mean", "--config-id", "smoke", "--out", "runs"]);
    let ckpt = d.join("runs/smoke_s0.ckpt");
    assert!(ckpt.is_file());
    let csv = std::fs::read_to_string(d.join("runs/smoke_s0_metrics.csv")).unwrap();
    assert!(csv.lines().last().unwrap().starts_with("smoke,0,final,"));

    let eval = pal(d, &["eval", "--checkpoint", "runs/smoke_s0.ckpt", "--data", "data/test.json"]);
    assert!(!eval.stdout.is_empty());

    pal(d, &["attribute", "--checkpoint", "runs/smoke_s0.ckpt", "--data", "data/test.json", "--samples", "0,3", "--out", "maps"]);
    assert_eq!(std::fs::read_dir(d.join("maps")).unwrap().count(), 6);

    pal(d, &["gradcheck"]);

    std::fs::write(
        d.join("grid.json"),
        r#"{"seeds": [0, 1], "configs": [
            {"config_id": "base", "method": "none", "epochs": 1},
            {"config_id": "g", "method": "grad", "strategy": "mean", "epochs": 1}]}"#,
    )
    .unwrap();
    pal(d, &["ablation", "--grid", "grid.json", "--train", "data/train.json", "--test", "data/test.json", "--out", "grid.csv"]);
    let grid = std::fs::read_to_string(d.join("grid.csv")).unwrap();
    assert!(grid.starts_with("config_id,seed,tap,method,strategy,lambda,"));
    assert_eq!(grid.lines().count(), 1 + 4 + 2);
}

#[test]
fn bad_input_exits_with_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_pal"))
        .current_dir(tmp.path())
        .args(["eval", "--checkpoint", "missing.ckpt", "--data", "missing.json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());

    let out = Command::new(env!("CARGO_BIN_EXE_pal"))
        .current_dir(tmp.path())
        .args(["ablation", "--method", "grad"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--method varies"));
}
