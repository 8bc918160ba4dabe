//! End-to-end tests of the `mmcl` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TINY: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/tiny.toml");

fn mmcl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mmcl"))
        .args(args)
        .env("MMCL_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, name: &str) -> PathBuf {
    let out = dir.join(name);
    let o = mmcl(&["synth", "--config", TINY, "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

fn csv_rows(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path).unwrap().lines().map(str::to_string).collect()
}

#[test]
fn synth_is_deterministic_and_loadable() {
    let dir = tempfile::tempdir().unwrap();
    let a = synth(dir.path(), "a.csv");
    let b = synth(dir.path(), "b.csv");
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let data = mmcl::data::load_dataset(&a, mmcl::data::DataFormat::Csv).unwrap();
    assert_eq!(data.len(), 60);
    let j = synth(dir.path(), "c.json");
    let from_json = mmcl::data::load_dataset(&j, mmcl::data::DataFormat::Json).unwrap();
    assert_eq!(from_json, data);
}

#[test]
fn unknown_config_key_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[model.encoder]\ncutof_ratio = 0.2\n").unwrap();
    let o = mmcl(&["synth", "--config", s(&cfg), "--out", s(&dir.path().join("x.csv"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("cutof_ratio"));
}

#[test]
fn train_eval_and_export() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), "d.csv");
    let run = dir.path().join("run");
    let o = mmcl(&["train", "--config", TINY, "--data", s(&data), "--out", s(&run), "--seed", "3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["checkpoint.mmcl", "trace.csv", "metrics.json", "config.toml"] {
        assert!(run.join(f).is_file(), "{f} missing");
    }
    let metrics: serde_json::Value = serde_json::from_slice(&std::fs::read(run.join("metrics.json")).unwrap()).unwrap();
    assert!(metrics["mae"].as_f64().unwrap().is_finite());

    // 60 samples, 70% train = 42; batches of 8 give 5 full batches plus one of 2;
    // 4 epochs = 24 steps; one row per enabled loss (6) per completed 5-step window (4).
    let trace = csv_rows(&run.join("trace.csv"));
    assert_eq!(trace[0], "step,loss_name,value");
    assert_eq!(trace.len() - 1, 6 * (24 / 5));

    let ckpt = run.join("checkpoint.mmcl");
    let o = mmcl(&["eval", "--checkpoint", s(&ckpt), "--data", s(&data), "--out", s(&dir.path().join("m.json"))]);
    assert!(o.status.success());

    let e1 = dir.path().join("e1.csv");
    let e2 = dir.path().join("e2.csv");
    for e in [&e1, &e2] {
        let o = mmcl(&["export-embeddings", "--checkpoint", s(&ckpt), "--data", s(&data), "--out", s(e)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(std::fs::read(&e1).unwrap(), std::fs::read(&e2).unwrap());
    let rows = csv_rows(&e1);
    assert_eq!(rows.len() - 1, 60);
    // id, label, class, then fusion_dim = 8 values
    assert!(rows[1..].iter().all(|r| r.split(',').count() == 3 + 8));
}

#[test]
fn missing_data_file_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = mmcl(&["train", "--config", TINY, "--data", "/definitely/not/here.csv", "--out", s(&dir.path().join("r"))]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn ablate_suites_write_expected_tables() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), "d.csv");
    let header = "setting,acc7,acc2_has0,acc2_non0,f1_has0,f1_non0,mae,corr";
    for (suite, rows) in [("modalities", 7), ("losses", 9)] {
        let out = dir.path().join(format!("{suite}.csv"));
        let o = mmcl(&["ablate", "--config", TINY, "--data", s(&data), "--suite", suite, "--out", s(&out), "--seed", "1"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let lines = csv_rows(&out);
        assert_eq!(lines[0], header);
        assert_eq!(lines.len() - 1, rows, "{suite}");
    }
    let o = mmcl(&["ablate", "--config", TINY, "--suite", "bogus", "--out", s(&dir.path().join("x.csv"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn grid_ranks_every_point() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("grid.csv");
    let o = mmcl(&["grid", "--config", TINY, "--out", s(&out), "--seed", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let lines = csv_rows(&out);
    assert_eq!(lines[0], "rank,mu,tau,val_reg");
    assert_eq!(lines.len() - 1, 2);
}
