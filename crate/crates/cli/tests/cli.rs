use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"config_version = 1
seed = 3
[data]
image_size = 8
num_per_class = 20
per_class_test = 4
[grid]
n_e = [1, 2]
n_r = [1, 3]
"#;

fn fedstone(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fedstone")).args(args).current_dir(dir).output().unwrap()
}

fn ok(out: Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("tiny.toml"), TINY).unwrap();
    dir
}

#[test]
fn lpo_writes_a_reproducible_grid() {
    let dir = setup();
    let d = dir.path();
    let stdout = ok(fedstone(&["lpo", "--config", "tiny.toml", "--out", "a"], d));
    assert!(stdout.contains("best: n_e="));
    ok(fedstone(&["lpo", "--config", "tiny.toml", "--out", "b"], d));

    let csv = fs::read_to_string(d.join("a/lpo/grid.csv")).unwrap();
    let lines: Vec<_> = csv.lines().collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0], "n_e\\n_r,1,3");
    assert!(lines[1..].iter().all(|l| l.split(',').count() == 3));
    for f in ["lpo/grid.csv", "lpo/manifest.json", "lpo/data/A.manifest", "lpo/logs/ne02_nr03.jsonl"] {
        assert_eq!(fs::read(d.join("a").join(f)).unwrap(), fs::read(d.join("b").join(f)).unwrap(), "{f}");
    }
    assert_eq!(fs::read_to_string(d.join("a/lpo/logs/ne01_nr03.jsonl")).unwrap().lines().count(), 3);
    assert!(!d.join("a/lpo/grid.partial.csv").exists());
}

#[test]
fn frv_binds_to_its_grid_manifest() {
    let dir = setup();
    let d = dir.path();
    ok(fedstone(&["lpo", "--config", "tiny.toml", "--out", "run"], d));
    let manifest = fs::read_to_string(d.join("run/lpo/manifest.json")).unwrap();
    let best: serde_json::Value = serde_json::from_str(&manifest).unwrap();
    let n_r = best["grid"]["best"]["n_r"].as_u64().unwrap() as usize;

    let stdout = ok(fedstone(&["frv", "--config", "tiny.toml", "--out", "run", "--manifest", "run/lpo/manifest.json"], d));
    assert!(stdout.contains("final accuracy:"));
    let rounds = fs::read_to_string(d.join("run/frv/rounds.jsonl")).unwrap();
    assert_eq!(rounds.lines().count(), n_r);
    for client in ["A-good", "A-corrupted", "B-good", "B-corrupted"] {
        assert!(d.join(format!("run/frv/data/{client}.manifest")).exists(), "{client}");
    }

    fs::write(d.join("tampered.json"), manifest.replacen("0.", "1.", 1)).unwrap();
    let out = fedstone(&["frv", "--config", "tiny.toml", "--out", "t", "--manifest", "tampered.json"], d);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("provenance"));

    let out = fedstone(&["frv", "--config", "tiny.toml", "--out", "m", "--manifest", "missing.json"], d);
    assert_eq!(out.status.code(), Some(2));

    let out = fedstone(&["frv", "--config", "tiny.toml", "--seed", "9", "--out", "s", "--manifest", "run/lpo/manifest.json"], d);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("provenance"));
}

#[test]
fn corrupt_prints_tables_and_is_seeded() {
    let dir = setup();
    let d = dir.path();
    let tables = ok(fedstone(&["corrupt", "--print-tables"], d));
    assert_eq!(tables, fedstone_core::corruption::RELEASE_TABLES.render());
    assert!(tables.starts_with("# fedstone corruption severity tables v1\n"));

    ok(fedstone(&["lpo", "--config", "tiny.toml", "--out", "run"], d));
    let m = "run/lpo/data/B.manifest";
    ok(fedstone(&["corrupt", "--manifest", m, "--seed", "5", "--out", "c1", "--emit-grid"], d));
    ok(fedstone(&["corrupt", "--manifest", m, "--seed", "5", "--out", "c2"], d));
    ok(fedstone(&["corrupt", "--manifest", m, "--seed", "6", "--out", "c3"], d));
    let a = fs::read(d.join("c1/corrupted.manifest")).unwrap();
    assert_eq!(a, fs::read(d.join("c2/corrupted.manifest")).unwrap());
    assert_ne!(a, fs::read(d.join("c3/corrupted.manifest")).unwrap());
    let png = fs::read(d.join("c1/grid_severity3.png")).unwrap();
    assert_eq!(&png[..8], b"\x89PNG\r\n\x1a\n");

    let out = fedstone(&["corrupt", "--manifest", m, "--severity", "6"], d);
    assert!(!out.status.success());
}

#[test]
fn train_creates_missing_output_dirs_and_eval_reads_the_checkpoint() {
    let dir = setup();
    let d = dir.path();
    ok(fedstone(&["train", "--config", "tiny.toml", "--out", "deep/nested/out"], d));
    let ckpt = d.join("deep/nested/out/train/final.ckpt");
    assert!(ckpt.exists());
    assert!(d.join("deep/nested/out/train/round_1.ckpt").exists());
    let json = ok(fedstone(&["eval", "--config", "tiny.toml", "--checkpoint", ckpt.to_str().unwrap()], d));
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    let acc = v["accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));
    let again = ok(fedstone(&["eval", "--config", "tiny.toml", "--checkpoint", ckpt.to_str().unwrap()], d));
    assert_eq!(json, again);
}

#[test]
fn bad_config_exits_with_a_config_error() {
    let dir = setup();
    let d = dir.path();
    fs::write(d.join("bad.toml"), "config_version = 1\n[grid]\nn_e = [0]\n").unwrap();
    let out = fedstone(&["lpo", "--config", "bad.toml"], d);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("grid.n_e"));
}
