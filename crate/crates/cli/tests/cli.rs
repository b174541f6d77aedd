//! End-to-end checks of the `padlab` binary: exit codes, diagnostics, file
//! contracts, and byte-level determinism.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_padlab"));
    c.env_remove("PADLAB_DATA");
    c
}

fn temp_root(tag: &str) -> PathBuf {
    let p = std::env::temp_dir().join(format!("padlab-cli-{tag}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&p);
    fs::create_dir_all(&p).unwrap();
    p
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("config.ini");
    fs::write(&p, text).unwrap();
    p
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Every regular file in the run dir except the timestamped log.
fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut map = BTreeMap::new();
    for entry in fs::read_dir(dir).unwrap() {
        let entry = entry.unwrap();
        let name = entry.file_name().to_string_lossy().into_owned();
        if name == "run.log" || !entry.file_type().unwrap().is_file() {
            continue;
        }
        map.insert(name, fs::read(entry.path()).unwrap());
    }
    map
}

const PROBE_SMALL: &str = "\
[data]
train_n = 12
val_n = 4
image_side = 20
[optim]
epochs = 2
[probe]
align = 12
";

#[test]
fn probe_emits_per_epoch_rows_and_the_echo_reproduces_the_run() {
    let root = temp_root("probe");
    let cfg = write_config(&root, PROBE_SMALL);
    let out_dir = root.join("run");

    let out = bin()
        .args(["probe", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .arg("--seed")
        .arg("3")
        .output()
        .unwrap();
    assert!(out.status.success(), "probe run failed: {}", stderr_of(&out));

    let csv = fs::read_to_string(out_dir.join("probe_metrics.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "epoch,loss,spc,mae");
    assert_eq!(lines.len(), 3, "header plus one row per epoch");
    for (i, row) in lines[1..].iter().enumerate() {
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields.len(), 4, "bad row {row:?}");
        assert_eq!(fields[0], i.to_string(), "epoch column counts from zero");
        for f in &fields[1..] {
            f.parse::<f64>().unwrap_or_else(|_| panic!("non-numeric cell {f:?}"));
        }
    }
    for name in ["config_echo.ini", "pred.pgm", "target.pgm", "readout.ckpt", "run.log"] {
        assert!(out_dir.join(name).is_file(), "{name} missing from the run dir");
    }

    let before = snapshot(&out_dir);
    let echo = out_dir.join("config_echo.ini");
    let rerun = bin().args(["probe", "--config"]).arg(&echo).output().unwrap();
    assert!(rerun.status.success(), "echo rerun failed: {}", stderr_of(&rerun));
    let after = snapshot(&out_dir);
    assert_eq!(before, after, "rerunning from the echoed config must reproduce every byte");
    let _ = fs::remove_dir_all(&root);
}

#[test]
fn grid_classify_is_byte_deterministic_across_directories() {
    let root = temp_root("det");
    let cfg = write_config(
        &root,
        "\
[data]
train_n = 16
val_n = 9
patch = 6
classes = 2
[grid]
k = 3
[optim]
epochs = 2
",
    );
    let run = |out_dir: &Path| {
        let out = bin()
            .args(["grid-classify", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(out_dir)
            .output()
            .unwrap();
        assert!(out.status.success(), "grid run failed: {}", stderr_of(&out));
    };
    let a = root.join("a");
    let b = root.join("b");
    run(&a);
    run(&b);

    let mut files_a = snapshot(&a);
    let mut files_b = snapshot(&b);
    let echo_a = String::from_utf8(files_a.remove("config_echo.ini").unwrap()).unwrap();
    let echo_b = String::from_utf8(files_b.remove("config_echo.ini").unwrap()).unwrap();
    assert_eq!(files_a, files_b, "same config and seed must emit identical bytes");
    assert!(
        !files_a.is_empty() && files_a.contains_key("grid_metrics.csv"),
        "run dir should hold the metric tables, got {:?}",
        files_a.keys()
    );
    let diff: Vec<(&str, &str)> = echo_a
        .lines()
        .zip(echo_b.lines())
        .filter(|(x, y)| x != y)
        .map(|(x, y)| (x, y))
        .collect();
    assert_eq!(diff.len(), 1, "echoes differ only in the out dir: {diff:?}");
    assert!(diff[0].0.starts_with("out = "), "unexpected echo diff {diff:?}");
    let _ = fs::remove_dir_all(&root);
}

#[test]
fn unknown_keys_fail_with_a_line_numbered_diagnostic() {
    let root = temp_root("badkey");
    let cfg = write_config(&root, "[data]\ntrain_n = 8\nbogus = 1\n");
    let out = bin()
        .args(["probe", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(root.join("run"))
        .output()
        .unwrap();
    assert!(!out.status.success(), "unknown key must fail the run");
    let err = stderr_of(&out);
    assert!(err.contains("data.bogus"), "diagnostic names the key: {err}");
    assert!(err.contains("line 3"), "diagnostic names the line: {err}");
    let _ = fs::remove_dir_all(&root);
}

#[test]
fn missing_dataset_diagnostic_names_the_synthetic_fallback() {
    let root = temp_root("nodata");
    let cfg = write_config(&root, "[data]\nsource = cifar10\nclasses = 10\n");
    let empty = root.join("empty-data");
    fs::create_dir_all(&empty).unwrap();
    let out = bin()
        .args(["grid-classify", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(root.join("run"))
        .env("PADLAB_DATA", &empty)
        .output()
        .unwrap();
    assert!(!out.status.success(), "missing batches must fail the run");
    let err = stderr_of(&out);
    assert!(err.contains("data_batch_1.bin"), "diagnostic names the file: {err}");
    assert!(err.contains("source = synthetic"), "diagnostic names the fallback: {err}");

    let out = bin()
        .args(["grid-classify", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(root.join("run2"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(stderr_of(&out).contains("PADLAB_DATA"), "unset env is called out");
    let _ = fs::remove_dir_all(&root);
}

#[test]
fn reports_demand_runs_and_a_baseline() {
    let root = temp_root("report");
    let cfg = write_config(&root, "[report]\nkind = summary\n");
    let out = bin()
        .args(["report", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(root.join("run"))
        .output()
        .unwrap();
    assert!(!out.status.success(), "summary without runs must fail");
    assert!(stderr_of(&out).contains("runs"), "{}", stderr_of(&out));

    let fake = root.join("fake-run");
    fs::create_dir_all(&fake).unwrap();
    fs::write(fake.join("rings.csv"), "d,count,mean\n0,8,0.5\n1,1,0.9\n").unwrap();
    let cfg = write_config(
        &root,
        &format!("[report]\nkind = ring-diff\nruns = {}\n", fake.display()),
    );
    let out = bin()
        .args(["report", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(root.join("run2"))
        .output()
        .unwrap();
    assert!(!out.status.success(), "ring-diff without a baseline must fail");
    assert!(stderr_of(&out).contains("baseline"), "{}", stderr_of(&out));
    let _ = fs::remove_dir_all(&root);
}

#[test]
fn experiment_name_must_match_the_config() {
    let root = temp_root("mismatch");
    let cfg = write_config(&root, "[run]\nexperiment = probe\n");
    let out = bin()
        .args(["dimest", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(root.join("run"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err = stderr_of(&out);
    assert!(err.contains("probe") && err.contains("dimest"), "{err}");
    let _ = fs::remove_dir_all(&root);
}

#[test]
fn pad_compare_emits_one_row_per_mode() {
    let root = temp_root("padcmp");
    let cfg = write_config(
        &root,
        "\
[data]
train_n = 6
val_n = 2
image_side = 17
[optim]
epochs = 1
[probe]
align = 5
backbone_epochs = 1
",
    );
    let out_dir = root.join("run");
    let out = bin()
        .args(["pad-compare", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "pad-compare failed: {}", stderr_of(&out));
    let csv = fs::read_to_string(out_dir.join("pad_compare.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "mode,spc,mae");
    assert_eq!(lines.len(), 7, "six default modes, one row each");
    let modes: Vec<&str> = lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(modes, ["zero", "partial", "circular", "replicate", "reflect", "none"]);
    let _ = fs::remove_dir_all(&root);
}
