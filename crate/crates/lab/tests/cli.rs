use std::path::Path;
use std::process::{Command, Output};

use solopo_lab::run::{RunManifest, SUBDIRS};

fn solopo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_solopo")).args(args).env_remove("SOLOPO_RUN_DIR").output().unwrap()
}

fn out_dir(root: &Path, name: &str) -> String {
    root.join(name).display().to_string()
}

#[test]
fn speedup_prints_three_decimals_and_writes_layout() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = out_dir(tmp.path(), "sp");
    let o = solopo(&["speedup", "--c", "0.125", "--out", &dir]);
    assert!(o.status.success());
    assert_eq!(String::from_utf8(o.stdout).unwrap().trim(), "1.939");
    for sub in SUBDIRS {
        assert!(Path::new(&dir).join(sub).is_dir());
    }
    let m: RunManifest = solopo_lab::io::read_json(&Path::new(&dir).join("manifest.json")).unwrap();
    assert_eq!(m.subcommand, "speedup");
    assert_eq!(m.outputs[0].path, "reports/efficiency.csv");
}

#[test]
fn speedup_rejects_out_of_range_compression() {
    let tmp = tempfile::tempdir().unwrap();
    let o = solopo(&["speedup", "--c", "1.5", "--out", &out_dir(tmp.path(), "x")]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn run_dir_env_override() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("env");
    let o = Command::new(env!("CARGO_BIN_EXE_solopo")).args(["speedup"]).env("SOLOPO_RUN_DIR", &dir).output().unwrap();
    assert!(o.status.success());
    assert!(dir.join("manifest.json").is_file());
}

fn small_bounds_config(root: &Path) -> String {
    let p = root.join("bounds.cfg");
    std::fs::write(&p, "seed = 4\nlemma1_instances = 20000\nscenarios = 500\nnecessity_attempts = 10000\n").unwrap();
    p.display().to_string()
}

#[test]
fn verify_bounds_passes_and_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_bounds_config(tmp.path());
    let (a, b) = (out_dir(tmp.path(), "a"), out_dir(tmp.path(), "b"));
    assert!(solopo(&["verify-bounds", "--config", &cfg, "--out", &a]).status.success());
    assert!(solopo(&["verify-bounds", "--config", &cfg, "--out", &b]).status.success());
    let read = |d: &str| std::fs::read(Path::new(d).join("reports/bounds.json")).unwrap();
    assert_eq!(read(&a), read(&b));
}

#[test]
fn verify_bounds_self_test_fails_with_witness() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_bounds_config(tmp.path());
    let dir = out_dir(tmp.path(), "bad");
    let o = solopo(&["verify-bounds", "--config", &cfg, "--out", &dir, "--inject-nonconvex"]);
    assert_eq!(o.status.code(), Some(1));
    let w = std::fs::read_to_string(Path::new(&dir).join("reports/witnesses.json")).unwrap();
    assert!(w.contains("lemma1_nonconvex"));
}

#[test]
fn config_errors_name_path_and_line() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.cfg");
    std::fs::write(&cfg, "seed = 1\n# ok\nwidht = 3\n").unwrap();
    let o = solopo(&["speedup", "--config", cfg.to_str().unwrap(), "--out", &out_dir(tmp.path(), "x")]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.contains("run.cfg:3:") && err.contains("widht"), "{err}");
}

#[test]
fn forge_train_eval_chain() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("small.cfg");
    std::fs::write(
        &cfg,
        "seed = 2\nn_sources = 260\nn_train = 200\nn_val = 30\nn_test = 30\nwidth = 16\nsft_epochs = 4\nepochs = 2\nn_candidates = 8\n",
    )
    .unwrap();
    let cfg = cfg.to_str().unwrap();
    let (f, t, e) = (out_dir(tmp.path(), "f"), out_dir(tmp.path(), "t"), out_dir(tmp.path(), "e"));
    let o = solopo(&["forge", "--config", cfg, "--out", &f]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = solopo(&["train", "--config", cfg, "--data", &f, "--out", &t]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let model = Path::new(&t).join("checkpoints/model.bin");
    let test = Path::new(&f).join("data/test.jsonl");
    let o = solopo(&["eval", "--model", model.to_str().unwrap(), "--data", test.to_str().unwrap(), "--out", &e]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(Path::new(&t).join("logs/steps.csv").is_file());
    let m: RunManifest = solopo_lab::io::read_json(&Path::new(&t).join("manifest.json")).unwrap();
    assert_eq!(m.inputs.len(), 4);

    let bad = tmp.path().join("bad.jsonl");
    let good = std::fs::read_to_string(&test).unwrap();
    let first = good.lines().next().unwrap();
    std::fs::write(&bad, format!("{first}\n{first}\nnot json\n")).unwrap();
    let o = solopo(&["eval", "--model", model.to_str().unwrap(), "--data", bad.to_str().unwrap(), "--out", &e]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8(o.stderr).unwrap().contains("bad.jsonl:3:"));
}
