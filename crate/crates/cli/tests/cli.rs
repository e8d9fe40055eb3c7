use std::path::Path;
use std::process::{Command, Output};

fn plab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_plab"))
        .args(args)
        .env_remove("PLAB_DATA_DIR")
        .output()
        .expect("spawn plab")
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap()
}

#[test]
fn help_exits_zero() {
    for args in [&["--help"][..], &["persist", "--help"], &["table1", "--help"]] {
        let out = plab(args);
        assert_eq!(out.status.code(), Some(0), "{args:?}");
        assert!(String::from_utf8_lossy(&out.stdout).contains("Usage"));
    }
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(plab(&["no-such-command"]).status.code(), Some(2));
    // --seed is mandatory for stochastic commands.
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let o = plab(&["concentration", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_data_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let o = plab(&[
        "pca",
        "--out",
        out.to_str().unwrap(),
        "--mnist-dir",
        dir.path().join("absent").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("MNIST"));
}

#[test]
fn missing_checkpoint_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let o = plab(&[
        "robust-eval",
        "--out",
        out.to_str().unwrap(),
        "--pmnist",
        dir.path().to_str().unwrap(),
        "--model",
        "baseline=missing.json",
    ]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn concentration_bundle_and_rerun_are_bitwise_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let o = plab(&[
        "concentration",
        "--out",
        a.to_str().unwrap(),
        "--seed",
        "7",
        "--count",
        "5000",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest = plab::data::load_bundle(&a).unwrap();
    assert_eq!(manifest.command, "concentration");
    for f in ["concentration.csv", "norms.csv", "norms.svg", "config.json"] {
        assert!(manifest.files.contains_key(f), "{f}");
    }
    let csv = String::from_utf8(read(&a, "concentration.csv")).unwrap();
    assert!(csv.starts_with("epsilon,gaussian_empirical,gaussian_bound,"));
    assert_eq!(csv.lines().count(), 11);

    let b = dir.path().join("b");
    let o = plab(&[
        "rerun",
        a.join("config.json").to_str().unwrap(),
        "--out",
        b.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["concentration.csv", "norms.csv", "norms.svg"] {
        assert_eq!(read(&a, f), read(&b, f), "{f}");
    }
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let mut outs = Vec::new();
    for threads in ["1", "3"] {
        let out = dir.path().join(threads);
        let o = plab(&[
            "--threads",
            threads,
            "concentration",
            "--out",
            out.to_str().unwrap(),
            "--seed",
            "2",
            "--count",
            "3000",
            "--n",
            "50",
            "--eps-grid",
            "0.5,1,2,4",
        ]);
        assert!(o.status.success());
        outs.push(read(&out, "norms.csv"));
    }
    assert_eq!(outs[0], outs[1]);
}

#[test]
fn table1_without_models_writes_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t");
    let o = plab(&["table1", "--out", out.to_str().unwrap(), "--seed", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = String::from_utf8(read(&out, "table1.csv")).unwrap();
    assert_eq!(csv.trim_end(), "Network,TestAcc,AvgDist,PersistNat,PersistAdv");
}
