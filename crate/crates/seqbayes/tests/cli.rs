//! End-to-end contract tests for the `seqbayes` binary: exit codes, output
//! schemas, and byte-level reproducibility.

use std::fs;
use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_seqbayes"))
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

const ALPHA: &str = r#"
[[atoms]]
point = 0.7
weight = 2.0

[diffuse]
base = "uniform"
lo = 0.0
hi = 1.0
mass = 3.0
"#;

const MODEL: &str = r#"
theta = ["t0", "t1"]
prior = ["1/2", "1/2"]
inputs = ["x0", "x1"]
labels = ["y0", "y1"]

[[sampling]]
theta = "t0"
dists = [["1/5", "4/5"], ["9/10", "1/10"]]

[[sampling]]
theta = "t1"
dists = [["3/5", "2/5"], ["3/10", "7/10"]]
"#;

#[test]
fn malformed_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", "family = \"gp\"\nnot toml at all");
    let status = bin().args(["gp", "--config"]).arg(&cfg).status().unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn unknown_config_keys_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "extra.toml",
        "family = \"finite\"\nmodels = 2\nmax-theta = 3\nmax-inputs = 2\nmax-labels = 2\nmax-n = 1\nseed = 1\nmode = \"float64\"\nout = \"o\"\nsurprise = 1\n",
    );
    let status = bin().args(["invert", "--config"]).arg(&cfg).status().unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn family_mismatch_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write(
        dir.path(),
        "finite.toml",
        &format!(
            "family = \"finite\"\nmodels = 2\nmax-theta = 3\nmax-inputs = 2\nmax-labels = 2\nmax-n = 1\nseed = 1\nmode = \"float64\"\nout = {out:?}\n"
        ),
    );
    let status = bin().args(["gp", "--config"]).arg(&cfg).status().unwrap();
    assert_eq!(status.code(), Some(3));
}

#[test]
fn validation_error_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let alpha = write(dir.path(), "alpha.toml", ALPHA);
    // `project` without a partition.
    let status = bin()
        .args(["dp", "project", "--alpha"])
        .arg(&alpha)
        .arg("--out")
        .arg(dir.path().join("out"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(3));
}

#[test]
fn failed_check_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let status = bin()
        .args([
            "gp",
            "--n",
            "20",
            "--m",
            "2",
            "--mean-tol",
            "1e-30",
            "--cov-tol",
            "1e-30",
            "--out",
        ])
        .arg(dir.path().join("out"))
        .stdout(std::process::Stdio::null())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn config_run_matches_flag_run_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let out_flags = dir.path().join("flags");
    let out_cfg = dir.path().join("cfg");
    let status = bin()
        .args(["invert", "--models", "5", "--seed", "11", "--mode", "float64", "--out"])
        .arg(&out_flags)
        .stdout(std::process::Stdio::null())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let cfg = write(
        dir.path(),
        "run.toml",
        &format!(
            "family = \"finite\"\nmodels = 5\nmax-theta = 6\nmax-inputs = 4\nmax-labels = 5\nmax-n = 5\nseed = 11\nmode = \"float64\"\nout = {:?}\n",
            out_cfg
        ),
    );
    let status = bin()
        .args(["invert", "--config"])
        .arg(&cfg)
        .stdout(std::process::Stdio::null())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    assert_eq!(
        fs::read(out_flags.join("invert.csv")).unwrap(),
        fs::read(out_cfg.join("invert.csv")).unwrap()
    );
}

#[test]
fn dp_sample_is_byte_reproducible_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let alpha = write(dir.path(), "alpha.toml", ALPHA);
    for sub in ["a", "b"] {
        let status = bin()
            .args(["dp", "sample", "--alpha"])
            .arg(&alpha)
            .args(["--sticks", "50", "--seed", "99", "--out"])
            .arg(dir.path().join(sub))
            .stdout(std::process::Stdio::null())
            .status()
            .unwrap();
        assert_eq!(status.code(), Some(0));
    }
    let a = fs::read(dir.path().join("a/dp_sample.csv")).unwrap();
    let b = fs::read(dir.path().join("b/dp_sample.csv")).unwrap();
    assert!(!a.is_empty());
    assert_eq!(a, b);
}

#[test]
fn predict_emits_exact_weight_table() {
    let dir = tempfile::tempdir().unwrap();
    let model = write(dir.path(), "model.toml", MODEL);
    let sample = write(dir.path(), "sample.toml", "pairs = [[\"x0\", \"y0\"], [\"x1\", \"y1\"]]\n");
    let out = dir.path().join("out");
    let status = bin()
        .args(["predict", "--model"])
        .arg(&model)
        .arg("--sample")
        .arg(&sample)
        .args(["--test", "x0,x1", "--out"])
        .arg(&out)
        .stdout(std::process::Stdio::null())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let table = fs::read_to_string(out.join("predictive.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next(), Some("y1,y2,weight"));
    // Posterior is (1/22, 21/22); P(y0,y0) = 9/50 by hand.
    assert_eq!(lines.next(), Some("y0,y0,9/50"));
    // Weights are exact rationals summing to one.
    let weights: Vec<&str> = table.lines().skip(1).map(|l| l.rsplit(',').next().unwrap()).collect();
    assert_eq!(weights.len(), 4);
}

#[test]
fn bench_csv_schema_contract() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let status = bin()
        .args(["bench", "--n", "25", "--m", "3", "--reps", "1", "--seed", "5", "--out"])
        .arg(&out)
        .stdout(std::process::Stdio::null())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0), "crossover must exist even at n=25");
    let table = fs::read_to_string(out.join("bench.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next(), Some("n,method,median_s,reps"));
    let mut last_n = 0usize;
    let mut rows = 0usize;
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 4);
        let n: usize = fields[0].parse().unwrap();
        assert!(n >= last_n, "n column must be ascending");
        last_n = n;
        assert!(fields[1] == "batch" || fields[1] == "recursive");
        assert_eq!(fields[3], "1");
        rows += 1;
    }
    assert_eq!(rows, 50); // both methods for every n in 1..=25
}

#[test]
fn report_toml_parses_and_echoes_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let status = bin()
        .args(["gp", "--n", "10", "--m", "2", "--seed", "3", "--out"])
        .arg(&out)
        .stdout(std::process::Stdio::null())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let report: toml::Value =
        toml::from_str(&fs::read_to_string(out.join("report.toml")).unwrap()).unwrap();
    assert_eq!(report["config"]["family"].as_str(), Some("gp"));
    assert_eq!(report["config"]["seed"].as_integer(), Some(3));
    assert!(report["rng"].as_str().unwrap().contains("ChaCha12"));
    assert!(report["timing"]["total_s"].as_float().is_some());
}
