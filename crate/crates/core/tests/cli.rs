//! End-to-end runs of the `flowstab` binary on the toy obstacle config.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const TOY: &str = include_str!("../configs/obstacle-toy.toml");

fn toy_config(dir: &Path, edit: impl Fn(String) -> String) -> PathBuf {
    let text = TOY
        .replace("dir = \"out/obstacle-toy\"", &format!("dir = {:?}", dir.join("out")))
        .replace("cache = \"out/obstacle-toy/cache.jsonl\"", &format!("cache = {:?}", dir.join("cache.jsonl")));
    let path = dir.join("toy.toml");
    std::fs::write(&path, edit(text)).unwrap();
    path
}

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flowstab"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn read(p: impl AsRef<Path>) -> String {
    std::fs::read_to_string(p.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", p.as_ref().display()))
}

#[test]
fn spectrum_writes_k_rows() {
    let tmp = TempDir::new().unwrap();
    let cfg = toy_config(tmp.path(), |t| t);
    let csv = tmp.path().join("s.csv");
    let out = run(tmp.path(), &["spectrum", "-c", cfg.to_str().unwrap(), "--k", "2", "--out", csv.to_str().unwrap()]);
    ok(&out);
    let text = read(&csv);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3, "{text}");
    assert!(lines[0].starts_with("re,im"));
    assert!(lines[1].ends_with(",1"), "rightmost row is flagged: {text}");
    assert!(read(tmp.path().join("s.config.toml")).contains("obstacle-toy"));
}

#[test]
fn solve_is_reproducible() {
    let tmp = TempDir::new().unwrap();
    let cfg = toy_config(tmp.path(), |t| t);
    let c = cfg.to_str().unwrap();
    ok(&run(tmp.path(), &["solve", "-c", c, "--out", "a"]));
    ok(&run(tmp.path(), &["solve", "-c", c, "--out", "b", "--xi", "0,0"]));
    for f in ["state.json", "eigen.json"] {
        assert_eq!(read(tmp.path().join("a").join(f)), read(tmp.path().join("b").join(f)), "{f}");
    }
    let doc: serde_json::Value = serde_json::from_str(&read(tmp.path().join("a/eigen.json"))).unwrap();
    assert_eq!(doc["xi"], serde_json::json!([0.0, 0.0]));
    assert_eq!(doc["config"]["eigen"]["seed"], 2024);

    ok(&run(tmp.path(), &["solve", "-c", c, "--out", "x", "--xi", "-1.5,0.5"]));
    assert_ne!(read(tmp.path().join("a/eigen.json")), read(tmp.path().join("x/eigen.json")));
}

#[test]
fn config_errors_exit_2() {
    let tmp = TempDir::new().unwrap();
    let cfg = toy_config(tmp.path(), |t| t);
    let c = cfg.to_str().unwrap();
    assert_eq!(run(tmp.path(), &["solve", "-c", c, "--xi", "0.1"]).status.code(), Some(2));
    assert_eq!(run(tmp.path(), &["solve", "-c", "missing.toml"]).status.code(), Some(2));
    let bad = toy_config(tmp.path(), |t| t.replace("[solver]", "[solver]\nmystery = 1"));
    assert_eq!(run(tmp.path(), &["spectrum", "-c", bad.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn nonconvergence_exits_3_with_trace() {
    let tmp = TempDir::new().unwrap();
    let cfg = toy_config(tmp.path(), |t| {
        t.replace("picard_steps = 6", "picard_steps = 1")
            .replace("max_newton_steps = 15", "max_newton_steps = 1")
            .replace("rel_tol = 1e-8", "rel_tol = 1e-14")
    });
    let out = run(tmp.path(), &["solve", "-c", cfg.to_str().unwrap(), "--out", "nc"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value = serde_json::from_str(&read(tmp.path().join("nc/trace.json"))).unwrap();
    assert!(doc["residuals"].as_array().unwrap().len() >= 2);
    assert!(!tmp.path().join("nc/state.json").exists());
}

#[test]
fn train_assess_and_cache() {
    let tmp = TempDir::new().unwrap();
    let cfg = toy_config(tmp.path(), |t| t);
    let c = cfg.to_str().unwrap();
    let cov1 = tmp.path().join("out/cov-1");
    let cov10 = tmp.path().join("out/cov-10");

    ok(&run(tmp.path(), &["train", "-c", c, "--only", "gp"]));
    assert!(cov1.join("gp.json").exists());
    assert!(!cov1.join("nn.json").exists() && !cov1.join("sc.json").exists());
    let gp_first = read(cov1.join("gp.json"));
    ok(&run(tmp.path(), &["train", "-c", c, "--only", "gp"]));
    assert_eq!(gp_first, read(cov1.join("gp.json")));

    ok(&run(tmp.path(), &["train", "-c", c]));
    let nn_first = read(cov10.join("nn.json"));
    ok(&run(tmp.path(), &["train", "-c", c, "--cov", "0.1", "--no-cache"]));
    assert_eq!(nn_first, read(cov10.join("nn.json")));
    assert!(read(cov1.join("training.csv")).starts_with("xi1,xi2,weight,re,im"));

    ok(&run(tmp.path(), &["assess", "-c", c]));
    let table = read(cov10.join("table.csv"));
    assert_eq!(table.lines().next().unwrap(), "metric,mc,sc,gp,nn");
    let rows: Vec<&str> = table.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(rows, ["rmse", "mu", "sigma", "pr_nonneg"]);
    assert!(cov1.join("table.csv").exists() && cov1.join("kde.csv").exists());
    let cached = read(cov10.join("report.json"));

    ok(&run(tmp.path(), &["assess", "-c", c, "--cov", "0.1", "--no-cache"]));
    assert_eq!(cached, read(cov10.join("report.json")), "cache does not change results");

    ok(&run(tmp.path(), &["assess", "-c", c, "--cov", "0.1", "--mc-only"]));
    assert_eq!(read(cov10.join("table.csv")).lines().next().unwrap(), "metric,mc");

    let out = run(tmp.path(), &["cache", "inspect", "-c", c]);
    ok(&out);
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    // two CoVs: 29 grid nodes and 40 samples each
    assert_eq!(summary["entries"], 2 * (29 + 40));
    assert_eq!(summary["fingerprints"].as_object().unwrap().len(), 2);

    ok(&run(tmp.path(), &["cache", "clear", "--path", tmp.path().join("cache.jsonl").to_str().unwrap()]));
    assert!(!tmp.path().join("cache.jsonl").exists());
    ok(&run(tmp.path(), &["assess", "-c", c, "--cov", "0.1"]));
    assert_eq!(cached, read(cov10.join("report.json")), "missing cache is recomputed");
}
