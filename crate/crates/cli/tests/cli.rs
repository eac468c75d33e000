use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn lerwlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lerwlab")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn read_outputs(dir: &Path) -> Vec<Vec<u8>> {
    ["results.csv", "summary.json", "manifest.json"].iter().map(|f| fs::read(dir.join(f)).unwrap()).collect()
}

#[test]
fn lists_experiments() {
    let o = lerwlab(&["list"]);
    assert!(o.status.success());
    let ids: Vec<String> = stdout(&o).lines().map(String::from).collect();
    for id in ["oracle-suite", "one-point", "growth", "separation", "bottleneck", "driving", "natural-time", "escape"] {
        assert!(ids.iter().any(|l| l == id), "missing {id}");
    }
}

#[test]
fn writes_the_three_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("metric");
    let o = lerwlab(&["metric", "--replicas", "50", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("PASS identity"));
    let csv = fs::read_to_string(out.join("results.csv")).unwrap();
    assert!(csv.starts_with("experiment,param,replica,observable,value\n"));
    assert!(csv.lines().skip(1).all(|l| l.split(',').count() == 5));
    let manifest = fs::read_to_string(out.join("manifest.json")).unwrap();
    assert!(manifest.contains("\"config_hash\""));
    assert!(manifest.contains("lerwlab-core "));
    assert!(manifest.contains("results.csv"));
    let summary = fs::read_to_string(out.join("summary.json")).unwrap();
    assert!(summary.contains("truncation_violations"));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let o = lerwlab(&["escape", "--replicas", "8", "--seed", "42", "--set", "r=4,8", "--out", d.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(read_outputs(&a), read_outputs(&b));
}

#[test]
fn seed_changes_results() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for (d, s) in [(&a, "1"), (&b, "2")] {
        let o = lerwlab(&["growth", "--replicas", "5", "--seed", s, "--set", "n=10,20", "--out", d.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_ne!(fs::read(a.join("results.csv")).unwrap(), fs::read(b.join("results.csv")).unwrap());
}

#[test]
fn config_file_is_applied() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# small growth run\nn = 8, 16\nreplicas = 3\nseed = 7\n").unwrap();
    let o = lerwlab(&["growth", "--config", cfg.to_str().unwrap(), "--dry-run"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("n = 8,16"));
    assert!(text.contains("seed = 7"));
    let o = lerwlab(&["growth", "--config", cfg.to_str().unwrap(), "--replicas", "9", "--dry-run"]);
    let text = stdout(&o);
    assert!(text.contains("replicas = 9"));
    assert!(!text.contains("replicas_by_n"));
}

#[test]
fn bad_input_is_rejected() {
    assert_eq!(lerwlab(&["no-such-experiment"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "experiment = escape\n").unwrap();
    assert_eq!(lerwlab(&["growth", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
    fs::write(&cfg, "replicas = many\n").unwrap();
    assert_eq!(lerwlab(&["growth", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(lerwlab(&["growth", "--set", "novalue"]).status.code(), Some(2));
}
