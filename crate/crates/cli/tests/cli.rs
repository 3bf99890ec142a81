use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tasd::matrix::load_matrix;
use tasd::search::Assignment;

fn tasd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tasd"))
        .args(args)
        .output()
        .expect("spawn tasd")
}

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn gen_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (
        dir.path().join("a"),
        dir.path().join("b"),
        dir.path().join("c"),
    );
    for (out, seed) in [(&a, "7"), (&b, "7"), (&c, "8")] {
        let o = tasd(&[
            "gen",
            "--rows",
            "128",
            "--cols",
            "128",
            "--density",
            "0.25",
            "--dist",
            "normal",
            "--seed",
            seed,
            "--out",
            p(out),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_ne!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
    let m = load_matrix(&a).unwrap();
    assert_eq!(m.dims(), (128, 128));
    assert!((m.sparsity() - 0.75).abs() < 0.03);
}

#[test]
fn gen_zero_density_and_bad_args() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("z.tasd");
    let o = tasd(&[
        "gen",
        "--rows",
        "4",
        "--cols",
        "9",
        "--density",
        "0",
        "--seed",
        "1",
        "--out",
        p(&out),
    ]);
    assert!(o.status.success());
    assert_eq!(load_matrix(&out).unwrap().nnz(), 0);

    let o = tasd(&[
        "gen",
        "--rows",
        "4",
        "--cols",
        "4",
        "--density",
        "1.2",
        "--seed",
        "1",
        "--out",
        p(&out),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let o = tasd(&[
        "gen",
        "--rows",
        "4",
        "--cols",
        "4",
        "--density",
        "0.5",
        "--dist",
        "cauchy",
        "--seed",
        "1",
        "--out",
        p(&out),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let o = tasd(&["gen", "--rows", "four"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(tasd(&["--help"]).status.code(), Some(0));
}

#[test]
fn decompose_writes_terms_residual_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("a.csv");
    fs::write(&csv, "0.9,-0.1,0.5,0,0.3,-0.7,0.2,0.05\n1,2,3,4,5,6,7,8\n").unwrap();
    let out = dir.path().join("out");
    let o = tasd(&[
        "decompose",
        "--in",
        p(&csv),
        "--config",
        "4:8+1:8",
        "--out-dir",
        p(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let t0 = load_matrix(out.join("term_0.tasd")).unwrap();
    let t1 = load_matrix(out.join("term_1.tasd")).unwrap();
    let r = load_matrix(out.join("residual.tasd")).unwrap();
    assert_eq!(t0.row(0), &[0.9, 0.0, 0.5, 0.0, 0.3, -0.7, 0.0, 0.0]);
    assert_eq!(t1.row(0), &[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.2, 0.0]);
    assert_eq!(r.row(0), &[0.0, -0.1, 0.0, 0.0, 0.0, 0.0, 0.0, 0.05]);
    assert_eq!(r.row(1), &[1.0, 2.0, 3.0, 0.0, 0.0, 0.0, 0.0, 0.0]);

    let idx: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("term_0.idx.json")).unwrap()).unwrap();
    assert_eq!(idx["pattern"], "4:8");
    assert_eq!(idx["indices"][0], 0);
    assert_eq!(idx["indices"].as_array().unwrap().len(), 8);

    let metrics: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["config"], "4:8+1:8");
    assert_eq!(metrics["dropped_nnz_fraction"], 5.0 / 15.0);

    let o = tasd(&[
        "decompose",
        "--in",
        p(&csv),
        "--config",
        "4:8+5:8",
        "--out-dir",
        p(&out),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let o = tasd(&[
        "decompose",
        "--in",
        p(&dir.path().join("missing.tasd")),
        "--config",
        "2:4",
        "--out-dir",
        p(&out),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn analyze_grid_cardinality() {
    let o = tasd(&[
        "analyze",
        "--sweep",
        "appendixA",
        "--seed",
        "3",
        "--seeds",
        "2",
    ]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("density,distribution,config,seed,dropped_nnz,dropped_mag,mse")
    );
    assert_eq!(lines.count(), 7 * 2 * 3 * 2);

    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("err.csv");
    let o = tasd(&[
        "analyze",
        "--sweep",
        "matmul-error",
        "--seeds",
        "2",
        "--out",
        p(&out),
    ]);
    assert!(o.status.success());
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * 12);
    assert!(text.lines().any(|l| l.starts_with("0.8,7:8,0.125,")));
}

/// Three weighted layers and a manifest referencing them.
fn toy_workload(dir: &Path) -> PathBuf {
    for (i, density) in [0.2, 0.5, 0.9].iter().enumerate() {
        let out = dir.join(format!("w{i}.tasd"));
        let o = tasd(&[
            "gen",
            "--rows",
            "16",
            "--cols",
            "64",
            "--density",
            &density.to_string(),
            "--dist",
            "normal",
            "--seed",
            &i.to_string(),
            "--out",
            p(&out),
        ]);
        assert!(o.status.success());
    }
    let manifest = dir.join("toy.json");
    fs::write(
        &manifest,
        r#"{"name": "toy", "baseline_quality": 0.76, "layers": [
            {"id": "L0", "m": 16, "n": 32, "k": 64, "weight": "w0.tasd", "weights_sparse": true},
            {"id": "L1", "m": 16, "n": 32, "k": 64, "weight": "w1.tasd", "weights_sparse": true},
            {"id": "L2", "m": 16, "n": 32, "k": 64, "weight": "w2.tasd", "weights_sparse": true,
             "acts_sparse": true, "act_stats": {"mean": 0.8, "p99": 0.7}}]}"#,
    )
    .unwrap();
    manifest
}

#[test]
fn greedy_search_writes_assignment_and_log() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = toy_workload(dir.path());
    let (out, log) = (dir.path().join("a.json"), dir.path().join("log.json"));
    let o = tasd(&[
        "search",
        "--workload",
        p(&manifest),
        "--mode",
        "greedy",
        "--out",
        p(&out),
        "--log",
        p(&log),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let a = Assignment::from_json(&fs::read_to_string(&out).unwrap()).unwrap();
    // the sparsest layer is cut hardest; the densest one cannot be cut at all
    assert!(a.get("L0").is_some_and(|c| c.total_n() <= 4));
    assert!(a.get("L2").is_none());
    let log: serde_json::Value = serde_json::from_str(&fs::read_to_string(&log).unwrap()).unwrap();
    assert_eq!(log["mode"], "greedy");
    assert!(log["quality"].as_f64().unwrap() >= 0.99 * 0.76);
    assert!(log["pairs_evaluated"].as_u64().unwrap() >= 1);

    let again = dir.path().join("b.json");
    tasd(&[
        "search",
        "--workload",
        p(&manifest),
        "--mode",
        "greedy",
        "--out",
        p(&again),
    ]);
    assert_eq!(fs::read(&out).unwrap(), fs::read(&again).unwrap());
}

#[test]
fn network_search_with_external_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = toy_workload(dir.path());
    let log = dir.path().join("log.json");
    let o = tasd(&[
        "search",
        "--workload",
        p(&manifest),
        "--mode",
        "network",
        "--oracle",
        "sh -c 'echo 0.761'",
        "--log",
        p(&log),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    // every candidate scores 0.761 >= 0.99 * 0.76, so the cheapest wins
    let a = Assignment::from_json(&String::from_utf8(o.stdout).unwrap()).unwrap();
    assert_eq!(a.get("L0").unwrap().canonical(), "1:8");
    assert_eq!(a.len(), 3);
    let log: serde_json::Value = serde_json::from_str(&fs::read_to_string(&log).unwrap()).unwrap();
    assert_eq!(log["candidates"].as_array().unwrap().len(), 7);

    let o = tasd(&[
        "search",
        "--workload",
        p(&manifest),
        "--mode",
        "network",
        "--oracle",
        "sh -c 'echo nope'",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn activation_search_and_simulate() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = toy_workload(dir.path());
    let out = dir.path().join("act.json");
    let o = tasd(&[
        "search",
        "--workload",
        p(&manifest),
        "--mode",
        "activation",
        "--out",
        p(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let a = Assignment::from_json(&fs::read_to_string(&out).unwrap()).unwrap();
    // p99 sparsity 0.7 + alpha 0.05: largest level below 0.75 is 5:8 (0.625)
    assert_eq!(a.get("L2").unwrap().canonical(), "2:8+1:8");
    assert_eq!(a.len(), 1);

    let o = tasd(&[
        "simulate",
        "--workload",
        p(&manifest),
        "--assignment",
        p(&out),
    ]);
    assert!(o.status.success());
    let csv = String::from_utf8(o.stdout).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3 + 1);
    assert!(csv.lines().any(|l| l.starts_with("L2,2:8+1:8,")));
    let stderr = String::from_utf8(o.stderr).unwrap();
    let ratio: f64 = stderr
        .lines()
        .find_map(|l| l.strip_prefix("edp_vs_dense "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(ratio < 1.0);

    let o = tasd(&["simulate", "--workload", p(&manifest)]);
    assert!(String::from_utf8(o.stderr)
        .unwrap()
        .contains("edp_vs_dense 1.000000"));
}

#[test]
fn representative_workload_and_specs_run() {
    let root = repo_root();
    let manifest = root.join("configs/workloads/representative.json");
    for hw in ["configs/hw/vegeta_m8.json", "configs/hw/stc_m4.json"] {
        let hw = root.join(hw);
        let o = tasd(&[
            "search",
            "--workload",
            p(&manifest),
            "--hw",
            p(&hw),
            "--mode",
            "activation",
            "--statistic",
            "mean",
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let dir = tempfile::tempdir().unwrap();
        let asg = dir.path().join("a.json");
        fs::write(&asg, &o.stdout).unwrap();
        let o = tasd(&[
            "--json-logs",
            "simulate",
            "--workload",
            p(&manifest),
            "--hw",
            p(&hw),
            "--assignment",
            p(&asg),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let o = tasd(&["patterns", "--hw", p(&root.join("configs/hw/stc_m4.json"))]);
    assert_eq!(
        String::from_utf8(o.stdout).unwrap(),
        "pattern,series\n1:4,-\n2:4,2:4\n3:4,-\n4:4,4:4\n"
    );
}

#[test]
fn bad_thread_count_is_a_usage_error() {
    let o = Command::new(env!("CARGO_BIN_EXE_tasd"))
        .args(["patterns"])
        .env("TASD_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
}
