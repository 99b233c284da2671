use std::path::Path;
use std::process::{Command, Output};

fn graphfield(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_graphfield"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .env("GRAPHFIELD_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn solve_writes_nodal_csv() {
    let dir = tempfile::tempdir().unwrap();
    let o = graphfield(dir.path(), &["solve", "--graph", "star4", "--beta", "0.75", "--h", "0.25"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("solution.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("edge,t,value"));
    // 4 edges with 4 segments each, vertices repeated per edge end
    assert_eq!(lines.count(), 20);
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# sample run\ngraph = loop\nbeta = 0.75\nh = 0.25\nseed = 4\nn = 3\n").unwrap();
    let cfg = cfg.to_str().unwrap();
    let o = graphfield(dir.path(), &["sample", "--config", cfg, "--beta", "0.6"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("beta 0.6 seed 4 n 3"), "{}", stdout(&o));
    let csv = std::fs::read_to_string(dir.path().join("samples.csv")).unwrap();
    assert!(csv.starts_with("sample_id,edge,t,value\n"));
    let ids: std::collections::BTreeSet<&str> =
        csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(ids.into_iter().collect::<Vec<_>>(), ["0", "1", "2"]);
}

#[test]
fn repeated_runs_are_bit_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = [
        "converge-strong", "--graph", "tadpole", "--betas", "0.5,0.75", "--levels", "2..4",
        "--overkill", "6", "--replicates", "3", "--seed", "8",
    ];
    for d in [&a, &b] {
        let o = graphfield(d.path(), &args);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["strong.csv", "strong_rates.csv"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert_eq!(x, y, "{f}");
    }
    let rates = std::fs::read_to_string(a.path().join("strong_rates.csv")).unwrap();
    assert!(rates.starts_with("beta,fitted,theoretical\n0.5,"));
    let errors = std::fs::read_to_string(a.path().join("strong.csv")).unwrap();
    assert!(errors.starts_with("beta,level,h,error\n0.5,2,0.25,"));
}

#[test]
fn covariance_formats() {
    let dir = tempfile::tempdir().unwrap();
    let base = ["cov", "--graph", "interval", "--h", "0.25", "--beta", "0.75"];
    let o = graphfield(dir.path(), &base);
    assert!(o.status.success());
    let dense = std::fs::read_to_string(dir.path().join("covariance.csv")).unwrap();
    assert_eq!(dense.lines().count(), 5);
    assert!(dense.lines().all(|l| l.split(',').count() == 5));
    let mut args = base.to_vec();
    args.extend(["--mode", "sinc", "--format", "triplets"]);
    let o = graphfield(dir.path(), &args);
    assert!(o.status.success());
    let triplets = std::fs::read_to_string(dir.path().join("covariance.csv")).unwrap();
    assert!(triplets.starts_with("i,j,value\n"));
    assert_eq!(triplets.lines().count(), 26);
}

#[test]
fn eig_weyl_interlace_mesh() {
    let dir = tempfile::tempdir().unwrap();
    let o = graphfield(dir.path(), &["eig", "--graph", "interval", "--h", "0.0078125", "--alpha", "0", "--count", "3", "--vectors"]);
    assert!(o.status.success());
    let eig = std::fs::read_to_string(dir.path().join("eigenvalues.csv")).unwrap();
    let first: f64 = eig.lines().nth(1).unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert!((first - 1.0).abs() < 1e-10);
    assert!(dir.path().join("eigenvectors.csv").exists());

    let o = graphfield(dir.path(), &["weyl", "--graph", "tadpole", "--h", "0.1"]);
    assert!(stdout(&o).starts_with("C1 "));
    let o = graphfield(dir.path(), &["interlace", "--graph", "star4", "--vertex", "0", "--condition", "2.5", "--h", "0.2"]);
    assert!(stdout(&o).starts_with("holds true"), "{}", stdout(&o));
    let o = graphfield(dir.path(), &["mesh", "--graph", "tadpole", "--h", "0.5"]);
    assert!(stdout(&o).starts_with("dofs 6 elements 6"));
}

#[test]
fn validation_failures_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["solve", "--alpha", "-10"],
        vec!["solve", "--graph", "no-such-graph.txt"],
        vec!["sample", "--beta", "0.1"],
        vec!["converge-cov", "--levels", "4..4"],
        vec!["cov", "--mode", "fancy"],
        vec!["solve", "--unknown-flag"],
    ] {
        let o = graphfield(dir.path(), &args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
    }
    let bad = dir.path().join("bad.cfg");
    std::fs::write(&bad, "beta = 1\nnot a pair\n").unwrap();
    let o = graphfield(dir.path(), &["solve", "--config", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
}

#[test]
fn graph_files_are_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("y.graph");
    std::fs::write(&g, "# a Y shape\nedge 10 0 1 1.0\nedge 11 1 2 0.5\nedge 12 1 3 0.5\n").unwrap();
    let o = graphfield(dir.path(), &["solve", "--graph", g.to_str().unwrap(), "--f", "1", "--beta", "1", "--h", "0.25"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("solution.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().starts_with("10,0,"));
    // positive load, positive solution
    assert!(csv
        .lines()
        .skip(1)
        .all(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap() > 0.0));
}
