use std::path::Path;
use std::process::{Command, Output};

fn perctree(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_perctree")).args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf-8")
}

fn fixture(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/fixtures")
        .join(name)
        .display()
        .to_string()
}

fn body(text: &str) -> Vec<&str> {
    text.lines().filter(|l| !l.starts_with('#')).collect()
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(perctree(&["--help"]).status.code(), Some(0));
    assert_eq!(perctree(&["--version"]).status.code(), Some(0));
    assert_eq!(perctree(&["generate", "--help"]).status.code(), Some(0));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(perctree(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(perctree(&["generate"]).status.code(), Some(1));
    assert_eq!(perctree(&["generate", "--n", "0"]).status.code(), Some(1));
    assert_eq!(perctree(&["percolate", "--n", "100", "--c", "1", "--p", "0.5"]).status.code(), Some(1));
    assert_eq!(perctree(&["regular", "--d", "2", "--h", "3", "--c", "5"]).status.code(), Some(1));
    assert_eq!(perctree(&["mu", "--kind", "deterministic-uniform"]).status.code(), Some(1));
    assert_eq!(perctree(&["oracle", "--tree", "/nonexistent.tree", "--p", "0.5"]).status.code(), Some(1));
}

#[test]
fn generate_is_seeded() {
    let a = perctree(&["generate", "--n", "500", "--seed", "9"]);
    let b = perctree(&["generate", "--n", "500", "--seed", "9"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let stats: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(stats["seed"], 9);
    assert_eq!(stats["n"], 500);
    assert_eq!(stats["vertices"], 500);

    let dump = stdout(&perctree(&["generate", "--n", "20", "--dump", "--insertion", "recursive"]));
    assert!(dump.starts_with("# seed 42\n"));
    let balls: u64 = body(&dump).iter().map(|l| l.split_whitespace().nth(3).unwrap().parse::<u64>().unwrap()).sum();
    assert_eq!(balls, 20);
}

#[test]
fn percolate_and_regular_emit_records() {
    let out = perctree(&["percolate", "--n", "2000", "--c", "0.5", "--top-k", "4"]);
    assert_eq!(out.status.code(), Some(0));
    let rec: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(rec["seed"], 42);
    assert!(rec["C"].as_array().unwrap().len() <= 4);
    assert!(rec["C0"].as_u64().unwrap() <= 2000);

    let out = perctree(&["percolate", "--n", "2000", "--p", "1"]);
    let rec: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(rec["C0"], 2000);
    assert_eq!(rec["c"], 0.0);

    let out = perctree(&["regular", "--d", "3", "--h", "6", "--c", "1", "--seed", "5"]);
    assert_eq!(out.status.code(), Some(0));
    let rec: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(rec["seed"], 5);
    assert!(rec["G0"].as_u64().unwrap() <= 1093);
}

#[test]
fn mu_prints_constants() {
    let text = stdout(&perctree(&["mu", "--kind", "fixed-multiset", "--multiset", "1/2,1/4,1/8,1/8", "--c", "0.6"]));
    assert!(text.contains("mu=1.21300756"));
    assert!(text.contains("giant_fraction=0.60979"));
    assert!(text.contains(&format!("span={}", 2f64.ln())));
    assert!(text.contains("seed=42"));
    let text = stdout(&perctree(&["mu"]));
    assert!(text.contains("mu=0.5\n") && text.contains("span=none"));
}

#[test]
fn oracle_reproduces_committed_tables() {
    let text = stdout(&perctree(&["oracle", "--tree", &fixture("bst7.tree"), "--p", "0.6", "--masks"]));
    let committed = std::fs::read_to_string(fixture("bst7.masks")).unwrap();
    assert_eq!(body(&text), body(&committed));

    let text = stdout(&perctree(&["oracle", "--d", "2", "--h", "2", "--p", "0.5", "--masks"]));
    let committed = std::fs::read_to_string(fixture("regular_d2_h2.masks")).unwrap();
    assert_eq!(body(&text), body(&committed));

    let law = stdout(&perctree(&["oracle", "--tree", &fixture("path3.tree"), "--p", "0.5", "--samples", "2000"]));
    assert!(law.contains("# samples 2000"));
    assert!(law.lines().any(|l| l.starts_with("3; ")));
}

const SMALL_EXPERIMENT: &str = r#"
[experiment]
kind = "theorem3"
c = 1.0
h_grid = "6,8"
reps = 30
seed = 7

[regular_tree]
d = 2
"#;

#[test]
fn experiment_writes_reproducible_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    std::fs::write(&config, SMALL_EXPERIMENT).unwrap();
    let config = config.display().to_string();

    let run = |name: &str| {
        let out_dir = dir.path().join(name);
        let out = perctree(&["experiment", "--config", &config, "--out", &out_dir.display().to_string()]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        ["report.json", "report.csv", "records.jsonl"].map(|f| std::fs::read(out_dir.join(f)).unwrap())
    };
    let first = run("a");
    assert_eq!(first, run("b"));

    let report: serde_json::Value = serde_json::from_slice(&first[0]).unwrap();
    assert_eq!(report["master_seed"], 7);
    assert_eq!(report["experiment"], "theorem3");
    let csv = String::from_utf8(first[1].clone()).unwrap();
    assert!(csv.starts_with("experiment,n_or_h,stat,value,stderr,target,p_value,seed\n"));

    let reseeded = perctree(&["experiment", "--config", &config, "--seed", "8"]);
    let other: serde_json::Value = serde_json::from_slice(&reseeded.stdout).unwrap();
    assert_eq!(other["master_seed"], 8);
    assert_ne!(other["rows"], report["rows"]);

    let gated = perctree(&["experiment", "--config", &config, "--gate"]);
    let all_passed = report["gates"].as_array().unwrap().iter().all(|g| g["passed"] == true);
    assert_eq!(gated.status.code(), Some(if all_passed { 0 } else { 3 }));
}

#[test]
fn invalid_experiments_write_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = out_dir.display().to_string();
    let bad = [
        vec!["experiment", "--experiment", "theorem9", "--c", "1", "--out", &out],
        vec!["experiment", "--experiment", "theorem1", "--out", &out],
        vec!["experiment", "--experiment", "theorem3", "--c", "1", "--n-grid", "100", "--out", &out],
        vec!["experiment", "--experiment", "theorem4", "--c", "1", "--out", &out],
    ];
    for args in bad {
        assert_eq!(perctree(&args).status.code(), Some(1), "{args:?}");
        assert!(!out_dir.exists());
    }
    let config = dir.path().join("bad.toml");
    std::fs::write(&config, "[experiment]\nkind = \"theorem1\"\nc = 1\nbogus = 3\n").unwrap();
    let code = perctree(&["experiment", "--config", &config.display().to_string(), "--out", &out]).status.code();
    assert_eq!(code, Some(1));
    assert!(!out_dir.exists());
}
