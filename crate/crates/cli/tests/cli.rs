use std::path::PathBuf;
use std::process::{Command, Output};

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_outage-id")).args(args).output().unwrap()
}

fn path_str(p: &std::path::Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_then_identify_with_known_count() {
    let dir = tempfile::tempdir().unwrap();
    let scen = dir.path().join("s.jsonl");
    let case = data("case14.m");
    let out = run(&[
        "simulate", "--case", path_str(&case), "--outages", "2", "--count", "4", "--seed", "3", "--out",
        path_str(&scen),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read_to_string(&scen).unwrap().lines().count(), 4);

    let out = run(&["identify", "--case", path_str(&case), "--scenarios", path_str(&scen), "--known-ssi"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(rows.len(), 4);
    for row in rows {
        assert_eq!(row["selected"].as_array().unwrap().len(), 2);
        assert!(row["truth"]["final"]["kappa_i"].is_number());
        assert!(row["result"]["outage_lines"].is_array());
    }
}

#[test]
fn identify_from_angle_files() {
    let dir = tempfile::tempdir().unwrap();
    let scen = dir.path().join("s.jsonl");
    let case = data("case6.json");
    let out = run(&["simulate", "--case", path_str(&case), "--seed", "1", "--out", path_str(&scen)]);
    assert!(out.status.success());
    let line = std::fs::read_to_string(&scen).unwrap();
    let sc: serde_json::Value = serde_json::from_str(line.trim()).unwrap();
    let write = |name: &str, key: &str| {
        let p = dir.path().join(name);
        let vals: Vec<String> = sc[key].as_array().unwrap().iter().map(|v| v.to_string()).collect();
        std::fs::write(&p, vals.join(" ")).unwrap();
        p
    };
    let pre = write("pre.txt", "theta_pre");
    let post = write("post.txt", "theta_corrupt");
    let out = run(&[
        "identify", "--case", path_str(&case), "--pre", path_str(&pre), "--post", path_str(&post), "--known-ssi",
        "--outages", "1",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let row: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(row["result"]["outage_lines"], sc["outage_set"]);
}

#[test]
fn bench_writes_csv_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("r.csv");
    let json = dir.path().join("r.json");
    let case = data("case14.m");
    let common = ["bench", "--case", path_str(&case), "--outages", "1", "--locations", "3", "--trials", "2"];
    let out = run(&[&common[..], &["--out", path_str(&csv)]].concat());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("N,L,"));
    assert_eq!(lines.count(), 1);

    let out = run(&[&common[..], &["--out", path_str(&json), "--out-format", "json"]].concat());
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(report["trials"], 6);
}

#[test]
fn errors_exit_nonzero() {
    let missing = run(&["bench", "--case", "/nonexistent/case.m", "--locations", "1"]);
    assert!(!missing.status.success());
    assert!(!missing.stderr.is_empty());
    let case = data("case14.m");
    let es = run(&["bench", "--case", path_str(&case), "--alg", "es", "--locations", "1"]);
    assert!(!es.status.success());
    let no_input = run(&["identify", "--case", path_str(&case)]);
    assert!(!no_input.status.success());
}
