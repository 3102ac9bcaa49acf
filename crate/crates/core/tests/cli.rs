use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cocycle-lab"))
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn")
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|x| x.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

#[test]
fn counterexample_writes_sixteen_halves() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ce.csv");
    let o = run(&["run-counterexample", "--k", "8", "--horizon", "16", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let (h, rows) = read_csv(&out);
    assert_eq!(&h[..2], ["n", "value"]);
    assert_eq!(rows.len(), 16);
    for (i, r) in rows.iter().enumerate() {
        assert_eq!(r[0], (i + 1).to_string());
        assert_eq!(r[1].parse::<f64>().unwrap(), 0.5);
    }
}

#[test]
fn counterexample_default_horizon_is_two_k() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ce.csv");
    let o = run(&["run-counterexample", "--k", "8", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(read_csv(&out).1.len(), 16);
}

#[test]
fn counterexample_past_the_period_is_a_usage_error() {
    let o = run(&["run-counterexample", "--k", "3", "--horizon", "9"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("horizon"));
}

#[test]
fn report_doubling_is_exact_mixing_r1() {
    let s = scenario("doubling.toml");
    let o = run(&["report", "--scenario", s.to_str().unwrap(), "--horizon", "20"]);
    let text = String::from_utf8_lossy(&o.stdout);
    assert_eq!(o.status.code(), Some(0), "{text}");
    assert_eq!(text.matches(": mixing").count(), 4, "{text}");
    assert!(text.contains("exactness: exact"));
    assert!(text.contains("periodicity: r=1"));
    assert!(!text.contains("FAIL"));
}

#[test]
fn report_baker_is_consistently_negative() {
    let s = scenario("baker_cyclic.toml");
    let o = run(&["report", "--scenario", s.to_str().unwrap(), "--horizon", "20"]);
    let text = String::from_utf8_lossy(&o.stdout);
    assert_eq!(o.status.code(), Some(0), "{text}");
    assert_eq!(text.matches(": not mixing").count(), 4, "{text}");
    assert!(text.contains("exactness: not exact"));
}

#[test]
fn report_writes_check_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.csv");
    let s = scenario("block_swap.toml");
    let o = run(&["report", "--scenario", s.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let (h, rows) = read_csv(&out);
    assert_eq!(h, ["check", "status", "detail"]);
    assert!(rows.iter().any(|r| r[0] == "restricted-power-exactness" && r[1] == "pass"));
    assert!(rows.iter().all(|r| r[1] != "fail"));
}

#[test]
fn mixing_csv_is_bit_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let s = scenario("doubling_ulam.toml");
    let mut bytes = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("m{k}.csv"));
        let o = run(&[
            "run-mixing",
            "--scenario",
            s.to_str().unwrap(),
            "--notion",
            "prior-inhom",
            "--horizon",
            "12",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        bytes.push(std::fs::read(&out).unwrap());
    }
    assert_eq!(bytes[0], bytes[1]);
    let (h, rows) = read_csv(&dir.path().join("m0.csv"));
    assert_eq!(h, ["notion", "omega_id", "f_id", "g_id", "n", "value"]);
    assert!(rows.iter().all(|r| r[0] == "prior-inhom"));
    assert_eq!(rows.len(), 63 * 64 * 13);
}

#[test]
fn seed_override_and_workers_are_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let s = scenario("doubling_ulam.toml");
    let mut outs = Vec::new();
    for seed in ["1", "2"] {
        let out = dir.path().join(format!("e{seed}.csv"));
        let o = run(&[
            "run-exactness",
            "--scenario",
            s.to_str().unwrap(),
            "--seed-override",
            seed,
            "--horizon",
            "8",
            "--workers",
            "1",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0));
        outs.push(read_csv(&out));
    }
    assert_eq!(outs[0].0, ["omega_id", "test", "n", "value_or_flag"]);
    assert!(outs[0].1.iter().any(|r| r[1] == "lin"));
}

#[test]
fn asymp_reports_cycle_notation() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("a.csv");
    let s = scenario("block_cycle3.toml");
    let o = run(&["run-asymp", "--scenario", s.to_str().unwrap(), "--rmax", "4", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let (h, rows) = read_csv(&out);
    assert_eq!(h, ["omega_id", "r", "rho", "residual"]);
    assert!(rows.iter().all(|r| r[1] == "3" && r[2] == "(0 1 2)"));
}

#[test]
fn qc_identity_fails_every_eps() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("q.csv");
    let s = scenario("identity.toml");
    let o = run(&["run-qc", "--scenario", s.to_str().unwrap(), "--eps", "0.1,0.01", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let (_, rows) = read_csv(&out);
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r[2] == "false"));
}

#[test]
fn skew_rows_per_pair() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s.csv");
    let s = scenario("skew_doubling.toml");
    let sets = scenario("skew_doubling_sets.toml");
    let o = run(&[
        "run-skew",
        "--scenario",
        s.to_str().unwrap(),
        "--sets",
        sets.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let (h, rows) = read_csv(&out);
    assert_eq!(h, ["set_pair_id", "n", "nu_joint", "nu_product", "discrepancy"]);
    assert_eq!(rows.len(), 3 * 31);
    let last = rows.iter().find(|r| r[0] == "word_offcenter" && r[1] == "30").unwrap();
    assert!(last[4].parse::<f64>().unwrap().abs() < 1e-3);
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[space]\nn = 4\n[operators.A]\nmap = \"identity\"\n[cocycle]\ntable = [\"P9\"]\n").unwrap();
    let o = run(&["report", "--scenario", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("P9"));
    assert_eq!(run(&["report"]).status.code(), Some(2));
    assert_eq!(run(&["nonsense"]).status.code(), Some(2));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}
