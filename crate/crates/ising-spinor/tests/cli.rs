use std::io::Write;
use std::process::{Command, Stdio};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ising-spinor"))
}

fn run_stdin(args: &[&str], input: &str) -> (i32, String) {
    let mut c = bin().args(args).stdin(Stdio::piped()).stdout(Stdio::piped()).stderr(Stdio::null()).spawn().unwrap();
    c.stdin.take().unwrap().write_all(input.as_bytes()).unwrap();
    let o = c.wait_with_output().unwrap();
    (o.status.code().unwrap(), String::from_utf8(o.stdout).unwrap())
}

const ANNULUS: &str = r#"{"faces": [[0,0],[1,0],[2,0],[0,1],[2,1],[0,2],[1,2],[2,2]], "branch_flags": [true]}"#;

#[test]
fn theta_single_puncture() {
    let o = bin().args(["theta", "--punctures", "1+1i"]).output().unwrap();
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((v["theta"].as_f64().unwrap() - 0.5f64.sqrt()).abs() < 1e-14);
    assert!(String::from_utf8_lossy(&o.stdout).contains("0.7071067"));
}

#[test]
fn malformed_input_exits_2() {
    assert_eq!(run_stdin(&["validate", "-"], "{not json").0, 2);
    assert_eq!(run_stdin(&["validate", "-"], r#"{"faces": []}"#).0, 2);
    assert_eq!(bin().args(["theta", "--punctures", "1-1i"]).stderr(Stdio::null()).status().unwrap().code(), Some(2));
    assert_eq!(bin().arg("nonsense").stderr(Stdio::null()).status().unwrap().code(), Some(2));
}

#[test]
fn validate_reports_holes() {
    let (code, out) = run_stdin(&["validate", "-"], ANNULUS);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["holes"].as_array().unwrap().len(), 1);
    assert_eq!(v["cycle_dim"], 9);
}

#[test]
fn check_and_solve_on_annulus() {
    let req = format!(r#"{{"domain": {ANNULUS}, "source": {{"vertex": [0,1], "dir": "W"}}}}"#);
    let (code, out) = run_stdin(&["check", "-"], &req);
    assert_eq!(code, 0);
    assert!(out.contains("\"pass\"") && !out.contains("\"fail\""));
    let (code, out) = run_stdin(&["solve", "-"], &req);
    assert_eq!(code, 0);
    assert!(out.starts_with("kind,index,x,y,re,im\n"));
    assert_eq!(out.lines().count(), 1 + 24 + 16);
    let (code, out) = run_stdin(&["obs", "-"], &req);
    assert_eq!(code, 0);
    assert!(out.lines().nth(1).unwrap().contains('/'));
}

#[test]
fn partition_plus_single_cell() {
    let (code, out) = run_stdin(&["partition", "-"], r#"{"domain": {"faces": [[0,0]]}}"#);
    assert_eq!(code, 0);
    // Z = 18 − 12√2 with √2 = ζ − ζ³
    assert_eq!(out.lines().nth(1).unwrap().split(',').take(5).collect::<Vec<_>>(), ["Z", "18/1", "-12/1", "0/1", "12/1"]);
}

#[test]
fn converge_is_deterministic() {
    let spec = r#"{"a": [0.0, 0.5], "b": [1.0, 0.5], "puncture": [0.5, 0.25], "ns": [8, 12]}"#;
    let (c1, o1) = run_stdin(&["converge", "-", "--no-time"], spec);
    let (c2, o2) = run_stdin(&["converge", "-", "--no-time"], spec);
    assert_eq!((c1, c2), (0, 0));
    assert_eq!(o1, o2);
    assert!(o1.starts_with("n,delta,ratio,theta,abs_error,method,seconds\n"));
    assert_eq!(o1.lines().count(), 3);
}

#[test]
fn pfratio_two_points_is_theta() {
    let o = bin().args(["pfratio", "--points=-1,2", "--punctures", "0.3+0.8i"]).output().unwrap();
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let t = v["thetas"][0][1].as_f64().unwrap();
    assert!((v["ratio"].as_f64().unwrap() - t).abs() < 1e-14);
}

#[test]
fn shipped_inputs_run() {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/inputs");
    for (cmd, file) in [
        ("validate", "annulus.json"),
        ("enumerate", "enumerate.json"),
        ("partition", "partition.json"),
        ("obs", "obs.json"),
        ("check", "check.json"),
        ("solve", "solve.json"),
        ("converge", "converge.json"),
    ] {
        let o = bin().args([cmd, &format!("{dir}/{file}")]).output().unwrap();
        assert!(o.status.success(), "{cmd} {file}: {}", String::from_utf8_lossy(&o.stderr));
    }
}
