use std::path::PathBuf;
use std::process::{Command, Output};

fn corpus(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus").join(format!("{name}.wh"))
}

fn ctprover(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ctprover")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn verdicts_map_to_exit_codes() {
    let xor = corpus("xor_cancel");
    let leaky = corpus("leaky_branch");
    assert_eq!(code(&ctprover(&["verify", xor.to_str().unwrap(), "--width", "4"])), 0);
    assert_eq!(code(&ctprover(&["verify", leaky.to_str().unwrap(), "--width", "4"])), 1);
    // stage 1 alone cannot settle a tainted branch
    assert_eq!(code(&ctprover(&["verify", leaky.to_str().unwrap(), "--step", "1"])), 2);
}

#[test]
fn usage_and_io_errors_exit_3() {
    assert_eq!(code(&ctprover(&["verify", "/nonexistent/x.wh"])), 3);
    assert_eq!(code(&ctprover(&["verify", corpus("xor_cancel").to_str().unwrap(), "--step", "7"])), 3);
    assert_eq!(code(&ctprover(&["frobnicate"])), 3);
    assert_eq!(code(&ctprover(&["--help"])), 0);
}

#[test]
fn json_report_records_profile_and_witness() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let file = corpus("leaky_prime_leading_zeros");
    let o = ctprover(&["verify", file.to_str().unwrap(), "--width", "4", "--json", out.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(r["verdict"], "leaks_found");
    assert_eq!(r["counts"]["step1"], 5);
    let leak = r["sources"].as_array().unwrap().iter().find(|s| s["status"] == "confirmed_leak").expect("a leak");
    assert_eq!(leak["var"], "t");
    assert!(leak["witness"]["trace1"].as_array().is_some_and(|t| !t.is_empty()));
}

#[test]
fn product_writes_program_and_guard_index() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("p.wh");
    let file = corpus("leaky_branch");
    let o = ctprover(&["product", file.to_str().unwrap(), "--kind", "cross", "-o", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.contains("sh$"));
    assert!(text.contains("assert"));
    let guards: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.with_extension("guards.json")).unwrap()).unwrap();
    assert_eq!(guards["kind"], "cross");
    assert!(!guards["guards"].as_object().unwrap().is_empty());
    // the product is itself a valid program
    assert_eq!(code(&ctprover(&["dump", out.to_str().unwrap()])), 0);
}

#[test]
fn run_prints_the_trace() {
    let file = corpus("leaky_branch");
    let o = ctprover(&["run", file.to_str().unwrap(), "--width", "4", "--in", "k=3", "--in", "p=1"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("branch="));
}

#[test]
fn oracle_reports_leaks() {
    assert_eq!(code(&ctprover(&["oracle", corpus("leaky_branch").to_str().unwrap()])), 1);
    assert_eq!(code(&ctprover(&["oracle", corpus("mask_select").to_str().unwrap()])), 0);
}

#[test]
fn taint_dump_lists_facts() {
    let o = ctprover(&["taint", corpus("leaky_branch").to_str().unwrap(), "--dump"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains('{'));
}
