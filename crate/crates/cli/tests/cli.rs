use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ptfprg")).args(args).output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("json output")
}

#[test]
fn gen_csv_rows_and_reproducible() {
    let args = ["--n", "3", "--d", "1", "--trials", "3", "--format", "csv", "gen"];
    let a = run(&args);
    assert!(a.status.success());
    let text = String::from_utf8(a.stdout.clone()).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("# params "));
    assert_eq!(lines[1], "index,z0,z1,z2");
    assert_eq!(lines.len(), 5);
    assert_eq!(run(&args).stdout, a.stdout);
    let other = run(&["--n", "3", "--d", "1", "--trials", "3", "--format", "csv", "--seed", "2", "gen"]);
    assert_ne!(other.stdout, a.stdout);
}

#[test]
fn gen_json_params_are_consistent() {
    let v = json(&run(&["--n", "5", "--d", "2", "--trials", "2", "gen"]));
    let p = &v["params"];
    for key in ["n", "d", "eps", "L", "k_indep", "M", "seed_bits_per_block", "seed_bits_total", "lambda_bar"] {
        assert!(!p[key].is_null(), "missing {key}");
    }
    let blocks = p["L"].as_u64().unwrap();
    assert_eq!(p["seed_bits_total"].as_u64().unwrap(), blocks * p["seed_bits_per_block"].as_u64().unwrap());
    assert_eq!(p["k_indep"].as_u64().unwrap(), 32);
    assert_eq!(v["samples"].as_array().unwrap().len(), 2);
    assert_eq!(v["samples"][0].as_array().unwrap().len(), 5);
}

#[test]
fn overrides_change_block_count() {
    let v = json(&run(&["--n", "2", "--d", "1", "--lambda-exp", "1", "--print-params", "gen"]));
    assert_eq!(v["prg"][0]["L"].as_u64().unwrap(), 5);
}

#[test]
fn verify_single_check() {
    let out = run(&["verify", "--only", "clean_fraction"]);
    assert!(out.status.success());
    let v = json(&out);
    let checks = v["checks"].as_array().unwrap();
    assert_eq!(checks.len(), 1);
    assert_eq!(checks[0]["name"], "clean_fraction");
    assert_eq!(checks[0]["pass"], true);
}

#[test]
fn injected_fault_is_caught() {
    let out = run(&["verify", "--only", "jigsaw", "--inject-fault"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json(&out)["pass"], false);
}

#[test]
fn unknown_check_is_an_error() {
    assert_eq!(run(&["verify", "--only", "nope"]).status.code(), Some(2));
}

#[test]
fn battery_runs_many_checks() {
    let out = run(&["--trials", "2000", "battery"]);
    let v = json(&out);
    let checks = v["checks"].as_array().unwrap();
    assert!(checks.len() >= 12);
    assert!(checks.iter().any(|c| c["kind"] == "statistical"));
    assert_eq!(out.status.success(), v["pass"].as_bool().unwrap());
}

#[test]
fn stats_csv_header() {
    let out = run(&["--n", "2", "--d", "1", "--trials", "2", "--format", "csv", "stats"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().next().unwrap(), "i,j,x_id,value,stderr,exact");
}
