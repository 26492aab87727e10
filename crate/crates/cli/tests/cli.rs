use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_clearing"));
    c.env_remove("CLEARING_TOL");
    c
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

fn f64s(v: &Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

fn clear(input: &Path, mode: &str) -> Value {
    json(&run(&["clear", "--input", input.to_str().unwrap(), "--mode", mode]))
}

#[test]
fn chp_on_four_agent_market() {
    let r = clear(&fixture("four_agent.csv"), "chp");
    assert_eq!(f64s(&r["prices"]), vec![3.0]);
    assert!((r["totals"]["loc"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    assert_eq!(r["equilibrium"], false);
}

#[test]
fn euphemia_on_four_agent_market() {
    let r = clear(&fixture("four_agent.csv"), "euphemia");
    assert_eq!(f64s(&r["prices"]), vec![1.0]);
    assert!((r["totals"]["welfare"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    assert_eq!(r["provenance"]["paradoxically_rejected"], "b1");
}

#[test]
fn convex_market_clears_identically_in_every_mode() {
    let outcomes: Vec<Value> = ["exact", "euphemia", "chp"].iter().map(|m| clear(&fixture("four_agent_convex.csv"), m)).collect();
    for r in &outcomes {
        assert_eq!(r["equilibrium"], true);
        assert_eq!(r["prices"], outcomes[0]["prices"]);
        assert_eq!(r["agents"], outcomes[0]["agents"]);
    }
}

#[test]
fn clear_is_deterministic_and_writes_files() {
    let dir = tempfile::tempdir().unwrap();
    let input = fixture("coupled_blocks.csv");
    let mut bytes = Vec::new();
    for name in ["a.csv", "b.csv"] {
        let out = dir.path().join(name);
        let status = run(&["clear", "--input", input.to_str().unwrap(), "--mode", "exact", "--format", "csv", "--output", out.to_str().unwrap()]);
        assert!(status.status.success());
        bytes.push(fs::read_to_string(&out).unwrap().replace(name, ""));
    }
    assert_eq!(bytes[0], bytes[1]);
    assert!(bytes[0].contains("provenance,tool,clearing "));
}

#[test]
fn tolerance_comes_from_the_environment() {
    let out = bin()
        .env("CLEARING_TOL", "1e-5")
        .args(["clear", "--input", fixture("four_agent.csv").to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(json(&out)["provenance"]["tol"], "0.00001");
}

#[test]
fn analyze_reports_singleton_flags() {
    let r = json(&run(&["analyze", "--input", fixture("four_agent.csv").to_str().unwrap()]));
    let flags: Vec<bool> = r["agents"].as_array().unwrap().iter().map(|a| a["singleton"].as_bool().unwrap()).collect();
    assert_eq!(flags, vec![true, true, true, false]);
    let cond: Vec<bool> = r["agents"].as_array().unwrap().iter().map(|a| a["singleton_condition"].as_bool().unwrap()).collect();
    assert_eq!(cond, flags);
    assert_eq!(r["nonconvex_demand"], 1);
    assert_eq!(f64s(&r["top_rho"]), vec![1.0]);

    let r = json(&run(&["analyze", "--input", fixture("four_agent_convex.csv").to_str().unwrap()]));
    let agents = r["agents"].as_array().unwrap();
    assert!(agents.iter().all(|a| a["singleton_condition"] == true));
    // the last supplier is at the money: an interval, but convex
    assert_eq!(agents[3]["singleton"], false);
}

#[test]
fn analyze_counts_at_the_money_blocks() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("atm.csv");
    fs::write(
        &path,
        "market,1,EUR,MW,atm\nblock,a,a-b,3,1,,,,1\nblock,b,b-b,6,1,,,,2\ncurve,s,s-c,0,1,-5,stepwise\n",
    )
    .unwrap();
    let r = json(&run(&["analyze", "--input", path.to_str().unwrap(), "--price", "3"]));
    assert_eq!(r["nonconvex_demand"], 2);
    let out = run(&["analyze", "--input", path.to_str().unwrap(), "--price", "3,4"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn simulate_estimates_k_over_n() {
    let r = json(&run(&["simulate", "--n", "5", "--k", "3", "--trials", "2000", "--seed", "7"]));
    assert!((r["estimate"].as_f64().unwrap() - 0.6).abs() < 0.05);
    assert_eq!(r["disagreements"], 0);
    let r = json(&run(&["simulate", "--n", "4", "--k", "4", "--trials", "50"]));
    assert_eq!(r["estimate"].as_f64(), Some(1.0));
}

#[test]
fn simulate_writes_trial_log() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("trials.csv");
    let out = run(&["simulate", "--n", "4", "--k", "2", "--trials", "20", "--log", log.to_str().unwrap()]);
    assert!(out.status.success());
    let text = fs::read_to_string(log).unwrap();
    assert_eq!(text.lines().count(), 21);
    assert!(text.starts_with("trial,equilibrium\n0,"));
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(run(&["simulate", "--n", "5", "--k", "3", "--trials", "0"]).status.code(), Some(1));
    assert_eq!(run(&["simulate", "--n", "3", "--k", "4", "--trials", "5"]).status.code(), Some(1));
    assert_eq!(run(&["clear"]).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "market,1,EUR,MW,x\nblock,a,b,oops,1,,,,1\n").unwrap();
    let out = run(&["clear", "--input", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty() && out.stdout.is_empty());
}

#[test]
fn exhausted_node_budget_exits_with_three() {
    let out = run(&["--node-budget", "1", "clear", "--input", fixture("four_agent.csv").to_str().unwrap(), "--mode", "exact"]);
    assert_eq!(out.status.code(), Some(3));
}

fn stage(dir: &Path, name: &str, market: &Path) {
    let ext = market.extension().unwrap().to_str().unwrap();
    fs::copy(market, dir.join(format!("{name}.market.{ext}"))).unwrap();
    let out = dir.join(format!("{name}.outcome.json"));
    let status = run(&["clear", "--input", market.to_str().unwrap(), "--output", out.to_str().unwrap()]);
    assert!(status.status.success());
}

#[test]
fn report_aggregates_a_batch() {
    let dir = tempfile::tempdir().unwrap();
    stage(dir.path(), "day1", &fixture("four_agent.csv"));
    stage(dir.path(), "day2", &fixture("four_agent_convex.csv"));
    stage(dir.path(), "day3", &fixture("tied_cost.csv"));
    let prefix = dir.path().join("figure");
    let out = run(&["report", "--dir", dir.path().to_str().unwrap(), "--output", prefix.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("figure.csv")).unwrap();
    assert!(csv.starts_with("label,instances,equilibria,equilibrium_pct,median_volume_ratio\n"));
    assert_eq!(csv.lines().count(), 4);
    let j: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("figure.json")).unwrap()).unwrap();
    assert_eq!(j["rows"].as_array().unwrap().len(), 3);
    assert_eq!(j["config"]["command"], "report");
    let four = j["rows"].as_array().unwrap().iter().find(|r| r["label"] == "four-agent").unwrap();
    assert_eq!(four["equilibrium_pct"].as_f64(), Some(0.0));
}

#[test]
fn report_rejects_mixed_commodity_counts_and_empty_dirs() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["report", "--dir", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    stage(dir.path(), "one", &fixture("four_agent.csv"));
    stage(dir.path(), "three", &fixture("coupled_blocks.csv"));
    let out = run(&["report", "--dir", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("inconsistent commodity count"));
}
