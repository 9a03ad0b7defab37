use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_valarena"))
        .args(args)
        .current_dir(root())
        .env_remove("VALARENA_SEED")
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn solve_reports_fig2_maxmin() {
    let out = run(&["solve", "figures/fig2.game", "--player", "1", "--maxmin"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["maxmin"], 10.0);
}

#[test]
fn zero_rounds_is_a_validation_error() {
    let out = run(&["simulate", "exp/thm1_fig1.json", "--trials", "1", "--rounds", "0"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unknown_flag_exits_one() {
    let out = run(&["solve", "figures/fig1.game", "--bogus"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_game_is_rejected() {
    let out = run(&["solve", "figures/nope.game"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn verify_example2_at_one_tenth() {
    let out = run(&["verify", "example2-chain", "--delta", "1/10"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("PASS"));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("0.91") && text.contains("0.09"), "{text}");
}

#[test]
fn simulate_is_deterministic() {
    let args = ["simulate", "exp/thm2_generic2p.json", "--trials", "4", "--rounds", "50"];
    let (a, b) = (run(&args), run(&args));
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn jobs_do_not_change_output() {
    let base = ["simulate", "exp/thm2_generic2p.json", "--trials", "6", "--rounds", "40"];
    let one = run(&[&base[..], &["--jobs", "1"]].concat());
    let two = run(&[&base[..], &["--jobs", "2"]].concat());
    assert_eq!(one.stdout, two.stdout);
}

#[test]
fn csv_has_per_round_rows() {
    let out = run(&["simulate", "exp/thm2_generic2p.json", "--trials", "2", "--rounds", "5", "--format", "csv"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("trial,round,terminal_label,payoff_p1,payoff_p2"));
    assert_eq!(lines.count(), 10);
}

#[test]
fn env_seed_is_echoed() {
    let out = Command::new(env!("CARGO_BIN_EXE_valarena"))
        .args(["simulate", "exp/thm2_generic2p.json", "--trials", "1", "--rounds", "5"])
        .current_dir(root())
        .env("VALARENA_SEED", "777")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["config"]["base_seed"], 777);
}

#[test]
fn chain_on_fig1_has_three_states() {
    let out = run(&["chain", "figures/fig1.game"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["matrix"]["states"].as_array().unwrap().len(), 3);
    assert_eq!(v["absorption"]["probabilities"]["/L=0,/R=1"], 1.0);
}

#[test]
fn out_writes_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("chain.json");
    let out = run(&["chain", "figures/fig1.game", "--out", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert!(v["matrix"].is_object());
}

#[test]
fn negative_initial_value_breaks_theorem1_config() {
    let dir = tempfile::tempdir().unwrap();
    let game = root().join("figures/fig1.game");
    let config = serde_json::json!({
        "game": game,
        "suite": "theorem1",
        "learners": {
            "1": {"learner": {"strategy": "myopic", "revision": "memoryless", "initial": {"constant": -1.0}}},
            "2": "uniform"
        },
        "rounds": 10,
        "trials": 1,
        "base_seed": 0
    });
    let path = dir.path().join("bad.json");
    std::fs::write(&path, config.to_string()).unwrap();
    let out = run(&["simulate", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
}
