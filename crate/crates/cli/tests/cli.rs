use std::path::PathBuf;
use std::process::{Command, Output};

use aacgka_cli::parse_scenario;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_aacgka"))
}

fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn scenario(name: &str, seed: &str) -> Output {
    run(&["scenario", scenario_path(name).to_str().unwrap(), "--seed", seed])
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("aacgka-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn bundled_scenarios_pass() {
    for name in ["figure1.scn", "figure3.scn", "figure4.scn", "replay.scn"] {
        let o = scenario(name, "1");
        assert_eq!(o.status.code(), Some(0), "{name}\n{}", stdout(&o));
        assert!(!stdout(&o).contains("assert FAILED"));
    }
}

#[test]
fn external_join_script_has_the_full_flow() {
    let s = parse_scenario(&std::fs::read_to_string(scenario_path("figure3.scn")).unwrap()).unwrap();
    assert!(s.len() >= 5);
}

#[test]
fn same_seed_same_transcript() {
    let a = scenario("figure3.scn", "1");
    let b = scenario("figure3.scn", "1");
    assert_eq!(a.stdout, b.stdout);
    let c = scenario("figure3.scn", "2");
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn requirement_update_agrees() {
    let out = stdout(&scenario("figure4.scn", "1"));
    let last_round: Vec<&str> = out.lines().rev().skip_while(|l| !l.starts_with("digest ")).take_while(|l| l.starts_with("digest ")).collect();
    assert_eq!(last_round.len(), 4, "{out}");
    let reqs: Vec<&str> = last_round.iter().map(|l| l.split_whitespace().find(|w| w.starts_with("reqs=")).unwrap()).collect();
    assert!(reqs.windows(2).all(|w| w[0] == w[1]), "{reqs:?}");
}

#[test]
fn replayed_commits_rejected_by_every_member() {
    let out = stdout(&scenario("replay.scn", "1"));
    let replayed: Vec<&str> = out.lines().filter(|l| l.starts_with("process ") && l.contains("replay of")).collect();
    assert_eq!(replayed.len(), 4);
    assert!(replayed.iter().all(|l| l.contains("ok=false")));
}

#[test]
fn out_flag_writes_transcript() {
    let path = tmp("t.log");
    let o = run(&["scenario", scenario_path("figure1.scn").to_str().unwrap(), "--out", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
    assert!(std::fs::read_to_string(&path).unwrap().contains("digest alice"));
}

#[test]
fn empty_file_succeeds_with_empty_transcript() {
    let path = tmp("empty.scn");
    std::fs::write(&path, "").unwrap();
    let o = run(&["scenario", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
}

#[test]
fn parse_error_is_usage_error_with_line() {
    let path = tmp("bad.scn");
    std::fs::write(&path, "init alice uni org=ACME\ncreate bob r1:org=ACME\n").unwrap();
    let o = run(&["scenario", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
}

#[test]
fn failed_assertion_exits_one() {
    let path = tmp("fail.scn");
    std::fs::write(&path, "init alice uni org=ACME\ncreate alice r1:org=ACME\nassert_state alice epoch 3\n").unwrap();
    let o = run(&["scenario", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn missing_file_is_usage_error() {
    assert_eq!(run(&["scenario", "/nonexistent/x.scn"]).status.code(), Some(2));
}

#[test]
fn game_ri_replay() {
    let o = run(&["game", "ri", "--adversary", "replay", "--trials", "500", "--seed", "7"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains(" wins=0 "));
}

#[test]
fn game_negative_control() {
    let o = run(&["game", "unlink", "--adversary", "bytes", "--abc", "sd-hash", "--trials", "300"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
}

#[test]
fn game_usage_errors() {
    assert_eq!(run(&["game", "nope"]).status.code(), Some(2));
    assert_eq!(run(&["game", "ri", "--adversary", "nope"]).status.code(), Some(2));
    assert_eq!(run(&["game", "ri", "--abc", "rsa"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn game_advantage_failure_exits_one() {
    // Every trial of the null adversary is invalid, so no advantage can be
    // measured.
    let o = run(&["game", "ri", "--adversary", "null", "--trials", "5"]);
    assert_eq!(o.status.code(), Some(1));
}
