use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const WORKED: &str = r#"{"N":8,"K":2,"X":4,"T":1,"X_delta":1,"K_c":1,"xi":1,"seed":1}"#;
const WORKED_SCHEDULE: &str = r#"[{"read_dropouts":[3],"write_dropouts":[5,7]},{"read_dropouts":[1,2],"write_dropouts":[8]}]"#;
const TINY: &str = r#"{"N":4,"K":2,"X":2,"T":1,"X_delta":1,"K_c":1,"xi":1,"q":7,"seed":1}"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_acsa-rw"))
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, text).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn simulate_worked_schedule() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "c.json", WORKED);
    let sched = write(&dir, "s.json", WORKED_SCHEDULE);
    let trace = dir.path().join("trace.jsonl");
    let out = run(&[
        "simulate",
        "--config",
        p(&cfg),
        "--rounds",
        "2",
        "--schedule",
        p(&sched),
        "--out",
        p(&trace),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = fs::read_to_string(&trace).unwrap();
    let lines: Vec<serde_json::Value> = text
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(
        (lines[0]["D_num"].as_u64(), lines[0]["D_den"].as_u64()),
        (Some(7), Some(2))
    );
    assert_eq!(lines[0]["down_symbols"].as_u64(), Some(21));
    assert_eq!(lines[0]["up_increment_symbols"].as_u64(), Some(36));
    assert_eq!(
        (lines[1]["D_num"].as_u64(), lines[1]["D_den"].as_u64()),
        (Some(6), Some(1))
    );
    assert_eq!(lines[1]["up_increment_symbols"].as_u64(), Some(21));
}

#[test]
fn simulate_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "c.json", WORKED);
    let go = || {
        stdout(&run(&[
            "simulate",
            "--config",
            p(&cfg),
            "--rounds",
            "5",
            "--random-dropouts",
            "2,2",
            "--seed",
            "9",
        ]))
    };
    let a = go();
    assert_eq!(a.lines().count(), 5);
    assert_eq!(a, go());
    let other = stdout(&run(&[
        "simulate",
        "--config",
        p(&cfg),
        "--rounds",
        "5",
        "--random-dropouts",
        "2,2",
        "--seed",
        "10",
    ]));
    assert_ne!(a, other);
}

#[test]
fn simulate_zero_rounds_and_snapshot() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "c.json", TINY);
    let snap = dir.path().join("snap.bin");
    let out = run(&[
        "simulate",
        "--config",
        p(&cfg),
        "--rounds",
        "0",
        "--snapshot",
        p(&snap),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let bytes = fs::read(&snap).unwrap();
    let header: Vec<u64> = bytes[..32]
        .chunks(8)
        .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    assert_eq!(header, vec![7, 4, 2, 1]);
    assert_eq!(bytes.len(), 32 + 8 * 4 * 2);
}

#[test]
fn invalid_input_exits_2() {
    let dir = TempDir::new().unwrap();
    let bad = write(
        &dir,
        "bad.json",
        r#"{"N":8,"K":2,"X":2,"T":1,"X_delta":2,"K_c":1,"xi":1,"seed":1}"#,
    );
    let out = run(&["simulate", "--config", p(&bad), "--rounds", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("X_delta+T"));

    let cfg = write(&dir, "c.json", WORKED);
    let sched = write(
        &dir,
        "s.json",
        r#"[{"read_dropouts":[1,2,3],"write_dropouts":[]}]"#,
    );
    let out = run(&[
        "simulate",
        "--config",
        p(&cfg),
        "--rounds",
        "1",
        "--schedule",
        p(&sched),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("round 1"));

    let unknown = write(
        &dir,
        "u.json",
        r#"{"N":8,"K":2,"X":4,"T":1,"X_delta":1,"K_c":1,"xi":1,"seed":1,"Y":3}"#,
    );
    assert_eq!(
        run(&["costs", "--config", p(&unknown)]).status.code(),
        Some(2)
    );
    assert_eq!(
        run(&["costs", "--config", p(&dir.path().join("missing.json"))])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn costs_tables() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "c.json",
        r#"{"N":10,"K":1,"X":5,"T":1,"X_delta":1,"K_c":1,"xi":1,"seed":1}"#,
    );
    let out = run(&["costs", "--config", p(&cfg), "--sweep-x", "2..8"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    let row = |x: &str| {
        text.lines()
            .find(|l| l.split_whitespace().next() == Some(x))
            .unwrap()
            .to_string()
    };
    let fields: Vec<String> = row("2").split_whitespace().map(String::from).collect();
    assert_eq!(fields[3..], ["10/7", "1.428571", "10", "10.000000"]);
    let fields: Vec<String> = row("5").split_whitespace().map(String::from).collect();
    assert_eq!(fields[3..], ["5/2", "2.500000", "5/2", "2.500000"]);

    let out = stdout(&run(&[
        "costs",
        "--config",
        p(&cfg),
        "--sweep",
        "sr=0..4,sw=0..0",
    ]));
    let last = out.lines().last().unwrap();
    assert!(last.contains("infeasible"), "{out}");

    let cfg = write(
        &dir,
        "n.json",
        r#"{"N":6,"K":50,"X":3,"T":1,"X_delta":1,"K_c":1,"xi":35000,"seed":1}"#,
    );
    let out = stdout(&run(&["costs", "--config", p(&cfg)]));
    let fields: Vec<&str> = out.lines().nth(1).unwrap().split_whitespace().collect();
    assert_eq!(fields, ["0", "0", "3", "3.000000", "3", "3.000000"]);
}

#[test]
fn examples_pass() {
    let out = run(&["example", "--which", "5.1"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(
        text.contains("D_1 = 7/2") && text.contains("U-increment_2 = 7/2"),
        "{text}"
    );
    let out = run(&["example", "--which", "3.1.8"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("uploaded symbols = 210600"));
}

#[test]
fn audits_pass_on_tiny_config() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "c.json", TINY);
    for what in ["privacy", "storage", "increment"] {
        let out = run(&["audit", "--config", p(&cfg), "--what", what]);
        assert_eq!(out.status.code(), Some(0), "{what}");
        let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        assert_eq!(report["passed"], serde_json::Value::Bool(true));
        assert!(!report["checks"].as_array().unwrap().is_empty());
    }
    let out = run(&[
        "audit",
        "--config",
        p(&cfg),
        "--what",
        "storage",
        "--budget",
        "10",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn selftest_passes() {
    let out = run(&["selftest"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(!stdout(&out).contains("FAIL"));
}
