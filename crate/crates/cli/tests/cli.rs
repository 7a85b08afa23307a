use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn corpus() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/corpus/seq.psl")
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_monoforge"))
        .args(args)
        .env_remove("MONOFORGE_FORMAT")
        .output()
        .expect("spawn monoforge")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn write(dir: &TempDir, name: &str, text: &str) -> String {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn empty_file_is_fine_everywhere() {
    let dir = TempDir::new().unwrap();
    let f = write(&dir, "empty.psl", "");
    for cmd in ["expand", "check", "test"] {
        let o = run(&[cmd, &f]);
        assert_eq!(code(&o), 0, "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn corpus_passes_all_stages() {
    let c = corpus();
    let o = run(&["test", c.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = String::from_utf8(o.stdout).unwrap();
    assert_eq!(out.lines().filter(|l| l.contains(": PASS")).count(), 10);
}

#[test]
fn expand_writes_output_file() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out.core");
    let c = corpus();
    let o = run(&["expand", c.to_str().unwrap(), "-o", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!(o.stdout.is_empty());
    let text = fs::read_to_string(out).unwrap();
    assert!(text.contains("SEQ-INT"));
    assert!(monoforge::read_forms(&text).is_ok());
}

#[test]
fn unreadable_input_exits_2() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("nope.psl");
    let o = run(&["expand", missing.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn parse_error_exits_3_with_location() {
    let dir = TempDir::new().unwrap();
    let f = write(&dir, "bad.psl", "(defun-typed F ((x int)) int\n  (foo");
    let o = run(&["check", &f]);
    assert_eq!(code(&o), 3);
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.starts_with(&format!("{f}:")), "{err}");
}

#[test]
fn expansion_error_exits_3() {
    let dir = TempDir::new().unwrap();
    let f = write(&dir, "dup.psl", "(defcoproduct A (K))\n(defcoproduct A (K))\n");
    assert_eq!(code(&run(&["expand", &f])), 3);
}

#[test]
fn check_violation_exits_4() {
    let dir = TempDir::new().unwrap();
    let f = write(&dir, "c.psl", "(defun-typed F ((x int)) bool x)\n");
    let o = run(&["check", &f]);
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8(o.stdout).unwrap().contains("VIOLATED"));
    assert_eq!(code(&run(&["test", &f])), 4);
}

#[test]
fn false_theorem_exits_5_with_counterexample() {
    let dir = TempDir::new().unwrap();
    let f = write(&dir, "t.psl", "(defthm-typed Bad ((x int)) (equal x 0))\n");
    let o = run(&["test", "--format", "sexpr", "--int-range", "-1:0", &f]);
    assert_eq!(code(&o), 5);
    let out = String::from_utf8(o.stdout).unwrap();
    assert!(out.contains("(TEST BAD FAIL"), "{out}");
    assert!(out.contains(":COUNTEREXAMPLE ((X -1))"), "{out}");
}

#[test]
fn fuel_exhaustion_exits_5() {
    let dir = TempDir::new().unwrap();
    let f = write(
        &dir,
        "l.psl",
        "(defun-typed Loop ((x int)) bool (Loop x))\n(defthm-typed L ((x int)) (Loop x))\n",
    );
    let o = run(&["test", "--fuel", "50", &f]);
    assert_eq!(code(&o), 5);
    assert!(String::from_utf8(o.stdout).unwrap().contains("FUEL-EXHAUSTED"));
}

#[test]
fn stops_at_first_failing_file() {
    let dir = TempDir::new().unwrap();
    let bad = write(&dir, "bad.psl", "(oops");
    let good = write(&dir, "good.psl", "(defcoproduct B (K))");
    let o = run(&["expand", &bad, &good]);
    assert_eq!(code(&o), 3);
    assert!(o.stdout.is_empty());
}

#[test]
fn format_defaults_from_environment() {
    let c = corpus();
    let o = Command::new(env!("CARGO_BIN_EXE_monoforge"))
        .args(["check", c.to_str().unwrap()])
        .env("MONOFORGE_FORMAT", "sexpr")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    let out = String::from_utf8(o.stdout).unwrap();
    assert!(out.lines().all(|l| l.starts_with("(OBLIGATIONS ")), "{out}");
}

#[test]
fn bad_int_range_is_a_usage_error() {
    let c = corpus();
    let o = run(&["test", "--int-range", "3:1", c.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}
