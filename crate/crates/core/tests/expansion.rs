use std::fs;
use std::path::PathBuf;

use monoforge::compile;

fn dir(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join(name)
}

fn golden(case: &str) {
    let src = fs::read_to_string(dir("golden").join(format!("{case}.psl"))).unwrap();
    let want = fs::read_to_string(dir("golden").join(format!("{case}.core"))).unwrap();
    let program = compile(&src).unwrap_or_else(|e| panic!("{case}: {e}"));
    let got = program.render();
    if got != want {
        for (i, (g, w)) in got.lines().zip(want.lines()).enumerate() {
            if g != w {
                panic!("{case}: line {} differs\n got: {g}\nwant: {w}", i + 1);
            }
        }
        panic!(
            "{case}: {} lines emitted, golden has {}",
            got.lines().count(),
            want.lines().count()
        );
    }
    assert_eq!(program.check_definition_before_use(), Ok(()));
}

#[test]
fn concrete_coproduct() {
    golden("seqint");
}

#[test]
fn seq_at_int() {
    golden("seq_int");
}

#[test]
fn eitherseq_at_int_bool() {
    golden("eitherseq_int_bool");
}

#[test]
fn seqappend_at_int() {
    golden("seqappend_int");
}

#[test]
fn seqrev_at_bool() {
    golden("seqrev_bool");
}

#[test]
fn associativity_at_int() {
    golden("seqappend_associative_int");
}

#[test]
fn corpus_expands_in_definition_order() {
    let src = fs::read_to_string(dir("corpus").join("seq.psl")).unwrap();
    let program = compile(&src).unwrap();
    assert_eq!(program.check_definition_before_use(), Ok(()));
    assert_eq!(program.theorem_instances().count(), 10);
    assert_eq!(program.generic_theorems().count(), 5);
    let sums: Vec<&str> = program.sums().map(|s| s.name.as_str()).collect();
    assert_eq!(sums, vec!["SEQINT", "SEQ-A", "SEQ-INT", "SEQ-BOOL"]);
}

#[test]
fn rendering_reads_back() {
    let src = fs::read_to_string(dir("corpus").join("seq.psl")).unwrap();
    let program = compile(&src).unwrap();
    let forms = monoforge::read_forms(&program.render()).unwrap();
    assert_eq!(forms, program.to_sexprs());
}
