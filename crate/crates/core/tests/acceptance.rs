//! End-to-end acceptance checks. Run with `--nocapture` to see one line per
//! criterion; the test fails if any criterion does.

use std::collections::HashMap;
use std::fs;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use monoforge::ast::FormErrorKind;
use monoforge::eval::{enumerate, test_theorem, Evaluator, Outcome, TestConfig, Value};
use monoforge::ir::{CoreItem, CoreProgram, MonoSumDef, Term};
use monoforge::typecheck::{check_program, Detail, ObligationKind, TypeErrorKind};
use monoforge::{compile, Error, MonoError, ParseError};

const CORPUS: &str = include_str!("corpus/seq.psl");

const SEQ: &str = "(defcoproduct Seq :type-vars (a) (SeqNil) (SeqCons a (:inst Seq a)))";

const GOLDEN: [&str; 6] = [
    "seqint",
    "seq_int",
    "eitherseq_int_bool",
    "seqappend_int",
    "seqrev_bool",
    "seqappend_associative_int",
];

type Verdict = Result<String, String>;

fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn compiled(src: &str) -> Result<CoreProgram, String> {
    compile(src).map_err(|e| e.to_string())
}

// Independent oracles.

/// Number of values of `ty` with nesting depth at most `depth`, counted
/// directly from the sum definitions.
fn count_upto(ty: &str, depth: usize, sums: &HashMap<String, MonoSumDef>, ints: u128) -> u128 {
    match ty {
        "INT" => ints,
        "BOOL" => 2,
        _ => {
            if depth == 0 {
                return 0;
            }
            sums[ty]
                .cases
                .iter()
                .map(|c| {
                    c.fields
                        .iter()
                        .map(|f| count_upto(&f.ty, depth - 1, sums, ints))
                        .product::<u128>()
                })
                .sum()
        }
    }
}

/// Structural membership test written against the sum definitions only.
fn member(v: &Value, ty: &str, sums: &HashMap<String, MonoSumDef>, witnesses: &[String]) -> bool {
    match v {
        Value::Int(_) => ty == "INT",
        Value::Bool(_) => ty == "BOOL",
        Value::Token { ty: t, .. } => t == ty && witnesses.iter().any(|w| w == ty),
        Value::Ctor { name, fields } => sums.get(ty).is_some_and(|s| {
            s.cases.iter().any(|c| {
                &c.ctor == name
                    && c.fields.len() == fields.len()
                    && c.fields.iter().zip(fields).all(|(f, x)| member(x, &f.ty, sums, witnesses))
            })
        }),
    }
}

/// A `SEQ-INT` value as a native vector.
fn as_vec(v: &Value) -> Vec<i64> {
    let mut out = Vec::new();
    let mut cur = v;
    while let Value::Ctor { fields, .. } = cur {
        match fields.as_slice() {
            [Value::Int(hd), tl] => {
                out.push(*hd);
                cur = tl;
            }
            _ => break,
        }
    }
    out
}

fn sums_of(p: &CoreProgram) -> HashMap<String, MonoSumDef> {
    p.sums().map(|s| (s.name.clone(), s.clone())).collect()
}

// Criteria.

fn golden_expansions() -> Verdict {
    for case in GOLDEN {
        let src = fs::read_to_string(golden_dir().join(format!("{case}.psl"))).map_err(|e| e.to_string())?;
        let want = fs::read_to_string(golden_dir().join(format!("{case}.core"))).map_err(|e| e.to_string())?;
        let got = compiled(&src)?.render();
        ensure(got == want, format!("{case}: output differs from golden file"))?;
    }
    let p = compiled(&fs::read_to_string(golden_dir().join("seqappend_associative_int.psl")).unwrap())?;
    let t = p.theorem_instances().next().ok_or("no theorem instance")?;
    ensure(t.map.pairs.len() == 9, "substitution map is not nine pairs")?;
    Ok(format!("{} golden files match; nine-pair map reproduced", GOLDEN.len()))
}

fn directives(src: &str) -> Vec<String> {
    src.lines()
        .map(str::trim)
        .filter(|l| l.to_ascii_lowercase().contains("-instantiate"))
        .map(str::to_string)
        .collect()
}

fn idempotence() -> Verdict {
    let mut sources: Vec<String> = GOLDEN
        .iter()
        .map(|c| fs::read_to_string(golden_dir().join(format!("{c}.psl"))).unwrap())
        .collect();
    sources.push(CORPUS.to_string());
    let mut checked = 0;
    for src in &sources {
        let base = compiled(src)?;
        for d in directives(src) {
            let again = compiled(&format!("{src}\n{d}\n"))?;
            ensure(again == base, format!("repeating `{d}` changed the program"))?;
            checked += 1;
        }
    }
    ensure(checked > 0, "no directives exercised")?;
    Ok(format!("{checked} repeated directives, all structurally identical"))
}

fn dependency_ordering() -> Verdict {
    let src = fs::read_to_string(golden_dir().join("eitherseq_int_bool.psl")).unwrap();
    let p = compiled(&src)?;
    let names: Vec<&str> = p.items.iter().map(CoreItem::name).collect();
    let pos = |n: &str| names.iter().position(|x| *x == n);
    let (i, b, e) = (pos("SEQ-INT"), pos("SEQ-BOOL"), pos("EITHERSEQ-INT-BOOL"));
    ensure(
        matches!((i, b, e), (Some(i), Some(b), Some(e)) if i < e && b < e),
        format!("emission order {names:?}"),
    )?;
    p.check_definition_before_use()
        .map_err(|(item, missing)| format!("{item} uses {missing} before its definition"))?;
    compiled(CORPUS)?
        .check_definition_before_use()
        .map_err(|(item, missing)| format!("corpus: {item} uses {missing} early"))?;
    Ok("SEQ-INT, SEQ-BOOL precede EITHERSEQ-INT-BOOL; definition-before-use holds".into())
}

const APPEND_OK: &str = "((:inst SeqCons a) hd ((:inst SeqAppend a) tl y))";

fn append_variant(ret: &str, cons_arm: &str, with_nil: bool) -> String {
    let nil = if with_nil { "(((:inst SeqNil a)) y)" } else { "" };
    format!(
        "{SEQ}(defun-typed SeqAppend :type-vars (a) ((x (:inst Seq a)) (y (:inst Seq a))) {ret}
           (case-of x {nil} (((:inst SeqCons a) hd tl) {cons_arm})))
         (SeqAppend-instantiate int)"
    )
}

fn report_for(src: &str, name: &str) -> Result<monoforge::ObligationReport, String> {
    check_program(&compiled(src)?)
        .into_iter()
        .find(|r| r.name == name)
        .ok_or_else(|| format!("no report for {name}"))
}

fn typing_obligations() -> Verdict {
    let reports = check_program(&compiled(CORPUS)?);
    ensure(!reports.is_empty(), "no reports")?;
    for r in &reports {
        ensure(
            r.is_satisfied(ObligationKind::OutputType) && r.is_satisfied(ObligationKind::Guard),
            format!("corpus definition fails:\n{}", r.render_text()),
        )?;
    }

    // Swapped constructor arguments.
    let r = report_for(
        &append_variant("(:inst Seq a)", "((:inst SeqCons a) ((:inst SeqAppend a) tl y) hd)", true),
        "SEQAPPEND-INT",
    )?;
    ensure(
        matches!(r.get(ObligationKind::Guard).map(|o| &o.detail),
            Some(Detail::Type(e)) if matches!(e.kind, TypeErrorKind::Mismatch { .. })),
        "swapped constructor arguments not reported as a GUARD mismatch",
    )?;
    // Wrong return type.
    let r = report_for(&append_variant("bool", APPEND_OK, true), "SEQAPPEND-INT")?;
    ensure(
        !r.is_satisfied(ObligationKind::OutputType),
        "wrong return type not reported as OUTPUT-TYPE violation",
    )?;
    // Missing case branch.
    let r = report_for(&append_variant("(:inst Seq a)", APPEND_OK, false), "SEQAPPEND-INT")?;
    ensure(
        !r.is_satisfied(ObligationKind::Exhaustiveness) && r.is_satisfied(ObligationKind::Guard),
        "missing branch not reported as EXHAUSTIVENESS violation",
    )?;
    // Heterogeneous equal.
    let r = report_for(
        "(defcoproduct SeqInt (SeqNil) (SeqCons Int SeqInt))
         (defun-typed Same ((x SeqInt) (n int)) bool (equal x n))",
        "SAME",
    )?;
    ensure(
        matches!(r.get(ObligationKind::Guard).map(|o| &o.detail),
            Some(Detail::Type(e)) if matches!(e.kind, TypeErrorKind::Mismatch { .. })),
        "heterogeneous EQUAL not reported as a GUARD mismatch",
    )?;
    // Unbound variable.
    let unbound = compile(&append_variant("(:inst Seq a)", "((:inst SeqCons a) hd ((:inst SeqAppend a) tl w))", true));
    ensure(
        matches!(&unbound, Err(Error::Parse(p @ ParseError::Form { .. }))
            if matches!(p.kind(), Some(FormErrorKind::UnboundVariable(v)) if v == "W")),
        format!("unbound variable not rejected: {unbound:?}"),
    )?;
    // Partial instantiation.
    let partial = compile(&format!(
        "{SEQ}(defcoproduct EitherSeq :type-vars (a b) (LeftSeq (:inst Seq a)) (RightSeq (:inst Seq b)))
         (EitherSeq-instantiate int)"
    ));
    ensure(
        matches!(&partial, Err(Error::Expand(e)) if matches!(e.source, MonoError::PartialInstantiation { .. })),
        format!("partial instantiation not rejected: {partial:?}"),
    )?;
    Ok(format!(
        "{} corpus definitions satisfy OUTPUT-TYPE and GUARD; 6 mutations caught",
        reports.len()
    ))
}

fn theorem_suite() -> Verdict {
    let p = compiled(CORPUS)?;
    let cfg = TestConfig::default();
    let sums = sums_of(&p);
    let width = (cfg.int_range.1 - cfg.int_range.0 + 1) as u128;
    let universe = enumerate("SEQ-INT", &cfg, &p).map_err(|e| e.to_string())?.len() as u128;
    let oracle = count_upto("SEQ-INT", cfg.depth, &sums, width);
    ensure(universe == oracle, format!("SEQ-INT universe {universe}, oracle {oracle}"))?;
    ensure(
        enumerate("SEQ-BOOL", &cfg, &p).map_err(|e| e.to_string())?.len() as u128
            == count_upto("SEQ-BOOL", cfg.depth, &sums, width),
        "SEQ-BOOL universe disagrees with oracle",
    )?;

    let instances: Vec<_> = p.theorem_instances().collect();
    let templates: std::collections::BTreeSet<&str> = instances.iter().map(|t| t.template.as_str()).collect();
    ensure(templates.len() == 5, format!("expected 5 theorems, found {}", templates.len()))?;
    ensure(instances.len() == 10, "expected every theorem at INT and BOOL")?;
    let mut total = 0u64;
    for t in &instances {
        let r = test_theorem(t, &cfg, &p).map_err(|e| format!("{}: {e}", t.name))?;
        ensure(r.passed(), r.render_text())?;
        let expected: u128 = t
            .vars
            .iter()
            .map(|(_, ty)| count_upto(ty, cfg.depth, &sums, width))
            .product();
        ensure(
            r.assignments as u128 == expected,
            format!("{}: {} assignments, oracle {expected}", t.name, r.assignments),
        )?;
        total += r.assignments;
    }
    let assoc = instances
        .iter()
        .find(|t| t.name == "SEQAPPEND_ASSOCIATIVE-INT")
        .ok_or("missing associativity at INT")?;
    ensure(assoc.vars.len() == 3, "associativity should have 3 variables")?;
    Ok(format!(
        "5 theorems x {{INT, BOOL}} PASS; {total} assignments; |SEQ-INT| = {universe} (3-variable: {})",
        universe.pow(3)
    ))
}

fn falsification() -> Verdict {
    let p = compiled(&format!(
        "{CORPUS}
         (defthm-typed SeqAppend_Commutative :type-vars (a)
           ((x (:inst Seq a)) (y (:inst Seq a)))
           (equal ((:inst SeqAppend a) x y) ((:inst SeqAppend a) y x)))
         (SeqAppend_Commutative-instantiate int)"
    ))?;
    let t = p
        .theorem_instances()
        .find(|t| t.name == "SEQAPPEND_COMMUTATIVE-INT")
        .ok_or("missing instance")?;
    let r = test_theorem(t, &TestConfig::default(), &p).map_err(|e| e.to_string())?;
    let Outcome::Fail { counterexample } = &r.outcome else {
        return Err(format!("expected FAIL, got {}", r.render_text()));
    };
    let body = monoforge::eval::eval_expr(&t.body, counterexample, &p, 10_000).map_err(|e| e.to_string())?;
    ensure(body == Value::Bool(false), "counterexample does not falsify the body")?;
    let (x, y) = (as_vec(&counterexample[0].1), as_vec(&counterexample[1].1));
    let (xy, yx) = ([x.clone(), y.clone()].concat(), [y.clone(), x.clone()].concat());
    ensure(xy != yx, "native append oracle disagrees")?;
    let call = Term::call("SEQAPPEND-INT", vec![Term::var("X"), Term::var("Y")]);
    let got = monoforge::eval::eval_expr(&call, counterexample, &p, 10_000).map_err(|e| e.to_string())?;
    ensure(as_vec(&got) == xy, "evaluated append disagrees with native append")?;
    Ok(format!("FAIL with x = {x:?}, y = {y:?} after {} assignments", r.assignments))
}

fn coherence() -> Verdict {
    let p = compiled(CORPUS)?;
    let cfg = TestConfig::default();
    let sums = sums_of(&p);
    let witnesses: Vec<String> = p.generic_theorems().flat_map(|g| g.witnesses.clone()).collect();
    let mut ev = Evaluator::new(&p, cfg.fuel);
    let mut calls = 0u64;
    let mut functions = 0;
    for f in p.functions() {
        functions += 1;
        let pools = f
            .params
            .iter()
            .map(|(_, ty)| enumerate(ty, &cfg, &p))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| e.to_string())?;
        let mut idx = vec![0usize; pools.len()];
        if pools.iter().any(Vec::is_empty) {
            continue;
        }
        loop {
            let args: Vec<Value> = idx.iter().zip(&pools).map(|(&i, pool)| pool[i].clone()).collect();
            ev.set_fuel(cfg.fuel);
            let out = ev.apply(&f.name, args.clone()).map_err(|e| format!("{} {args:?}: {e}", f.name))?;
            ensure(
                member(&out, &f.return_type, &sums, &witnesses),
                format!("{} returned {out} outside {}", f.name, f.return_type),
            )?;
            calls += 1;
            let mut k = idx.len();
            loop {
                if k == 0 {
                    break;
                }
                k -= 1;
                idx[k] += 1;
                if idx[k] < pools[k].len() {
                    break;
                }
                idx[k] = 0;
            }
            if idx.iter().all(|&i| i == 0) {
                break;
            }
        }
    }
    Ok(format!("{functions} functions, {calls} calls, 0 violations"))
}

type Criterion = (&'static str, u64, fn() -> Verdict);

fn main() {
    let criteria: [Criterion; 7] = [
        ("golden expansions", 1, golden_expansions),
        ("redundant directives are idempotent", 1, idempotence),
        ("dependency ordering", 1, dependency_ordering),
        ("typing obligations and mutations", 1, typing_obligations),
        ("theorem suite", 30, theorem_suite),
        ("falsification sanity", 5, falsification),
        ("evaluator/type-checker coherence", 30, coherence),
    ];
    let mut failures = Vec::new();
    for (i, (name, budget, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let verdict = run();
        let took = start.elapsed();
        let in_time = took <= Duration::from_secs(*budget);
        let line = match (&verdict, in_time) {
            (Ok(detail), true) => format!("PASS  {detail}"),
            (Ok(detail), false) => format!("FAIL  over budget: {detail}"),
            (Err(why), _) => format!("FAIL  {why}"),
        };
        println!(
            "criterion {} [{name}] ({:.3} s / {budget} s): {line}",
            i + 1,
            took.as_secs_f64()
        );
        if verdict.is_err() || !in_time {
            failures.push(i + 1);
        }
    }
    if !failures.is_empty() {
        eprintln!("failed criteria: {failures:?}");
        std::process::exit(1);
    }
}
