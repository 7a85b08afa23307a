//! Strict evaluation of core terms and bounded-exhaustive testing of
//! theorem instances.
//!
//! A PASS is evidence over a finite universe (values up to a nesting depth,
//! integers from a small window), not a proof.

use std::collections::HashMap;
use std::fmt;
use std::rc::Rc;

use thiserror::Error;

use crate::ir::{CoreItem, CoreProgram, MonoFunDef, MonoSumDef, Term, TheoremInstance};
use crate::sexpr::SExpr;

/// Nested calls allowed before evaluation is cut off as if out of fuel.
const MAX_CALL_DEPTH: usize = 10_000;
/// Stack for the evaluation thread; comfortably above what
/// `MAX_CALL_DEPTH` nested calls need in an unoptimized build.
const EVAL_STACK_BYTES: usize = 512 << 20;
/// Refuse to enumerate universes larger than this.
const MAX_UNIVERSE: u128 = 50_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Value {
    Int(i64),
    Bool(bool),
    Ctor { name: String, fields: Vec<Value> },
    /// Opaque inhabitant of a witness type.
    Token { ty: String, id: u32 },
}

impl Value {
    pub fn ctor(name: impl Into<String>, fields: Vec<Value>) -> Self {
        Value::Ctor {
            name: name.into(),
            fields,
        }
    }

    /// Constructor nesting depth; integers, booleans and tokens are 0.
    pub fn depth(&self) -> usize {
        match self {
            Value::Ctor { fields, .. } => 1 + fields.iter().map(Value::depth).max().unwrap_or(0),
            _ => 0,
        }
    }

    pub fn to_sexpr(&self) -> SExpr {
        match self {
            Value::Int(n) => SExpr::Integer(*n),
            Value::Bool(true) => SExpr::sym("T"),
            Value::Bool(false) => SExpr::sym("NIL"),
            Value::Ctor { name, fields } => SExpr::list(
                std::iter::once(SExpr::Symbol(name.clone())).chain(fields.iter().map(Value::to_sexpr)),
            ),
            Value::Token { ty, id } => SExpr::list([SExpr::sym("TOKEN"), SExpr::Symbol(ty.clone()), SExpr::Integer(*id as i64)]),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_sexpr())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TestConfig {
    pub depth: usize,
    pub int_range: (i64, i64),
    pub fuel: u64,
}

impl Default for TestConfig {
    fn default() -> Self {
        TestConfig {
            depth: 3,
            int_range: (-2, 2),
            fuel: 100_000,
        }
    }
}

impl TestConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.depth < 1 {
            return Err(EvalError::BadConfig("depth must be at least 1".into()));
        }
        if self.int_range.0 > self.int_range.1 {
            return Err(EvalError::BadConfig(format!(
                "empty integer range {}..{}",
                self.int_range.0, self.int_range.1
            )));
        }
        if self.fuel == 0 {
            return Err(EvalError::BadConfig("fuel must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("out of fuel")]
    FuelExhausted,
    #[error("unknown function `{0}`")]
    UnknownFunction(String),
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
    #[error("`{head}` expects {expected} argument(s), given {found}")]
    Arity {
        head: String,
        expected: usize,
        found: usize,
    },
    #[error("no case arm matches `{0}`")]
    NoMatchingArm(String),
    #[error("ill-typed value: {0}")]
    IllTyped(String),
    #[error("unknown type `{0}`")]
    UnknownType(String),
    #[error("unknown theorem `{0}`")]
    UnknownTheorem(String),
    #[error("universe for `{0}` is too large to enumerate")]
    UniverseTooLarge(String),
    #[error("bad test configuration: {0}")]
    BadConfig(String),
}

enum Global<'p> {
    Fun(&'p MonoFunDef),
    Ctor(&'p MonoSumDef, usize),
    TypeRecognizer(&'p str),
    CtorRecognizer(&'p str),
    Accessor(&'p str, usize),
}

/// Evaluation context over one core program.
pub struct Evaluator<'p> {
    globals: HashMap<String, Global<'p>>,
    sums: HashMap<&'p str, &'p MonoSumDef>,
    witnesses: Vec<String>,
    fuel: u64,
    depth: usize,
}

impl<'p> Evaluator<'p> {
    pub fn new(program: &'p CoreProgram, fuel: u64) -> Self {
        let mut globals = HashMap::new();
        let mut sums = HashMap::new();
        let mut witnesses = Vec::new();
        for item in program.flatten() {
            match item {
                CoreItem::Sum(s) => {
                    sums.insert(s.name.as_str(), s);
                    globals.insert(s.recognizer(), Global::TypeRecognizer(&s.name));
                    for (i, case) in s.cases.iter().enumerate() {
                        globals.insert(case.ctor.clone(), Global::Ctor(s, i));
                        globals.insert(case.recognizer(), Global::CtorRecognizer(&case.ctor));
                        for (k, field) in case.fields.iter().enumerate() {
                            globals.insert(field.accessor.clone(), Global::Accessor(&case.ctor, k));
                        }
                    }
                }
                CoreItem::Fun(f) => {
                    globals.insert(f.name.clone(), Global::Fun(f));
                }
                CoreItem::Generic(g) => witnesses.extend(g.witnesses.iter().cloned()),
                CoreItem::Theorem(_) => {}
            }
        }
        Evaluator {
            globals,
            sums,
            witnesses,
            fuel,
            depth: 0,
        }
    }

    pub fn fuel_left(&self) -> u64 {
        self.fuel
    }

    pub fn set_fuel(&mut self, fuel: u64) {
        self.fuel = fuel;
    }

    fn burn(&mut self) -> Result<(), EvalError> {
        if self.fuel == 0 {
            return Err(EvalError::FuelExhausted);
        }
        self.fuel -= 1;
        Ok(())
    }

    /// Does `v` inhabit the type named `ty`?
    pub fn satisfies(&self, v: &Value, ty: &str) -> bool {
        match (ty, v) {
            ("INT", Value::Int(_)) | ("BOOL", Value::Bool(_)) => true,
            (_, Value::Token { ty: t, .. }) => t == ty,
            (_, Value::Ctor { name, fields }) => {
                let Some(sum) = self.sums.get(ty) else { return false };
                let Some(case) = sum.case(name) else { return false };
                case.fields.len() == fields.len()
                    && case.fields.iter().zip(fields).all(|(f, v)| self.satisfies(v, &f.ty))
            }
            _ => false,
        }
    }

    pub fn eval(&mut self, term: &Term, env: &[(String, Value)]) -> Result<Value, EvalError> {
        match term {
            Term::Var(v) => env
                .iter()
                .rev()
                .find(|(name, _)| name == v)
                .map(|(_, val)| val.clone())
                .ok_or_else(|| EvalError::UnboundVariable(v.clone())),
            Term::Int(n) => Ok(Value::Int(*n)),
            Term::Bool(b) => Ok(Value::Bool(*b)),
            Term::Equal(l, r) => Ok(Value::Bool(self.eval(l, env)? == self.eval(r, env)?)),
            Term::If(c, t, e) => match self.eval(c, env)? {
                Value::Bool(true) => self.eval(t, env),
                Value::Bool(false) => self.eval(e, env),
                other => Err(EvalError::IllTyped(format!("IF condition {other}"))),
            },
            Term::Case { scrutinee, arms } => {
                let (name, fields) = match self.eval(scrutinee, env)? {
                    Value::Ctor { name, fields } => (name, fields),
                    other => return Err(EvalError::IllTyped(format!("CASE-OF scrutinee {other}"))),
                };
                let arm = arms
                    .iter()
                    .find(|a| a.ctor == name)
                    .ok_or(EvalError::NoMatchingArm(name))?;
                let mut inner = env.to_vec();
                inner.extend(arm.binders.iter().cloned().zip(fields));
                self.eval(&arm.body, &inner)
            }
            Term::Call { head, args } => {
                let vals = args
                    .iter()
                    .map(|a| self.eval(a, env))
                    .collect::<Result<Vec<_>, _>>()?;
                self.apply(head, vals)
            }
        }
    }

    pub fn apply(&mut self, head: &str, args: Vec<Value>) -> Result<Value, EvalError> {
        let arity_err = |expected: usize, found: usize| EvalError::Arity {
            head: head.to_string(),
            expected,
            found,
        };
        if let Some(base) = head.strip_suffix("-P") {
            if base == "INT" || base == "BOOL" || self.witnesses.iter().any(|w| w == base) {
                let [v] = <[Value; 1]>::try_from(args).map_err(|a| arity_err(1, a.len()))?;
                return Ok(Value::Bool(self.satisfies(&v, base)));
            }
        }
        let global = self
            .globals
            .get(head)
            .ok_or_else(|| EvalError::UnknownFunction(head.to_string()))?;
        match *global {
            Global::Fun(f) => {
                if f.params.len() != args.len() {
                    return Err(arity_err(f.params.len(), args.len()));
                }
                self.burn()?;
                if self.depth >= MAX_CALL_DEPTH {
                    return Err(EvalError::FuelExhausted);
                }
                let env: Vec<(String, Value)> = f.params.iter().map(|(v, _)| v.clone()).zip(args).collect();
                self.depth += 1;
                let result = self.eval(&f.body, &env);
                self.depth -= 1;
                result
            }
            Global::Ctor(sum, i) => {
                let case = &sum.cases[i];
                if case.fields.len() != args.len() {
                    return Err(arity_err(case.fields.len(), args.len()));
                }
                self.burn()?;
                Ok(Value::ctor(case.ctor.clone(), args))
            }
            Global::TypeRecognizer(ty) => {
                let [v] = <[Value; 1]>::try_from(args).map_err(|a| arity_err(1, a.len()))?;
                Ok(Value::Bool(self.satisfies(&v, ty)))
            }
            Global::CtorRecognizer(ctor) => {
                let [v] = <[Value; 1]>::try_from(args).map_err(|a| arity_err(1, a.len()))?;
                Ok(Value::Bool(matches!(v, Value::Ctor { ref name, .. } if name == ctor)))
            }
            Global::Accessor(ctor, k) => {
                let [v] = <[Value; 1]>::try_from(args).map_err(|a| arity_err(1, a.len()))?;
                match v {
                    Value::Ctor { name, mut fields } if name == ctor => Ok(fields.swap_remove(k)),
                    other => Err(EvalError::IllTyped(format!("{head} applied to {other}"))),
                }
            }
        }
    }
}

fn on_eval_stack<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    std::thread::scope(|s| {
        let handle = std::thread::Builder::new()
            .name("monoforge-eval".into())
            .stack_size(EVAL_STACK_BYTES)
            .spawn_scoped(s, f)
            .expect("failed to spawn evaluation thread");
        handle.join().unwrap_or_else(|p| std::panic::resume_unwind(p))
    })
}

/// Evaluates `term` under `bindings` with the given fuel budget.
pub fn eval_expr(
    term: &Term,
    bindings: &[(String, Value)],
    program: &CoreProgram,
    fuel: u64,
) -> Result<Value, EvalError> {
    on_eval_stack(|| Evaluator::new(program, fuel).eval(term, bindings))
}

/// Memoized enumeration of the values of each type by exact depth.
pub struct Enumerator<'p> {
    sums: HashMap<&'p str, &'p MonoSumDef>,
    witnesses: Vec<String>,
    int_range: (i64, i64),
    memo: HashMap<(String, usize), Rc<Vec<Value>>>,
}

impl<'p> Enumerator<'p> {
    pub fn new(program: &'p CoreProgram, int_range: (i64, i64)) -> Self {
        let mut sums = HashMap::new();
        let mut witnesses = Vec::new();
        for item in program.flatten() {
            match item {
                CoreItem::Sum(s) => {
                    sums.insert(s.name.as_str(), s);
                }
                CoreItem::Generic(g) => witnesses.extend(g.witnesses.iter().cloned()),
                _ => {}
            }
        }
        Enumerator {
            sums,
            witnesses,
            int_range,
            memo: HashMap::new(),
        }
    }

    /// Values of `ty` with depth exactly `k`, by constructor declaration
    /// order and then lexicographically by fields.
    pub fn exactly(&mut self, ty: &str, k: usize) -> Result<Rc<Vec<Value>>, EvalError> {
        if let Some(v) = self.memo.get(&(ty.to_string(), k)) {
            return Ok(v.clone());
        }
        let values = match ty {
            "INT" if k == 0 => (self.int_range.0..=self.int_range.1).map(Value::Int).collect(),
            "BOOL" if k == 0 => vec![Value::Bool(false), Value::Bool(true)],
            "INT" | "BOOL" => Vec::new(),
            w if self.witnesses.iter().any(|x| x == w) => {
                if k == 0 {
                    (0..2).map(|id| Value::Token { ty: w.to_string(), id }).collect()
                } else {
                    Vec::new()
                }
            }
            _ => {
                let sum = *self.sums.get(ty).ok_or_else(|| EvalError::UnknownType(ty.to_string()))?;
                let mut out = Vec::new();
                if k > 0 {
                    for case in &sum.cases {
                        let mut pools = Vec::new();
                        for f in &case.fields {
                            pools.push(self.upto(&f.ty, k - 1)?);
                        }
                        let size: u128 = pools.iter().map(|p| p.len() as u128).product();
                        if size > MAX_UNIVERSE {
                            return Err(EvalError::UniverseTooLarge(ty.to_string()));
                        }
                        for_each_tuple(&pools, &mut |fields| {
                            if 1 + fields.iter().map(|v| v.depth()).max().unwrap_or(0) == k {
                                out.push(Value::ctor(case.ctor.clone(), fields.to_vec()));
                            }
                        });
                    }
                }
                out
            }
        };
        let values = Rc::new(values);
        self.memo.insert((ty.to_string(), k), values.clone());
        Ok(values)
    }

    /// Values of `ty` with depth at most `depth`, shallowest first.
    pub fn upto(&mut self, ty: &str, depth: usize) -> Result<Vec<Value>, EvalError> {
        let mut out = Vec::new();
        for k in 0..=depth {
            out.extend(self.exactly(ty, k)?.iter().cloned());
        }
        Ok(out)
    }
}

/// Visits the cartesian product of `pools`, first pool most significant.
fn for_each_tuple(pools: &[Vec<Value>], f: &mut impl FnMut(&[Value])) {
    fn go(pools: &[Vec<Value>], acc: &mut Vec<Value>, f: &mut impl FnMut(&[Value])) {
        match pools.split_first() {
            None => f(acc),
            Some((first, rest)) => {
                for v in first {
                    acc.push(v.clone());
                    go(rest, acc, f);
                    acc.pop();
                }
            }
        }
    }
    go(pools, &mut Vec::new(), f)
}

/// All values of `ty` up to `cfg.depth`.
pub fn enumerate(ty: &str, cfg: &TestConfig, program: &CoreProgram) -> Result<Vec<Value>, EvalError> {
    Enumerator::new(program, cfg.int_range).upto(ty, cfg.depth)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    Fail { counterexample: Vec<(String, Value)> },
    FuelExhausted { assignment: Vec<(String, Value)> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TestReport {
    pub theorem: String,
    pub assignments: u64,
    pub outcome: Outcome,
    pub config: TestConfig,
}

fn bindings_sexpr(b: &[(String, Value)]) -> SExpr {
    SExpr::list(b.iter().map(|(v, val)| SExpr::list([SExpr::Symbol(v.clone()), val.to_sexpr()])))
}

impl TestReport {
    pub fn passed(&self) -> bool {
        self.outcome == Outcome::Pass
    }

    pub fn verdict(&self) -> &'static str {
        match self.outcome {
            Outcome::Pass => "PASS",
            Outcome::Fail { .. } => "FAIL",
            Outcome::FuelExhausted { .. } => "FUEL-EXHAUSTED",
        }
    }

    pub fn render_text(&self) -> String {
        let bounds = format!(
            "depth <= {}, integers {}..{}",
            self.config.depth, self.config.int_range.0, self.config.int_range.1
        );
        let show = |b: &[(String, Value)]| {
            b.iter()
                .map(|(v, val)| format!("{v} = {val}"))
                .collect::<Vec<_>>()
                .join(", ")
        };
        match &self.outcome {
            Outcome::Pass => format!(
                "{}: PASS ({} assignments; bounded check, {bounds})",
                self.theorem, self.assignments
            ),
            Outcome::Fail { counterexample } => format!(
                "{}: FAIL after {} assignments; counterexample: {}",
                self.theorem,
                self.assignments,
                show(counterexample)
            ),
            Outcome::FuelExhausted { assignment } => format!(
                "{}: FUEL-EXHAUSTED after {} assignments at {}",
                self.theorem,
                self.assignments,
                show(assignment)
            ),
        }
    }

    pub fn to_sexpr(&self) -> SExpr {
        let mut items = vec![
            SExpr::sym("TEST"),
            SExpr::Symbol(self.theorem.clone()),
            SExpr::sym(self.verdict()),
            SExpr::kw("ASSIGNMENTS"),
            SExpr::Integer(self.assignments as i64),
            SExpr::kw("DEPTH"),
            SExpr::Integer(self.config.depth as i64),
            SExpr::kw("INT-RANGE"),
            SExpr::list([
                SExpr::Integer(self.config.int_range.0),
                SExpr::Integer(self.config.int_range.1),
            ]),
        ];
        match &self.outcome {
            Outcome::Pass => {}
            Outcome::Fail { counterexample } => {
                items.push(SExpr::kw("COUNTEREXAMPLE"));
                items.push(bindings_sexpr(counterexample));
            }
            Outcome::FuelExhausted { assignment } => {
                items.push(SExpr::kw("AT"));
                items.push(bindings_sexpr(assignment));
            }
        }
        SExpr::List(items)
    }
}

/// Evaluates `t`'s body on every assignment from the bounded universe.
pub fn test_theorem(t: &TheoremInstance, cfg: &TestConfig, program: &CoreProgram) -> Result<TestReport, EvalError> {
    cfg.validate()?;
    on_eval_stack(|| run_test(t, cfg, program))
}

fn run_test(t: &TheoremInstance, cfg: &TestConfig, program: &CoreProgram) -> Result<TestReport, EvalError> {
    let mut en = Enumerator::new(program, cfg.int_range);
    let pools = t
        .vars
        .iter()
        .map(|(_, ty)| en.upto(ty, cfg.depth))
        .collect::<Result<Vec<_>, _>>()?;
    let total: u128 = pools.iter().map(|p| p.len() as u128).product();
    if total > MAX_UNIVERSE {
        return Err(EvalError::UniverseTooLarge(t.name.clone()));
    }
    let names: Vec<String> = t.vars.iter().map(|(v, _)| v.clone()).collect();
    let mut ev = Evaluator::new(program, cfg.fuel);
    let mut assignments = 0u64;
    let mut outcome = Outcome::Pass;
    let mut error = None;
    let mut stop = false;
    for_each_tuple(&pools, &mut |vals| {
        if stop {
            return;
        }
        assignments += 1;
        let bindings: Vec<(String, Value)> = names.iter().cloned().zip(vals.iter().cloned()).collect();
        ev.set_fuel(cfg.fuel);
        match ev.eval(&t.body, &bindings) {
            Ok(Value::Bool(true)) => {}
            Ok(Value::Bool(false)) => {
                outcome = Outcome::Fail {
                    counterexample: bindings,
                };
                stop = true;
            }
            Ok(other) => {
                error = Some(EvalError::IllTyped(format!("theorem body evaluated to {other}")));
                stop = true;
            }
            Err(EvalError::FuelExhausted) => {
                outcome = Outcome::FuelExhausted { assignment: bindings };
                stop = true;
            }
            Err(e) => {
                error = Some(e);
                stop = true;
            }
        }
    });
    if let Some(e) = error {
        return Err(e);
    }
    Ok(TestReport {
        theorem: t.name.clone(),
        assignments,
        outcome,
        config: *cfg,
    })
}

/// Tests every theorem instance in the program, in order.
pub fn test_program(program: &CoreProgram, cfg: &TestConfig) -> Result<Vec<TestReport>, EvalError> {
    program
        .theorem_instances()
        .map(|t| test_theorem(t, cfg, program))
        .collect()
}

/// Tests the instance named `name`.
pub fn test_named(program: &CoreProgram, name: &str, cfg: &TestConfig) -> Result<TestReport, EvalError> {
    let t = program
        .theorem_instances()
        .find(|t| t.name == name)
        .ok_or_else(|| EvalError::UnknownTheorem(name.to_string()))?;
    test_theorem(t, cfg, program)
}
