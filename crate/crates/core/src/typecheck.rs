//! Syntax-directed checking of monomorphic core definitions.
//!
//! A function is accepted when its body is well typed under its parameter
//! types (the guard obligation), its body's type is the declared return type
//! (the output-type obligation), and every `CASE-OF` covers each constructor
//! of its scrutinee's sum exactly once.

use std::collections::{HashMap, HashSet};
use std::fmt;

use thiserror::Error;

use crate::ir::{Arm, CoreItem, CoreProgram, MonoCase, MonoFunDef, MonoSumDef, Term, BUILTIN_TYPES};
use crate::sexpr::SExpr;

#[derive(Debug, Clone, Default)]
pub struct TypeEnv {
    sums: HashMap<String, MonoSumDef>,
    ctors: HashMap<String, String>,
    funs: HashMap<String, (Vec<String>, String)>,
    witnesses: HashSet<String>,
}

impl TypeEnv {
    pub fn new() -> Self {
        Self::default()
    }

    /// Environment holding every definition in `program`.
    pub fn from_program(program: &CoreProgram) -> Self {
        let mut env = Self::new();
        for item in &program.items {
            env.add_item(item);
        }
        env
    }

    pub fn add_sum(&mut self, sum: &MonoSumDef) {
        for case in &sum.cases {
            self.ctors.insert(case.ctor.clone(), sum.name.clone());
        }
        self.sums.insert(sum.name.clone(), sum.clone());
    }

    pub fn add_function(&mut self, f: &MonoFunDef) {
        self.funs.insert(
            f.name.clone(),
            (
                f.params.iter().map(|(_, t)| t.clone()).collect(),
                f.return_type.clone(),
            ),
        );
    }

    pub fn add_witness(&mut self, name: &str) {
        self.witnesses.insert(name.to_string());
    }

    pub fn add_item(&mut self, item: &CoreItem) {
        match item {
            CoreItem::Sum(s) => self.add_sum(s),
            CoreItem::Fun(f) => self.add_function(f),
            CoreItem::Generic(g) => {
                g.witnesses.iter().for_each(|w| self.add_witness(w));
                g.witness_core.iter().for_each(|i| self.add_item(i));
            }
            CoreItem::Theorem(_) => {}
        }
    }

    pub fn is_type(&self, name: &str) -> bool {
        BUILTIN_TYPES.contains(&name) || self.sums.contains_key(name) || self.witnesses.contains(name)
    }

    pub fn is_witness(&self, name: &str) -> bool {
        self.witnesses.contains(name)
    }

    pub fn sum(&self, name: &str) -> Option<&MonoSumDef> {
        self.sums.get(name)
    }

    pub fn constructor(&self, ctor: &str) -> Option<(&MonoSumDef, &MonoCase)> {
        let sum = self.sums.get(self.ctors.get(ctor)?)?;
        Some((sum, sum.case(ctor)?))
    }

    pub fn signature(&self, f: &str) -> Option<(&[String], &str)> {
        self.funs.get(f).map(|(p, r)| (p.as_slice(), r.as_str()))
    }
}

/// One step from an expression to a subexpression.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PathStep {
    Arg { head: String, index: usize },
    EqualLhs,
    EqualRhs,
    IfCond,
    IfThen,
    IfElse,
    Scrutinee,
    Arm(String),
}

impl PathStep {
    fn to_sexpr(&self) -> SExpr {
        match self {
            PathStep::Arg { head, index } => {
                SExpr::list([SExpr::Symbol(head.clone()), SExpr::Symbol(format!("ARG-{index}"))])
            }
            PathStep::EqualLhs => SExpr::list([SExpr::sym("EQUAL"), SExpr::sym("LHS")]),
            PathStep::EqualRhs => SExpr::list([SExpr::sym("EQUAL"), SExpr::sym("RHS")]),
            PathStep::IfCond => SExpr::list([SExpr::sym("IF"), SExpr::sym("COND")]),
            PathStep::IfThen => SExpr::list([SExpr::sym("IF"), SExpr::sym("THEN")]),
            PathStep::IfElse => SExpr::list([SExpr::sym("IF"), SExpr::sym("ELSE")]),
            PathStep::Scrutinee => SExpr::list([SExpr::sym("CASE-OF"), SExpr::sym("SCRUTINEE")]),
            PathStep::Arm(c) => SExpr::list([SExpr::sym("CASE-OF"), SExpr::Symbol(c.clone())]),
        }
    }
}

impl fmt::Display for PathStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.to_sexpr() {
            SExpr::List(items) => write!(f, "{} {}", items[0], items[1]),
            other => write!(f, "{other}"),
        }
    }
}

fn path_sexpr(path: &[PathStep]) -> SExpr {
    SExpr::list(path.iter().map(PathStep::to_sexpr))
}

fn path_text(path: &[PathStep]) -> String {
    if path.is_empty() {
        return "body".to_string();
    }
    path.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(" > ")
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TypeErrorKind {
    #[error("expected {expected}, found {found}")]
    Mismatch { expected: String, found: String },
    #[error("unknown function or constructor `{0}`")]
    UnknownName(String),
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
    #[error("`{name}` takes {expected} argument(s), given {found}")]
    Arity {
        name: String,
        expected: usize,
        found: usize,
    },
    #[error("case branches disagree: {first} vs {other}")]
    BranchDisagreement { first: String, other: String },
    #[error("case-of scrutinee has type {0}, which is not a sum type")]
    NotASum(String),
    #[error("constructor `{ctor}` does not belong to {sum}")]
    ForeignConstructor { ctor: String, sum: String },
    #[error("pattern `{ctor}` binds {found} variable(s) but the constructor has {expected} field(s)")]
    PatternArity {
        ctor: String,
        expected: usize,
        found: usize,
    },
    #[error("unknown type `{0}`")]
    UnknownType(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind} (at {})", path_text(path))]
pub struct TypeError {
    pub path: Vec<PathStep>,
    pub kind: TypeErrorKind,
}

impl TypeError {
    pub fn to_sexpr(&self) -> SExpr {
        let mut items = match &self.kind {
            TypeErrorKind::Mismatch { expected, found } => vec![
                SExpr::sym("MISMATCH"),
                SExpr::kw("EXPECTED"),
                SExpr::Symbol(expected.clone()),
                SExpr::kw("FOUND"),
                SExpr::Symbol(found.clone()),
            ],
            TypeErrorKind::UnknownName(n) => vec![SExpr::sym("UNKNOWN-NAME"), SExpr::Symbol(n.clone())],
            TypeErrorKind::UnboundVariable(n) => {
                vec![SExpr::sym("UNBOUND-VARIABLE"), SExpr::Symbol(n.clone())]
            }
            TypeErrorKind::Arity {
                name,
                expected,
                found,
            } => vec![
                SExpr::sym("ARITY"),
                SExpr::Symbol(name.clone()),
                SExpr::kw("EXPECTED"),
                SExpr::Integer(*expected as i64),
                SExpr::kw("FOUND"),
                SExpr::Integer(*found as i64),
            ],
            TypeErrorKind::BranchDisagreement { first, other } => vec![
                SExpr::sym("BRANCH-DISAGREEMENT"),
                SExpr::Symbol(first.clone()),
                SExpr::Symbol(other.clone()),
            ],
            TypeErrorKind::NotASum(t) => vec![SExpr::sym("NOT-A-SUM"), SExpr::Symbol(t.clone())],
            TypeErrorKind::ForeignConstructor { ctor, sum } => vec![
                SExpr::sym("FOREIGN-CONSTRUCTOR"),
                SExpr::Symbol(ctor.clone()),
                SExpr::Symbol(sum.clone()),
            ],
            TypeErrorKind::PatternArity {
                ctor,
                expected,
                found,
            } => vec![
                SExpr::sym("PATTERN-ARITY"),
                SExpr::Symbol(ctor.clone()),
                SExpr::kw("EXPECTED"),
                SExpr::Integer(*expected as i64),
                SExpr::kw("FOUND"),
                SExpr::Integer(*found as i64),
            ],
            TypeErrorKind::UnknownType(t) => vec![SExpr::sym("UNKNOWN-TYPE"), SExpr::Symbol(t.clone())],
        };
        items.push(SExpr::kw("AT"));
        items.push(path_sexpr(&self.path));
        SExpr::List(items)
    }
}

/// A `CASE-OF` encountered while typing, with its resolved scrutinee sum.
#[derive(Debug, Clone)]
struct CaseSite {
    path: Vec<PathStep>,
    sum: String,
    arms: Vec<String>,
}

struct Checker<'e> {
    env: &'e TypeEnv,
    scope: Vec<(String, String)>,
    path: Vec<PathStep>,
    cases: Vec<CaseSite>,
}

impl<'e> Checker<'e> {
    fn new(env: &'e TypeEnv, vars: &[(String, String)]) -> Self {
        Checker {
            env,
            scope: vars.to_vec(),
            path: Vec::new(),
            cases: Vec::new(),
        }
    }

    fn fail<T>(&self, kind: TypeErrorKind) -> Result<T, TypeError> {
        Err(TypeError {
            path: self.path.clone(),
            kind,
        })
    }

    fn within<T>(&mut self, step: PathStep, f: impl FnOnce(&mut Self) -> T) -> T {
        self.path.push(step);
        let out = f(self);
        self.path.pop();
        out
    }

    fn expect(&mut self, step: PathStep, term: &Term, expected: &str) -> Result<(), TypeError> {
        self.within(step, |c| {
            let found = c.type_of(term)?;
            if found != expected {
                return c.fail(TypeErrorKind::Mismatch {
                    expected: expected.to_string(),
                    found,
                });
            }
            Ok(())
        })
    }

    fn type_of(&mut self, term: &Term) -> Result<String, TypeError> {
        match term {
            Term::Var(v) => match self.scope.iter().rev().find(|(n, _)| n == v) {
                Some((_, t)) => Ok(t.clone()),
                None => self.fail(TypeErrorKind::UnboundVariable(v.clone())),
            },
            Term::Int(_) => Ok("INT".into()),
            Term::Bool(_) => Ok("BOOL".into()),
            Term::Call { head, args } => {
                let (params, result): (Vec<String>, String) =
                    if let Some((sum, case)) = self.env.constructor(head) {
                        (
                            case.fields.iter().map(|f| f.ty.clone()).collect(),
                            sum.name.clone(),
                        )
                    } else if let Some((p, r)) = self.env.signature(head) {
                        (p.to_vec(), r.to_string())
                    } else {
                        return self.fail(TypeErrorKind::UnknownName(head.clone()));
                    };
                if params.len() != args.len() {
                    return self.fail(TypeErrorKind::Arity {
                        name: head.clone(),
                        expected: params.len(),
                        found: args.len(),
                    });
                }
                for (i, (arg, ty)) in args.iter().zip(&params).enumerate() {
                    let step = PathStep::Arg {
                        head: head.clone(),
                        index: i + 1,
                    };
                    self.expect(step, arg, ty)?;
                }
                Ok(result)
            }
            Term::Equal(l, r) => {
                let lt = self.within(PathStep::EqualLhs, |c| c.type_of(l))?;
                self.expect(PathStep::EqualRhs, r, &lt)?;
                Ok("BOOL".into())
            }
            Term::If(c, t, e) => {
                self.expect(PathStep::IfCond, c, "BOOL")?;
                let tt = self.within(PathStep::IfThen, |ch| ch.type_of(t))?;
                self.expect(PathStep::IfElse, e, &tt)?;
                Ok(tt)
            }
            Term::Case { scrutinee, arms } => self.type_of_case(scrutinee, arms),
        }
    }

    fn type_of_case(&mut self, scrutinee: &Term, arms: &[Arm]) -> Result<String, TypeError> {
        let sty = self.within(PathStep::Scrutinee, |c| c.type_of(scrutinee))?;
        let Some(sum) = self.env.sum(&sty) else {
            return self.within(PathStep::Scrutinee, |c| c.fail(TypeErrorKind::NotASum(sty.clone())));
        };
        self.cases.push(CaseSite {
            path: self.path.clone(),
            sum: sum.name.clone(),
            arms: arms.iter().map(|a| a.ctor.clone()).collect(),
        });
        let mut result: Option<String> = None;
        for arm in arms {
            let ty = self.within(PathStep::Arm(arm.ctor.clone()), |c| {
                let Some(case) = sum.case(&arm.ctor) else {
                    return c.fail(TypeErrorKind::ForeignConstructor {
                        ctor: arm.ctor.clone(),
                        sum: sum.name.clone(),
                    });
                };
                if case.fields.len() != arm.binders.len() {
                    return c.fail(TypeErrorKind::PatternArity {
                        ctor: arm.ctor.clone(),
                        expected: case.fields.len(),
                        found: arm.binders.len(),
                    });
                }
                let depth = c.scope.len();
                c.scope.extend(
                    arm.binders
                        .iter()
                        .cloned()
                        .zip(case.fields.iter().map(|f| f.ty.clone())),
                );
                let ty = c.type_of(&arm.body);
                c.scope.truncate(depth);
                let ty = ty?;
                if let Some(first) = &result {
                    if *first != ty {
                        return c.fail(TypeErrorKind::BranchDisagreement {
                            first: first.clone(),
                            other: ty,
                        });
                    }
                }
                Ok(ty)
            })?;
            result.get_or_insert(ty);
        }
        Ok(result.expect("case-of has at least one arm"))
    }
}

/// Type of a ground term under typed variables `vars`.
pub fn type_of_expr(term: &Term, vars: &[(String, String)], env: &TypeEnv) -> Result<String, TypeError> {
    Checker::new(env, vars).type_of(term)
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Exhaustiveness {
    pub missing: Vec<String>,
    pub duplicates: Vec<String>,
}

impl Exhaustiveness {
    pub fn is_satisfied(&self) -> bool {
        self.missing.is_empty() && self.duplicates.is_empty()
    }
}

/// Every constructor of `sum` must head exactly one arm.
pub fn check_exhaustive(arms: &[Arm], sum: &MonoSumDef) -> Exhaustiveness {
    let names: Vec<String> = arms.iter().map(|a| a.ctor.clone()).collect();
    exhaustiveness(&names, sum)
}

fn exhaustiveness(arms: &[String], sum: &MonoSumDef) -> Exhaustiveness {
    let mut out = Exhaustiveness::default();
    for case in &sum.cases {
        match arms.iter().filter(|a| **a == case.ctor).count() {
            0 => out.missing.push(case.ctor.clone()),
            1 => {}
            _ => out.duplicates.push(case.ctor.clone()),
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObligationKind {
    OutputType,
    Guard,
    Exhaustiveness,
}

impl ObligationKind {
    pub fn name(self) -> &'static str {
        match self {
            ObligationKind::OutputType => "OUTPUT-TYPE",
            ObligationKind::Guard => "GUARD",
            ObligationKind::Exhaustiveness => "EXHAUSTIVENESS",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaseProblem {
    pub path: Vec<PathStep>,
    pub sum: String,
    pub result: Exhaustiveness,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Detail {
    None,
    /// Declared return type and the body's type, if it could be computed.
    Returns { declared: String, found: Option<String> },
    Type(TypeError),
    Cases(Vec<CaseProblem>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Obligation {
    pub kind: ObligationKind,
    pub satisfied: bool,
    pub detail: Detail,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObligationReport {
    pub name: String,
    pub obligations: Vec<Obligation>,
}

impl ObligationReport {
    pub fn all_satisfied(&self) -> bool {
        self.obligations.iter().all(|o| o.satisfied)
    }

    pub fn get(&self, kind: ObligationKind) -> Option<&Obligation> {
        self.obligations.iter().find(|o| o.kind == kind)
    }

    pub fn is_satisfied(&self, kind: ObligationKind) -> bool {
        self.get(kind).is_some_and(|o| o.satisfied)
    }

    pub fn render_text(&self) -> String {
        let mut out = format!("{}\n", self.name);
        for o in &self.obligations {
            let status = if o.satisfied { "satisfied" } else { "VIOLATED" };
            let detail = match &o.detail {
                Detail::None => String::new(),
                Detail::Returns { declared, found } => match found {
                    Some(f) if f == declared => format!("returns {declared}"),
                    Some(f) => format!("declared {declared}, body has type {f}"),
                    None => format!("declared {declared}, body does not type check"),
                },
                Detail::Type(e) => e.to_string(),
                Detail::Cases(problems) => problems
                    .iter()
                    .map(|p| {
                        let mut parts = Vec::new();
                        if !p.result.missing.is_empty() {
                            parts.push(format!("missing {}", p.result.missing.join(", ")));
                        }
                        if !p.result.duplicates.is_empty() {
                            parts.push(format!("duplicate {}", p.result.duplicates.join(", ")));
                        }
                        format!("case-of over {} at {}: {}", p.sum, path_text(&p.path), parts.join("; "))
                    })
                    .collect::<Vec<_>>()
                    .join("; "),
            };
            out.push_str(format!("  {:<15}{:<10}{}", o.kind.name(), status, detail).trim_end());
            out.push('\n');
        }
        out
    }

    pub fn to_sexpr(&self) -> SExpr {
        let mut items = vec![SExpr::sym("OBLIGATIONS"), SExpr::Symbol(self.name.clone())];
        for o in &self.obligations {
            let mut entry = vec![
                SExpr::sym(o.kind.name()),
                SExpr::sym(if o.satisfied { "SATISFIED" } else { "VIOLATED" }),
            ];
            match &o.detail {
                Detail::None => {}
                Detail::Returns { declared, found } => entry.push(SExpr::list([
                    SExpr::sym("RETURNS"),
                    SExpr::Symbol(declared.clone()),
                    found.clone().map(SExpr::Symbol).unwrap_or_else(|| SExpr::sym("NIL")),
                ])),
                Detail::Type(e) => entry.push(e.to_sexpr()),
                Detail::Cases(problems) => {
                    for p in problems {
                        entry.push(SExpr::list([
                            SExpr::sym("CASE"),
                            SExpr::Symbol(p.sum.clone()),
                            SExpr::kw("AT"),
                            path_sexpr(&p.path),
                            SExpr::kw("MISSING"),
                            SExpr::list(p.result.missing.iter().cloned().map(SExpr::Symbol)),
                            SExpr::kw("DUPLICATES"),
                            SExpr::list(p.result.duplicates.iter().cloned().map(SExpr::Symbol)),
                        ]));
                    }
                }
            }
            items.push(SExpr::List(entry));
        }
        SExpr::List(items)
    }
}

/// Checks `body` as the definition of `name` with the given typed variables
/// and declared result type. Obligations are reported in the order
/// OUTPUT-TYPE, GUARD, EXHAUSTIVENESS.
pub fn check_body(
    name: &str,
    vars: &[(String, String)],
    declared: &str,
    body: &Term,
    env: &TypeEnv,
) -> ObligationReport {
    let mut checker = Checker::new(env, vars);
    let unknown_type = vars
        .iter()
        .map(|(_, t)| t.as_str())
        .chain([declared])
        .find(|t| !env.is_type(t));
    let typed = match unknown_type {
        Some(t) => Err(TypeError {
            path: Vec::new(),
            kind: TypeErrorKind::UnknownType(t.to_string()),
        }),
        None => checker.type_of(body),
    };
    let found = typed.as_ref().ok().cloned();
    let output = Obligation {
        kind: ObligationKind::OutputType,
        satisfied: found.as_deref() == Some(declared),
        detail: Detail::Returns {
            declared: declared.to_string(),
            found,
        },
    };
    let guard = match typed {
        Ok(_) => Obligation {
            kind: ObligationKind::Guard,
            satisfied: true,
            detail: Detail::None,
        },
        Err(e) => Obligation {
            kind: ObligationKind::Guard,
            satisfied: false,
            detail: Detail::Type(e),
        },
    };
    let problems: Vec<CaseProblem> = checker
        .cases
        .iter()
        .filter_map(|site| {
            let result = exhaustiveness(&site.arms, env.sum(&site.sum)?);
            (!result.is_satisfied()).then(|| CaseProblem {
                path: site.path.clone(),
                sum: site.sum.clone(),
                result,
            })
        })
        .collect();
    let cases = Obligation {
        kind: ObligationKind::Exhaustiveness,
        satisfied: problems.is_empty(),
        detail: Detail::Cases(problems),
    };
    ObligationReport {
        name: name.to_string(),
        obligations: vec![output, guard, cases],
    }
}

/// Expects `env` to already contain `f`'s own signature.
pub fn check_function(f: &MonoFunDef, env: &TypeEnv) -> ObligationReport {
    check_body(&f.name, &f.params, &f.return_type, &f.body, env)
}

/// A theorem body is checked as a function returning BOOL.
pub fn check_theorem_body(name: &str, vars: &[(String, String)], body: &Term, env: &TypeEnv) -> ObligationReport {
    check_body(name, vars, "BOOL", body, env)
}

/// Reports for every function and theorem in definition order, each checked
/// against the definitions before it plus itself.
pub fn check_program(program: &CoreProgram) -> Vec<ObligationReport> {
    let mut env = TypeEnv::new();
    for g in program.generic_theorems() {
        g.witnesses.iter().for_each(|w| env.add_witness(w));
    }
    let mut reports = Vec::new();
    for item in program.flatten() {
        match item {
            CoreItem::Sum(s) => env.add_sum(s),
            CoreItem::Fun(f) => {
                env.add_function(f);
                reports.push(check_function(f, &env));
            }
            CoreItem::Generic(g) => reports.push(check_theorem_body(&g.name, &g.vars, &g.body, &env)),
            CoreItem::Theorem(t) => reports.push(check_theorem_body(&t.name, &t.vars, &t.body, &env)),
        }
    }
    reports
}
