//! The untyped, predicate-guarded core produced by monomorphization.
//!
//! Every name here is a mangled, ground symbol. Types are referred to by name
//! and recognized by `<NAME>-P`.

use std::collections::HashSet;

use crate::sexpr::SExpr;

/// Recognizer predicate name for a monomorphic type or constructor.
pub fn recognizer(name: &str) -> String {
    format!("{name}-P")
}

/// Accessor name for the 1-based field `index` of `ctor`.
pub fn accessor(ctor: &str, index: usize) -> String {
    format!("{ctor}-ARG-{index}")
}

pub const BUILTIN_TYPES: [&str; 2] = ["INT", "BOOL"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Term {
    Var(String),
    Int(i64),
    Bool(bool),
    /// Constructor application or function call.
    Call { head: String, args: Vec<Term> },
    Case {
        scrutinee: Box<Term>,
        arms: Vec<Arm>,
    },
    Equal(Box<Term>, Box<Term>),
    If(Box<Term>, Box<Term>, Box<Term>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Arm {
    pub ctor: String,
    pub binders: Vec<String>,
    pub body: Term,
}

impl Term {
    pub fn call(head: impl Into<String>, args: Vec<Term>) -> Self {
        Term::Call {
            head: head.into(),
            args,
        }
    }

    pub fn var(name: impl Into<String>) -> Self {
        Term::Var(name.into())
    }

    pub fn to_sexpr(&self) -> SExpr {
        match self {
            Term::Var(v) => SExpr::Symbol(v.clone()),
            Term::Int(n) => SExpr::Integer(*n),
            Term::Bool(true) => SExpr::sym("T"),
            Term::Bool(false) => SExpr::sym("NIL"),
            Term::Call { head, args } => SExpr::list(
                std::iter::once(SExpr::Symbol(head.clone())).chain(args.iter().map(Term::to_sexpr)),
            ),
            Term::Case { scrutinee, arms } => {
                let mut items = vec![SExpr::sym("CASE-OF"), scrutinee.to_sexpr()];
                for arm in arms {
                    let pattern = SExpr::list(
                        std::iter::once(SExpr::Symbol(arm.ctor.clone()))
                            .chain(arm.binders.iter().cloned().map(SExpr::Symbol)),
                    );
                    items.push(SExpr::list([pattern, arm.body.to_sexpr()]));
                }
                SExpr::List(items)
            }
            Term::Equal(l, r) => SExpr::list([SExpr::sym("EQUAL"), l.to_sexpr(), r.to_sexpr()]),
            Term::If(c, t, e) => {
                SExpr::list([SExpr::sym("IF"), c.to_sexpr(), t.to_sexpr(), e.to_sexpr()])
            }
        }
    }

    /// Calls every global name (call heads and pattern constructors).
    pub fn for_each_global<'a>(&'a self, f: &mut impl FnMut(&'a str)) {
        match self {
            Term::Var(_) | Term::Int(_) | Term::Bool(_) => {}
            Term::Call { head, args } => {
                f(head);
                args.iter().for_each(|a| a.for_each_global(f));
            }
            Term::Case { scrutinee, arms } => {
                scrutinee.for_each_global(f);
                for arm in arms {
                    f(&arm.ctor);
                    arm.body.for_each_global(f);
                }
            }
            Term::Equal(l, r) => {
                l.for_each_global(f);
                r.for_each_global(f);
            }
            Term::If(c, t, e) => {
                c.for_each_global(f);
                t.for_each_global(f);
                e.for_each_global(f);
            }
        }
    }

    /// Renames global names through `rename`, leaving variables alone.
    pub fn rename_globals(&self, rename: &impl Fn(&str) -> String) -> Term {
        match self {
            Term::Var(_) | Term::Int(_) | Term::Bool(_) => self.clone(),
            Term::Call { head, args } => Term::Call {
                head: rename(head),
                args: args.iter().map(|a| a.rename_globals(rename)).collect(),
            },
            Term::Case { scrutinee, arms } => Term::Case {
                scrutinee: Box::new(scrutinee.rename_globals(rename)),
                arms: arms
                    .iter()
                    .map(|a| Arm {
                        ctor: rename(&a.ctor),
                        binders: a.binders.clone(),
                        body: a.body.rename_globals(rename),
                    })
                    .collect(),
            },
            Term::Equal(l, r) => Term::Equal(
                Box::new(l.rename_globals(rename)),
                Box::new(r.rename_globals(rename)),
            ),
            Term::If(c, t, e) => Term::If(
                Box::new(c.rename_globals(rename)),
                Box::new(t.rename_globals(rename)),
                Box::new(e.rename_globals(rename)),
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MonoField {
    pub accessor: String,
    pub ty: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MonoCase {
    pub ctor: String,
    pub fields: Vec<MonoField>,
}

impl MonoCase {
    pub fn recognizer(&self) -> String {
        recognizer(&self.ctor)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MonoSumDef {
    pub name: String,
    pub cases: Vec<MonoCase>,
}

impl MonoSumDef {
    pub fn recognizer(&self) -> String {
        recognizer(&self.name)
    }

    pub fn case(&self, ctor: &str) -> Option<&MonoCase> {
        self.cases.iter().find(|c| c.ctor == ctor)
    }

    /// `(DEFSUM NAME (CTOR (TY-P ARG-1) ...) ...)`
    pub fn to_sexpr(&self) -> SExpr {
        let mut items = vec![SExpr::sym("DEFSUM"), SExpr::Symbol(self.name.clone())];
        for case in &self.cases {
            let mut c = vec![SExpr::Symbol(case.ctor.clone())];
            for (i, field) in case.fields.iter().enumerate() {
                c.push(SExpr::list([
                    SExpr::Symbol(recognizer(&field.ty)),
                    SExpr::Symbol(format!("ARG-{}", i + 1)),
                ]));
            }
            items.push(SExpr::List(c));
        }
        SExpr::List(items)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MonoFunDef {
    pub name: String,
    pub params: Vec<(String, String)>,
    pub return_type: String,
    pub body: Term,
}

impl MonoFunDef {
    /// Conjunction of parameter recognizers: `T`, a single predicate, or `(AND ...)`.
    pub fn guard(&self) -> SExpr {
        conjunction(
            self.params
                .iter()
                .map(|(v, t)| SExpr::list([SExpr::Symbol(recognizer(t)), SExpr::Symbol(v.clone())]))
                .collect(),
        )
    }

    pub fn output_theorem_name(&self) -> String {
        format!("{}-TYPE", self.name)
    }

    /// The definition, its output-type obligation, then guard verification.
    pub fn to_sexprs(&self) -> Vec<SExpr> {
        let typed_params = typed_vars(&self.params);
        let call = SExpr::list(
            std::iter::once(SExpr::Symbol(self.name.clone()))
                .chain(self.params.iter().map(|(v, _)| SExpr::Symbol(v.clone()))),
        );
        let result_ok = SExpr::list([SExpr::Symbol(recognizer(&self.return_type)), call]);
        let claim = if self.params.is_empty() {
            result_ok
        } else {
            SExpr::list([SExpr::sym("IMPLIES"), self.guard(), result_ok])
        };
        vec![
            SExpr::list([
                SExpr::sym("DEFUN-CORE"),
                SExpr::Symbol(self.name.clone()),
                typed_params.clone(),
                SExpr::Symbol(self.return_type.clone()),
                SExpr::kw("GUARD"),
                self.guard(),
                self.body.to_sexpr(),
            ]),
            SExpr::list([
                SExpr::sym("DEFTHM-CORE"),
                SExpr::Symbol(self.output_theorem_name()),
                typed_params,
                claim,
                SExpr::kw("OBLIGATION"),
                SExpr::sym("OUTPUT-TYPE"),
            ]),
            SExpr::list([SExpr::sym("VERIFY-GUARDS"), SExpr::Symbol(self.name.clone())]),
        ]
    }
}

fn conjunction(mut parts: Vec<SExpr>) -> SExpr {
    match parts.len() {
        0 => SExpr::sym("T"),
        1 => parts.remove(0),
        _ => SExpr::list(std::iter::once(SExpr::sym("AND")).chain(parts)),
    }
}

fn typed_vars(vars: &[(String, String)]) -> SExpr {
    SExpr::list(
        vars.iter()
            .map(|(v, t)| SExpr::list([SExpr::Symbol(v.clone()), SExpr::Symbol(t.clone())])),
    )
}

/// Ordered abstract → concrete name pairs used to derive a theorem instance
/// from its generic form.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SubstitutionMap {
    pub pairs: Vec<(String, String)>,
}

impl SubstitutionMap {
    pub fn image(&self, name: &str) -> Option<&str> {
        self.pairs
            .iter()
            .find(|(from, _)| from == name)
            .map(|(_, to)| to.as_str())
    }

    /// Maps a name, leaving names outside the domain unchanged.
    pub fn apply_name(&self, name: &str) -> String {
        self.image(name).unwrap_or(name).to_string()
    }

    /// Maps a monomorphic type name through its recognizer pair.
    pub fn apply_type(&self, ty: &str) -> String {
        match self.image(&recognizer(ty)) {
            Some(r) => r.strip_suffix("-P").unwrap_or(r).to_string(),
            None => ty.to_string(),
        }
    }

    pub fn apply(&self, term: &Term) -> Term {
        term.rename_globals(&|n| self.apply_name(n))
    }

    pub fn to_sexprs(&self) -> Vec<SExpr> {
        self.pairs
            .iter()
            .map(|(a, b)| SExpr::list([SExpr::Symbol(a.clone()), SExpr::Symbol(b.clone())]))
            .collect()
    }
}

/// A polymorphic theorem checked over opaque witness types, one per type
/// variable, together with the definitions it needed at those witnesses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenericTheorem {
    pub name: String,
    pub template: String,
    /// Witness type names, in type-variable order. Each is recognized by `<W>-P`.
    pub witnesses: Vec<String>,
    pub witness_core: Vec<CoreItem>,
    pub vars: Vec<(String, String)>,
    pub body: Term,
    pub hints: Vec<SExpr>,
    /// Transitive instantiation dependencies (mangled names) in
    /// definition order; drives the substitution map.
    pub dependencies: Vec<String>,
}

impl GenericTheorem {
    pub fn predicates(&self) -> Vec<String> {
        self.witnesses.iter().map(|w| recognizer(w)).collect()
    }

    pub fn to_sexprs(&self) -> Vec<SExpr> {
        let mut out: Vec<SExpr> = self
            .predicates()
            .into_iter()
            .map(|p| SExpr::list([SExpr::sym("ENCAPSULATE-PREDICATE"), SExpr::Symbol(p)]))
            .collect();
        for item in &self.witness_core {
            out.extend(item.to_sexprs());
        }
        let mut thm = vec![
            SExpr::sym("DEFTHM-CORE"),
            SExpr::Symbol(self.name.clone()),
            typed_vars(&self.vars),
            self.body.to_sexpr(),
            SExpr::kw("GENERIC"),
            SExpr::list(self.predicates().into_iter().map(SExpr::Symbol)),
        ];
        if !self.hints.is_empty() {
            thm.push(SExpr::kw("HINTS"));
            thm.push(SExpr::List(self.hints.clone()));
        }
        out.push(SExpr::List(thm));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TheoremInstance {
    pub name: String,
    pub template: String,
    pub vars: Vec<(String, String)>,
    pub body: Term,
    pub generic: String,
    pub map: SubstitutionMap,
}

impl TheoremInstance {
    pub fn to_sexpr(&self) -> SExpr {
        SExpr::list([
            SExpr::sym("DEFTHM-CORE"),
            SExpr::Symbol(self.name.clone()),
            typed_vars(&self.vars),
            self.body.to_sexpr(),
            SExpr::kw("BY"),
            SExpr::list(
                [SExpr::sym("FUNCTIONAL-INSTANCE"), SExpr::Symbol(self.generic.clone())]
                    .into_iter()
                    .chain(self.map.to_sexprs()),
            ),
        ])
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CoreItem {
    Sum(MonoSumDef),
    Fun(MonoFunDef),
    Generic(GenericTheorem),
    Theorem(TheoremInstance),
}

impl CoreItem {
    pub fn name(&self) -> &str {
        match self {
            CoreItem::Sum(s) => &s.name,
            CoreItem::Fun(f) => &f.name,
            CoreItem::Generic(g) => &g.name,
            CoreItem::Theorem(t) => &t.name,
        }
    }

    pub fn to_sexprs(&self) -> Vec<SExpr> {
        match self {
            CoreItem::Sum(s) => vec![s.to_sexpr()],
            CoreItem::Fun(f) => f.to_sexprs(),
            CoreItem::Generic(g) => g.to_sexprs(),
            CoreItem::Theorem(t) => vec![t.to_sexpr()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CoreProgram {
    pub items: Vec<CoreItem>,
}

impl CoreProgram {
    /// Items in definition order, with each generic theorem's witness core
    /// placed before the theorem itself.
    pub fn flatten(&self) -> Vec<&CoreItem> {
        fn walk<'a>(items: &'a [CoreItem], out: &mut Vec<&'a CoreItem>) {
            for item in items {
                if let CoreItem::Generic(g) = item {
                    walk(&g.witness_core, out);
                }
                out.push(item);
            }
        }
        let mut out = Vec::new();
        walk(&self.items, &mut out);
        out
    }

    pub fn sums(&self) -> impl Iterator<Item = &MonoSumDef> {
        self.flatten().into_iter().filter_map(|i| match i {
            CoreItem::Sum(s) => Some(s),
            _ => None,
        })
    }

    pub fn functions(&self) -> impl Iterator<Item = &MonoFunDef> {
        self.flatten().into_iter().filter_map(|i| match i {
            CoreItem::Fun(f) => Some(f),
            _ => None,
        })
    }

    pub fn theorem_instances(&self) -> impl Iterator<Item = &TheoremInstance> {
        self.items.iter().filter_map(|i| match i {
            CoreItem::Theorem(t) => Some(t),
            _ => None,
        })
    }

    pub fn generic_theorems(&self) -> impl Iterator<Item = &GenericTheorem> {
        self.items.iter().filter_map(|i| match i {
            CoreItem::Generic(g) => Some(g),
            _ => None,
        })
    }

    pub fn to_sexprs(&self) -> Vec<SExpr> {
        self.items.iter().flat_map(CoreItem::to_sexprs).collect()
    }

    /// One canonical form per line.
    pub fn render(&self) -> String {
        self.to_sexprs()
            .iter()
            .map(|f| format!("{f}\n"))
            .collect()
    }

    /// Checks that every name an item refers to is built in or defined by an
    /// earlier item (or by the item itself, for recursion). Returns the first
    /// offending `(item, name)` pair.
    pub fn check_definition_before_use(&self) -> Result<(), (String, String)> {
        let mut defined: HashSet<String> = BUILTIN_TYPES.iter().map(|s| s.to_string()).collect();
        check_items(&self.items, &mut defined)
    }
}

fn check_items(items: &[CoreItem], defined: &mut HashSet<String>) -> Result<(), (String, String)> {
    for item in items {
        let mut uses: Vec<String> = Vec::new();
        match item {
            CoreItem::Sum(s) => {
                defined.insert(s.name.clone());
                for case in &s.cases {
                    defined.insert(case.ctor.clone());
                    uses.extend(case.fields.iter().map(|f| f.ty.clone()));
                }
            }
            CoreItem::Fun(f) => {
                defined.insert(f.name.clone());
                uses.extend(f.params.iter().map(|(_, t)| t.clone()));
                uses.push(f.return_type.clone());
                f.body.for_each_global(&mut |n| uses.push(n.to_string()));
            }
            CoreItem::Generic(g) => {
                defined.extend(g.witnesses.iter().cloned());
                check_items(&g.witness_core, defined)?;
                uses.extend(g.vars.iter().map(|(_, t)| t.clone()));
                g.body.for_each_global(&mut |n| uses.push(n.to_string()));
                defined.insert(g.name.clone());
            }
            CoreItem::Theorem(t) => {
                uses.extend(t.vars.iter().map(|(_, ty)| ty.clone()));
                t.body.for_each_global(&mut |n| uses.push(n.to_string()));
                uses.push(t.generic.clone());
                defined.insert(t.name.clone());
            }
        }
        if let Some(missing) = uses.into_iter().find(|u| !defined.contains(u)) {
            return Err((item.name().to_string(), missing));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq_int() -> MonoSumDef {
        MonoSumDef {
            name: "SEQ-INT".into(),
            cases: vec![
                MonoCase {
                    ctor: "SEQNIL-INT".into(),
                    fields: vec![],
                },
                MonoCase {
                    ctor: "SEQCONS-INT".into(),
                    fields: vec![
                        MonoField {
                            accessor: "SEQCONS-INT-ARG-1".into(),
                            ty: "INT".into(),
                        },
                        MonoField {
                            accessor: "SEQCONS-INT-ARG-2".into(),
                            ty: "SEQ-INT".into(),
                        },
                    ],
                },
            ],
        }
    }

    #[test]
    fn defsum_rendering() {
        assert_eq!(
            seq_int().to_sexpr().to_string(),
            "(DEFSUM SEQ-INT (SEQNIL-INT) (SEQCONS-INT (INT-P ARG-1) (SEQ-INT-P ARG-2)))"
        );
    }

    #[test]
    fn guard_shapes() {
        let mut f = MonoFunDef {
            name: "F".into(),
            params: vec![],
            return_type: "INT".into(),
            body: Term::Int(0),
        };
        assert_eq!(f.guard().to_string(), "T");
        f.params.push(("X".into(), "SEQ-BOOL".into()));
        assert_eq!(f.guard().to_string(), "(SEQ-BOOL-P X)");
        f.params.push(("Y".into(), "INT".into()));
        assert_eq!(f.guard().to_string(), "(AND (SEQ-BOOL-P X) (INT-P Y))");
    }

    #[test]
    fn definition_before_use_detects_forward_reference() {
        let f = MonoFunDef {
            name: "F".into(),
            params: vec![("X".into(), "SEQ-INT".into())],
            return_type: "SEQ-INT".into(),
            body: Term::var("X"),
        };
        let bad = CoreProgram {
            items: vec![CoreItem::Fun(f.clone()), CoreItem::Sum(seq_int())],
        };
        assert_eq!(
            bad.check_definition_before_use(),
            Err(("F".to_string(), "SEQ-INT".to_string()))
        );
        let good = CoreProgram {
            items: vec![CoreItem::Sum(seq_int()), CoreItem::Fun(f)],
        };
        assert_eq!(good.check_definition_before_use(), Ok(()));
    }

    #[test]
    fn substitution_map_maps_types_via_recognizers() {
        let map = SubstitutionMap {
            pairs: vec![
                ("A-P".into(), "INT-P".into()),
                ("SEQ-A-P".into(), "SEQ-INT-P".into()),
                ("SEQAPPEND-A".into(), "SEQAPPEND-INT".into()),
            ],
        };
        assert_eq!(map.apply_type("SEQ-A"), "SEQ-INT");
        assert_eq!(map.apply_type("A"), "INT");
        assert_eq!(map.apply_type("BOOL"), "BOOL");
        let t = Term::call("SEQAPPEND-A", vec![Term::var("X"), Term::var("SEQAPPEND-A")]);
        assert_eq!(
            map.apply(&t),
            Term::call("SEQAPPEND-INT", vec![Term::var("X"), Term::var("SEQAPPEND-A")])
        );
    }
}
