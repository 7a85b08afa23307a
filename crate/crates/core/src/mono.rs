//! Template instantiation: name mangling, type substitution, `:inst`
//! scanning and dependency-ordered emission of monomorphic core definitions.
//!
//! Instantiation is brute force. Every `:inst` reference found in a
//! template's signature and body is instantiated first, depth-first and in
//! first-occurrence order; anything already emitted is dismissed as
//! redundant. A [`Registry`] records where every generated name came from so
//! collisions are reported and theorem instances can be mapped back to their
//! generic form.

use std::collections::{HashMap, HashSet};
use std::fmt;

use indexmap::IndexMap;
use thiserror::Error;

use crate::ast::{
    BaseType, CoproductTemplate, Declaration, Expr, FunctionTemplate, InstRef, Located, TheoremTemplate,
    TypeExpr,
};
use crate::ir::{self, Arm, CoreItem, CoreProgram, GenericTheorem, MonoCase, MonoField, MonoFunDef, MonoSumDef, Term};
use crate::sexpr::Pos;
use crate::typecheck::TypeEnv;

/// Deepest chain of nested instantiations before giving up; only reachable
/// through polymorphic recursion.
const MAX_INSTANTIATION_DEPTH: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Origin {
    Builtin,
    Witness(String),
    Type { template: String, args: Vec<TypeExpr> },
    Constructor { template: String, ctor: String, args: Vec<TypeExpr> },
    Recognizer(String),
    Accessor { ctor: String, index: usize },
    Function { template: String, args: Vec<TypeExpr> },
    GenericTheorem(String),
    Theorem { template: String, args: Vec<TypeExpr> },
}

fn show_args(args: &[TypeExpr]) -> String {
    args.iter().map(|a| format!(" {a}")).collect()
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Builtin => write!(f, "built-in"),
            Origin::Witness(v) => write!(f, "witness type for type variable {v}"),
            Origin::Type { template, args } => write!(f, "type ({template}{})", show_args(args)),
            Origin::Constructor { template, ctor, args } => {
                write!(f, "constructor {ctor} of ({template}{})", show_args(args))
            }
            Origin::Recognizer(of) => write!(f, "recognizer of {of}"),
            Origin::Accessor { ctor, index } => write!(f, "accessor {index} of {ctor}"),
            Origin::Function { template, args } => write!(f, "function ({template}{})", show_args(args)),
            Origin::GenericTheorem(t) => write!(f, "generic theorem {t}"),
            Origin::Theorem { template, args } => write!(f, "theorem ({template}{})", show_args(args)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InstKind {
    Type,
    Function,
    Theorem,
}

/// A completed instantiation and the instantiations it depends on directly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instantiation {
    pub kind: InstKind,
    pub template: String,
    pub args: Vec<TypeExpr>,
    pub deps: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MonoError {
    #[error("unknown template `{0}`")]
    UnknownTemplate(String),
    #[error("`{template}` expects {expected} type argument(s), given {found}")]
    ArityMismatch {
        template: String,
        expected: usize,
        found: usize,
    },
    #[error("partial instantiation of `{template}` is not supported ({detail}); all type variables must be instantiated in one step")]
    PartialInstantiation { template: String, detail: String },
    #[error("mutually recursive instantiation is not supported: {}", cycle.join(" -> "))]
    MutualRecursion { cycle: Vec<String> },
    #[error("instantiation of `{0}` nests too deeply (polymorphic recursion is not supported)")]
    InstantiationTooDeep(String),
    #[error("name collision on `{name}`: already the {existing}, now also the {new}")]
    Collision {
        name: String,
        existing: Box<Origin>,
        new: Box<Origin>,
    },
    #[error("`{0}` is already declared")]
    DuplicateTemplate(String),
    #[error("constructor `{ctor}` of `{second}` clashes with the constructor of the same name and arity in `{first}`")]
    DuplicateConstructor {
        ctor: String,
        first: String,
        second: String,
    },
    #[error("unbound type variable `{0}`")]
    UnboundTypeVariable(String),
    #[error("`{0}` is not a type")]
    NotAType(String),
    #[error("`{0}` is a type, not a function or constructor")]
    NotCallable(String),
    #[error("`{0}` is not a constructor")]
    NotAConstructor(String),
    #[error("theorem `{theorem}` does not type check as a BOOL-valued body:\n{report}")]
    TypedTheorem { theorem: String, report: String },
    #[error("substitution map for `{theorem}` is incomplete: no concrete counterpart `{hole}`")]
    IncompleteMap { theorem: String, hole: String },
    #[error("internal error: {0}")]
    Internal(String),
}

/// Error from [`expand_program`], annotated with the declaration that
/// triggered it.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{pos}: in {decl}: {source}")]
pub struct ExpandError {
    pub pos: Pos,
    pub decl: String,
    pub source: MonoError,
}

/// Mangled name of `head` applied to ground `args`: the head followed by
/// each argument's own mangled name, joined by hyphens.
pub fn mangle(head: &str, args: &[TypeExpr]) -> Result<String, MonoError> {
    let mut out = head.to_string();
    for arg in args {
        out.push('-');
        out.push_str(&type_name(arg)?);
    }
    Ok(out)
}

/// Monomorphic name of a ground type.
pub fn type_name(ty: &TypeExpr) -> Result<String, MonoError> {
    match ty {
        TypeExpr::Base(b) => Ok(b.name().to_string()),
        TypeExpr::Witness(w) => Ok(w.clone()),
        TypeExpr::Inst { head, args } => mangle(head, args),
        TypeExpr::Var(v) => Err(MonoError::UnboundTypeVariable(v.clone())),
    }
}

/// Simultaneous substitution of ground types for type variables.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Subst {
    pairs: Vec<(String, TypeExpr)>,
}

impl Subst {
    pub fn new(template: &str, vars: &[String], args: &[TypeExpr]) -> Result<Self, MonoError> {
        if vars.len() != args.len() {
            return Err(MonoError::ArityMismatch {
                template: template.to_string(),
                expected: vars.len(),
                found: args.len(),
            });
        }
        if let Some(bad) = args.iter().find(|a| !a.is_ground()) {
            let mut free = Vec::new();
            bad.vars(&mut free);
            return Err(MonoError::PartialInstantiation {
                template: template.to_string(),
                detail: format!("argument {bad} still mentions {}", free.join(", ")),
            });
        }
        Ok(Subst {
            pairs: vars.iter().cloned().zip(args.iter().cloned()).collect(),
        })
    }

    pub fn apply(&self, ty: &TypeExpr) -> Result<TypeExpr, MonoError> {
        match ty {
            TypeExpr::Var(v) => self
                .pairs
                .iter()
                .find(|(name, _)| name == v)
                .map(|(_, t)| t.clone())
                .ok_or_else(|| MonoError::UnboundTypeVariable(v.clone())),
            TypeExpr::Inst { head, args } => Ok(TypeExpr::Inst {
                head: head.clone(),
                args: args.iter().map(|a| self.apply(a)).collect::<Result<_, _>>()?,
            }),
            TypeExpr::Base(_) | TypeExpr::Witness(_) => Ok(ty.clone()),
        }
    }
}

pub fn substitute_type(ty: &TypeExpr, subst: &Subst) -> Result<TypeExpr, MonoError> {
    subst.apply(ty)
}

/// Every `:inst` reference in `types` and `body` with `subst` applied, in
/// first-occurrence order without duplicates. Type arguments that are
/// themselves instances come before the reference that uses them.
pub fn scan_insts(
    types: &[&TypeExpr],
    body: Option<&Expr>,
    subst: &Subst,
) -> Result<Vec<(String, Vec<TypeExpr>)>, MonoError> {
    fn push(out: &mut Vec<(String, Vec<TypeExpr>)>, key: (String, Vec<TypeExpr>)) {
        if !out.contains(&key) {
            out.push(key);
        }
    }
    fn walk_type(ty: &TypeExpr, out: &mut Vec<(String, Vec<TypeExpr>)>) {
        if let TypeExpr::Inst { head, args } = ty {
            args.iter().for_each(|a| walk_type(a, out));
            push(out, (head.clone(), args.clone()));
        }
    }
    let mut out = Vec::new();
    for ty in types {
        walk_type(&subst.apply(ty)?, &mut out);
    }
    if let Some(body) = body {
        let mut refs = Vec::new();
        body.inst_refs(&mut refs);
        for r in refs {
            let args = r
                .type_args
                .iter()
                .map(|a| subst.apply(a))
                .collect::<Result<Vec<_>, _>>()?;
            args.iter().for_each(|a| walk_type(a, &mut out));
            push(&mut out, (r.target.clone(), args));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct Registry {
    names: HashMap<String, Origin>,
    emitted: IndexMap<String, Instantiation>,
    sums: HashMap<String, MonoSumDef>,
}

impl Default for Registry {
    fn default() -> Self {
        Self::new()
    }
}

impl Registry {
    pub fn new() -> Self {
        let names = ["INT", "BOOL", "INT-P", "BOOL-P", "T", "NIL", "EQUAL", "IF", "CASE-OF", "AND"]
            .into_iter()
            .map(|n| (n.to_string(), Origin::Builtin))
            .collect();
        Registry {
            names,
            emitted: IndexMap::new(),
            sums: HashMap::new(),
        }
    }

    /// Records that `name` stands for `origin`, failing if it already stands
    /// for something else.
    pub fn claim(&mut self, name: &str, origin: Origin) -> Result<(), MonoError> {
        match self.names.get(name) {
            None => {
                self.names.insert(name.to_string(), origin);
                Ok(())
            }
            Some(existing) if *existing == origin => Ok(()),
            // A theorem without type variables is its own single instance.
            Some(Origin::GenericTheorem(t))
                if matches!(&origin, Origin::Theorem { template, args } if template == t && args.is_empty()) =>
            {
                Ok(())
            }
            Some(existing) => Err(MonoError::Collision {
                name: name.to_string(),
                existing: Box::new(existing.clone()),
                new: Box::new(origin),
            }),
        }
    }

    pub fn origin(&self, name: &str) -> Option<&Origin> {
        self.names.get(name)
    }

    pub fn is_emitted(&self, name: &str) -> bool {
        self.emitted.contains_key(name)
    }

    pub fn instantiation(&self, name: &str) -> Option<&Instantiation> {
        self.emitted.get(name)
    }

    /// Emitted instantiations in emission order.
    pub fn instantiations(&self) -> impl Iterator<Item = (&str, &Instantiation)> {
        self.emitted.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn sum(&self, name: &str) -> Option<&MonoSumDef> {
        self.sums.get(name)
    }

    pub(crate) fn record_instantiation(&mut self, name: &str, inst: Instantiation) {
        self.emitted.insert(name.to_string(), inst);
    }

    /// `roots` and everything they depend on, dependencies first.
    pub fn dependency_closure(&self, roots: &[String]) -> Vec<String> {
        fn visit(reg: &Registry, name: &str, seen: &mut HashSet<String>, out: &mut Vec<String>) {
            if !seen.insert(name.to_string()) {
                return;
            }
            if let Some(inst) = reg.emitted.get(name) {
                for d in &inst.deps {
                    visit(reg, d, seen, out);
                }
            }
            out.push(name.to_string());
        }
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for r in roots {
            visit(self, r, &mut seen, &mut out);
        }
        out
    }
}

enum Entry {
    Entered,
    SelfReference,
}

/// Stateful expansion of one program.
#[derive(Debug, Clone, Default)]
pub struct Expander {
    coproducts: HashMap<String, CoproductTemplate>,
    ctor_owners: HashMap<String, Vec<String>>,
    functions: HashMap<String, FunctionTemplate>,
    pub(crate) theorems: HashMap<String, (TheoremTemplate, GenericTheorem)>,
    pub(crate) registry: Registry,
    pub(crate) env: TypeEnv,
    stack: Vec<String>,
    program: CoreProgram,
}

impl Expander {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn program(&self) -> &CoreProgram {
        &self.program
    }

    pub fn into_program(self) -> CoreProgram {
        self.program
    }

    pub fn generic_theorem(&self, name: &str) -> Option<&GenericTheorem> {
        self.theorems.get(name).map(|(_, g)| g)
    }

    /// Processes one declaration, returning the items it emitted (also
    /// appended to the program).
    pub fn declare(&mut self, decl: &Declaration) -> Result<Vec<CoreItem>, MonoError> {
        let mut out = Vec::new();
        match decl {
            Declaration::Coproduct(c) => {
                self.register_coproduct(c)?;
                if c.type_vars.is_empty() {
                    self.inst_coproduct(&c.name, &[], &mut out)?;
                }
            }
            Declaration::Function(f) => {
                self.register_name(&f.name)?;
                self.functions.insert(f.name.clone(), f.clone());
                if f.type_vars.is_empty() {
                    self.inst_function(&f.name, &[], &mut out)?;
                }
            }
            Declaration::Theorem(t) => {
                self.register_name(&t.name)?;
                let generic = self.genericize(t)?;
                self.theorems.insert(t.name.clone(), (t.clone(), generic.clone()));
                out.push(CoreItem::Generic(generic));
                if t.type_vars.is_empty() {
                    self.inst_theorem(&t.name, &[], &mut out)?;
                }
            }
            Declaration::Instantiate(d) => self.directive(&d.target, &d.args, &mut out)?,
        }
        self.program.items.extend(out.iter().cloned());
        Ok(out)
    }

    /// Runs `(<target>-instantiate args...)`.
    pub fn instantiate(&mut self, target: &str, args: &[TypeExpr]) -> Result<Vec<CoreItem>, MonoError> {
        self.declare(&Declaration::Instantiate(crate::ast::InstantiateDirective {
            target: target.to_string(),
            args: args.to_vec(),
        }))
    }

    fn register_name(&self, name: &str) -> Result<(), MonoError> {
        if self.coproducts.contains_key(name)
            || self.functions.contains_key(name)
            || self.theorems.contains_key(name)
            || self.ctor_owners.contains_key(name)
        {
            return Err(MonoError::DuplicateTemplate(name.to_string()));
        }
        Ok(())
    }

    fn register_coproduct(&mut self, c: &CoproductTemplate) -> Result<(), MonoError> {
        if self.coproducts.contains_key(&c.name)
            || self.functions.contains_key(&c.name)
            || self.theorems.contains_key(&c.name)
        {
            return Err(MonoError::DuplicateTemplate(c.name.clone()));
        }
        for case in &c.cases {
            if self.functions.contains_key(&case.ctor) || self.theorems.contains_key(&case.ctor) {
                return Err(MonoError::DuplicateTemplate(case.ctor.clone()));
            }
            if let Some(first) = self.ctor_owners.get(&case.ctor).and_then(|owners| {
                owners
                    .iter()
                    .find(|o| self.coproducts[*o].type_vars.len() == c.type_vars.len())
            }) {
                return Err(MonoError::DuplicateConstructor {
                    ctor: case.ctor.clone(),
                    first: first.clone(),
                    second: c.name.clone(),
                });
            }
        }
        for case in &c.cases {
            self.ctor_owners
                .entry(case.ctor.clone())
                .or_default()
                .push(c.name.clone());
        }
        self.coproducts.insert(c.name.clone(), c.clone());
        Ok(())
    }

    fn directive(&mut self, target: &str, args: &[TypeExpr], out: &mut Vec<CoreItem>) -> Result<(), MonoError> {
        let arity = if let Some(t) = self.theorems.get(target) {
            t.0.type_vars.len()
        } else if let Some(c) = self.coproducts.get(target) {
            c.type_vars.len()
        } else if let Some(f) = self.functions.get(target) {
            f.type_vars.len()
        } else if let Some(owners) = self.ctor_owners.get(target) {
            match owners.iter().find(|o| self.coproducts[*o].type_vars.len() == args.len()) {
                Some(o) => self.coproducts[o].type_vars.len(),
                None => self.coproducts[&owners[0]].type_vars.len(),
            }
        } else {
            return Err(MonoError::UnknownTemplate(target.to_string()));
        };
        if args.len() < arity {
            return Err(MonoError::PartialInstantiation {
                template: target.to_string(),
                detail: format!("{} of {arity} type argument(s) given", args.len()),
            });
        }
        // A bare name that is not a known type can only be a type variable.
        for arg in args {
            if let Some(unknown) = first_unknown_type(arg, self) {
                return Err(MonoError::PartialInstantiation {
                    template: target.to_string(),
                    detail: format!("`{unknown}` is not a ground type"),
                });
            }
        }
        if self.theorems.contains_key(target) {
            self.inst_theorem(target, args, out).map(|_| ())
        } else {
            self.inst_dep(target, args, out).map(|_| ())
        }
    }

    fn ctor_owner(&self, ctor: &str, arity: usize) -> Option<&str> {
        self.ctor_owners
            .get(ctor)?
            .iter()
            .find(|o| self.coproducts[*o].type_vars.len() == arity)
            .map(String::as_str)
    }

    /// Instantiates whatever `target` names and returns the mangled name of
    /// the resulting instantiation (the owning type, for constructors).
    pub(crate) fn inst_dep(
        &mut self,
        target: &str,
        args: &[TypeExpr],
        out: &mut Vec<CoreItem>,
    ) -> Result<String, MonoError> {
        if let Some(c) = self.coproducts.get(target) {
            if c.type_vars.len() == args.len() || self.ctor_owner(target, args.len()).is_none() {
                return self.inst_coproduct(target, args, out);
            }
        }
        if let Some(owner) = self.ctor_owner(target, args.len()).map(str::to_string) {
            return self.inst_coproduct(&owner, args, out);
        }
        if let Some(owners) = self.ctor_owners.get(target) {
            return Err(MonoError::ArityMismatch {
                template: target.to_string(),
                expected: self.coproducts[&owners[0]].type_vars.len(),
                found: args.len(),
            });
        }
        if self.functions.contains_key(target) {
            return self.inst_function(target, args, out);
        }
        Err(MonoError::UnknownTemplate(target.to_string()))
    }

    /// Makes sure a ground type is defined and returns its name.
    pub(crate) fn ensure_type(&mut self, ty: &TypeExpr, out: &mut Vec<CoreItem>) -> Result<String, MonoError> {
        match ty {
            TypeExpr::Base(b) => Ok(b.name().to_string()),
            TypeExpr::Witness(w) => match self.registry.origin(w) {
                Some(Origin::Witness(_)) => Ok(w.clone()),
                _ => Err(MonoError::NotAType(w.clone())),
            },
            TypeExpr::Var(v) => Err(MonoError::UnboundTypeVariable(v.clone())),
            TypeExpr::Inst { head, args } => {
                if self.coproducts.contains_key(head) {
                    self.inst_coproduct(head, args, out)
                } else if self.functions.contains_key(head) || self.ctor_owners.contains_key(head) {
                    Err(MonoError::NotAType(head.clone()))
                } else {
                    Err(MonoError::UnknownTemplate(head.clone()))
                }
            }
        }
    }

    fn enter(&mut self, name: &str) -> Result<Entry, MonoError> {
        if self.stack.last().is_some_and(|top| top == name) {
            return Ok(Entry::SelfReference);
        }
        if let Some(i) = self.stack.iter().position(|s| s == name) {
            let mut cycle = self.stack[i..].to_vec();
            cycle.push(name.to_string());
            return Err(MonoError::MutualRecursion { cycle });
        }
        if self.stack.len() >= MAX_INSTANTIATION_DEPTH {
            return Err(MonoError::InstantiationTooDeep(name.to_string()));
        }
        self.stack.push(name.to_string());
        Ok(Entry::Entered)
    }

    pub(crate) fn emit(&mut self, item: CoreItem, out: &mut Vec<CoreItem>) {
        self.env.add_item(&item);
        out.push(item);
    }

    /// Instantiates the dependencies found by [`scan_insts`], returning their
    /// mangled names (without `skip`).
    pub(crate) fn inst_deps(
        &mut self,
        deps: &[(String, Vec<TypeExpr>)],
        skip: &str,
        out: &mut Vec<CoreItem>,
    ) -> Result<Vec<String>, MonoError> {
        let mut names = Vec::new();
        for (target, args) in deps {
            let name = self.inst_dep(target, args, out)?;
            if name != skip && !names.contains(&name) {
                names.push(name);
            }
        }
        Ok(names)
    }

    fn check_args(&mut self, template: &str, vars: &[String], args: &[TypeExpr], out: &mut Vec<CoreItem>) -> Result<Subst, MonoError> {
        let subst = Subst::new(template, vars, args)?;
        for a in args {
            self.ensure_type(a, out)?;
        }
        Ok(subst)
    }

    pub(crate) fn inst_coproduct(
        &mut self,
        name: &str,
        args: &[TypeExpr],
        out: &mut Vec<CoreItem>,
    ) -> Result<String, MonoError> {
        let tpl = self
            .coproducts
            .get(name)
            .cloned()
            .ok_or_else(|| MonoError::UnknownTemplate(name.to_string()))?;
        let subst = Subst::new(name, &tpl.type_vars, args)?;
        let mangled = mangle(name, args)?;
        self.registry.claim(
            &mangled,
            Origin::Type {
                template: name.to_string(),
                args: args.to_vec(),
            },
        )?;
        if self.registry.is_emitted(&mangled) {
            return Ok(mangled);
        }
        if let Entry::SelfReference = self.enter(&mangled)? {
            return Ok(mangled);
        }
        let result = self.build_sum(&tpl, args, &subst, &mangled, out);
        self.stack.pop();
        let (def, deps) = result?;
        self.registry.sums.insert(mangled.clone(), def.clone());
        self.registry.record_instantiation(
            &mangled,
            Instantiation {
                kind: InstKind::Type,
                template: name.to_string(),
                args: args.to_vec(),
                deps,
            },
        );
        self.emit(CoreItem::Sum(def), out);
        Ok(mangled)
    }

    fn build_sum(
        &mut self,
        tpl: &CoproductTemplate,
        args: &[TypeExpr],
        subst: &Subst,
        mangled: &str,
        out: &mut Vec<CoreItem>,
    ) -> Result<(MonoSumDef, Vec<String>), MonoError> {
        for a in args {
            self.ensure_type(a, out)?;
        }
        let field_types: Vec<&TypeExpr> = tpl.cases.iter().flat_map(|c| &c.field_types).collect();
        let deps = scan_insts(&field_types, None, subst)?;
        let dep_names = self.inst_deps(&deps, mangled, out)?;
        self.registry.claim(&ir::recognizer(mangled), Origin::Recognizer(mangled.to_string()))?;
        let mut cases = Vec::new();
        for case in &tpl.cases {
            let ctor = mangle(&case.ctor, args)?;
            self.registry.claim(
                &ctor,
                Origin::Constructor {
                    template: tpl.name.clone(),
                    ctor: case.ctor.clone(),
                    args: args.to_vec(),
                },
            )?;
            self.registry.claim(&ir::recognizer(&ctor), Origin::Recognizer(ctor.clone()))?;
            let mut fields = Vec::new();
            for (i, ty) in case.field_types.iter().enumerate() {
                let accessor = ir::accessor(&ctor, i + 1);
                self.registry.claim(
                    &accessor,
                    Origin::Accessor {
                        ctor: ctor.clone(),
                        index: i + 1,
                    },
                )?;
                fields.push(MonoField {
                    accessor,
                    ty: type_name(&subst.apply(ty)?)?,
                });
            }
            cases.push(MonoCase { ctor, fields });
        }
        Ok((
            MonoSumDef {
                name: mangled.to_string(),
                cases,
            },
            dep_names,
        ))
    }

    pub(crate) fn inst_function(
        &mut self,
        name: &str,
        args: &[TypeExpr],
        out: &mut Vec<CoreItem>,
    ) -> Result<String, MonoError> {
        let tpl = self
            .functions
            .get(name)
            .cloned()
            .ok_or_else(|| MonoError::UnknownTemplate(name.to_string()))?;
        let subst = self.check_args(name, &tpl.type_vars, args, out)?;
        let mangled = mangle(name, args)?;
        self.registry.claim(
            &mangled,
            Origin::Function {
                template: name.to_string(),
                args: args.to_vec(),
            },
        )?;
        if self.registry.is_emitted(&mangled) {
            return Ok(mangled);
        }
        if let Entry::SelfReference = self.enter(&mangled)? {
            return Ok(mangled);
        }
        let result = self.build_function(&tpl, &subst, &mangled, out);
        self.stack.pop();
        let (def, deps) = result?;
        self.registry.record_instantiation(
            &mangled,
            Instantiation {
                kind: InstKind::Function,
                template: name.to_string(),
                args: args.to_vec(),
                deps,
            },
        );
        self.emit(CoreItem::Fun(def), out);
        Ok(mangled)
    }

    fn build_function(
        &mut self,
        tpl: &FunctionTemplate,
        subst: &Subst,
        mangled: &str,
        out: &mut Vec<CoreItem>,
    ) -> Result<(MonoFunDef, Vec<String>), MonoError> {
        let types: Vec<&TypeExpr> = tpl
            .params
            .iter()
            .map(|(_, t)| t)
            .chain([&tpl.return_type])
            .collect();
        let deps = scan_insts(&types, Some(&tpl.body), subst)?;
        let dep_names = self.inst_deps(&deps, mangled, out)?;
        let params = self.typed_vars(&tpl.params, subst, out)?;
        let return_type = self.ensure_type(&subst.apply(&tpl.return_type)?, out)?;
        let body = self.lower(&tpl.body, subst)?;
        Ok((
            MonoFunDef {
                name: mangled.to_string(),
                params,
                return_type,
                body,
            },
            dep_names,
        ))
    }

    pub(crate) fn typed_vars(
        &mut self,
        vars: &[(String, TypeExpr)],
        subst: &Subst,
        out: &mut Vec<CoreItem>,
    ) -> Result<Vec<(String, String)>, MonoError> {
        vars.iter()
            .map(|(v, t)| Ok((v.clone(), self.ensure_type(&subst.apply(t)?, out)?)))
            .collect()
    }

    fn callable_name(&self, r: &InstRef, subst: &Subst) -> Result<String, MonoError> {
        let args = r
            .type_args
            .iter()
            .map(|a| subst.apply(a))
            .collect::<Result<Vec<_>, _>>()?;
        if self.ctor_owner(&r.target, args.len()).is_some() {
            return mangle(&r.target, &args);
        }
        if let Some(f) = self.functions.get(&r.target) {
            if f.type_vars.len() != args.len() {
                return Err(MonoError::ArityMismatch {
                    template: r.target.clone(),
                    expected: f.type_vars.len(),
                    found: args.len(),
                });
            }
            return mangle(&r.target, &args);
        }
        if self.coproducts.contains_key(&r.target) {
            return Err(MonoError::NotCallable(r.target.clone()));
        }
        Err(MonoError::UnknownTemplate(r.target.clone()))
    }

    /// Rewrites a template body into a ground core term.
    pub(crate) fn lower(&self, expr: &Expr, subst: &Subst) -> Result<Term, MonoError> {
        Ok(match expr {
            Expr::Var(v) => Term::Var(v.clone()),
            Expr::Int(n) => Term::Int(*n),
            Expr::Bool(b) => Term::Bool(*b),
            Expr::Call { head, args } => Term::Call {
                head: self.callable_name(head, subst)?,
                args: args.iter().map(|a| self.lower(a, subst)).collect::<Result<_, _>>()?,
            },
            Expr::CaseOf { scrutinee, branches } => Term::Case {
                scrutinee: Box::new(self.lower(scrutinee, subst)?),
                arms: branches
                    .iter()
                    .map(|b| {
                        let n = b.ctor.type_args.len();
                        if self.ctor_owner(&b.ctor.target, n).is_none() {
                            return Err(match self.ctor_owners.get(&b.ctor.target) {
                                Some(owners) => MonoError::ArityMismatch {
                                    template: b.ctor.target.clone(),
                                    expected: self.coproducts[&owners[0]].type_vars.len(),
                                    found: n,
                                },
                                None => MonoError::NotAConstructor(b.ctor.target.clone()),
                            });
                        }
                        Ok(Arm {
                            ctor: self.callable_name(&b.ctor, subst)?,
                            binders: b.binders.clone(),
                            body: self.lower(&b.body, subst)?,
                        })
                    })
                    .collect::<Result<_, _>>()?,
            },
            Expr::Equal(l, r) => Term::Equal(Box::new(self.lower(l, subst)?), Box::new(self.lower(r, subst)?)),
            Expr::If(c, t, e) => Term::If(
                Box::new(self.lower(c, subst)?),
                Box::new(self.lower(t, subst)?),
                Box::new(self.lower(e, subst)?),
            ),
        })
    }
}

fn first_unknown_type(ty: &TypeExpr, ex: &Expander) -> Option<String> {
    match ty {
        TypeExpr::Inst { head, args } => {
            let known = ex.coproducts.contains_key(head)
                || ex.functions.contains_key(head)
                || ex.ctor_owners.contains_key(head)
                || BaseType::from_name(head).is_some();
            if !known && args.is_empty() {
                return Some(head.clone());
            }
            args.iter().find_map(|a| first_unknown_type(a, ex))
        }
        TypeExpr::Var(v) => Some(v.clone()),
        _ => None,
    }
}

/// Expands declarations in order into a core program.
pub fn expand_program(decls: &[Located<Declaration>]) -> Result<CoreProgram, ExpandError> {
    let mut ex = Expander::new();
    for d in decls {
        ex.declare(&d.node).map_err(|source| ExpandError {
            pos: d.pos,
            decl: d.node.describe(),
            source,
        })?;
    }
    Ok(ex.into_program())
}
