//! Surface declarations: polymorphic templates, instantiation directives and
//! the typed expression language, parsed from s-expressions.

use std::fmt;

use thiserror::Error;

use crate::sexpr::{self, Pos, PosTree, SExpr, SyntaxError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BaseType {
    Int,
    Bool,
}

impl BaseType {
    pub fn name(self) -> &'static str {
        match self {
            BaseType::Int => "INT",
            BaseType::Bool => "BOOL",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "INT" => Some(BaseType::Int),
            "BOOL" => Some(BaseType::Bool),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum TypeExpr {
    Base(BaseType),
    Var(String),
    /// A named template applied to type arguments. Zero-arity concrete types
    /// such as `SEQINT` are `Inst` with no arguments.
    Inst { head: String, args: Vec<TypeExpr> },
    /// Opaque stand-in for a type variable while a theorem is checked
    /// generically. Ground.
    Witness(String),
}

impl TypeExpr {
    pub fn inst(head: impl Into<String>, args: Vec<TypeExpr>) -> Self {
        TypeExpr::Inst {
            head: head.into(),
            args,
        }
    }

    pub fn is_ground(&self) -> bool {
        match self {
            TypeExpr::Var(_) => false,
            TypeExpr::Inst { args, .. } => args.iter().all(TypeExpr::is_ground),
            TypeExpr::Base(_) | TypeExpr::Witness(_) => true,
        }
    }

    /// Type variables in first-occurrence order.
    pub fn vars(&self, out: &mut Vec<String>) {
        match self {
            TypeExpr::Var(v) if !out.contains(v) => out.push(v.clone()),
            TypeExpr::Inst { args, .. } => args.iter().for_each(|a| a.vars(out)),
            _ => {}
        }
    }

    pub fn to_sexpr(&self) -> SExpr {
        match self {
            TypeExpr::Base(b) => SExpr::sym(b.name()),
            TypeExpr::Var(v) | TypeExpr::Witness(v) => SExpr::sym(v.as_str()),
            TypeExpr::Inst { head, args } if args.is_empty() => SExpr::sym(head.as_str()),
            TypeExpr::Inst { head, args } => SExpr::list(
                [SExpr::kw("INST"), SExpr::sym(head.as_str())]
                    .into_iter()
                    .chain(args.iter().map(TypeExpr::to_sexpr)),
            ),
        }
    }
}

impl fmt::Display for TypeExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_sexpr())
    }
}

/// Reference to a template-level name, `(:inst Target args...)` or a bare
/// symbol with no type arguments.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct InstRef {
    pub target: String,
    pub type_args: Vec<TypeExpr>,
}

impl InstRef {
    pub fn bare(target: impl Into<String>) -> Self {
        InstRef {
            target: target.into(),
            type_args: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    Var(String),
    Int(i64),
    Bool(bool),
    Call { head: InstRef, args: Vec<Expr> },
    CaseOf {
        scrutinee: Box<Expr>,
        branches: Vec<Branch>,
    },
    Equal(Box<Expr>, Box<Expr>),
    If(Box<Expr>, Box<Expr>, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Branch {
    pub ctor: InstRef,
    pub binders: Vec<String>,
    pub body: Expr,
}

impl Expr {
    /// Every `InstRef` in evaluation-independent, left-to-right source order.
    pub fn inst_refs<'a>(&'a self, out: &mut Vec<&'a InstRef>) {
        match self {
            Expr::Var(_) | Expr::Int(_) | Expr::Bool(_) => {}
            Expr::Call { head, args } => {
                out.push(head);
                args.iter().for_each(|a| a.inst_refs(out));
            }
            Expr::CaseOf {
                scrutinee,
                branches,
            } => {
                scrutinee.inst_refs(out);
                for b in branches {
                    out.push(&b.ctor);
                    b.body.inst_refs(out);
                }
            }
            Expr::Equal(l, r) => {
                l.inst_refs(out);
                r.inst_refs(out);
            }
            Expr::If(c, t, e) => {
                c.inst_refs(out);
                t.inst_refs(out);
                e.inst_refs(out);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstructorCase {
    pub ctor: String,
    pub field_types: Vec<TypeExpr>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoproductTemplate {
    pub name: String,
    pub type_vars: Vec<String>,
    pub cases: Vec<ConstructorCase>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionTemplate {
    pub name: String,
    pub type_vars: Vec<String>,
    pub params: Vec<(String, TypeExpr)>,
    pub return_type: TypeExpr,
    pub body: Expr,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TheoremTemplate {
    pub name: String,
    pub type_vars: Vec<String>,
    pub free_vars: Vec<(String, TypeExpr)>,
    pub body: Expr,
    /// Carried through untouched.
    pub hints: Vec<SExpr>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstantiateDirective {
    pub target: String,
    pub args: Vec<TypeExpr>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Declaration {
    Coproduct(CoproductTemplate),
    Function(FunctionTemplate),
    Theorem(TheoremTemplate),
    Instantiate(InstantiateDirective),
}

impl Declaration {
    /// Short description used to annotate downstream errors.
    pub fn describe(&self) -> String {
        match self {
            Declaration::Coproduct(c) => format!("DEFCOPRODUCT {}", c.name),
            Declaration::Function(f) => format!("DEFUN-TYPED {}", f.name),
            Declaration::Theorem(t) => format!("DEFTHM-TYPED {}", t.name),
            Declaration::Instantiate(d) => {
                let mut s = format!("({}-INSTANTIATE", d.target);
                for a in &d.args {
                    s.push(' ');
                    s.push_str(&a.to_string());
                }
                s.push(')');
                s
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Located<T> {
    pub node: T,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FormErrorKind {
    #[error("unsupported top-level form `{0}`")]
    UnsupportedForm(String),
    #[error("malformed {what}: {reason}")]
    Shape { what: &'static str, reason: String },
    #[error("coproduct `{0}` has no cases")]
    EmptyCoproduct(String),
    #[error("duplicate constructor `{0}`")]
    DuplicateConstructor(String),
    #[error("duplicate type variable `{0}`")]
    DuplicateTypeVar(String),
    #[error("duplicate parameter `{0}`")]
    DuplicateParam(String),
    #[error("duplicate binder `{0}` in pattern")]
    DuplicateBinder(String),
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
    #[error("nested patterns are not supported; binders must be plain symbols")]
    NestedPattern,
    #[error("keyword `:{0}` is not valid here")]
    UnexpectedKeyword(String),
    #[error("empty list is not a type")]
    EmptyType,
    #[error("self-reference to `{name}` must apply exactly the declared type variables ({expected}) in order")]
    IrregularRecursion { name: String, expected: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
    #[error("{pos}: {kind}\n  in `{form}`")]
    Form {
        pos: Pos,
        form: String,
        kind: FormErrorKind,
    },
}

impl ParseError {
    pub fn pos(&self) -> Pos {
        match self {
            ParseError::Syntax(
                SyntaxError::Unclosed { pos }
                | SyntaxError::StrayClose { pos }
                | SyntaxError::BadToken { pos, .. },
            ) => *pos,
            ParseError::Form { pos, .. } => *pos,
        }
    }

    pub fn kind(&self) -> Option<&FormErrorKind> {
        match self {
            ParseError::Form { kind, .. } => Some(kind),
            ParseError::Syntax(_) => None,
        }
    }
}

/// A form paired with its positions, so errors can point at subforms.
#[derive(Clone, Copy)]
struct Form<'a> {
    expr: &'a SExpr,
    pos: &'a PosTree,
}

impl<'a> Form<'a> {
    fn err(self, kind: FormErrorKind) -> ParseError {
        ParseError::Form {
            pos: self.pos.pos,
            form: self.expr.to_string(),
            kind,
        }
    }

    fn shape(self, what: &'static str, reason: impl Into<String>) -> ParseError {
        self.err(FormErrorKind::Shape {
            what,
            reason: reason.into(),
        })
    }

    fn items(self) -> Option<Vec<Form<'a>>> {
        let items = self.expr.as_list()?;
        Some(
            items
                .iter()
                .zip(&self.pos.children)
                .map(|(expr, pos)| Form { expr, pos })
                .collect(),
        )
    }

    fn symbol(self) -> Option<&'a str> {
        self.expr.as_symbol()
    }
}

const INSTANTIATE_SUFFIX: &str = "-INSTANTIATE";

/// Reads and parses a whole program.
pub fn parse_program(text: &str) -> Result<Vec<Located<Declaration>>, ParseError> {
    sexpr::read_located(text)?
        .iter()
        .map(|(expr, pos)| {
            Ok(Located {
                node: parse_located(expr, pos)?,
                pos: pos.pos,
            })
        })
        .collect()
}

/// Parses one top-level form without position information.
pub fn parse_toplevel(form: &SExpr) -> Result<Declaration, ParseError> {
    parse_located(form, &synthetic_positions(form))
}

pub fn parse_type_expr(form: &SExpr, tyvars: &[String]) -> Result<TypeExpr, ParseError> {
    type_expr(
        Form {
            expr: form,
            pos: &synthetic_positions(form),
        },
        tyvars,
    )
}

pub fn parse_expr(form: &SExpr, scope: &[String], tyvars: &[String]) -> Result<Expr, ParseError> {
    let mut scope = scope.to_vec();
    expr(
        Form {
            expr: form,
            pos: &synthetic_positions(form),
        },
        &mut scope,
        tyvars,
    )
}

fn synthetic_positions(form: &SExpr) -> PosTree {
    PosTree {
        pos: Pos::default(),
        children: form
            .as_list()
            .map(|items| items.iter().map(synthetic_positions).collect())
            .unwrap_or_default(),
    }
}

fn parse_located(expr: &SExpr, pos: &PosTree) -> Result<Declaration, ParseError> {
    let form = Form { expr, pos };
    let items = form
        .items()
        .filter(|i| !i.is_empty())
        .ok_or_else(|| form.err(FormErrorKind::UnsupportedForm(expr.to_string())))?;
    let head = items[0]
        .symbol()
        .ok_or_else(|| form.err(FormErrorKind::UnsupportedForm(items[0].expr.to_string())))?;
    match head {
        "DEFCOPRODUCT" => coproduct(form, &items).map(Declaration::Coproduct),
        "DEFUN-TYPED" => function(form, &items).map(Declaration::Function),
        "DEFTHM-TYPED" => theorem(form, &items).map(Declaration::Theorem),
        _ => match head.strip_suffix(INSTANTIATE_SUFFIX) {
            Some(target) if !target.is_empty() => {
                let args = items[1..]
                    .iter()
                    .map(|&a| type_expr(a, &[]))
                    .collect::<Result<_, _>>()?;
                Ok(Declaration::Instantiate(InstantiateDirective {
                    target: target.to_string(),
                    args,
                }))
            }
            _ => Err(form.err(FormErrorKind::UnsupportedForm(head.to_string()))),
        },
    }
}

fn name_of(form: Form<'_>, items: &[Form<'_>], what: &'static str) -> Result<String, ParseError> {
    items
        .get(1)
        .and_then(|f| f.symbol())
        .map(str::to_string)
        .ok_or_else(|| form.shape(what, "expected a name symbol after the head"))
}

/// Parses an optional `:type-vars (a b ...)` clause at `items[*idx]`.
fn type_vars(items: &[Form<'_>], idx: &mut usize) -> Result<Vec<String>, ParseError> {
    let Some(kw) = items.get(*idx).filter(|f| f.expr.as_keyword().is_some()) else {
        return Ok(Vec::new());
    };
    if kw.expr.as_keyword() != Some("TYPE-VARS") {
        return Err(kw.err(FormErrorKind::UnexpectedKeyword(
            kw.expr.as_keyword().unwrap_or_default().to_string(),
        )));
    }
    let list = items
        .get(*idx + 1)
        .ok_or_else(|| kw.shape(":type-vars clause", "missing variable list"))?;
    let vars = list
        .items()
        .ok_or_else(|| list.shape(":type-vars clause", "expected a list of symbols"))?;
    let mut out: Vec<String> = Vec::new();
    for v in vars {
        let name = v
            .symbol()
            .filter(|s| !matches!(*s, "T" | "NIL") && BaseType::from_name(s).is_none())
            .ok_or_else(|| v.shape(":type-vars clause", "type variables must be plain symbols"))?;
        if out.iter().any(|o| o == name) {
            return Err(v.err(FormErrorKind::DuplicateTypeVar(name.to_string())));
        }
        out.push(name.to_string());
    }
    *idx += 2;
    Ok(out)
}

fn coproduct(form: Form<'_>, items: &[Form<'_>]) -> Result<CoproductTemplate, ParseError> {
    let name = name_of(form, items, "defcoproduct")?;
    let mut idx = 2;
    let tyvars = type_vars(items, &mut idx)?;
    if idx >= items.len() {
        return Err(form.err(FormErrorKind::EmptyCoproduct(name)));
    }
    let mut cases: Vec<ConstructorCase> = Vec::new();
    for case in &items[idx..] {
        let parts = case
            .items()
            .filter(|p| !p.is_empty())
            .ok_or_else(|| case.shape("coproduct case", "expected (Constructor field-type...)"))?;
        let ctor = parts[0]
            .symbol()
            .ok_or_else(|| parts[0].shape("coproduct case", "constructor name must be a symbol"))?;
        if cases.iter().any(|c| c.ctor == ctor) {
            return Err(case.err(FormErrorKind::DuplicateConstructor(ctor.to_string())));
        }
        let mut field_types = Vec::new();
        for &f in &parts[1..] {
            let ty = type_expr(f, &tyvars)?;
            check_self_reference(f, &ty, &name, &tyvars)?;
            field_types.push(ty);
        }
        cases.push(ConstructorCase {
            ctor: ctor.to_string(),
            field_types,
        });
    }
    Ok(CoproductTemplate {
        name,
        type_vars: tyvars,
        cases,
    })
}

fn check_self_reference(
    form: Form<'_>,
    ty: &TypeExpr,
    name: &str,
    tyvars: &[String],
) -> Result<(), ParseError> {
    if let TypeExpr::Inst { head, args } = ty {
        if head == name {
            let regular = args.len() == tyvars.len()
                && args
                    .iter()
                    .zip(tyvars)
                    .all(|(a, v)| matches!(a, TypeExpr::Var(x) if x == v));
            if !regular {
                return Err(form.err(FormErrorKind::IrregularRecursion {
                    name: name.to_string(),
                    expected: tyvars.join(" "),
                }));
            }
        }
        for a in args {
            check_self_reference(form, a, name, tyvars)?;
        }
    }
    Ok(())
}

fn typed_vars(
    list: Form<'_>,
    tyvars: &[String],
    what: &'static str,
) -> Result<Vec<(String, TypeExpr)>, ParseError> {
    let entries = list
        .items()
        .ok_or_else(|| list.shape(what, "expected ((var type) ...)"))?;
    let mut out: Vec<(String, TypeExpr)> = Vec::new();
    for entry in entries {
        let pair = entry
            .items()
            .filter(|p| p.len() == 2)
            .ok_or_else(|| entry.shape(what, "each entry must be (var type)"))?;
        let var = pair[0]
            .symbol()
            .filter(|s| !matches!(*s, "T" | "NIL"))
            .ok_or_else(|| pair[0].shape(what, "variable must be a symbol"))?;
        if out.iter().any(|(v, _)| v == var) {
            return Err(entry.err(FormErrorKind::DuplicateParam(var.to_string())));
        }
        let ty = type_expr(pair[1], tyvars)?;
        out.push((var.to_string(), ty));
    }
    Ok(out)
}

fn function(form: Form<'_>, items: &[Form<'_>]) -> Result<FunctionTemplate, ParseError> {
    let name = name_of(form, items, "defun-typed")?;
    let mut idx = 2;
    let tyvars = type_vars(items, &mut idx)?;
    if items.len() != idx + 3 {
        return Err(form.shape(
            "defun-typed",
            "expected (defun-typed Name [:type-vars (...)] ((var type)...) output-type body)",
        ));
    }
    let params = typed_vars(items[idx], &tyvars, "defun-typed argument list")?;
    let return_type = type_expr(items[idx + 1], &tyvars)?;
    let mut scope: Vec<String> = params.iter().map(|(v, _)| v.clone()).collect();
    let body = expr(items[idx + 2], &mut scope, &tyvars)?;
    Ok(FunctionTemplate {
        name,
        type_vars: tyvars,
        params,
        return_type,
        body,
    })
}

fn theorem(form: Form<'_>, items: &[Form<'_>]) -> Result<TheoremTemplate, ParseError> {
    let name = name_of(form, items, "defthm-typed")?;
    let mut idx = 2;
    let tyvars = type_vars(items, &mut idx)?;
    if items.len() < idx + 2 {
        return Err(form.shape(
            "defthm-typed",
            "expected (defthm-typed Name [:type-vars (...)] ((var type)...) body [:hints ...])",
        ));
    }
    let free_vars = typed_vars(items[idx], &tyvars, "defthm-typed variable list")?;
    let mut scope: Vec<String> = free_vars.iter().map(|(v, _)| v.clone()).collect();
    let body = expr(items[idx + 1], &mut scope, &tyvars)?;
    let mut hints = Vec::new();
    let mut rest = &items[idx + 2..];
    while let [kw, value, tail @ ..] = rest {
        match kw.expr.as_keyword() {
            Some("HINTS") => hints.push(value.expr.clone()),
            Some(other) => return Err(kw.err(FormErrorKind::UnexpectedKeyword(other.to_string()))),
            None => return Err(kw.shape("defthm-typed", "expected :hints after the body")),
        }
        rest = tail;
    }
    if let [extra] = rest {
        return Err(extra.shape("defthm-typed", "dangling item after the body"));
    }
    Ok(TheoremTemplate {
        name,
        type_vars: tyvars,
        free_vars,
        body,
        hints,
    })
}

fn type_expr(form: Form<'_>, tyvars: &[String]) -> Result<TypeExpr, ParseError> {
    match form.expr {
        SExpr::Symbol(s) => Ok(match BaseType::from_name(s) {
            Some(b) => TypeExpr::Base(b),
            None if tyvars.contains(s) => TypeExpr::Var(s.clone()),
            None => TypeExpr::inst(s.as_str(), Vec::new()),
        }),
        SExpr::Keyword(k) => Err(form.err(FormErrorKind::UnexpectedKeyword(k.clone()))),
        SExpr::Integer(_) => Err(form.shape("type", "integers are not types")),
        SExpr::List(list) if list.is_empty() => Err(form.err(FormErrorKind::EmptyType)),
        SExpr::List(_) => {
            let items = form.items().unwrap_or_default();
            let r = inst_ref(form, &items, tyvars)?;
            Ok(TypeExpr::Inst {
                head: r.target,
                args: r.type_args,
            })
        }
    }
}

/// `(:inst H args...)`, or the shorthand `(H args...)`.
fn inst_ref(form: Form<'_>, items: &[Form<'_>], tyvars: &[String]) -> Result<InstRef, ParseError> {
    let rest = match items.first().map(|f| f.expr) {
        Some(SExpr::Keyword(k)) if k == "INST" => &items[1..],
        Some(SExpr::Keyword(k)) => return Err(items[0].err(FormErrorKind::UnexpectedKeyword(k.clone()))),
        _ => items,
    };
    let target = rest
        .first()
        .and_then(|f| f.symbol())
        .ok_or_else(|| form.shape(":inst reference", "expected a target symbol"))?;
    let type_args = rest[1..]
        .iter()
        .map(|&a| type_expr(a, tyvars))
        .collect::<Result<_, _>>()?;
    Ok(InstRef {
        target: target.to_string(),
        type_args,
    })
}

fn expr(form: Form<'_>, scope: &mut Vec<String>, tyvars: &[String]) -> Result<Expr, ParseError> {
    match form.expr {
        SExpr::Integer(n) => Ok(Expr::Int(*n)),
        SExpr::Keyword(k) => Err(form.err(FormErrorKind::UnexpectedKeyword(k.clone()))),
        SExpr::Symbol(s) => match s.as_str() {
            "T" => Ok(Expr::Bool(true)),
            "NIL" => Ok(Expr::Bool(false)),
            _ if scope.contains(s) => Ok(Expr::Var(s.clone())),
            _ => Err(form.err(FormErrorKind::UnboundVariable(s.clone()))),
        },
        SExpr::List(list) if list.is_empty() => Err(form.shape("expression", "empty application")),
        SExpr::List(_) => {
            let items = form.items().unwrap_or_default();
            let args = &items[1..];
            match items[0].expr {
                SExpr::Symbol(head) => match head.as_str() {
                    "CASE-OF" => case_of(form, args, scope, tyvars),
                    "EQUAL" => {
                        let [l, r] = args else {
                            return Err(form.shape("equal", "expected exactly two operands"));
                        };
                        Ok(Expr::Equal(
                            Box::new(expr(*l, scope, tyvars)?),
                            Box::new(expr(*r, scope, tyvars)?),
                        ))
                    }
                    "IF" => {
                        let [c, t, e] = args else {
                            return Err(form.shape("if", "expected condition, then and else"));
                        };
                        Ok(Expr::If(
                            Box::new(expr(*c, scope, tyvars)?),
                            Box::new(expr(*t, scope, tyvars)?),
                            Box::new(expr(*e, scope, tyvars)?),
                        ))
                    }
                    _ => Ok(Expr::Call {
                        head: InstRef::bare(head.as_str()),
                        args: exprs(args, scope, tyvars)?,
                    }),
                },
                SExpr::List(_) => {
                    let head_items = items[0].items().unwrap_or_default();
                    if head_items.first().and_then(|f| f.expr.as_keyword()) != Some("INST") {
                        return Err(items[0].shape("call", "operator must be a symbol or (:inst F type...)"));
                    }
                    Ok(Expr::Call {
                        head: inst_ref(items[0], &head_items, tyvars)?,
                        args: exprs(args, scope, tyvars)?,
                    })
                }
                _ => Err(items[0].shape("call", "operator must be a symbol or (:inst F type...)")),
            }
        }
    }
}

fn exprs(forms: &[Form<'_>], scope: &mut Vec<String>, tyvars: &[String]) -> Result<Vec<Expr>, ParseError> {
    forms.iter().map(|&f| expr(f, scope, tyvars)).collect()
}

fn case_of(
    form: Form<'_>,
    args: &[Form<'_>],
    scope: &mut Vec<String>,
    tyvars: &[String],
) -> Result<Expr, ParseError> {
    let [scrutinee, branch_forms @ ..] = args else {
        return Err(form.shape("case-of", "expected a scrutinee"));
    };
    if branch_forms.is_empty() {
        return Err(form.shape("case-of", "expected at least one branch"));
    }
    let scrutinee = expr(*scrutinee, scope, tyvars)?;
    let mut branches = Vec::new();
    for b in branch_forms {
        let parts = b
            .items()
            .filter(|p| p.len() == 2)
            .ok_or_else(|| b.shape("case-of branch", "expected (pattern body)"))?;
        let pat = parts[0]
            .items()
            .filter(|p| !p.is_empty())
            .ok_or_else(|| parts[0].shape("pattern", "expected (Constructor binder...)"))?;
        let ctor = match pat[0].expr {
            SExpr::Symbol(s) => InstRef::bare(s.as_str()),
            SExpr::List(_) => {
                let head_items = pat[0].items().unwrap_or_default();
                if head_items.first().and_then(|f| f.expr.as_keyword()) != Some("INST") {
                    return Err(pat[0].err(FormErrorKind::NestedPattern));
                }
                inst_ref(pat[0], &head_items, tyvars)?
            }
            _ => return Err(pat[0].shape("pattern", "constructor must be a symbol or (:inst C type...)")),
        };
        let mut binders: Vec<String> = Vec::new();
        for binder in &pat[1..] {
            let name = match binder.expr {
                SExpr::Symbol(s) if !matches!(s.as_str(), "T" | "NIL") => s,
                SExpr::List(_) => return Err(binder.err(FormErrorKind::NestedPattern)),
                _ => return Err(binder.shape("pattern", "binders must be symbols")),
            };
            if binders.contains(name) {
                return Err(binder.err(FormErrorKind::DuplicateBinder(name.clone())));
            }
            binders.push(name.clone());
        }
        let depth = scope.len();
        scope.extend(binders.iter().cloned());
        let body = expr(parts[1], scope, tyvars);
        scope.truncate(depth);
        branches.push(Branch {
            ctor,
            binders,
            body: body?,
        });
    }
    Ok(Expr::CaseOf {
        scrutinee: Box::new(scrutinee),
        branches,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sexpr::read_forms;

    fn one(text: &str) -> SExpr {
        read_forms(text).unwrap().remove(0)
    }

    fn vars(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn concrete_coproduct() {
        let d = parse_toplevel(&one("(defcoproduct SeqInt (SeqNil) (SeqCons Int SeqInt))")).unwrap();
        let Declaration::Coproduct(c) = d else { panic!() };
        assert_eq!(c.name, "SEQINT");
        assert!(c.type_vars.is_empty());
        assert_eq!(c.cases.len(), 2);
        assert_eq!(
            c.cases[1].field_types,
            vec![TypeExpr::Base(BaseType::Int), TypeExpr::inst("SEQINT", vec![])]
        );
    }

    #[test]
    fn polymorphic_coproduct_both_spellings() {
        let a = parse_toplevel(&one("(defcoproduct Seq :type-vars (a) (SeqNil) (SeqCons a (:inst Seq a)))")).unwrap();
        let b = parse_toplevel(&one("(defcoproduct Seq :type-vars (a) (SeqNil) (SeqCons a (Seq a)))")).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn irregular_self_reference_rejected() {
        let err = parse_toplevel(&one("(defcoproduct Bad :type-vars (a b) (Mk (:inst Bad b a)))")).unwrap_err();
        assert!(matches!(err.kind(), Some(FormErrorKind::IrregularRecursion { .. })));
        let err = parse_toplevel(&one("(defcoproduct Bad :type-vars (a) (Mk (:inst Bad (:inst Bad a))))")).unwrap_err();
        assert!(matches!(err.kind(), Some(FormErrorKind::IrregularRecursion { .. })));
    }

    #[test]
    fn directive() {
        let d = parse_toplevel(&one("(Seq-instantiate int)")).unwrap();
        assert_eq!(
            d,
            Declaration::Instantiate(InstantiateDirective {
                target: "SEQ".into(),
                args: vec![TypeExpr::Base(BaseType::Int)],
            })
        );
        let d = parse_toplevel(&one("(SeqAppend_Associative-instantiate (:inst Seq bool))")).unwrap();
        let Declaration::Instantiate(d) = d else { panic!() };
        assert_eq!(d.target, "SEQAPPEND_ASSOCIATIVE");
        assert_eq!(d.args, vec![TypeExpr::inst("SEQ", vec![TypeExpr::Base(BaseType::Bool)])]);
    }

    #[test]
    fn zero_case_coproduct_rejected() {
        let err = parse_toplevel(&one("(defcoproduct T)")).unwrap_err();
        assert!(matches!(err.kind(), Some(FormErrorKind::EmptyCoproduct(_))));
    }

    #[test]
    fn duplicate_constructor_rejected() {
        let err = parse_toplevel(&one("(defcoproduct X (A) (A Int))")).unwrap_err();
        assert_eq!(err.kind(), Some(&FormErrorKind::DuplicateConstructor("A".into())));
    }

    #[test]
    fn unknown_head_rejected() {
        let err = parse_toplevel(&one("(defun f (x) x)")).unwrap_err();
        assert!(matches!(err.kind(), Some(FormErrorKind::UnsupportedForm(_))));
        assert!(parse_toplevel(&one("(-instantiate int)")).is_err());
    }

    #[test]
    fn type_exprs() {
        let tv = vars(&["A"]);
        assert_eq!(parse_type_expr(&one("a"), &tv).unwrap(), TypeExpr::Var("A".into()));
        assert_eq!(
            parse_type_expr(&one("(:inst Seq a)"), &tv).unwrap(),
            TypeExpr::inst("SEQ", vec![TypeExpr::Var("A".into())])
        );
        assert_eq!(parse_type_expr(&one("INT"), &[]).unwrap(), TypeExpr::Base(BaseType::Int));
        assert!(matches!(
            parse_type_expr(&one("(:foo Seq a)"), &tv).unwrap_err().kind(),
            Some(FormErrorKind::UnexpectedKeyword(_))
        ));
        assert_eq!(
            parse_type_expr(&one("()"), &tv).unwrap_err().kind(),
            Some(&FormErrorKind::EmptyType)
        );
    }

    #[test]
    fn case_of_expression() {
        let e = parse_expr(
            &one("(case-of x (((:inst SeqNil a)) y) (((:inst SeqCons a) hd tl) ((:inst SeqCons a) hd ((:inst SeqAppend a) tl y))))"),
            &vars(&["X", "Y"]),
            &vars(&["A"]),
        )
        .unwrap();
        let Expr::CaseOf { branches, .. } = e else { panic!() };
        assert_eq!(branches.len(), 2);
        assert!(branches[0].binders.is_empty());
        assert_eq!(branches[1].binders, vars(&["HD", "TL"]));
        assert_eq!(branches[1].ctor.target, "SEQCONS");
    }

    #[test]
    fn var_ref_and_scope_errors() {
        assert_eq!(parse_expr(&one("x"), &vars(&["X"]), &[]).unwrap(), Expr::Var("X".into()));
        assert_eq!(
            parse_expr(&one("z"), &vars(&["X"]), &[]).unwrap_err().kind(),
            Some(&FormErrorKind::UnboundVariable("Z".into()))
        );
        // Binders do not leak out of their branch.
        let err = parse_expr(
            &one("(equal (case-of x ((SeqCons hd tl) hd)) hd)"),
            &vars(&["X"]),
            &[],
        )
        .unwrap_err();
        assert_eq!(err.kind(), Some(&FormErrorKind::UnboundVariable("HD".into())));
    }

    #[test]
    fn duplicate_binder_rejected() {
        let err = parse_expr(
            &one("(case-of x (((:inst SeqCons a) hd hd) y))"),
            &vars(&["X", "Y"]),
            &vars(&["A"]),
        )
        .unwrap_err();
        assert_eq!(err.kind(), Some(&FormErrorKind::DuplicateBinder("HD".into())));
    }

    #[test]
    fn nested_pattern_rejected() {
        let err = parse_expr(
            &one("(case-of x ((SeqCons hd (SeqCons a b)) y))"),
            &vars(&["X", "Y"]),
            &[],
        )
        .unwrap_err();
        assert_eq!(err.kind(), Some(&FormErrorKind::NestedPattern));
    }

    #[test]
    fn theorem_with_hints() {
        let d = parse_toplevel(&one(
            "(defthm-typed SeqRev_of_SeqRev :type-vars (a) ((x (:inst Seq a))) \
             (equal ((:inst SeqRev a) ((:inst SeqRev a) x)) x) \
             :hints ((\"Goal\" :in-theory (enable SeqAppend-a SeqRev-a))))",
        ))
        .unwrap();
        let Declaration::Theorem(t) = d else { panic!() };
        assert_eq!(t.name, "SEQREV_OF_SEQREV");
        assert_eq!(t.hints.len(), 1);
    }

    #[test]
    fn undeclared_type_variable_in_signature_is_a_concrete_name() {
        // A bare symbol that is not declared is a zero-arity concrete type.
        let d = parse_toplevel(&one("(defun-typed F ((x b)) b x)")).unwrap();
        let Declaration::Function(f) = d else { panic!() };
        assert_eq!(f.params[0].1, TypeExpr::inst("B", vec![]));
    }

    #[test]
    fn errors_carry_subform_positions() {
        let err = parse_program("(defun-typed F ((x Int))\n  Int\n  (equal x zz))").unwrap_err();
        assert_eq!(err.pos(), Pos { line: 3, col: 12 });
        assert!(err.to_string().contains("ZZ"));
    }
}
