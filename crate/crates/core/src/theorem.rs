//! Typed theorems: generic forms over opaque witness types, and concrete
//! instances justified by a substitution map from witness-level names to
//! their concrete counterparts.

use crate::ast::{TheoremTemplate, TypeExpr};
use crate::ir::{CoreItem, GenericTheorem, SubstitutionMap, TheoremInstance};
use crate::mono::{mangle, scan_insts, type_name, Expander, InstKind, Instantiation, MonoError, Origin, Subst};
use crate::typecheck::check_theorem_body;

fn mentions_witness(ty: &TypeExpr) -> bool {
    match ty {
        TypeExpr::Witness(_) => true,
        TypeExpr::Inst { args, .. } => args.iter().any(mentions_witness),
        _ => false,
    }
}

fn concretize(ty: &TypeExpr, binding: &[(String, TypeExpr)]) -> TypeExpr {
    match ty {
        TypeExpr::Witness(w) => binding
            .iter()
            .find(|(name, _)| name == w)
            .map(|(_, t)| t.clone())
            .unwrap_or_else(|| ty.clone()),
        TypeExpr::Inst { head, args } => TypeExpr::Inst {
            head: head.clone(),
            args: args.iter().map(|a| concretize(a, binding)).collect(),
        },
        _ => ty.clone(),
    }
}

impl Expander {
    /// Builds the generic form of `t`: each type variable becomes a witness
    /// type of the same name and everything the body needs is instantiated
    /// at those witnesses.
    pub fn genericize_theorem(&mut self, t: &TheoremTemplate) -> Result<GenericTheorem, MonoError> {
        self.genericize(t)
    }

    pub(crate) fn genericize(&mut self, t: &TheoremTemplate) -> Result<GenericTheorem, MonoError> {
        let witnesses = t.type_vars.clone();
        for w in &witnesses {
            self.registry.claim(w, Origin::Witness(w.clone()))?;
            self.registry
                .claim(&crate::ir::recognizer(w), Origin::Recognizer(w.clone()))?;
            self.env.add_witness(w);
        }
        let wargs: Vec<TypeExpr> = witnesses.iter().cloned().map(TypeExpr::Witness).collect();
        let subst = Subst::new(&t.name, &t.type_vars, &wargs)?;
        let name = mangle(&t.name, &wargs)?;
        self.registry.claim(&name, Origin::GenericTheorem(t.name.clone()))?;

        let mut core = Vec::new();
        let types: Vec<&TypeExpr> = t.free_vars.iter().map(|(_, ty)| ty).collect();
        let deps = scan_insts(&types, Some(&t.body), &subst)?;
        let direct = self.inst_deps(&deps, "", &mut core)?;
        let vars = self.typed_vars(&t.free_vars, &subst, &mut core)?;
        let body = self.lower(&t.body, &subst)?;

        let report = check_theorem_body(&name, &vars, &body, &self.env);
        if !report.all_satisfied() {
            return Err(MonoError::TypedTheorem {
                theorem: t.name.clone(),
                report: report.render_text(),
            });
        }
        Ok(GenericTheorem {
            name,
            template: t.name.clone(),
            witnesses,
            witness_core: core,
            vars,
            body,
            hints: t.hints.clone(),
            dependencies: self.registry.dependency_closure(&direct),
        })
    }

    /// Pairs every witness-level name the generic theorem depends on with
    /// its counterpart at `args`: predicates, type recognizers, constructor
    /// recognizers, constructors, accessors, then functions.
    pub fn build_substitution_map(
        &self,
        generic: &GenericTheorem,
        args: &[TypeExpr],
    ) -> Result<SubstitutionMap, MonoError> {
        let binding: Vec<(String, TypeExpr)> = generic.witnesses.iter().cloned().zip(args.iter().cloned()).collect();
        let hole = |name: String| MonoError::IncompleteMap {
            theorem: generic.name.clone(),
            hole: name,
        };
        let mut predicates = Vec::new();
        for (w, ty) in &binding {
            predicates.push((crate::ir::recognizer(w), crate::ir::recognizer(&type_name(ty)?)));
        }
        let (mut types, mut case_recs, mut ctors, mut accessors, mut funs) =
            (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for dep in &generic.dependencies {
            let inst = self
                .registry
                .instantiation(dep)
                .ok_or_else(|| MonoError::Internal(format!("no record of instantiation {dep}")))?;
            if !inst.args.iter().any(mentions_witness) {
                continue;
            }
            let cargs: Vec<TypeExpr> = inst.args.iter().map(|a| concretize(a, &binding)).collect();
            let concrete = mangle(&inst.template, &cargs)?;
            if !self.registry.is_emitted(&concrete) {
                return Err(hole(concrete));
            }
            match inst.kind {
                InstKind::Type => {
                    let (abs, con) = match (self.registry.sum(dep), self.registry.sum(&concrete)) {
                        (Some(a), Some(c)) if a.cases.len() == c.cases.len() => (a, c),
                        _ => return Err(hole(concrete)),
                    };
                    types.push((abs.recognizer(), con.recognizer()));
                    for (ac, cc) in abs.cases.iter().zip(&con.cases).rev() {
                        case_recs.push((ac.recognizer(), cc.recognizer()));
                        ctors.push((ac.ctor.clone(), cc.ctor.clone()));
                        for (af, cf) in ac.fields.iter().zip(&cc.fields).rev() {
                            accessors.push((af.accessor.clone(), cf.accessor.clone()));
                        }
                    }
                }
                InstKind::Function => funs.push((dep.clone(), concrete)),
                InstKind::Theorem => {}
            }
        }
        let mut pairs = predicates;
        for group in [types, case_recs, ctors, accessors, funs] {
            pairs.extend(group);
        }
        Ok(SubstitutionMap { pairs })
    }

    /// Instantiates theorem `name` at `args`, emitting its dependencies
    /// first. Returns the instance's name.
    pub(crate) fn inst_theorem(
        &mut self,
        name: &str,
        args: &[TypeExpr],
        out: &mut Vec<CoreItem>,
    ) -> Result<String, MonoError> {
        let (tpl, generic) = self
            .theorems
            .get(name)
            .cloned()
            .ok_or_else(|| MonoError::UnknownTemplate(name.to_string()))?;
        let subst = Subst::new(name, &tpl.type_vars, args)?;
        for a in args {
            self.ensure_type(a, out)?;
        }
        let inst_name = mangle(name, args)?;
        self.registry.claim(
            &inst_name,
            Origin::Theorem {
                template: name.to_string(),
                args: args.to_vec(),
            },
        )?;
        if self.registry.is_emitted(&inst_name) {
            return Ok(inst_name);
        }
        let types: Vec<&TypeExpr> = tpl.free_vars.iter().map(|(_, ty)| ty).collect();
        let deps = scan_insts(&types, Some(&tpl.body), &subst)?;
        let direct = self.inst_deps(&deps, "", out)?;
        let vars = self.typed_vars(&tpl.free_vars, &subst, out)?;
        let body = self.lower(&tpl.body, &subst)?;

        let map = self.build_substitution_map(&generic, args)?;
        let mapped_vars: Vec<(String, String)> = generic
            .vars
            .iter()
            .map(|(v, ty)| (v.clone(), map.apply_type(ty)))
            .collect();
        if map.apply(&generic.body) != body || mapped_vars != vars {
            return Err(MonoError::Internal(format!(
                "mapping the generic form of {name} does not reproduce instance {inst_name}"
            )));
        }
        let report = check_theorem_body(&inst_name, &vars, &body, &self.env);
        if !report.all_satisfied() {
            return Err(MonoError::TypedTheorem {
                theorem: inst_name,
                report: report.render_text(),
            });
        }
        self.registry.record_instantiation(
            &inst_name,
            Instantiation {
                kind: InstKind::Theorem,
                template: name.to_string(),
                args: args.to_vec(),
                deps: direct,
            },
        );
        self.emit(
            CoreItem::Theorem(TheoremInstance {
                name: inst_name.clone(),
                template: name.to_string(),
                vars,
                body,
                generic: generic.name.clone(),
                map,
            }),
            out,
        );
        Ok(inst_name)
    }

    /// Instantiates theorem `name` at `args` outside of a directive.
    pub fn instantiate_theorem(&mut self, name: &str, args: &[TypeExpr]) -> Result<Vec<CoreItem>, MonoError> {
        self.instantiate(name, args)
    }
}
