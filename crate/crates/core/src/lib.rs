//! Monomorphizing compiler for a small typed s-expression language with
//! polymorphic coproducts, plus a syntax-directed checker for the emitted
//! core and a bounded-exhaustive tester for theorem instances.
//!
//! ```
//! let core = monoforge::compile(
//!     "(defcoproduct Seq :type-vars (a) (SeqNil) (SeqCons a (:inst Seq a)))
//!      (Seq-instantiate int)",
//! )
//! .unwrap();
//! assert_eq!(
//!     core.render(),
//!     "(DEFSUM SEQ-INT (SEQNIL-INT) (SEQCONS-INT (INT-P ARG-1) (SEQ-INT-P ARG-2)))\n"
//! );
//! ```

pub mod ast;
pub mod eval;
pub mod ir;
pub mod mono;
pub mod sexpr;
pub mod theorem;
pub mod typecheck;

use thiserror::Error;

pub use ast::{parse_program, Declaration, ParseError, TypeExpr};
pub use eval::{test_program, test_theorem, EvalError, Outcome, TestConfig, TestReport, Value};
pub use ir::{CoreItem, CoreProgram};
pub use mono::{expand_program, mangle, ExpandError, Expander, MonoError, Registry};
pub use sexpr::{read_forms, SExpr};
pub use typecheck::{check_program, ObligationReport};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Expand(#[from] ExpandError),
}

/// Parses and expands a whole source text.
pub fn compile(text: &str) -> Result<CoreProgram, Error> {
    let decls = parse_program(text)?;
    Ok(expand_program(&decls)?)
}
