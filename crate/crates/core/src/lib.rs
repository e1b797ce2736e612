//! Reverse-mode automatic differentiation for a small strict functional
//! language.
//!
//! The crate contains the language front end ([`lang`]), a generic
//! interpreter ([`eval`]), forward-mode and finite-difference oracles
//! ([`oracle`]), and a ladder of reverse-mode engines ([`engine`]) that share
//! the interpreter and differ only in how backpropagators are represented.

pub mod corpus;
pub mod engine;
pub mod eval;
pub mod gen;
pub mod lang;
pub mod ops;
pub mod oracle;
pub mod sched;
pub mod value;

pub use engine::{grad, Engine, EngineError, GradResult, Stats};
pub use eval::{evaluate, run, EvalError};
pub use lang::{load, parse, pretty, typecheck, Expr, LoadError, Program, Ty};
pub use ops::OpTag;
pub use sched::{with_big_stack, Scheduler, Sequential, ThreadPool};
pub use value::{parse_value, Value};
