//! The source language: syntax, parsing, printing and type checking.

pub mod ast;
mod lexer;
mod parser;
mod pretty;
pub mod ty;
mod typecheck;

use thiserror::Error;

pub use ast::{Expr, ExprKind, Pos};
pub(crate) use lexer::Tok;
pub(crate) use parser::Parser;
pub use parser::{parse, parse_type};
pub use pretty::pretty;
pub(crate) use pretty::write_real;
pub use ty::Ty;
pub use typecheck::{typecheck, Node, NodeId, NodeKind, Program};

use crate::ops::OpTag;

#[derive(Debug, Clone, Error, PartialEq)]
#[error("{pos}: {message}")]
pub struct ParseError {
    pub pos: Pos,
    pub message: String,
}

impl ParseError {
    pub fn new(pos: Pos, message: impl Into<String>) -> Self {
        ParseError { pos, message: message.into() }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum TypeError {
    #[error("{pos}: type mismatch in {context}: expected {expected}, found {found}")]
    Mismatch { pos: Pos, context: &'static str, expected: Ty, found: Ty },
    #[error("{pos}: expected {what}, found a value of type {found}")]
    Expected { pos: Pos, what: &'static str, found: Ty },
    #[error("{pos}: unbound variable `{name}`")]
    Unbound { pos: Pos, name: String },
    #[error("{pos}: `{op}` takes a different number of arguments than {given}")]
    Arity { pos: Pos, op: OpTag, given: usize },
    #[error("higher-order top-level type {ty}: program input and output must be first-order")]
    HigherOrderTopLevel { ty: Ty },
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum LoadError {
    #[error("parse error at {0}")]
    Parse(#[from] ParseError),
    #[error("type error: {0}")]
    Type(#[from] TypeError),
}

/// Parses and type checks in one step.
pub fn load(src: &str) -> Result<Program, LoadError> {
    Ok(typecheck(&parse(src)?)?)
}
