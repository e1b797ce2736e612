use std::fmt;

use super::ty::Ty;
use crate::ops::OpTag;

/// Source position (1-based). Ignored by equality on expressions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Pos {
    pub line: u32,
    pub col: u32,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Clone, Debug)]
pub struct Expr {
    pub kind: ExprKind,
    pub pos: Pos,
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ExprKind {
    Var(String),
    Real(f64),
    Int(i64),
    Unit,
    Pair(Box<Expr>, Box<Expr>),
    Fst(Box<Expr>),
    Snd(Box<Expr>),
    App(Box<Expr>, Box<Expr>),
    Lam(String, Ty, Box<Expr>),
    Let(String, Option<Ty>, Box<Expr>, Box<Expr>),
    LetRec {
        name: String,
        param: String,
        param_ty: Ty,
        ret_ty: Ty,
        body: Box<Expr>,
        rest: Box<Expr>,
    },
    Prim(OpTag, Vec<Expr>),
    /// Injections carry the full sum type.
    Inl(Box<Expr>, Ty),
    Inr(Box<Expr>, Ty),
    Case(Box<Expr>, String, Box<Expr>, String, Box<Expr>),
    Sign(Box<Expr>),
    /// Carries the element type.
    Nil(Ty),
    Cons(Box<Expr>, Box<Expr>),
    CaseList(Box<Expr>, Box<Expr>, String, String, Box<Expr>),
    Par(Box<Expr>, Box<Expr>),
}

impl From<ExprKind> for Expr {
    fn from(kind: ExprKind) -> Self {
        Expr { kind, pos: Pos::default() }
    }
}

/// Terse constructors, mostly for tests and the program generator.
pub mod build {
    use super::*;

    fn b(e: Expr) -> Box<Expr> {
        Box::new(e)
    }

    pub fn var(x: &str) -> Expr {
        ExprKind::Var(x.to_string()).into()
    }
    pub fn real(r: f64) -> Expr {
        ExprKind::Real(r).into()
    }
    pub fn int(n: i64) -> Expr {
        ExprKind::Int(n).into()
    }
    pub fn unit() -> Expr {
        ExprKind::Unit.into()
    }
    pub fn pair(a: Expr, c: Expr) -> Expr {
        ExprKind::Pair(b(a), b(c)).into()
    }
    pub fn fst(e: Expr) -> Expr {
        ExprKind::Fst(b(e)).into()
    }
    pub fn snd(e: Expr) -> Expr {
        ExprKind::Snd(b(e)).into()
    }
    pub fn app(f: Expr, a: Expr) -> Expr {
        ExprKind::App(b(f), b(a)).into()
    }
    pub fn lam(x: &str, ty: Ty, body: Expr) -> Expr {
        ExprKind::Lam(x.to_string(), ty, b(body)).into()
    }
    pub fn let_(x: &str, ty: Option<Ty>, bound: Expr, body: Expr) -> Expr {
        ExprKind::Let(x.to_string(), ty, b(bound), b(body)).into()
    }
    pub fn letrec(name: &str, param: &str, param_ty: Ty, ret_ty: Ty, body: Expr, rest: Expr) -> Expr {
        ExprKind::LetRec {
            name: name.to_string(),
            param: param.to_string(),
            param_ty,
            ret_ty,
            body: b(body),
            rest: b(rest),
        }
        .into()
    }
    pub fn prim(op: OpTag, args: Vec<Expr>) -> Expr {
        ExprKind::Prim(op, args).into()
    }
    pub fn add(x: Expr, y: Expr) -> Expr {
        prim(OpTag::Add, vec![x, y])
    }
    pub fn mul(x: Expr, y: Expr) -> Expr {
        prim(OpTag::Mul, vec![x, y])
    }
    pub fn inl(e: Expr, ty: Ty) -> Expr {
        ExprKind::Inl(b(e), ty).into()
    }
    pub fn inr(e: Expr, ty: Ty) -> Expr {
        ExprKind::Inr(b(e), ty).into()
    }
    pub fn case(e: Expr, x: &str, l: Expr, y: &str, r: Expr) -> Expr {
        ExprKind::Case(b(e), x.to_string(), b(l), y.to_string(), b(r)).into()
    }
    pub fn sign(e: Expr) -> Expr {
        ExprKind::Sign(b(e)).into()
    }
    pub fn nil(elem: Ty) -> Expr {
        ExprKind::Nil(elem).into()
    }
    pub fn cons(h: Expr, t: Expr) -> Expr {
        ExprKind::Cons(b(h), b(t)).into()
    }
    pub fn caselist(e: Expr, nil: Expr, h: &str, t: &str, cons: Expr) -> Expr {
        ExprKind::CaseList(b(e), b(nil), h.to_string(), t.to_string(), b(cons)).into()
    }
    pub fn par(l: Expr, r: Expr) -> Expr {
        ExprKind::Par(b(l), b(r)).into()
    }
}
