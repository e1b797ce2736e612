//! Pretty-printer producing text that parses back to the same AST.

use std::fmt::{self, Write};

use super::ast::{Expr, ExprKind};
use crate::ops::OpTag;

const EXPR: u8 = 0;
const CONS: u8 = 1;
const ADD: u8 = 2;
const MUL: u8 = 3;
const UNARY: u8 = 4;
const APP: u8 = 5;
const ATOM: u8 = 6;

pub fn pretty(e: &Expr) -> String {
    let mut s = String::new();
    write_expr(&mut s, e, EXPR).expect("writing to a String cannot fail");
    s
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&pretty(self))
    }
}

fn level(e: &Expr) -> u8 {
    match &e.kind {
        ExprKind::Lam(..) | ExprKind::Let(..) | ExprKind::LetRec { .. } => EXPR,
        ExprKind::Cons(..) => CONS,
        ExprKind::Prim(OpTag::Add | OpTag::Sub, _) => ADD,
        ExprKind::Prim(OpTag::Mul | OpTag::Div, _) => MUL,
        ExprKind::Prim(OpTag::Neg, _) => UNARY,
        ExprKind::Real(r) if r.is_sign_negative() => UNARY,
        ExprKind::Int(n) if *n < 0 => UNARY,
        ExprKind::App(..) => APP,
        ExprKind::Inl(..) | ExprKind::Inr(..) => APP,
        _ => ATOM,
    }
}

pub(crate) fn write_real(out: &mut impl Write, r: f64) -> fmt::Result {
    write!(out, "{r:?}")
}

fn write_expr(out: &mut String, e: &Expr, min: u8) -> fmt::Result {
    let lvl = level(e);
    if lvl < min {
        out.push('(');
        write_expr(out, e, EXPR)?;
        out.push(')');
        return Ok(());
    }
    match &e.kind {
        ExprKind::Var(x) => out.push_str(x),
        ExprKind::Real(r) => write_real(out, *r)?,
        ExprKind::Int(n) => write!(out, "{n}i")?,
        ExprKind::Unit => out.push_str("()"),
        ExprKind::Pair(a, b) => {
            out.push('(');
            write_expr(out, a, EXPR)?;
            out.push_str(", ");
            write_expr(out, b, EXPR)?;
            out.push(')');
        }
        ExprKind::Fst(a) => call(out, "fst", a)?,
        ExprKind::Snd(a) => call(out, "snd", a)?,
        ExprKind::Sign(a) => call(out, "sign", a)?,
        ExprKind::App(f, a) => {
            write_expr(out, f, APP)?;
            out.push(' ');
            write_expr(out, a, ATOM)?;
        }
        ExprKind::Lam(x, t, body) => {
            write!(out, "\\({x}: {t}). ")?;
            write_expr(out, body, EXPR)?;
        }
        ExprKind::Let(x, t, bound, body) => {
            match t {
                Some(t) => write!(out, "let {x}: {t} = ")?,
                None => write!(out, "let {x} = ")?,
            }
            write_expr(out, bound, EXPR)?;
            out.push_str(" in ");
            write_expr(out, body, EXPR)?;
        }
        ExprKind::LetRec { name, param, param_ty, ret_ty, body, rest } => {
            write!(out, "letrec {name} ({param}: {param_ty}): {ret_ty} = ")?;
            write_expr(out, body, EXPR)?;
            out.push_str(" in ");
            write_expr(out, rest, EXPR)?;
        }
        ExprKind::Prim(op, args) => match op {
            OpTag::Add | OpTag::Sub | OpTag::Mul | OpTag::Div => {
                let (l, r) = if lvl == ADD { (ADD, MUL) } else { (MUL, UNARY) };
                write_expr(out, &args[0], l)?;
                write!(out, " {} ", op.symbol().unwrap_or("?"))?;
                write_expr(out, &args[1], r)?;
            }
            OpTag::Neg => {
                out.push('-');
                // `-2.0` would read back as a literal, so keep literal operands wrapped.
                if matches!(args[0].kind, ExprKind::Real(_) | ExprKind::Int(_)) {
                    out.push('(');
                    write_expr(out, &args[0], EXPR)?;
                    out.push(')');
                } else {
                    write_expr(out, &args[0], UNARY)?;
                }
            }
            _ => call(out, op.name(), &args[0])?,
        },
        ExprKind::Inl(a, t) | ExprKind::Inr(a, t) => {
            let tag = if matches!(e.kind, ExprKind::Inl(..)) { "inl" } else { "inr" };
            write!(out, "{tag}@{} ", t.atomic())?;
            write_expr(out, a, ATOM)?;
        }
        ExprKind::Case(s, x, l, y, r) => {
            out.push_str("case ");
            write_expr(out, s, EXPR)?;
            write!(out, " {{ inl {x} -> ")?;
            write_expr(out, l, EXPR)?;
            write!(out, "; inr {y} -> ")?;
            write_expr(out, r, EXPR)?;
            out.push_str(" }");
        }
        ExprKind::Nil(t) => write!(out, "[]@{}", t.atomic())?,
        ExprKind::Cons(h, t) => {
            write_expr(out, h, ADD)?;
            out.push_str(" :: ");
            write_expr(out, t, CONS)?;
        }
        ExprKind::CaseList(s, nil, h, t, cons) => {
            out.push_str("caselist ");
            write_expr(out, s, EXPR)?;
            out.push_str(" { [] -> ");
            write_expr(out, nil, EXPR)?;
            write!(out, "; {h} :: {t} -> ")?;
            write_expr(out, cons, EXPR)?;
            out.push_str(" }");
        }
        ExprKind::Par(a, b) => {
            out.push_str("par(");
            write_expr(out, a, EXPR)?;
            out.push_str(", ");
            write_expr(out, b, EXPR)?;
            out.push(')');
        }
    }
    Ok(())
}

fn call(out: &mut String, name: &str, arg: &Expr) -> fmt::Result {
    write!(out, "{name}(")?;
    write_expr(out, arg, EXPR)?;
    out.push(')');
    Ok(())
}

#[cfg(test)]
mod tests {
    use crate::lang::parse;

    #[test]
    fn reprints_sum_product() {
        let src = "\\(p: (R, R)). let z = fst(p) + snd(p) in fst(p) * z";
        let e = parse(src).unwrap();
        assert_eq!(super::pretty(&e), src);
    }

    #[test]
    fn tricky_forms_roundtrip() {
        for src in [
            "a - (b - c)",
            "a / (b * c)",
            "-(2.0)",
            "-(-2.0)",
            "f (-2.0) x",
            "- -x",
            "(\\(x: R). x) 1.0",
            "(a :: []@R) :: []@[R]",
            "inl@(R + ()) (f x)",
            "x + (let y = 1.0 in y)",
            "case c { inl a -> a; inr b -> b } 1.0",
            "-3i",
        ] {
            let e = parse(src).unwrap();
            let again = parse(&super::pretty(&e)).unwrap();
            assert_eq!(e, again, "{src} printed as {}", super::pretty(&e));
        }
    }
}
