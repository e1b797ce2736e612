//! Recursive-descent parser for `.dg` source text.

use super::ast::{Expr, ExprKind, Pos};
use super::lexer::{tokenize, Tok, Token};
use super::ty::Ty;
use super::ParseError;
use crate::ops::OpTag;

const KEYWORDS: &[&str] = &[
    "let", "letrec", "in", "case", "caselist", "inl", "inr", "fst", "snd", "sign", "par", "sin", "cos", "exp",
    "log", "sqrt",
];

pub fn parse(src: &str) -> Result<Expr, ParseError> {
    let mut p = Parser::new(src)?;
    let e = p.expr()?;
    p.expect(Tok::Eof)?;
    Ok(e)
}

pub fn parse_type(src: &str) -> Result<Ty, ParseError> {
    let mut p = Parser::new(src)?;
    let t = p.ty()?;
    p.expect(Tok::Eof)?;
    Ok(t)
}

pub(crate) struct Parser {
    toks: Vec<Token>,
    at: usize,
}

impl Parser {
    pub(crate) fn new(src: &str) -> Result<Self, ParseError> {
        Ok(Parser { toks: tokenize(src)?, at: 0 })
    }

    pub(crate) fn peek(&self) -> &Tok {
        &self.toks[self.at].tok
    }

    pub(crate) fn pos(&self) -> Pos {
        self.toks[self.at].pos
    }

    pub(crate) fn bump(&mut self) -> Tok {
        let t = self.toks[self.at].tok.clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    pub(crate) fn error<T>(&self, msg: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError::new(self.pos(), msg))
    }

    pub(crate) fn expect(&mut self, t: Tok) -> Result<(), ParseError> {
        if *self.peek() == t {
            self.bump();
            Ok(())
        } else {
            let found = self.peek().describe();
            self.error(format!("expected {}, found {found}", t.describe()))
        }
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == t {
            self.bump();
            true
        } else {
            false
        }
    }

    pub(crate) fn at_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), ParseError> {
        if self.at_keyword(kw) {
            self.bump();
            Ok(())
        } else {
            let found = self.peek().describe();
            self.error(format!("expected `{kw}`, found {found}"))
        }
    }

    fn name(&mut self) -> Result<String, ParseError> {
        match self.peek().clone() {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                self.bump();
                Ok(s)
            }
            other => self.error(format!("expected a name, found {}", other.describe())),
        }
    }

    // ---- types ----

    pub(crate) fn ty(&mut self) -> Result<Ty, ParseError> {
        let a = self.sum_ty()?;
        if self.eat(&Tok::Arrow) {
            Ok(Ty::fun(a, self.ty()?))
        } else {
            Ok(a)
        }
    }

    fn sum_ty(&mut self) -> Result<Ty, ParseError> {
        let a = self.atom_ty()?;
        if self.eat(&Tok::Plus) {
            Ok(Ty::sum(a, self.sum_ty()?))
        } else {
            Ok(a)
        }
    }

    pub(crate) fn atom_ty(&mut self) -> Result<Ty, ParseError> {
        match self.bump() {
            Tok::Ident(s) => match s.as_str() {
                "R" => Ok(Ty::Real),
                "Z" | "Int" => Ok(Ty::Int),
                "Bool" => Ok(Ty::bool()),
                _ => self.error(format!("unknown type `{s}`")),
            },
            Tok::LParen => {
                if self.eat(&Tok::RParen) {
                    return Ok(Ty::Unit);
                }
                let a = self.ty()?;
                if self.eat(&Tok::Comma) {
                    let b = self.ty()?;
                    self.expect(Tok::RParen)?;
                    Ok(Ty::prod(a, b))
                } else {
                    self.expect(Tok::RParen)?;
                    Ok(a)
                }
            }
            Tok::LBracket => {
                let a = self.ty()?;
                self.expect(Tok::RBracket)?;
                Ok(Ty::list(a))
            }
            other => self.error(format!("expected a type, found {}", other.describe())),
        }
    }

    // ---- expressions ----

    pub(crate) fn expr(&mut self) -> Result<Expr, ParseError> {
        let pos = self.pos();
        let kind = match self.peek() {
            Tok::Backslash => {
                self.bump();
                self.expect(Tok::LParen)?;
                let x = self.name()?;
                self.expect(Tok::Colon)?;
                let t = self.ty()?;
                self.expect(Tok::RParen)?;
                self.expect(Tok::Dot)?;
                let body = self.expr()?;
                ExprKind::Lam(x, t, Box::new(body))
            }
            _ if self.at_keyword("let") => {
                self.bump();
                let x = self.name()?;
                let t = if self.eat(&Tok::Colon) { Some(self.ty()?) } else { None };
                self.expect(Tok::Eq)?;
                let bound = self.expr()?;
                self.expect_keyword("in")?;
                let body = self.expr()?;
                ExprKind::Let(x, t, Box::new(bound), Box::new(body))
            }
            _ if self.at_keyword("letrec") => {
                self.bump();
                let name = self.name()?;
                self.expect(Tok::LParen)?;
                let param = self.name()?;
                self.expect(Tok::Colon)?;
                let param_ty = self.ty()?;
                self.expect(Tok::RParen)?;
                self.expect(Tok::Colon)?;
                let ret_ty = self.ty()?;
                self.expect(Tok::Eq)?;
                let body = self.expr()?;
                self.expect_keyword("in")?;
                let rest = self.expr()?;
                ExprKind::LetRec { name, param, param_ty, ret_ty, body: Box::new(body), rest: Box::new(rest) }
            }
            _ => return self.cons_expr(),
        };
        Ok(Expr { kind, pos })
    }

    fn cons_expr(&mut self) -> Result<Expr, ParseError> {
        let head = self.add_expr()?;
        if *self.peek() == Tok::ColonColon {
            let pos = self.pos();
            self.bump();
            let tail = self.cons_expr()?;
            return Ok(Expr { kind: ExprKind::Cons(Box::new(head), Box::new(tail)), pos });
        }
        Ok(head)
    }

    fn add_expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.mul_expr()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => OpTag::Add,
                Tok::Minus => OpTag::Sub,
                _ => return Ok(lhs),
            };
            let pos = self.pos();
            self.bump();
            let rhs = self.mul_expr()?;
            lhs = Expr { kind: ExprKind::Prim(op, vec![lhs, rhs]), pos };
        }
    }

    fn mul_expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary_expr()?;
        loop {
            let op = match self.peek() {
                Tok::Star => OpTag::Mul,
                Tok::Slash => OpTag::Div,
                _ => return Ok(lhs),
            };
            let pos = self.pos();
            self.bump();
            let rhs = self.unary_expr()?;
            lhs = Expr { kind: ExprKind::Prim(op, vec![lhs, rhs]), pos };
        }
    }

    fn unary_expr(&mut self) -> Result<Expr, ParseError> {
        if *self.peek() != Tok::Minus {
            return self.app_expr();
        }
        let pos = self.pos();
        self.bump();
        let kind = match self.peek().clone() {
            Tok::Real(r) => {
                self.bump();
                ExprKind::Real(-r)
            }
            Tok::Int(n) => {
                self.bump();
                ExprKind::Int(n.wrapping_neg())
            }
            _ => ExprKind::Prim(OpTag::Neg, vec![self.unary_expr()?]),
        };
        Ok(Expr { kind, pos })
    }

    fn app_expr(&mut self) -> Result<Expr, ParseError> {
        let mut f = self.atom()?;
        while self.starts_atom() {
            let pos = self.pos();
            let a = self.atom()?;
            f = Expr { kind: ExprKind::App(Box::new(f), Box::new(a)), pos };
        }
        Ok(f)
    }

    fn starts_atom(&self) -> bool {
        match self.peek() {
            Tok::Real(_) | Tok::Int(_) | Tok::LParen | Tok::LBracket => true,
            Tok::Ident(s) => !matches!(s.as_str(), "in" | "let" | "letrec"),
            _ => false,
        }
    }

    fn paren_arg(&mut self) -> Result<Expr, ParseError> {
        self.expect(Tok::LParen)?;
        let e = self.expr()?;
        self.expect(Tok::RParen)?;
        Ok(e)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let pos = self.pos();
        let kind = match self.peek().clone() {
            Tok::Real(r) => {
                self.bump();
                ExprKind::Real(r)
            }
            Tok::Int(n) => {
                self.bump();
                ExprKind::Int(n)
            }
            Tok::LParen => {
                self.bump();
                if self.eat(&Tok::RParen) {
                    ExprKind::Unit
                } else {
                    let a = self.expr()?;
                    if self.eat(&Tok::Comma) {
                        let b = self.expr()?;
                        self.expect(Tok::RParen)?;
                        ExprKind::Pair(Box::new(a), Box::new(b))
                    } else {
                        self.expect(Tok::RParen)?;
                        return Ok(a);
                    }
                }
            }
            Tok::LBracket => {
                self.bump();
                self.expect(Tok::RBracket)?;
                self.expect(Tok::At)?;
                ExprKind::Nil(self.atom_ty()?)
            }
            Tok::Ident(s) => match s.as_str() {
                "fst" | "snd" | "sign" => {
                    self.bump();
                    let e = Box::new(self.paren_arg()?);
                    match s.as_str() {
                        "fst" => ExprKind::Fst(e),
                        "snd" => ExprKind::Snd(e),
                        _ => ExprKind::Sign(e),
                    }
                }
                "par" => {
                    self.bump();
                    self.expect(Tok::LParen)?;
                    let a = self.expr()?;
                    self.expect(Tok::Comma)?;
                    let b = self.expr()?;
                    self.expect(Tok::RParen)?;
                    ExprKind::Par(Box::new(a), Box::new(b))
                }
                "inl" | "inr" => {
                    self.bump();
                    self.expect(Tok::At)?;
                    let t = self.atom_ty()?;
                    let e = Box::new(self.atom()?);
                    if s == "inl" {
                        ExprKind::Inl(e, t)
                    } else {
                        ExprKind::Inr(e, t)
                    }
                }
                "case" => {
                    self.bump();
                    let scrut = self.expr()?;
                    self.expect(Tok::LBrace)?;
                    self.expect_keyword("inl")?;
                    let x = self.name()?;
                    self.expect(Tok::Arrow)?;
                    let l = self.expr()?;
                    self.expect(Tok::Semi)?;
                    self.expect_keyword("inr")?;
                    let y = self.name()?;
                    self.expect(Tok::Arrow)?;
                    let r = self.expr()?;
                    self.eat(&Tok::Semi);
                    self.expect(Tok::RBrace)?;
                    ExprKind::Case(Box::new(scrut), x, Box::new(l), y, Box::new(r))
                }
                "caselist" => {
                    self.bump();
                    let scrut = self.expr()?;
                    self.expect(Tok::LBrace)?;
                    self.expect(Tok::LBracket)?;
                    self.expect(Tok::RBracket)?;
                    self.expect(Tok::Arrow)?;
                    let nil = self.expr()?;
                    self.expect(Tok::Semi)?;
                    let h = self.name()?;
                    self.expect(Tok::ColonColon)?;
                    let t = self.name()?;
                    self.expect(Tok::Arrow)?;
                    let cons = self.expr()?;
                    self.eat(&Tok::Semi);
                    self.expect(Tok::RBrace)?;
                    ExprKind::CaseList(Box::new(scrut), Box::new(nil), h, t, Box::new(cons))
                }
                _ => {
                    if let Some(op) = OpTag::from_function_name(&s) {
                        self.bump();
                        ExprKind::Prim(op, vec![self.paren_arg()?])
                    } else {
                        ExprKind::Var(self.name()?)
                    }
                }
            },
            other => return self.error(format!("expected an expression, found {}", other.describe())),
        };
        Ok(Expr { kind, pos })
    }
}
