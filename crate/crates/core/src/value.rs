//! Runtime values, generic over the scalar representation.
//!
//! Every engine runs the same interpreter and only swaps the scalar type:
//! `f64` for plain evaluation, dual numbers for the forward oracle, and
//! (primal, ID, backpropagator) triples for the reverse engines. List spines
//! are handled with loops so that long lists never recurse.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::lang::{write_real, NodeId, ParseError, Parser, Pos, Tok, Ty};

pub enum Value<S> {
    Real(S),
    Int(i64),
    Unit,
    Pair(Arc<(Value<S>, Value<S>)>),
    Inl(Arc<Value<S>>),
    Inr(Arc<Value<S>>),
    Closure(Arc<Closure<S>>),
    Nil,
    Cons(Arc<ConsCell<S>>),
}

impl<S: Clone> Clone for Value<S> {
    fn clone(&self) -> Self {
        match self {
            Value::Real(s) => Value::Real(s.clone()),
            Value::Int(n) => Value::Int(*n),
            Value::Unit => Value::Unit,
            Value::Pair(p) => Value::Pair(p.clone()),
            Value::Inl(v) => Value::Inl(v.clone()),
            Value::Inr(v) => Value::Inr(v.clone()),
            Value::Closure(c) => Value::Closure(c.clone()),
            Value::Nil => Value::Nil,
            Value::Cons(c) => Value::Cons(c.clone()),
        }
    }
}

pub struct ConsCell<S> {
    pub head: Value<S>,
    pub tail: Value<S>,
}

impl<S: Clone> Clone for ConsCell<S> {
    fn clone(&self) -> Self {
        ConsCell { head: self.head.clone(), tail: self.tail.clone() }
    }
}

impl<S> Drop for ConsCell<S> {
    fn drop(&mut self) {
        let mut tail = std::mem::replace(&mut self.tail, Value::Unit);
        while let Value::Cons(cell) = tail {
            match Arc::try_unwrap(cell) {
                Ok(mut cell) => tail = std::mem::replace(&mut cell.tail, Value::Unit),
                Err(_) => break,
            }
        }
    }
}

/// A function value. Recursive closures (from `letrec`) rebind themselves
/// when applied instead of holding a reference cycle.
pub struct Closure<S> {
    pub env: Env<S>,
    pub body: NodeId,
    pub recursive: bool,
}

impl<S: Clone> Closure<S> {
    /// Environment for the body when this closure (held in `this`) is applied to `arg`.
    pub fn enter(this: &Arc<Closure<S>>, arg: Value<S>) -> Env<S> {
        if this.recursive {
            this.env.push(Value::Closure(this.clone())).push(arg)
        } else {
            this.env.push(arg)
        }
    }
}

/// Persistent environment, indexed by de Bruijn index.
pub struct Env<S>(Option<Arc<EnvNode<S>>>);

pub struct EnvNode<S> {
    value: Value<S>,
    next: Env<S>,
}

impl<S> Clone for Env<S> {
    fn clone(&self) -> Self {
        Env(self.0.clone())
    }
}

impl<S> Default for Env<S> {
    fn default() -> Self {
        Env(None)
    }
}

impl<S> Env<S> {
    pub fn empty() -> Self {
        Env(None)
    }

    pub fn push(&self, value: Value<S>) -> Env<S> {
        Env(Some(Arc::new(EnvNode { value, next: self.clone() })))
    }

    pub fn lookup(&self, index: u32) -> Option<&Value<S>> {
        let mut cur = self.0.as_deref()?;
        for _ in 0..index {
            cur = cur.next.0.as_deref()?;
        }
        Some(&cur.value)
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
#[error("value shape mismatch: {0}")]
pub struct ShapeError(pub String);

fn shape_err<T>(msg: &str) -> Result<T, ShapeError> {
    Err(ShapeError(msg.to_string()))
}

impl<S> Value<S> {
    pub fn pair(a: Value<S>, b: Value<S>) -> Self {
        Value::Pair(Arc::new((a, b)))
    }

    pub fn inl(v: Value<S>) -> Self {
        Value::Inl(Arc::new(v))
    }

    pub fn inr(v: Value<S>) -> Self {
        Value::Inr(Arc::new(v))
    }

    pub fn cons(head: Value<S>, tail: Value<S>) -> Self {
        Value::Cons(Arc::new(ConsCell { head, tail }))
    }

    pub fn list(items: impl IntoIterator<Item = Value<S>>) -> Self {
        let items: Vec<_> = items.into_iter().collect();
        items.into_iter().rev().fold(Value::Nil, |tail, head| Value::cons(head, tail))
    }

    pub fn bool(b: bool) -> Self {
        if b {
            Value::inr(Value::Unit)
        } else {
            Value::inl(Value::Unit)
        }
    }

    pub fn as_real(&self) -> Option<&S> {
        match self {
            Value::Real(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_pair(&self) -> Option<(&Value<S>, &Value<S>)> {
        match self {
            Value::Pair(p) => Some((&p.0, &p.1)),
            _ => None,
        }
    }

    /// Elements of a list value, or `None` if this is not a list.
    pub fn list_items(&self) -> Option<Vec<&Value<S>>> {
        let mut out = Vec::new();
        let mut cur = self;
        loop {
            match cur {
                Value::Nil => return Some(out),
                Value::Cons(c) => {
                    out.push(&c.head);
                    cur = &c.tail;
                }
                _ => return None,
            }
        }
    }

    /// Visits every scalar leaf left to right.
    pub fn for_each_scalar(&self, f: &mut impl FnMut(&S)) {
        match self {
            Value::Real(s) => f(s),
            Value::Pair(p) => {
                p.0.for_each_scalar(f);
                p.1.for_each_scalar(f);
            }
            Value::Inl(v) | Value::Inr(v) => v.for_each_scalar(f),
            Value::Cons(_) => {
                let mut cur = self;
                while let Value::Cons(c) = cur {
                    c.head.for_each_scalar(f);
                    cur = &c.tail;
                }
            }
            Value::Int(_) | Value::Unit | Value::Nil | Value::Closure(_) => {}
        }
    }

    pub fn scalar_count(&self) -> usize {
        let mut n = 0;
        self.for_each_scalar(&mut |_| n += 1);
        n
    }

    pub fn scalars(&self) -> Vec<&S> {
        let mut out = Vec::new();
        collect_refs(self, &mut out);
        out
    }

    /// Rebuilds the value with every scalar mapped through `f`, left to right.
    /// Fails on closures, which have no first-order structure.
    pub fn map_scalars<T>(&self, f: &mut impl FnMut(&S) -> T) -> Result<Value<T>, ShapeError> {
        Ok(match self {
            Value::Real(s) => Value::Real(f(s)),
            Value::Int(n) => Value::Int(*n),
            Value::Unit => Value::Unit,
            Value::Pair(p) => {
                let a = p.0.map_scalars(f)?;
                Value::pair(a, p.1.map_scalars(f)?)
            }
            Value::Inl(v) => Value::inl(v.map_scalars(f)?),
            Value::Inr(v) => Value::inr(v.map_scalars(f)?),
            Value::Closure(_) => return shape_err("cannot map over a closure"),
            Value::Nil | Value::Cons(_) => {
                let mut heads = Vec::new();
                let mut cur = self;
                while let Value::Cons(c) = cur {
                    heads.push(c.head.map_scalars(f)?);
                    cur = &c.tail;
                }
                Value::list(heads)
            }
        })
    }

    /// Walks two values of the same shape together, building a value shaped
    /// like `self`. Integers are taken from `self`; sum tags and list lengths
    /// must agree.
    pub fn zip_map<T, U>(
        &self,
        other: &Value<T>,
        f: &mut impl FnMut(&S, &T) -> U,
    ) -> Result<Value<U>, ShapeError> {
        Ok(match (self, other) {
            (Value::Real(a), Value::Real(b)) => Value::Real(f(a, b)),
            (Value::Int(n), Value::Int(_)) => Value::Int(*n),
            (Value::Unit, Value::Unit) => Value::Unit,
            (Value::Pair(p), Value::Pair(q)) => {
                let a = p.0.zip_map(&q.0, f)?;
                Value::pair(a, p.1.zip_map(&q.1, f)?)
            }
            (Value::Inl(a), Value::Inl(b)) => Value::inl(a.zip_map(b, f)?),
            (Value::Inr(a), Value::Inr(b)) => Value::inr(a.zip_map(b, f)?),
            (Value::Nil | Value::Cons(_), Value::Nil | Value::Cons(_)) => {
                let mut heads = Vec::new();
                let (mut x, mut y) = (self, other);
                loop {
                    match (x, y) {
                        (Value::Cons(c), Value::Cons(d)) => {
                            heads.push(c.head.zip_map(&d.head, f)?);
                            x = &c.tail;
                            y = &d.tail;
                        }
                        (Value::Nil, Value::Nil) => break,
                        _ => return shape_err("lists of different lengths"),
                    }
                }
                Value::list(heads)
            }
            (Value::Inl(_) | Value::Inr(_), Value::Inl(_) | Value::Inr(_)) => {
                return shape_err("sum tags differ")
            }
            _ => return shape_err("structures differ"),
        })
    }

    /// Structural equality with a custom scalar comparison. Closures are equal
    /// only when they are the same allocation.
    pub fn eq_by<T>(&self, other: &Value<T>, eq: &mut impl FnMut(&S, &T) -> bool) -> bool {
        match (self, other) {
            (Value::Real(a), Value::Real(b)) => eq(a, b),
            (Value::Int(a), Value::Int(b)) => a == b,
            (Value::Unit, Value::Unit) => true,
            (Value::Pair(p), Value::Pair(q)) => p.0.eq_by(&q.0, eq) && p.1.eq_by(&q.1, eq),
            (Value::Inl(a), Value::Inl(b)) | (Value::Inr(a), Value::Inr(b)) => a.eq_by(b, eq),
            (Value::Closure(a), Value::Closure(b)) => std::ptr::addr_eq(Arc::as_ptr(a), Arc::as_ptr(b)),
            (Value::Nil | Value::Cons(_), Value::Nil | Value::Cons(_)) => {
                let (mut x, mut y) = (self, other);
                loop {
                    match (x, y) {
                        (Value::Cons(c), Value::Cons(d)) => {
                            if !c.head.eq_by(&d.head, eq) {
                                return false;
                            }
                            x = &c.tail;
                            y = &d.tail;
                        }
                        (Value::Nil, Value::Nil) => return true,
                        _ => return false,
                    }
                }
            }
            _ => false,
        }
    }

    fn fmt_with(&self, f: &mut fmt::Formatter<'_>, scalar: &dyn Fn(&S, &mut fmt::Formatter<'_>) -> fmt::Result) -> fmt::Result {
        match self {
            Value::Real(s) => scalar(s, f),
            Value::Int(n) => write!(f, "{n}i"),
            Value::Unit => f.write_str("()"),
            Value::Pair(p) => {
                f.write_str("(")?;
                p.0.fmt_with(f, scalar)?;
                f.write_str(", ")?;
                p.1.fmt_with(f, scalar)?;
                f.write_str(")")
            }
            Value::Inl(v) => {
                f.write_str("inl ")?;
                v.fmt_with(f, scalar)
            }
            Value::Inr(v) => {
                f.write_str("inr ")?;
                v.fmt_with(f, scalar)
            }
            Value::Closure(_) => f.write_str("<closure>"),
            Value::Nil | Value::Cons(_) => {
                f.write_str("[")?;
                let mut cur = self;
                let mut first = true;
                while let Value::Cons(c) = cur {
                    if !first {
                        f.write_str(", ")?;
                    }
                    first = false;
                    c.head.fmt_with(f, scalar)?;
                    cur = &c.tail;
                }
                f.write_str("]")
            }
        }
    }
}

fn collect_refs<'a, S>(v: &'a Value<S>, out: &mut Vec<&'a S>) {
    match v {
        Value::Real(s) => out.push(s),
        Value::Pair(p) => {
            collect_refs(&p.0, out);
            collect_refs(&p.1, out);
        }
        Value::Inl(x) | Value::Inr(x) => collect_refs(x, out),
        Value::Cons(_) => {
            let mut cur = v;
            while let Value::Cons(c) = cur {
                collect_refs(&c.head, out);
                cur = &c.tail;
            }
        }
        _ => {}
    }
}

impl<S: PartialEq> PartialEq for Value<S> {
    fn eq(&self, other: &Self) -> bool {
        self.eq_by(other, &mut |a, b| a == b)
    }
}

impl<S: fmt::Debug> fmt::Debug for Value<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_with(f, &|s, f| write!(f, "{s:?}"))
    }
}

impl fmt::Display for Value<f64> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_with(f, &|s, f| write_real(f, *s))
    }
}

// ---------------------------------------------------------------------------
// Cotangent values: input-shaped values of accumulable floats.

impl Value<f64> {
    /// Same structure with every scalar set to zero; discrete parts are kept.
    pub fn zero_like(&self) -> Value<f64> {
        self.map_scalars(&mut |_| 0.0).expect("first-order value")
    }

    /// Pointwise sum. Discrete parts come from `self`.
    pub fn add(&self, other: &Value<f64>) -> Result<Value<f64>, ShapeError> {
        self.zip_map(other, &mut |a, b| a + b)
    }

    /// Scales every scalar.
    pub fn scale(&self, k: f64) -> Value<f64> {
        self.map_scalars(&mut |a| a * k).expect("first-order value")
    }

    /// The value shaped like `self` whose `i`th scalar is `f(i)`.
    pub fn rebuild(&self, mut f: impl FnMut(usize) -> f64) -> Value<f64> {
        let mut i = 0;
        self.map_scalars(&mut |_| {
            let r = f(i);
            i += 1;
            r
        })
        .expect("first-order value")
    }

    /// Zero everywhere except `z` at scalar position `k`.
    pub fn one_hot(&self, k: usize, z: f64) -> Value<f64> {
        self.rebuild(|i| if i == k { z } else { 0.0 })
    }

    pub fn to_scalars(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.for_each_scalar(&mut |s| out.push(*s));
        out
    }

    /// Adds `z` at the scalar reached by `path`, copying shared nodes on the way.
    pub fn add_at_path(&mut self, path: &[Step], z: f64) {
        let mut cur = self;
        for step in path {
            cur = match (*step, cur) {
                (Step::Fst, Value::Pair(p)) => &mut Arc::make_mut(p).0,
                (Step::Snd, Value::Pair(p)) => &mut Arc::make_mut(p).1,
                (Step::Inl, Value::Inl(v)) | (Step::Inr, Value::Inr(v)) => Arc::make_mut(v),
                (Step::Head, Value::Cons(c)) => &mut Arc::make_mut(c).head,
                (Step::Tail(n), mut v) => {
                    for _ in 0..n {
                        v = match v {
                            Value::Cons(c) => &mut Arc::make_mut(c).tail,
                            _ => panic!("path does not match value shape"),
                        };
                    }
                    v
                }
                _ => panic!("path does not match value shape"),
            };
        }
        match cur {
            Value::Real(r) => *r += z,
            _ => panic!("path does not end at a scalar"),
        }
    }
}

/// One step of a path from the root of a value to a scalar leaf.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Step {
    Fst,
    Snd,
    Inl,
    Inr,
    Head,
    /// Skip this many list cells.
    Tail(usize),
}

/// Paths to every scalar of `v`, in left-to-right order.
pub fn scalar_paths<S>(v: &Value<S>) -> Vec<Vec<Step>> {
    fn go<S>(v: &Value<S>, prefix: &mut Vec<Step>, out: &mut Vec<Vec<Step>>) {
        match v {
            Value::Real(_) => out.push(prefix.clone()),
            Value::Pair(p) => {
                prefix.push(Step::Fst);
                go(&p.0, prefix, out);
                prefix.pop();
                prefix.push(Step::Snd);
                go(&p.1, prefix, out);
                prefix.pop();
            }
            Value::Inl(x) => {
                prefix.push(Step::Inl);
                go(x, prefix, out);
                prefix.pop();
            }
            Value::Inr(x) => {
                prefix.push(Step::Inr);
                go(x, prefix, out);
                prefix.pop();
            }
            Value::Cons(_) => {
                let mut cur = v;
                let mut k = 0;
                while let Value::Cons(c) = cur {
                    if k > 0 {
                        prefix.push(Step::Tail(k));
                    }
                    prefix.push(Step::Head);
                    go(&c.head, prefix, out);
                    prefix.pop();
                    if k > 0 {
                        prefix.pop();
                    }
                    k += 1;
                    cur = &c.tail;
                }
            }
            _ => {}
        }
    }
    let mut out = Vec::new();
    go(v, &mut Vec::new(), &mut out);
    out
}

// ---------------------------------------------------------------------------
// Input literals: `3.0`, `42i`, `()`, `(v, w)`, `inl v`, `inr v`, `[v1, v2]`.

#[derive(Debug, Clone, Error, PartialEq)]
pub enum LiteralError {
    #[error("bad literal at {0}")]
    Parse(#[from] ParseError),
    #[error("literal does not match type {expected}: {detail}")]
    Type { expected: Ty, detail: String },
}

#[derive(Debug, Clone, PartialEq)]
enum Lit {
    Real(f64),
    Int(i64),
    Unit,
    Pair(Box<Lit>, Box<Lit>),
    Inl(Box<Lit>),
    Inr(Box<Lit>),
    List(Vec<Lit>),
}

fn parse_lit(p: &mut Parser) -> Result<Lit, ParseError> {
    let pos: Pos = p.pos();
    match p.bump() {
        Tok::Real(r) => Ok(Lit::Real(r)),
        Tok::Int(n) => Ok(Lit::Int(n)),
        Tok::Minus => match p.bump() {
            Tok::Real(r) => Ok(Lit::Real(-r)),
            Tok::Int(n) => Ok(Lit::Int(n.wrapping_neg())),
            other => Err(ParseError::new(pos, format!("expected a number after `-`, found {}", other.describe()))),
        },
        Tok::LParen => {
            if *p.peek() == Tok::RParen {
                p.bump();
                return Ok(Lit::Unit);
            }
            let a = parse_lit(p)?;
            if *p.peek() == Tok::Comma {
                p.bump();
                let b = parse_lit(p)?;
                p.expect(Tok::RParen)?;
                Ok(Lit::Pair(Box::new(a), Box::new(b)))
            } else {
                p.expect(Tok::RParen)?;
                Ok(a)
            }
        }
        Tok::LBracket => {
            let mut items = Vec::new();
            if *p.peek() != Tok::RBracket {
                loop {
                    items.push(parse_lit(p)?);
                    if *p.peek() == Tok::Comma {
                        p.bump();
                    } else {
                        break;
                    }
                }
            }
            p.expect(Tok::RBracket)?;
            Ok(Lit::List(items))
        }
        Tok::Ident(s) if s == "inl" => Ok(Lit::Inl(Box::new(parse_lit(p)?))),
        Tok::Ident(s) if s == "inr" => Ok(Lit::Inr(Box::new(parse_lit(p)?))),
        other => Err(ParseError::new(pos, format!("expected a value, found {}", other.describe()))),
    }
}

fn lit_to_value(lit: &Lit, ty: &Ty) -> Result<Value<f64>, LiteralError> {
    let mismatch = |detail: &str| LiteralError::Type { expected: ty.clone(), detail: detail.to_string() };
    Ok(match (lit, ty) {
        (Lit::Real(r), Ty::Real) => Value::Real(*r),
        (Lit::Int(n), Ty::Int) => Value::Int(*n),
        (Lit::Unit, Ty::Unit) => Value::Unit,
        (Lit::Pair(a, b), Ty::Prod(s, t)) => Value::pair(lit_to_value(a, s)?, lit_to_value(b, t)?),
        (Lit::Inl(a), Ty::Sum(s, _)) => Value::inl(lit_to_value(a, s)?),
        (Lit::Inr(b), Ty::Sum(_, t)) => Value::inr(lit_to_value(b, t)?),
        (Lit::List(items), Ty::List(t)) => {
            Value::list(items.iter().map(|x| lit_to_value(x, t)).collect::<Result<Vec<_>, _>>()?)
        }
        (Lit::Real(_), Ty::Int) => return Err(mismatch("integers are written with an `i` suffix, e.g. `3i`")),
        (_, Ty::Fun(..)) => return Err(mismatch("functions cannot be given as input")),
        _ => return Err(mismatch(&format!("found {lit:?}"))),
    })
}

/// Parses an input literal and checks it against `ty`.
pub fn parse_value(src: &str, ty: &Ty) -> Result<Value<f64>, LiteralError> {
    let mut p = Parser::new(src)?;
    let lit = parse_lit(&mut p)?;
    p.expect(Tok::Eof)?;
    lit_to_value(&lit, ty)
}
