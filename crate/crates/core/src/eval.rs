//! Call-by-value interpreter, generic over the scalar domain.
//!
//! Each engine is a [`Domain`]: it decides what a scalar is and what happens
//! when a literal is evaluated or a primitive op fires. Tail positions (let
//! bodies, application, case branches) loop instead of recursing, so
//! tail-recursive `letrec` loops run in constant stack.

use std::sync::Arc;

use thiserror::Error;

use crate::lang::{NodeId, NodeKind, Program};
use crate::ops::OpTag;
use crate::sched::Scheduler;
use crate::value::{Closure, Env, Value};

type ValuePair<S> = (Value<S>, Value<S>);

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EvalError {
    #[error("forward pass exceeded the budget of {limit} primitive operations")]
    OpBudgetExceeded { limit: u64 },
    #[error("reverse pass exceeded the budget of {limit} backpropagator invocations")]
    InvocationBudgetExceeded { limit: u64 },
    #[error("internal shape mismatch during evaluation: {0}")]
    ShapeMismatch(&'static str),
    #[error("program is not a function")]
    NotAFunction,
}

/// A scalar domain the interpreter can run over.
pub trait Domain: Sized {
    type Scalar: Clone;

    fn constant(&mut self, r: f64) -> Result<Self::Scalar, EvalError>;

    fn primal(s: &Self::Scalar) -> f64;

    fn prim(&mut self, op: OpTag, args: &[Self::Scalar]) -> Result<Self::Scalar, EvalError>;

    /// `true` selects `inr` (non-negative), `false` selects `inl`.
    fn sign(&mut self, s: &Self::Scalar) -> bool {
        Self::primal(s).partial_cmp(&0.0) != Some(std::cmp::Ordering::Less)
    }

    /// Evaluates both halves of `par(left, right)`. Sequential unless the
    /// domain overrides it.
    fn par(
        &mut self,
        prog: &Program,
        env: &Env<Self::Scalar>,
        left: NodeId,
        right: NodeId,
    ) -> Result<ValuePair<Self::Scalar>, EvalError> {
        let a = eval(self, prog, env, left)?;
        let b = eval(self, prog, env, right)?;
        Ok((a, b))
    }
}

fn lookup<S: Clone>(env: &Env<S>, i: u32) -> Result<Value<S>, EvalError> {
    env.lookup(i).cloned().ok_or(EvalError::ShapeMismatch("unbound de Bruijn index"))
}

pub fn eval<D: Domain>(
    dom: &mut D,
    prog: &Program,
    env: &Env<D::Scalar>,
    node: NodeId,
) -> Result<Value<D::Scalar>, EvalError> {
    let mut env = env.clone();
    let mut node = node;
    loop {
        match &prog.node(node).kind {
            NodeKind::Var(i) => return lookup(&env, *i),
            NodeKind::Real(r) => return Ok(Value::Real(dom.constant(*r)?)),
            NodeKind::Int(n) => return Ok(Value::Int(*n)),
            NodeKind::Unit => return Ok(Value::Unit),
            NodeKind::Nil => return Ok(Value::Nil),
            NodeKind::Pair(a, b) => {
                let a = eval(dom, prog, &env, *a)?;
                let b = eval(dom, prog, &env, *b)?;
                return Ok(Value::pair(a, b));
            }
            NodeKind::Par(a, b) => {
                let (a, b) = dom.par(prog, &env, *a, *b)?;
                return Ok(Value::pair(a, b));
            }
            NodeKind::Fst(p) | NodeKind::Snd(p) => {
                let first = matches!(prog.node(node).kind, NodeKind::Fst(_));
                return match eval(dom, prog, &env, *p)? {
                    Value::Pair(pair) => Ok(if first { pair.0.clone() } else { pair.1.clone() }),
                    _ => Err(EvalError::ShapeMismatch("projection from a non-pair")),
                };
            }
            NodeKind::Lam { body } => {
                return Ok(Value::Closure(Arc::new(Closure { env, body: *body, recursive: false })));
            }
            NodeKind::Inl(a) => return Ok(Value::inl(eval(dom, prog, &env, *a)?)),
            NodeKind::Inr(a) => return Ok(Value::inr(eval(dom, prog, &env, *a)?)),
            NodeKind::Cons(h, t) => {
                let h = eval(dom, prog, &env, *h)?;
                let t = eval(dom, prog, &env, *t)?;
                return Ok(Value::cons(h, t));
            }
            NodeKind::Sign(a) => {
                let s = match eval(dom, prog, &env, *a)? {
                    Value::Real(s) => s,
                    _ => return Err(EvalError::ShapeMismatch("sign of a non-real")),
                };
                return Ok(Value::bool(dom.sign(&s)));
            }
            NodeKind::Prim { op, args } => {
                let x = real(eval(dom, prog, &env, args[0])?)?;
                if op.arity() == 1 {
                    return Ok(Value::Real(dom.prim(*op, std::slice::from_ref(&x))?));
                }
                let y = real(eval(dom, prog, &env, args[1])?)?;
                return Ok(Value::Real(dom.prim(*op, &[x, y])?));
            }
            NodeKind::Let { bound, body } => {
                let v = eval(dom, prog, &env, *bound)?;
                env = env.push(v);
                node = *body;
            }
            NodeKind::LetRec { fn_body, rest } => {
                let clo = Closure { env: env.clone(), body: *fn_body, recursive: true };
                env = env.push(Value::Closure(Arc::new(clo)));
                node = *rest;
            }
            NodeKind::App(f, a) => {
                let f = eval(dom, prog, &env, *f)?;
                let a = eval(dom, prog, &env, *a)?;
                let Value::Closure(c) = f else {
                    return Err(EvalError::ShapeMismatch("application of a non-function"));
                };
                env = Closure::enter(&c, a);
                node = c.body;
            }
            NodeKind::Case { scrut, inl, inr } => match eval(dom, prog, &env, *scrut)? {
                Value::Inl(v) => {
                    env = env.push((*v).clone());
                    node = *inl;
                }
                Value::Inr(v) => {
                    env = env.push((*v).clone());
                    node = *inr;
                }
                _ => return Err(EvalError::ShapeMismatch("case on a non-sum")),
            },
            NodeKind::CaseList { scrut, nil, cons } => match eval(dom, prog, &env, *scrut)? {
                Value::Nil => node = *nil,
                Value::Cons(cell) => {
                    env = env.push(cell.head.clone()).push(cell.tail.clone());
                    node = *cons;
                }
                _ => return Err(EvalError::ShapeMismatch("caselist on a non-list")),
            },
        }
    }
}

fn real<S>(v: Value<S>) -> Result<S, EvalError> {
    match v {
        Value::Real(s) => Ok(s),
        _ => Err(EvalError::ShapeMismatch("primitive operand is not a real")),
    }
}

/// Evaluates the program (which must be a function) and applies it to `input`.
pub fn apply_program<D: Domain>(
    dom: &mut D,
    prog: &Program,
    input: Value<D::Scalar>,
) -> Result<Value<D::Scalar>, EvalError> {
    let f = eval(dom, prog, &Env::empty(), prog.root())?;
    let Value::Closure(c) = f else {
        return Err(EvalError::NotAFunction);
    };
    let env = Closure::enter(&c, input);
    eval(dom, prog, &env, c.body)
}

/// Plain `f64` evaluation with a pluggable scheduler for `par`.
pub struct Plain<'s, S> {
    sched: &'s S,
    /// Number of primitive operations executed.
    pub ops: u64,
    /// Outcome of every `sign` decision, in evaluation order (when enabled).
    pub trace: Option<Vec<bool>>,
}

impl<'s, S: Scheduler> Plain<'s, S> {
    pub fn new(sched: &'s S) -> Self {
        Plain { sched, ops: 0, trace: None }
    }

    pub fn tracing(sched: &'s S) -> Self {
        Plain { sched, ops: 0, trace: Some(Vec::new()) }
    }
}

impl<S: Scheduler> Domain for Plain<'_, S> {
    type Scalar = f64;

    fn constant(&mut self, r: f64) -> Result<f64, EvalError> {
        Ok(r)
    }

    fn primal(s: &f64) -> f64 {
        *s
    }

    fn prim(&mut self, op: OpTag, args: &[f64]) -> Result<f64, EvalError> {
        self.ops += 1;
        Ok(op.apply(args))
    }

    fn sign(&mut self, s: &f64) -> bool {
        let b = s.partial_cmp(&0.0) != Some(std::cmp::Ordering::Less);
        if let Some(t) = &mut self.trace {
            t.push(b);
        }
        b
    }

    fn par(
        &mut self,
        prog: &Program,
        env: &Env<f64>,
        left: NodeId,
        right: NodeId,
    ) -> Result<(Value<f64>, Value<f64>), EvalError> {
        let sched = self.sched;
        let mut l = Plain { sched, ops: 0, trace: self.trace.as_ref().map(|_| Vec::new()) };
        let mut r = Plain { sched, ops: 0, trace: self.trace.as_ref().map(|_| Vec::new()) };
        let (a, b) = sched.join(
            || eval(&mut l, prog, env, left),
            || eval(&mut r, prog, env, right),
        );
        self.ops += l.ops + r.ops;
        if let Some(t) = &mut self.trace {
            t.extend(l.trace.unwrap_or_default());
            t.extend(r.trace.unwrap_or_default());
        }
        Ok((a?, b?))
    }
}

/// Evaluates a closed program to a value.
pub fn evaluate<S: Scheduler>(prog: &Program, sched: &S) -> Result<Value<f64>, EvalError> {
    eval(&mut Plain::new(sched), prog, &Env::empty(), prog.root())
}

/// Runs a function program on an input.
pub fn run<S: Scheduler>(prog: &Program, input: &Value<f64>, sched: &S) -> Result<Value<f64>, EvalError> {
    apply_program(&mut Plain::new(sched), prog, input.clone())
}
