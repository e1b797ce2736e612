//! Naive dual-numbers reverse AD: every scalar carries a closure mapping its
//! cotangent to a full input-shaped cotangent. Sharing makes this exponential.

use std::cell::{Cell, RefCell};
use std::rc::Rc;

use super::{require_function, seeds, Engine, EngineError, GradResult, Stats};
use crate::eval::{apply_program, Domain, EvalError};
use crate::lang::Program;
use crate::ops::OpTag;
use crate::value::Value;

/// Largest forward pass this engine accepts.
pub const OP_BUDGET: u64 = 1 << 20;
/// Largest number of backpropagator calls before the reverse pass gives up.
pub const INVOCATION_BUDGET: u64 = 1 << 24;

type Backprop = Rc<dyn Fn(&Context, f64) -> Value<f64>>;

/// A primal paired with its backpropagator. Backpropagators live in the
/// shared [`Context`] and refer to their children by index, so long chains
/// drop without recursion.
#[derive(Clone)]
pub struct NaiveDual {
    pub primal: f64,
    bp: usize,
    cx: Rc<Context>,
}

impl NaiveDual {
    /// Applies the backpropagator.
    pub fn backprop(&self, z: f64) -> Value<f64> {
        self.cx.call(self.bp, z)
    }
}

/// Backpropagators and counters shared by one run.
pub struct Context {
    zero: Value<f64>,
    bps: RefCell<Vec<Backprop>>,
    counts: RefCell<Vec<u64>>,
    total: Cell<u64>,
    exceeded: Cell<bool>,
}

impl Context {
    fn new(input: &Value<f64>) -> Rc<Self> {
        Rc::new(Context {
            zero: input.zero_like(),
            bps: RefCell::new(Vec::new()),
            counts: RefCell::new(Vec::new()),
            total: Cell::new(0),
            exceeded: Cell::new(false),
        })
    }

    fn register(&self, bp: Backprop) -> usize {
        self.bps.borrow_mut().push(bp);
        let mut c = self.counts.borrow_mut();
        c.push(0);
        c.len() - 1
    }

    fn call(&self, idx: usize, z: f64) -> Value<f64> {
        let f = self.bps.borrow()[idx].clone();
        if !self.tick(idx) {
            return self.zero.clone();
        }
        f(self, z)
    }

    /// Records one call; `false` once the budget is spent.
    fn tick(&self, idx: usize) -> bool {
        if self.exceeded.get() {
            return false;
        }
        self.counts.borrow_mut()[idx] += 1;
        self.total.set(self.total.get() + 1);
        if self.total.get() > INVOCATION_BUDGET {
            self.exceeded.set(true);
            return false;
        }
        true
    }

    /// Per-backpropagator invocation counts, inputs first, then in creation order.
    pub fn counts(&self) -> Vec<u64> {
        self.counts.borrow().clone()
    }
}

/// Attaches to each input scalar the backpropagator `z ↦ one_hot(i, z)`.
pub fn interleave(x: &Value<f64>) -> (Value<NaiveDual>, Rc<Context>) {
    let cx = Context::new(x);
    let mut pos = 0;
    let v = x
        .map_scalars(&mut |&primal| {
            let k = pos;
            pos += 1;
            let bp = cx.register(Rc::new(move |c: &Context, z| c.zero.one_hot(k, z)));
            NaiveDual { primal, bp, cx: cx.clone() }
        })
        .expect("input is first-order");
    (v, cx)
}

/// Splits a dual value into its primal and the sum of its backpropagators
/// applied to the matching cotangent components.
pub fn deinterleave(
    v: &Value<NaiveDual>,
    ct: &Value<f64>,
    cx: &Context,
) -> Result<(Value<f64>, Value<f64>), EngineError> {
    let primal = v.map_scalars(&mut |d| d.primal)?;
    let mut acc: Option<Value<f64>> = None;
    for (d, c) in seeds(v, ct)? {
        let g = d.backprop(c);
        acc = Some(match acc {
            None => g,
            Some(a) => a.add(&g)?,
        });
    }
    Ok((primal, acc.unwrap_or_else(|| cx.zero.clone())))
}

struct NaiveDomain {
    cx: Rc<Context>,
    ops: u64,
}

impl Domain for NaiveDomain {
    type Scalar = NaiveDual;

    fn constant(&mut self, r: f64) -> Result<NaiveDual, EvalError> {
        let bp = self.cx.register(Rc::new(|c: &Context, _| c.zero.clone()));
        Ok(NaiveDual { primal: r, bp, cx: self.cx.clone() })
    }

    fn primal(s: &NaiveDual) -> f64 {
        s.primal
    }

    fn prim(&mut self, op: OpTag, args: &[NaiveDual]) -> Result<NaiveDual, EvalError> {
        self.ops += 1;
        if self.ops > OP_BUDGET {
            return Err(EvalError::OpBudgetExceeded { limit: OP_BUDGET });
        }
        let xs = [args[0].primal, args.get(1).map_or(0.0, |a| a.primal)];
        let children: Vec<usize> = args.iter().map(|a| a.bp).collect();
        let bp = self.cx.register(Rc::new(move |c: &Context, z| {
            let mut acc = c.call(children[0], op.partial(0, &xs) * z);
            if let Some(&second) = children.get(1) {
                acc = acc.add(&c.call(second, op.partial(1, &xs) * z)).expect("cotangents share the input shape");
            }
            acc
        }));
        Ok(NaiveDual { primal: op.apply(&xs), bp, cx: self.cx.clone() })
    }
}

/// Runs only the forward pass, returning the dual output and the counters.
pub fn forward(prog: &Program, x: &Value<f64>) -> Result<(Value<NaiveDual>, Rc<Context>, u64), EngineError> {
    require_function(prog)?;
    let (input, cx) = interleave(x);
    let mut dom = NaiveDomain { cx: cx.clone(), ops: 0 };
    let out = apply_program(&mut dom, prog, input)?;
    Ok((out, cx, dom.ops))
}

pub fn grad_naive(prog: &Program, x: &Value<f64>, ct: &Value<f64>) -> Result<GradResult, EngineError> {
    let (out, cx, ops) = forward(prog, x)?;
    let (value, gradient) = deinterleave(&out, ct, &cx)?;
    if cx.exceeded.get() {
        return Err(EvalError::InvocationBudgetExceeded { limit: INVOCATION_BUDGET }.into());
    }
    let k = x.scalar_count();
    let counts = cx.counts();
    let mut stats = Stats::new(Engine::Naive);
    stats.primal_ops = ops;
    stats.input_scalars = k as u64;
    stats.backprops_created = (counts.len() - k) as u64;
    stats.absorb_counts(&counts, k);
    Ok(GradResult { value, gradient, stats, graph: None })
}
