//! Reverse-mode engines, from the naive closure representation up to the
//! parallel tape, behind one dispatcher.

pub mod naive;
pub mod parallel;
pub mod staged;
pub mod tape;

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::eval::EvalError;
use crate::lang::Program;
use crate::sched::PoolError;
use crate::value::{ShapeError, Value};

pub use parallel::GraphSummary;
pub use staged::SeqId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Engine {
    Naive,
    /// Map-based staging with linear factoring.
    Staged,
    /// Staging with updater closures composed as functions.
    Cayley,
    /// Updater closures with an integer-keyed collector.
    Sparse,
    /// Defunctionalized tape, written during the reverse pass.
    Tape,
    /// Defunctionalized tape, written during the forward pass.
    TapeEager,
    Parallel { threads: usize },
}

impl Engine {
    /// Every sequential engine, naive first.
    pub const SEQUENTIAL: [Engine; 6] =
        [Engine::Naive, Engine::Staged, Engine::Cayley, Engine::Sparse, Engine::Tape, Engine::TapeEager];

    pub fn name(&self) -> &'static str {
        match self {
            Engine::Naive => "naive",
            Engine::Staged => "staged",
            Engine::Cayley => "cayley",
            Engine::Sparse => "sparse",
            Engine::Tape => "tape",
            Engine::TapeEager => "tape-eager",
            Engine::Parallel { .. } => "parallel",
        }
    }

    /// Resolves an engine name as written on the command line.
    pub fn from_name(name: &str, eager_tape: bool, threads: usize) -> Option<Engine> {
        Some(match name {
            "naive" => Engine::Naive,
            "staged" => Engine::Staged,
            "cayley" => Engine::Cayley,
            "sparse" => Engine::Sparse,
            "tape" if eager_tape => Engine::TapeEager,
            "tape" => Engine::Tape,
            "tape-eager" => Engine::TapeEager,
            "parallel" => Engine::Parallel { threads: threads.max(1) },
            _ => return None,
        })
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Engine::Parallel { threads } => write!(f, "parallel({threads})"),
            other => f.write_str(other.name()),
        }
    }
}

/// Instrumentation counters collected by every engine. Fields an engine
/// has no notion of stay zero.
#[derive(Clone, Debug, Default, Serialize)]
pub struct Stats {
    pub engine: String,
    pub primal_ops: u64,
    pub input_scalars: u64,
    /// Backpropagators created for constants and primitive ops.
    pub backprops_created: u64,
    /// Invocations of constant and op backpropagators.
    pub backprops_invoked: u64,
    /// Invocations of the per-input-scalar backpropagators.
    pub input_backprop_invocations: u64,
    /// Staged entries (or tape slots holding a cotangent) that were resolved.
    pub resolutions: u64,
    pub max_invocations_per_backprop: u64,
    pub map_ops: u64,
    pub collector_comparisons: u64,
    pub tape_len: u64,
    pub edges_traversed: u64,
    pub slots_resolved: u64,
    pub order_violations: u64,
    /// invocation count -> number of backpropagators invoked that many times
    pub invocation_histogram: BTreeMap<u64, u64>,
    /// IDs of resolved entries, sorted. Used to compare engines.
    #[serde(skip)]
    pub staged_keys: Vec<u64>,
}

impl Stats {
    pub(crate) fn new(engine: Engine) -> Self {
        Stats { engine: engine.name().to_string(), ..Stats::default() }
    }

    /// Fills the invocation fields from per-ID counts, where IDs below
    /// `inputs` belong to input scalars.
    pub(crate) fn absorb_counts(&mut self, counts: &[u64], inputs: usize) {
        for (id, &c) in counts.iter().enumerate() {
            if id < inputs {
                self.input_backprop_invocations += c;
            } else {
                self.backprops_invoked += c;
            }
            if c > 0 {
                *self.invocation_histogram.entry(c).or_default() += 1;
                self.max_invocations_per_backprop = self.max_invocations_per_backprop.max(c);
            }
        }
    }

    /// Reverse-pass work per unit of forward work plus input size.
    pub fn complexity_constant(&self) -> f64 {
        self.edges_traversed as f64 / (self.primal_ops + self.input_scalars).max(1) as f64
    }
}

#[derive(Clone, Debug)]
pub struct GradResult {
    pub value: Value<f64>,
    pub gradient: Value<f64>,
    pub stats: Stats,
    /// Job graph of a parallel run.
    pub graph: Option<GraphSummary>,
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("cotangent does not match the program output: {0}")]
    Shape(#[from] ShapeError),
    #[error("program is not a function")]
    NotAFunction,
    #[error("inconsistent staging: ID {0} bound to two different backpropagators")]
    InconsistentId(SeqId),
    #[error("{count} resolve-order violations")]
    OrderViolation { count: u64 },
    #[error(transparent)]
    Pool(#[from] PoolError),
}

/// Differentiates `prog` at `x`, pulling back the output cotangent `ct`.
pub fn grad(prog: &Program, engine: Engine, x: &Value<f64>, ct: &Value<f64>) -> Result<GradResult, EngineError> {
    let r = match engine {
        Engine::Naive => naive::grad_naive(prog, x, ct)?,
        Engine::Staged => staged::map::grad_staged_m(prog, x, ct)?,
        Engine::Cayley => staged::cayley::grad_staged_c(prog, x, ct)?,
        Engine::Sparse => staged::sparse::grad_staged_s(prog, x, ct)?,
        Engine::Tape => tape::grad_tape(prog, x, ct, tape::Mode::Deferred)?,
        Engine::TapeEager => tape::grad_tape(prog, x, ct, tape::Mode::Eager)?,
        Engine::Parallel { threads } => parallel::grad_parallel(prog, x, ct, threads)?,
    };
    if r.stats.order_violations > 0 {
        return Err(EngineError::OrderViolation { count: r.stats.order_violations });
    }
    Ok(r)
}

pub(crate) fn require_function(prog: &Program) -> Result<(), EngineError> {
    prog.signature().map(|_| ()).ok_or(EngineError::NotAFunction)
}

/// Pairs every output scalar with its cotangent, left to right.
pub(crate) fn seeds<S: Clone>(out: &Value<S>, ct: &Value<f64>) -> Result<Vec<(S, f64)>, ShapeError> {
    let mut v = Vec::new();
    out.zip_map(ct, &mut |s, c| v.push((s.clone(), *c)))?;
    Ok(v)
}
