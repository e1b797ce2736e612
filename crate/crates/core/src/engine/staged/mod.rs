//! Staged backpropagators: instead of calling a backpropagator immediately,
//! record the call under the callee's ID and resolve calls highest-ID first,
//! so each backpropagator runs at most once with the sum of its arguments.
//!
//! Three collector representations share the ID generation and the
//! interpreter domain defined here:
//! * [`map`]: a staging map and an input-shaped collector, merged with `⊞`;
//! * [`cayley`]: backpropagators return updaters `Staged -> Staged`;
//! * [`sparse`]: like `cayley`, but the collector is keyed by input ID.

pub mod cayley;
pub mod map;
pub mod sparse;

use std::cell::Cell;
use std::collections::BTreeMap;

use crate::eval::{Domain, EvalError};
use crate::ops::OpTag;
use crate::value::Value;

use super::Stats;

/// Sequential backpropagator ID. Input scalars take `0..k`.
pub type SeqId = u64;

/// Collector plus staging map of delayed calls `id ↦ (handle, argument)`.
pub struct Staged<C, H> {
    pub collector: C,
    pub staging: BTreeMap<SeqId, (H, f64)>,
}

thread_local! {
    static MAP_OPS: Cell<u64> = const { Cell::new(0) };
    static COMPARISONS: Cell<u64> = const { Cell::new(0) };
    static CALLS: Cell<u64> = const { Cell::new(0) };
}

/// Thread-local operation counters. Engines reset them before the reverse
/// pass and read them afterwards.
pub mod counters {
    use super::*;

    pub fn reset() {
        MAP_OPS.with(|c| c.set(0));
        COMPARISONS.with(|c| c.set(0));
        CALLS.with(|c| c.set(0));
    }

    pub fn map_ops() -> u64 {
        MAP_OPS.with(Cell::get)
    }

    pub fn comparisons() -> u64 {
        COMPARISONS.with(Cell::get)
    }

    pub fn calls() -> u64 {
        CALLS.with(Cell::get)
    }

    pub(crate) fn map_op(n: u64) {
        MAP_OPS.with(|c| c.set(c.get() + n));
    }

    pub(crate) fn comparison() {
        COMPARISONS.with(|c| c.set(c.get() + 1));
    }

    pub(crate) fn call() {
        CALLS.with(|c| c.set(c.get() + 1));
    }
}

/// Per-ID invocation counts and the resolve-order check.
#[derive(Default)]
pub(crate) struct Tally {
    counts: Vec<u64>,
    keys: Vec<u64>,
    violations: u64,
}

impl Tally {
    pub(crate) fn with_ids(n: u64) -> Self {
        Tally { counts: vec![0; n as usize], ..Tally::default() }
    }

    pub(crate) fn resolved(&mut self, id: SeqId) {
        let i = id as usize;
        if i >= self.counts.len() {
            self.counts.resize(i + 1, 0);
        }
        self.counts[i] += 1;
        self.keys.push(id);
    }

    /// Records whether the highest still-staged key lies below the key just resolved.
    pub(crate) fn check_below(&mut self, resolved: SeqId, highest: Option<SeqId>) {
        if highest.is_some_and(|h| h >= resolved) {
            self.violations += 1;
        }
    }

    pub(crate) fn into_stats(mut self, stats: &mut Stats, inputs: usize) {
        stats.absorb_counts(&self.counts, inputs);
        stats.resolutions = self.keys.len() as u64;
        stats.order_violations = self.violations;
        self.keys.sort_unstable();
        stats.staged_keys = self.keys;
    }
}

/// A scalar during a staged forward pass.
#[derive(Clone)]
pub struct StagedScalar<H> {
    pub primal: f64,
    pub id: SeqId,
    pub handle: H,
}

/// How a particular stage builds backpropagator handles.
pub(crate) trait Stage {
    type Handle: Clone;

    fn constant(&mut self) -> Self::Handle;

    /// Handle for `op` applied at `xs`, whose arguments carry `(id, handle)`.
    fn op(&mut self, op: OpTag, xs: [f64; 2], args: Vec<(SeqId, Self::Handle)>) -> Self::Handle;
}

pub(crate) struct StagedDomain<K> {
    pub stage: K,
    pub next: SeqId,
    pub ops: u64,
}

impl<K> StagedDomain<K> {
    pub(crate) fn new(stage: K, first_id: SeqId) -> Self {
        StagedDomain { stage, next: first_id, ops: 0 }
    }

    fn fresh(&mut self) -> SeqId {
        let id = self.next;
        self.next += 1;
        id
    }
}

impl<K: Stage> Domain for StagedDomain<K> {
    type Scalar = StagedScalar<K::Handle>;

    fn constant(&mut self, r: f64) -> Result<Self::Scalar, EvalError> {
        let id = self.fresh();
        Ok(StagedScalar { primal: r, id, handle: self.stage.constant() })
    }

    fn primal(s: &Self::Scalar) -> f64 {
        s.primal
    }

    fn prim(&mut self, op: OpTag, args: &[Self::Scalar]) -> Result<Self::Scalar, EvalError> {
        self.ops += 1;
        let xs = [args[0].primal, args.get(1).map_or(0.0, |a| a.primal)];
        let handle = self.stage.op(op, xs, args.iter().map(|a| (a.id, a.handle.clone())).collect());
        let id = self.fresh();
        Ok(StagedScalar { primal: op.apply(&xs), id, handle })
    }
}

/// Numbers input scalars `0..k` and attaches `make(k)` as each handle.
pub(crate) fn interleave<H>(x: &Value<f64>, mut make: impl FnMut(usize) -> H) -> Value<StagedScalar<H>> {
    let mut k = 0;
    x.map_scalars(&mut |&primal| {
        let s = StagedScalar { primal, id: k as SeqId, handle: make(k) };
        k += 1;
        s
    })
    .expect("input is first-order")
}
