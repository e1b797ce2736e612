//! Map-based staging. A backpropagator returns a `Staged` value whose
//! collector is an input-shaped cotangent and whose staging map holds the
//! calls it would have made. `⊞` adds collectors and merges staging maps,
//! summing the arguments of calls to the same ID (linear factoring).

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::rc::Rc;

use super::{counters, interleave, SeqId, Stage, Staged, StagedDomain, Tally};
use crate::engine::{require_function, seeds, Engine, EngineError, GradResult, Stats};
use crate::eval::apply_program;
use crate::lang::Program;
use crate::ops::OpTag;
use crate::value::Value;

/// Backpropagator handle. Handles are compared by identity.
#[derive(Clone)]
pub struct HandleM(Rc<dyn Fn(f64) -> StagedMap>);

/// Collector `None` stands for the zero cotangent.
pub type StagedMap = Staged<Option<Value<f64>>, HandleM>;

impl HandleM {
    pub fn new(f: impl Fn(f64) -> StagedMap + 'static) -> Self {
        HandleM(Rc::new(f))
    }

    pub fn call(&self, z: f64) -> StagedMap {
        (self.0)(z)
    }

    pub fn same(&self, other: &HandleM) -> bool {
        Rc::ptr_eq(&self.0, &other.0)
    }
}

impl StagedMap {
    pub fn zero() -> Self {
        Staged { collector: None, staging: BTreeMap::new() }
    }

    pub fn collected(collector: Value<f64>) -> Self {
        Staged { collector: Some(collector), staging: BTreeMap::new() }
    }

    /// Keys and accumulated arguments, ascending.
    pub fn arguments(&self) -> Vec<(SeqId, f64)> {
        self.staging.iter().map(|(k, (_, a))| (*k, *a)).collect()
    }
}

/// `StagedCall (i, f) x = (0, {i ↦ (f, x)})`.
pub fn staged_call(id: SeqId, f: HandleM, arg: f64) -> StagedMap {
    counters::call();
    let mut staging = BTreeMap::new();
    staging.insert(id, (f, arg));
    Staged { collector: None, staging }
}

/// `⊞`: pointwise collector sum and staging-map union with argument addition.
pub fn staged_plus(a: StagedMap, b: StagedMap) -> Result<StagedMap, EngineError> {
    let collector = match (a.collector, b.collector) {
        (None, c) | (c, None) => c,
        (Some(x), Some(y)) => Some(x.add(&y)?),
    };
    let (mut big, small) =
        if a.staging.len() >= b.staging.len() { (a.staging, b.staging) } else { (b.staging, a.staging) };
    counters::map_op(small.len() as u64);
    for (k, (h, x)) in small {
        match big.entry(k) {
            Entry::Vacant(e) => {
                e.insert((h, x));
            }
            Entry::Occupied(mut e) => {
                let slot = e.get_mut();
                if !slot.0.same(&h) {
                    return Err(EngineError::InconsistentId(k));
                }
                slot.1 += x;
            }
        }
    }
    Ok(Staged { collector, staging: big })
}

/// Pops the highest key, invokes it and merges the result. Returns the key
/// resolved, or `None` when nothing is staged.
pub fn resolve_one(s: StagedMap) -> Result<(StagedMap, Option<SeqId>), EngineError> {
    let mut tally = Tally::default();
    resolve_step(s, &mut tally)
}

fn resolve_step(mut s: StagedMap, tally: &mut Tally) -> Result<(StagedMap, Option<SeqId>), EngineError> {
    let Some((i, (h, a))) = s.staging.pop_last() else {
        return Ok((s, None));
    };
    counters::map_op(1);
    tally.resolved(i);
    let r = h.call(a);
    tally.check_below(i, r.staging.last_key_value().map(|(k, _)| *k));
    Ok((staged_plus(s, r)?, Some(i)))
}

fn resolve_with(mut s: StagedMap, tally: &mut Tally) -> Result<Option<Value<f64>>, EngineError> {
    loop {
        let (next, popped) = resolve_step(s, tally)?;
        s = next;
        if popped.is_none() {
            return Ok(s.collector);
        }
    }
}

/// Resolves until the staging map is empty and returns the collector
/// (`None` if it stayed zero).
pub fn resolve(s: StagedMap) -> Result<Option<Value<f64>>, EngineError> {
    resolve_with(s, &mut Tally::default())
}

struct MapStage {
    zero_handle: HandleM,
}

impl Stage for MapStage {
    type Handle = HandleM;

    fn constant(&mut self) -> HandleM {
        self.zero_handle.clone()
    }

    fn op(&mut self, op: OpTag, xs: [f64; 2], args: Vec<(SeqId, HandleM)>) -> HandleM {
        HandleM::new(move |z| {
            let mut acc = StagedMap::zero();
            for (i, (id, h)) in args.iter().enumerate() {
                let call = staged_call(*id, h.clone(), op.partial(i, &xs) * z);
                acc = staged_plus(acc, call).expect("one ID per handle within a single op");
            }
            acc
        })
    }
}

pub fn grad_staged_m(prog: &Program, x: &Value<f64>, ct: &Value<f64>) -> Result<GradResult, EngineError> {
    require_function(prog)?;
    let k = x.scalar_count();
    let zero = Rc::new(x.zero_like());
    let input = interleave(x, |i| {
        let zero = zero.clone();
        HandleM::new(move |z| StagedMap::collected(zero.one_hot(i, z)))
    });
    let stage = MapStage { zero_handle: HandleM::new(|_| StagedMap::zero()) };
    let mut dom = StagedDomain::new(stage, k as SeqId);
    let out = apply_program(&mut dom, prog, input)?;
    let value = out.map_scalars(&mut |s| s.primal)?;
    let roots = seeds(&out, ct)?;
    drop(out);

    counters::reset();
    let mut s = StagedMap::zero();
    for (sc, c) in roots {
        s = staged_plus(s, staged_call(sc.id, sc.handle, c))?;
    }
    let seeded_calls = counters::calls();
    let mut tally = Tally::with_ids(dom.next);
    let collector = resolve_with(s, &mut tally)?;

    let mut stats = Stats::new(Engine::Staged);
    stats.primal_ops = dom.ops;
    stats.input_scalars = k as u64;
    stats.backprops_created = dom.next - k as u64;
    stats.map_ops = counters::map_ops();
    stats.edges_traversed = counters::calls() - seeded_calls;
    tally.into_stats(&mut stats, k);
    let gradient = collector.unwrap_or_else(|| (*zero).clone());
    Ok(GradResult { value, gradient, stats, graph: None })
}
