//! Cayley-transformed staging. Backpropagators return updaters
//! `Staged -> Staged`; zero is the identity and `+` is composition, so
//! neither needs to touch a collector. The only zero collector ever built is
//! the one the composite is finally applied to.
//!
//! The handle and updater types are generic over the collector so that the
//! sparse stage can reuse them.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::rc::Rc;

use super::{counters, interleave, SeqId, Stage, Staged, StagedDomain, Tally};
use crate::engine::{require_function, seeds, Engine, EngineError, GradResult, Stats};
use crate::eval::apply_program;
use crate::lang::Program;
use crate::ops::OpTag;
use crate::value::{scalar_paths, Value};

pub type Updater<C> = Box<dyn FnOnce(Staged<C, HandleU<C>>) -> Staged<C, HandleU<C>>>;

pub struct HandleU<C>(Rc<dyn Fn(f64) -> Updater<C>>);

impl<C> Clone for HandleU<C> {
    fn clone(&self) -> Self {
        HandleU(self.0.clone())
    }
}

impl<C: 'static> HandleU<C> {
    pub fn new(f: impl Fn(f64) -> Updater<C> + 'static) -> Self {
        HandleU(Rc::new(f))
    }

    pub fn call(&self, z: f64) -> Updater<C> {
        (self.0)(z)
    }

    pub fn same(&self, other: &Self) -> bool {
        Rc::ptr_eq(&self.0, &other.0)
    }
}

pub fn identity<C: 'static>() -> Updater<C> {
    Box::new(|s| s)
}

/// Composition: apply `f`, then `g`.
pub fn then<C: 'static>(f: Updater<C>, g: Updater<C>) -> Updater<C> {
    Box::new(move |s| g(f(s)))
}

/// Updater that inserts `id ↦ (f, arg)` or adds `arg` to an existing entry.
pub fn staged_call<C: 'static>(id: SeqId, f: HandleU<C>, arg: f64) -> Updater<C> {
    counters::call();
    Box::new(move |mut s| {
        counters::map_op(1);
        match s.staging.entry(id) {
            Entry::Vacant(e) => {
                e.insert((f, arg));
            }
            Entry::Occupied(mut e) => {
                let slot = e.get_mut();
                assert!(slot.0.same(&f), "inconsistent staging: ID {id} bound to two backpropagators");
                slot.1 += arg;
            }
        }
        s
    })
}

/// Resolves highest key first until nothing is staged.
pub(crate) fn resolve_with<C: 'static>(mut s: Staged<C, HandleU<C>>, tally: &mut Tally) -> Staged<C, HandleU<C>> {
    while let Some((i, (h, a))) = s.staging.pop_last() {
        counters::map_op(1);
        tally.resolved(i);
        s = h.call(a)(s);
        tally.check_below(i, s.staging.last_key_value().map(|(k, _)| *k));
    }
    s
}

pub fn resolve<C: 'static>(s: Staged<C, HandleU<C>>) -> C {
    resolve_with(s, &mut Tally::default()).collector
}

/// Handle construction shared by the Cayley and sparse stages.
pub(crate) struct UpdaterStage<C: 'static> {
    zero_handle: HandleU<C>,
}

impl<C: 'static> UpdaterStage<C> {
    pub(crate) fn new() -> Self {
        UpdaterStage { zero_handle: HandleU::new(|_| identity()) }
    }
}

impl<C: 'static> Stage for UpdaterStage<C> {
    type Handle = HandleU<C>;

    fn constant(&mut self) -> HandleU<C> {
        self.zero_handle.clone()
    }

    fn op(&mut self, op: OpTag, xs: [f64; 2], args: Vec<(SeqId, HandleU<C>)>) -> HandleU<C> {
        let args: Rc<[(SeqId, HandleU<C>)]> = args.into();
        HandleU::new(move |z| {
            let mut u = identity();
            for (i, (id, h)) in args.iter().enumerate() {
                u = then(u, staged_call(*id, h.clone(), op.partial(i, &xs) * z));
            }
            u
        })
    }
}

/// Shared wrapper for the updater-based stages: forward pass, seeding,
/// resolve. `input_handle(k)` builds the handle of input scalar `k`.
pub(crate) fn run_updater_stage<C: 'static>(
    engine: Engine,
    prog: &Program,
    x: &Value<f64>,
    ct: &Value<f64>,
    input_handle: impl FnMut(usize) -> HandleU<C>,
    empty: C,
) -> Result<(Value<f64>, C, Stats), EngineError> {
    require_function(prog)?;
    let k = x.scalar_count();
    let input = interleave(x, input_handle);
    let mut dom = StagedDomain::new(UpdaterStage::new(), k as SeqId);
    let out = apply_program(&mut dom, prog, input)?;
    let value = out.map_scalars(&mut |s| s.primal)?;
    let roots = seeds(&out, ct)?;
    drop(out);

    counters::reset();
    let mut root = identity();
    for (sc, c) in roots {
        root = then(root, staged_call(sc.id, sc.handle, c));
    }
    let seeded_calls = counters::calls();
    let start = root(Staged { collector: empty, staging: BTreeMap::new() });
    let mut tally = Tally::with_ids(dom.next);
    let done = resolve_with(start, &mut tally);

    let mut stats = Stats::new(engine);
    stats.primal_ops = dom.ops;
    stats.input_scalars = k as u64;
    stats.backprops_created = dom.next - k as u64;
    stats.map_ops = counters::map_ops();
    stats.collector_comparisons = counters::comparisons();
    stats.edges_traversed = counters::calls() - seeded_calls;
    tally.into_stats(&mut stats, k);
    Ok((value, done.collector, stats))
}

pub fn grad_staged_c(prog: &Program, x: &Value<f64>, ct: &Value<f64>) -> Result<GradResult, EngineError> {
    let paths: Vec<Rc<[_]>> = scalar_paths(x).into_iter().map(Rc::from).collect();
    let input_handle = |k: usize| {
        let path = paths[k].clone();
        HandleU::new(move |z| {
            let path = path.clone();
            Box::new(move |mut s: Staged<Value<f64>, _>| {
                s.collector.add_at_path(&path, z);
                s
            }) as Updater<Value<f64>>
        })
    };
    let (value, gradient, stats) = run_updater_stage(Engine::Cayley, prog, x, ct, input_handle, x.zero_like())?;
    Ok(GradResult { value, gradient, stats, graph: None })
}

#[cfg(test)]
mod tests {
    use super::*;

    type S = Staged<f64, HandleU<f64>>;

    fn empty() -> S {
        Staged { collector: 0.0, staging: BTreeMap::new() }
    }

    #[test]
    fn call_inserts_then_accumulates() {
        let f = HandleU::<f64>::new(|_| identity());
        let s = staged_call(7, f.clone(), 2.5)(empty());
        assert_eq!(s.staging[&7].1, 2.5);
        let mut pre = empty();
        pre.staging.insert(7, (f.clone(), 1.0));
        let s = staged_call(7, f, 2.5)(pre);
        assert_eq!(s.staging[&7].1, 3.5);
    }

    #[test]
    fn composition_matches_sum() {
        let f = HandleU::<f64>::new(|_| identity());
        let g = HandleU::<f64>::new(|_| identity());
        let u = then(then(staged_call(1, f.clone(), 1.0), staged_call(2, g.clone(), 2.0)), staged_call(1, f, 4.0));
        let s = u(empty());
        let args: Vec<_> = s.staging.iter().map(|(k, (_, a))| (*k, *a)).collect();
        assert_eq!(args, vec![(1, 5.0), (2, 2.0)]);
    }
}
