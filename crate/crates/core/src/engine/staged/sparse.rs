//! Updater-based staging with a balanced-tree collector keyed by input ID.
//! Each input backpropagator performs one `O(log k)` insert-or-add instead of
//! walking an input-shaped value; the gradient is rebuilt from the map at the end.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use super::cayley::{run_updater_stage, HandleU, Updater};
use super::{counters, SeqId, Staged};
use crate::engine::{EngineError, GradResult};
use crate::engine::Engine;
use crate::lang::Program;
use crate::value::Value;

/// Input ID whose comparisons are counted.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CountedKey(pub SeqId);

impl Ord for CountedKey {
    fn cmp(&self, other: &Self) -> Ordering {
        counters::comparison();
        self.0.cmp(&other.0)
    }
}

impl PartialOrd for CountedKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

pub type SparseCollector = BTreeMap<CountedKey, f64>;

fn input_handle(k: usize) -> HandleU<SparseCollector> {
    HandleU::new(move |z| {
        Box::new(move |mut s: Staged<SparseCollector, _>| {
            *s.collector.entry(CountedKey(k as SeqId)).or_insert(0.0) += z;
            s
        }) as Updater<SparseCollector>
    })
}

/// Input-shaped gradient from the ID-keyed collector; absent IDs are zero.
pub fn rebuild(x: &Value<f64>, collector: &SparseCollector) -> Value<f64> {
    let mut it = collector.iter().peekable();
    x.rebuild(|i| match it.peek() {
        Some((k, v)) if k.0 == i as SeqId => {
            let v = **v;
            it.next();
            v
        }
        _ => 0.0,
    })
}

pub fn grad_staged_s(prog: &Program, x: &Value<f64>, ct: &Value<f64>) -> Result<GradResult, EngineError> {
    let (value, collector, stats) =
        run_updater_stage(Engine::Sparse, prog, x, ct, input_handle, SparseCollector::new())?;
    let gradient = rebuild(x, &collector);
    Ok(GradResult { value, gradient, stats, graph: None })
}
