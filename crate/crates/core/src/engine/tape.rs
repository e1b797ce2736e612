//! Defunctionalized backpropagators on a mutable tape.
//!
//! A backpropagator is represented by a [`Contrib`]: the list of
//! `(scale, target ID, target node)` triples it would stage. Resolving slot
//! `i` with accumulated cotangent `d` adds `scale · d` into each target slot.
//! Input cotangents end up in slots `0..k`, so no separate collector exists.

use std::sync::Arc;

use arrayvec::ArrayVec;

use super::staged::SeqId;
use super::{require_function, seeds, Engine, EngineError, GradResult, Stats};
use crate::eval::{apply_program, Domain, EvalError};
use crate::lang::Program;
use crate::ops::OpTag;
use crate::value::Value;

#[derive(Clone, Debug)]
pub struct Edge {
    pub scale: f64,
    pub target: SeqId,
    pub node: Arc<Contrib>,
}

#[derive(Debug, Default)]
pub struct Contrib {
    pub edges: ArrayVec<Edge, 2>,
}

impl Contrib {
    pub fn leaf() -> Arc<Contrib> {
        Arc::new(Contrib::default())
    }

    pub fn new(edges: impl IntoIterator<Item = Edge>) -> Arc<Contrib> {
        Arc::new(Contrib { edges: edges.into_iter().collect() })
    }
}

impl Drop for Contrib {
    fn drop(&mut self) {
        let mut stack: Vec<Arc<Contrib>> = self.edges.drain(..).map(|e| e.node).collect();
        while let Some(node) = stack.pop() {
            if let Ok(mut c) = Arc::try_unwrap(node) {
                stack.extend(c.edges.drain(..).map(|e| e.node));
            }
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Slot {
    pub contrib: Option<Arc<Contrib>>,
    pub cotangent: f64,
    pub staged: bool,
}

#[derive(Clone, Debug, Default)]
pub struct Tape {
    slots: Vec<Slot>,
}

/// Counters from one reverse sweep.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ResolveReport {
    pub edges_traversed: u64,
    pub slots_resolved: u64,
    pub resolutions: u64,
    pub order_violations: u64,
    pub staged_keys: Vec<SeqId>,
}

/// Contents of a staged slot: edges as `(scale bits, target)` plus the cotangent bits.
pub type SlotSnapshot = (SeqId, Vec<(u64, SeqId)>, u64);

impl Tape {
    /// Empty slots for a deferred-mode run.
    pub fn with_len(n: usize) -> Self {
        Tape { slots: vec![Slot::default(); n] }
    }

    /// Slots pre-filled with contributions, as written by an eager forward pass.
    pub fn from_contribs(contribs: Vec<Arc<Contrib>>) -> Self {
        Tape {
            slots: contribs.into_iter().map(|c| Slot { contrib: Some(c), ..Slot::default() }).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn slot(&self, id: SeqId) -> &Slot {
        &self.slots[id as usize]
    }

    /// Adds `d` to slot `id`, installing `node` if the slot is empty.
    pub fn stage(&mut self, id: SeqId, node: &Arc<Contrib>, d: f64) {
        let slot = &mut self.slots[id as usize];
        if slot.contrib.is_none() {
            slot.contrib = Some(node.clone());
        }
        slot.cotangent += d;
        slot.staged = true;
    }

    /// Walks slots from the highest ID down, propagating cotangents along edges.
    pub fn resolve(&mut self) -> ResolveReport {
        let mut report = ResolveReport::default();
        for i in (0..self.slots.len()).rev() {
            report.slots_resolved += 1;
            let slot = &self.slots[i];
            if !slot.staged {
                continue;
            }
            report.resolutions += 1;
            report.staged_keys.push(i as SeqId);
            let Some(contrib) = slot.contrib.clone() else { continue };
            let d = slot.cotangent;
            for e in &contrib.edges {
                report.edges_traversed += 1;
                if e.target as usize >= i {
                    report.order_violations += 1;
                }
                self.stage(e.target, &e.node, e.scale * d);
            }
        }
        report.staged_keys.reverse();
        report
    }

    /// Input-shaped gradient read from slots `0..k`.
    pub fn gradient_of_input(&self, x: &Value<f64>) -> Value<f64> {
        x.rebuild(|i| self.slots[i].cotangent)
    }

    /// Staged slots with their edges and cotangents, for comparing tapes bitwise.
    pub fn snapshot(&self) -> Vec<SlotSnapshot> {
        self.slots
            .iter()
            .enumerate()
            .filter(|(_, s)| s.staged)
            .map(|(i, s)| {
                let edges = s
                    .contrib
                    .as_ref()
                    .map(|c| c.edges.iter().map(|e| (e.scale.to_bits(), e.target)).collect())
                    .unwrap_or_default();
                (i as SeqId, edges, s.cotangent.to_bits())
            })
            .collect()
    }
}

/// Seeds the root contributions and resolves.
pub fn resolve_tape(tape: &mut Tape, roots: &[(SeqId, Arc<Contrib>, f64)]) -> ResolveReport {
    for (id, node, d) in roots {
        tape.stage(*id, node, *d);
    }
    tape.resolve()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Contribs are installed into the tape during the reverse pass.
    Deferred,
    /// Contribs are appended to the tape as they are created.
    Eager,
}

#[derive(Clone, Debug)]
pub struct TapeScalar {
    pub primal: f64,
    pub id: SeqId,
    pub contrib: Arc<Contrib>,
}

pub(crate) struct TapeDomain {
    next: SeqId,
    pub(crate) ops: u64,
    written: Option<Vec<Arc<Contrib>>>,
    leaf: Arc<Contrib>,
}

/// Local partials reusing the primal result where it is cheaper.
fn scales(op: OpTag, xs: &[f64; 2], y: f64) -> [f64; 2] {
    let s = match op {
        OpTag::Exp => [y, 0.0],
        OpTag::Sqrt => [0.5 / y, 0.0],
        OpTag::Div => [1.0 / xs[1], -y / xs[1]],
        _ => op.partials(xs),
    };
    debug_assert!(
        (0..op.arity()).all(|i| {
            let (a, b) = (s[i], op.partial(i, xs));
            a == b || (a - b).abs() <= 1e-12 * a.abs().max(b.abs()) || (a.is_nan() && b.is_nan())
        }),
        "tape scale disagrees with the derivative of {op}"
    );
    s
}

impl TapeDomain {
    pub(crate) fn new(inputs: usize, mode: Mode) -> Self {
        let leaf = Contrib::leaf();
        let written = match mode {
            Mode::Deferred => None,
            Mode::Eager => Some(vec![leaf.clone(); inputs]),
        };
        TapeDomain { next: inputs as SeqId, ops: 0, written, leaf }
    }

    fn record(&mut self, contrib: Arc<Contrib>) -> SeqId {
        let id = self.next;
        self.next += 1;
        if let Some(w) = &mut self.written {
            w.push(contrib);
        }
        id
    }
}

impl Domain for TapeDomain {
    type Scalar = TapeScalar;

    fn constant(&mut self, r: f64) -> Result<TapeScalar, EvalError> {
        let contrib = self.leaf.clone();
        let id = self.record(contrib.clone());
        Ok(TapeScalar { primal: r, id, contrib })
    }

    fn primal(s: &TapeScalar) -> f64 {
        s.primal
    }

    fn prim(&mut self, op: OpTag, args: &[TapeScalar]) -> Result<TapeScalar, EvalError> {
        self.ops += 1;
        let xs = [args[0].primal, args.get(1).map_or(0.0, |a| a.primal)];
        let y = op.apply(&xs);
        let s = scales(op, &xs, y);
        let contrib = Contrib::new(
            args.iter().zip(s).map(|(a, scale)| Edge { scale, target: a.id, node: a.contrib.clone() }),
        );
        let id = self.record(contrib.clone());
        Ok(TapeScalar { primal: y, id, contrib })
    }
}

/// Forward pass plus reverse sweep; also returns the resolved tape.
pub fn run_tape(
    prog: &Program,
    x: &Value<f64>,
    ct: &Value<f64>,
    mode: Mode,
) -> Result<(GradResult, Tape), EngineError> {
    require_function(prog)?;
    let k = x.scalar_count();
    let mut dom = TapeDomain::new(k, mode);
    let mut pos = 0;
    let leaf = dom.leaf.clone();
    let input = x
        .map_scalars(&mut |&primal| {
            let s = TapeScalar { primal, id: pos, contrib: leaf.clone() };
            pos += 1;
            s
        })
        .expect("input is first-order");
    let out = apply_program(&mut dom, prog, input)?;
    let value = out.map_scalars(&mut |s| s.primal)?;
    let roots: Vec<_> = seeds(&out, ct)?.into_iter().map(|(s, c)| (s.id, s.contrib, c)).collect();
    drop(out);

    let mut tape = match dom.written.take() {
        Some(w) => Tape::from_contribs(w),
        None => Tape::with_len(dom.next as usize),
    };
    debug_assert_eq!(tape.len() as SeqId, dom.next);
    let report = resolve_tape(&mut tape, &roots);

    let engine = if mode == Mode::Eager { Engine::TapeEager } else { Engine::Tape };
    let mut stats = Stats::new(engine);
    stats.primal_ops = dom.ops;
    stats.input_scalars = k as u64;
    stats.backprops_created = dom.next - k as u64;
    stats.tape_len = tape.len() as u64;
    stats.edges_traversed = report.edges_traversed;
    stats.slots_resolved = report.slots_resolved;
    stats.resolutions = report.resolutions;
    stats.order_violations = report.order_violations;
    let counts: Vec<u64> = (0..tape.len() as SeqId).map(|i| tape.slot(i).staged as u64).collect();
    stats.absorb_counts(&counts, k);
    stats.staged_keys = report.staged_keys;
    let gradient = tape.gradient_of_input(x);
    Ok((GradResult { value, gradient, stats, graph: None }, tape))
}

pub fn grad_tape(prog: &Program, x: &Value<f64>, ct: &Value<f64>, mode: Mode) -> Result<GradResult, EngineError> {
    run_tape(prog, x, ct, mode).map(|(r, _)| r)
}
