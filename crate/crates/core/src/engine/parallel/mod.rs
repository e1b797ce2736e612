//! Fork-join parallel reverse AD.
//!
//! IDs are `(job, seq)` pairs. Every `par` allocates three fresh job IDs:
//! one for each branch and one for the continuation after the join. The
//! recorded [`JobDescr`] tree sizes a nested staging array, and the reverse
//! pass walks that tree backwards: resolve the current job, then both
//! branches of the fork that preceded it in parallel, then the job before
//! the fork.

pub mod jobs;

use std::sync::atomic::{AtomicBool, AtomicU32, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, OnceLock};

use arrayvec::ArrayVec;

pub use jobs::{id_leq, CompoundId, EdgeKind, GraphSummary, History, JobDescr, JobGraph, JobId, UnknownJob};

use super::{require_function, seeds, Engine, EngineError, GradResult, Stats};
use crate::eval::{apply_program, eval, Domain, EvalError};
use crate::lang::{NodeId, Program};
use crate::ops::OpTag;
use crate::sched::{Scheduler, Sequential, ThreadPool};
use crate::value::{Env, Value};

/// Where a contribution goes: an input scalar or a staged entry.
#[derive(Clone, Debug)]
pub enum Target {
    Input(usize),
    Node(CompoundId, Arc<ParContrib>),
}

#[derive(Clone, Debug)]
pub struct ParEdge {
    pub scale: f64,
    pub target: Target,
}

#[derive(Debug, Default)]
pub struct ParContrib {
    pub edges: ArrayVec<ParEdge, 2>,
}

impl Drop for ParContrib {
    fn drop(&mut self) {
        let mut stack: Vec<Arc<ParContrib>> = Vec::new();
        let take = |edges: &mut ArrayVec<ParEdge, 2>, stack: &mut Vec<Arc<ParContrib>>| {
            for e in edges.drain(..) {
                if let Target::Node(_, c) = e.target {
                    stack.push(c);
                }
            }
        };
        take(&mut self.edges, &mut stack);
        while let Some(node) = stack.pop() {
            if let Ok(mut c) = Arc::try_unwrap(node) {
                take(&mut c.edges, &mut stack);
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct ParScalar {
    pub primal: f64,
    pub target: Target,
}

struct ParDomain<'a, S> {
    sched: &'a S,
    jobs: &'a AtomicU64,
    jd: JobDescr,
    ops: u64,
    leaf: Arc<ParContrib>,
}

impl<'a, S: Scheduler> ParDomain<'a, S> {
    fn branch(&self, job: JobId) -> Self {
        ParDomain { sched: self.sched, jobs: self.jobs, jd: JobDescr::start(job), ops: 0, leaf: self.leaf.clone() }
    }

    fn fresh(&mut self) -> CompoundId {
        let id = CompoundId::new(self.jd.job, self.jd.count);
        self.jd.count += 1;
        id
    }
}

impl<S: Scheduler> Domain for ParDomain<'_, S> {
    type Scalar = ParScalar;

    fn constant(&mut self, r: f64) -> Result<ParScalar, EvalError> {
        let id = self.fresh();
        Ok(ParScalar { primal: r, target: Target::Node(id, self.leaf.clone()) })
    }

    fn primal(s: &ParScalar) -> f64 {
        s.primal
    }

    fn prim(&mut self, op: OpTag, args: &[ParScalar]) -> Result<ParScalar, EvalError> {
        self.ops += 1;
        let xs = [args[0].primal, args.get(1).map_or(0.0, |a| a.primal)];
        let scales = op.partials(&xs);
        let edges = args.iter().zip(scales).map(|(a, scale)| ParEdge { scale, target: a.target.clone() }).collect();
        let id = self.fresh();
        Ok(ParScalar { primal: op.apply(&xs), target: Target::Node(id, Arc::new(ParContrib { edges })) })
    }

    fn par(
        &mut self,
        prog: &Program,
        env: &Env<ParScalar>,
        left: NodeId,
        right: NodeId,
    ) -> Result<(Value<ParScalar>, Value<ParScalar>), EvalError> {
        let base = self.jobs.fetch_add(3, Ordering::Relaxed);
        let mut l = self.branch(base);
        let mut r = self.branch(base + 1);
        let (a, b) = self.sched.join(|| eval(&mut l, prog, env, left), || eval(&mut r, prog, env, right));
        self.ops += l.ops + r.ops;
        let before = std::mem::replace(&mut self.jd, JobDescr::start(base + 2));
        self.jd.history = History::Fork(Box::new(before), Box::new(l.jd), Box::new(r.jd));
        Ok((a?, b?))
    }
}

/// `f64` with atomic add (compare-and-swap on the bit pattern).
#[derive(Debug, Default)]
pub struct AtomicF64(AtomicU64);

impl AtomicF64 {
    pub fn new(v: f64) -> Self {
        AtomicF64(AtomicU64::new(v.to_bits()))
    }

    pub fn load(&self) -> f64 {
        f64::from_bits(self.0.load(Ordering::Acquire))
    }

    pub fn add(&self, d: f64) {
        let mut cur = self.0.load(Ordering::Relaxed);
        loop {
            let next = (f64::from_bits(cur) + d).to_bits();
            match self.0.compare_exchange_weak(cur, next, Ordering::AcqRel, Ordering::Relaxed) {
                Ok(_) => return,
                Err(seen) => cur = seen,
            }
        }
    }
}

#[derive(Default)]
struct Entry {
    contrib: OnceLock<Arc<ParContrib>>,
    acc: AtomicF64,
    staged: AtomicBool,
    resolved: AtomicU32,
}

/// Atomic input collector plus a staging array per job.
pub struct ParStaged {
    collector: Vec<AtomicF64>,
    staging: Vec<Vec<Entry>>,
}

impl ParStaged {
    pub fn allocate(inputs: usize, graph: &JobGraph) -> Self {
        let n = graph.jobs().max().map_or(0, |m| m as usize + 1);
        let staging = (0..n as JobId)
            .map(|j| (0..graph.count(j).unwrap_or(0)).map(|_| Entry::default()).collect())
            .collect();
        ParStaged { collector: (0..inputs).map(|_| AtomicF64::default()).collect(), staging }
    }

    fn entry(&self, id: CompoundId) -> &Entry {
        &self.staging[id.job as usize][id.seq as usize]
    }

    fn add(&self, target: &Target, d: f64) {
        match target {
            Target::Input(k) => self.collector[*k].add(d),
            Target::Node(id, node) => {
                let e = self.entry(*id);
                e.contrib.get_or_init(|| node.clone());
                e.acc.add(d);
                e.staged.store(true, Ordering::Release);
            }
        }
    }

    pub fn collector(&self) -> Vec<f64> {
        self.collector.iter().map(AtomicF64::load).collect()
    }
}

#[derive(Default)]
struct ResolveCounters {
    resolutions: AtomicU64,
    edges: AtomicU64,
    violations: AtomicU64,
    visit_order: Mutex<Vec<JobId>>,
}

struct Resolver<'a, S> {
    sched: &'a S,
    staged: &'a ParStaged,
    graph: &'a JobGraph,
    done: Vec<AtomicBool>,
    counters: ResolveCounters,
}

impl<S: Scheduler> Resolver<'_, S> {
    fn resolve_task(&self, jd: &JobDescr) {
        let mut cur = jd;
        loop {
            self.resolve_job(cur.job, cur.count);
            match &cur.history {
                History::Start => return,
                History::Fork(before, l, r) => {
                    self.sched.join(|| self.resolve_task(l), || self.resolve_task(r));
                    cur = before;
                }
            }
        }
    }

    fn resolve_job(&self, job: JobId, count: u64) {
        let c = &self.counters;
        c.visit_order.lock().expect("visit log poisoned").push(job);
        for &s in self.graph.successors(job) {
            if !self.done[s as usize].load(Ordering::Acquire) {
                c.violations.fetch_add(1, Ordering::Relaxed);
            }
        }
        for seq in (0..count).rev() {
            let here = CompoundId::new(job, seq);
            let entry = self.staged.entry(here);
            if !entry.staged.load(Ordering::Acquire) {
                continue;
            }
            entry.resolved.fetch_add(1, Ordering::Relaxed);
            c.resolutions.fetch_add(1, Ordering::Relaxed);
            let d = entry.acc.load();
            let Some(contrib) = entry.contrib.get() else { continue };
            for e in &contrib.edges {
                c.edges.fetch_add(1, Ordering::Relaxed);
                if let Target::Node(t, _) = &e.target {
                    if !self.graph.id_lt(*t, here).unwrap_or(false) {
                        c.violations.fetch_add(1, Ordering::Relaxed);
                    }
                }
                self.staged.add(&e.target, e.scale * d);
            }
        }
        self.done[job as usize].store(true, Ordering::Release);
    }
}

/// Everything a parallel run produces, for inspection beyond the gradient.
pub struct ParallelRun {
    pub result: GradResult,
    pub descr: JobDescr,
    pub graph: JobGraph,
    /// Jobs in the order their resolution started.
    pub visit_order: Vec<JobId>,
}

pub fn run_parallel<S: Scheduler>(
    prog: &Program,
    x: &Value<f64>,
    ct: &Value<f64>,
    sched: &S,
) -> Result<ParallelRun, EngineError> {
    require_function(prog)?;
    let k = x.scalar_count();
    let jobs = AtomicU64::new(1);
    let mut dom = ParDomain { sched, jobs: &jobs, jd: JobDescr::start(0), ops: 0, leaf: Arc::new(ParContrib::default()) };
    let mut pos = 0;
    let input = x
        .map_scalars(&mut |&primal| {
            pos += 1;
            ParScalar { primal, target: Target::Input(pos - 1) }
        })
        .expect("input is first-order");
    let out = apply_program(&mut dom, prog, input)?;
    let value = out.map_scalars(&mut |s| s.primal)?;
    let roots = seeds(&out, ct)?;
    drop(out);
    let descr = std::mem::replace(&mut dom.jd, JobDescr::start(0));

    let graph = JobGraph::from_descr(&descr);
    let staged = ParStaged::allocate(k, &graph);
    for (s, c) in &roots {
        staged.add(&s.target, *c);
    }
    drop(roots);
    let resolver = Resolver {
        sched,
        staged: &staged,
        graph: &graph,
        done: (0..staged.staging.len()).map(|_| AtomicBool::new(false)).collect(),
        counters: ResolveCounters::default(),
    };
    resolver.resolve_task(&descr);

    let collector = staged.collector();
    let gradient = x.rebuild(|i| collector[i]);
    let entries: u64 = staged.staging.iter().map(|j| j.len() as u64).sum();
    let counts: Vec<u64> = (0..k as u64)
        .map(|_| 0)
        .chain(staged.staging.iter().flatten().map(|e| e.resolved.load(Ordering::Relaxed) as u64))
        .collect();
    let c = resolver.counters;
    let mut stats = Stats::new(Engine::Parallel { threads: sched.threads() });
    stats.primal_ops = dom.ops;
    stats.input_scalars = k as u64;
    stats.backprops_created = entries;
    stats.tape_len = entries;
    stats.slots_resolved = entries;
    stats.resolutions = c.resolutions.into_inner();
    stats.edges_traversed = c.edges.into_inner();
    stats.order_violations = c.violations.into_inner();
    stats.absorb_counts(&counts, k);
    let visit_order = c.visit_order.into_inner().expect("visit log poisoned");
    let summary = GraphSummary::canonical(&descr);
    Ok(ParallelRun {
        result: GradResult { value, gradient, stats, graph: Some(summary) },
        descr,
        graph,
        visit_order,
    })
}

/// Parallel gradient on `threads` workers (the deterministic sequential
/// scheduler when `threads <= 1`).
pub fn grad_parallel(prog: &Program, x: &Value<f64>, ct: &Value<f64>, threads: usize) -> Result<GradResult, EngineError> {
    if threads <= 1 {
        return Ok(run_parallel(prog, x, ct, &Sequential)?.result);
    }
    let pool = ThreadPool::new(threads)?;
    Ok(pool.install(|| run_parallel(prog, x, ct, &pool))?.result)
}
