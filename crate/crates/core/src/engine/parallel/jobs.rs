//! Compound IDs and the fork-join job graph recorded by a parallel forward pass.

use serde::Serialize;
use thiserror::Error;

use crate::engine::staged::SeqId;

pub type JobId = u64;

/// `(job, seq)`: the `seq`th ID generated inside `job`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct CompoundId {
    pub job: JobId,
    pub seq: SeqId,
}

impl CompoundId {
    pub fn new(job: JobId, seq: SeqId) -> Self {
        CompoundId { job, seq }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum History {
    Start,
    /// The job before the fork, and the final descriptions of the two branches.
    Fork(Box<JobDescr>, Box<JobDescr>, Box<JobDescr>),
}

/// The current job, how many IDs it generated, and how it was reached.
#[derive(Clone, Debug, PartialEq)]
pub struct JobDescr {
    pub history: History,
    pub job: JobId,
    pub count: u64,
}

impl JobDescr {
    pub fn start(job: JobId) -> Self {
        JobDescr { history: History::Start, job, count: 0 }
    }

    /// Every description reachable from this one, including itself.
    pub fn walk(&self) -> Vec<&JobDescr> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(d) = stack.pop() {
            out.push(d);
            if let History::Fork(b, l, r) = &d.history {
                stack.extend([&**b, &**l, &**r]);
            }
        }
        out
    }

    /// The job a task started in: follow `before` links back to `Start`.
    pub fn first_job(&self) -> JobId {
        let mut d = self;
        while let History::Fork(b, _, _) = &d.history {
            d = b;
        }
        d.job
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeKind {
    Fork,
    Join,
}

#[derive(Debug, Clone, Error, PartialEq)]
#[error("job {0} is not part of the recorded graph")]
pub struct UnknownJob(pub JobId);

/// Jobs, their ID counts and the fork/join edges between them, with the
/// transitive closure needed to decide the job order.
#[derive(Clone, Debug)]
pub struct JobGraph {
    counts: Vec<Option<u64>>,
    edges: Vec<(JobId, JobId, EdgeKind)>,
    succs: Vec<Vec<JobId>>,
    /// `ancestors[j]` has bit `i` set when job `i` lies strictly below `j`.
    ancestors: Vec<Vec<u64>>,
}

impl JobGraph {
    pub fn from_descr(root: &JobDescr) -> Self {
        let descrs = root.walk();
        let n = descrs.iter().map(|d| d.job).max().map_or(0, |m| m as usize + 1);
        let mut counts = vec![None; n];
        let mut edges = Vec::new();
        for d in &descrs {
            counts[d.job as usize] = Some(d.count);
            if let History::Fork(b, l, r) = &d.history {
                edges.push((b.job, l.first_job(), EdgeKind::Fork));
                edges.push((b.job, r.first_job(), EdgeKind::Fork));
                edges.push((l.job, d.job, EdgeKind::Join));
                edges.push((r.job, d.job, EdgeKind::Join));
            }
        }
        let mut succs = vec![Vec::new(); n];
        let mut preds = vec![Vec::new(); n];
        let mut indegree = vec![0usize; n];
        for &(a, b, _) in &edges {
            succs[a as usize].push(b);
            preds[b as usize].push(a);
            indegree[b as usize] += 1;
        }
        let words = n.div_ceil(64);
        let mut ancestors = vec![vec![0u64; words]; n];
        let mut ready: Vec<usize> = (0..n).filter(|&j| counts[j].is_some() && indegree[j] == 0).collect();
        while let Some(j) = ready.pop() {
            for &p in &preds[j] {
                let p = p as usize;
                let (pa, ja) = if p < j {
                    let (lo, hi) = ancestors.split_at_mut(j);
                    (&lo[p], &mut hi[0])
                } else {
                    let (lo, hi) = ancestors.split_at_mut(p);
                    (&hi[0], &mut lo[j])
                };
                for (w, pw) in ja.iter_mut().zip(pa.iter()) {
                    *w |= pw;
                }
                ja[p / 64] |= 1 << (p % 64);
            }
            for &s in &succs[j] {
                let s = s as usize;
                indegree[s] -= 1;
                if indegree[s] == 0 {
                    ready.push(s);
                }
            }
        }
        JobGraph { counts, edges, succs, ancestors }
    }

    pub fn contains(&self, job: JobId) -> bool {
        self.counts.get(job as usize).is_some_and(Option::is_some)
    }

    pub fn count(&self, job: JobId) -> Option<u64> {
        self.counts.get(job as usize).copied().flatten()
    }

    pub fn jobs(&self) -> impl Iterator<Item = JobId> + '_ {
        (0..self.counts.len() as JobId).filter(|&j| self.contains(j))
    }

    pub fn job_count(&self) -> usize {
        self.jobs().count()
    }

    pub fn edges(&self) -> &[(JobId, JobId, EdgeKind)] {
        &self.edges
    }

    pub fn successors(&self, job: JobId) -> &[JobId] {
        &self.succs[job as usize]
    }

    /// Strict job order: `a` happens before `b`.
    pub fn job_lt(&self, a: JobId, b: JobId) -> bool {
        let a = a as usize;
        self.ancestors[b as usize][a / 64] & (1 << (a % 64)) != 0
    }

    fn check(&self, job: JobId) -> Result<(), UnknownJob> {
        if self.contains(job) {
            Ok(())
        } else {
            Err(UnknownJob(job))
        }
    }

    /// Lexicographic compound order: same job and smaller sequence number,
    /// or a job strictly before.
    pub fn id_leq(&self, a: CompoundId, b: CompoundId) -> Result<bool, UnknownJob> {
        self.check(a.job)?;
        self.check(b.job)?;
        Ok(if a.job == b.job { a.seq <= b.seq } else { self.job_lt(a.job, b.job) })
    }

    pub fn id_lt(&self, a: CompoundId, b: CompoundId) -> Result<bool, UnknownJob> {
        Ok(a != b && self.id_leq(a, b)?)
    }
}

/// Convenience wrapper around [`JobGraph::id_leq`].
pub fn id_leq(a: CompoundId, b: CompoundId, graph: &JobGraph) -> Result<bool, UnknownJob> {
    graph.id_leq(a, b)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct JobSummary {
    pub label: usize,
    pub count: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct EdgeSummary {
    pub from: usize,
    pub to: usize,
    pub kind: EdgeKind,
}

/// Job graph with jobs relabelled by a deterministic depth-first walk, so
/// that runs with different job-ID assignments compare equal.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GraphSummary {
    pub jobs: Vec<JobSummary>,
    pub edges: Vec<EdgeSummary>,
}

impl GraphSummary {
    /// Labels: for `Fork(before, left, right)` visit `before`, `left`,
    /// `right`, then the job itself.
    pub fn canonical(root: &JobDescr) -> Self {
        enum Frame<'a> {
            Enter(&'a JobDescr),
            Label(&'a JobDescr),
        }
        let mut order: Vec<&JobDescr> = Vec::new();
        let mut stack = vec![Frame::Enter(root)];
        while let Some(f) = stack.pop() {
            match f {
                Frame::Label(d) => order.push(d),
                Frame::Enter(d) => {
                    stack.push(Frame::Label(d));
                    if let History::Fork(b, l, r) = &d.history {
                        stack.push(Frame::Enter(r));
                        stack.push(Frame::Enter(l));
                        stack.push(Frame::Enter(b));
                    }
                }
            }
        }
        let max = order.iter().map(|d| d.job).max().map_or(0, |m| m as usize + 1);
        let mut label = vec![usize::MAX; max];
        for (i, d) in order.iter().enumerate() {
            label[d.job as usize] = i;
        }
        let jobs = order.iter().enumerate().map(|(i, d)| JobSummary { label: i, count: d.count }).collect();
        let graph = JobGraph::from_descr(root);
        let mut edges: Vec<EdgeSummary> = graph
            .edges()
            .iter()
            .map(|&(a, b, kind)| EdgeSummary { from: label[a as usize], to: label[b as usize], kind })
            .collect();
        edges.sort_by_key(|e| (e.from, e.to));
        GraphSummary { jobs, edges }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// α forks β, γ; β forks δ, ε joining in ζ; ζ and γ join in η.
    /// Job IDs follow allocation order: α0 β1 γ2 η3 δ4 ε5 ζ6.
    pub(crate) fn partial_order_descr() -> JobDescr {
        let d = |job, count| JobDescr { history: History::Start, job, count };
        let zeta = JobDescr {
            history: History::Fork(Box::new(d(1, 3)), Box::new(d(4, 2)), Box::new(d(5, 1))),
            job: 6,
            count: 2,
        };
        JobDescr { history: History::Fork(Box::new(d(0, 0)), Box::new(zeta), Box::new(d(2, 2))), job: 3, count: 1 }
    }

    #[test]
    fn order_examples() {
        let g = JobGraph::from_descr(&partial_order_descr());
        let c = CompoundId::new;
        let (beta, gamma, delta, eps, zeta) = (1, 2, 4, 5, 6);
        assert!(id_leq(c(beta, 0), c(zeta, 1), &g).unwrap());
        assert!(!id_leq(c(delta, 0), c(eps, 0), &g).unwrap());
        assert!(!id_leq(c(eps, 0), c(delta, 0), &g).unwrap());
        assert!(id_leq(c(0, 3), c(0, 3), &g).unwrap());
        assert!(id_leq(c(beta, 2), c(zeta, 0), &g).unwrap());
        assert!(!id_leq(c(gamma, 0), c(zeta, 0), &g).unwrap());
        assert_eq!(id_leq(c(99, 0), c(0, 0), &g), Err(UnknownJob(99)));
    }

    #[test]
    fn canonical_labels() {
        let s = GraphSummary::canonical(&partial_order_descr());
        let counts: Vec<u64> = s.jobs.iter().map(|j| j.count).collect();
        assert_eq!(counts, vec![0, 3, 2, 1, 2, 2, 1]);
        let edges: Vec<(usize, usize)> = s.edges.iter().map(|e| (e.from, e.to)).collect();
        assert_eq!(edges, vec![(0, 1), (0, 5), (1, 2), (1, 3), (2, 4), (3, 4), (4, 6), (5, 6)]);
    }
}
