use proptest::prelude::*;

use dualgrad_core::corpus;
use dualgrad_core::engine::parallel::{run_parallel, CompoundId, EdgeKind, JobGraph};
use dualgrad_core::gen;
use dualgrad_core::oracle::max_rel_err;
use dualgrad_core::{grad, load, typecheck, Engine, Sequential, ThreadPool, Value};

fn partial_order() -> corpus::Case {
    corpus::case("partial_order").unwrap()
}

#[test]
fn partial_order_job_graph() {
    let c = partial_order();
    let r = grad(&c.program, Engine::Parallel { threads: 1 }, &c.input, &c.ct).unwrap();
    let g = r.graph.unwrap();
    // canonical labels: α0 β1 δ2 ε3 ζ4 γ5 η6
    let counts: Vec<u64> = g.jobs.iter().map(|j| j.count).collect();
    assert_eq!(counts, vec![0, 3, 2, 1, 2, 2, 1]);
    let edges: Vec<_> = g.edges.iter().map(|e| (e.from, e.to, e.kind)).collect();
    use EdgeKind::*;
    assert_eq!(
        edges,
        vec![(0, 1, Fork), (0, 5, Fork), (1, 2, Fork), (1, 3, Fork), (2, 4, Join), (3, 4, Join), (4, 6, Join), (5, 6, Join)]
    );
}

#[test]
fn partial_order_ids() {
    let c = partial_order();
    let run = run_parallel(&c.program, &c.input, &c.ct, &Sequential).unwrap();
    let g = &run.graph;
    // allocation order: α0, β1 γ2 η3, δ4 ε5 ζ6
    let id = CompoundId::new;
    assert!(g.id_leq(id(1, 0), id(6, 1)).unwrap());
    assert!(!g.id_leq(id(4, 0), id(5, 0)).unwrap());
    assert!(!g.id_leq(id(5, 0), id(4, 0)).unwrap());
    assert!(g.id_leq(id(0, 0), id(0, 0)).unwrap());
    assert!(g.id_leq(id(99, 0), id(0, 0)).is_err());
}

#[test]
fn partial_order_visit_order() {
    let c = partial_order();
    let run = run_parallel(&c.program, &c.input, &c.ct, &Sequential).unwrap();
    // η, then ζ, δ, ε, β (left task) and γ (right task), then α
    assert_eq!(run.visit_order, vec![3, 6, 4, 5, 1, 2, 0]);
    assert_eq!(run.result.stats.order_violations, 0);
}

#[test]
fn partial_order_gradient_matches_tape() {
    let c = partial_order();
    let tape = grad(&c.program, Engine::Tape, &c.input, &c.ct).unwrap();
    for threads in [1, 2, 4] {
        let par = grad(&c.program, Engine::Parallel { threads }, &c.input, &c.ct).unwrap();
        assert!(max_rel_err(&par.gradient, &tape.gradient).unwrap() <= 1e-12);
    }
}

#[test]
fn empty_branches_get_empty_jobs() {
    let p = load(r"\(x: R). let z = par(x, 1.0) in fst(z)").unwrap();
    let r = grad(&p, Engine::Parallel { threads: 1 }, &Value::Real(2.0), &Value::Real(1.0)).unwrap();
    let g = r.graph.unwrap();
    assert_eq!(g.jobs.len(), 4);
    // labels: α0 left1 right2 join3; the constant gets an ID in the right job
    let counts: Vec<u64> = g.jobs.iter().map(|j| j.count).collect();
    assert_eq!(counts, vec![0, 0, 1, 0]);
    assert_eq!(r.gradient, Value::Real(1.0));
}

#[test]
fn without_par_it_is_the_tape() {
    for c in corpus::cases().unwrap() {
        if c.program.par_count() > 0 {
            continue;
        }
        let tape = grad(&c.program, Engine::Tape, &c.input, &c.ct).unwrap();
        let par = grad(&c.program, Engine::Parallel { threads: 2 }, &c.input, &c.ct).unwrap();
        assert!(par.gradient.eq_by(&tape.gradient, &mut |a, b| a.to_bits() == b.to_bits()), "{}", c.name);
        let g = par.graph.unwrap();
        assert_eq!(g.jobs.len(), 1);
        assert!(g.edges.is_empty());
    }
}

#[test]
fn corpus_across_thread_counts() {
    for c in corpus::cases().unwrap() {
        let tape = grad(&c.program, Engine::Tape, &c.input, &c.ct).unwrap();
        let mut shapes = Vec::new();
        for threads in [1, 2, 4] {
            let r = grad(&c.program, Engine::Parallel { threads }, &c.input, &c.ct).unwrap();
            assert!(max_rel_err(&r.gradient, &tape.gradient).unwrap() <= 1e-9, "{} at {threads}", c.name);
            shapes.push(r.graph.unwrap());
        }
        assert!(shapes.windows(2).all(|w| w[0] == w[1]), "{}", c.name);
    }
}

#[test]
fn repeated_pool_runs_have_one_shape() {
    let pool = ThreadPool::new(4).unwrap();
    for c in corpus::cases().unwrap().into_iter().filter(|c| c.program.par_count() > 0) {
        let first = pool.install(|| run_parallel(&c.program, &c.input, &c.ct, &pool)).unwrap().result.graph;
        for _ in 0..10 {
            let again = pool.install(|| run_parallel(&c.program, &c.input, &c.ct, &pool)).unwrap().result.graph;
            assert_eq!(again, first, "{}", c.name);
        }
    }
}

#[test]
fn par_and_pair_have_the_same_gradient() {
    let with_par = load(r"\(p: (R, R)). let z = par(sin(fst(p)) * snd(p), exp(snd(p))) in fst(z) + fst(z) * snd(z)").unwrap();
    let with_pair = load(r"\(p: (R, R)). let z = (sin(fst(p)) * snd(p), exp(snd(p))) in fst(z) + fst(z) * snd(z)").unwrap();
    let x = Value::pair(Value::Real(0.3), Value::Real(-1.2));
    let one = Value::Real(1.0);
    for threads in [1, 4] {
        let a = grad(&with_par, Engine::Parallel { threads }, &x, &one).unwrap();
        let b = grad(&with_pair, Engine::Parallel { threads }, &x, &one).unwrap();
        assert!(max_rel_err(&a.gradient, &b.gradient).unwrap() <= 1e-9);
    }
}

fn graph_for(seed: u64) -> JobGraph {
    let e = gen::par_tree(seed, 4);
    let p = typecheck(&e).unwrap();
    run_parallel(&p, &Value::Real(0.7), &Value::Real(1.0), &Sequential).unwrap().graph
}

fn ids(g: &JobGraph) -> Vec<CompoundId> {
    g.jobs().flat_map(|j| (0..g.count(j).unwrap().max(1)).map(move |s| CompoundId::new(j, s))).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn id_order_is_a_partial_order(seed in any::<u64>()) {
        let g = graph_for(seed);
        let ids = ids(&g);
        let leq = |a, b| g.id_leq(a, b).unwrap();
        for &a in &ids {
            prop_assert!(leq(a, a));
            for &b in &ids {
                if a != b && leq(a, b) {
                    prop_assert!(!leq(b, a));
                }
                for &c in &ids {
                    if leq(a, b) && leq(b, c) {
                        prop_assert!(leq(a, c));
                    }
                }
            }
        }
    }

    #[test]
    fn pool_matches_sequential(seed in any::<u64>()) {
        let e = gen::par_tree(seed, 4);
        let p = typecheck(&e).unwrap();
        let (x, ct) = (Value::Real(0.7), Value::Real(1.0));
        let a = grad(&p, Engine::Parallel { threads: 1 }, &x, &ct).unwrap();
        let b = grad(&p, Engine::Parallel { threads: 3 }, &x, &ct).unwrap();
        prop_assert!(max_rel_err(&a.gradient, &b.gradient).unwrap() <= 1e-9);
        prop_assert_eq!(a.graph, b.graph);
    }
}
