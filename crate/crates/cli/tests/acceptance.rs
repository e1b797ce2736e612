//! The nine acceptance criteria, one test each. Every test prints a single
//! `[PASS]`/`[FAIL] criterion N` line straight to stderr (so it shows up even
//! when output capture is on) and then asserts.
//!
//! Tests are serialized with a lock so that the timing criteria do not
//! compete with the others for cores.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dualgrad_bench::{available_cores, measure, particles_speedup, Suite, Timing};
use dualgrad_core::corpus::{self, doubling_chain, Case};
use dualgrad_core::engine::parallel::run_parallel;
use dualgrad_core::engine::staged::map::{staged_call, staged_plus, HandleM, StagedMap};
use dualgrad_core::gen;
use dualgrad_core::oracle::{gradient_fd_checked, gradient_forward, max_rel_err, FD_STEP};
use dualgrad_core::{grad, load, typecheck, Engine, ThreadPool, Value};

static SERIAL: Mutex<()> = Mutex::new(());

const EVERY_ENGINE: [Engine; 7] = [
    Engine::Naive,
    Engine::Staged,
    Engine::Cayley,
    Engine::Sparse,
    Engine::Tape,
    Engine::TapeEager,
    Engine::Parallel { threads: 2 },
];

const STAGES: [Engine; 5] = [Engine::Staged, Engine::Cayley, Engine::Sparse, Engine::Tape, Engine::TapeEager];

fn criterion(n: u32, body: impl FnOnce() -> Result<String, String>) {
    criterion_enforced_if(n, true, body);
}

/// Prints the verdict line; the test only fails when `enforce` is set.
fn criterion_enforced_if(n: u32, enforce: bool, body: impl FnOnce() -> Result<String, String>) {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let outcome = body();
    let line = match &outcome {
        Ok(detail) => format!("[PASS] criterion {n}: {detail}"),
        Err(detail) => format!("[FAIL] criterion {n}: {detail}"),
    };
    let _ = writeln!(std::io::stderr(), "{line}");
    if let (true, Err(detail)) = (enforce, outcome) {
        panic!("criterion {n} failed: {detail}");
    }
}

fn corpus_cases() -> Result<Vec<Case>, String> {
    corpus::cases().map_err(|e| e.to_string())
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

#[test]
fn criterion_1_oracle_agreement() {
    criterion(1, || {
        let start = Instant::now();
        let cases = corpus_cases()?;
        ensure(cases.len() >= 12, || format!("corpus has only {} programs", cases.len()))?;
        for (feature, needle) in [("let-sharing", "let "), ("sign", "sign("), ("letrec", "letrec"), ("lists", "caselist"), ("par", "par(")] {
            ensure(cases.iter().any(|c| c.source.contains(needle)), || format!("no corpus program covers {feature}"))?;
        }
        ensure(cases.iter().any(|c| c.source.contains("inr")), || "no corpus program builds a coproduct".into())?;
        let (mut worst_fwd, mut worst_fd) = (0.0f64, 0.0f64);
        for c in &cases {
            let fwd = gradient_forward(&c.program, &c.input, &c.ct).map_err(|e| format!("{}: {e}", c.name))?;
            let fd = gradient_fd_checked(&c.program, &c.input, &c.ct, FD_STEP).map_err(|e| format!("{}: {e}", c.name))?;
            ensure(!fd.crosses_branch, || format!("{}: probe point straddles a sign boundary", c.name))?;
            for e in EVERY_ENGINE {
                let r = grad(&c.program, e, &c.input, &c.ct).map_err(|err| format!("{} {e}: {err}", c.name))?;
                let a = max_rel_err(&r.gradient, &fwd).ok_or("shape")?;
                let b = max_rel_err(&r.gradient, &fd.gradient).ok_or("shape")?;
                ensure(a <= 1e-9, || format!("{} {e}: {a:e} from forward mode", c.name))?;
                ensure(b <= 1e-4, || format!("{} {e}: {b:e} from finite differences", c.name))?;
                worst_fwd = worst_fwd.max(a);
                worst_fd = worst_fd.max(b);
            }
        }
        let took = start.elapsed();
        ensure(took < Duration::from_secs(10), || format!("took {took:?}"))?;
        Ok(format!(
            "{} programs x {} engines; max rel err {worst_fwd:.1e} vs forward (tol 1e-9), {worst_fd:.1e} vs fd (tol 1e-4); {took:.2?}",
            cases.len(),
            EVERY_ENGINE.len()
        ))
    });
}

#[test]
fn criterion_2_exponential_vs_linear() {
    criterion(2, || {
        let n = 14u64;
        let p = load(&doubling_chain(n as usize)).map_err(|e| e.to_string())?;
        let (x, ct) = (Value::Real(1.0), Value::Real(1.0));
        let naive = grad(&p, Engine::Naive, &x, &ct).map_err(|e| e.to_string())?;
        let want = (1u64 << (n + 1)) - 1;
        ensure(naive.stats.backprops_invoked == want, || {
            format!("naive made {} invocations, expected {want}", naive.stats.backprops_invoked)
        })?;
        for e in STAGES {
            let r = grad(&p, e, &x, &ct).map_err(|err| err.to_string())?;
            ensure(r.stats.resolutions == n + 2, || format!("{e}: {} resolutions, expected {}", r.stats.resolutions, n + 2))?;
            ensure(r.stats.max_invocations_per_backprop <= 1, || {
                format!("{e}: a backpropagator ran {} times", r.stats.max_invocations_per_backprop)
            })?;
        }
        Ok(format!("n = 14: naive {want} invocations; staged/cayley/sparse/tape/tape-eager {} resolutions, each at most once", n + 2))
    });
}

/// A staged value built from `(key, arg)` calls over a shared handle table.
fn staged(rng: &mut ChaCha8Rng, table: &[HandleM]) -> (StagedMap, Vec<(u64, f64)>) {
    let mut m = if rng.gen_bool(0.5) { StagedMap::collected(Value::Real(rng.gen_range(-10.0..10.0))) } else { StagedMap::zero() };
    let mut calls = Vec::new();
    for _ in 0..rng.gen_range(0..10) {
        let k = rng.gen_range(0..table.len() as u64);
        let a = rng.gen_range(-100.0..100.0);
        m = staged_plus(m, staged_call(k, table[k as usize].clone(), a)).expect("consistent table");
        calls.push((k, a));
    }
    (m, calls)
}

#[test]
fn criterion_3_linear_factoring() {
    criterion(3, || {
        let table: Vec<HandleM> = (0..16).map(|_| HandleM::new(|_| StagedMap::zero())).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let cases = 1000;
        let mut worst = 0.0f64;
        for i in 0..cases {
            let (a, _) = staged(&mut rng, &table);
            let (a2, _) = staged(&mut rng, &table);
            let (b, _) = staged(&mut rng, &table);
            let args = a.arguments();
            let coll = a.collector.clone();
            let unit = staged_plus(a, StagedMap::zero()).map_err(|e| e.to_string())?;
            ensure(unit.arguments() == args && unit.collector == coll, || format!("case {i}: x + 0 != x"))?;
            let unit = staged_plus(StagedMap::zero(), unit).map_err(|e| e.to_string())?;
            ensure(unit.arguments() == args && unit.collector == coll, || format!("case {i}: 0 + x != x"))?;

            let mut expected: BTreeMap<u64, f64> = BTreeMap::new();
            for (k, v) in a2.arguments().into_iter().chain(b.arguments()) {
                *expected.entry(k).or_default() += v;
            }
            let sum = staged_plus(a2, b).map_err(|e| e.to_string())?;
            let got = sum.arguments();
            ensure(got.iter().map(|p| p.0).eq(expected.keys().copied()), || format!("case {i}: key sets differ"))?;
            for ((_, g), w) in got.iter().zip(expected.values()) {
                worst = worst.max((g - w).abs() / g.abs().max(w.abs()).max(1.0));
            }
            ensure(worst <= 1e-12, || format!("case {i}: argument sum off by {worst:e}"))?;
        }
        Ok(format!("{cases} generated cases: unit law exact, key union exact, max argument error {worst:.1e} (tol 1e-12)"))
    });
}

#[test]
fn criterion_4_complexity_constant() {
    criterion(4, || {
        let mut worst = 0.0f64;
        for c in corpus_cases()? {
            let r = grad(&c.program, Engine::Tape, &c.input, &c.ct).map_err(|e| e.to_string())?;
            worst = worst.max(r.stats.complexity_constant());
        }
        let quick = Timing { warmups: 0, iterations: 1 };
        for n in [1_000, 10_000, 100_000] {
            let r = measure(Suite::DotProd, Engine::Tape, n, quick).map_err(|e| e.to_string())?;
            worst = worst.max(r.complexity_constant());
        }
        ensure(worst <= 8.0, || format!("complexity constant {worst:.2} > 8"))?;
        let mut ratios = Vec::new();
        for n in [10_000, 100_000] {
            let t1 = measure(Suite::DotProd, Engine::Tape, n, Timing::default()).map_err(|e| e.to_string())?.wall_time;
            let t2 = measure(Suite::DotProd, Engine::Tape, 2 * n, Timing::default()).map_err(|e| e.to_string())?.wall_time;
            let ratio = t2 / t1;
            ensure((1.6..=2.6).contains(&ratio), || format!("time(2n)/time(n) = {ratio:.2} at n = {n}"))?;
            ratios.push(format!("{ratio:.2} at n={n}"));
        }
        Ok(format!("max c = {worst:.2} (bound 8); dotprod time(2n)/time(n) = {} (range [1.6, 2.6])", ratios.join(", ")))
    });
}

#[test]
fn criterion_5_stage_equivalence() {
    criterion(5, || {
        let cases = corpus_cases()?;
        let mut worst = 0.0f64;
        for c in &cases {
            let runs = STAGES
                .iter()
                .map(|&e| grad(&c.program, e, &c.input, &c.ct).map(|r| (e, r)).map_err(|err| format!("{} {e}: {err}", c.name)))
                .collect::<Result<Vec<_>, _>>()?;
            let (e0, r0) = &runs[0];
            for (e, r) in &runs[1..] {
                ensure(r.stats.staged_keys == r0.stats.staged_keys, || format!("{}: {e} and {e0} staged different keys", c.name))?;
                let d = max_rel_err(&r.gradient, &r0.gradient).ok_or("shape")?;
                ensure(d <= 1e-12, || format!("{}: {e} vs {e0} differ by {d:e}", c.name))?;
                worst = worst.max(d);
            }
        }
        Ok(format!("{} programs: identical key multisets across 5 stages, max gradient difference {worst:.1e} (tol 1e-12)", cases.len()))
    });
}

#[test]
fn criterion_6_parallel_correctness() {
    criterion(6, || {
        let cases = corpus_cases()?;
        let mut worst = 0.0f64;
        for c in &cases {
            let tape = grad(&c.program, Engine::Tape, &c.input, &c.ct).map_err(|e| e.to_string())?;
            for threads in [1, 2, 4] {
                let r = grad(&c.program, Engine::Parallel { threads }, &c.input, &c.ct).map_err(|e| e.to_string())?;
                let d = max_rel_err(&r.gradient, &tape.gradient).ok_or("shape")?;
                ensure(d <= 1e-9, || format!("{} at {threads} threads: {d:e}", c.name))?;
                worst = worst.max(d);
            }
        }
        let pool = ThreadPool::new(4).map_err(|e| e.to_string())?;
        let mut checked = 0;
        for c in cases.iter().filter(|c| c.program.par_count() > 0) {
            let shape = |_| pool.install(|| run_parallel(&c.program, &c.input, &c.ct, &pool)).map(|r| r.result.graph);
            let first = shape(0).map_err(|e| e.to_string())?;
            for i in 1..10 {
                let again = shape(i).map_err(|e| e.to_string())?;
                ensure(again == first, || format!("{}: run {i} produced a different job graph", c.name))?;
            }
            checked += 1;
        }
        Ok(format!(
            "threads 1/2/4 match the tape within {worst:.1e} (tol 1e-9); {checked} par programs keep one canonical graph over 10 runs"
        ))
    });
}

#[test]
fn criterion_7_reference_job_graph() {
    criterion(7, || {
        let c = corpus::case("partial_order").ok_or("partial_order missing from corpus")?;
        let r = grad(&c.program, Engine::Parallel { threads: 1 }, &c.input, &c.ct).map_err(|e| e.to_string())?;
        let g = r.graph.ok_or("no graph")?;
        // DFS labels: α β δ ε ζ γ η
        let names = ["α", "β", "δ", "ε", "ζ", "γ", "η"];
        ensure(g.jobs.len() == names.len(), || format!("{} jobs", g.jobs.len()))?;
        let counts: Vec<(&str, u64)> = g.jobs.iter().map(|j| (names[j.label], j.count)).collect();
        let edges: Vec<(&str, &str)> = g.edges.iter().map(|e| (names[e.from], names[e.to])).collect();
        let want_counts = vec![("α", 0), ("β", 3), ("δ", 2), ("ε", 1), ("ζ", 2), ("γ", 2), ("η", 1)];
        let mut want_edges = vec![("α", "β"), ("α", "γ"), ("β", "δ"), ("β", "ε"), ("δ", "ζ"), ("ε", "ζ"), ("ζ", "η"), ("γ", "η")];
        let mut got_edges = edges.clone();
        want_edges.sort();
        got_edges.sort();
        ensure(counts == want_counts, || format!("counts {counts:?}"))?;
        ensure(got_edges == want_edges, || format!("edges {edges:?}"))?;
        let shown: Vec<String> = edges.iter().map(|(a, b)| format!("{a}→{b}")).collect();
        Ok(format!("edges {{{}}}, counts {counts:?}", shown.join(", ")))
    });
}

#[test]
fn criterion_8_parallel_speedup() {
    // The speedup target presumes at least four cores. On smaller machines
    // the measurement is still taken and reported, but not asserted.
    let cores = available_cores();
    criterion_enforced_if(8, cores >= 4, || {
        let start = Instant::now();
        let (speedup, one, four) = particles_speedup(4, Timing::default()).map_err(|e| e.to_string())?;
        let took = start.elapsed();
        let detail = format!(
            "particles speedup {speedup:.2}x at 4 threads ({:.1} ms -> {:.1} ms), {cores} core(s) available, {took:.1?}",
            one.wall_time * 1e3,
            four.wall_time * 1e3
        );
        ensure(took < Duration::from_secs(60), || format!("{detail}; exceeded 60 s"))?;
        ensure(speedup >= 1.5, || {
            let note = if cores < 4 { "; needs >= 4 cores, not asserted on this machine" } else { "" };
            format!("{detail}; need >= 1.5x{note}")
        })?;
        Ok(detail)
    });
}

#[test]
fn criterion_9_order_safety() {
    criterion(9, || {
        let mut runs = 0u64;
        let check = |p: &dualgrad_core::Program, x: &Value<f64>, ct: &Value<f64>, what: &str| -> Result<u64, String> {
            let mut n = 0;
            for e in EVERY_ENGINE.into_iter().skip(1).chain([Engine::Parallel { threads: 4 }]) {
                // `grad` turns any recorded violation into an error.
                let r = grad(p, e, x, ct).map_err(|err| format!("{what} {e}: {err}"))?;
                ensure(r.stats.order_violations == 0, || format!("{what} {e}: violations"))?;
                n += 1;
            }
            Ok(n)
        };
        for c in corpus_cases()? {
            runs += check(&c.program, &c.input, &c.ct, &c.name)?;
        }
        let fuzzed = 1000;
        for seed in 0..fuzzed {
            let (e, x) = gen::program(seed, 6);
            let p = typecheck(&e).map_err(|err| err.to_string())?;
            runs += check(&p, &x, &Value::Real(1.0), &format!("seed {seed}"))?;
        }
        Ok(format!("0 violations in {runs} runs over the corpus and {fuzzed} fuzzed programs (sequential and parallel engines)"))
    });
}
