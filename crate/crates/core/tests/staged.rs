use std::collections::BTreeMap;
use std::rc::Rc;

use proptest::prelude::*;

use dualgrad_core::engine::staged::cayley::{self, HandleU, Updater};
use dualgrad_core::engine::staged::map::{resolve, resolve_one, staged_call, staged_plus, HandleM, StagedMap};
use dualgrad_core::engine::staged::Staged;
use dualgrad_core::engine::tape::{resolve_tape, Contrib, Edge, Tape};
use dualgrad_core::{EngineError, Value};

fn collector(a: f64) -> Value<f64> {
    Value::pair(Value::Real(0.0), Value::pair(Value::Real(a), Value::Real(0.0)))
}

/// f1 z = (0, (z, 0)); f2 z = f1 (2z) + f1 (3z); f3 z = f2 (4z) + f1 (5z);
/// f4 z = f2 z + f3 (2z), with IDs 1..4.
fn map_backprops() -> (HandleM, HandleM, HandleM, HandleM) {
    let f1 = HandleM::new(|z| StagedMap::collected(collector(z)));
    let g = f1.clone();
    let f2 = HandleM::new(move |z| staged_plus(staged_call(1, g.clone(), 2.0 * z), staged_call(1, g.clone(), 3.0 * z)).unwrap());
    let (g1, g2) = (f1.clone(), f2.clone());
    let f3 = HandleM::new(move |z| staged_plus(staged_call(2, g2.clone(), 4.0 * z), staged_call(1, g1.clone(), 5.0 * z)).unwrap());
    let (g2, g3) = (f2.clone(), f3.clone());
    let f4 = HandleM::new(move |z| staged_plus(staged_call(2, g2.clone(), z), staged_call(3, g3.clone(), 2.0 * z)).unwrap());
    (f1, f2, f3, f4)
}

#[test]
fn four_backprops_resolve_highest_first() {
    let (_, _, _, f4) = map_backprops();
    let start = f4.call(1.0);
    assert_eq!(start.arguments(), vec![(2, 1.0), (3, 2.0)]);
    let (after_f3, popped) = resolve_one(start).unwrap();
    assert_eq!(popped, Some(3));
    assert_eq!(after_f3.arguments(), vec![(1, 10.0), (2, 9.0)]);
    assert!(after_f3.collector.is_none());
    assert_eq!(resolve(after_f3).unwrap(), Some(collector(55.0)));
}

#[test]
fn four_backprops_as_updaters() {
    type C = Value<f64>;
    let f1 = HandleU::<C>::new(|z| {
        Box::new(move |mut s: Staged<C, HandleU<C>>| {
            s.collector = s.collector.add(&collector(z)).unwrap();
            s
        }) as Updater<C>
    });
    let g = f1.clone();
    let f2 = HandleU::new(move |z| cayley::then(cayley::staged_call(1, g.clone(), 2.0 * z), cayley::staged_call(1, g.clone(), 3.0 * z)));
    let (g1, g2) = (f1.clone(), f2.clone());
    let f3 = HandleU::new(move |z| cayley::then(cayley::staged_call(2, g2.clone(), 4.0 * z), cayley::staged_call(1, g1.clone(), 5.0 * z)));
    let (g2, g3) = (f2.clone(), f3.clone());
    let f4 = HandleU::new(move |z| cayley::then(cayley::staged_call(2, g2.clone(), z), cayley::staged_call(3, g3.clone(), 2.0 * z)));
    let start = f4.call(1.0)(Staged { collector: collector(0.0), staging: BTreeMap::new() });
    assert_eq!(cayley::resolve(start), collector(55.0));
}

#[test]
fn four_backprops_on_a_tape() {
    let f1 = Contrib::leaf();
    let f2 = Contrib::new([
        Edge { scale: 2.0, target: 1, node: f1.clone() },
        Edge { scale: 3.0, target: 1, node: f1.clone() },
    ]);
    let f3 = Contrib::new([
        Edge { scale: 4.0, target: 2, node: f2.clone() },
        Edge { scale: 5.0, target: 1, node: f1.clone() },
    ]);
    let f4 = Contrib::new([Edge { scale: 1.0, target: 2, node: f2 }, Edge { scale: 2.0, target: 3, node: f3 }]);
    let mut tape = Tape::with_len(5);
    let report = resolve_tape(&mut tape, &[(4, f4, 1.0)]);
    assert_eq!(tape.slot(1).cotangent, 55.0);
    assert_eq!(tape.slot(2).cotangent, 9.0);
    assert_eq!(report.order_violations, 0);
    assert_eq!(report.resolutions, 4);
}

#[test]
fn merge_example() {
    let f1 = HandleM::new(|_| StagedMap::zero());
    let f2 = HandleM::new(|_| StagedMap::zero());
    let c = |v: f64| StagedMap::collected(Value::Real(v));
    let a = staged_plus(staged_plus(c(1.0), staged_call(1, f1.clone(), 0.5)).unwrap(), staged_call(2, f2.clone(), 0.25)).unwrap();
    let b = staged_plus(c(2.0), staged_call(2, f2, 4.0)).unwrap();
    let s = staged_plus(a, b).unwrap();
    assert_eq!(s.collector, Some(Value::Real(3.0)));
    assert_eq!(s.arguments(), vec![(1, 0.5), (2, 4.25)]);
}

#[test]
fn inconsistent_ids_are_rejected() {
    let f = HandleM::new(|_| StagedMap::zero());
    let g = HandleM::new(|_| StagedMap::zero());
    let err = staged_plus(staged_call(7, f, 1.0), staged_call(7, g, 1.0)).map(|_| ()).unwrap_err();
    assert!(matches!(err, EngineError::InconsistentId(7)));
}

#[test]
fn resolving_nothing_gives_the_zero_collector() {
    assert_eq!(resolve(StagedMap::zero()).unwrap(), None);
    let s: Staged<f64, HandleU<f64>> = Staged { collector: 0.0, staging: BTreeMap::new() };
    assert_eq!(cayley::resolve(s), 0.0);
}

/// A generated staged value: optional real collector plus `(key, arg)` entries
/// whose keys index a shared handle table, so equal keys share a handle.
#[derive(Clone, Debug)]
struct Sketch {
    collector: Option<f64>,
    entries: Vec<(u64, f64)>,
}

fn sketch() -> impl Strategy<Value = Sketch> {
    (proptest::option::of(-100.0..100.0f64), proptest::collection::vec((0u64..24, -100.0..100.0f64), 0..12))
        .prop_map(|(collector, entries)| Sketch { collector, entries })
}

fn handles() -> Rc<Vec<HandleM>> {
    thread_local! {
        static TABLE: Rc<Vec<HandleM>> = Rc::new((0..24).map(|_| HandleM::new(|_| StagedMap::zero())).collect());
    }
    TABLE.with(Rc::clone)
}

fn build(s: &Sketch) -> StagedMap {
    let table = handles();
    let mut m = s.collector.map_or_else(StagedMap::zero, |c| StagedMap::collected(Value::Real(c)));
    for &(k, a) in &s.entries {
        m = staged_plus(m, staged_call(k, table[k as usize].clone(), a)).unwrap();
    }
    m
}

fn close(a: &StagedMap, b: &StagedMap) -> bool {
    let (x, y) = (a.arguments(), b.arguments());
    let keys_equal = x.iter().map(|p| p.0).eq(y.iter().map(|p| p.0));
    let args_close = x.iter().zip(&y).all(|(p, q)| (p.1 - q.1).abs() <= 1e-12 * p.1.abs().max(q.1.abs()).max(1.0));
    let coll = match (&a.collector, &b.collector) {
        (None, None) => true,
        (Some(Value::Real(p)), Some(Value::Real(q))) => (p - q).abs() <= 1e-12 * p.abs().max(q.abs()).max(1.0),
        _ => false,
    };
    keys_equal && args_close && coll
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn zero_is_an_exact_unit(a in sketch()) {
        let left = staged_plus(StagedMap::zero(), build(&a)).unwrap();
        let right = staged_plus(build(&a), StagedMap::zero()).unwrap();
        let orig = build(&a);
        for s in [&left, &right] {
            prop_assert_eq!(s.arguments(), orig.arguments());
            prop_assert_eq!(&s.collector, &orig.collector);
        }
    }

    #[test]
    fn keys_union_and_arguments_add(a in sketch(), b in sketch()) {
        let (ma, mb) = (build(&a), build(&b));
        let mut expected: BTreeMap<u64, f64> = BTreeMap::new();
        for (k, v) in ma.arguments().into_iter().chain(mb.arguments()) {
            *expected.entry(k).or_default() += v;
        }
        let s = staged_plus(ma, mb).unwrap();
        prop_assert!(s.arguments().iter().map(|p| p.0).eq(expected.keys().copied()));
        for ((_, got), want) in s.arguments().iter().zip(expected.values()) {
            prop_assert!((got - want).abs() <= 1e-12 * got.abs().max(want.abs()).max(1.0));
        }
    }

    #[test]
    fn plus_commutes_and_associates(a in sketch(), b in sketch(), c in sketch()) {
        let ab = staged_plus(build(&a), build(&b)).unwrap();
        let ba = staged_plus(build(&b), build(&a)).unwrap();
        prop_assert!(close(&ab, &ba));
        let ab_c = staged_plus(ab, build(&c)).unwrap();
        let a_bc = staged_plus(build(&a), staged_plus(build(&b), build(&c)).unwrap()).unwrap();
        prop_assert!(close(&ab_c, &a_bc));
    }

    /// Composing updaters and applying the result to an empty value matches
    /// adding the corresponding staged values.
    #[test]
    fn updater_composition_matches_plus(entries in proptest::collection::vec((0u64..8, -10.0..10.0f64), 0..10)) {
        let h = HandleU::<f64>::new(|_| cayley::identity());
        let mut u = cayley::identity();
        let mut expected: BTreeMap<u64, f64> = BTreeMap::new();
        for &(k, a) in &entries {
            u = cayley::then(u, cayley::staged_call(k, h.clone(), a));
            *expected.entry(k).or_default() += a;
        }
        let s = u(Staged { collector: 0.0, staging: BTreeMap::new() });
        let got: Vec<_> = s.staging.iter().map(|(k, (_, a))| (*k, *a)).collect();
        let want: Vec<_> = expected.into_iter().collect();
        prop_assert_eq!(got.len(), want.len());
        for (g, w) in got.iter().zip(&want) {
            prop_assert_eq!(g.0, w.0);
            prop_assert!((g.1 - w.1).abs() <= 1e-12 * g.1.abs().max(1.0));
        }
    }
}
