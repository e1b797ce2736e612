//! Benchmark suites and the timing harness behind `dualgrad bench`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::Serialize;
use thiserror::Error;

use dualgrad_core::oracle::default_cotangent;
use dualgrad_core::{grad, load, with_big_stack, Engine, EngineError, GradResult, Program, Value};

/// Warmup runs discarded before timing.
pub const WARMUPS: usize = 3;
/// Timed runs; the median is reported.
pub const ITERATIONS: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    /// `x * y`, differentiated `n` times.
    ScalarMul,
    /// Dot product of two lists of length `n`.
    DotProd,
    /// Sum of `M v` for an `n × 8` matrix.
    SumMatVec,
    /// Vector rotation by a quaternion, differentiated `n` times; each
    /// differentiation runs three reverse passes, one per output scalar.
    RotVecQuat,
    /// Four particles, 1000 Euler steps each, under `par`. `n` is ignored.
    Particles,
}

pub const MATVEC_COLUMNS: usize = 8;

impl Suite {
    pub const ALL: [Suite; 5] = [Suite::ScalarMul, Suite::DotProd, Suite::SumMatVec, Suite::RotVecQuat, Suite::Particles];

    pub fn name(self) -> &'static str {
        match self {
            Suite::ScalarMul => "scalarmul",
            Suite::DotProd => "dotprod",
            Suite::SumMatVec => "summatvec",
            Suite::RotVecQuat => "rotvecquat",
            Suite::Particles => "particles",
        }
    }

    pub fn source(self) -> &'static str {
        match self {
            Suite::ScalarMul => include_str!("../programs/scalarmul.dg"),
            Suite::DotProd => include_str!("../programs/dotprod.dg"),
            Suite::SumMatVec => include_str!("../programs/summatvec.dg"),
            Suite::RotVecQuat => include_str!("../programs/rotvecquat.dg"),
            Suite::Particles => include_str!("../programs/particles.dg"),
        }
    }

    pub fn program(self) -> Program {
        load(self.source()).expect("benchmark programs are well-typed")
    }

    /// Whether `n` counts repetitions of a fixed-size gradient.
    pub fn repeats(self) -> bool {
        matches!(self, Suite::ScalarMul | Suite::RotVecQuat)
    }

    /// Input for problem size `n` (ignored by repeated and fixed-size suites).
    pub fn input(self, n: usize) -> Value<f64> {
        let r = Value::Real;
        let wave = |i: usize, k: usize| ((i * k) % 23) as f64 / 23.0 - 0.5;
        match self {
            Suite::ScalarMul => Value::pair(r(1.5), r(-0.75)),
            Suite::DotProd => {
                Value::pair(Value::list((0..n).map(|i| r(wave(i, 7)))), Value::list((0..n).map(|i| r(wave(i, 11)))))
            }
            Suite::SumMatVec => {
                let row = |i: usize| Value::list((0..MATVEC_COLUMNS).map(move |j| r(wave(i * MATVEC_COLUMNS + j, 5))));
                Value::pair(Value::list((0..n).map(row)), Value::list((0..MATVEC_COLUMNS).map(|j| r(wave(j, 3)))))
            }
            Suite::RotVecQuat => {
                let v = Value::pair(r(1.0), Value::pair(r(-2.0), r(0.5)));
                let q = Value::pair(r(0.9), Value::pair(r(0.1), Value::pair(r(-0.3), r(0.2))));
                Value::pair(v, q)
            }
            Suite::Particles => {
                let particle = |k: usize| {
                    let a = k as f64 * std::f64::consts::FRAC_PI_2 + 0.3;
                    let pos = Value::pair(r(a.cos()), r(0.8 * a.sin()));
                    let vel = Value::pair(r(-0.4 * a.sin()), r(0.5 * a.cos()));
                    Value::pair(pos, vel)
                };
                Value::list((0..4).map(particle))
            }
        }
    }

    /// Output cotangents differentiated per call: one per output scalar.
    pub fn cotangents(self, prog: &Program) -> Vec<Value<f64>> {
        match self {
            Suite::RotVecQuat => {
                let out = Value::pair(Value::Real(0.0), Value::pair(Value::Real(0.0), Value::Real(0.0)));
                (0..3).map(|k| out.one_hot(k, 1.0)).collect()
            }
            _ => vec![default_cotangent(prog).expect("scalar output")],
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error)]
#[error("unknown suite `{0}` (expected scalarmul, dotprod, summatvec, rotvecquat or particles)")]
pub struct UnknownSuite(String);

impl FromStr for Suite {
    type Err = UnknownSuite;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Suite::ALL.into_iter().find(|x| x.name() == s).ok_or_else(|| UnknownSuite(s.to_string()))
    }
}

/// One benchmark measurement.
#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub program: String,
    pub engine: String,
    pub threads: usize,
    pub n: usize,
    /// Median wall time of one timed iteration, in seconds.
    pub wall_time: f64,
    pub primal_ops: u64,
    pub input_scalars: u64,
    /// Reverse-pass edge traversals of one iteration.
    pub reverse_steps: u64,
    pub invocation_histogram: BTreeMap<u64, u64>,
    /// Sum of all gradient scalars of the last call.
    pub gradient_checksum: f64,
}

impl RunReport {
    pub fn complexity_constant(&self) -> f64 {
        self.reverse_steps as f64 / (self.primal_ops + self.input_scalars).max(1) as f64
    }
}

/// Median of `iterations` timed runs after `warmups` untimed ones.
pub fn median_time<T>(warmups: usize, iterations: usize, mut f: impl FnMut() -> T) -> Duration {
    for _ in 0..warmups {
        std::hint::black_box(f());
    }
    let mut times: Vec<Duration> = (0..iterations.max(1))
        .map(|_| {
            let t = Instant::now();
            std::hint::black_box(f());
            t.elapsed()
        })
        .collect();
    times.sort();
    times[times.len() / 2]
}

/// Harness settings.
#[derive(Clone, Copy, Debug)]
pub struct Timing {
    pub warmups: usize,
    pub iterations: usize,
}

impl Default for Timing {
    fn default() -> Self {
        Timing { warmups: WARMUPS, iterations: ITERATIONS }
    }
}

/// One iteration: all gradients a suite needs at size `n`, with the
/// counters of the last call summed over its reverse passes.
fn iteration(suite: Suite, prog: &Program, engine: Engine, x: &Value<f64>, cts: &[Value<f64>], n: usize) -> Result<GradResult, EngineError> {
    let calls = if suite.repeats() { n.max(1) } else { 1 };
    let mut last = None;
    for _ in 0..calls {
        let mut steps = 0;
        for ct in cts {
            let mut r = grad(prog, engine, x, ct)?;
            steps += r.stats.edges_traversed;
            r.stats.edges_traversed = steps;
            last = Some(r);
        }
    }
    Ok(last.expect("at least one call"))
}

/// Times `suite` at size `n` on `engine`.
pub fn measure(suite: Suite, engine: Engine, n: usize, timing: Timing) -> Result<RunReport, EngineError> {
    let prog = suite.program();
    let x = suite.input(n);
    let cts = suite.cotangents(&prog);
    with_big_stack(|| {
        let r = iteration(suite, &prog, engine, &x, &cts, n)?;
        let wall = median_time(timing.warmups, timing.iterations, || iteration(suite, &prog, engine, &x, &cts, n));
        let s = r.stats;
        Ok(RunReport {
            program: suite.name().to_string(),
            engine: engine.name().to_string(),
            threads: match engine {
                Engine::Parallel { threads } => threads,
                _ => 1,
            },
            n,
            wall_time: wall.as_secs_f64(),
            primal_ops: s.primal_ops,
            input_scalars: s.input_scalars,
            reverse_steps: s.edges_traversed,
            invocation_histogram: s.invocation_histogram,
            gradient_checksum: r.gradient.to_scalars().iter().sum(),
        })
    })
}

/// Least-squares slope of `log t` against `log n`.
pub fn scaling_exponent(points: &[(usize, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> =
        points.iter().filter(|(n, t)| *n > 0 && *t > 0.0).map(|&(n, t)| ((n as f64).ln(), t.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (sx / m, sy / m);
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Parallel speedup of `particles`: wall time at 1 thread over wall time
/// at `threads`, plus both reports.
pub fn particles_speedup(threads: usize, timing: Timing) -> Result<(f64, RunReport, RunReport), EngineError> {
    let one = measure(Suite::Particles, Engine::Parallel { threads: 1 }, 0, timing)?;
    let many = measure(Suite::Particles, Engine::Parallel { threads }, 0, timing)?;
    Ok((one.wall_time / many.wall_time, one, many))
}

/// Logical CPUs available to this process.
pub fn available_cores() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponent_of_exact_power_laws() {
        let lin: Vec<_> = [10, 20, 40, 80].iter().map(|&n| (n, n as f64 * 3.0)).collect();
        assert!((scaling_exponent(&lin).unwrap() - 1.0).abs() < 1e-12);
        let quad: Vec<_> = [10, 20, 40].iter().map(|&n| (n, (n * n) as f64)).collect();
        assert!((scaling_exponent(&quad).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(scaling_exponent(&[(10, 1.0)]), None);
    }

    #[test]
    fn suites_parse_by_name() {
        for s in Suite::ALL {
            assert_eq!(s.name().parse::<Suite>().unwrap(), s);
        }
        assert!("nope".parse::<Suite>().is_err());
    }
}
