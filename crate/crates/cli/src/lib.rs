//! Command implementations for the `dualgrad` binary.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use dualgrad_bench::{measure, scaling_exponent, RunReport, Suite, Timing};
use dualgrad_core::oracle::{default_cotangent, gradient_fd_checked, gradient_forward, max_rel_err, FD_STEP};
use dualgrad_core::{grad, load, parse_value, run, Engine, EngineError, EvalError, Program, Sequential, Value};

/// Tolerance against forward mode.
pub const FORWARD_TOL: f64 = 1e-9;
/// Tolerance against central differences.
pub const FD_TOL: f64 = 1e-4;

#[derive(Debug, Parser)]
#[command(name = "dualgrad", version, about = "Reverse-mode AD for a small functional language")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate a program at an input.
    Eval {
        file: PathBuf,
        #[arg(long)]
        input: String,
    },
    /// Differentiate a program with one engine.
    Grad(GradArgs),
    /// Compare every engine against forward mode and finite differences.
    Check {
        file: PathBuf,
        #[arg(long)]
        input: String,
        /// Output cotangent (defaults to 1.0 for real-valued programs).
        #[arg(long)]
        ct: Option<String>,
        /// Comma-separated engine names (default: all).
        #[arg(long, value_delimiter = ',')]
        engines: Vec<String>,
        #[arg(long, default_value_t = 2)]
        threads: usize,
    },
    /// Run a benchmark suite.
    Bench {
        #[arg(long)]
        suite: Suite,
        #[arg(long, value_delimiter = ',', default_value = "1000,2000,4000,8000")]
        sizes: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "1,2,4")]
        threads: Vec<usize>,
        #[arg(long, default_value = "tape")]
        engine: String,
        #[arg(long, default_value_t = dualgrad_bench::ITERATIONS)]
        iterations: usize,
        /// Line-delimited JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug, Args)]
pub struct GradArgs {
    pub file: PathBuf,
    #[arg(long, default_value = "tape")]
    pub engine: String,
    #[arg(long)]
    pub input: String,
    #[arg(long)]
    pub ct: Option<String>,
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    #[arg(long)]
    pub eager_tape: bool,
    /// Print instrumentation counters as JSON.
    #[arg(long)]
    pub stats: bool,
}

fn load_file(path: &Path) -> Result<Program> {
    let src = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    load(&src).with_context(|| format!("in {}", path.display()))
}

fn input_and_ct(prog: &Program, input: &str, ct: Option<&str>) -> Result<(Value<f64>, Value<f64>)> {
    let (dom, cod) = prog.signature().ok_or_else(|| anyhow!("program is not a function"))?;
    let x = parse_value(input, dom).context("bad --input")?;
    let ct = match ct {
        Some(lit) => parse_value(lit, cod).context("bad --ct")?,
        None => default_cotangent(prog).context("pass --ct for programs whose output is not R")?,
    };
    Ok((x, ct))
}

fn engine_named(name: &str, eager: bool, threads: usize) -> Result<Engine> {
    Engine::from_name(name, eager, threads).ok_or_else(|| {
        anyhow!("unknown engine `{name}` (expected naive, staged, cayley, sparse, tape, tape-eager or parallel)")
    })
}

pub fn cmd_eval(file: &Path, input: &str, out: &mut impl Write) -> Result<()> {
    let prog = load_file(file)?;
    let (dom, _) = prog.signature().ok_or_else(|| anyhow!("program is not a function"))?;
    let x = parse_value(input, dom).context("bad --input")?;
    writeln!(out, "{}", run(&prog, &x, &Sequential)?)?;
    Ok(())
}

pub fn cmd_grad(args: &GradArgs, out: &mut impl Write) -> Result<()> {
    let prog = load_file(&args.file)?;
    let engine = engine_named(&args.engine, args.eager_tape, args.threads)?;
    let (x, ct) = input_and_ct(&prog, &args.input, args.ct.as_deref())?;
    let r = grad(&prog, engine, &x, &ct)?;
    writeln!(out, "value: {}", r.value)?;
    writeln!(out, "gradient: {}", r.gradient)?;
    if args.stats {
        writeln!(out, "stats: {}", serde_json::to_string(&r.stats)?)?;
        if let Some(g) = &r.graph {
            writeln!(out, "graph: {}", serde_json::to_string(g)?)?;
        }
    }
    Ok(())
}

/// Outcome of checking one engine.
#[derive(Clone, Debug, PartialEq)]
pub enum Verdict {
    Pass,
    Fail(String),
    /// The engine refused the program (naive budget).
    Skipped(String),
}

#[derive(Clone, Debug)]
pub struct EngineCheck {
    pub engine: Engine,
    pub verdict: Verdict,
    pub forward_err: Option<f64>,
    pub fd_err: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct CheckReport {
    /// The probe point is within one step of a `sign` boundary, so the
    /// finite-difference comparison was not enforced.
    pub fd_skipped: bool,
    pub engines: Vec<EngineCheck>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.engines.iter().all(|e| !matches!(e.verdict, Verdict::Fail(_)))
    }
}

pub fn check(prog: &Program, x: &Value<f64>, ct: &Value<f64>, engines: &[Engine]) -> Result<CheckReport> {
    let fwd = gradient_forward(prog, x, ct)?;
    let fd = gradient_fd_checked(prog, x, ct, FD_STEP)?;
    let mut out = Vec::new();
    for &engine in engines {
        let r = match grad(prog, engine, x, ct) {
            Ok(r) => r,
            Err(e @ EngineError::Eval(EvalError::OpBudgetExceeded { .. } | EvalError::InvocationBudgetExceeded { .. })) => {
                out.push(EngineCheck { engine, verdict: Verdict::Skipped(e.to_string()), forward_err: None, fd_err: None });
                continue;
            }
            Err(e) => {
                out.push(EngineCheck { engine, verdict: Verdict::Fail(e.to_string()), forward_err: None, fd_err: None });
                continue;
            }
        };
        let fe = max_rel_err(&r.gradient, &fwd).ok_or_else(|| anyhow!("{engine}: gradient has the wrong shape"))?;
        let de = max_rel_err(&r.gradient, &fd.gradient).ok_or_else(|| anyhow!("{engine}: gradient has the wrong shape"))?;
        let verdict = if fe > FORWARD_TOL {
            Verdict::Fail(format!("{} vs forward mode {}", r.gradient, fwd))
        } else if !fd.crosses_branch && de > FD_TOL {
            Verdict::Fail(format!("{} vs finite differences {}", r.gradient, fd.gradient))
        } else {
            Verdict::Pass
        };
        out.push(EngineCheck { engine, verdict, forward_err: Some(fe), fd_err: Some(de) });
    }
    Ok(CheckReport { fd_skipped: fd.crosses_branch, engines: out })
}

fn all_engines(threads: usize) -> Vec<Engine> {
    let mut v = Engine::SEQUENTIAL.to_vec();
    v.push(Engine::Parallel { threads });
    v
}

pub fn cmd_check(
    file: &Path,
    input: &str,
    ct: Option<&str>,
    names: &[String],
    threads: usize,
    out: &mut impl Write,
) -> Result<bool> {
    let prog = load_file(file)?;
    let (x, ct) = input_and_ct(&prog, input, ct)?;
    let engines = if names.is_empty() {
        all_engines(threads)
    } else {
        names.iter().map(|n| engine_named(n, false, threads)).collect::<Result<_>>()?
    };
    let report = check(&prog, &x, &ct, &engines)?;
    if report.fd_skipped {
        writeln!(out, "warning: input is within one finite-difference step of a sign boundary; fd check skipped")?;
    }
    let fmt_err = |e: Option<f64>| e.map_or_else(|| "-".to_string(), |v| format!("{v:.1e}"));
    for e in &report.engines {
        let (word, detail) = match &e.verdict {
            Verdict::Pass => ("pass", String::new()),
            Verdict::Fail(why) => ("FAIL", why.clone()),
            Verdict::Skipped(why) => ("skip", why.clone()),
        };
        writeln!(
            out,
            "{:<14} {word}  forward {:>8}  fd {:>8}  {detail}",
            e.engine.to_string(),
            fmt_err(e.forward_err),
            fmt_err(e.fd_err)
        )?;
    }
    Ok(report.passed())
}

/// Reports for one `bench` invocation.
pub fn bench(suite: Suite, sizes: &[usize], threads: &[usize], engine: &str, timing: Timing) -> Result<Vec<RunReport>> {
    if suite == Suite::Particles {
        return threads.iter().map(|&t| Ok(measure(suite, Engine::Parallel { threads: t }, 0, timing)?)).collect();
    }
    let engine = engine_named(engine, false, threads.first().copied().unwrap_or(1))?;
    if sizes.is_empty() {
        bail!("--sizes is empty");
    }
    sizes.iter().map(|&n| Ok(measure(suite, engine, n, timing)?)).collect()
}

pub fn cmd_bench(
    suite: Suite,
    sizes: &[usize],
    threads: &[usize],
    engine: &str,
    iterations: usize,
    json: bool,
    out: &mut impl Write,
) -> Result<()> {
    let timing = Timing { iterations, ..Timing::default() };
    let reports = bench(suite, sizes, threads, engine, timing)?;
    if json {
        for r in &reports {
            writeln!(out, "{}", serde_json::to_string(r)?)?;
        }
    } else {
        writeln!(out, "{:<11} {:<10} {:>7} {:>9} {:>12} {:>10} {:>10} {:>6}", "program", "engine", "threads", "n", "time", "ops", "reverse", "c")?;
        for r in &reports {
            writeln!(
                out,
                "{:<11} {:<10} {:>7} {:>9} {:>10.3}ms {:>10} {:>10} {:>6.2}",
                r.program,
                r.engine,
                r.threads,
                r.n,
                r.wall_time * 1e3,
                r.primal_ops,
                r.reverse_steps,
                r.complexity_constant()
            )?;
        }
    }
    if suite == Suite::Particles {
        let base = reports.iter().find(|r| r.threads == 1).map(|r| r.wall_time);
        for r in &reports {
            if let Some(b) = base {
                let s = b / r.wall_time;
                if json {
                    writeln!(out, "{}", serde_json::json!({ "suite": suite, "threads": r.threads, "speedup": s }))?;
                } else {
                    writeln!(out, "speedup at {} threads: {s:.2}x", r.threads)?;
                }
            }
        }
    } else {
        let points: Vec<_> = reports.iter().map(|r| (r.n, r.wall_time)).collect();
        if let Some(k) = scaling_exponent(&points) {
            if json {
                writeln!(out, "{}", serde_json::json!({ "suite": suite, "scaling_exponent": k }))?;
            } else {
                writeln!(out, "fitted scaling exponent: {k:.2}")?;
            }
        }
    }
    Ok(())
}

/// Runs a parsed command line; `Ok(false)` means a check failed.
pub fn execute(cli: Cli, out: &mut impl Write) -> Result<bool> {
    match cli.command {
        Command::Eval { file, input } => cmd_eval(&file, &input, out).map(|_| true),
        Command::Grad(args) => cmd_grad(&args, out).map(|_| true),
        Command::Check { file, input, ct, engines, threads } => {
            cmd_check(&file, &input, ct.as_deref(), &engines, threads, out)
        }
        Command::Bench { suite, sizes, threads, engine, iterations, json } => {
            cmd_bench(suite, &sizes, &threads, &engine, iterations, json, out).map(|_| true)
        }
    }
}
