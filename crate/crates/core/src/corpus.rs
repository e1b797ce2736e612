//! Committed example programs with probe inputs and output cotangents.
//!
//! Each `.dg` file starts with `# input: LIT` and optionally `# ct: LIT`
//! comment lines. Without a `ct` line the output must be `R` and the
//! cotangent is `1.0`.

use thiserror::Error;

use crate::lang::{load, LoadError, Program};
use crate::oracle::{default_cotangent, OracleError};
use crate::value::{parse_value, LiteralError, Value};

macro_rules! corpus_files {
    ($($name:literal),* $(,)?) => {
        &[$(($name, include_str!(concat!("../corpus/", $name, ".dg")))),*]
    };
}

/// `(name, source)` for every committed corpus program.
pub const SOURCES: &[(&str, &str)] = corpus_files![
    "sum_product",
    "identity",
    "chain3",
    "sin0",
    "const",
    "relu_sum",
    "power_loop",
    "dot",
    "summatvec",
    "partial_order",
    "rotvecquat",
    "particles_small",
    "sum_input",
    "int_input",
    "higher_order",
    "list_build",
    "par_map",
    "exp_log",
];

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{name}: {source}")]
    Load { name: String, source: LoadError },
    #[error("{name}: missing `# input:` header")]
    MissingInput { name: String },
    #[error("{name}: bad {what} literal: {source}")]
    Literal { name: String, what: &'static str, source: LiteralError },
    #[error("{name}: {source}")]
    Cotangent { name: String, source: OracleError },
    #[error("{name}: not a function")]
    NotAFunction { name: String },
}

/// A loaded corpus program with its probe point.
#[derive(Clone, Debug)]
pub struct Case {
    pub name: String,
    pub source: String,
    pub program: Program,
    pub input: Value<f64>,
    pub ct: Value<f64>,
}

fn header<'a>(src: &'a str, key: &str) -> Option<&'a str> {
    src.lines()
        .map(str::trim)
        .take_while(|l| l.starts_with('#'))
        .find_map(|l| l.trim_start_matches('#').trim().strip_prefix(key)?.strip_prefix(':').map(str::trim))
}

/// Loads a program whose header names its probe input and cotangent.
pub fn load_case(name: &str, source: &str) -> Result<Case, CorpusError> {
    let program = load(source).map_err(|source| CorpusError::Load { name: name.into(), source })?;
    let (dom, cod) = program.signature().ok_or_else(|| CorpusError::NotAFunction { name: name.into() })?;
    let lit = header(source, "input").ok_or_else(|| CorpusError::MissingInput { name: name.into() })?;
    let input =
        parse_value(lit, dom).map_err(|source| CorpusError::Literal { name: name.into(), what: "input", source })?;
    let ct = match header(source, "ct") {
        Some(lit) => {
            parse_value(lit, cod).map_err(|source| CorpusError::Literal { name: name.into(), what: "ct", source })?
        }
        None => default_cotangent(&program).map_err(|source| CorpusError::Cotangent { name: name.into(), source })?,
    };
    Ok(Case { name: name.into(), source: source.into(), program, input, ct })
}

/// The whole committed corpus.
pub fn cases() -> Result<Vec<Case>, CorpusError> {
    SOURCES.iter().map(|(n, s)| load_case(n, s)).collect()
}

/// Looks up one corpus program by name.
pub fn case(name: &str) -> Option<Case> {
    SOURCES.iter().find(|(n, _)| *n == name).map(|(n, s)| load_case(n, s).expect("committed corpus loads"))
}

/// `x_{i+1} = x_i + x_i` for `i = 0..=n`, returning `x_{n+1}`: the value is
/// `2^(n+1) · x_0` and every level shares the previous one twice.
pub fn doubling_chain(n: usize) -> String {
    let mut src = String::from("\\(x0: R). ");
    for i in 1..=n {
        src += &format!("let x{i} = x{p} + x{p} in ", p = i - 1);
    }
    src += &format!("x{n} + x{n}");
    src
}

/// Dot product of two real lists, folded with `letrec`.
pub const DOT: &str = "\\(p: ([R], [R])).
letrec dot (q: ([R], [R])): R =
  caselist fst(q) {
    [] -> 0.0;
    a :: xs -> caselist snd(q) { [] -> 0.0; b :: ys -> a * b + dot (xs, ys) }
  }
in dot p";

/// Input for [`DOT`] with `n` elements per list.
pub fn dot_input(n: usize) -> Value<f64> {
    let xs = (0..n).map(|i| Value::Real(((i % 17) as f64 - 8.0) * 0.125));
    let ys = (0..n).map(|i| Value::Real(((i % 13) as f64 + 1.0) * 0.25));
    Value::pair(Value::list(xs), Value::list(ys))
}
