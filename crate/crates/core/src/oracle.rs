//! Ground-truth gradients: forward-mode dual numbers and central differences.

use thiserror::Error;

use crate::eval::{apply_program, Domain, EvalError, Plain};
use crate::lang::{Program, Ty};
use crate::ops::OpTag;
use crate::sched::Sequential;
use crate::value::{ShapeError, Value};

/// Default finite-difference step.
pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum OracleError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("tangent or cotangent does not match: {0}")]
    Shape(#[from] ShapeError),
    #[error("output of type {0} has no default cotangent; supply one")]
    NoDefaultCotangent(Ty),
}

/// A primal scalar with an attached tangent.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual {
    pub primal: f64,
    pub tangent: f64,
}

struct Forward;

impl Domain for Forward {
    type Scalar = Dual;

    fn constant(&mut self, r: f64) -> Result<Dual, EvalError> {
        Ok(Dual { primal: r, tangent: 0.0 })
    }

    fn primal(s: &Dual) -> f64 {
        s.primal
    }

    fn prim(&mut self, op: OpTag, args: &[Dual]) -> Result<Dual, EvalError> {
        let xs = [args[0].primal, args.get(1).map_or(0.0, |d| d.primal)];
        let primal = op.apply(&xs);
        let tangent = (0..op.arity()).map(|i| op.partial(i, &xs) * args[i].tangent).sum();
        Ok(Dual { primal, tangent })
    }
}

/// Output value and directional derivative of `prog` at `x` in direction `dx`.
pub fn forward_ad(
    prog: &Program,
    x: &Value<f64>,
    dx: &Value<f64>,
) -> Result<(Value<f64>, Value<f64>), OracleError> {
    let input = x.zip_map(dx, &mut |&primal, &tangent| Dual { primal, tangent })?;
    let out = apply_program(&mut Forward, prog, input)?;
    let primal = out.map_scalars(&mut |d| d.primal)?;
    let tangent = out.map_scalars(&mut |d| d.tangent)?;
    Ok((primal, tangent))
}

/// The cotangent `1.0` for real-valued programs.
pub fn default_cotangent(prog: &Program) -> Result<Value<f64>, OracleError> {
    match prog.signature() {
        Some((_, Ty::Real)) => Ok(Value::Real(1.0)),
        Some((_, t)) => Err(OracleError::NoDefaultCotangent(t.clone())),
        None => Err(EvalError::NotAFunction.into()),
    }
}

fn pair_with(out: &Value<f64>, ct: &Value<f64>) -> Result<f64, OracleError> {
    let mut acc = 0.0;
    out.zip_map(ct, &mut |a, b| acc += a * b)?;
    Ok(acc)
}

/// Gradient `ct · J` assembled from one forward pass per input scalar.
pub fn gradient_forward(prog: &Program, x: &Value<f64>, ct: &Value<f64>) -> Result<Value<f64>, OracleError> {
    let k = x.scalar_count();
    let mut g = Vec::with_capacity(k);
    for i in 0..k {
        let (_, t) = forward_ad(prog, x, &x.one_hot(i, 1.0))?;
        g.push(pair_with(&t, ct)?);
    }
    Ok(x.rebuild(|i| g[i]))
}

/// Central-difference gradient together with a flag telling whether any
/// perturbed evaluation took a different `sign` branch than the base point.
#[derive(Clone, Debug)]
pub struct FdGradient {
    pub gradient: Value<f64>,
    pub crosses_branch: bool,
}

fn traced(prog: &Program, x: &Value<f64>, ct: &Value<f64>) -> Result<(f64, Vec<bool>), OracleError> {
    let mut dom = Plain::tracing(&Sequential);
    let out = apply_program(&mut dom, prog, x.clone())?;
    Ok((pair_with(&out, ct)?, dom.trace.unwrap_or_default()))
}

pub fn gradient_fd_checked(
    prog: &Program,
    x: &Value<f64>,
    ct: &Value<f64>,
    h: f64,
) -> Result<FdGradient, OracleError> {
    let base = x.to_scalars();
    let (_, base_trace) = traced(prog, x, ct)?;
    let mut crosses_branch = false;
    let mut g = Vec::with_capacity(base.len());
    for i in 0..base.len() {
        let shifted = |d: f64| x.rebuild(|j| if j == i { base[j] + d } else { base[j] });
        let (hi, t_hi) = traced(prog, &shifted(h), ct)?;
        let (lo, t_lo) = traced(prog, &shifted(-h), ct)?;
        crosses_branch |= t_hi != base_trace || t_lo != base_trace;
        g.push((hi - lo) / (2.0 * h));
    }
    Ok(FdGradient { gradient: x.rebuild(|i| g[i]), crosses_branch })
}

pub fn gradient_fd(prog: &Program, x: &Value<f64>, ct: &Value<f64>, h: f64) -> Result<Value<f64>, OracleError> {
    Ok(gradient_fd_checked(prog, x, ct, h)?.gradient)
}

/// Relative deviation with a unit floor: `|a - b| / max(1, |a|, |b|)`.
/// Two NaNs agree; one NaN is infinitely far from anything else.
pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b || (a.is_nan() && b.is_nan()) {
        return 0.0;
    }
    if a.is_nan() || b.is_nan() {
        return f64::INFINITY;
    }
    (a - b).abs() / 1f64.max(a.abs()).max(b.abs())
}

/// Largest [`rel_err`] over matching scalars, or `None` if shapes differ.
pub fn max_rel_err(a: &Value<f64>, b: &Value<f64>) -> Option<f64> {
    let mut worst = 0.0f64;
    a.zip_map(b, &mut |x, y| worst = worst.max(rel_err(*x, *y))).ok()?;
    Some(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::load;

    const FIG1: &str = "\\(p: (R, R)). let z = fst(p) + snd(p) in fst(p) * z";

    fn p32() -> Value<f64> {
        Value::pair(Value::Real(3.0), Value::Real(2.0))
    }

    #[test]
    fn forward_on_sum_product() {
        let p = load(FIG1).unwrap();
        let dx = Value::pair(Value::Real(1.0), Value::Real(0.0));
        assert_eq!(forward_ad(&p, &p32(), &dx).unwrap(), (Value::Real(15.0), Value::Real(8.0)));
        let zero = p32().zero_like();
        assert_eq!(forward_ad(&p, &p32(), &zero).unwrap(), (Value::Real(15.0), Value::Real(0.0)));
        let id = load("\\(x: R). x").unwrap();
        assert_eq!(
            forward_ad(&id, &Value::Real(5.0), &Value::Real(1.0)).unwrap(),
            (Value::Real(5.0), Value::Real(1.0))
        );
    }

    #[test]
    fn forward_rejects_misshapen_tangent() {
        let p = load(FIG1).unwrap();
        assert!(matches!(forward_ad(&p, &p32(), &Value::Real(1.0)), Err(OracleError::Shape(_))));
    }

    #[test]
    fn forward_gradients() {
        let one = Value::Real(1.0);
        let p = load(FIG1).unwrap();
        assert_eq!(gradient_forward(&p, &p32(), &one).unwrap(), Value::pair(Value::Real(8.0), Value::Real(3.0)));
        let c = load("\\(x: R). 7.0").unwrap();
        assert_eq!(gradient_forward(&c, &Value::Real(2.5), &one).unwrap(), Value::Real(0.0));
        let chain = load("\\(x0: R). let x1 = x0 + x0 in let x2 = x1 + x1 in let x3 = x2 + x2 in x3 + x3").unwrap();
        assert_eq!(gradient_forward(&chain, &one, &one).unwrap(), Value::Real(16.0));
    }

    #[test]
    fn finite_differences() {
        let one = Value::Real(1.0);
        let p = load(FIG1).unwrap();
        let g = gradient_fd(&p, &p32(), &one, FD_STEP).unwrap().to_scalars();
        assert!((g[0] - 8.0).abs() < 1e-6 && (g[1] - 3.0).abs() < 1e-6, "{g:?}");
        let id = load("\\(x: R). x").unwrap();
        assert!((gradient_fd(&id, &Value::Real(5.0), &one, FD_STEP).unwrap().to_scalars()[0] - 1.0).abs() < 1e-9);
        let s = load("\\(x: R). sin(x)").unwrap();
        assert!((gradient_fd(&s, &Value::Real(0.0), &one, FD_STEP).unwrap().to_scalars()[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn fd_notices_branch_changes() {
        let relu = load("\\(x: R). case sign(x) { inl u -> 0.0; inr v -> x }").unwrap();
        let one = Value::Real(1.0);
        assert!(gradient_fd_checked(&relu, &Value::Real(0.0), &one, FD_STEP).unwrap().crosses_branch);
        assert!(!gradient_fd_checked(&relu, &Value::Real(0.5), &one, FD_STEP).unwrap().crosses_branch);
    }

    #[test]
    fn discrete_inputs_are_copied() {
        let p = load("\\(p: (R, Z)). fst(p) * 2.0").unwrap();
        let x = Value::pair(Value::Real(1.5), Value::Int(3));
        let g = gradient_forward(&p, &x, &Value::Real(1.0)).unwrap();
        assert_eq!(g.to_string(), "(2.0, 3i)");
    }

    #[test]
    fn relative_error_is_unit_floored() {
        assert_eq!(rel_err(1e-12, 0.0), 1e-12);
        assert_eq!(rel_err(200.0, 100.0), 0.5);
        assert_eq!(rel_err(f64::INFINITY, f64::INFINITY), 0.0);
    }
}
