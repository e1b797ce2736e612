//! Primitive scalar operations and their partial derivatives.

use std::fmt;

/// The fixed set of primitive operations on reals.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OpTag {
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
}

impl OpTag {
    pub const ALL: [OpTag; 10] = [
        OpTag::Add,
        OpTag::Sub,
        OpTag::Mul,
        OpTag::Div,
        OpTag::Neg,
        OpTag::Sin,
        OpTag::Cos,
        OpTag::Exp,
        OpTag::Log,
        OpTag::Sqrt,
    ];

    pub fn arity(self) -> usize {
        match self {
            OpTag::Add | OpTag::Sub | OpTag::Mul | OpTag::Div => 2,
            _ => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            OpTag::Add => "add",
            OpTag::Sub => "sub",
            OpTag::Mul => "mul",
            OpTag::Div => "div",
            OpTag::Neg => "neg",
            OpTag::Sin => "sin",
            OpTag::Cos => "cos",
            OpTag::Exp => "exp",
            OpTag::Log => "log",
            OpTag::Sqrt => "sqrt",
        }
    }

    /// Unary operations written in call syntax, e.g. `sin(x)`.
    pub fn from_function_name(name: &str) -> Option<OpTag> {
        match name {
            "sin" => Some(OpTag::Sin),
            "cos" => Some(OpTag::Cos),
            "exp" => Some(OpTag::Exp),
            "log" => Some(OpTag::Log),
            "sqrt" => Some(OpTag::Sqrt),
            _ => None,
        }
    }

    /// Infix symbol for the binary operations.
    pub fn symbol(self) -> Option<&'static str> {
        match self {
            OpTag::Add => Some("+"),
            OpTag::Sub => Some("-"),
            OpTag::Mul => Some("*"),
            OpTag::Div => Some("/"),
            _ => None,
        }
    }

    /// Evaluates the operation. `args` must hold at least `arity()` values.
    pub fn apply(self, args: &[f64]) -> f64 {
        let x = args[0];
        match self {
            OpTag::Add => x + args[1],
            OpTag::Sub => x - args[1],
            OpTag::Mul => x * args[1],
            OpTag::Div => x / args[1],
            OpTag::Neg => -x,
            OpTag::Sin => x.sin(),
            OpTag::Cos => x.cos(),
            OpTag::Exp => x.exp(),
            OpTag::Log => x.ln(),
            OpTag::Sqrt => x.sqrt(),
        }
    }

    /// Partial derivative with respect to argument `i`, evaluated at `args`
    /// and applied to a unit cotangent.
    pub fn partial(self, i: usize, args: &[f64]) -> f64 {
        debug_assert!(i < self.arity());
        let x = args[0];
        match (self, i) {
            (OpTag::Add, _) => 1.0,
            (OpTag::Sub, 0) => 1.0,
            (OpTag::Sub, _) => -1.0,
            (OpTag::Mul, 0) => args[1],
            (OpTag::Mul, _) => x,
            (OpTag::Div, 0) => 1.0 / args[1],
            (OpTag::Div, _) => -x / (args[1] * args[1]),
            (OpTag::Neg, _) => -1.0,
            (OpTag::Sin, _) => x.cos(),
            (OpTag::Cos, _) => -x.sin(),
            (OpTag::Exp, _) => x.exp(),
            (OpTag::Log, _) => 1.0 / x,
            (OpTag::Sqrt, _) => 0.5 / x.sqrt(),
        }
    }

    /// All partials at once; unused slots are zero.
    pub fn partials(self, args: &[f64]) -> [f64; 2] {
        let mut out = [0.0; 2];
        for (i, slot) in out.iter_mut().enumerate().take(self.arity()) {
            *slot = self.partial(i, args);
        }
        out
    }
}

impl fmt::Display for OpTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}
