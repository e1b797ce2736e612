use std::fmt;

/// Types of the source language. `Bool` is sugar for `() + ()`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Ty {
    Real,
    Int,
    Unit,
    Prod(Box<Ty>, Box<Ty>),
    Sum(Box<Ty>, Box<Ty>),
    Fun(Box<Ty>, Box<Ty>),
    List(Box<Ty>),
}

impl Ty {
    pub fn prod(a: Ty, b: Ty) -> Ty {
        Ty::Prod(Box::new(a), Box::new(b))
    }

    pub fn sum(a: Ty, b: Ty) -> Ty {
        Ty::Sum(Box::new(a), Box::new(b))
    }

    pub fn fun(a: Ty, b: Ty) -> Ty {
        Ty::Fun(Box::new(a), Box::new(b))
    }

    pub fn list(a: Ty) -> Ty {
        Ty::List(Box::new(a))
    }

    pub fn bool() -> Ty {
        Ty::sum(Ty::Unit, Ty::Unit)
    }

    /// True when no function arrow occurs anywhere in the type.
    pub fn is_first_order(&self) -> bool {
        match self {
            Ty::Real | Ty::Int | Ty::Unit => true,
            Ty::Prod(a, b) | Ty::Sum(a, b) => a.is_first_order() && b.is_first_order(),
            Ty::List(a) => a.is_first_order(),
            Ty::Fun(..) => false,
        }
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, prec: u8) -> fmt::Result {
        // prec 0: arrow position, 1: sum position, 2: atomic
        match self {
            Ty::Real => f.write_str("R"),
            Ty::Int => f.write_str("Z"),
            Ty::Unit => f.write_str("()"),
            Ty::Prod(a, b) => write!(f, "({a}, {b})"),
            Ty::List(a) => write!(f, "[{a}]"),
            Ty::Sum(a, b) => {
                if prec > 1 {
                    f.write_str("(")?;
                }
                a.fmt_prec(f, 2)?;
                f.write_str(" + ")?;
                b.fmt_prec(f, 1)?;
                if prec > 1 {
                    f.write_str(")")?;
                }
                Ok(())
            }
            Ty::Fun(a, b) => {
                if prec > 0 {
                    f.write_str("(")?;
                }
                a.fmt_prec(f, 1)?;
                f.write_str(" -> ")?;
                b.fmt_prec(f, 0)?;
                if prec > 0 {
                    f.write_str(")")?;
                }
                Ok(())
            }
        }
    }

    /// Prints the type so that it parses back as a single atom.
    pub fn atomic(&self) -> AtomicTy<'_> {
        AtomicTy(self)
    }
}

impl fmt::Display for Ty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0)
    }
}

pub struct AtomicTy<'a>(&'a Ty);

impl fmt::Display for AtomicTy<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt_prec(f, 2)
    }
}
