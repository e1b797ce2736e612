//! Seeded generator of well-typed programs for fuzzing and property tests.
//!
//! Every generated program has type `(R, (R, [R])) -> R`. Bodies mix
//! sharing through `let`, `sign`/`case`, `par`, local lambdas, list folds
//! and counting loops. Partial functions are only applied to arguments kept
//! in their domain (`log(1 + t*t)`, `a / (1 + t*t)`), so values stay finite
//! unless multiplication chains overflow.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::lang::ast::build::*;
use crate::lang::{Expr, Ty};
use crate::ops::OpTag;
use crate::value::Value;

/// Source form of the input type shared by all generated programs.
pub const INPUT_TY: &str = "(R, (R, [R]))";

fn input_ty() -> Ty {
    Ty::prod(Ty::Real, Ty::prod(Ty::Real, Ty::list(Ty::Real)))
}

pub struct Generator {
    rng: ChaCha8Rng,
    fresh: usize,
    reals: Vec<String>,
    lists: Vec<String>,
}

impl Generator {
    pub fn new(seed: u64) -> Self {
        Generator { rng: ChaCha8Rng::seed_from_u64(seed), fresh: 0, reals: Vec::new(), lists: Vec::new() }
    }

    fn name(&mut self, stem: &str) -> String {
        self.fresh += 1;
        format!("{stem}{}", self.fresh)
    }

    fn literal(&mut self) -> Expr {
        real((self.rng.gen_range(-16..=16) as f64) * 0.125)
    }

    fn leaf(&mut self) -> Expr {
        if self.reals.is_empty() || self.rng.gen_bool(0.2) {
            self.literal()
        } else {
            let i = self.rng.gen_range(0..self.reals.len());
            var(&self.reals[i].clone())
        }
    }

    /// Binds `e` to a fresh name, runs `body` with the name in scope and
    /// returns `let name = e in body`.
    fn bind(&mut self, e: Expr, body: impl FnOnce(&mut Self, &str) -> Expr) -> Expr {
        let x = self.name("v");
        self.reals.push(x.clone());
        let b = body(self, &x);
        self.reals.pop();
        let_(&x, None, e, b)
    }

    /// A term of type `R` with nesting depth at most `depth`.
    pub fn real_expr(&mut self, depth: u32) -> Expr {
        if depth == 0 {
            return self.leaf();
        }
        let d = depth - 1;
        match self.rng.gen_range(0..14) {
            0 | 1 => self.leaf(),
            2 => {
                let op = [OpTag::Add, OpTag::Sub, OpTag::Mul][self.rng.gen_range(0..3)];
                let (a, b) = (self.real_expr(d), self.real_expr(d));
                prim(op, vec![a, b])
            }
            3 => {
                let op = [OpTag::Sin, OpTag::Cos, OpTag::Neg][self.rng.gen_range(0..3)];
                let a = self.real_expr(d);
                prim(op, vec![a])
            }
            4 => {
                let a = self.real_expr(d);
                prim(OpTag::Exp, vec![prim(OpTag::Sin, vec![a])])
            }
            5 => {
                let t = self.real_expr(d);
                let a = self.real_expr(d);
                let op = if self.rng.gen_bool(0.5) { OpTag::Log } else { OpTag::Sqrt };
                self.bind(t, |_, x| {
                    let safe = add(real(1.0), mul(var(x), var(x)));
                    if op == OpTag::Log {
                        prim(OpTag::Log, vec![safe])
                    } else {
                        prim(OpTag::Div, vec![a, prim(OpTag::Sqrt, vec![safe])])
                    }
                })
            }
            6 | 7 => {
                let e = self.real_expr(d);
                self.bind(e, |g, x| {
                    let body = g.real_expr(d);
                    add(body, mul(var(x), var(x)))
                })
            }
            8 => {
                let s = self.real_expr(d);
                let (l, r) = (self.real_expr(d), self.real_expr(d));
                let (u, v) = (self.name("u"), self.name("w"));
                case(sign(s), &u, l, &v, r)
            }
            9 => {
                let (l, r) = (self.real_expr(d), self.real_expr(d));
                let z = self.name("z");
                let op = [OpTag::Add, OpTag::Mul][self.rng.gen_range(0..2)];
                let pair_expr = if self.rng.gen_bool(0.7) { par(l, r) } else { pair(l, r) };
                let_(&z, None, pair_expr, prim(op, vec![fst(var(&z)), snd(var(&z))]))
            }
            10 => {
                let y = self.name("y");
                self.reals.push(y.clone());
                let body = self.real_expr(d);
                self.reals.pop();
                let f = self.name("f");
                let (a, b) = (self.real_expr(d), self.real_expr(d));
                let_(
                    &f,
                    None,
                    lam(&y, Ty::Real, body),
                    add(app(var(&f), a), app(var(&f), b)),
                )
            }
            11 if !self.lists.is_empty() => self.fold(d),
            12 => self.counting_loop(d),
            _ => {
                let a = self.real_expr(d);
                mul(a, self.leaf())
            }
        }
    }

    /// `letrec fold (l: [R]): R = caselist l { [] -> e0; h :: t -> g h + fold t } in fold xs`
    fn fold(&mut self, d: u32) -> Expr {
        let i = self.rng.gen_range(0..self.lists.len());
        let xs = self.lists[i].clone();
        let (f, l, h, t) = (self.name("fold"), self.name("l"), self.name("h"), self.name("t"));
        let nil_case = self.real_expr(d.min(1));
        self.reals.push(h.clone());
        let step = self.real_expr(d);
        self.reals.pop();
        let body = caselist(var(&l), nil_case, &h, &t, add(step, app(var(&f), var(&t))));
        letrec(&f, &l, Ty::list(Ty::Real), Ty::Real, body, app(var(&f), var(&xs)))
    }

    /// A loop running a fixed number of times, threading one real through `body`.
    fn counting_loop(&mut self, d: u32) -> Expr {
        let (f, s, done, more, acc) = (self.name("loop"), self.name("s"), self.name("d"), self.name("m"), self.name("a"));
        let n = self.rng.gen_range(1..=4) as f64;
        let init = self.real_expr(d);
        self.reals.push(acc.clone());
        let step = self.real_expr(d.min(2));
        self.reals.pop();
        let next = let_(&acc, None, snd(var(&s)), prim(OpTag::Sub, vec![step, var(&acc)]));
        let body = case(
            sign(prim(OpTag::Sub, vec![fst(var(&s)), real(0.5)])),
            &done,
            snd(var(&s)),
            &more,
            app(var(&f), pair(prim(OpTag::Sub, vec![fst(var(&s)), real(1.0)]), next)),
        );
        letrec(&f, &s, Ty::prod(Ty::Real, Ty::Real), Ty::Real, body, app(var(&f), pair(real(n), init)))
    }

    /// A closed program `\(p: (R, (R, [R]))). body`.
    pub fn program(&mut self, depth: u32) -> Expr {
        self.reals = vec!["a".into(), "b".into()];
        self.lists = vec!["xs".into()];
        let body = self.real_expr(depth);
        let body = let_("a", None, fst(var("p")), let_("b", None, fst(snd(var("p"))), let_("xs", None, snd(snd(var("p"))), body)));
        lam("p", input_ty(), body)
    }

    /// A random input for [`Generator::program`], scalars in `[-2, 2]`.
    pub fn input(&mut self) -> Value<f64> {
        let len = self.rng.gen_range(0..=4);
        let mut r = || Value::Real(self.rng.gen_range(-2.0..2.0));
        let (a, b) = (r(), r());
        let items: Vec<_> = (0..len).map(|_| r()).collect();
        Value::pair(a, Value::pair(b, Value::list(items)))
    }
}

/// Program of the given nesting depth and a matching input, both from `seed`.
pub fn program(seed: u64, depth: u32) -> (Expr, Value<f64>) {
    let mut g = Generator::new(seed);
    let e = g.program(depth);
    (e, g.input())
}

/// Random nest of `par` over real arithmetic, for job-graph properties.
pub fn par_tree(seed: u64, depth: u32) -> Expr {
    fn go(g: &mut Generator, depth: u32) -> Expr {
        if depth == 0 || g.rng.gen_bool(0.25) {
            let n = g.rng.gen_range(0..3);
            let mut e = g.leaf();
            for _ in 0..n {
                e = mul(e, g.leaf());
            }
            return e;
        }
        let (l, r) = (go(g, depth - 1), go(g, depth - 1));
        let z = g.name("z");
        let after = if g.rng.gen_bool(0.5) { go(g, depth - 1) } else { real(1.0) };
        let_(&z, None, par(l, r), add(mul(fst(var(&z)), snd(var(&z))), after))
    }
    let mut g = Generator::new(seed);
    g.reals = vec!["x".into()];
    lam("x", Ty::Real, go(&mut g, depth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::{pretty, typecheck};

    #[test]
    fn generated_programs_typecheck() {
        for seed in 0..200 {
            let (e, _) = program(seed, 5);
            typecheck(&e).unwrap_or_else(|err| panic!("seed {seed}: {err}\n{}", pretty(&e)));
            typecheck(&par_tree(seed, 4)).unwrap();
        }
    }

    #[test]
    fn seeds_are_deterministic() {
        assert_eq!(program(7, 4), program(7, 4));
    }
}
