//! Type checking. Produces a [`Program`]: a typed, name-resolved node arena.

use super::ast::{Expr, ExprKind, Pos};
use super::ty::Ty;
use super::TypeError;
use crate::ops::OpTag;

pub type NodeId = u32;

/// A typed expression node. Variables are de Bruijn indices into the
/// environment (0 = innermost binder).
#[derive(Clone, Debug)]
pub struct Node {
    pub ty: Ty,
    pub kind: NodeKind,
}

#[derive(Clone, Debug)]
pub enum NodeKind {
    Var(u32),
    Real(f64),
    Int(i64),
    Unit,
    Pair(NodeId, NodeId),
    Fst(NodeId),
    Snd(NodeId),
    App(NodeId, NodeId),
    /// Body sees the parameter at index 0.
    Lam { body: NodeId },
    /// Body sees the bound value at index 0.
    Let { bound: NodeId, body: NodeId },
    /// `fn_body` sees the parameter at 0 and the function itself at 1;
    /// `rest` sees the function at 0.
    LetRec { fn_body: NodeId, rest: NodeId },
    Prim { op: OpTag, args: [NodeId; 2] },
    Inl(NodeId),
    Inr(NodeId),
    /// Each branch sees the payload at index 0.
    Case { scrut: NodeId, inl: NodeId, inr: NodeId },
    Sign(NodeId),
    Nil,
    Cons(NodeId, NodeId),
    /// The cons branch sees the tail at 0 and the head at 1.
    CaseList { scrut: NodeId, nil: NodeId, cons: NodeId },
    Par(NodeId, NodeId),
}

#[derive(Clone, Debug)]
pub struct Program {
    nodes: Vec<Node>,
    root: NodeId,
}

impl Program {
    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id as usize]
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn ty(&self) -> &Ty {
        &self.node(self.root).ty
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `(input, output)` types when the program is a function.
    pub fn signature(&self) -> Option<(&Ty, &Ty)> {
        match self.ty() {
            Ty::Fun(a, b) => Some((a, b)),
            _ => None,
        }
    }

    /// Number of `par` nodes, handy for deciding whether a scheduler matters.
    pub fn par_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n.kind, NodeKind::Par(..))).count()
    }
}

pub fn typecheck(e: &Expr) -> Result<Program, TypeError> {
    let mut cx = Checker { nodes: Vec::new(), scope: Vec::new() };
    let root = cx.check(e)?;
    let prog = Program { nodes: cx.nodes, root };
    let ty = prog.ty();
    let ok = match ty {
        Ty::Fun(a, b) => a.is_first_order() && b.is_first_order(),
        other => other.is_first_order(),
    };
    if !ok {
        return Err(TypeError::HigherOrderTopLevel { ty: ty.clone() });
    }
    Ok(prog)
}

struct Checker {
    nodes: Vec<Node>,
    scope: Vec<(String, Ty)>,
}

impl Checker {
    fn push(&mut self, ty: Ty, kind: NodeKind) -> NodeId {
        self.nodes.push(Node { ty, kind });
        (self.nodes.len() - 1) as NodeId
    }

    fn ty_of(&self, id: NodeId) -> &Ty {
        &self.nodes[id as usize].ty
    }

    fn expect(&self, pos: Pos, context: &'static str, expected: &Ty, id: NodeId) -> Result<(), TypeError> {
        let found = self.ty_of(id);
        if found == expected {
            Ok(())
        } else {
            Err(TypeError::Mismatch { pos, context, expected: expected.clone(), found: found.clone() })
        }
    }

    fn with_bound<T>(&mut self, binds: &[(&str, Ty)], f: impl FnOnce(&mut Self) -> T) -> T {
        for (x, t) in binds {
            self.scope.push((x.to_string(), t.clone()));
        }
        let r = f(self);
        self.scope.truncate(self.scope.len() - binds.len());
        r
    }

    fn check(&mut self, e: &Expr) -> Result<NodeId, TypeError> {
        let pos = e.pos;
        Ok(match &e.kind {
            ExprKind::Var(x) => {
                let (depth, ty) = self
                    .scope
                    .iter()
                    .rev()
                    .enumerate()
                    .find(|(_, (name, _))| name == x)
                    .map(|(i, (_, t))| (i as u32, t.clone()))
                    .ok_or_else(|| TypeError::Unbound { pos, name: x.clone() })?;
                self.push(ty, NodeKind::Var(depth))
            }
            ExprKind::Real(r) => self.push(Ty::Real, NodeKind::Real(*r)),
            ExprKind::Int(n) => self.push(Ty::Int, NodeKind::Int(*n)),
            ExprKind::Unit => self.push(Ty::Unit, NodeKind::Unit),
            ExprKind::Pair(a, b) => {
                let a = self.check(a)?;
                let b = self.check(b)?;
                let ty = Ty::prod(self.ty_of(a).clone(), self.ty_of(b).clone());
                self.push(ty, NodeKind::Pair(a, b))
            }
            ExprKind::Par(a, b) => {
                let a = self.check(a)?;
                let b = self.check(b)?;
                let ty = Ty::prod(self.ty_of(a).clone(), self.ty_of(b).clone());
                self.push(ty, NodeKind::Par(a, b))
            }
            ExprKind::Fst(a) | ExprKind::Snd(a) => {
                let id = self.check(a)?;
                let (l, r) = match self.ty_of(id) {
                    Ty::Prod(l, r) => ((**l).clone(), (**r).clone()),
                    other => return Err(TypeError::Expected { pos, what: "a pair", found: other.clone() }),
                };
                if matches!(e.kind, ExprKind::Fst(_)) {
                    self.push(l, NodeKind::Fst(id))
                } else {
                    self.push(r, NodeKind::Snd(id))
                }
            }
            ExprKind::App(f, a) => {
                let f = self.check(f)?;
                let a = self.check(a)?;
                let (dom, cod) = match self.ty_of(f) {
                    Ty::Fun(d, c) => ((**d).clone(), (**c).clone()),
                    other => return Err(TypeError::Expected { pos, what: "a function", found: other.clone() }),
                };
                self.expect(pos, "function argument", &dom, a)?;
                self.push(cod, NodeKind::App(f, a))
            }
            ExprKind::Lam(x, t, body) => {
                let body = self.with_bound(&[(x, t.clone())], |cx| cx.check(body))?;
                let ty = Ty::fun(t.clone(), self.ty_of(body).clone());
                self.push(ty, NodeKind::Lam { body })
            }
            ExprKind::Let(x, ann, bound, body) => {
                let bound = self.check(bound)?;
                if let Some(t) = ann {
                    self.expect(pos, "let annotation", t, bound)?;
                }
                let bty = self.ty_of(bound).clone();
                let body = self.with_bound(&[(x, bty)], |cx| cx.check(body))?;
                let ty = self.ty_of(body).clone();
                self.push(ty, NodeKind::Let { bound, body })
            }
            ExprKind::LetRec { name, param, param_ty, ret_ty, body, rest } => {
                let fty = Ty::fun(param_ty.clone(), ret_ty.clone());
                let fn_body =
                    self.with_bound(&[(name, fty.clone()), (param, param_ty.clone())], |cx| cx.check(body))?;
                self.expect(body.pos, "letrec body", ret_ty, fn_body)?;
                let rest = self.with_bound(&[(name, fty)], |cx| cx.check(rest))?;
                let ty = self.ty_of(rest).clone();
                self.push(ty, NodeKind::LetRec { fn_body, rest })
            }
            ExprKind::Prim(op, args) => {
                if args.len() != op.arity() {
                    return Err(TypeError::Arity { pos, op: *op, given: args.len() });
                }
                let mut ids = [0; 2];
                for (slot, a) in ids.iter_mut().zip(args) {
                    let id = self.check(a)?;
                    self.expect(a.pos, "primitive operand", &Ty::Real, id)?;
                    *slot = id;
                }
                if op.arity() == 1 {
                    ids[1] = ids[0];
                }
                self.push(Ty::Real, NodeKind::Prim { op: *op, args: ids })
            }
            ExprKind::Inl(a, t) | ExprKind::Inr(a, t) => {
                let (l, r) = match t {
                    Ty::Sum(l, r) => (l, r),
                    other => return Err(TypeError::Expected { pos, what: "a sum type annotation", found: other.clone() }),
                };
                let id = self.check(a)?;
                if matches!(e.kind, ExprKind::Inl(..)) {
                    self.expect(pos, "inl payload", l, id)?;
                    self.push(t.clone(), NodeKind::Inl(id))
                } else {
                    self.expect(pos, "inr payload", r, id)?;
                    self.push(t.clone(), NodeKind::Inr(id))
                }
            }
            ExprKind::Case(s, x, l, y, r) => {
                let scrut = self.check(s)?;
                let (lt, rt) = match self.ty_of(scrut) {
                    Ty::Sum(a, b) => ((**a).clone(), (**b).clone()),
                    other => return Err(TypeError::Expected { pos, what: "a sum", found: other.clone() }),
                };
                let inl = self.with_bound(&[(x, lt)], |cx| cx.check(l))?;
                let inr = self.with_bound(&[(y, rt)], |cx| cx.check(r))?;
                let ty = self.ty_of(inl).clone();
                self.expect(r.pos, "case branch", &ty, inr)?;
                self.push(ty, NodeKind::Case { scrut, inl, inr })
            }
            ExprKind::Sign(a) => {
                let id = self.check(a)?;
                self.expect(pos, "sign operand", &Ty::Real, id)?;
                self.push(Ty::bool(), NodeKind::Sign(id))
            }
            ExprKind::Nil(t) => self.push(Ty::list(t.clone()), NodeKind::Nil),
            ExprKind::Cons(h, t) => {
                let h = self.check(h)?;
                let t = self.check(t)?;
                let lt = Ty::list(self.ty_of(h).clone());
                self.expect(pos, "list tail", &lt, t)?;
                self.push(lt, NodeKind::Cons(h, t))
            }
            ExprKind::CaseList(s, nil, h, t, cons) => {
                let scrut = self.check(s)?;
                let elem = match self.ty_of(scrut) {
                    Ty::List(a) => (**a).clone(),
                    other => return Err(TypeError::Expected { pos, what: "a list", found: other.clone() }),
                };
                let nil = self.check(nil)?;
                let lt = Ty::list(elem.clone());
                let cons_id = self.with_bound(&[(h, elem), (t, lt)], |cx| cx.check(cons))?;
                let ty = self.ty_of(nil).clone();
                self.expect(cons.pos, "caselist branch", &ty, cons_id)?;
                self.push(ty, NodeKind::CaseList { scrut, nil, cons: cons_id })
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parse;

    fn ty_of(src: &str) -> Result<Ty, TypeError> {
        typecheck(&parse(src).unwrap()).map(|p| p.ty().clone())
    }

    #[test]
    fn sum_product_type() {
        let t = ty_of("\\(p: (R, R)). let z = fst(p) + snd(p) in fst(p) * z").unwrap();
        assert_eq!(t, Ty::fun(Ty::prod(Ty::Real, Ty::Real), Ty::Real));
        assert_eq!(ty_of("\\(x: R). x").unwrap(), Ty::fun(Ty::Real, Ty::Real));
    }

    #[test]
    fn rejects_higher_order_signature() {
        assert!(matches!(ty_of("\\(f: R -> R). f"), Err(TypeError::HigherOrderTopLevel { .. })));
        assert!(ty_of("\\(x: R). let f = \\(y: R). y * x in f x").is_ok());
    }

    #[test]
    fn mismatch_reports_location() {
        let err = ty_of("\\(x: R).\n  fst(x)").unwrap_err();
        match err {
            TypeError::Expected { pos, .. } => assert_eq!(pos.line, 2),
            other => panic!("unexpected {other}"),
        }
        assert!(matches!(ty_of("\\(x: R). x + 1i"), Err(TypeError::Mismatch { .. })));
        assert!(matches!(ty_of("\\(x: R). y"), Err(TypeError::Unbound { .. })));
    }

    #[test]
    fn par_is_a_product() {
        assert_eq!(
            ty_of("\\(x: R). par(sin(x), ())").unwrap(),
            Ty::fun(Ty::Real, Ty::prod(Ty::Real, Ty::Unit))
        );
    }

    #[test]
    fn letrec_and_lists() {
        let src = "\\(xs: [R]). letrec sum (s: ([R], R)): R = caselist fst(s) { [] -> snd(s); h :: t -> sum (t, snd(s) + h) } in sum (xs, 0.0)";
        assert_eq!(ty_of(src).unwrap(), Ty::fun(Ty::list(Ty::Real), Ty::Real));
        assert!(ty_of("\\(x: R). case sign(x) { inl u -> 1.0; inr v -> v }").is_err());
    }
}
