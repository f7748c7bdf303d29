//! Grammar and scoping checks for ANF programs.

use std::fmt;

use super::{Atom, Exp, Label, LamId, Program, Var};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub label: Label,
    pub kind: ViolationKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ViolationKind {
    Unbound(String),
    /// A `let` whose right-hand side is not a call node.
    NonAtomicOperand,
    /// A literal in operator position applied to arguments.
    LiteralOperator,
    DuplicateFormal(String),
    /// A reference to a label or lambda outside the program.
    Dangling,
    /// A label reached twice, or never reached from the root.
    Shared,
    Unreached,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ViolationKind::Unbound(x) => write!(f, "label {}: unbound variable `{x}`", self.label),
            ViolationKind::NonAtomicOperand => write!(f, "label {}: let right-hand side is not a call", self.label),
            ViolationKind::LiteralOperator => write!(f, "label {}: literal applied as a function", self.label),
            ViolationKind::DuplicateFormal(x) => write!(f, "label {}: duplicate formal `{x}`", self.label),
            ViolationKind::Dangling => write!(f, "label {}: dangling reference", self.label),
            ViolationKind::Shared => write!(f, "label {}: node shared between parents", self.label),
            ViolationKind::Unreached => write!(f, "label {}: unreachable from the root", self.label),
        }
    }
}

struct Checker<'p> {
    p: &'p Program,
    seen: Vec<u8>,
    seen_lams: Vec<u8>,
    out: Vec<Violation>,
}

impl Checker<'_> {
    fn report(&mut self, label: Label, kind: ViolationKind) {
        self.out.push(Violation { label, kind });
    }

    fn enter(&mut self, at: Label, l: Label) -> bool {
        match self.seen.get_mut(l.0 as usize) {
            None => {
                self.report(at, ViolationKind::Dangling);
                false
            }
            Some(n) => {
                *n += 1;
                if *n > 1 {
                    self.report(l, ViolationKind::Shared);
                    false
                } else {
                    true
                }
            }
        }
    }

    fn atom(&mut self, at: Label, a: Atom, scope: &mut Vec<Var>) {
        match a {
            Atom::Var(v) => {
                if (v.0 as usize) >= self.p.var_count() {
                    self.report(at, ViolationKind::Dangling);
                } else if !scope.contains(&v) {
                    self.report(at, ViolationKind::Unbound(self.p.name(v).to_string()));
                }
            }
            Atom::Lam(id) => self.lam(at, id, scope),
            Atom::Lit(_) | Atom::Prim(_) => {}
        }
    }

    fn lam(&mut self, at: Label, id: LamId, scope: &mut Vec<Var>) {
        let Some(n) = self.seen_lams.get_mut(id.0 as usize) else {
            self.report(at, ViolationKind::Dangling);
            return;
        };
        *n += 1;
        if *n > 1 {
            self.report(at, ViolationKind::Shared);
            return;
        }
        let lam = self.p.lam(id);
        for (i, v) in lam.formals.iter().enumerate() {
            if lam.formals[..i].contains(v) {
                self.report(at, ViolationKind::DuplicateFormal(self.p.name(*v).to_string()));
            }
        }
        let depth = scope.len();
        scope.extend(lam.formals.iter().copied());
        if self.enter(at, lam.body) {
            self.exp(lam.body, scope);
        }
        scope.truncate(depth);
    }

    fn exp(&mut self, l: Label, scope: &mut Vec<Var>) {
        match self.p.exp(l) {
            Exp::Let { binder, call, body } => {
                if self.enter(l, *call) {
                    match self.p.exp(*call) {
                        Exp::Call(_) => self.exp(*call, scope),
                        _ => {
                            self.report(l, ViolationKind::NonAtomicOperand);
                            self.exp(*call, scope);
                        }
                    }
                }
                scope.push(*binder);
                if self.enter(l, *body) {
                    self.exp(*body, scope);
                }
                scope.pop();
            }
            Exp::Call(c) => {
                if matches!(c.func, Atom::Lit(_)) && !c.args.is_empty() {
                    self.report(l, ViolationKind::LiteralOperator);
                }
                self.atom(l, c.func, scope);
                for a in &c.args {
                    self.atom(l, *a, scope);
                }
            }
            Exp::Return(a) => self.atom(l, *a, scope),
            Exp::If { cond, then, els } => {
                self.atom(l, *cond, scope);
                for k in [*then, *els] {
                    if self.enter(l, k) {
                        self.exp(k, scope);
                    }
                }
            }
        }
    }
}

/// Check `p` against the ANF grammar. Returns every violation found.
pub fn validate_anf(p: &Program) -> Result<(), Vec<Violation>> {
    let mut c = Checker {
        p,
        seen: vec![0; p.label_count()],
        seen_lams: vec![0; p.lams().len()],
        out: Vec::new(),
    };
    let root = p.root();
    if c.enter(root, root) {
        c.exp(root, &mut Vec::new());
    }
    for (i, n) in c.seen.clone().into_iter().enumerate() {
        if n == 0 {
            c.report(Label(i as u32), ViolationKind::Unreached);
        }
    }
    if c.out.is_empty() {
        Ok(())
    } else {
        Err(c.out)
    }
}
