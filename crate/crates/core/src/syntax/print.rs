//! Render an ANF program back to surface syntax.
//!
//! The output re-normalizes to the same program up to label renaming: a
//! `let` is printed for every non-tail call, and a tail call of a literal
//! lambda is printed as `let` when that is how the normalizer produces it.

use super::{Atom, Call, Exp, Label, Program};

struct Printer<'p> {
    p: &'p Program,
    out: String,
}

impl Printer<'_> {
    fn atom(&mut self, a: Atom) {
        match a {
            Atom::Var(v) => self.out.push_str(self.p.name(v)),
            Atom::Lit(l) => self.out.push_str(&l.to_string()),
            Atom::Prim(op) => self.out.push_str(op.name()),
            Atom::Lam(id) => {
                let lam = self.p.lam(id);
                self.out.push_str("(lambda (");
                self.names(&lam.formals);
                self.out.push_str(") ");
                self.exp(lam.body);
                self.out.push(')');
            }
        }
    }

    fn names(&mut self, vars: &[super::Var]) {
        let names: Vec<&str> = vars.iter().map(|v| self.p.name(*v)).collect();
        self.out.push_str(&names.join(" "));
    }

    fn call(&mut self, c: &Call) {
        self.out.push('(');
        self.atom(c.func);
        for a in &c.args {
            self.out.push(' ');
            self.atom(*a);
        }
        self.out.push(')');
    }

    fn prints_as_let(&self, c: &Call) -> bool {
        let Atom::Lam(id) = c.func else { return false };
        let lam = self.p.lam(id);
        !c.args.is_empty()
            && lam.formals.len() == c.args.len()
            && c.args.iter().all(|a| match a {
                Atom::Lam(arg) => self.p.lam(*arg).let_bound,
                _ => true,
            })
    }

    fn exp(&mut self, l: Label) {
        match self.p.exp(l) {
            Exp::Return(a) => self.atom(*a),
            Exp::Call(c) if self.prints_as_let(c) => {
                let Atom::Lam(id) = c.func else { unreachable!() };
                let lam = self.p.lam(id);
                self.out.push_str("(let (");
                for (i, (x, a)) in lam.formals.iter().zip(&c.args).enumerate() {
                    if i > 0 {
                        self.out.push(' ');
                    }
                    self.out.push('(');
                    self.out.push_str(self.p.name(*x));
                    self.out.push(' ');
                    self.atom(*a);
                    self.out.push(')');
                }
                self.out.push_str(") ");
                self.exp(lam.body);
                self.out.push(')');
            }
            Exp::Call(c) => self.call(c),
            Exp::Let { binder, call, body } => {
                self.out.push_str("(let ((");
                self.out.push_str(self.p.name(*binder));
                self.out.push(' ');
                match self.p.exp(*call) {
                    Exp::Call(c) => self.call(c),
                    _ => self.exp(*call),
                }
                self.out.push_str(")) ");
                self.exp(*body);
                self.out.push(')');
            }
            Exp::If { cond, then, els } => {
                self.out.push_str("(if ");
                self.atom(*cond);
                self.out.push(' ');
                self.exp(*then);
                self.out.push(' ');
                self.exp(*els);
                self.out.push(')');
            }
        }
    }
}

/// Surface text for `p`, on one line.
pub fn print_program(p: &Program) -> String {
    let mut pr = Printer { p, out: String::new() };
    pr.exp(p.root());
    pr.out
}
