//! A-normal-form programs: the surface reader, the normalizer and the
//! grammar checker.
//!
//! Programs are stored as an arena of expression nodes indexed by [`Label`].
//! Labels are assigned in post-order, so children always carry smaller
//! labels than their parents and the root carries the largest one.

mod anf;
mod print;
mod sexpr;
mod surface;
mod validate;

use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;

pub use anf::{a_normalize, NormalizeError};
pub use print::print_program;
pub use sexpr::{read_all, Datum, DatumKind, ReadError};
pub use surface::{parse, Ident, ParseError, Term, TermKind};
pub use validate::{validate_anf, Violation, ViolationKind};

/// Source position, 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize)]
pub struct Pos {
    pub line: u32,
    pub col: u32,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

/// Identity of an expression node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Label(pub u32);

/// Identity of a lambda term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct LamId(pub u32);

/// An interned variable name. Binders that share a name share a `Var`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Var(pub u32);

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for LamId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "λ{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum PrimOp {
    Add,
    Sub,
    Mul,
    NumEq,
    Lt,
    Le,
    Gt,
    Ge,
    Not,
    Print,
}

impl PrimOp {
    pub const ALL: [PrimOp; 10] = [
        PrimOp::Add,
        PrimOp::Sub,
        PrimOp::Mul,
        PrimOp::NumEq,
        PrimOp::Lt,
        PrimOp::Le,
        PrimOp::Gt,
        PrimOp::Ge,
        PrimOp::Not,
        PrimOp::Print,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PrimOp::Add => "+",
            PrimOp::Sub => "-",
            PrimOp::Mul => "*",
            PrimOp::NumEq => "=",
            PrimOp::Lt => "<",
            PrimOp::Le => "<=",
            PrimOp::Gt => ">",
            PrimOp::Ge => ">=",
            PrimOp::Not => "not",
            PrimOp::Print => "print",
        }
    }

    pub fn from_name(name: &str) -> Option<PrimOp> {
        PrimOp::ALL.into_iter().find(|op| op.name() == name)
    }

    /// Accepted argument counts as an inclusive range.
    pub fn arity(self) -> (usize, usize) {
        match self {
            PrimOp::Add | PrimOp::Mul => (1, usize::MAX),
            PrimOp::Sub => (1, 2),
            PrimOp::NumEq | PrimOp::Lt | PrimOp::Le | PrimOp::Gt | PrimOp::Ge => (2, 2),
            PrimOp::Not | PrimOp::Print => (1, 1),
        }
    }

    pub fn accepts(self, argc: usize) -> bool {
        let (lo, hi) = self.arity();
        lo <= argc && argc <= hi
    }

    /// Whether the result is a boolean (otherwise a number, or the argument
    /// itself for `print`).
    pub fn is_predicate(self) -> bool {
        matches!(
            self,
            PrimOp::NumEq | PrimOp::Lt | PrimOp::Le | PrimOp::Gt | PrimOp::Ge | PrimOp::Not
        )
    }
}

impl fmt::Display for PrimOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Lit {
    Int(i64),
    Bool(bool),
}

impl fmt::Display for Lit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Lit::Int(n) => write!(f, "{n}"),
            Lit::Bool(true) => f.write_str("#t"),
            Lit::Bool(false) => f.write_str("#f"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Atom {
    Var(Var),
    Lam(LamId),
    Lit(Lit),
    Prim(PrimOp),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Call {
    pub func: Atom,
    pub args: Vec<Atom>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Exp {
    /// Non-tail call: `call` is the label of a [`Exp::Call`] node.
    Let { binder: Var, call: Label, body: Label },
    /// Tail call.
    Call(Call),
    Return(Atom),
    If { cond: Atom, then: Label, els: Label },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Lambda {
    pub formals: Vec<Var>,
    pub body: Label,
    /// Set on lambdas bound by `let`, `letrec` or `define` in the source.
    pub let_bound: bool,
}

/// An immutable ANF program.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Program {
    exps: Vec<Exp>,
    lams: Vec<Lambda>,
    names: Vec<String>,
    root: Label,
}

impl Program {
    /// Assemble a program from raw parts without checking it. Use
    /// [`validate_anf`] to check the result.
    pub fn from_parts(exps: Vec<Exp>, lams: Vec<Lambda>, names: Vec<String>, root: Label) -> Self {
        Program {
            exps,
            lams,
            names,
            root,
        }
    }

    pub fn root(&self) -> Label {
        self.root
    }

    pub fn exp(&self, l: Label) -> &Exp {
        &self.exps[l.0 as usize]
    }

    pub fn lam(&self, id: LamId) -> &Lambda {
        &self.lams[id.0 as usize]
    }

    pub fn exps(&self) -> &[Exp] {
        &self.exps
    }

    pub fn lams(&self) -> &[Lambda] {
        &self.lams
    }

    pub fn label_count(&self) -> usize {
        self.exps.len()
    }

    pub fn var_count(&self) -> usize {
        self.names.len()
    }

    pub fn vars(&self) -> impl Iterator<Item = Var> + '_ {
        (0..self.names.len() as u32).map(Var)
    }

    pub fn name(&self, v: Var) -> &str {
        &self.names[v.0 as usize]
    }

    pub fn lookup_var(&self, name: &str) -> Option<Var> {
        self.names.iter().position(|n| n == name).map(|i| Var(i as u32))
    }

    /// The tail call at `l`, if `l` is a tail call node.
    pub fn call(&self, l: Label) -> Option<&Call> {
        match self.exp(l) {
            Exp::Call(c) => Some(c),
            _ => None,
        }
    }

    /// Labels of every `Exp` node in the subtree rooted at `l`, including
    /// the bodies of nested lambdas.
    pub fn subtree(&self, l: Label) -> Vec<Label> {
        let mut out = Vec::new();
        let mut stack = vec![l];
        while let Some(l) = stack.pop() {
            out.push(l);
            let atoms: Vec<Atom> = match self.exp(l) {
                Exp::Let { call, body, .. } => {
                    stack.push(*call);
                    stack.push(*body);
                    vec![]
                }
                Exp::Call(c) => std::iter::once(c.func).chain(c.args.iter().copied()).collect(),
                Exp::Return(a) => vec![*a],
                Exp::If { cond, then, els } => {
                    stack.push(*then);
                    stack.push(*els);
                    vec![*cond]
                }
            };
            for a in atoms {
                if let Atom::Lam(id) = a {
                    stack.push(self.lam(id).body);
                }
            }
        }
        out
    }

    /// Label of the `Exp` that directly contains lambda `id`, if any.
    pub fn lambda_site(&self, id: LamId) -> Option<Label> {
        self.exps.iter().enumerate().find_map(|(i, e)| {
            let found = match e {
                Exp::Call(c) => std::iter::once(&c.func).chain(c.args.iter()).any(|a| *a == Atom::Lam(id)),
                Exp::Return(a) => *a == Atom::Lam(id),
                Exp::If { cond, .. } => *cond == Atom::Lam(id),
                Exp::Let { .. } => false,
            };
            found.then_some(Label(i as u32))
        })
    }

    /// Display helper for a variable.
    pub fn show_var(&self, v: Var) -> String {
        self.name(v).to_string()
    }

    /// Short human-readable description of a lambda: its formals.
    pub fn show_lam(&self, id: LamId) -> String {
        let lam = self.lam(id);
        let formals: Vec<&str> = lam.formals.iter().map(|v| self.name(*v)).collect();
        format!("(λ ({}) @{})", formals.join(" "), lam.body)
    }
}

/// Free variables of the expression at `l`.
pub fn free_variables(p: &Program, l: Label) -> BTreeSet<Var> {
    let mut out = BTreeSet::new();
    fv_exp(p, l, &mut Vec::new(), &mut out);
    out
}

/// Free variables of an atom.
pub fn free_variables_atom(p: &Program, a: Atom) -> BTreeSet<Var> {
    let mut out = BTreeSet::new();
    fv_atom(p, a, &mut Vec::new(), &mut out);
    out
}

fn fv_exp(p: &Program, l: Label, bound: &mut Vec<Var>, out: &mut BTreeSet<Var>) {
    match p.exp(l) {
        Exp::Let { binder, call, body } => {
            fv_exp(p, *call, bound, out);
            bound.push(*binder);
            fv_exp(p, *body, bound, out);
            bound.pop();
        }
        Exp::Call(c) => {
            fv_atom(p, c.func, bound, out);
            for a in &c.args {
                fv_atom(p, *a, bound, out);
            }
        }
        Exp::Return(a) => fv_atom(p, *a, bound, out),
        Exp::If { cond, then, els } => {
            fv_atom(p, *cond, bound, out);
            fv_exp(p, *then, bound, out);
            fv_exp(p, *els, bound, out);
        }
    }
}

fn fv_atom(p: &Program, a: Atom, bound: &mut Vec<Var>, out: &mut BTreeSet<Var>) {
    match a {
        Atom::Var(v) => {
            if !bound.contains(&v) {
                out.insert(v);
            }
        }
        Atom::Lam(id) => {
            let lam = p.lam(id);
            let depth = bound.len();
            bound.extend(lam.formals.iter().copied());
            fv_exp(p, lam.body, bound, out);
            bound.truncate(depth);
        }
        Atom::Lit(_) | Atom::Prim(_) => {}
    }
}

/// Parse and normalize in one go.
pub fn compile(text: &str) -> Result<Program, CompileError> {
    let term = parse(text)?;
    Ok(a_normalize(&term)?)
}

#[derive(Debug, thiserror::Error)]
pub enum CompileError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Normalize(#[from] NormalizeError),
}
