//! The concrete CESK machine: ground truth for the soundness harness.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::syntax::{Atom, Exp, Label, LamId, Lit, PrimOp, Program, Var};

/// Previous-label history kept per configuration, most recent first.
pub const HISTORY_DEPTH: usize = 8;

pub type Addr = usize;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Env(Arc<BTreeMap<Var, Addr>>);

impl Env {
    pub fn get(&self, v: Var) -> Option<Addr> {
        self.0.get(&v).copied()
    }

    pub fn bind(&self, pairs: impl IntoIterator<Item = (Var, Addr)>) -> Env {
        let mut m = (*self.0).clone();
        m.extend(pairs);
        Env(Arc::new(m))
    }

    pub fn iter(&self) -> impl Iterator<Item = (Var, Addr)> + '_ {
        self.0.iter().map(|(v, a)| (*v, *a))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Value {
    Clo(LamId, Env),
    Num(i64),
    Bool(bool),
    Prim(PrimOp),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Clo(id, _) => write!(f, "#<closure {id}>"),
            Value::Num(n) => write!(f, "{n}"),
            Value::Bool(b) => f.write_str(if *b { "#t" } else { "#f" }),
            Value::Prim(op) => write!(f, "#<primitive {op}>"),
        }
    }
}

/// Where and how an address was allocated; the abstraction map replays
/// this through an abstract allocation policy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AllocSite {
    pub var: Var,
    pub label: Label,
    pub history: Arc<[Label]>,
    /// Whether the binding is a formal of a let-bound lambda.
    pub callee_let_bound: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Store {
    cells: Arc<Vec<(Value, AllocSite)>>,
}

impl Store {
    pub fn get(&self, a: Addr) -> Option<&Value> {
        self.cells.get(a).map(|(v, _)| v)
    }

    pub fn site(&self, a: Addr) -> Option<&AllocSite> {
        self.cells.get(a).map(|(_, s)| s)
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Addr, &Value, &AllocSite)> + '_ {
        self.cells.iter().enumerate().map(|(a, (v, s))| (a, v, s))
    }

    fn push(&mut self, v: Value, site: AllocSite) -> Addr {
        let a = alloc(self);
        Arc::make_mut(&mut self.cells).push((v, site));
        a
    }
}

/// The next fresh address: one past the largest address in use, so the
/// empty store allocates address 0.
pub fn alloc(store: &Store) -> Addr {
    store.len()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub binder: Var,
    pub body: Label,
    pub env: Env,
}

#[derive(Debug)]
struct KNode {
    frame: Frame,
    next: Kont,
    depth: usize,
}

/// A persistent stack of frames.
#[derive(Debug, Clone, Default)]
pub struct Kont(Option<Arc<KNode>>);

impl Kont {
    pub fn push(&self, frame: Frame) -> Kont {
        Kont(Some(Arc::new(KNode {
            frame,
            next: self.clone(),
            depth: self.len() + 1,
        })))
    }

    pub fn top(&self) -> Option<&Frame> {
        self.0.as_ref().map(|n| &n.frame)
    }

    pub fn pop(&self) -> Option<(&Frame, Kont)> {
        self.0.as_ref().map(|n| (&n.frame, n.next.clone()))
    }

    pub fn len(&self) -> usize {
        self.0.as_ref().map_or(0, |n| n.depth)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_none()
    }

    /// Frames from the top down.
    pub fn frames(&self) -> impl Iterator<Item = &Frame> + '_ {
        let mut cur = self.0.as_deref();
        std::iter::from_fn(move || {
            let n = cur?;
            cur = n.next.0.as_deref();
            Some(&n.frame)
        })
    }
}

impl PartialEq for Kont {
    fn eq(&self, other: &Self) -> bool {
        self.len() == other.len() && self.frames().eq(other.frames())
    }
}

impl Eq for Kont {}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Conf {
    pub exp: Label,
    pub env: Env,
    pub store: Store,
    pub kont: Kont,
    /// Labels of the preceding configurations, most recent first.
    pub history: Arc<[Label]>,
}

impl Conf {
    /// One-line trace summary: label, stack depth, store size.
    pub fn summary(&self) -> String {
        format!("{} {} {}", self.exp, self.kont.len(), self.store.len())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Stuck {
    #[error("unbound variable `{0}`")]
    Unbound(String),
    #[error("dangling address {0}")]
    Dangling(Addr),
    #[error("applied a non-function: {0}")]
    NotAFunction(String),
    #[error("arity mismatch: expected {expected}, got {found}")]
    Arity { expected: usize, found: usize },
    #[error("`if` on a non-boolean: {0}")]
    NonBoolean(String),
    #[error("primitive `{op}` cannot take ({args})")]
    Primitive { op: PrimOp, args: String },
}

/// The initial configuration for `p`.
pub fn inject(p: &Program) -> Conf {
    Conf {
        exp: p.root(),
        env: Env::default(),
        store: Store::default(),
        kont: Kont::default(),
        history: Arc::from(Vec::new()),
    }
}

pub fn atomic_eval(p: &Program, a: Atom, env: &Env, store: &Store) -> Result<Value, Stuck> {
    Ok(match a {
        Atom::Var(v) => {
            let addr = env.get(v).ok_or_else(|| Stuck::Unbound(p.name(v).to_string()))?;
            store.get(addr).cloned().ok_or(Stuck::Dangling(addr))?
        }
        Atom::Lam(id) => Value::Clo(id, env.clone()),
        Atom::Lit(Lit::Int(n)) => Value::Num(n),
        Atom::Lit(Lit::Bool(b)) => Value::Bool(b),
        Atom::Prim(op) => Value::Prim(op),
    })
}

pub fn apply_prim(op: PrimOp, args: &[Value]) -> Result<Value, Stuck> {
    let bad = || Stuck::Primitive {
        op,
        args: args.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" "),
    };
    if !op.accepts(args.len()) {
        return Err(bad());
    }
    let nums = || -> Result<Vec<i64>, Stuck> {
        args.iter()
            .map(|v| match v {
                Value::Num(n) => Ok(*n),
                _ => Err(bad()),
            })
            .collect()
    };
    Ok(match op {
        PrimOp::Add => Value::Num(nums()?.into_iter().try_fold(0i64, |a, b| a.checked_add(b)).ok_or_else(bad)?),
        PrimOp::Mul => Value::Num(nums()?.into_iter().try_fold(1i64, |a, b| a.checked_mul(b)).ok_or_else(bad)?),
        PrimOp::Sub => {
            let ns = nums()?;
            let r = match ns[..] {
                [a] => a.checked_neg(),
                [a, b] => a.checked_sub(b),
                _ => None,
            };
            Value::Num(r.ok_or_else(bad)?)
        }
        PrimOp::NumEq | PrimOp::Lt | PrimOp::Le | PrimOp::Gt | PrimOp::Ge => {
            let ns = nums()?;
            let (a, b) = (ns[0], ns[1]);
            Value::Bool(match op {
                PrimOp::NumEq => a == b,
                PrimOp::Lt => a < b,
                PrimOp::Le => a <= b,
                PrimOp::Gt => a > b,
                _ => a >= b,
            })
        }
        PrimOp::Not => Value::Bool(args[0] == Value::Bool(false)),
        PrimOp::Print => args[0].clone(),
    })
}

/// Outcome of a single in-place transition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Step {
    Next,
    /// The configuration is final; it returns this value to the empty stack.
    Halt(Value),
}

fn site(c: &Conf, var: Var, callee_let_bound: bool) -> AllocSite {
    AllocSite {
        var,
        label: c.exp,
        history: c.history.clone(),
        callee_let_bound,
    }
}

fn advance_history(c: &mut Conf, from: Label) {
    let mut h = Vec::with_capacity(HISTORY_DEPTH);
    h.push(from);
    h.extend(c.history.iter().copied().take(HISTORY_DEPTH - 1));
    c.history = Arc::from(h);
}

/// Return `v` to the top frame; `Halt` on the empty stack.
fn return_value(c: &mut Conf, v: Value) -> Step {
    let Some((frame, rest)) = c.kont.pop() else {
        return Step::Halt(v);
    };
    let frame = frame.clone();
    let a = c.store.push(v, site(c, frame.binder, false));
    c.env = frame.env.bind([(frame.binder, a)]);
    c.exp = frame.body;
    c.kont = rest;
    Step::Next
}

/// Transition `c` in place. Values passed to `print` are appended to
/// `printed`. On `Halt` or error, `c` is left unchanged.
pub fn step_mut(p: &Program, c: &mut Conf, printed: &mut Vec<Value>) -> Result<Step, Stuck> {
    let here = c.exp;
    let result = match p.exp(here) {
        Exp::Return(a) => {
            let v = atomic_eval(p, *a, &c.env, &c.store)?;
            return_value(c, v)
        }
        Exp::Call(call) => {
            let f = atomic_eval(p, call.func, &c.env, &c.store)?;
            let args = call
                .args
                .iter()
                .map(|a| atomic_eval(p, *a, &c.env, &c.store))
                .collect::<Result<Vec<_>, _>>()?;
            match f {
                Value::Clo(id, cenv) => {
                    let lam = p.lam(id);
                    if lam.formals.len() != args.len() {
                        return Err(Stuck::Arity {
                            expected: lam.formals.len(),
                            found: args.len(),
                        });
                    }
                    let mut binds = Vec::with_capacity(args.len());
                    for (x, v) in lam.formals.iter().zip(args) {
                        let s = site(c, *x, lam.let_bound);
                        binds.push((*x, c.store.push(v, s)));
                    }
                    c.env = cenv.bind(binds);
                    c.exp = lam.body;
                    Step::Next
                }
                Value::Prim(op) => {
                    let v = apply_prim(op, &args)?;
                    if op == PrimOp::Print {
                        printed.push(v.clone());
                    }
                    return_value(c, v)
                }
                other => return Err(Stuck::NotAFunction(other.to_string())),
            }
        }
        Exp::Let { binder, call, body } => {
            let rhs = p.call(*call).expect("let right-hand side is a call");
            if let Atom::Prim(op) = rhs.func {
                let args = rhs
                    .args
                    .iter()
                    .map(|a| atomic_eval(p, *a, &c.env, &c.store))
                    .collect::<Result<Vec<_>, _>>()?;
                let v = apply_prim(op, &args)?;
                if op == PrimOp::Print {
                    printed.push(v.clone());
                }
                let a = c.store.push(v, site(c, *binder, false));
                c.env = c.env.bind([(*binder, a)]);
                c.exp = *body;
            } else {
                c.kont = c.kont.push(Frame {
                    binder: *binder,
                    body: *body,
                    env: c.env.clone(),
                });
                c.exp = *call;
            }
            Step::Next
        }
        Exp::If { cond, then, els } => match atomic_eval(p, *cond, &c.env, &c.store)? {
            Value::Bool(b) => {
                c.exp = if b { *then } else { *els };
                Step::Next
            }
            other => return Err(Stuck::NonBoolean(other.to_string())),
        },
    };
    if result == Step::Next {
        advance_history(c, here);
    }
    Ok(result)
}

/// The successor of `c`, or `None` if `c` is final.
pub fn step(p: &Program, c: &Conf) -> Result<Option<Conf>, Stuck> {
    let mut next = c.clone();
    Ok(match step_mut(p, &mut next, &mut Vec::new())? {
        Step::Next => Some(next),
        Step::Halt(_) => None,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Final(Value),
    FuelExhausted,
    Stuck(Stuck),
}

#[derive(Debug, Clone)]
pub struct Run {
    pub trace: Vec<Conf>,
    pub outcome: Outcome,
    pub printed: Vec<Value>,
}

/// Run `p` for at most `fuel` transitions, calling `visit` on every
/// configuration (including the initial one) without retaining them.
pub fn run_visit(p: &Program, fuel: usize, mut visit: impl FnMut(&Conf)) -> (Outcome, Vec<Value>) {
    let mut c = inject(p);
    let mut printed = Vec::new();
    visit(&c);
    for _ in 0..fuel {
        match step_mut(p, &mut c, &mut printed) {
            Ok(Step::Next) => visit(&c),
            Ok(Step::Halt(v)) => return (Outcome::Final(v), printed),
            Err(e) => return (Outcome::Stuck(e), printed),
        }
    }
    (Outcome::FuelExhausted, printed)
}

/// Run `p` and keep the whole trace.
pub fn run(p: &Program, fuel: usize) -> Run {
    let mut trace = Vec::new();
    let (outcome, printed) = run_visit(p, fuel, |c| trace.push(c.clone()));
    Run {
        trace,
        outcome,
        printed,
    }
}
