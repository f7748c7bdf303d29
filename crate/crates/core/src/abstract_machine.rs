//! The abstract CESK machine: finite addresses, set-valued stores and an
//! unbounded stack of frames.
//!
//! Transitions are computed on control states (expression, environment,
//! store and allocation history) against an optional top frame, which is
//! all the stack a single step can observe. [`abs_step`] lifts this to
//! configurations with explicit stacks.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use crate::concrete::{self, AllocSite, Conf, Value};
use crate::pushdown::StackAction;
use crate::shared::Shared;
use crate::syntax::{Atom, Exp, Label, LamId, Lit, PrimOp, Program, Var};

/// Allocation policy: how much calling context an address records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Policy {
    Mono,
    OneCfa,
    PolySplit,
    KCfa(usize),
}

impl Policy {
    /// Number of earlier labels a control state must remember.
    pub fn history_len(self) -> usize {
        match self {
            Policy::KCfa(k) => k.saturating_sub(1),
            _ => 0,
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Policy::Mono => f.write_str("0cfa"),
            Policy::OneCfa => f.write_str("1cfa"),
            Policy::PolySplit => f.write_str("poly"),
            Policy::KCfa(k) => write!(f, "{k}-cfa"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AbsAddr {
    Mono(Var),
    Ctx1(Var, Label),
    Poly(Var, Option<Label>),
    CtxK(Var, Arc<[Label]>),
}

impl AbsAddr {
    pub fn var(&self) -> Var {
        match self {
            AbsAddr::Mono(v) | AbsAddr::Ctx1(v, _) | AbsAddr::Poly(v, _) | AbsAddr::CtxK(v, _) => *v,
        }
    }
}

/// Abstract address for binding `var` at `label`.
///
/// `history` lists the labels of earlier states, most recent first;
/// `callee_let_bound` says whether the binding is a formal of a let-bound
/// lambda.
pub fn alloc_abs(policy: Policy, var: Var, label: Label, history: &[Label], callee_let_bound: bool) -> AbsAddr {
    match policy {
        Policy::Mono => AbsAddr::Mono(var),
        Policy::OneCfa => AbsAddr::Ctx1(var, label),
        Policy::PolySplit => AbsAddr::Poly(var, callee_let_bound.then_some(label)),
        Policy::KCfa(k) => {
            let ctx: Vec<Label> = std::iter::once(label).chain(history.iter().copied()).take(k).collect();
            AbsAddr::CtxK(var, Arc::from(ctx))
        }
    }
}

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AbsVal {
    Clo(LamId, AbsEnv),
    Num,
    Bool,
    Prim(PrimOp),
}

impl fmt::Debug for AbsVal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AbsVal::Clo(id, env) => write!(f, "clo({id}, {env:?})"),
            AbsVal::Num => f.write_str("num"),
            AbsVal::Bool => f.write_str("bool"),
            AbsVal::Prim(op) => write!(f, "prim({op})"),
        }
    }
}

pub type ValSet = BTreeSet<AbsVal>;

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct AbsEnv(Shared<BTreeMap<Var, AbsAddr>>);

impl AbsEnv {
    pub fn new(map: BTreeMap<Var, AbsAddr>) -> AbsEnv {
        AbsEnv(Shared::new(map))
    }

    pub fn get(&self, v: Var) -> Option<&AbsAddr> {
        self.0.get(&v)
    }

    pub fn bind(&self, pairs: impl IntoIterator<Item = (Var, AbsAddr)>) -> AbsEnv {
        let mut m = (*self.0).clone();
        m.extend(pairs);
        AbsEnv::new(m)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Var, &AbsAddr)> + '_ {
        self.0.iter().map(|(v, a)| (*v, a))
    }

    /// Addresses in the range of the environment.
    pub fn range(&self) -> impl Iterator<Item = &AbsAddr> + '_ {
        self.0.values()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Debug for AbsEnv {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_map().entries(self.0.iter()).finish()
    }
}

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct AbsStore(Shared<BTreeMap<AbsAddr, ValSet>>);

impl AbsStore {
    /// Build a store, dropping addresses bound to the empty set.
    pub fn new(mut map: BTreeMap<AbsAddr, ValSet>) -> AbsStore {
        map.retain(|_, vs| !vs.is_empty());
        AbsStore(Shared::new(map))
    }

    pub fn get(&self, a: &AbsAddr) -> Option<&ValSet> {
        self.0.get(a)
    }

    pub fn contains(&self, a: &AbsAddr) -> bool {
        self.0.contains_key(a)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&AbsAddr, &ValSet)> + '_ {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Join `vals` into the bindings of each address.
    pub fn extend(&self, binds: impl IntoIterator<Item = (AbsAddr, ValSet)>) -> AbsStore {
        let mut m = None::<BTreeMap<AbsAddr, ValSet>>;
        for (a, vs) in binds {
            if vs.is_empty() {
                continue;
            }
            let fresh = match self.0.get(&a) {
                Some(old) => !vs.is_subset(old),
                None => true,
            };
            if fresh {
                m.get_or_insert_with(|| (*self.0).clone()).entry(a).or_default().extend(vs);
            }
        }
        match m {
            Some(m) => AbsStore(Shared::new(m)),
            None => self.clone(),
        }
    }

    /// The store restricted to `keep`.
    pub fn restrict(&self, keep: &BTreeSet<AbsAddr>) -> AbsStore {
        if self.0.keys().all(|a| keep.contains(a)) {
            return self.clone();
        }
        let m = self
            .0
            .iter()
            .filter(|(a, _)| keep.contains(*a))
            .map(|(a, vs)| (a.clone(), vs.clone()))
            .collect();
        AbsStore(Shared::new(m))
    }
}

impl fmt::Debug for AbsStore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_map().entries(self.0.iter()).finish()
    }
}

/// Pointwise union.
pub fn store_join(a: &AbsStore, b: &AbsStore) -> AbsStore {
    a.extend(b.iter().map(|(k, vs)| (k.clone(), vs.clone())))
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AbsFrame {
    pub binder: Var,
    pub body: Label,
    pub env: AbsEnv,
}

/// A pushdown control state: everything but the stack.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ControlState {
    pub exp: Label,
    pub env: AbsEnv,
    pub store: AbsStore,
    /// Labels of earlier states, most recent first; only k-CFA with k > 1
    /// keeps any.
    pub history: Arc<[Label]>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AbsConf {
    pub exp: Label,
    pub env: AbsEnv,
    pub store: AbsStore,
    /// Top of the stack first.
    pub kont: Vec<AbsFrame>,
    pub history: Arc<[Label]>,
}

impl AbsConf {
    pub fn control(&self) -> ControlState {
        ControlState {
            exp: self.exp,
            env: self.env.clone(),
            store: self.store.clone(),
            history: self.history.clone(),
        }
    }

    pub fn with_control(q: ControlState, kont: Vec<AbsFrame>) -> AbsConf {
        AbsConf {
            exp: q.exp,
            env: q.env,
            store: q.store,
            kont,
            history: q.history,
        }
    }
}

pub fn abs_inject(p: &Program) -> AbsConf {
    AbsConf {
        exp: p.root(),
        env: AbsEnv::default(),
        store: AbsStore::default(),
        kont: Vec::new(),
        history: Arc::from(Vec::new()),
    }
}

/// Abstract values of an atom. Unbound variables and addresses absent
/// from the store evaluate to the empty set.
pub fn abs_atomic_eval(a: Atom, env: &AbsEnv, store: &AbsStore) -> ValSet {
    match a {
        Atom::Var(v) => env.get(v).and_then(|addr| store.get(addr)).cloned().unwrap_or_default(),
        Atom::Lam(id) => BTreeSet::from([AbsVal::Clo(id, env.clone())]),
        Atom::Lit(Lit::Int(_)) => BTreeSet::from([AbsVal::Num]),
        Atom::Lit(Lit::Bool(_)) => BTreeSet::from([AbsVal::Bool]),
        Atom::Prim(op) => BTreeSet::from([AbsVal::Prim(op)]),
    }
}

/// Abstract result of a primitive; empty when no concrete application
/// could succeed.
pub fn abs_prim(op: PrimOp, args: &[ValSet]) -> ValSet {
    if !op.accepts(args.len()) {
        return ValSet::new();
    }
    let all_nums = args.iter().all(|vs| vs.contains(&AbsVal::Num));
    match op {
        PrimOp::Add | PrimOp::Sub | PrimOp::Mul if all_nums => BTreeSet::from([AbsVal::Num]),
        PrimOp::NumEq | PrimOp::Lt | PrimOp::Le | PrimOp::Gt | PrimOp::Ge if all_nums => BTreeSet::from([AbsVal::Bool]),
        PrimOp::Not => BTreeSet::from([AbsVal::Bool]),
        PrimOp::Print => args[0].clone(),
        _ => ValSet::new(),
    }
}

/// One-step transition relation of the abstract machine.
#[derive(Debug, Clone, Copy)]
pub struct Machine<'p> {
    pub program: &'p Program,
    pub policy: Policy,
}

impl<'p> Machine<'p> {
    pub fn new(program: &'p Program, policy: Policy) -> Self {
        Machine { program, policy }
    }

    pub fn root(&self) -> ControlState {
        abs_inject(self.program).control()
    }

    fn next_history(&self, q: &ControlState) -> Arc<[Label]> {
        let n = self.policy.history_len();
        if n == 0 {
            return q.history.clone();
        }
        std::iter::once(q.exp).chain(q.history.iter().copied()).take(n).collect()
    }

    fn alloc(&self, q: &ControlState, var: Var, callee_let_bound: bool) -> AbsAddr {
        alloc_abs(self.policy, var, q.exp, &q.history, callee_let_bound)
    }

    fn pop_with(
        &self,
        q: &ControlState,
        top: Option<&AbsFrame>,
        vals: ValSet,
        out: &mut Vec<(StackAction<AbsFrame>, ControlState)>,
    ) {
        let Some(frame) = top else { return };
        if vals.is_empty() {
            return;
        }
        let a = self.alloc(q, frame.binder, false);
        out.push((
            StackAction::Pop(frame.clone()),
            ControlState {
                exp: frame.body,
                env: frame.env.bind([(frame.binder, a.clone())]),
                store: q.store.extend([(a, vals)]),
                history: self.next_history(q),
            },
        ));
    }

    /// Every transition from `q` whose stack action is possible with `top`
    /// on the stack (`None` for the empty stack). Pushes and ε moves do not
    /// depend on `top`.
    pub fn step_control(&self, q: &ControlState, top: Option<&AbsFrame>) -> Vec<(StackAction<AbsFrame>, ControlState)> {
        let p = self.program;
        let mut out = Vec::new();
        let eval = |a: Atom| abs_atomic_eval(a, &q.env, &q.store);
        match p.exp(q.exp) {
            Exp::Return(a) => self.pop_with(q, top, eval(*a), &mut out),
            Exp::Call(call) => {
                let args: Vec<ValSet> = call.args.iter().map(|a| eval(*a)).collect();
                if args.iter().any(|vs| vs.is_empty()) {
                    return out;
                }
                for f in eval(call.func) {
                    match f {
                        AbsVal::Clo(id, cenv) => {
                            let lam = p.lam(id);
                            if lam.formals.len() != args.len() {
                                continue;
                            }
                            let addrs: Vec<AbsAddr> =
                                lam.formals.iter().map(|x| self.alloc(q, *x, lam.let_bound)).collect();
                            let store = q.store.extend(addrs.iter().cloned().zip(args.iter().cloned()));
                            out.push((
                                StackAction::Eps,
                                ControlState {
                                    exp: lam.body,
                                    env: cenv.bind(lam.formals.iter().copied().zip(addrs)),
                                    store,
                                    history: self.next_history(q),
                                },
                            ));
                        }
                        AbsVal::Prim(op) => self.pop_with(q, top, abs_prim(op, &args), &mut out),
                        AbsVal::Num | AbsVal::Bool => {}
                    }
                }
            }
            Exp::Let { binder, call, body } => {
                let rhs = p.call(*call).expect("let right-hand side is a call");
                if let Atom::Prim(op) = rhs.func {
                    let args: Vec<ValSet> = rhs.args.iter().map(|a| eval(*a)).collect();
                    let vals = abs_prim(op, &args);
                    if !vals.is_empty() {
                        let a = self.alloc(q, *binder, false);
                        out.push((
                            StackAction::Eps,
                            ControlState {
                                exp: *body,
                                env: q.env.bind([(*binder, a.clone())]),
                                store: q.store.extend([(a, vals)]),
                                history: self.next_history(q),
                            },
                        ));
                    }
                } else {
                    let frame = AbsFrame {
                        binder: *binder,
                        body: *body,
                        env: q.env.clone(),
                    };
                    out.push((
                        StackAction::Push(frame),
                        ControlState {
                            exp: *call,
                            env: q.env.clone(),
                            store: q.store.clone(),
                            history: self.next_history(q),
                        },
                    ));
                }
            }
            Exp::If { cond, then, els } => {
                if eval(*cond).contains(&AbsVal::Bool) {
                    for branch in [*then, *els] {
                        out.push((
                            StackAction::Eps,
                            ControlState {
                                exp: branch,
                                env: q.env.clone(),
                                store: q.store.clone(),
                                history: self.next_history(q),
                            },
                        ));
                    }
                }
            }
        }
        out
    }

    /// Successors of a configuration with an explicit stack.
    pub fn abs_step(&self, c: &AbsConf) -> Vec<AbsConf> {
        let q = c.control();
        self.step_control(&q, c.kont.first())
            .into_iter()
            .map(|(action, q2)| {
                let kont = match action {
                    StackAction::Eps => c.kont.clone(),
                    StackAction::Push(f) => std::iter::once(f).chain(c.kont.iter().cloned()).collect(),
                    StackAction::Pop(_) => c.kont[1..].to_vec(),
                };
                AbsConf::with_control(q2, kont)
            })
            .collect()
    }
}

/// The approximation orders on abstract values, environments, stores,
/// frames, stacks and configurations.
pub trait Leq {
    fn leq(&self, other: &Self) -> bool;
}

impl Leq for AbsEnv {
    /// Agreement on the domain of `self`.
    fn leq(&self, other: &Self) -> bool {
        self.len() <= other.len() && self.iter().all(|(v, a)| other.get(v) == Some(a))
    }
}

impl Leq for AbsVal {
    fn leq(&self, other: &Self) -> bool {
        match (self, other) {
            (AbsVal::Clo(l1, e1), AbsVal::Clo(l2, e2)) => l1 == l2 && e1.leq(e2),
            _ => self == other,
        }
    }
}

impl Leq for ValSet {
    fn leq(&self, other: &Self) -> bool {
        self.iter().all(|v| other.contains(v) || other.iter().any(|w| v.leq(w)))
    }
}

impl Leq for AbsStore {
    fn leq(&self, other: &Self) -> bool {
        self.iter().all(|(a, vs)| other.get(a).is_some_and(|ws| vs.leq(ws)))
    }
}

impl Leq for AbsFrame {
    fn leq(&self, other: &Self) -> bool {
        self.binder == other.binder && self.body == other.body && self.env.leq(&other.env)
    }
}

impl Leq for Vec<AbsFrame> {
    fn leq(&self, other: &Self) -> bool {
        self.len() == other.len() && self.iter().zip(other).all(|(a, b)| a.leq(b))
    }
}

impl Leq for AbsConf {
    fn leq(&self, other: &Self) -> bool {
        self.exp == other.exp
            && self.history == other.history
            && self.env.leq(&other.env)
            && self.store.leq(&other.store)
            && self.kont.leq(&other.kont)
    }
}

/// The abstraction map from concrete to abstract configurations.
#[derive(Debug, Clone, Copy)]
pub struct Alpha {
    pub policy: Policy,
}

impl Alpha {
    pub fn site(&self, s: &AllocSite) -> AbsAddr {
        alloc_abs(self.policy, s.var, s.label, &s.history, s.callee_let_bound)
    }

    pub fn addr(&self, store: &concrete::Store, a: concrete::Addr) -> AbsAddr {
        self.site(store.site(a).expect("address allocated in this store"))
    }

    pub fn env(&self, store: &concrete::Store, env: &concrete::Env) -> AbsEnv {
        AbsEnv::new(env.iter().map(|(v, a)| (v, self.addr(store, a))).collect())
    }

    pub fn value(&self, store: &concrete::Store, v: &Value) -> AbsVal {
        match v {
            Value::Clo(id, env) => AbsVal::Clo(*id, self.env(store, env)),
            Value::Num(_) => AbsVal::Num,
            Value::Bool(_) => AbsVal::Bool,
            Value::Prim(op) => AbsVal::Prim(*op),
        }
    }

    pub fn store(&self, store: &concrete::Store) -> AbsStore {
        let mut m: BTreeMap<AbsAddr, ValSet> = BTreeMap::new();
        for (_, v, site) in store.iter() {
            m.entry(self.site(site)).or_default().insert(self.value(store, v));
        }
        AbsStore::new(m)
    }

    pub fn frame(&self, store: &concrete::Store, f: &concrete::Frame) -> AbsFrame {
        AbsFrame {
            binder: f.binder,
            body: f.body,
            env: self.env(store, &f.env),
        }
    }

    pub fn history(&self, h: &[Label]) -> Arc<[Label]> {
        h.iter().copied().take(self.policy.history_len()).collect()
    }

    pub fn conf(&self, c: &Conf) -> AbsConf {
        AbsConf {
            exp: c.exp,
            env: self.env(&c.store, &c.env),
            store: self.store(&c.store),
            kont: c.kont.frames().map(|f| self.frame(&c.store, f)).collect(),
            history: self.history(&c.history),
        }
    }
}

/// Shorthand for `Alpha { policy }.conf(c)`.
pub fn alpha(c: &Conf, policy: Policy) -> AbsConf {
    Alpha { policy }.conf(c)
}
