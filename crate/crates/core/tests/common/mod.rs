//! Shared test helpers: a random program generator and a direct
//! interpreter for surface terms that serves as an independent reference.
#![allow(dead_code)]

use std::cell::RefCell;
use std::rc::Rc;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use pdcfa_core::syntax::{Term, TermKind};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

const NAMES: [&str; 5] = ["x", "y", "z", "f", "g"];

/// A closed surface program. Shadowing, higher-order calls, conditionals
/// and primitives all show up; type errors and divergence are allowed.
pub fn random_source(rng: &mut impl Rng, depth: u32) -> String {
    let mut scope = Vec::new();
    gen(rng, depth, &mut scope)
}

fn leaf(rng: &mut impl Rng, scope: &[&'static str]) -> String {
    match rng.gen_range(0..5) {
        0 | 1 if !scope.is_empty() => scope.choose(rng).unwrap().to_string(),
        0 => "(lambda (x) x)".into(),
        2 => rng.gen_range(0..4).to_string(),
        3 => if rng.gen() { "#t" } else { "#f" }.into(),
        _ if !scope.is_empty() => scope.choose(rng).unwrap().to_string(),
        _ => "1".into(),
    }
}

fn gen(rng: &mut impl Rng, depth: u32, scope: &mut Vec<&'static str>) -> String {
    if depth == 0 {
        return leaf(rng, scope);
    }
    let d = depth - 1;
    match rng.gen_range(0..10) {
        0 => leaf(rng, scope),
        1 | 2 => {
            let v = *NAMES.choose(rng).unwrap();
            scope.push(v);
            let body = gen(rng, d, scope);
            scope.pop();
            format!("(lambda ({v}) {body})")
        }
        3 | 4 => {
            let f = if rng.gen_bool(0.5) || scope.is_empty() {
                let v = *NAMES.choose(rng).unwrap();
                scope.push(v);
                let body = gen(rng, d, scope);
                scope.pop();
                format!("(lambda ({v}) {body})")
            } else {
                scope.choose(rng).unwrap().to_string()
            };
            format!("({f} {})", gen(rng, d, scope))
        }
        5 | 6 => {
            let rhs = gen(rng, d, scope);
            let v = *NAMES.choose(rng).unwrap();
            scope.push(v);
            let body = gen(rng, d, scope);
            scope.pop();
            format!("(let (({v} {rhs})) {body})")
        }
        7 => {
            let cond = if rng.gen() {
                format!("(< {} {})", gen(rng, d / 2, scope), gen(rng, d / 2, scope))
            } else {
                gen(rng, d / 2, scope)
            };
            format!("(if {cond} {} {})", gen(rng, d, scope), gen(rng, d, scope))
        }
        8 => {
            let op = *["+", "-", "*", "="].choose(rng).unwrap();
            format!("({op} {} {})", gen(rng, d, scope), gen(rng, d, scope))
        }
        _ => match rng.gen_range(0..4) {
            0 => format!("(and {} {})", gen(rng, d, scope), gen(rng, d, scope)),
            1 => format!("(or {} {})", gen(rng, d, scope), gen(rng, d, scope)),
            2 => format!("(begin {} {})", gen(rng, d, scope), gen(rng, d, scope)),
            _ => format!("(cond ({} {}) (else {}))", gen(rng, d, scope), gen(rng, d, scope), gen(rng, d, scope)),
        },
    }
}

/// What a run ends with, forgetting closure identity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Answer {
    Num(i64),
    Bool(bool),
    Function,
    Error,
    OutOfFuel,
}

#[derive(Clone)]
enum Val<'t> {
    Num(i64),
    Bool(bool),
    Clo(&'t [String], &'t Term, Env<'t>),
    Prim(&'static str),
}

type Cell<'t> = Rc<RefCell<Option<Val<'t>>>>;

#[derive(Clone, Default)]
struct Env<'t>(Option<Rc<(String, Cell<'t>, Env<'t>)>>);

impl<'t> Env<'t> {
    fn bind(&self, x: &str, v: Option<Val<'t>>) -> (Env<'t>, Cell<'t>) {
        let cell = Rc::new(RefCell::new(v));
        (Env(Some(Rc::new((x.to_string(), cell.clone(), self.clone())))), cell)
    }

    fn lookup(&self, x: &str) -> Option<Cell<'t>> {
        let mut cur = &self.0;
        while let Some(node) = cur {
            if node.0 == x {
                return Some(node.1.clone());
            }
            cur = &node.2 .0;
        }
        None
    }
}

enum Halt {
    Error,
    Fuel,
}

const PRIMS: [&str; 10] = ["+", "-", "*", "=", "<", "<=", ">", ">=", "not", "print"];

struct Interp {
    fuel: usize,
}

impl Interp {
    fn tick(&mut self) -> Result<(), Halt> {
        if self.fuel == 0 {
            return Err(Halt::Fuel);
        }
        self.fuel -= 1;
        Ok(())
    }

    fn truth(v: &Val<'_>) -> Result<bool, Halt> {
        match v {
            Val::Bool(b) => Ok(*b),
            _ => Err(Halt::Error),
        }
    }

    fn eval<'t>(&mut self, t: &'t Term, env: &Env<'t>) -> Result<Val<'t>, Halt> {
        self.tick()?;
        match &t.kind {
            TermKind::Var(x) => match env.lookup(x) {
                Some(cell) => cell.borrow().clone().ok_or(Halt::Error),
                None => PRIMS.iter().find(|p| **p == x).map(|p| Val::Prim(p)).ok_or(Halt::Error),
            },
            TermKind::Int(n) => Ok(Val::Num(*n)),
            TermKind::Bool(b) => Ok(Val::Bool(*b)),
            TermKind::Lambda(xs, body) => Ok(Val::Clo(xs, body, env.clone())),
            TermKind::Let(binds, body) => {
                let vals = binds.iter().map(|(_, rhs)| self.eval(rhs, env)).collect::<Result<Vec<_>, _>>()?;
                let mut inner = env.clone();
                for ((x, _), v) in binds.iter().zip(vals) {
                    inner = inner.bind(x, Some(v)).0;
                }
                self.eval(body, &inner)
            }
            TermKind::Letrec(binds, body) => {
                let mut inner = env.clone();
                let mut cells = Vec::new();
                for (x, _) in binds {
                    let (e, c) = inner.bind(x, None);
                    inner = e;
                    cells.push(c);
                }
                for ((_, rhs), cell) in binds.iter().zip(cells) {
                    let v = self.eval(rhs, &inner)?;
                    *cell.borrow_mut() = Some(v);
                }
                self.eval(body, &inner)
            }
            TermKind::If(c, a, b) => {
                let c = self.eval(c, env)?;
                if Self::truth(&c)? {
                    self.eval(a, env)
                } else {
                    self.eval(b, env)
                }
            }
            TermKind::Cond(clauses, els) => {
                for (test, rhs) in clauses {
                    let v = self.eval(test, env)?;
                    if Self::truth(&v)? {
                        return self.eval(rhs, env);
                    }
                }
                match els {
                    Some(e) => self.eval(e, env),
                    None => Ok(Val::Bool(false)),
                }
            }
            TermKind::And(ts) => {
                let mut last = Val::Bool(true);
                for (i, t) in ts.iter().enumerate() {
                    last = self.eval(t, env)?;
                    if i + 1 < ts.len() && !Self::truth(&last)? {
                        return Ok(Val::Bool(false));
                    }
                }
                Ok(last)
            }
            TermKind::Or(ts) => {
                let mut last = Val::Bool(false);
                for (i, t) in ts.iter().enumerate() {
                    last = self.eval(t, env)?;
                    if i + 1 < ts.len() && Self::truth(&last)? {
                        return Ok(last);
                    }
                }
                Ok(last)
            }
            TermKind::Begin(ts) => {
                let mut last = Val::Bool(false);
                for t in ts {
                    last = self.eval(t, env)?;
                }
                Ok(last)
            }
            TermKind::App(f, args) => {
                let f = self.eval(f, env)?;
                let args = args.iter().map(|a| self.eval(a, env)).collect::<Result<Vec<_>, _>>()?;
                self.apply(f, args)
            }
        }
    }

    fn apply<'t>(&mut self, f: Val<'t>, args: Vec<Val<'t>>) -> Result<Val<'t>, Halt> {
        match f {
            Val::Clo(xs, body, env) => {
                if xs.len() != args.len() {
                    return Err(Halt::Error);
                }
                let mut inner = env;
                for (x, v) in xs.iter().zip(args) {
                    inner = inner.bind(x, Some(v)).0;
                }
                self.eval(body, &inner)
            }
            Val::Prim(op) => prim(op, &args),
            _ => Err(Halt::Error),
        }
    }
}

fn prim<'t>(op: &str, args: &[Val<'t>]) -> Result<Val<'t>, Halt> {
    let nums = || -> Result<Vec<i64>, Halt> {
        args.iter().map(|v| if let Val::Num(n) = v { Ok(*n) } else { Err(Halt::Error) }).collect()
    };
    let pair = || -> Result<(i64, i64), Halt> {
        match nums()?[..] {
            [a, b] => Ok((a, b)),
            _ => Err(Halt::Error),
        }
    };
    Ok(match op {
        "+" if !args.is_empty() => Val::Num(nums()?.into_iter().try_fold(0i64, i64::checked_add).ok_or(Halt::Error)?),
        "*" if !args.is_empty() => Val::Num(nums()?.into_iter().try_fold(1i64, i64::checked_mul).ok_or(Halt::Error)?),
        "-" => match nums()?[..] {
            [a] => Val::Num(a.checked_neg().ok_or(Halt::Error)?),
            [a, b] => Val::Num(a.checked_sub(b).ok_or(Halt::Error)?),
            _ => return Err(Halt::Error),
        },
        "=" => pair().map(|(a, b)| Val::Bool(a == b))?,
        "<" => pair().map(|(a, b)| Val::Bool(a < b))?,
        "<=" => pair().map(|(a, b)| Val::Bool(a <= b))?,
        ">" => pair().map(|(a, b)| Val::Bool(a > b))?,
        ">=" => pair().map(|(a, b)| Val::Bool(a >= b))?,
        "not" if args.len() == 1 => Val::Bool(matches!(args[0], Val::Bool(false))),
        "print" if args.len() == 1 => args[0].clone(),
        _ => return Err(Halt::Error),
    })
}

/// Evaluate a surface term directly, with `fuel` evaluation steps.
pub fn reference_eval(t: &Term, fuel: usize) -> Answer {
    let mut it = Interp { fuel };
    match it.eval(t, &Env::default()) {
        Ok(Val::Num(n)) => Answer::Num(n),
        Ok(Val::Bool(b)) => Answer::Bool(b),
        Ok(Val::Clo(..) | Val::Prim(_)) => Answer::Function,
        Err(Halt::Error) => Answer::Error,
        Err(Halt::Fuel) => Answer::OutOfFuel,
    }
}

pub mod abs {
    //! Random abstract configurations and a brute-force reachability oracle.

    use std::collections::{BTreeMap, BTreeSet};
    use std::sync::Arc;

    use rand::Rng;

    use pdcfa_core::abstract_machine::{AbsAddr, AbsConf, AbsEnv, AbsFrame, AbsStore, AbsVal, ValSet};
    use pdcfa_core::syntax::{Label, LamId, Var};

    fn addr(r: &mut impl Rng) -> AbsAddr {
        let v = Var(r.gen_range(0..6));
        match r.gen_range(0..3) {
            0 => AbsAddr::Ctx1(v, Label(r.gen_range(0..3))),
            _ => AbsAddr::Mono(v),
        }
    }

    fn env(r: &mut impl Rng) -> AbsEnv {
        let n = r.gen_range(0..4);
        AbsEnv::new((0..n).map(|_| (Var(r.gen_range(0..6)), addr(r))).collect())
    }

    fn vals(r: &mut impl Rng) -> ValSet {
        let n = r.gen_range(1..4);
        (0..n)
            .map(|_| match r.gen_range(0..4) {
                0 => AbsVal::Num,
                1 => AbsVal::Bool,
                _ => AbsVal::Clo(LamId(r.gen_range(0..3)), env(r)),
            })
            .collect()
    }

    /// A configuration over six variables and a handful of addresses, with
    /// closures nesting environments to arbitrary shapes.
    pub fn random_conf(r: &mut impl Rng) -> AbsConf {
        let bindings = r.gen_range(0..10);
        let store = AbsStore::new((0..bindings).map(|_| (addr(r), vals(r))).collect());
        let frames = r.gen_range(0..3);
        AbsConf {
            exp: Label(0),
            env: env(r),
            store,
            kont: (0..frames)
                .map(|_| AbsFrame { binder: Var(r.gen_range(0..6)), body: Label(0), env: env(r) })
                .collect(),
            history: Arc::from(vec![]),
        }
    }

    /// Reachable addresses by transitive closure of the "closure at a holds
    /// b" relation over an explicit matrix.
    pub fn brute_reachable(c: &AbsConf) -> BTreeSet<AbsAddr> {
        let mut roots: BTreeSet<AbsAddr> = c.env.range().cloned().collect();
        for f in &c.kont {
            roots.extend(f.env.range().cloned());
        }
        let mut universe: BTreeSet<AbsAddr> = roots.clone();
        for (a, vs) in c.store.iter() {
            universe.insert(a.clone());
            for v in vs {
                if let AbsVal::Clo(_, e) = v {
                    universe.extend(e.range().cloned());
                }
            }
        }
        let index: BTreeMap<&AbsAddr, usize> = universe.iter().enumerate().map(|(i, a)| (a, i)).collect();
        let n = universe.len();
        let mut m = vec![vec![false; n]; n];
        for (a, vs) in c.store.iter() {
            for v in vs {
                if let AbsVal::Clo(_, e) = v {
                    for b in e.range() {
                        m[index[a]][index[b]] = true;
                    }
                }
            }
        }
        for k in 0..n {
            for i in 0..n {
                if m[i][k] {
                    for j in 0..n {
                        if m[k][j] {
                            m[i][j] = true;
                        }
                    }
                }
            }
        }
        let addrs: Vec<&AbsAddr> = universe.iter().collect();
        let mut out = roots.clone();
        for r in &roots {
            let i = index[r];
            out.extend((0..n).filter(|j| m[i][*j]).map(|j| addrs[j].clone()));
        }
        out
    }
}

/// `count` closed random programs of at most `max_exps` ANF expressions.
pub fn small_programs(seed: u64, count: usize, max_exps: usize) -> Vec<(String, pdcfa_core::syntax::Program)> {
    let mut r = rng(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let src = random_source(&mut r, 4);
        let p = pdcfa_core::syntax::compile(&src).expect("generated programs compile");
        if p.label_count() <= max_exps {
            out.push((src, p));
        }
    }
    out
}
