//! A-normalization of surface terms.
//!
//! Surface sugar is first lowered to a small core language (`cond`, `and`,
//! `or` and `letrec` disappear), then every non-atomic subterm in operator,
//! operand or condition position is named by a `let`. Recursive bindings
//! are compiled by self-application: each binding group gets "maker"
//! lambdas that receive every maker of the group and rebuild the recursive
//! functions on entry.

use std::collections::{BTreeMap, BTreeSet};

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;

use super::surface::{Ident, Term, TermKind};
use super::{Atom, Call, Exp, Label, LamId, Lambda, Lit, Pos, PrimOp, Program, Var};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NormalizeError {
    #[error("{pos}: unbound variable `{name}`")]
    Unbound { name: String, pos: Pos },
    #[error("{pos}: {msg}")]
    Form { msg: String, pos: Pos },
}

#[derive(Debug, Clone)]
enum Core {
    Var(Ident, Pos),
    Lit(Lit),
    Lam(Vec<Ident>, Box<Core>, bool),
    /// Parallel `let`.
    Let(Vec<(Ident, Core)>, Box<Core>),
    If(Box<Core>, Box<Core>, Box<Core>),
    Begin(Vec<Core>),
    App(Box<Core>, Vec<Core>),
}

impl Core {
    fn var(x: &str) -> Core {
        Core::Var(x.to_string(), Pos::default())
    }

    fn is_atomic(&self) -> bool {
        matches!(self, Core::Var(..) | Core::Lit(_) | Core::Lam(..))
    }

    fn mentions(&self, x: &str) -> bool {
        match self {
            Core::Var(y, _) => x == y,
            Core::Lit(_) => false,
            Core::Lam(formals, body, _) => !formals.iter().any(|f| f == x) && body.mentions(x),
            Core::Let(binds, body) => {
                binds.iter().any(|(_, rhs)| rhs.mentions(x))
                    || (!binds.iter().any(|(y, _)| y == x) && body.mentions(x))
            }
            Core::If(c, a, b) => c.mentions(x) || a.mentions(x) || b.mentions(x),
            Core::Begin(es) => es.iter().any(|e| e.mentions(x)),
            Core::App(f, args) => f.mentions(x) || args.iter().any(|a| a.mentions(x)),
        }
    }

    fn mark_let_bound(self) -> Core {
        match self {
            Core::Lam(formals, body, _) => Core::Lam(formals, body, true),
            other => other,
        }
    }
}

#[derive(Debug, Clone)]
enum AAtom {
    Var(Ident),
    Lam(Vec<Ident>, Box<AExp>, bool),
    Lit(Lit),
    Prim(PrimOp),
}

#[derive(Debug, Clone)]
struct ACall {
    func: AAtom,
    args: Vec<AAtom>,
}

#[derive(Debug, Clone)]
enum AExp {
    Let(Ident, ACall, Box<AExp>),
    Call(ACall),
    Return(AAtom),
    If(AAtom, Box<AExp>, Box<AExp>),
}

struct Fresh {
    used: BTreeSet<Ident>,
    next: usize,
}

impl Fresh {
    fn temp(&mut self) -> Ident {
        loop {
            self.next += 1;
            let name = format!("t{}", self.next);
            if self.used.insert(name.clone()) {
                return name;
            }
        }
    }

    fn maker(&mut self, base: &str) -> Ident {
        let mut name = format!("{base}~");
        let mut n = 1;
        while !self.used.insert(name.clone()) {
            n += 1;
            name = format!("{base}~{n}");
        }
        name
    }
}

fn form_err<T>(pos: Pos, msg: impl Into<String>) -> Result<T, NormalizeError> {
    Err(NormalizeError::Form {
        msg: msg.into(),
        pos,
    })
}

struct Normalizer {
    fresh: Fresh,
}

impl Normalizer {
    fn desugar(&mut self, t: &Term) -> Result<Core, NormalizeError> {
        Ok(match &t.kind {
            TermKind::Var(x) => Core::Var(x.clone(), t.pos),
            TermKind::Int(n) => Core::Lit(Lit::Int(*n)),
            TermKind::Bool(b) => Core::Lit(Lit::Bool(*b)),
            TermKind::Lambda(formals, body) => Core::Lam(formals.clone(), Box::new(self.desugar(body)?), false),
            TermKind::Let(binds, body) => {
                let binds = binds
                    .iter()
                    .map(|(x, rhs)| Ok((x.clone(), self.desugar(rhs)?.mark_let_bound())))
                    .collect::<Result<Vec<_>, NormalizeError>>()?;
                Core::Let(binds, Box::new(self.desugar(body)?))
            }
            TermKind::Letrec(binds, body) => self.letrec(binds, body)?,
            TermKind::If(c, a, b) => Core::If(
                Box::new(self.desugar(c)?),
                Box::new(self.desugar(a)?),
                Box::new(self.desugar(b)?),
            ),
            TermKind::Cond(clauses, els) => {
                let mut acc = match els {
                    Some(e) => self.desugar(e)?,
                    None => Core::Lit(Lit::Bool(false)),
                };
                for (test, rhs) in clauses.iter().rev() {
                    acc = Core::If(Box::new(self.desugar(test)?), Box::new(self.desugar(rhs)?), Box::new(acc));
                }
                acc
            }
            TermKind::And(ts) => match ts.split_first() {
                None => Core::Lit(Lit::Bool(true)),
                Some((only, [])) => self.desugar(only)?,
                Some((first, rest)) => {
                    let rest = Term::new(TermKind::And(rest.to_vec()), t.pos);
                    Core::If(
                        Box::new(self.desugar(first)?),
                        Box::new(self.desugar(&rest)?),
                        Box::new(Core::Lit(Lit::Bool(false))),
                    )
                }
            },
            TermKind::Or(ts) => match ts.split_first() {
                None => Core::Lit(Lit::Bool(false)),
                Some((only, [])) => self.desugar(only)?,
                Some((first, rest)) => {
                    let rest = Term::new(TermKind::Or(rest.to_vec()), t.pos);
                    let tmp = self.fresh.temp();
                    Core::Let(
                        vec![(tmp.clone(), self.desugar(first)?)],
                        Box::new(Core::If(
                            Box::new(Core::var(&tmp)),
                            Box::new(Core::var(&tmp)),
                            Box::new(self.desugar(&rest)?),
                        )),
                    )
                }
            },
            TermKind::Begin(ts) => Core::Begin(ts.iter().map(|t| self.desugar(t)).collect::<Result<_, _>>()?),
            TermKind::App(f, args) => Core::App(
                Box::new(self.desugar(f)?),
                args.iter().map(|a| self.desugar(a)).collect::<Result<_, _>>()?,
            ),
        })
    }

    fn letrec(&mut self, binds: &[(Ident, Term)], body: &Term) -> Result<Core, NormalizeError> {
        let names: Vec<&Ident> = binds.iter().map(|(x, _)| x).collect();
        let mut graph = DiGraph::<usize, ()>::new();
        let nodes: Vec<_> = (0..binds.len()).map(|i| graph.add_node(i)).collect();
        for (i, (_, rhs)) in binds.iter().enumerate() {
            let fv = rhs.free_vars();
            for (j, name) in names.iter().enumerate() {
                if fv.contains(*name) {
                    graph.add_edge(nodes[i], nodes[j], ());
                }
            }
        }
        // Dependencies come first in Tarjan's output order.
        let groups: Vec<(Vec<usize>, bool)> = tarjan_scc(&graph)
            .into_iter()
            .map(|scc| {
                let recursive = scc.len() > 1 || graph.contains_edge(scc[0], scc[0]);
                let mut members: Vec<usize> = scc.iter().map(|n| graph[*n]).collect();
                members.sort_unstable();
                (members, recursive)
            })
            .collect();

        let mut acc = self.desugar(body)?;
        for (members, recursive) in groups.into_iter().rev() {
            if !recursive {
                let (x, rhs) = &binds[members[0]];
                acc = Core::Let(vec![(x.clone(), self.desugar(rhs)?.mark_let_bound())], Box::new(acc));
                continue;
            }
            let group: Vec<&Ident> = members.iter().map(|i| &binds[*i].0).collect();
            let makers: Vec<Ident> = group.iter().map(|f| self.fresh.maker(f)).collect();
            let self_app = |k: usize| {
                Core::App(
                    Box::new(Core::var(&makers[k])),
                    makers.iter().map(|m| Core::var(m)).collect(),
                )
            };
            let mut maker_binds = Vec::new();
            for (k, &i) in members.iter().enumerate() {
                let (name, rhs) = &binds[i];
                let TermKind::Lambda(params, _) = &rhs.kind else {
                    return form_err(rhs.pos, format!("recursive binding `{name}` must be a lambda"));
                };
                let Core::Lam(_, inner_body, _) = self.desugar(rhs)? else { unreachable!() };
                let rebinds: Vec<(Ident, Core)> = group
                    .iter()
                    .enumerate()
                    .filter(|(_, f)| !params.contains(f) && inner_body.mentions(f))
                    .map(|(j, f)| ((*f).clone(), self_app(j)))
                    .collect();
                let inner_body = if rebinds.is_empty() {
                    *inner_body
                } else {
                    Core::Let(rebinds, inner_body)
                };
                let inner = Core::Lam(params.clone(), Box::new(inner_body), true);
                maker_binds.push((makers[k].clone(), Core::Lam(makers.clone(), Box::new(inner), true)));
            }
            let tie: Vec<(Ident, Core)> = group
                .iter()
                .enumerate()
                .map(|(k, f)| ((*f).clone(), self_app(k)))
                .collect();
            acc = Core::Let(maker_binds, Box::new(Core::Let(tie, Box::new(acc))));
        }
        Ok(acc)
    }

    fn resolve(&self, x: &str, pos: Pos, scope: &[Ident]) -> Result<AAtom, NormalizeError> {
        if scope.iter().any(|y| y == x) {
            return Ok(AAtom::Var(x.to_string()));
        }
        match PrimOp::from_name(x) {
            Some(op) => Ok(AAtom::Prim(op)),
            None => Err(NormalizeError::Unbound {
                name: x.to_string(),
                pos,
            }),
        }
    }

    fn atom(&mut self, c: &Core, scope: &mut Vec<Ident>) -> Result<Option<AAtom>, NormalizeError> {
        Ok(Some(match c {
            Core::Var(x, pos) => self.resolve(x, *pos, scope)?,
            Core::Lit(l) => AAtom::Lit(*l),
            Core::Lam(formals, body, let_bound) => {
                let depth = scope.len();
                scope.extend(formals.iter().cloned());
                let body = self.tail(body, scope);
                scope.truncate(depth);
                AAtom::Lam(formals.clone(), Box::new(body?), *let_bound)
            }
            _ => return Ok(None),
        }))
    }

    /// Name `c` with an atom, recording the `let` bindings it needs.
    fn atomize(
        &mut self,
        c: &Core,
        scope: &mut Vec<Ident>,
        binds: &mut Vec<(Ident, ACall)>,
    ) -> Result<AAtom, NormalizeError> {
        if let Some(a) = self.atom(c, scope)? {
            return Ok(a);
        }
        let call = self.call_of(c, scope, binds)?;
        let t = self.fresh.temp();
        binds.push((t.clone(), call));
        Ok(AAtom::Var(t))
    }

    /// The call computing non-atomic `c`: an application, or a thunk call.
    fn call_of(
        &mut self,
        c: &Core,
        scope: &mut Vec<Ident>,
        binds: &mut Vec<(Ident, ACall)>,
    ) -> Result<ACall, NormalizeError> {
        match c {
            Core::App(f, args) => {
                let func = self.atomize(f, scope, binds)?;
                let args = args
                    .iter()
                    .map(|a| self.atomize(a, scope, binds))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(ACall { func, args })
            }
            _ => {
                let body = self.tail(c, scope)?;
                Ok(ACall {
                    func: AAtom::Lam(vec![], Box::new(body), false),
                    args: vec![],
                })
            }
        }
    }

    fn tail(&mut self, c: &Core, scope: &mut Vec<Ident>) -> Result<AExp, NormalizeError> {
        if let Some(a) = self.atom(c, scope)? {
            return Ok(AExp::Return(a));
        }
        let mut binds = Vec::new();
        let exp = match c {
            Core::App(..) => AExp::Call(self.call_of(c, scope, &mut binds)?),
            Core::If(cond, a, b) => {
                let cond = self.atomize(cond, scope, &mut binds)?;
                AExp::If(cond, Box::new(self.tail(a, scope)?), Box::new(self.tail(b, scope)?))
            }
            Core::Begin(es) => {
                let (last, init) = es.split_last().expect("begin is never empty");
                for e in init {
                    if self.atom(e, scope)?.is_none() {
                        self.atomize(e, scope, &mut binds)?;
                    }
                }
                self.tail(last, scope)?
            }
            Core::Let(bs, body) => {
                let conflict = bs
                    .iter()
                    .enumerate()
                    .any(|(i, (x, _))| bs[i + 1..].iter().any(|(_, rhs)| rhs.mentions(x)));
                if conflict {
                    let (names, rhss): (Vec<Ident>, Vec<Core>) = bs.iter().cloned().unzip();
                    let app = Core::App(Box::new(Core::Lam(names, body.clone(), false)), rhss);
                    return self.tail(&app, scope);
                }
                self.let_seq(bs, body, scope)?
            }
            Core::Var(..) | Core::Lit(_) | Core::Lam(..) => unreachable!(),
        };
        Ok(wrap(binds, exp))
    }

    fn let_seq(&mut self, bs: &[(Ident, Core)], body: &Core, scope: &mut Vec<Ident>) -> Result<AExp, NormalizeError> {
        let Some(((x, rhs), rest)) = bs.split_first() else {
            return self.tail(body, scope);
        };
        let depth = scope.len();
        let result = if rhs.is_atomic() {
            let n = bs.iter().take_while(|(_, r)| r.is_atomic()).count();
            let (group, rest) = bs.split_at(n);
            let atoms = group
                .iter()
                .map(|(_, r)| Ok(self.atom(r, scope)?.expect("atomic")))
                .collect::<Result<Vec<_>, NormalizeError>>()?;
            let names: Vec<Ident> = group.iter().map(|(x, _)| x.clone()).collect();
            scope.extend(names.iter().cloned());
            let inner = self.let_seq(rest, body, scope);
            scope.truncate(depth);
            AExp::Call(ACall {
                func: AAtom::Lam(names, Box::new(inner?), false),
                args: atoms,
            })
        } else {
            let mut binds = Vec::new();
            let call = self.call_of(rhs, scope, &mut binds)?;
            scope.push(x.clone());
            let inner = self.let_seq(rest, body, scope);
            scope.truncate(depth);
            wrap(binds, AExp::Let(x.clone(), call, Box::new(inner?)))
        };
        Ok(result)
    }
}

fn wrap(binds: Vec<(Ident, ACall)>, exp: AExp) -> AExp {
    binds
        .into_iter()
        .rev()
        .fold(exp, |acc, (x, call)| AExp::Let(x, call, Box::new(acc)))
}

#[derive(Default)]
struct Lowering {
    exps: Vec<Exp>,
    lams: Vec<Lambda>,
    names: Vec<String>,
    index: BTreeMap<String, Var>,
}

impl Lowering {
    fn var(&mut self, name: &str) -> Var {
        if let Some(v) = self.index.get(name) {
            return *v;
        }
        let v = Var(self.names.len() as u32);
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), v);
        v
    }

    fn push(&mut self, e: Exp) -> Label {
        self.exps.push(e);
        Label(self.exps.len() as u32 - 1)
    }

    fn atom(&mut self, a: &AAtom) -> Atom {
        match a {
            AAtom::Var(x) => Atom::Var(self.var(x)),
            AAtom::Lit(l) => Atom::Lit(*l),
            AAtom::Prim(op) => Atom::Prim(*op),
            AAtom::Lam(formals, body, let_bound) => {
                let formals = formals.iter().map(|f| self.var(f)).collect();
                let body = self.exp(body);
                self.lams.push(Lambda {
                    formals,
                    body,
                    let_bound: *let_bound,
                });
                Atom::Lam(LamId(self.lams.len() as u32 - 1))
            }
        }
    }

    fn call(&mut self, c: &ACall) -> Call {
        let func = self.atom(&c.func);
        let args = c.args.iter().map(|a| self.atom(a)).collect();
        Call { func, args }
    }

    fn exp(&mut self, e: &AExp) -> Label {
        match e {
            AExp::Let(x, call, body) => {
                let call = self.call(call);
                let call = self.push(Exp::Call(call));
                let binder = self.var(x);
                let body = self.exp(body);
                self.push(Exp::Let { binder, call, body })
            }
            AExp::Call(c) => {
                let c = self.call(c);
                self.push(Exp::Call(c))
            }
            AExp::Return(a) => {
                let a = self.atom(a);
                self.push(Exp::Return(a))
            }
            AExp::If(c, a, b) => {
                let cond = self.atom(c);
                let then = self.exp(a);
                let els = self.exp(b);
                self.push(Exp::If { cond, then, els })
            }
        }
    }
}

/// Convert a closed surface term to an ANF program.
pub fn a_normalize(term: &Term) -> Result<Program, NormalizeError> {
    let mut n = Normalizer {
        fresh: Fresh {
            used: term.identifiers(),
            next: 0,
        },
    };
    let core = n.desugar(term)?;
    let anf = n.tail(&core, &mut Vec::new())?;
    let mut low = Lowering::default();
    let root = low.exp(&anf);
    Ok(Program::from_parts(low.exps, low.lams, low.names, root))
}
