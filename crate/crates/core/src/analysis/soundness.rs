//! Checking solved graphs against concrete executions: every concrete
//! configuration along a run must be approximated by some reachable
//! abstract configuration.

use std::collections::BTreeMap;

use rustc_hash::FxHashSet;

use crate::abstract_machine::{AbsAddr, AbsEnv, AbsFrame, AbsStore, Alpha, ControlState, Leq, ValSet};
use crate::concrete::{self, run_visit, Addr, Conf, Outcome, Value};
use crate::dsg::{Dsg, FrameId, NodeId};
use crate::pushdown::StackAction;
use crate::syntax::{Label, Program};

use super::baseline::{BaseState, KAddr};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Sound { steps: usize, outcome: Outcome },
    Counterexample { step: usize, conf: String },
}

impl Verdict {
    pub fn is_sound(&self) -> bool {
        matches!(self, Verdict::Sound { .. })
    }
}

/// Concretely reachable addresses: the environment, every frame on the
/// stack, and everything their closures capture.
fn live_addrs(c: &Conf) -> Vec<Addr> {
    let mut seen: FxHashSet<Addr> = FxHashSet::default();
    let mut work: Vec<Addr> = c
        .env
        .iter()
        .map(|(_, a)| a)
        .chain(c.kont.frames().flat_map(|f| f.env.iter().map(|(_, a)| a)))
        .collect();
    while let Some(a) = work.pop() {
        if !seen.insert(a) {
            continue;
        }
        if let Some(Value::Clo(_, env)) = c.store.get(a) {
            work.extend(env.iter().map(|(_, b)| b));
        }
    }
    let mut out: Vec<Addr> = seen.into_iter().collect();
    out.sort_unstable();
    out
}

/// Abstraction of the parts of a concrete configuration every check
/// needs, with the store abstracted incrementally.
struct Observer {
    alpha: Alpha,
    gc: bool,
    full_store: BTreeMap<AbsAddr, ValSet>,
    cells_seen: usize,
    /// Abstracted stack, bottom first.
    frames: Vec<AbsFrame>,
}

enum StackChange {
    Same,
    Pushed,
    Popped,
    Rebuilt,
}

impl Observer {
    fn new(alpha: Alpha, gc: bool) -> Self {
        Observer {
            alpha,
            gc,
            full_store: BTreeMap::new(),
            cells_seen: 0,
            frames: Vec::new(),
        }
    }

    fn store(&mut self, c: &Conf) -> Vec<(AbsAddr, ValSet)> {
        if self.gc {
            let mut m: BTreeMap<AbsAddr, ValSet> = BTreeMap::new();
            for a in live_addrs(c) {
                let site = c.store.site(a).expect("live address allocated");
                let v = c.store.get(a).expect("live address bound");
                m.entry(self.alpha.site(site)).or_default().insert(self.alpha.value(&c.store, v));
            }
            return m.into_iter().collect();
        }
        for (_, v, site) in c.store.iter().skip(self.cells_seen) {
            self.full_store.entry(self.alpha.site(site)).or_default().insert(self.alpha.value(&c.store, v));
        }
        self.cells_seen = c.store.len();
        self.full_store.iter().map(|(a, v)| (a.clone(), v.clone())).collect()
    }

    fn sync_stack(&mut self, c: &Conf) -> StackChange {
        let d = c.kont.len();
        let n = self.frames.len();
        if d == n + 1 {
            let top = c.kont.top().expect("non-empty stack");
            self.frames.push(self.alpha.frame(&c.store, top));
            StackChange::Pushed
        } else if d + 1 == n {
            self.frames.pop();
            StackChange::Popped
        } else if d == n {
            StackChange::Same
        } else {
            let mut frames: Vec<AbsFrame> = c.kont.frames().map(|f| self.alpha.frame(&c.store, f)).collect();
            frames.reverse();
            self.frames = frames;
            StackChange::Rebuilt
        }
    }
}

struct Snapshot<'a> {
    exp: Label,
    env: AbsEnv,
    store: &'a [(AbsAddr, ValSet)],
    history: std::sync::Arc<[Label]>,
}

impl Snapshot<'_> {
    fn covered_by(&self, q: &ControlState) -> bool {
        q.exp == self.exp
            && q.history == self.history
            && self.env.leq(&q.env)
            && covers(self.store, &q.store)
    }
}

fn covers(entries: &[(AbsAddr, ValSet)], store: &AbsStore) -> bool {
    entries.iter().all(|(a, vs)| store.get(a).is_some_and(|have| vs.leq(have)))
}

fn walk(
    p: &Program,
    alpha: Alpha,
    gc: bool,
    fuel: usize,
    mut check: impl FnMut(&Snapshot<'_>, &[AbsFrame], StackChange) -> bool,
) -> Verdict {
    let mut obs = Observer::new(alpha, gc);
    let mut step = 0;
    let mut failure = None;
    let (outcome, _) = run_visit(p, fuel, |c: &Conf| {
        if failure.is_some() {
            return;
        }
        let change = obs.sync_stack(c);
        let store = obs.store(c);
        let snap = Snapshot {
            exp: c.exp,
            env: alpha.env(&c.store, &c.env),
            store: &store,
            history: alpha.history(&c.history),
        };
        if !check(&snap, &obs.frames, change) {
            failure = Some((step, c.summary()));
        }
        step += 1;
    });
    match failure {
        Some((step, conf)) => Verdict::Counterexample { step, conf },
        None => Verdict::Sound { steps: step, outcome },
    }
}

/// A candidate abstract state for the current concrete configuration: a
/// node, the frame pushed when its stack level was entered, and the index
/// of the candidate one level down that pushed it.
type Cand = (NodeId, Option<FrameId>, usize);

fn dedup(v: Vec<Cand>) -> Vec<Cand> {
    let mut seen = FxHashSet::default();
    v.into_iter().filter(|c| seen.insert(*c)).collect()
}

/// Check a pushdown graph by simulation: every concrete transition must be
/// matched by an edge of the graph, with pops returning along a push made
/// at the matching stack level.
pub fn check_pushdown(
    p: &Program,
    alpha: Alpha,
    gc: bool,
    g: &Dsg<ControlState, AbsFrame>,
    fuel: usize,
) -> Verdict {
    let n = g.node_count();
    let mut eps_out: Vec<Vec<NodeId>> = vec![Vec::new(); n];
    let mut push_out: Vec<Vec<(FrameId, NodeId)>> = vec![Vec::new(); n];
    let mut pop_out: Vec<Vec<(FrameId, NodeId)>> = vec![Vec::new(); n];
    for (a, act, b) in g.edges() {
        match act {
            StackAction::Eps => eps_out[*a].push(*b),
            StackAction::Push(f) => push_out[*a].push((*f, *b)),
            StackAction::Pop(f) => pop_out[*a].push((*f, *b)),
        }
    }
    let mut levels: Vec<Vec<Cand>> = Vec::new();
    walk(p, alpha, gc, fuel, |snap, frames, change| {
        let covers = |x: NodeId| snap.covered_by(g.node(x));
        match change {
            _ if levels.is_empty() => {
                let root = g.root();
                levels.push(if covers(root) { vec![(root, None, 0)] } else { Vec::new() });
            }
            StackChange::Same => {
                let top = levels.last_mut().expect("a level");
                let next = top
                    .iter()
                    .flat_map(|&(a, f, up)| eps_out[a].iter().filter(|b| covers(**b)).map(move |&b| (b, f, up)))
                    .collect();
                *top = dedup(next);
            }
            StackChange::Pushed => {
                let pushed = frames.last().expect("pushed frame");
                let next = levels
                    .last()
                    .expect("a level")
                    .iter()
                    .enumerate()
                    .flat_map(|(i, &(a, _, _))| {
                        push_out[a]
                            .iter()
                            .filter(|(f, b)| pushed.leq(g.frame(*f)) && covers(*b))
                            .map(move |&(f, b)| (b, Some(f), i))
                    })
                    .collect();
                levels.push(dedup(next));
            }
            StackChange::Popped => {
                let top = levels.pop().expect("a level");
                let below = levels.last_mut().expect("a level below a pop");
                let next = top
                    .iter()
                    .flat_map(|&(b, entered, up)| {
                        let (_, f_up, up_up) = below[up];
                        pop_out[b]
                            .iter()
                            .filter(move |(f, z)| Some(*f) == entered && covers(*z))
                            .map(move |&(_, z)| (z, f_up, up_up))
                    })
                    .collect();
                *below = dedup(next);
            }
            StackChange::Rebuilt => {
                // Every transition moves the stack by at most one frame.
                levels.last_mut().expect("a level").clear();
            }
        }
        !levels.last().expect("a level").is_empty()
    })
}

/// Check a finite-state graph by simulation: each concrete transition must
/// follow an edge, and the continuation store must hold a chain of
/// approximating frames from the state's continuation address down to the
/// halt continuation.
pub fn check_finite(p: &Program, alpha: Alpha, gc: bool, g: &Dsg<BaseState, AbsFrame>, fuel: usize) -> Verdict {
    let mut succ: Vec<Vec<NodeId>> = vec![Vec::new(); g.node_count()];
    for (a, _, b) in g.edges() {
        succ[*a].push(*b);
    }
    let mut cand: Option<FxHashSet<NodeId>> = None;
    walk(p, alpha, gc, fuel, |snap, frames, _| {
        let ok = |x: NodeId| {
            let s = g.node(x);
            snap.covered_by(&s.control) && chain_covers(s, frames)
        };
        let next: FxHashSet<NodeId> = match &cand {
            None => [g.root()].into_iter().filter(|x| ok(*x)).collect(),
            Some(prev) => prev.iter().flat_map(|a| succ[*a].iter().copied()).filter(|x| ok(*x)).collect(),
        };
        let alive = !next.is_empty();
        cand = Some(next);
        alive
    })
}

fn chain_covers(s: &BaseState, frames: &[AbsFrame]) -> bool {
    let mut at: FxHashSet<KAddr> = FxHashSet::from_iter([s.kaddr]);
    for f in frames.iter().rev() {
        at = at
            .iter()
            .flat_map(|k| s.kstore.get(*k))
            .filter(|kf| f.leq(&kf.frame))
            .map(|kf| kf.next)
            .collect();
        if at.is_empty() {
            return false;
        }
    }
    at.contains(&KAddr::Halt)
}

/// Concrete outcome of `p` under `fuel`, for reporting.
pub fn concrete_outcome(p: &Program, fuel: usize) -> Outcome {
    concrete::run_visit(p, fuel, |_| {}).0
}
