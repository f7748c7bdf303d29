//! Stack actions and the pushdown-system views of the abstract machine.
//!
//! Pushdown systems are never enumerated: their control states contain
//! whole stores. They are exposed as oracles answering "what can this
//! control state do, given this top frame and this set of frames on the
//! stack", which is all the graph solvers need.

use std::collections::{BTreeSet, VecDeque};
use std::hash::Hash;

use crate::abstract_machine::{AbsFrame, ControlState, Machine, Policy};
use crate::gc::collect_control;
use crate::syntax::Program;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StackAction<F> {
    Eps,
    Push(F),
    Pop(F),
}

impl<F> StackAction<F> {
    pub fn frame(&self) -> Option<&F> {
        match self {
            StackAction::Eps => None,
            StackAction::Push(f) | StackAction::Pop(f) => Some(f),
        }
    }

    pub fn map<G>(self, f: impl FnOnce(F) -> G) -> StackAction<G> {
        match self {
            StackAction::Eps => StackAction::Eps,
            StackAction::Push(x) => StackAction::Push(f(x)),
            StackAction::Pop(x) => StackAction::Pop(f(x)),
        }
    }

    pub fn as_ref(&self) -> StackAction<&F> {
        match self {
            StackAction::Eps => StackAction::Eps,
            StackAction::Push(x) => StackAction::Push(x),
            StackAction::Pop(x) => StackAction::Pop(x),
        }
    }

    pub fn is_pop(&self) -> bool {
        matches!(self, StackAction::Pop(_))
    }
}

/// Normal form of an action string: ε removed and every adjacent push/pop
/// of the same frame cancelled.
pub fn net<F: Clone + PartialEq>(actions: &[StackAction<F>]) -> Vec<StackAction<F>> {
    let mut out: Vec<StackAction<F>> = Vec::with_capacity(actions.len());
    for a in actions {
        match a {
            StackAction::Eps => {}
            StackAction::Pop(g) if matches!(out.last(), Some(StackAction::Push(h)) if h == g) => {
                out.pop();
            }
            other => out.push(other.clone()),
        }
    }
    out
}

/// The stack (top first) built by `actions` from the empty stack, if the
/// net string only pushes.
pub fn stackify<F: Clone + PartialEq>(actions: &[StackAction<F>]) -> Option<Vec<F>> {
    let mut stack = net(actions)
        .into_iter()
        .map(|a| match a {
            StackAction::Push(f) => Some(f),
            _ => None,
        })
        .collect::<Option<Vec<F>>>()?;
    stack.reverse();
    Some(stack)
}

/// A nondeterministic finite automaton over states `0..states`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Nfa<F> {
    pub states: usize,
    pub transitions: Vec<(usize, Option<F>, usize)>,
    pub start: usize,
    pub accepting: BTreeSet<usize>,
}

impl<F: Clone + Ord> Nfa<F> {
    pub fn alphabet(&self) -> BTreeSet<F> {
        self.transitions.iter().filter_map(|(_, f, _)| f.clone()).collect()
    }

    fn successors(&self) -> Vec<Vec<(Option<&F>, usize)>> {
        let mut adj = vec![Vec::new(); self.states];
        for (a, f, b) in &self.transitions {
            adj[*a].push((f.as_ref(), *b));
        }
        adj
    }

    fn closure(&self, adj: &[Vec<(Option<&F>, usize)>], set: &mut BTreeSet<usize>) {
        let mut work: Vec<usize> = set.iter().copied().collect();
        while let Some(s) = work.pop() {
            for (f, t) in &adj[s] {
                if f.is_none() && set.insert(*t) {
                    work.push(*t);
                }
            }
        }
    }

    /// States some string leads to from the start, by breadth-first search.
    pub fn live_states(&self) -> Vec<bool> {
        let adj = self.successors();
        let mut seen = vec![false; self.states];
        let mut queue = VecDeque::from([self.start]);
        seen[self.start] = true;
        while let Some(s) = queue.pop_front() {
            for (_, t) in &adj[s] {
                if !seen[*t] {
                    seen[*t] = true;
                    queue.push_back(*t);
                }
            }
        }
        seen
    }

    /// Whether some string is accepted.
    pub fn accepts_any(&self) -> bool {
        let live = self.live_states();
        self.accepting.iter().any(|s| live[*s])
    }

    pub fn accepts(&self, word: &[F]) -> bool {
        let adj = self.successors();
        let mut cur = BTreeSet::from([self.start]);
        self.closure(&adj, &mut cur);
        for sym in word {
            let mut next = BTreeSet::new();
            for s in &cur {
                for (f, t) in &adj[*s] {
                    if *f == Some(sym) {
                        next.insert(*t);
                    }
                }
            }
            self.closure(&adj, &mut next);
            cur = next;
        }
        cur.iter().any(|s| self.accepting.contains(s))
    }

    /// Every accepted string of length at most `max_len`.
    pub fn words(&self, max_len: usize) -> BTreeSet<Vec<F>> {
        let adj = self.successors();
        let mut out = BTreeSet::new();
        let mut start = BTreeSet::from([self.start]);
        self.closure(&adj, &mut start);
        let mut layer: BTreeSet<(Vec<F>, BTreeSet<usize>)> = BTreeSet::from([(Vec::new(), start)]);
        for len in 0..=max_len {
            let mut next_layer = BTreeSet::new();
            for (word, states) in &layer {
                if states.iter().any(|s| self.accepting.contains(s)) {
                    out.insert(word.clone());
                }
                if len == max_len {
                    continue;
                }
                let mut by_sym: std::collections::BTreeMap<&F, BTreeSet<usize>> = Default::default();
                for s in states {
                    for (f, t) in &adj[*s] {
                        if let Some(f) = f {
                            by_sym.entry(*f).or_default().insert(*t);
                        }
                    }
                }
                for (f, mut set) in by_sym {
                    self.closure(&adj, &mut set);
                    let mut w = word.clone();
                    w.push(f.clone());
                    next_layer.insert((w, set));
                }
            }
            layer = next_layer;
        }
        out
    }
}

/// An intensional (introspective) pushdown system.
///
/// `step` answers with the transitions available from `q` when `top` is the
/// top frame (`None` for the empty stack) and `frames` are the frames of the
/// whole stack, `top` included. ε and push transitions must not depend on
/// `top`; pops are offered only for the frame equal to `top`. Oracles that
/// do not look at `frames` report so through `observes_frames`, which lets
/// solvers skip tracking frame sets.
pub trait Oracle {
    type State: Clone + Eq + Hash;
    type Frame: Clone + Eq + Hash + Ord;

    fn root(&self) -> Self::State;

    fn step(
        &self,
        q: &Self::State,
        top: Option<&Self::Frame>,
        frames: &[&Self::Frame],
    ) -> Vec<(StackAction<Self::Frame>, Self::State)>;

    fn observes_frames(&self) -> bool {
        true
    }
}

/// The abstract machine as a rooted pushdown system.
#[derive(Debug, Clone, Copy)]
pub struct RpdsOracle<'p> {
    pub machine: Machine<'p>,
}

/// The garbage-collecting abstract machine as an introspective pushdown
/// system.
#[derive(Debug, Clone, Copy)]
pub struct IpdsOracle<'p> {
    pub machine: Machine<'p>,
}

pub fn to_rpds(p: &Program, policy: Policy) -> RpdsOracle<'_> {
    RpdsOracle {
        machine: Machine::new(p, policy),
    }
}

pub fn to_ipds(p: &Program, policy: Policy) -> IpdsOracle<'_> {
    IpdsOracle {
        machine: Machine::new(p, policy),
    }
}

impl RpdsOracle<'_> {
    pub fn step_top(&self, q: &ControlState, top: Option<&AbsFrame>) -> Vec<(StackAction<AbsFrame>, ControlState)> {
        self.machine.step_control(q, top)
    }
}

impl IpdsOracle<'_> {
    pub fn step_intro(
        &self,
        q: &ControlState,
        top: Option<&AbsFrame>,
        frames: &[&AbsFrame],
    ) -> Vec<(StackAction<AbsFrame>, ControlState)> {
        let collected = collect_control(q, frames.iter().copied().chain(top));
        self.machine.step_control(&collected, top)
    }
}

impl Oracle for RpdsOracle<'_> {
    type State = ControlState;
    type Frame = AbsFrame;

    fn root(&self) -> ControlState {
        self.machine.root()
    }

    fn step(&self, q: &ControlState, top: Option<&AbsFrame>, _: &[&AbsFrame]) -> Vec<(StackAction<AbsFrame>, ControlState)> {
        self.step_top(q, top)
    }

    fn observes_frames(&self) -> bool {
        false
    }
}

impl Oracle for IpdsOracle<'_> {
    type State = ControlState;
    type Frame = AbsFrame;

    fn root(&self) -> ControlState {
        self.machine.root()
    }

    fn step(&self, q: &ControlState, top: Option<&AbsFrame>, frames: &[&AbsFrame]) -> Vec<(StackAction<AbsFrame>, ControlState)> {
        self.step_intro(q, top, frames)
    }
}

/// A pushdown system given by an explicit transition table.
#[derive(Debug, Clone)]
pub struct TableOracle<S, F> {
    pub root: S,
    pub edges: Vec<(S, StackAction<F>, S)>,
}

impl<S: Clone + Eq + Hash, F: Clone + Eq + Hash + Ord> Oracle for TableOracle<S, F> {
    type State = S;
    type Frame = F;

    fn root(&self) -> S {
        self.root.clone()
    }

    fn step(&self, q: &S, top: Option<&F>, _: &[&F]) -> Vec<(StackAction<F>, S)> {
        self.edges
            .iter()
            .filter(|(a, act, _)| {
                a == q
                    && match act {
                        StackAction::Pop(f) => Some(f) == top,
                        _ => true,
                    }
            })
            .map(|(_, act, b)| (act.clone(), b.clone()))
            .collect()
    }

    fn observes_frames(&self) -> bool {
        false
    }
}
