//! Finite-state k-CFA: continuations live in a store of their own, keyed
//! by the label of the call they return from, so the stack disappears
//! into the control state and the state space is finite.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::abstract_machine::{AbsFrame, ControlState, Machine};
use crate::gc::{reachable_from, stack_root, AddrSet};
use crate::pushdown::{Oracle, StackAction};
use crate::shared::Shared;
use crate::syntax::Label;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum KAddr {
    Halt,
    At(Label),
}

impl fmt::Display for KAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KAddr::Halt => f.write_str("halt"),
            KAddr::At(l) => write!(f, "k{l}"),
        }
    }
}

/// A stored continuation: a frame and the address of the one below it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct KFrame {
    pub frame: AbsFrame,
    pub next: KAddr,
}

#[derive(Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct KStore(Shared<BTreeMap<KAddr, BTreeSet<KFrame>>>);

impl KStore {
    pub fn get(&self, k: KAddr) -> impl Iterator<Item = &KFrame> + '_ {
        self.0.get(&k).into_iter().flatten()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&KAddr, &BTreeSet<KFrame>)> + '_ {
        self.0.iter()
    }

    pub fn join(&self, k: KAddr, kf: KFrame) -> KStore {
        if self.0.get(&k).is_some_and(|s| s.contains(&kf)) {
            return self.clone();
        }
        let mut m = (*self.0).clone();
        m.entry(k).or_default().insert(kf);
        KStore(Shared::new(m))
    }

    /// Continuation addresses reachable from `k`, `k` included.
    pub fn chain(&self, k: KAddr) -> BTreeSet<KAddr> {
        let mut seen = BTreeSet::from([k]);
        let mut work = vec![k];
        while let Some(k) = work.pop() {
            for kf in self.get(k) {
                if seen.insert(kf.next) {
                    work.push(kf.next);
                }
            }
        }
        seen
    }

    pub fn restrict(&self, keep: &BTreeSet<KAddr>) -> KStore {
        if self.0.keys().all(|k| keep.contains(k)) {
            return self.clone();
        }
        KStore(Shared::new(
            self.0.iter().filter(|(k, _)| keep.contains(k)).map(|(k, v)| (*k, v.clone())).collect(),
        ))
    }
}

impl fmt::Debug for KStore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_map().entries(self.0.iter()).finish()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BaseState {
    pub control: ControlState,
    pub kstore: KStore,
    pub kaddr: KAddr,
}

/// The finite-state machine as an ε-only oracle, so the graph solvers
/// compute its reachable states like any other.
#[derive(Debug, Clone, Copy)]
pub struct BaselineOracle<'p> {
    pub machine: Machine<'p>,
    pub gc: bool,
}

impl BaselineOracle<'_> {
    /// Drop value bindings and continuations unreachable from the state.
    /// Frames of every continuation on the chain count as roots.
    pub fn collect(&self, s: &BaseState) -> BaseState {
        let live = s.kstore.chain(s.kaddr);
        let frames = live.iter().flat_map(|k| s.kstore.get(*k)).map(|kf| &kf.frame);
        let mut roots: AddrSet = s.control.env.range().cloned().collect();
        roots.extend(stack_root(frames));
        let keep = reachable_from(roots, &s.control.store);
        BaseState {
            control: ControlState {
                store: s.control.store.restrict(&keep),
                ..s.control.clone()
            },
            kstore: s.kstore.restrict(&live),
            kaddr: s.kaddr,
        }
    }

    pub fn successors(&self, s: &BaseState) -> Vec<BaseState> {
        let collected;
        let s = if self.gc {
            collected = self.collect(s);
            &collected
        } else {
            s
        };
        let mut out = Vec::new();
        for (act, q) in self.machine.step_control(&s.control, None) {
            match act {
                StackAction::Eps => out.push(BaseState {
                    control: q,
                    kstore: s.kstore.clone(),
                    kaddr: s.kaddr,
                }),
                StackAction::Push(frame) => {
                    let k = KAddr::At(q.exp);
                    out.push(BaseState {
                        kstore: s.kstore.join(k, KFrame { frame, next: s.kaddr }),
                        control: q,
                        kaddr: k,
                    });
                }
                StackAction::Pop(_) => {}
            }
        }
        for kf in s.kstore.get(s.kaddr) {
            for (act, q) in self.machine.step_control(&s.control, Some(&kf.frame)) {
                if act.is_pop() {
                    out.push(BaseState {
                        control: q,
                        kstore: s.kstore.clone(),
                        kaddr: kf.next,
                    });
                }
            }
        }
        out
    }
}

impl Oracle for BaselineOracle<'_> {
    type State = BaseState;
    type Frame = AbsFrame;

    fn root(&self) -> BaseState {
        BaseState {
            control: self.machine.root(),
            kstore: KStore::default(),
            kaddr: KAddr::Halt,
        }
    }

    fn step(&self, q: &BaseState, top: Option<&AbsFrame>, _: &[&AbsFrame]) -> Vec<(StackAction<AbsFrame>, BaseState)> {
        if top.is_some() {
            return Vec::new();
        }
        self.successors(q).into_iter().map(|s| (StackAction::Eps, s)).collect()
    }

    fn observes_frames(&self) -> bool {
        false
    }
}
