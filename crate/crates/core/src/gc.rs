//! Abstract garbage collection.

use std::collections::BTreeSet;

use crate::abstract_machine::{AbsAddr, AbsConf, AbsEnv, AbsFrame, AbsStore, AbsVal, ControlState, Machine};

pub type AddrSet = BTreeSet<AbsAddr>;

/// Addresses held by frame environments. Order is irrelevant, so any
/// collection of frames works.
pub fn stack_root<'a>(frames: impl IntoIterator<Item = &'a AbsFrame>) -> AddrSet {
    frames.into_iter().flat_map(|f| f.env.range().cloned()).collect()
}

pub fn root(c: &AbsConf) -> AddrSet {
    let mut out: AddrSet = c.env.range().cloned().collect();
    out.extend(stack_root(&c.kont));
    out
}

/// Addresses held by closures stored at `a`.
pub fn adjacent(a: &AbsAddr, store: &AbsStore) -> AddrSet {
    let mut out = AddrSet::new();
    if let Some(vals) = store.get(a) {
        for v in vals {
            if let AbsVal::Clo(_, env) = v {
                out.extend(env.range().cloned());
            }
        }
    }
    out
}

/// Everything reachable from `roots` through closure environments.
/// Roots are included even when unbound.
pub fn reachable_from(roots: AddrSet, store: &AbsStore) -> AddrSet {
    let mut seen = roots;
    let mut work: Vec<AbsAddr> = seen.iter().cloned().collect();
    let mut envs_done: BTreeSet<&AbsEnv> = BTreeSet::new();
    while let Some(a) = work.pop() {
        let Some(vals) = store.get(&a) else { continue };
        for v in vals {
            let AbsVal::Clo(_, env) = v else { continue };
            if !envs_done.insert(env) {
                continue;
            }
            for b in env.range() {
                if seen.insert(b.clone()) {
                    work.push(b.clone());
                }
            }
        }
    }
    seen
}

pub fn reachable_addrs(c: &AbsConf) -> AddrSet {
    reachable_from(root(c), &c.store)
}

/// Restrict the store to the reachable addresses.
pub fn collect(c: &AbsConf) -> AbsConf {
    AbsConf {
        store: c.store.restrict(&reachable_addrs(c)),
        ..c.clone()
    }
}

/// Collect a control state whose stack holds exactly the frames in
/// `frames` (in any order and multiplicity).
pub fn collect_control<'a>(q: &ControlState, frames: impl IntoIterator<Item = &'a AbsFrame>) -> ControlState {
    let mut roots: AddrSet = q.env.range().cloned().collect();
    roots.extend(stack_root(frames));
    ControlState {
        store: q.store.restrict(&reachable_from(roots, &q.store)),
        ..q.clone()
    }
}

/// Collect, then step.
pub fn gc_step(m: &Machine<'_>, c: &AbsConf) -> Vec<AbsConf> {
    m.abs_step(&collect(c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abstract_machine::{abs_inject, Policy, ValSet};
    use crate::syntax::{compile, Label, LamId, Var};
    use std::collections::{BTreeMap, HashSet};
    use std::sync::Arc;

    fn a(i: u32) -> AbsAddr {
        AbsAddr::Mono(Var(i))
    }

    fn env(pairs: &[(u32, u32)]) -> AbsEnv {
        AbsEnv::new(pairs.iter().map(|(v, x)| (Var(*v), a(*x))).collect())
    }

    fn frame(e: AbsEnv) -> AbsFrame {
        AbsFrame { binder: Var(9), body: Label(0), env: e }
    }

    fn clo(e: AbsEnv) -> ValSet {
        ValSet::from([AbsVal::Clo(LamId(0), e)])
    }

    fn conf(e: AbsEnv, store: BTreeMap<AbsAddr, ValSet>, kont: Vec<AbsFrame>) -> AbsConf {
        AbsConf { exp: Label(0), env: e, store: AbsStore::new(store), kont, history: Arc::from(vec![]) }
    }

    #[test]
    fn roots() {
        assert!(stack_root(&[]).is_empty());
        assert_eq!(stack_root(&[frame(env(&[(1, 2)]))]), AddrSet::from([a(2)]));
        assert_eq!(stack_root(&[frame(env(&[(0, 1)])), frame(env(&[(1, 2)]))]), AddrSet::from([a(1), a(2)]));
        let c = conf(env(&[(0, 1)]), BTreeMap::new(), vec![frame(env(&[(1, 2), (3, 1)]))]);
        assert_eq!(root(&c), AddrSet::from([a(1), a(2)]));
        assert!(root(&conf(AbsEnv::default(), BTreeMap::new(), vec![])).is_empty());
    }

    #[test]
    fn adjacency_follows_closures_only() {
        let store = AbsStore::new(BTreeMap::from([
            (a(0), clo(env(&[(5, 1)]))),
            (a(2), ValSet::from([AbsVal::Num])),
        ]));
        assert_eq!(adjacent(&a(0), &store), AddrSet::from([a(1)]));
        assert!(adjacent(&a(2), &store).is_empty());
        assert!(adjacent(&a(7), &store).is_empty());
    }

    #[test]
    fn chains_and_cycles() {
        let store = BTreeMap::from([(a(0), clo(env(&[(1, 1)]))), (a(1), clo(env(&[(2, 2)])))]);
        let c = conf(env(&[(0, 0)]), store, vec![]);
        assert_eq!(reachable_addrs(&c), AddrSet::from([a(0), a(1), a(2)]));
        let store = BTreeMap::from([(a(0), clo(env(&[(1, 1)]))), (a(1), clo(env(&[(0, 0)])))]);
        let c = conf(env(&[(0, 0)]), store, vec![]);
        assert_eq!(reachable_addrs(&c), AddrSet::from([a(0), a(1)]));
    }

    #[test]
    fn collect_drops_garbage_and_is_idempotent() {
        let store = BTreeMap::from([(a(0), ValSet::from([AbsVal::Num])), (a(4), ValSet::from([AbsVal::Bool]))]);
        let c = conf(env(&[(0, 0)]), store, vec![]);
        let g = collect(&c);
        assert_eq!(g.store.iter().map(|(k, _)| k.clone()).collect::<AddrSet>(), AddrSet::from([a(0)]));
        assert_eq!(collect(&g), g);
    }

    #[test]
    fn dead_bindings_stop_splitting_successors() {
        // Two configurations differing only in a dead closure binding have two
        // distinct successors without collection and a single one with it.
        let p = compile("((lambda (f) (f 1)) (lambda (x) x))").unwrap();
        let m = Machine::new(&p, Policy::Mono);
        let base = abs_inject(&p);
        let with_dead = |e: AbsEnv| AbsConf {
            store: AbsStore::new(BTreeMap::from([(a(42), clo(e))])),
            ..base.clone()
        };
        let (c1, c2) = (with_dead(AbsEnv::default()), with_dead(env(&[(0, 0)])));
        let plain: HashSet<AbsConf> = [&c1, &c2].into_iter().flat_map(|c| m.abs_step(c)).collect();
        let collected: HashSet<AbsConf> = [&c1, &c2].into_iter().flat_map(|c| gc_step(&m, c)).collect();
        assert_eq!(plain.len(), 2);
        assert_eq!(collected.len(), 1);
    }

    #[test]
    fn empty_store_gc_step_is_abs_step() {
        let p = compile("((lambda (x) x) (lambda (y) y))").unwrap();
        let m = Machine::new(&p, Policy::Mono);
        let c = abs_inject(&p);
        assert_eq!(gc_step(&m, &c), m.abs_step(&c));
        assert_eq!(gc_step(&m, &collect(&c)), gc_step(&m, &c));
    }
}
