mod common;

use std::collections::{BTreeSet, HashSet};

use common::small_programs;
use pdcfa_core::abstract_machine::{abs_inject, AbsConf, ControlState, Machine, Policy};
use pdcfa_core::analysis::{analyze, analyze_with, AnalysisConfig, Graph, Solver};
use pdcfa_core::corpus;
use pdcfa_core::dsg::{Bounds, Dsg, NodeCaches, Order, Solution, Summarizer};
use pdcfa_core::gc::gc_step;
use pdcfa_core::pushdown::{to_ipds, to_rpds, Oracle, StackAction};
use pdcfa_core::syntax::Program;

fn k0_configs() -> Vec<AnalysisConfig> {
    AnalysisConfig::grid(Bounds::nodes(20_000)).into_iter().filter(|c| c.k() == 0).collect()
}

#[test]
fn solvers_agree_on_small_corpus_cells() {
    for (name, p) in corpus::benchmarks() {
        for cfg in k0_configs() {
            let fast = analyze(&p, cfg);
            let slow = analyze_with(&p, cfg, Solver::Naive);
            assert!(fast.report.outcome.is_complete() && slow.report.outcome.is_complete(), "{name} {}", cfg.key());
            assert!(fast.graph.same_graph(&slow.graph), "{name} {}", cfg.key());
        }
    }
}

#[test]
fn solvers_agree_on_random_programs() {
    for (src, p) in small_programs(99, 60, 25) {
        for cfg in AnalysisConfig::grid(Bounds::nodes(20_000)) {
            let fast = analyze(&p, cfg);
            let slow = analyze_with(&p, cfg, Solver::Naive);
            assert!(fast.report.outcome.is_complete(), "{src} {}", cfg.key());
            assert!(fast.graph.same_graph(&slow.graph), "{src} {}", cfg.key());
            assert!(fast.graph.stackless_nodes().is_empty(), "{src} {}", cfg.key());
        }
    }
}

#[test]
fn worklist_order_does_not_change_the_graph() {
    let mut programs: Vec<(String, Program)> =
        corpus::benchmarks().into_iter().map(|(n, p)| (n.to_string(), p)).collect();
    programs.extend(small_programs(5, 20, 25));
    for (name, p) in &programs {
        for cfg in k0_configs() {
            let fifo = analyze(p, cfg);
            for seed in [1, 2, 3] {
                let shuffled = analyze(p, cfg.with_order(Order::Shuffled(seed)));
                assert!(fifo.graph.same_graph(&shuffled.graph), "{name} {} seed {seed}", cfg.key());
            }
        }
    }
}

fn check_growth<O: Oracle>(o: &O) {
    let mut s = Summarizer::new(o, Bounds::nodes(20_000), Order::Fifo);
    let mut sizes = s.sizes();
    let mut contexts: Vec<_> = s.caches().contexts.clone();
    let mut edges: BTreeSet<_> = s.dsg().edges().iter().cloned().collect();
    while s.step() {
        let now = s.sizes();
        assert!(now.nodes >= sizes.nodes && now.edges >= sizes.edges);
        assert!(now.summaries >= sizes.summaries && now.contexts >= sizes.contexts);
        let caches = s.caches();
        for (n, old) in contexts.iter().enumerate() {
            assert!(old.is_subset(&caches.contexts[n]), "contexts of node {n} shrank");
        }
        let now_edges: BTreeSet<_> = s.dsg().edges().iter().cloned().collect();
        assert!(edges.is_subset(&now_edges));
        sizes = now;
        contexts = caches.contexts.clone();
        edges = now_edges;
    }
    assert!(s.finish().is_complete());
}

#[test]
fn summarizer_only_grows() {
    for name in ["toy", "mj09", "kcfa2", "blur"] {
        let p = corpus::load(name).unwrap().unwrap();
        check_growth(&to_ipds(&p, Policy::Mono));
        check_growth(&to_rpds(&p, Policy::Mono));
        check_growth(&to_ipds(&p, Policy::KCfa(1)));
    }
}

#[test]
fn naive_rounds_within_bound() {
    let mut programs: Vec<Program> = corpus::benchmarks().into_iter().map(|(_, p)| p).collect();
    programs.extend(small_programs(8, 20, 25).into_iter().map(|(_, p)| p));
    for p in &programs {
        for cfg in k0_configs() {
            let a = analyze_with(p, cfg, Solver::Naive);
            let (rounds, frames, m) = match &a.graph {
                Graph::Pushdown(s) => (s.iterations, s.dsg.frames().len(), s.dsg.node_count()),
                Graph::Finite(s) => (s.iterations, s.dsg.frames().len(), s.dsg.node_count()),
            };
            assert!(rounds <= frames.max(1) * m * m, "{rounds} rounds for {m} nodes, {frames} frames");
        }
    }
}

/// Top frames and stack frames of every node, read off the stack automaton
/// by plain graph search.
fn nfa_frames<S>(g: &Dsg<S, pdcfa_core::abstract_machine::AbsFrame>, s: usize) -> (BTreeSet<usize>, BTreeSet<usize>) {
    let nfa = pdcfa_core::dsg::stacks_nfa(g, s);
    let live = nfa.live_states();
    let mut co = vec![false; nfa.states];
    let mut eps_co = vec![false; nfa.states];
    co[s] = true;
    eps_co[s] = true;
    for _ in 0..nfa.states {
        for (a, f, b) in &nfa.transitions {
            co[*a] |= co[*b];
            if f.is_none() {
                eps_co[*a] |= eps_co[*b];
            }
        }
    }
    let pick = |target: &[bool]| -> BTreeSet<usize> {
        nfa.transitions.iter().filter_map(|(a, f, b)| f.filter(|_| live[*a] && target[*b])).collect()
    };
    (pick(&eps_co), pick(&co))
}

fn check_caches<S>(sol: &Solution<S, pdcfa_core::abstract_machine::AbsFrame>) {
    let caches: &NodeCaches = &sol.caches;
    for n in 0..sol.dsg.node_count() {
        let (tops, all) = nfa_frames(&sol.dsg, n);
        assert_eq!(caches.top_frames(n), tops, "node {n}");
        assert_eq!(pdcfa_core::dsg::top_frames_of(&sol.dsg, n), tops);
        assert_eq!(pdcfa_core::dsg::frame_set_of(&sol.dsg, n), all);
        if caches.observes {
            assert_eq!(caches.stack_frames(n), all, "node {n}");
        }
    }
}

#[test]
fn caches_match_stack_automata() {
    let mut programs: Vec<Program> = corpus::benchmarks().into_iter().map(|(_, p)| p).collect();
    programs.extend(small_programs(13, 30, 25).into_iter().map(|(_, p)| p));
    let mut checked = 0;
    for p in &programs {
        for policy in [Policy::Mono, Policy::KCfa(1)] {
            for cfg in [AnalysisConfig::new(policy, true, true), AnalysisConfig::new(policy, true, false)] {
                let a = analyze(p, cfg.with_bounds(Bounds::nodes(200)));
                if let Graph::Pushdown(sol) = &a.graph {
                    if sol.is_complete() {
                        check_caches(sol);
                        checked += 1;
                    }
                }
            }
        }
    }
    assert!(checked > 100);
}

/// Every configuration reachable by the stack-carrying machine, provided
/// stacks stay within `depth`.
fn explore(p: &Program, policy: Policy, gc: bool, depth: usize) -> Option<HashSet<AbsConf>> {
    let m = Machine::new(p, policy);
    let c0 = abs_inject(p);
    let mut seen = HashSet::from([c0.clone()]);
    let mut work = vec![c0];
    while let Some(c) = work.pop() {
        let next = if gc { gc_step(&m, &c) } else { m.abs_step(&c) };
        for d in next {
            if d.kont.len() > depth || seen.len() > 50_000 {
                return None;
            }
            if seen.insert(d.clone()) {
                work.push(d);
            }
        }
    }
    Some(seen)
}

fn pushdown_nodes(a: &Graph) -> HashSet<ControlState> {
    match a {
        Graph::Pushdown(s) => s.dsg.nodes().iter().cloned().collect(),
        Graph::Finite(_) => unreachable!(),
    }
}

#[test]
fn graph_nodes_match_explicit_exploration() {
    let mut compared = 0;
    for (src, p) in small_programs(21, 100, 25) {
        for policy in [Policy::Mono, Policy::KCfa(1)] {
            let Some(plain) = explore(&p, policy, false, 12) else { continue };
            let controls: HashSet<ControlState> = plain.iter().map(|c| c.control()).collect();
            let a = analyze(&p, AnalysisConfig::new(policy, true, false));
            assert_eq!(pushdown_nodes(&a.graph), controls, "{src}");
            let collected = explore(&p, policy, true, 12).expect("collection never deepens stacks");
            let gc_nodes = pushdown_nodes(&analyze(&p, AnalysisConfig::new(policy, true, true)).graph);
            assert!(collected.iter().all(|c| gc_nodes.contains(&c.control())), "{src}");
            compared += 1;
        }
    }
    assert!(compared >= 100);
}

#[test]
fn pop_edges_only_pop_pushed_frames() {
    for (_, p) in small_programs(34, 30, 25) {
        let a = analyze(&p, AnalysisConfig::new(Policy::Mono, true, true));
        let Graph::Pushdown(sol) = &a.graph else { unreachable!() };
        let pushed: BTreeSet<usize> =
            sol.dsg.edges().iter().filter_map(|(_, act, _)| if let StackAction::Push(f) = act { Some(*f) } else { None }).collect();
        for (_, act, _) in sol.dsg.edges() {
            if let StackAction::Pop(f) = act {
                assert!(pushed.contains(f));
            }
        }
    }
}
