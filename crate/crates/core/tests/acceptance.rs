//! The acceptance gate. Each criterion prints one PASS/FAIL line and then
//! asserts it. Run with `--nocapture` to see the lines.

mod common;

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use common::abs::{brute_reachable, random_conf};
use common::{rng, small_programs};
use pdcfa_core::abstract_machine::{abs_atomic_eval, Policy};
use pdcfa_core::analysis::{analyze, analyze_with, check_graph, AnalysisConfig, AnalysisReport, Solver};
use pdcfa_core::corpus;
use pdcfa_core::dsg::Bounds;
use pdcfa_core::gc::{collect, reachable_addrs};
use pdcfa_core::pushdown::{net, stackify, StackAction};
use pdcfa_core::syntax::{Atom, Exp, LamId, PrimOp, Program, Var};
use rand::Rng;

/// Cap for corpus cells. Cells beyond it are reported, not hidden.
const CORPUS_NODES: usize = 50_000;
const FUEL: usize = 100_000;

fn corpus_bounds() -> Bounds {
    Bounds { max_nodes: CORPUS_NODES, max_iters: usize::MAX, time_limit: Some(Duration::from_secs(120)) }
}

fn verdict(n: u32, pass: bool, detail: &str) {
    println!("criterion {n}: {} {detail}", if pass { "PASS" } else { "FAIL" });
}

#[test]
fn criterion_1_solver_equivalence() {
    let start = Instant::now();
    let mut failures = Vec::new();
    let mut cells = 0;
    for (name, p) in corpus::benchmarks() {
        for cfg in AnalysisConfig::grid(corpus_bounds()) {
            let fast = analyze(&p, cfg);
            let slow = analyze_with(&p, cfg, Solver::Naive);
            cells += 1;
            if !fast.report.outcome.is_complete() || !slow.report.outcome.is_complete() {
                failures.push(format!("{name} {}: not solved within {CORPUS_NODES} nodes", cfg.key()));
            } else if !fast.graph.same_graph(&slow.graph) {
                failures.push(format!("{name} {}: graphs differ", cfg.key()));
            }
        }
    }
    for (src, p) in small_programs(1, 100, 25) {
        for cfg in AnalysisConfig::grid(corpus_bounds()) {
            let fast = analyze(&p, cfg);
            let slow = analyze_with(&p, cfg, Solver::Naive);
            cells += 1;
            if !fast.report.outcome.is_complete() || !fast.graph.same_graph(&slow.graph) {
                failures.push(format!("{src} {}: graphs differ", cfg.key()));
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = failures.is_empty() && elapsed < Duration::from_secs(600);
    verdict(1, pass, &format!("{} of {cells} cells equal in {:.1}s {failures:?}", cells - failures.len(), elapsed.as_secs_f64()));
    assert!(pass);
}

#[test]
fn criterion_2_soundness() {
    let mut failures = Vec::new();
    let mut checked = 0;
    for (name, p) in corpus::benchmarks() {
        for cfg in AnalysisConfig::grid(corpus_bounds()) {
            let a = analyze(&p, cfg);
            if !a.report.outcome.is_complete() {
                failures.push(format!("{name} {}: analysis exceeded {CORPUS_NODES} nodes", cfg.key()));
                continue;
            }
            let v = check_graph(&p, cfg, &a.graph, FUEL);
            checked += 1;
            if !v.is_sound() {
                failures.push(format!("{name} {}: {v:?}", cfg.key()));
            }
        }
    }
    let pass = failures.is_empty();
    verdict(2, pass, &format!("{checked} of 56 cells checked sound {failures:?}"));
    assert!(pass);
}

fn states(p: &Program, pushdown: bool, gc: bool) -> usize {
    let r = analyze(p, AnalysisConfig::new(Policy::Mono, pushdown, gc)).report;
    assert!(r.outcome.is_complete());
    r.states
}

#[test]
fn criterion_3_toy_ordering() {
    let p = corpus::load("toy").unwrap().unwrap();
    let (base, pd, gc, fused) = (states(&p, false, false), states(&p, true, false), states(&p, false, true), states(&p, true, true));
    let pass = fused <= pd.min(gc) && pd <= base && gc <= base;
    let within = |ours: usize, target: f64| ((ours as f64 - target) / target).abs() <= 0.3;
    let reference = [(base, 653.0), (pd, 139.0), (gc, 105.0), (fused, 77.0)];
    let notes: Vec<String> = reference
        .iter()
        .map(|(o, t)| format!("{o} vs {t} ({})", if within(*o, *t) { "within 30%" } else { "outside 30%" }))
        .collect();
    verdict(3, pass, &format!("baseline/pushdown/gc/fused = {base}/{pd}/{gc}/{fused}; reference {}", notes.join(", ")));
    assert!(pass);
}

fn cell<'a>(grid: &'a [(String, AnalysisReport)], key: &str) -> &'a AnalysisReport {
    &grid.iter().find(|(k, _)| k == key).unwrap().1
}

#[test]
fn criterion_4_singletons() {
    let targets = [("mj09", 4), ("eta", 8), ("kcfa2", 4), ("kcfa3", 5), ("blur", 9), ("loop2", 4), ("sat", 6)];
    let mut misses = Vec::new();
    let mut drops = Vec::new();
    let mut unresolved = Vec::new();
    let mut table = Vec::new();
    for (name, target) in targets {
        let p = corpus::load(name).unwrap().unwrap();
        let grid: Vec<(String, AnalysisReport)> =
            AnalysisConfig::grid(corpus_bounds()).into_iter().map(|c| (c.key(), analyze(&p, c).report)).collect();
        let fused = cell(&grid, "k0-pdcfa-gc");
        table.push(format!("{name}={}", fused.singletons));
        if !fused.outcome.is_complete() || fused.singletons.abs_diff(target) > 1 {
            misses.push(format!("{name}: {} vs {target}", fused.singletons));
        }
        for k in [0, 1] {
            for kind in ["cfa", "pdcfa"] {
                let plain = cell(&grid, &format!("k{k}-{kind}"));
                let gc = cell(&grid, &format!("k{k}-{kind}-gc"));
                if !plain.outcome.is_complete() || !gc.outcome.is_complete() {
                    unresolved.push(format!("{name} k{k}-{kind}"));
                } else if gc.singletons < plain.singletons {
                    drops.push(format!("{name} k{k}-{kind}: {} -> {}", plain.singletons, gc.singletons));
                }
            }
        }
    }
    let pass = misses.is_empty() && drops.is_empty() && unresolved.is_empty();
    verdict(
        4,
        pass,
        &format!(
            "fused k=0 singletons {}; off by more than 1: {misses:?}; gc drops: {drops:?}; incomplete rows: {unresolved:?}",
            table.join(" ")
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_5_worst_case() {
    let p = corpus::load("kcfa3").unwrap().unwrap();
    let cap = Bounds { max_nodes: 50_000, max_iters: usize::MAX, time_limit: Some(Duration::from_secs(60)) };
    let base = analyze(&p, AnalysisConfig::new(Policy::KCfa(1), false, false).with_bounds(cap)).report;
    let fused = analyze(&p, AnalysisConfig::new(Policy::KCfa(1), true, true).with_bounds(cap)).report;
    let base_blows_up = !base.outcome.is_complete();
    let fused_small = fused.outcome.is_complete() && fused.states <= 500 && fused.elapsed < Duration::from_secs(60);
    let pass = base_blows_up && fused_small;
    verdict(
        5,
        pass,
        &format!(
            "baseline {} states ({}), fused {} states ({}, {} ms)",
            base.states,
            base.outcome,
            fused.states,
            fused.outcome,
            fused.elapsed.as_millis()
        ),
    );
    assert!(pass);
}

fn random_actions(r: &mut impl Rng) -> Vec<StackAction<u8>> {
    let len = r.gen_range(0..=10);
    (0..len)
        .map(|_| match r.gen_range(0..3) {
            0 => StackAction::Eps,
            1 => StackAction::Push(r.gen_range(0..3)),
            _ => StackAction::Pop(r.gen_range(0..3)),
        })
        .collect()
}

#[test]
fn criterion_6_stack_algebra() {
    let mut r = rng(6);
    let mut bad = 0;
    for _ in 0..10_000 {
        let xs = random_actions(&mut r);
        let once = net(&xs);
        let normal = !once.contains(&StackAction::Eps)
            && once.windows(2).all(|w| !matches!((&w[0], &w[1]), (StackAction::Push(a), StackAction::Pop(b)) if a == b));
        let pop_free = once.iter().all(|a| !a.is_pop());
        if net(&once) != once || !normal || stackify(&xs).is_some() != pop_free {
            bad += 1;
        }
    }
    verdict(6, bad == 0, &format!("{bad} of 10000 sequences violate a law"));
    assert_eq!(bad, 0);
}

#[test]
fn criterion_7_collection() {
    let mut r = rng(7);
    let mut bad = 0;
    for _ in 0..1_000 {
        let c = random_conf(&mut r);
        let g = collect(&c);
        let mut vars: BTreeSet<Var> = c.env.iter().map(|(v, _)| v).collect();
        vars.extend(c.kont.iter().flat_map(|f| f.env.iter().map(|(v, _)| v)));
        let preserved = vars.iter().all(|v| {
            abs_atomic_eval(Atom::Var(*v), &c.env, &c.store) == abs_atomic_eval(Atom::Var(*v), &g.env, &g.store)
                && c.kont.iter().all(|f| {
                    abs_atomic_eval(Atom::Var(*v), &f.env, &c.store) == abs_atomic_eval(Atom::Var(*v), &f.env, &g.store)
                })
        });
        if collect(&g) != g || !preserved || reachable_addrs(&c) != brute_reachable(&c) {
            bad += 1;
        }
    }
    verdict(7, bad == 0, &format!("{bad} of 1000 configurations violate a law"));
    assert_eq!(bad, 0);
}

#[test]
fn criterion_8_legality() {
    let mut bad = Vec::new();
    let mut graphs = 0;
    for (name, p) in corpus::benchmarks() {
        for cfg in AnalysisConfig::grid(corpus_bounds()) {
            let a = analyze(&p, cfg);
            graphs += 1;
            let stuck = a.graph.stackless_nodes();
            if !stuck.is_empty() {
                bad.push(format!("{name} {}: {} nodes", cfg.key(), stuck.len()));
            }
        }
    }
    verdict(8, bad.is_empty(), &format!("{graphs} graphs, every node has a realizable stack unless listed: {bad:?}"));
    assert!(bad.is_empty());
}

/// The lambda of `g` in the toy program: the one over `n` that adds.
/// Binding forms normalize to lambdas too, so the formal name matters.
fn adding_lambda(p: &Program) -> LamId {
    let adds = |id: LamId| {
        p.subtree(p.lam(id).body)
            .into_iter()
            .any(|l| matches!(p.exp(l), Exp::Call(c) if c.func == Atom::Prim(PrimOp::Add)))
    };
    let found: Vec<LamId> = (0..p.lams().len() as u32)
        .map(LamId)
        .filter(|id| matches!(&p.lam(*id).formals[..], [v] if p.name(*v) == "n") && adds(*id))
        .collect();
    assert_eq!(found.len(), 1, "exactly one adding lambda over n");
    found[0]
}

/// The variable bound to the result of `(id g)`.
fn id_g_result(p: &Program) -> Var {
    p.exps()
        .iter()
        .find_map(|e| match e {
            Exp::Let { binder, call, .. } => match p.exp(*call) {
                Exp::Call(c)
                    if matches!(c.func, Atom::Var(v) if p.name(v) == "id")
                        && matches!(c.args[..], [Atom::Var(v)] if p.name(v) == "g") =>
                {
                    Some(*binder)
                }
                _ => None,
            },
            _ => None,
        })
        .expect("toy program calls (id g)")
}

#[test]
fn criterion_9_cross_flow_recovery() {
    let p = corpus::load("toy").unwrap().unwrap();
    let r = analyze(&p, AnalysisConfig::new(Policy::Mono, true, true)).report;
    let temp = id_g_result(&p);
    let g_lam = adding_lambda(&p);
    let flows = r.flow_sets.get(&temp).cloned().unwrap_or_default();
    let pass = flows == BTreeSet::from([g_lam]);
    verdict(9, pass, &format!("(id g) result {} flows to {flows:?}, expected {{{g_lam:?}}}", p.name(temp)));
    assert!(pass);
}
