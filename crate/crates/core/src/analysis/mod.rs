//! The analysis grid: finite-state or pushdown, with or without abstract
//! garbage collection, at a chosen allocation policy.

pub mod baseline;
pub mod soundness;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::time::{Duration, Instant};

use crate::abstract_machine::{AbsFrame, AbsStore, AbsVal, Alpha, ControlState, Machine, Policy};
use crate::dsg::{naive_solve, stacks_nfa, BoundExceeded, Bounds, Order, Solution, Summarizer};
use crate::pushdown::Oracle;
use crate::pushdown::{to_ipds, to_rpds};
use crate::syntax::{LamId, Program, Var};

pub use baseline::{BaseState, BaselineOracle, KAddr, KFrame, KStore};
pub use soundness::Verdict;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AnalysisConfig {
    pub policy: Policy,
    pub pushdown: bool,
    pub gc: bool,
    pub bounds: Bounds,
    pub order: Order,
}

impl AnalysisConfig {
    pub fn new(policy: Policy, pushdown: bool, gc: bool) -> Self {
        AnalysisConfig {
            policy,
            pushdown,
            gc,
            bounds: Bounds::default(),
            order: Order::Fifo,
        }
    }

    pub fn with_bounds(self, bounds: Bounds) -> Self {
        AnalysisConfig { bounds, ..self }
    }

    pub fn with_order(self, order: Order) -> Self {
        AnalysisConfig { order, ..self }
    }

    /// Context depth of the policy; 0 for policies that never split on
    /// call history.
    pub fn k(&self) -> usize {
        match self.policy {
            Policy::Mono | Policy::PolySplit => 0,
            Policy::OneCfa => 1,
            Policy::KCfa(k) => k,
        }
    }

    /// Grid cell name: `k0-cfa`, `k1-pdcfa-gc` and so on.
    pub fn key(&self) -> String {
        format!(
            "k{}-{}{}",
            self.k(),
            if self.pushdown { "pdcfa" } else { "cfa" },
            if self.gc { "-gc" } else { "" }
        )
    }

    /// The eight grid cells in table order: for k = 0 then k = 1, the
    /// finite-state analysis then the pushdown one, each without and with
    /// collection.
    pub fn grid(bounds: Bounds) -> Vec<AnalysisConfig> {
        let mut out = Vec::with_capacity(8);
        for policy in [Policy::Mono, Policy::KCfa(1)] {
            for pushdown in [false, true] {
                for gc in [false, true] {
                    out.push(AnalysisConfig::new(policy, pushdown, gc).with_bounds(bounds));
                }
            }
        }
        out
    }
}

impl fmt::Display for AnalysisConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}{}",
            self.policy,
            if self.pushdown { "pushdown" } else { "finite" },
            if self.gc { " +gc" } else { "" }
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnalysisOutcome {
    Complete,
    BoundExceeded(BoundExceeded),
}

impl AnalysisOutcome {
    fn of(r: Result<(), BoundExceeded>) -> Self {
        match r {
            Ok(()) => AnalysisOutcome::Complete,
            Err(e) => AnalysisOutcome::BoundExceeded(e),
        }
    }

    pub fn is_complete(self) -> bool {
        self == AnalysisOutcome::Complete
    }
}

impl fmt::Display for AnalysisOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AnalysisOutcome::Complete => f.write_str("complete"),
            AnalysisOutcome::BoundExceeded(_) => f.write_str("boundExceeded"),
        }
    }
}

pub type FlowSets = BTreeMap<Var, BTreeSet<LamId>>;

#[derive(Debug, Clone)]
pub struct AnalysisReport {
    pub config: AnalysisConfig,
    pub states: usize,
    pub edges: usize,
    /// Lambdas that may be bound to each variable, over every reachable
    /// state. Variables never bound to a lambda map to the empty set.
    pub flow_sets: FlowSets,
    pub singletons: usize,
    pub elapsed: Duration,
    pub outcome: AnalysisOutcome,
}

/// A solved graph of either kind.
#[derive(Debug, Clone)]
pub enum Graph {
    Pushdown(Solution<ControlState, AbsFrame>),
    Finite(Solution<BaseState, AbsFrame>),
}

impl Graph {
    pub fn node_count(&self) -> usize {
        match self {
            Graph::Pushdown(s) => s.dsg.node_count(),
            Graph::Finite(s) => s.dsg.node_count(),
        }
    }

    pub fn edge_count(&self) -> usize {
        match self {
            Graph::Pushdown(s) => s.dsg.edge_count(),
            Graph::Finite(s) => s.dsg.edge_count(),
        }
    }

    pub fn outcome(&self) -> Result<(), BoundExceeded> {
        match self {
            Graph::Pushdown(s) => s.outcome,
            Graph::Finite(s) => s.outcome,
        }
    }

    /// Node-for-node and edge-for-edge equality, ignoring ids.
    pub fn same_graph(&self, other: &Graph) -> bool {
        match (self, other) {
            (Graph::Pushdown(a), Graph::Pushdown(b)) => a.dsg.same_graph(&b.dsg),
            (Graph::Finite(a), Graph::Finite(b)) => a.dsg.same_graph(&b.dsg),
            _ => false,
        }
    }

    /// Nodes whose stack automaton accepts nothing. Empty for every
    /// graph a solver produces.
    pub fn stackless_nodes(&self) -> Vec<usize> {
        let live = match self {
            Graph::Pushdown(s) => stacks_nfa(&s.dsg, s.dsg.root()).live_states(),
            Graph::Finite(s) => stacks_nfa(&s.dsg, s.dsg.root()).live_states(),
        };
        live.iter().enumerate().filter(|(_, l)| !**l).map(|(i, _)| i).collect()
    }

    pub fn stores(&self) -> Box<dyn Iterator<Item = &AbsStore> + '_> {
        match self {
            Graph::Pushdown(s) => Box::new(s.dsg.nodes().iter().map(|q| &q.store)),
            Graph::Finite(s) => Box::new(s.dsg.nodes().iter().map(|b| &b.control.store)),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub report: AnalysisReport,
    pub graph: Graph,
}

pub fn flow_sets<'a>(p: &Program, stores: impl Iterator<Item = &'a AbsStore>) -> FlowSets {
    let mut flows: FlowSets = p.vars().map(|v| (v, BTreeSet::new())).collect();
    let mut seen: rustc_hash::FxHashSet<&AbsStore> = Default::default();
    for store in stores {
        if !seen.insert(store) {
            continue;
        }
        for (addr, vals) in store.iter() {
            let lams = flows.entry(addr.var()).or_default();
            lams.extend(vals.iter().filter_map(|v| match v {
                AbsVal::Clo(id, _) => Some(*id),
                _ => None,
            }));
        }
    }
    flows
}

pub fn singletons(flows: &FlowSets) -> usize {
    flows.values().filter(|s| s.len() == 1).count()
}

/// Which graph solver computes the reachable graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Solver {
    /// Incremental worklist with summary edges.
    Summarize,
    /// Round-based fixpoint, for cross-checking.
    Naive,
}

/// Solve `p` under `cfg` and keep the graph.
pub fn analyze(p: &Program, cfg: AnalysisConfig) -> Analysis {
    analyze_with(p, cfg, Solver::Summarize)
}

pub fn analyze_with(p: &Program, cfg: AnalysisConfig, solver: Solver) -> Analysis {
    let start = Instant::now();
    fn run<O: Oracle>(o: &O, cfg: AnalysisConfig, solver: Solver) -> Solution<O::State, O::Frame> {
        match solver {
            Solver::Summarize => Summarizer::new(o, cfg.bounds, cfg.order).run(),
            Solver::Naive => naive_solve(o, cfg.bounds),
        }
    }
    let graph = match (cfg.pushdown, cfg.gc) {
        (true, true) => Graph::Pushdown(run(&to_ipds(p, cfg.policy), cfg, solver)),
        (true, false) => Graph::Pushdown(run(&to_rpds(p, cfg.policy), cfg, solver)),
        (false, gc) => Graph::Finite(run(&baseline_oracle(p, cfg.policy, gc), cfg, solver)),
    };
    let elapsed = start.elapsed();
    let flows = flow_sets(p, graph.stores());
    let report = AnalysisReport {
        config: cfg,
        states: graph.node_count(),
        edges: graph.edge_count(),
        singletons: singletons(&flows),
        flow_sets: flows,
        elapsed,
        outcome: AnalysisOutcome::of(graph.outcome()),
    };
    Analysis { report, graph }
}

pub fn run_analysis(p: &Program, cfg: AnalysisConfig) -> AnalysisReport {
    analyze(p, cfg).report
}

pub fn baseline_oracle(p: &Program, policy: Policy, gc: bool) -> BaselineOracle<'_> {
    BaselineOracle {
        machine: Machine::new(p, policy),
        gc,
    }
}

/// The finite-state analysis alone.
pub fn finite_baseline(p: &Program, policy: Policy, gc: bool, bounds: Bounds) -> AnalysisReport {
    run_analysis(p, AnalysisConfig::new(policy, false, gc).with_bounds(bounds))
}

/// Check a solved graph against a concrete run of at most `fuel` steps.
pub fn check_graph(p: &Program, cfg: AnalysisConfig, graph: &Graph, fuel: usize) -> Verdict {
    let alpha = Alpha { policy: cfg.policy };
    match graph {
        Graph::Pushdown(s) => soundness::check_pushdown(p, alpha, cfg.gc, &s.dsg, fuel),
        Graph::Finite(s) => soundness::check_finite(p, alpha, cfg.gc, &s.dsg, fuel),
    }
}

/// Analyze, then check the result against a concrete run.
pub fn soundness_harness(p: &Program, cfg: AnalysisConfig, fuel: usize) -> Verdict {
    check_graph(p, cfg, &analyze(p, cfg).graph, fuel)
}

/// All eight grid cells, keyed and ordered as in [`AnalysisConfig::grid`].
pub fn compare_grid(p: &Program, bounds: Bounds) -> Vec<(String, AnalysisReport)> {
    AnalysisConfig::grid(bounds)
        .into_iter()
        .map(|cfg| (cfg.key(), run_analysis(p, cfg)))
        .collect()
}

fn cell<'a>(grid: &'a [(String, AnalysisReport)], key: &str) -> Option<&'a AnalysisReport> {
    grid.iter().find(|(k, _)| k == key).map(|(_, r)| r)
}

/// Relational properties every grid must satisfy, as human-readable
/// violations. Cells that hit a bound only take part where the bound
/// itself settles the comparison.
pub fn grid_violations(name: &str, grid: &[(String, AnalysisReport)]) -> Vec<String> {
    let mut out = Vec::new();
    for k in [0, 1] {
        for kind in ["cfa", "pdcfa"] {
            let (Some(plain), Some(gc)) = (cell(grid, &format!("k{k}-{kind}")), cell(grid, &format!("k{k}-{kind}-gc"))) else {
                continue;
            };
            if plain.outcome.is_complete() && gc.outcome.is_complete() && gc.singletons < plain.singletons {
                out.push(format!(
                    "{name} k{k}-{kind}: singletons drop from {} to {} with collection",
                    plain.singletons, gc.singletons
                ));
            }
        }
        for gc in ["", "-gc"] {
            let (Some(base), Some(pd)) = (cell(grid, &format!("k{k}-cfa{gc}")), cell(grid, &format!("k{k}-pdcfa{gc}"))) else {
                continue;
            };
            if pd.outcome.is_complete() && base.states < pd.states {
                out.push(format!(
                    "{name} k{k}{gc}: finite-state analysis has {} states, pushdown {}",
                    base.states, pd.states
                ));
            }
        }
        if let (Some(pd), Some(fused)) = (cell(grid, &format!("k{k}-pdcfa")), cell(grid, &format!("k{k}-pdcfa-gc"))) {
            if pd.outcome.is_complete() && fused.outcome.is_complete() {
                for (v, lams) in &fused.flow_sets {
                    let wider = pd.flow_sets.get(v).cloned().unwrap_or_default();
                    if !lams.is_subset(&wider) {
                        out.push(format!("{name} k{k}: collection adds flows to variable {}", v.0));
                    }
                }
            }
        }
    }
    out
}
