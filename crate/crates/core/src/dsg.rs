//! Dyck state graphs: the explicit reachable fragment of a pushdown system.
//!
//! Two solvers build the same graph. [`naive_solve`] iterates the frontier
//! operator in rounds, recomputing everything it knows about stacks from the
//! current graph each round. [`Summarizer`] is an incremental worklist that
//! maintains same-level reachability and stack contexts as edges appear.
//!
//! A *context* of a node is the pair (top frame, set of frames) of one
//! realizable stack at that node. Oracles are queried once per distinct
//! context, so introspection sees exactly the frames of a stack that can
//! actually be there.

use std::collections::{BTreeSet, VecDeque};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustc_hash::{FxHashMap, FxHashSet};
use thiserror::Error;

use crate::pushdown::{Nfa, Oracle, StackAction};

pub type NodeId = usize;
pub type FrameId = usize;
pub type Edge = (NodeId, StackAction<FrameId>, NodeId);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum BoundExceeded {
    #[error("node cap of {0} exceeded")]
    Nodes(usize),
    #[error("iteration cap of {0} exceeded")]
    Iterations(usize),
    #[error("time limit of {0:?} exceeded")]
    Time(Duration),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bounds {
    pub max_nodes: usize,
    pub max_iters: usize,
    pub time_limit: Option<Duration>,
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds {
            max_nodes: 200_000,
            max_iters: usize::MAX,
            time_limit: Some(Duration::from_secs(60)),
        }
    }
}

impl Bounds {
    pub fn nodes(max_nodes: usize) -> Self {
        Bounds {
            max_nodes,
            ..Bounds::default()
        }
    }

    pub fn unlimited() -> Self {
        Bounds {
            max_nodes: usize::MAX,
            max_iters: usize::MAX,
            time_limit: None,
        }
    }
}

struct Clock {
    start: Instant,
    limit: Option<Duration>,
}

impl Clock {
    fn new(limit: Option<Duration>) -> Self {
        Clock { start: Instant::now(), limit }
    }

    fn check(&self) -> Result<(), BoundExceeded> {
        match self.limit {
            Some(l) if self.start.elapsed() > l => Err(BoundExceeded::Time(l)),
            _ => Ok(()),
        }
    }
}

/// Nodes, frames and edges of a Dyck state graph. Node 0 is the root.
/// Node and frame ids follow discovery order; [`Dsg::same_graph`] compares
/// graphs by content.
#[derive(Debug, Clone)]
pub struct Dsg<S, F> {
    nodes: Vec<S>,
    node_ids: FxHashMap<S, NodeId>,
    frames: Vec<F>,
    frame_ids: FxHashMap<F, FrameId>,
    edges: Vec<Edge>,
    edge_set: FxHashSet<Edge>,
}

impl<S: Clone + Eq + std::hash::Hash, F: Clone + Eq + std::hash::Hash> Dsg<S, F> {
    pub fn new(root: S) -> Self {
        let mut g = Dsg {
            nodes: Vec::new(),
            node_ids: FxHashMap::default(),
            frames: Vec::new(),
            frame_ids: FxHashMap::default(),
            edges: Vec::new(),
            edge_set: FxHashSet::default(),
        };
        g.intern_node(root);
        g
    }

    /// Build a graph from explicit edges; nodes appear in edge order.
    pub fn from_edges(root: S, edges: impl IntoIterator<Item = (S, StackAction<F>, S)>) -> Self {
        let mut g = Dsg::new(root);
        for (a, act, b) in edges {
            g.insert_edge(a, act, b);
        }
        g
    }

    pub fn id(&self, s: &S) -> Option<NodeId> {
        self.node_ids.get(s).copied()
    }

    pub fn frame_id(&self, f: &F) -> Option<FrameId> {
        self.frame_ids.get(f).copied()
    }

    pub fn intern_node(&mut self, s: S) -> (NodeId, bool) {
        if let Some(&n) = self.node_ids.get(&s) {
            return (n, false);
        }
        let n = self.nodes.len();
        self.nodes.push(s.clone());
        self.node_ids.insert(s, n);
        (n, true)
    }

    pub fn intern_frame(&mut self, f: F) -> FrameId {
        if let Some(&i) = self.frame_ids.get(&f) {
            return i;
        }
        let i = self.frames.len();
        self.frames.push(f.clone());
        self.frame_ids.insert(f, i);
        i
    }

    pub fn add_edge(&mut self, e: Edge) -> bool {
        if self.edge_set.insert(e.clone()) {
            self.edges.push(e);
            true
        } else {
            false
        }
    }

    pub fn insert_edge(&mut self, a: S, act: StackAction<F>, b: S) -> bool {
        let (a, _) = self.intern_node(a);
        let (b, _) = self.intern_node(b);
        let act = act.map(|f| self.intern_frame(f));
        self.add_edge((a, act, b))
    }

    /// The same graph with edge `i` removed. Nodes are kept.
    pub fn without_edge(&self, i: usize) -> Self {
        let mut g = self.clone();
        let e = g.edges.remove(i);
        g.edge_set.remove(&e);
        g
    }

    /// Content equality: same node states, same frames, same labelled edges.
    pub fn same_graph(&self, other: &Self) -> bool {
        if self.node_count() != other.node_count()
            || self.edge_count() != other.edge_count()
            || self.nodes[0] != other.nodes[0]
        {
            return false;
        }
        let node_map: Option<Vec<NodeId>> = self.nodes.iter().map(|s| other.id(s)).collect();
        let Some(node_map) = node_map else { return false };
        let frame_map: Option<Vec<FrameId>> = self.frames.iter().map(|f| other.frame_id(f)).collect();
        let Some(frame_map) = frame_map else { return false };
        self.edges.iter().all(|(a, act, b)| {
            let act = act.clone().map(|f| frame_map[f]);
            other.contains_edge(&(node_map[*a], act, node_map[*b]))
        })
    }
}

impl<S, F> Dsg<S, F> {
    pub fn root(&self) -> NodeId {
        0
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn nodes(&self) -> &[S] {
        &self.nodes
    }

    pub fn node(&self, n: NodeId) -> &S {
        &self.nodes[n]
    }

    pub fn frames(&self) -> &[F] {
        &self.frames
    }

    pub fn frame(&self, f: FrameId) -> &F {
        &self.frames[f]
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn contains_edge(&self, e: &Edge) -> bool {
        self.edge_set.contains(e)
    }
}

#[derive(Debug, Clone, Default)]
struct Adjacency {
    eps: Vec<Vec<NodeId>>,
    push: Vec<Vec<(FrameId, NodeId)>>,
    pop: Vec<Vec<(FrameId, NodeId)>>,
}

impl Adjacency {
    fn of<S, F>(g: &Dsg<S, F>) -> Self {
        let n = g.nodes.len();
        let mut adj = Adjacency {
            eps: vec![Vec::new(); n],
            push: vec![Vec::new(); n],
            pop: vec![Vec::new(); n],
        };
        for (a, act, b) in &g.edges {
            match act {
                StackAction::Eps => adj.eps[*a].push(*b),
                StackAction::Push(f) => adj.push[*a].push((*f, *b)),
                StackAction::Pop(f) => adj.pop[*a].push((*f, *b)),
            }
        }
        adj
    }

    fn push_targets(&self) -> BTreeSet<NodeId> {
        self.push.iter().flatten().map(|(_, x)| *x).collect()
    }
}

/// Same-level reachability from every *entry* (the root and every push
/// target): `reach[x]` holds the nodes reachable from `x` along paths whose
/// net stack effect is empty and that never pop below their start.
pub fn same_level_reach<S, F>(g: &Dsg<S, F>) -> FxHashMap<NodeId, FxHashSet<NodeId>> {
    let adj = Adjacency::of(g);
    let mut reach: FxHashMap<NodeId, FxHashSet<NodeId>> = FxHashMap::default();
    let mut callers: FxHashMap<NodeId, FxHashSet<(NodeId, FrameId)>> = FxHashMap::default();
    let mut work: Vec<(NodeId, NodeId)> = Vec::new();

    fn add(
        reach: &mut FxHashMap<NodeId, FxHashSet<NodeId>>,
        work: &mut Vec<(NodeId, NodeId)>,
        x: NodeId,
        y: NodeId,
    ) {
        if reach.entry(x).or_default().insert(y) {
            work.push((x, y));
        }
    }

    for x in std::iter::once(g.root()).chain(adj.push_targets()) {
        add(&mut reach, &mut work, x, x);
    }
    while let Some((x, y)) = work.pop() {
        for &z in &adj.eps[y] {
            add(&mut reach, &mut work, x, z);
        }
        for &(f, w) in &adj.push[y] {
            if !callers.entry(w).or_default().insert((x, f)) {
                continue;
            }
            let returns: Vec<NodeId> = reach[&w]
                .iter()
                .flat_map(|v| adj.pop[*v].iter().filter(|(h, _)| *h == f).map(|(_, z)| *z))
                .collect();
            for z in returns {
                add(&mut reach, &mut work, x, z);
            }
        }
        if let Some(cs) = callers.get(&x) {
            let returns: Vec<(NodeId, NodeId)> = cs
                .iter()
                .flat_map(|(caller, f)| {
                    adj.pop[y].iter().filter(move |(h, _)| h == f).map(move |(_, z)| (*caller, *z))
                })
                .collect();
            for (caller, z) in returns {
                add(&mut reach, &mut work, caller, z);
            }
        }
    }
    reach
}

/// Every pair (a, b) joined by a path with net-empty stack effect, as a
/// successor set per node (reflexive pairs omitted).
pub fn balanced_pairs<S, F>(g: &Dsg<S, F>) -> Vec<BTreeSet<NodeId>> {
    let adj = Adjacency::of(g);
    let reach = same_level_reach(g);
    // Summary steps: push a -f-> w, same-level w ~> v, pop v -f-> z.
    let mut step: Vec<Vec<NodeId>> = adj.eps.clone();
    for (a, pushes) in adj.push.iter().enumerate() {
        for (f, w) in pushes {
            for v in &reach[w] {
                for (h, z) in &adj.pop[*v] {
                    if h == f {
                        step[a].push(*z);
                    }
                }
            }
        }
    }
    (0..g.node_count())
        .map(|a| {
            let mut seen = BTreeSet::new();
            let mut work = vec![a];
            while let Some(x) = work.pop() {
                for &y in &step[x] {
                    if seen.insert(y) {
                        work.push(y);
                    }
                }
            }
            seen.remove(&a);
            seen
        })
        .collect()
}

/// Interned sets of frame ids. Id 0 is the empty set.
#[derive(Debug, Clone)]
pub struct FrameSets {
    sets: Vec<Vec<FrameId>>,
    ids: FxHashMap<Vec<FrameId>, usize>,
    with: FxHashMap<(usize, FrameId), usize>,
}

impl Default for FrameSets {
    fn default() -> Self {
        FrameSets {
            sets: vec![Vec::new()],
            ids: FxHashMap::from_iter([(Vec::new(), 0)]),
            with: FxHashMap::default(),
        }
    }
}

impl FrameSets {
    pub fn get(&self, id: usize) -> &[FrameId] {
        &self.sets[id]
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn with(&mut self, id: usize, f: FrameId) -> usize {
        if let Some(&r) = self.with.get(&(id, f)) {
            return r;
        }
        let mut set = self.sets[id].clone();
        if let Err(pos) = set.binary_search(&f) {
            set.insert(pos, f);
        }
        let r = match self.ids.get(&set) {
            Some(&r) => r,
            None => {
                let r = self.sets.len();
                self.sets.push(set.clone());
                self.ids.insert(set, r);
                r
            }
        };
        self.with.insert((id, f), r);
        r
    }
}

/// One realizable stack at a node, seen through its top frame and the set
/// of frames it holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Ctx {
    pub top: Option<FrameId>,
    pub frames: usize,
}

const EMPTY_CTX: Ctx = Ctx { top: None, frames: 0 };

/// Per-node stack contexts. Frame sets are tracked only when `observes`
/// is set; otherwise every context has the empty frame set.
#[derive(Debug, Clone, Default)]
pub struct NodeCaches {
    pub contexts: Vec<BTreeSet<Ctx>>,
    pub frame_sets: FrameSets,
    pub observes: bool,
}

impl NodeCaches {
    fn new(observes: bool) -> Self {
        NodeCaches {
            observes,
            ..Default::default()
        }
    }

    fn grow(&mut self, n: usize) {
        if self.contexts.len() < n {
            self.contexts.resize_with(n, BTreeSet::new);
        }
    }

    fn pushed(&mut self, c: Ctx, f: FrameId) -> Ctx {
        let frames = if self.observes { self.frame_sets.with(c.frames, f) } else { 0 };
        Ctx { top: Some(f), frames }
    }

    /// Frames that can be on top of the stack at `n`.
    pub fn top_frames(&self, n: NodeId) -> BTreeSet<FrameId> {
        self.contexts[n].iter().filter_map(|c| c.top).collect()
    }

    /// Frames that can be anywhere on the stack at `n`. Only meaningful
    /// when frame sets are tracked.
    pub fn stack_frames(&self, n: NodeId) -> BTreeSet<FrameId> {
        self.contexts[n]
            .iter()
            .flat_map(|c| self.frame_sets.get(c.frames).iter().copied())
            .collect()
    }

    pub fn frames_of(&self, c: Ctx) -> &[FrameId] {
        self.frame_sets.get(c.frames)
    }
}

/// Stack contexts of every node, derived from the graph alone.
pub fn derive_contexts<S, F>(g: &Dsg<S, F>, observes: bool) -> NodeCaches {
    let adj = Adjacency::of(g);
    let reach = same_level_reach(g);
    let mut caches = NodeCaches::new(observes);
    caches.grow(g.node_count());
    let mut work: Vec<(NodeId, Ctx)> = Vec::new();
    let mut entry_ctx: FxHashMap<NodeId, FxHashSet<Ctx>> = FxHashMap::default();
    let mut enter = |caches: &mut NodeCaches, work: &mut Vec<(NodeId, Ctx)>, x: NodeId, c: Ctx| {
        if entry_ctx.entry(x).or_default().insert(c) {
            for &y in &reach[&x] {
                if caches.contexts[y].insert(c) {
                    work.push((y, c));
                }
            }
        }
    };
    enter(&mut caches, &mut work, g.root(), EMPTY_CTX);
    while let Some((n, c)) = work.pop() {
        for &(f, x) in &adj.push[n] {
            let pc = caches.pushed(c, f);
            enter(&mut caches, &mut work, x, pc);
        }
    }
    caches
}

/// The automaton of realizable stacks at `s`. Accepted strings spell a
/// stack bottom first along a path from the root.
pub fn stacks_nfa<S, F: Clone>(g: &Dsg<S, F>, s: NodeId) -> Nfa<FrameId> {
    assert!(s < g.node_count(), "node {s} is not in the graph");
    let reach = same_level_reach(g);
    let mut transitions = Vec::new();
    for (a, act, b) in &g.edges {
        if let StackAction::Push(f) = act {
            transitions.push((*a, Some(*f), *b));
        }
    }
    let mut entries: Vec<_> = reach.iter().collect();
    entries.sort_by_key(|(x, _)| **x);
    for (x, ys) in entries {
        let mut ys: Vec<_> = ys.iter().copied().filter(|y| y != x).collect();
        ys.sort_unstable();
        transitions.extend(ys.into_iter().map(|y| (*x, None, y)));
    }
    Nfa {
        states: g.node_count(),
        transitions,
        start: g.root(),
        accepting: BTreeSet::from([s]),
    }
}

/// Realizable stacks at `s` of depth at most `max_depth`, top first.
pub fn realizable_stacks<S, F: Clone + Ord>(g: &Dsg<S, F>, s: NodeId, max_depth: usize) -> BTreeSet<Vec<F>> {
    stacks_nfa(g, s)
        .words(max_depth)
        .into_iter()
        .map(|w| w.into_iter().rev().map(|f| g.frame(f).clone()).collect())
        .collect()
}

fn nfa_live_pushes(nfa: &Nfa<FrameId>, s: NodeId) -> (Vec<bool>, Vec<bool>) {
    let n = nfa.states;
    let mut fwd = vec![Vec::new(); n];
    let mut bwd = vec![Vec::new(); n];
    for (a, _, b) in &nfa.transitions {
        fwd[*a].push(*b);
        bwd[*b].push(*a);
    }
    let search = |adj: &Vec<Vec<usize>>, from: usize| {
        let mut seen = vec![false; n];
        seen[from] = true;
        let mut work = vec![from];
        while let Some(x) = work.pop() {
            for &y in &adj[x] {
                if !seen[y] {
                    seen[y] = true;
                    work.push(y);
                }
            }
        }
        seen
    };
    (search(&fwd, nfa.start), search(&bwd, s))
}

/// Union of the frame sets of the realizable stacks at `s`, by tracing
/// push transitions that lie on some accepting path.
pub fn frame_set_of<S, F: Clone>(g: &Dsg<S, F>, s: NodeId) -> BTreeSet<FrameId> {
    let nfa = stacks_nfa(g, s);
    let (from_root, to_s) = nfa_live_pushes(&nfa, s);
    nfa.transitions
        .iter()
        .filter_map(|(a, f, b)| f.filter(|_| from_root[*a] && to_s[*b]))
        .collect()
}

/// Frames on top of some realizable stack at `s`.
pub fn top_frames_of<S, F: Clone>(g: &Dsg<S, F>, s: NodeId) -> BTreeSet<FrameId> {
    let nfa = stacks_nfa(g, s);
    let (from_root, _) = nfa_live_pushes(&nfa, s);
    let mut eps_to_s = vec![false; nfa.states];
    eps_to_s[s] = true;
    let mut changed = true;
    while changed {
        changed = false;
        for (a, f, b) in &nfa.transitions {
            if f.is_none() && eps_to_s[*b] && !eps_to_s[*a] {
                eps_to_s[*a] = true;
                changed = true;
            }
        }
    }
    nfa.transitions
        .iter()
        .filter_map(|(a, f, b)| f.filter(|_| from_root[*a] && eps_to_s[*b]))
        .collect()
}

/// A solved graph together with its stack contexts.
#[derive(Debug, Clone)]
pub struct Solution<S, F> {
    pub dsg: Dsg<S, F>,
    pub caches: NodeCaches,
    pub outcome: Result<(), BoundExceeded>,
    /// Rounds for the naive solver, processed work items for the worklist.
    pub iterations: usize,
}

impl<S, F> Solution<S, F> {
    pub fn is_complete(&self) -> bool {
        self.outcome.is_ok()
    }
}

fn frame_refs<'a, F>(frames: &'a [F], ids: &[FrameId]) -> Vec<&'a F> {
    ids.iter().map(|&i| &frames[i]).collect()
}

type QueryKey = (NodeId, Option<FrameId>, Vec<FrameId>);

/// Least fixed point of the frontier operator, by rounds. Each round derives
/// the stack contexts of every node from the current graph, queries the
/// oracle for every context not asked before, and adds all answers at once.
pub fn naive_solve<O: Oracle>(oracle: &O, bounds: Bounds) -> Solution<O::State, O::Frame> {
    let clock = Clock::new(bounds.time_limit);
    let observes = oracle.observes_frames();
    let mut dsg = Dsg::new(oracle.root());
    let mut asked: FxHashSet<QueryKey> = FxHashSet::default();
    let mut rounds = 0;
    loop {
        let caches = derive_contexts(&dsg, observes);
        if let Err(e) = clock.check() {
            return Solution { dsg, caches, outcome: Err(e), iterations: rounds };
        }
        if rounds >= bounds.max_iters {
            return Solution { dsg, caches, outcome: Err(BoundExceeded::Iterations(bounds.max_iters)), iterations: rounds };
        }
        rounds += 1;
        let mut answers = Vec::new();
        for n in 0..dsg.node_count() {
            for c in &caches.contexts[n] {
                let set = caches.frames_of(*c).to_vec();
                let frames = frame_refs(dsg.frames(), &set);
                if asked.insert((n, None, set.clone())) {
                    for (act, t) in oracle.step(dsg.node(n), None, &frames) {
                        if !act.is_pop() {
                            answers.push((n, act, t));
                        }
                    }
                }
                if let Some(top) = c.top {
                    if asked.insert((n, Some(top), set)) {
                        let top_frame = dsg.frame(top);
                        for (act, t) in oracle.step(dsg.node(n), Some(top_frame), &frames) {
                            if matches!(&act, StackAction::Pop(f) if f == top_frame) {
                                answers.push((n, act, t));
                            }
                        }
                    }
                }
            }
        }
        let mut changed = false;
        for (a, act, t) in answers {
            if dsg.id(&t).is_none() && dsg.node_count() >= bounds.max_nodes {
                let caches = derive_contexts(&dsg, observes);
                return Solution { dsg, caches, outcome: Err(BoundExceeded::Nodes(bounds.max_nodes)), iterations: rounds };
            }
            let (b, _) = dsg.intern_node(t);
            let act = act.map(|f| dsg.intern_frame(f));
            changed |= dsg.add_edge((a, act, b));
        }
        if !changed {
            return Solution { dsg, caches, outcome: Ok(()), iterations: rounds };
        }
    }
}

/// Order in which the worklist hands out pending contexts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Order {
    Fifo,
    Shuffled(u64),
}

enum Worklist {
    Fifo(VecDeque<(NodeId, Ctx)>),
    Shuffled(Vec<(NodeId, Ctx)>, ChaCha8Rng),
}

impl Worklist {
    fn new(order: Order) -> Self {
        match order {
            Order::Fifo => Worklist::Fifo(VecDeque::new()),
            Order::Shuffled(seed) => Worklist::Shuffled(Vec::new(), ChaCha8Rng::seed_from_u64(seed)),
        }
    }

    fn push(&mut self, item: (NodeId, Ctx)) {
        match self {
            Worklist::Fifo(q) => q.push_back(item),
            Worklist::Shuffled(v, _) => v.push(item),
        }
    }

    fn pop(&mut self) -> Option<(NodeId, Ctx)> {
        match self {
            Worklist::Fifo(q) => q.pop_front(),
            Worklist::Shuffled(v, rng) => {
                if v.is_empty() {
                    None
                } else {
                    let i = rng.gen_range(0..v.len());
                    Some(v.swap_remove(i))
                }
            }
        }
    }

    fn len(&self) -> usize {
        match self {
            Worklist::Fifo(q) => q.len(),
            Worklist::Shuffled(v, _) => v.len(),
        }
    }
}

/// Sizes of the summarizer's growing structures, for monotonicity checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Sizes {
    pub nodes: usize,
    pub edges: usize,
    pub summaries: usize,
    pub contexts: usize,
}

/// Incremental worklist solver.
///
/// Keeps, for every entry node (root or push target), its same-level
/// reachable set and the contexts it is entered with. A node's contexts are
/// the union of the entry contexts over the entries that reach it. Every
/// new edge, summary or context is propagated immediately; the worklist
/// holds contexts whose oracle queries are still pending.
pub struct Summarizer<'o, O: Oracle> {
    oracle: &'o O,
    bounds: Bounds,
    clock: Clock,
    dsg: Dsg<O::State, O::Frame>,
    caches: NodeCaches,
    eps_out: Vec<Vec<NodeId>>,
    push_out: Vec<Vec<(FrameId, NodeId)>>,
    push_in: Vec<Vec<(NodeId, FrameId)>>,
    pop_out: Vec<Vec<(FrameId, NodeId)>>,
    summary_out: Vec<Vec<NodeId>>,
    summaries: FxHashSet<(NodeId, NodeId)>,
    reach: FxHashMap<NodeId, FxHashSet<NodeId>>,
    entries_of: Vec<Vec<NodeId>>,
    entry_ctx: FxHashMap<NodeId, BTreeSet<Ctx>>,
    asked: FxHashSet<(NodeId, Option<FrameId>, usize)>,
    reach_work: Vec<(NodeId, NodeId)>,
    draining: bool,
    work: Worklist,
    steps: usize,
    context_count: usize,
    outcome: Option<Result<(), BoundExceeded>>,
}

impl<'o, O: Oracle> Summarizer<'o, O> {
    pub fn new(oracle: &'o O, bounds: Bounds, order: Order) -> Self {
        let mut s = Summarizer {
            oracle,
            bounds,
            clock: Clock::new(bounds.time_limit),
            dsg: Dsg::new(oracle.root()),
            caches: NodeCaches::new(oracle.observes_frames()),
            eps_out: Vec::new(),
            push_out: Vec::new(),
            push_in: Vec::new(),
            pop_out: Vec::new(),
            summary_out: Vec::new(),
            summaries: FxHashSet::default(),
            reach: FxHashMap::default(),
            entries_of: Vec::new(),
            entry_ctx: FxHashMap::default(),
            asked: FxHashSet::default(),
            reach_work: Vec::new(),
            draining: false,
            work: Worklist::new(order),
            steps: 0,
            context_count: 0,
            outcome: None,
        };
        s.grow();
        s.add_entry(0);
        s.enter(0, EMPTY_CTX);
        s
    }

    pub fn dsg(&self) -> &Dsg<O::State, O::Frame> {
        &self.dsg
    }

    pub fn caches(&self) -> &NodeCaches {
        &self.caches
    }

    pub fn pending(&self) -> usize {
        self.work.len()
    }

    pub fn sizes(&self) -> Sizes {
        Sizes {
            nodes: self.dsg.node_count(),
            edges: self.dsg.edge_count(),
            summaries: self.summaries.len(),
            contexts: self.context_count,
        }
    }

    /// Summary edges: pairs (a, z) with a push from `a` matched by a pop
    /// into `z`.
    pub fn summary_edges(&self) -> impl Iterator<Item = &(NodeId, NodeId)> {
        self.summaries.iter()
    }

    /// Entries (root or push targets) from which `n` is same-level
    /// reachable, excluding `n` itself.
    pub fn entry_predecessors(&self, n: NodeId) -> BTreeSet<NodeId> {
        self.entries_of[n].iter().copied().filter(|x| *x != n).collect()
    }

    fn grow(&mut self) {
        let n = self.dsg.node_count();
        self.caches.grow(n);
        for v in [&mut self.eps_out, &mut self.summary_out] {
            v.resize_with(n, Vec::new);
        }
        for v in [&mut self.push_out, &mut self.pop_out] {
            v.resize_with(n, Vec::new);
        }
        self.push_in.resize_with(n, Vec::new);
        self.entries_of.resize_with(n, Vec::new);
    }

    fn add_context(&mut self, n: NodeId, c: Ctx) {
        if self.caches.contexts[n].insert(c) {
            self.context_count += 1;
            self.work.push((n, c));
        }
    }

    fn enter(&mut self, x: NodeId, c: Ctx) {
        if !self.entry_ctx.entry(x).or_default().insert(c) {
            return;
        }
        let ys: Vec<NodeId> = self.reach[&x].iter().copied().collect();
        for y in ys {
            self.add_context(y, c);
        }
    }

    fn add_entry(&mut self, x: NodeId) {
        if !self.reach.contains_key(&x) {
            self.reach.insert(x, FxHashSet::default());
            self.add_reach(x, x);
        }
    }

    fn add_reach(&mut self, x: NodeId, y: NodeId) {
        self.reach_work.push((x, y));
        if self.draining {
            return;
        }
        self.draining = true;
        while let Some((x, y)) = self.reach_work.pop() {
            if !self.reach.get_mut(&x).expect("entry").insert(y) {
                continue;
            }
            self.entries_of[y].push(x);
            let ctxs: Vec<Ctx> = self.entry_ctx.get(&x).map(|s| s.iter().copied().collect()).unwrap_or_default();
            for c in ctxs {
                self.add_context(y, c);
            }
            self.reach_work.extend(self.eps_out[y].iter().map(|z| (x, *z)));
            self.reach_work.extend(self.summary_out[y].iter().map(|z| (x, *z)));
            let matched: Vec<(NodeId, NodeId)> = self.pop_out[y]
                .iter()
                .flat_map(|(f, z)| {
                    self.push_in[x].iter().filter(move |(_, g)| g == f).map(move |(w, _)| (*w, *z))
                })
                .collect();
            for (w, z) in matched {
                self.add_summary(w, z);
            }
        }
        self.draining = false;
    }

    fn add_summary(&mut self, w: NodeId, z: NodeId) {
        if !self.summaries.insert((w, z)) {
            return;
        }
        self.summary_out[w].push(z);
        self.extend_entries(w, z);
    }

    /// A new same-level step `a -> b`: every entry reaching `a` reaches `b`.
    fn extend_entries(&mut self, a: NodeId, b: NodeId) {
        for i in 0..self.entries_of[a].len() {
            let x = self.entries_of[a][i];
            self.add_reach(x, b);
        }
    }

    fn add_edge(&mut self, a: NodeId, act: StackAction<O::Frame>, t: O::State) -> Result<(), BoundExceeded> {
        // Refuse a node past the cap before interning it, so a partial graph
        // never holds a node without the edge that reached it.
        if self.dsg.id(&t).is_none() && self.dsg.node_count() >= self.bounds.max_nodes {
            return Err(BoundExceeded::Nodes(self.bounds.max_nodes));
        }
        let (b, fresh) = self.dsg.intern_node(t);
        if fresh {
            self.grow();
        }
        let act = act.map(|f| self.dsg.intern_frame(f));
        if !self.dsg.add_edge((a, act.clone(), b)) {
            return Ok(());
        }
        match act {
            StackAction::Eps => {
                self.eps_out[a].push(b);
                self.extend_entries(a, b);
            }
            StackAction::Push(f) => {
                self.push_out[a].push((f, b));
                self.push_in[b].push((a, f));
                self.add_entry(b);
                let ctxs: Vec<Ctx> = self.caches.contexts[a].iter().copied().collect();
                for c in ctxs {
                    let pc = self.caches.pushed(c, f);
                    self.enter(b, pc);
                }
                let returns: Vec<NodeId> = self.reach[&b]
                    .iter()
                    .flat_map(|v| self.pop_out[*v].iter().filter(|(g, _)| *g == f).map(|(_, z)| *z))
                    .collect();
                for z in returns {
                    self.add_summary(a, z);
                }
            }
            StackAction::Pop(f) => {
                self.pop_out[a].push((f, b));
                let callers: Vec<NodeId> = self.entries_of[a]
                    .iter()
                    .flat_map(|x| self.push_in[*x].iter().filter(|(_, g)| *g == f).map(|(w, _)| *w))
                    .collect();
                for w in callers {
                    self.add_summary(w, b);
                }
            }
        }
        Ok(())
    }

    fn query(&mut self, n: NodeId, c: Ctx) -> Result<(), BoundExceeded> {
        let mut answers = Vec::new();
        {
            let frames = frame_refs(self.dsg.frames(), self.caches.frames_of(c));
            if self.asked.insert((n, None, c.frames)) {
                answers.extend(
                    self.oracle
                        .step(self.dsg.node(n), None, &frames)
                        .into_iter()
                        .filter(|(act, _)| !act.is_pop()),
                );
            }
            if let Some(top) = c.top {
                if self.asked.insert((n, Some(top), c.frames)) {
                    let top_frame = self.dsg.frame(top);
                    answers.extend(
                        self.oracle
                            .step(self.dsg.node(n), Some(top_frame), &frames)
                            .into_iter()
                            .filter(|(act, _)| matches!(act, StackAction::Pop(f) if f == top_frame)),
                    );
                }
            }
        }
        for (act, t) in answers {
            self.add_edge(n, act, t)?;
        }
        Ok(())
    }

    /// Process one pending context. Returns false once finished, either at
    /// the fixed point or at a bound.
    pub fn step(&mut self) -> bool {
        if self.outcome.is_some() {
            return false;
        }
        let Some((n, c)) = self.work.pop() else {
            self.outcome = Some(Ok(()));
            return false;
        };
        self.steps += 1;
        let checked = if self.steps > self.bounds.max_iters {
            Err(BoundExceeded::Iterations(self.bounds.max_iters))
        } else if self.steps % 256 == 0 {
            self.clock.check()
        } else {
            Ok(())
        };
        let result = checked.and_then(|_| {
            let pushes = self.push_out[n].clone();
            for (f, x) in pushes {
                let pc = self.caches.pushed(c, f);
                self.enter(x, pc);
            }
            self.query(n, c)
        });
        if let Err(e) = result {
            self.outcome = Some(Err(e));
            return false;
        }
        true
    }

    pub fn run(mut self) -> Solution<O::State, O::Frame> {
        while self.step() {}
        self.finish()
    }

    pub fn finish(self) -> Solution<O::State, O::Frame> {
        Solution {
            dsg: self.dsg,
            caches: self.caches,
            outcome: self.outcome.unwrap_or(Ok(())),
            iterations: self.steps,
        }
    }
}

/// Worklist summarization in FIFO order.
pub fn summarize<O: Oracle>(oracle: &O, bounds: Bounds) -> Solution<O::State, O::Frame> {
    Summarizer::new(oracle, bounds, Order::Fifo).run()
}
