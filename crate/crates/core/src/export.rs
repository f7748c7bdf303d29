//! GraphViz and JSON renderings of graphs and reports.

use std::fmt::Write as _;

use serde_json::{json, Value};

use crate::abstract_machine::AbsFrame;
use crate::analysis::{AnalysisReport, Graph};
use crate::dsg::Dsg;
use crate::pushdown::StackAction;
use crate::syntax::Program;

fn frame_label(p: &Program, f: &AbsFrame) -> String {
    format!("{}@{}", p.name(f.binder), f.body)
}

fn action_label(p: &Program, act: &StackAction<&AbsFrame>) -> String {
    match act {
        StackAction::Eps => "eps".to_string(),
        StackAction::Push(f) => format!("push:{}", frame_label(p, f)),
        StackAction::Pop(f) => format!("pop:{}", frame_label(p, f)),
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// DOT text for a graph whose nodes are described by `describe`. Node ids
/// follow the graph's discovery order, so equal solver runs give equal
/// text.
pub fn dot_of<S>(p: &Program, g: &Dsg<S, AbsFrame>, describe: impl Fn(&S) -> String) -> String {
    let mut out = String::from("digraph dsg {\n");
    for (i, s) in g.nodes().iter().enumerate() {
        let shape = if i == g.root() { ", shape=doublecircle" } else { "" };
        writeln!(out, "  n{i} [label=\"{}\"{shape}];", escape(&describe(s))).expect("write to string");
    }
    for (a, act, b) in g.edges() {
        let act = act.as_ref().map(|f| g.frame(*f));
        writeln!(out, "  n{a} -> n{b} [label=\"{}\"];", escape(&action_label(p, &act))).expect("write to string");
    }
    out.push_str("}\n");
    out
}

pub fn dot(p: &Program, graph: &Graph) -> String {
    match graph {
        Graph::Pushdown(s) => dot_of(p, &s.dsg, |q| format!("{} |{}|", q.exp, q.store.len())),
        Graph::Finite(s) => dot_of(p, &s.dsg, |b| format!("{} |{}| {}", b.control.exp, b.control.store.len(), b.kaddr)),
    }
}

fn graph_json_of<S>(p: &Program, g: &Dsg<S, AbsFrame>, exp_and_store: impl Fn(&S) -> (u32, usize)) -> Value {
    let nodes: Vec<Value> = g
        .nodes()
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let (exp, store) = exp_and_store(s);
            json!({ "id": i, "exp": exp, "storeSize": store })
        })
        .collect();
    let edges: Vec<Value> = g
        .edges()
        .iter()
        .map(|(a, act, b)| {
            let act = act.as_ref().map(|f| g.frame(*f));
            json!({ "from": a, "to": b, "action": action_label(p, &act) })
        })
        .collect();
    json!({ "nodes": nodes, "edges": edges })
}

pub fn graph_json(p: &Program, graph: &Graph) -> Value {
    match graph {
        Graph::Pushdown(s) => graph_json_of(p, &s.dsg, |q| (q.exp.0, q.store.len())),
        Graph::Finite(s) => graph_json_of(p, &s.dsg, |b| (b.control.exp.0, b.control.store.len())),
    }
}

/// The report as JSON: `program`, `config`, `states`, `edges`,
/// `singletons`, `flowSets` (one `{var, lams}` entry per variable, lambdas
/// sorted), `elapsedMs`, `outcome`, and `graph` when one is given.
pub fn report_json(p: &Program, program: &str, report: &AnalysisReport, graph: Option<&Graph>) -> Value {
    let cfg = &report.config;
    let mut flows: Vec<(String, Vec<u32>)> = report
        .flow_sets
        .iter()
        .map(|(v, lams)| (p.name(*v).to_string(), lams.iter().map(|l| l.0).collect()))
        .collect();
    flows.sort();
    let mut v = json!({
        "program": program,
        "config": {
            "key": cfg.key(),
            "policy": cfg.policy.to_string(),
            "k": cfg.k(),
            "pushdown": cfg.pushdown,
            "gc": cfg.gc,
            "maxNodes": cfg.bounds.max_nodes,
        },
        "states": report.states,
        "edges": report.edges,
        "singletons": report.singletons,
        "flowSets": flows.into_iter().map(|(var, lams)| json!({ "var": var, "lams": lams })).collect::<Vec<_>>(),
        "elapsedMs": report.elapsed.as_millis() as u64,
        "outcome": report.outcome.to_string(),
    });
    if let Some(g) = graph {
        v["graph"] = graph_json(p, g);
    }
    v
}
