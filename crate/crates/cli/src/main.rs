use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use pdcfa_core::abstract_machine::Policy;
use pdcfa_core::analysis::{
    analyze, check_graph, compare_grid, grid_violations, AnalysisConfig, AnalysisOutcome, AnalysisReport, Verdict,
};
use pdcfa_core::corpus;
use pdcfa_core::dsg::{Bounds, Order};
use pdcfa_core::export;
use pdcfa_core::syntax::{compile, Program};

const EXIT_USAGE: u8 = 1;
const EXIT_BOUND: u8 = 2;
const EXIT_UNSOUND: u8 = 3;

/// Pushdown control-flow analysis with abstract garbage collection.
#[derive(Parser, Debug)]
#[command(name = "pdcfa", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Analyze programs under one configuration.
    Analyze {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[command(flatten)]
        cfg: CfgArgs,
        /// Write the graph as GraphViz DOT.
        #[arg(long)]
        dot: Option<PathBuf>,
        /// Write the report (with the graph) as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
        #[command(flatten)]
        limits: Limits,
    },
    /// Run all eight configurations on each program and print the table.
    Grid {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        json: Option<PathBuf>,
        #[command(flatten)]
        limits: Limits,
    },
    /// Run the grid on the shipped benchmarks (or the given files) and
    /// check the relational properties between cells.
    Corpus {
        inputs: Vec<PathBuf>,
        #[arg(long)]
        json: Option<PathBuf>,
        #[command(flatten)]
        limits: Limits,
    },
    /// Check analysis results against concrete runs, for every grid cell
    /// or for one configuration.
    Soundness {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Concrete step budget.
        #[arg(long, default_value_t = 100_000)]
        fuel: usize,
        /// Check only this configuration instead of the whole grid.
        #[arg(long)]
        single: bool,
        #[command(flatten)]
        cfg: CfgArgs,
        #[command(flatten)]
        limits: Limits,
    },
}

#[derive(Args, Debug)]
struct CfgArgs {
    /// Context depth for k-CFA allocation.
    #[arg(long, default_value_t = 0)]
    k: usize,
    /// Allocation policy: kcfa, 1cfa or poly. Defaults to kcfa with --k.
    #[arg(long, default_value = "kcfa")]
    policy: String,
    #[arg(long)]
    pushdown: bool,
    #[arg(long)]
    gc: bool,
    /// Shuffle the worklist with this seed instead of FIFO order.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct Limits {
    /// Wall-clock limit per analysis, in seconds.
    #[arg(long, default_value_t = 60)]
    time_limit: u64,
    /// Maximum number of graph nodes; overrides PDCFA_NODE_CAP.
    #[arg(long)]
    node_cap: Option<usize>,
}

impl Limits {
    fn bounds(&self) -> Result<Bounds> {
        let cap = match (self.node_cap, std::env::var("PDCFA_NODE_CAP")) {
            (Some(n), _) => n,
            (None, Ok(s)) => s.trim().parse().with_context(|| format!("PDCFA_NODE_CAP is not a number: {s}"))?,
            (None, Err(_)) => Bounds::default().max_nodes,
        };
        Ok(Bounds {
            max_nodes: cap,
            max_iters: usize::MAX,
            time_limit: Some(Duration::from_secs(self.time_limit)),
        })
    }
}

impl CfgArgs {
    fn config(&self, bounds: Bounds) -> Result<AnalysisConfig> {
        let policy = match (self.policy.as_str(), self.k) {
            ("kcfa", 0) | ("0cfa", _) | ("mono", _) => Policy::Mono,
            ("kcfa", k) => Policy::KCfa(k),
            ("1cfa", _) => Policy::OneCfa,
            ("poly", _) => Policy::PolySplit,
            (other, _) => bail!(Usage(format!("unknown policy `{other}`"))),
        };
        let order = self.seed.map_or(Order::Fifo, Order::Shuffled);
        Ok(AnalysisConfig::new(policy, self.pushdown, self.gc).with_bounds(bounds).with_order(order))
    }
}

#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn load(path: &Path) -> Result<(String, Program)> {
    if !path.exists() {
        bail!(Usage(format!("no such file: {}", path.display())));
    }
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let program = compile(&text).with_context(|| format!("compiling {}", path.display()))?;
    let name = path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned());
    Ok((name, program))
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn count(r: &AnalysisReport, n: usize) -> String {
    match r.outcome {
        AnalysisOutcome::Complete => n.to_string(),
        AnalysisOutcome::BoundExceeded(_) => format!(">{n}"),
    }
}

fn print_grid(name: &str, p: &Program, grid: &[(String, AnalysisReport)]) {
    println!("{name}: {} expressions, {} variables", p.label_count(), p.var_count());
    println!("  {:<14} {:>8} {:>8} {:>10} {:>10}", "config", "states", "edges", "singletons", "ms");
    for (key, r) in grid {
        let singles = if r.outcome.is_complete() { r.singletons.to_string() } else { format!("<={}", r.singletons) };
        println!(
            "  {:<14} {:>8} {:>8} {:>10} {:>10}",
            key,
            count(r, r.states),
            count(r, r.edges),
            singles,
            r.elapsed.as_millis()
        );
    }
}

fn grid_json(name: &str, p: &Program, grid: &[(String, AnalysisReport)]) -> serde_json::Value {
    let cells: serde_json::Map<String, serde_json::Value> =
        grid.iter().map(|(k, r)| (k.clone(), export::report_json(p, name, r, None))).collect();
    serde_json::Value::Object(cells)
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Analyze { inputs, cfg, dot, json, limits } => {
            let cfg = cfg.config(limits.bounds()?)?;
            if (dot.is_some() || json.is_some()) && inputs.len() > 1 {
                bail!(Usage("--dot and --json take a single input".into()));
            }
            let mut code = 0;
            for path in &inputs {
                let (name, p) = load(path)?;
                let a = analyze(&p, cfg);
                let r = &a.report;
                println!(
                    "{name} [{}]: {} states, {} edges, {} singletons, {} ({} ms)",
                    cfg.key(),
                    r.states,
                    r.edges,
                    r.singletons,
                    r.outcome,
                    r.elapsed.as_millis()
                );
                if let Some(path) = &dot {
                    write(path, &export::dot(&p, &a.graph))?;
                }
                if let Some(path) = &json {
                    let v = export::report_json(&p, &name, r, Some(&a.graph));
                    write(path, &serde_json::to_string_pretty(&v)?)?;
                }
                if !r.outcome.is_complete() {
                    code = EXIT_BOUND;
                }
            }
            Ok(code)
        }
        Command::Grid { inputs, json, limits } => {
            let bounds = limits.bounds()?;
            let mut all = serde_json::Map::new();
            let mut code = 0;
            for path in &inputs {
                let (name, p) = load(path)?;
                let grid = compare_grid(&p, bounds);
                print_grid(&name, &p, &grid);
                if grid.iter().any(|(_, r)| !r.outcome.is_complete()) {
                    code = EXIT_BOUND;
                }
                all.insert(name.clone(), grid_json(&name, &p, &grid));
            }
            if let Some(path) = json {
                let v = if inputs.len() == 1 {
                    all.into_iter().next().map(|(_, v)| v).unwrap_or_default()
                } else {
                    serde_json::Value::Object(all)
                };
                write(&path, &serde_json::to_string_pretty(&v)?)?;
            }
            Ok(code)
        }
        Command::Corpus { inputs, json, limits } => {
            let bounds = limits.bounds()?;
            let programs: Vec<(String, Program)> = if inputs.is_empty() {
                corpus::benchmarks().into_iter().map(|(n, p)| (n.to_string(), p)).collect()
            } else {
                inputs.iter().map(|path| load(path)).collect::<Result<_>>()?
            };
            let mut all = serde_json::Map::new();
            let mut violations = Vec::new();
            for (name, p) in &programs {
                let grid = compare_grid(p, bounds);
                print_grid(name, p, &grid);
                violations.extend(grid_violations(name, &grid));
                all.insert(name.clone(), grid_json(name, p, &grid));
            }
            if let Some(path) = json {
                write(&path, &serde_json::to_string_pretty(&serde_json::Value::Object(all))?)?;
            }
            for v in &violations {
                eprintln!("error: {v}");
            }
            Ok(if violations.is_empty() { 0 } else { EXIT_UNSOUND })
        }
        Command::Soundness { inputs, fuel, single, cfg, limits } => {
            let bounds = limits.bounds()?;
            let configs = if single { vec![cfg.config(bounds)?] } else { AnalysisConfig::grid(bounds) };
            let mut code = 0;
            for path in &inputs {
                let (name, p) = load(path)?;
                for cfg in &configs {
                    let a = analyze(&p, *cfg);
                    if !a.report.outcome.is_complete() {
                        println!("{name} [{}]: not checked, analysis {}", cfg.key(), a.report.outcome);
                        code = code.max(EXIT_BOUND);
                        continue;
                    }
                    match check_graph(&p, *cfg, &a.graph, fuel) {
                        Verdict::Sound { steps, .. } => println!("{name} [{}]: sound over {steps} steps", cfg.key()),
                        Verdict::Counterexample { step, conf } => {
                            println!("{name} [{}]: counterexample at step {step} ({conf})", cfg.key());
                            code = EXIT_UNSOUND;
                        }
                    }
                }
            }
            Ok(code)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(EXIT_USAGE);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}
