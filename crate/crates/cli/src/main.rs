//! `stoneage`: run, verify and batch-experiment with Stone Age protocols.
//!
//! Exit status: 0 on success, 1 on errors, 2 when a run exhausts its round
//! budget, 3 when verification finds a failing check.

mod inputs;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use stoneage::engine::{run, ChangePolicy, Machine, SeededCoins, StopPolicy, Termination, WorldState};
use stoneage::experiment::{
    self, ClusterConfig, Density, DynamicConfig, DYNAMIC_SCHEMA, LOWER_BOUND_SCHEMA, PAIRS_SCHEMA,
    PSEUDO_LOCAL_SCHEMA, STATIC_SCHEMA, SYMMETRY_SCHEMA,
};
use stoneage::io::{
    export_protocol, format_graph, format_report, format_schedule, read_file, read_trace, rounds_csv, write_file,
    write_trace,
};
use stoneage::metrics::RunReport;
use stoneage::mis;
use stoneage::topology::{gen_graph, gen_lower_bound, gen_schedule, ChangeOp, GraphKind, ScheduleKind};
use stoneage::verifier::{enumerate_small, verify_trace};

use inputs::{lower_bound_param, InputArgs};

const EXIT_BUDGET: u8 = 2;
const EXIT_CHECK_FAILED: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "stoneage", version, about = "Stone Age networked state machines under topology changes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one simulation
    Run {
        #[command(flatten)]
        input: InputArgs,
        /// Round budget (default 50·(C+1)·⌈log₂ n⌉² after the last change)
        #[arg(long)]
        max_rounds: Option<u64>,
        /// Skip inapplicable changes with a warning instead of failing
        #[arg(long)]
        permissive: bool,
        #[arg(long)]
        trace_out: Option<PathBuf>,
        #[arg(long)]
        report_out: Option<PathBuf>,
        /// Per-round CSV (round, silent, active, W, L, changes)
        #[arg(long)]
        rounds_out: Option<PathBuf>,
    },
    /// Check a run, a saved trace, or every coin outcome of a small instance
    Verify {
        #[command(flatten)]
        input: InputArgs,
        /// Verify this trace file instead of running
        #[arg(long, conflicts_with_all = ["graph", "gen", "exhaustive"])]
        trace: Option<PathBuf>,
        #[arg(long)]
        max_rounds: Option<u64>,
        /// Explore all coin outcomes (at most 4 nodes)
        #[arg(long)]
        exhaustive: bool,
        #[arg(long, default_value_t = 8)]
        horizon: u64,
    },
    /// Seeded batch experiments; writes a CSV table
    Experiment {
        suite: Suite,
        /// Number of seeds
        #[arg(long, default_value_t = 20)]
        seeds: u64,
        /// First seed
        #[arg(long, default_value_t = 0)]
        seed_base: u64,
        /// Graph sizes (static_scaling), or the single n for dynamic_amortized and clique_symmetry
        #[arg(long, value_delimiter = ',')]
        sizes: Vec<u32>,
        /// Edge probability
        #[arg(long, conflicts_with = "degree")]
        p: Option<f64>,
        /// Expected degree; p = d/n
        #[arg(long)]
        degree: Option<f64>,
        /// Change counts C
        #[arg(long, value_delimiter = ',')]
        changes: Vec<usize>,
        /// Idle rounds between changes
        #[arg(long, default_value_t = 4)]
        spacing: u64,
        /// Triangle counts for lower_bound
        #[arg(long, value_delimiter = ',')]
        ls: Vec<u32>,
        /// Cluster size for pseudo_local
        #[arg(long, default_value_t = 64)]
        cluster: u32,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-node (C_u, runtime) pairs for dynamic_amortized
        #[arg(long)]
        pairs_out: Option<PathBuf>,
    },
    /// Write generated graphs, schedules or protocol files
    Gen {
        /// `graph`, `schedule`, `protocol`, or `lower_bound:l=N`
        target: String,
        /// Generator spec: a graph kind, a schedule kind, or `mis`
        spec: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Graph the schedule is generated against
        #[arg(long)]
        on: Option<String>,
        /// Output file (lower_bound: path prefix); stdout if absent
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
#[value(rename_all = "snake_case")]
enum Suite {
    StaticScaling,
    DynamicAmortized,
    LowerBound,
    PseudoLocal,
    CliqueSymmetry,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::FAILURE
        }
    }
}

/// The error chain joined by `: `, skipping causes a message already quotes.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if !out.ends_with(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
    }
    out
}

fn dispatch(cmd: Command) -> Result<ExitCode> {
    match cmd {
        Command::Run { input, max_rounds, permissive, trace_out, report_out, rounds_out } => {
            let changes = if permissive { ChangePolicy::Permissive } else { ChangePolicy::Strict };
            cmd_run(&input, max_rounds, changes, trace_out.as_deref(), report_out.as_deref(), rounds_out.as_deref())
        }
        Command::Verify { input, trace, max_rounds, exhaustive, horizon } => {
            cmd_verify(&input, trace.as_deref(), max_rounds, exhaustive, horizon)
        }
        Command::Experiment { suite, seeds, seed_base, sizes, p, degree, changes, spacing, ls, cluster, out, pairs_out } => {
            let seeds: Vec<u64> = (seed_base..seed_base + seeds).collect();
            let density = match (p, degree) {
                (_, Some(d)) => Some(Density::Degree(d)),
                (Some(p), None) => Some(Density::P(p)),
                (None, None) => None,
            };
            let opts = ExperimentOpts { sizes, density, changes, spacing, ls, cluster };
            cmd_experiment(suite, &seeds, &opts, out.as_deref(), pairs_out.as_deref())
        }
        Command::Gen { target, spec, seed, on, out } => cmd_gen(&target, spec.as_deref(), seed, on.as_deref(), out.as_deref()),
    }
}

fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => Ok(write_file(p, text)?),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn execute(input: &InputArgs, max_rounds: Option<u64>, changes: ChangePolicy) -> Result<stoneage::engine::Trace> {
    let inp = input.resolve(changes == ChangePolicy::Strict)?;
    let machine = Machine::new(inp.protocol)?;
    let world = WorldState::new(&inp.graph, machine.spec())?;
    let stop = StopPolicy { max_rounds, changes, ..StopPolicy::default() };
    let trace = run(&world, &inp.schedule, &machine, stop, &mut SeededCoins::new(input.seed), Some(input.seed))?;
    Ok(trace)
}

fn cmd_run(
    input: &InputArgs,
    max_rounds: Option<u64>,
    changes: ChangePolicy,
    trace_out: Option<&Path>,
    report_out: Option<&Path>,
    rounds_out: Option<&Path>,
) -> Result<ExitCode> {
    let trace = execute(input, max_rounds, changes)?;
    let report = RunReport::from_trace(&trace);
    if let Some(p) = trace_out {
        write_file(p, &write_trace(&trace))?;
    }
    if let Some(p) = rounds_out {
        write_file(p, &rounds_csv(&trace))?;
    }
    match report_out {
        Some(p) => write_file(p, &format_report(&report))?,
        None => {
            let mis: Vec<String> = report.mis.iter().map(ToString::to_string).collect();
            println!(
                "rounds={} termination={:?} global_runtime={} changes={} affected={} non_affected_max={} mis=[{}]",
                report.rounds,
                report.termination,
                report.global_runtime,
                report.changes,
                report.affected.len(),
                report.non_affected_max,
                mis.join(",")
            );
        }
    }
    Ok(match trace.termination {
        Termination::Silence => ExitCode::SUCCESS,
        Termination::Budget => {
            eprintln!("round budget exhausted after {} rounds", trace.rounds());
            ExitCode::from(EXIT_BUDGET)
        }
    })
}

fn cmd_verify(input: &InputArgs, trace: Option<&Path>, max_rounds: Option<u64>, exhaustive: bool, horizon: u64) -> Result<ExitCode> {
    if exhaustive {
        let inp = input.resolve(true)?;
        if input.protocol.is_some() {
            bail!("--exhaustive explores the built-in MIS protocol only");
        }
        if inp.graph.node_count() > 4 {
            bail!("--exhaustive supports at most 4 nodes, got {}", inp.graph.node_count());
        }
        let r = enumerate_small(&inp.graph, &inp.schedule, horizon)?;
        for t in &r.terminals {
            let cfg: Vec<String> = t.config.iter().map(|(v, s)| format!("{v}:{s}")).collect();
            println!("terminal {} p={} from round {}", cfg.join(" "), t.probability, t.first_round);
        }
        println!("running p={} after horizon {}", r.running, r.horizon);
        for (round, d) in &r.violations {
            println!("violation at round {round}: {d}");
        }
        println!("exhaustive: {}", if r.passed() { "pass" } else { "FAIL" });
        return Ok(if r.passed() { ExitCode::SUCCESS } else { ExitCode::from(EXIT_CHECK_FAILED) });
    }
    let trace = match trace {
        Some(p) => read_trace(&read_file(p)?).with_context(|| format!("{}", p.display()))?,
        None => execute(input, max_rounds, ChangePolicy::Strict)?,
    };
    let report = verify_trace(&trace);
    print!("{report}");
    Ok(if report.passed() { ExitCode::SUCCESS } else { ExitCode::from(EXIT_CHECK_FAILED) })
}

struct ExperimentOpts {
    sizes: Vec<u32>,
    density: Option<Density>,
    changes: Vec<usize>,
    spacing: u64,
    ls: Vec<u32>,
    cluster: u32,
}

fn or<T: Clone>(v: &[T], default: &[T]) -> Vec<T> {
    if v.is_empty() { default.to_vec() } else { v.to_vec() }
}

fn single(sizes: &[u32], default: u32) -> Result<u32> {
    match sizes {
        [] => Ok(default),
        [n] => Ok(*n),
        _ => bail!("this suite takes a single --sizes value"),
    }
}

fn cmd_experiment(suite: Suite, seeds: &[u64], o: &ExperimentOpts, out: Option<&Path>, pairs_out: Option<&Path>) -> Result<ExitCode> {
    let table = match suite {
        Suite::StaticScaling => {
            let sizes = or(&o.sizes, &[32, 64, 128, 256, 512, 1024]);
            let rows = experiment::static_scaling(&sizes, o.density.unwrap_or(Density::P(0.5)), seeds)?;
            experiment::to_table(STATIC_SCHEMA, &rows)?
        }
        Suite::DynamicAmortized => {
            let cfg = DynamicConfig {
                n: single(&o.sizes, 256)?,
                density: o.density.unwrap_or(Density::Degree(4.0)),
                changes: or(&o.changes, &[0, 1, 4, 16, 64]),
                spacing: o.spacing,
                start: 1,
                ops: ChangeOp::ALL.to_vec(),
            };
            let r = experiment::dynamic_amortized(&cfg, seeds)?;
            if let Some(p) = pairs_out {
                write_file(p, &experiment::to_table(PAIRS_SCHEMA, &r.pairs())?.render())?;
            }
            experiment::to_table(DYNAMIC_SCHEMA, &r.rows)?
        }
        Suite::LowerBound => {
            let rows = experiment::lower_bound(&or(&o.ls, &[8, 32, 128]), seeds)?;
            experiment::to_table(LOWER_BOUND_SCHEMA, &rows)?
        }
        Suite::PseudoLocal => {
            let p = match o.density {
                None => 0.5,
                Some(Density::P(p)) => p,
                Some(Density::Degree(_)) => bail!("pseudo_local takes --p"),
            };
            let cfg = ClusterConfig {
                size: o.cluster,
                p,
                bridge: None,
                changes: or(&o.changes, &[0, 16]),
                spacing: o.spacing,
                start: 1,
                ops: ChangeOp::ALL.to_vec(),
            };
            experiment::to_table(PSEUDO_LOCAL_SCHEMA, &experiment::pseudo_local(&cfg, seeds)?.rows)?
        }
        Suite::CliqueSymmetry => {
            let rows = experiment::clique_symmetry(single(&o.sizes, 3)?, seeds)?;
            experiment::to_table(SYMMETRY_SCHEMA, &rows)?
        }
    };
    emit(out, &table.render())?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_gen(target: &str, spec: Option<&str>, seed: u64, on: Option<&str>, out: Option<&Path>) -> Result<ExitCode> {
    if let Some(l) = lower_bound_param(target)? {
        let (g, s) = gen_lower_bound(l)?;
        let (graph, schedule) = (format_graph(&g)?, format_schedule(&s));
        match out {
            Some(prefix) => {
                let with = |ext: &str| PathBuf::from(format!("{}.{ext}", prefix.display()));
                write_file(&with("graph"), &graph)?;
                write_file(&with("schedule"), &schedule)?;
            }
            None => print!("{graph}{schedule}"),
        }
        return Ok(ExitCode::SUCCESS);
    }
    let spec = spec.with_context(|| format!("gen {target} needs a generator spec"))?;
    let text = match target {
        "graph" => format_graph(&gen_graph(&spec.parse::<GraphKind>()?, seed)?)?,
        "schedule" => {
            let base = on.context("gen schedule needs --on GRAPH_KIND")?;
            let g = match lower_bound_param(base)? {
                Some(l) => gen_lower_bound(l)?.0,
                None => gen_graph(&base.parse::<GraphKind>()?, seed)?,
            };
            format_schedule(&gen_schedule(&spec.parse::<ScheduleKind>()?, seed, &g)?)
        }
        "protocol" => match spec {
            "mis" => export_protocol(&mis::build()),
            other => bail!("unknown protocol '{other}' (available: mis)"),
        },
        other => bail!("unknown gen target '{other}'"),
    };
    emit(out, &text)?;
    Ok(ExitCode::SUCCESS)
}
