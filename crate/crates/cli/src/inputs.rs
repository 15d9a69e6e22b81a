use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;

use stoneage::engine::ProtocolSpec;
use stoneage::io::{import_protocol, parse_graph, parse_schedule, read_file};
use stoneage::mis;
use stoneage::topology::{gen_graph, gen_lower_bound, gen_schedule, Graph, GraphKind, Schedule, ScheduleKind};

/// Where the initial graph, the schedule and the protocol come from.
#[derive(Args, Debug, Clone)]
pub struct InputArgs {
    /// Graph file (`n <count>` then `u v` per line)
    #[arg(long, conflicts_with = "gen")]
    pub graph: Option<PathBuf>,
    /// Generated graph, e.g. `gnp:n=64,p=0.5`, `clique:n=3`, `lower_bound:l=4`
    #[arg(long)]
    pub gen: Option<String>,
    /// Schedule file (one JSON change record per line)
    #[arg(long, conflicts_with = "sched")]
    pub schedule: Option<PathBuf>,
    /// Generated schedule, e.g. `none`, `random_mix:c=4,spacing=2`
    #[arg(long)]
    pub sched: Option<String>,
    /// Seed for generators and coins
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Protocol file; defaults to the built-in MIS protocol
    #[arg(long)]
    pub protocol: Option<PathBuf>,
}

pub struct Inputs {
    pub graph: Graph,
    pub schedule: Schedule,
    pub protocol: ProtocolSpec,
}

fn load<T, E: std::error::Error + Send + Sync + 'static>(path: &Path, parse: impl Fn(&str) -> Result<T, E>) -> Result<T> {
    let text = read_file(path)?;
    parse(&text).with_context(|| format!("{}", path.display()))
}

/// `lower_bound:l=N`, if that is what `spec` is.
pub fn lower_bound_param(spec: &str) -> Result<Option<u32>> {
    let Some(rest) = spec.strip_prefix("lower_bound") else { return Ok(None) };
    let l = rest
        .trim_start_matches(':')
        .strip_prefix("l=")
        .and_then(|v| v.parse().ok())
        .with_context(|| format!("expected lower_bound:l=<count>, got '{spec}'"))?;
    Ok(Some(l))
}

impl InputArgs {
    /// `strict` rejects schedules with inapplicable changes up front.
    pub fn resolve(&self, strict: bool) -> Result<Inputs> {
        let (graph, implied) = match (&self.graph, &self.gen) {
            (Some(path), _) => (load(path, parse_graph)?, None),
            (None, Some(spec)) => match lower_bound_param(spec)? {
                Some(l) => {
                    let (g, s) = gen_lower_bound(l)?;
                    (g, Some(s))
                }
                None => {
                    let kind: GraphKind = spec.parse()?;
                    (gen_graph(&kind, self.seed)?, None)
                }
            },
            (None, None) => bail!("an initial graph is required: pass --graph FILE or --gen KIND"),
        };
        let schedule = match (&self.schedule, &self.sched, implied) {
            (Some(path), _, None) => load(path, parse_schedule)?,
            (None, Some(spec), None) => gen_schedule(&spec.parse::<ScheduleKind>()?, self.seed, &graph)?,
            (None, None, implied) => implied.unwrap_or_default(),
            (_, _, Some(_)) => bail!("lower_bound instances carry their own schedule"),
        };
        if strict {
            schedule.validate(&graph).context("schedule does not apply to the graph")?;
        }
        let protocol = match &self.protocol {
            Some(path) => load(path, import_protocol)?,
            None => mis::build(),
        };
        Ok(Inputs { graph, schedule, protocol })
    }
}
