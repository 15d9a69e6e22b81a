//! Seeded batch experiments over the MIS protocol. Trials run in parallel;
//! rows come out in configuration order.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::engine::{default_budget, run, EngineError, Machine, SeededCoins, StopPolicy, Termination, Trace, WorldState};
use crate::metrics::RunReport;
use crate::mis;
use crate::topology::{
    gen_graph, gen_lower_bound, gen_schedule, log2_ceil, sequence_affected, ChangeOp, Graph, GraphKind, NodeId,
    Schedule, ScheduleKind, TopologyError,
};
use crate::verifier::{check_observation1, check_safety, check_stability};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("infeasible parameters: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Runs the MIS protocol once with the default round budget.
pub fn run_mis(g1: &Graph, schedule: &Schedule, seed: u64) -> Result<Trace, ExperimentError> {
    let machine = Machine::new(mis::build())?;
    let world = WorldState::new(g1, machine.spec())?;
    let stop = StopPolicy::with_budget(default_budget(g1, schedule)?);
    Ok(run(&world, schedule, &machine, stop, &mut SeededCoins::new(seed), Some(seed))?)
}

/// Everything an experiment row needs from one run.
#[derive(Clone, Debug)]
pub struct Trial {
    pub seed: u64,
    pub n: usize,
    pub report: RunReport,
    pub observation1: bool,
    pub safe: bool,
    pub stable: bool,
}

impl Trial {
    pub fn new(g1: &Graph, schedule: &Schedule, seed: u64) -> Result<Self, ExperimentError> {
        let trace = run_mis(g1, schedule, seed)?;
        let affected = sequence_affected(&trace.graph_sequence(), &trace.applied_schedule());
        Ok(Trial {
            seed,
            n: g1.node_count(),
            observation1: check_observation1(&trace, &affected).passed(),
            safe: check_safety(&trace).passed(),
            stable: check_stability(&trace).passed(),
            report: RunReport::from_trace(&trace),
        })
    }

    pub fn silent(&self) -> bool {
        self.report.termination == Termination::Silence
    }

    pub fn runtime(&self) -> f64 {
        self.report.global_runtime as f64
    }

    /// Largest local runtime over `nodes`.
    pub fn max_local(&self, nodes: impl Fn(NodeId) -> bool) -> usize {
        self.report.local_runtime.iter().filter(|(v, _)| nodes(**v)).map(|(_, &t)| t).max().unwrap_or(0)
    }
}

/// Edge density: a fixed probability, or `d / n` for expected degree `d`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Density {
    P(f64),
    Degree(f64),
}

impl Density {
    pub fn at(self, n: u32) -> f64 {
        match self {
            Density::P(p) => p,
            Density::Degree(d) => (d / f64::from(n.max(1))).min(1.0),
        }
    }

    pub fn label(self) -> String {
        match self {
            Density::P(p) => format!("p={p}"),
            Density::Degree(d) => format!("p={d}/n"),
        }
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

pub fn max(xs: &[f64]) -> f64 {
    xs.iter().copied().fold(f64::NAN, f64::max)
}

pub fn log2_sq(n: usize) -> f64 {
    f64::from(log2_ceil(n).max(1)).powi(2)
}

/// Runs `trial` for every `(config, seed)` in parallel; results keep the
/// input order.
pub fn sweep<C: Sync, T: Send>(
    configs: &[C],
    seeds: &[u64],
    trial: impl Fn(&C, u64) -> Result<T, ExperimentError> + Sync,
) -> Result<Vec<Vec<T>>, ExperimentError> {
    configs
        .par_iter()
        .map(|c| seeds.par_iter().map(|&s| trial(c, s)).collect())
        .collect()
}

/// A CSV table with its schema line.
pub struct Table {
    pub schema: &'static str,
    pub csv: String,
}

pub fn to_table<R: Serialize>(schema: &'static str, rows: &[R]) -> Result<Table, ExperimentError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
    Ok(Table { schema, csv: String::from_utf8(bytes).expect("csv output is utf-8") })
}

impl Table {
    pub fn render(&self) -> String {
        format!("{}\n{}", self.schema, self.csv)
    }
}

fn check_seeds(seeds: &[u64]) -> Result<(), ExperimentError> {
    if seeds.is_empty() {
        return Err(ExperimentError::Infeasible("no seeds".into()));
    }
    Ok(())
}

fn runtimes(trials: &[Trial]) -> Vec<f64> {
    trials.iter().map(Trial::runtime).collect()
}

// ---------------------------------------------------------------- static

pub const STATIC_SCHEMA: &str = "# stoneage-static-scaling/1";

#[derive(Clone, Debug, Serialize)]
pub struct StaticRow {
    pub n: u32,
    pub density: String,
    pub trials: usize,
    pub mean_runtime: f64,
    pub median_runtime: f64,
    pub max_runtime: f64,
    pub log2_sq: f64,
    pub median_ratio: f64,
    pub max_local_runtime: usize,
    pub budget_hits: usize,
    pub failures: usize,
}

pub fn static_scaling(sizes: &[u32], density: Density, seeds: &[u64]) -> Result<Vec<StaticRow>, ExperimentError> {
    check_seeds(seeds)?;
    let all = sweep(sizes, seeds, |&n, seed| {
        let g = gen_graph(&GraphKind::Gnp { n, p: density.at(n) }, seed)?;
        Trial::new(&g, &Schedule::new(), seed)
    })?;
    Ok(sizes
        .iter()
        .zip(all)
        .map(|(&n, trials)| {
            let rt = runtimes(&trials);
            let l2 = log2_sq(n as usize);
            StaticRow {
                n,
                density: density.label(),
                trials: trials.len(),
                mean_runtime: mean(&rt),
                median_runtime: median(&rt),
                max_runtime: max(&rt),
                log2_sq: l2,
                median_ratio: median(&rt) / l2,
                max_local_runtime: trials.iter().map(|t| t.max_local(|_| true)).max().unwrap_or(0),
                budget_hits: trials.iter().filter(|t| !t.silent()).count(),
                failures: trials.iter().filter(|t| !t.safe || !t.stable).count(),
            }
        })
        .collect())
}

// --------------------------------------------------------------- dynamic

pub const DYNAMIC_SCHEMA: &str = "# stoneage-dynamic-amortized/1";
pub const PAIRS_SCHEMA: &str = "# stoneage-local-pairs/1";

#[derive(Clone, Debug)]
pub struct DynamicConfig {
    pub n: u32,
    pub density: Density,
    pub changes: Vec<usize>,
    /// Idle rounds between consecutive changes.
    pub spacing: u64,
    pub start: u64,
    pub ops: Vec<ChangeOp>,
}

#[derive(Clone, Debug, Serialize)]
pub struct DynamicRow {
    pub n: u32,
    pub c: usize,
    pub trials: usize,
    pub mean_runtime: f64,
    pub median_runtime: f64,
    pub max_runtime: f64,
    pub mean_per_change: f64,
    pub normalized: f64,
    pub mean_non_affected_max: f64,
    pub median_non_affected_max: f64,
    pub max_non_affected_max: f64,
    pub mean_affected: f64,
    pub observation1_failures: usize,
    pub budget_hits: usize,
}

/// One node of one trial: changes within its locality radius and its
/// local runtime.
#[derive(Clone, Debug, Serialize)]
pub struct PairRow {
    pub c: usize,
    pub seed: u64,
    pub node: u32,
    pub c_u: usize,
    pub runtime: usize,
}

pub struct DynamicResult {
    pub rows: Vec<DynamicRow>,
    pub trials: Vec<(usize, Vec<Trial>)>,
}

impl DynamicResult {
    pub fn pairs(&self) -> Vec<PairRow> {
        let mut out = Vec::new();
        for (c, trials) in &self.trials {
            for t in trials {
                for (v, &runtime) in &t.report.local_runtime {
                    let c_u = t.report.local_changes.get(v).copied().unwrap_or(0);
                    out.push(PairRow { c: *c, seed: t.seed, node: v.0, c_u, runtime });
                }
            }
        }
        out
    }
}

pub fn dynamic_amortized(cfg: &DynamicConfig, seeds: &[u64]) -> Result<DynamicResult, ExperimentError> {
    check_seeds(seeds)?;
    let p = cfg.density.at(cfg.n);
    let all = sweep(&cfg.changes, seeds, |&c, seed| {
        let g = gen_graph(&GraphKind::Gnp { n: cfg.n, p }, seed)?;
        let kind = ScheduleKind::RandomMix {
            count: c,
            spacing: cfg.spacing,
            start: cfg.start,
            ops: cfg.ops.clone(),
            restrict: None,
        };
        let s = gen_schedule(&kind, seed, &g)?;
        Trial::new(&g, &s, seed)
    })?;
    let l2 = log2_sq(cfg.n as usize);
    let rows = cfg
        .changes
        .iter()
        .zip(&all)
        .map(|(&c, trials)| {
            let rt = runtimes(trials);
            let na: Vec<f64> = trials.iter().map(|t| t.report.non_affected_max as f64).collect();
            let per = mean(&rt) / (c + 1) as f64;
            DynamicRow {
                n: cfg.n,
                c,
                trials: trials.len(),
                mean_runtime: mean(&rt),
                median_runtime: median(&rt),
                max_runtime: max(&rt),
                mean_per_change: per,
                normalized: per / l2,
                mean_non_affected_max: mean(&na),
                median_non_affected_max: median(&na),
                max_non_affected_max: max(&na),
                mean_affected: mean(&trials.iter().map(|t| t.report.affected.len() as f64).collect::<Vec<_>>()),
                observation1_failures: trials.iter().filter(|t| !t.observation1).count(),
                budget_hits: trials.iter().filter(|t| !t.silent()).count(),
            }
        })
        .collect();
    Ok(DynamicResult { rows, trials: cfg.changes.iter().copied().zip(all).collect() })
}

// ----------------------------------------------------------- lower bound

pub const LOWER_BOUND_SCHEMA: &str = "# stoneage-lower-bound/1";

#[derive(Clone, Debug, Serialize)]
pub struct LowerBoundRow {
    pub l: u32,
    pub c: usize,
    pub trials: usize,
    pub mean_non_silent: f64,
    pub median_non_silent: f64,
    pub min_non_silent: f64,
    pub max_non_silent: f64,
    /// `C/3 - 2·sqrt(C)`.
    pub mean_floor: f64,
}

pub fn lower_bound(ls: &[u32], seeds: &[u64]) -> Result<Vec<LowerBoundRow>, ExperimentError> {
    check_seeds(seeds)?;
    let all = sweep(ls, seeds, |&l, seed| {
        let (g, s) = gen_lower_bound(l)?;
        Trial::new(&g, &s, seed)
    })?;
    Ok(ls
        .iter()
        .zip(all)
        .map(|(&l, trials)| {
            let rt = runtimes(&trials);
            let c = l as usize;
            LowerBoundRow {
                l,
                c,
                trials: trials.len(),
                mean_non_silent: mean(&rt),
                median_non_silent: median(&rt),
                min_non_silent: rt.iter().copied().fold(f64::NAN, f64::min),
                max_non_silent: max(&rt),
                mean_floor: c as f64 / 3.0 - 2.0 * (c as f64).sqrt(),
            }
        })
        .collect())
}

// ---------------------------------------------------------- pseudo-local

pub const PSEUDO_LOCAL_SCHEMA: &str = "# stoneage-pseudo-local/1";

#[derive(Clone, Debug)]
pub struct ClusterConfig {
    pub size: u32,
    pub p: f64,
    /// Path length between the clusters; `None` means `3·⌈log₂ n⌉`.
    pub bridge: Option<u32>,
    pub changes: Vec<usize>,
    pub spacing: u64,
    pub start: u64,
    pub ops: Vec<ChangeOp>,
}

impl ClusterConfig {
    pub fn bridge_len(&self) -> u32 {
        self.bridge.unwrap_or_else(|| {
            // n depends on the bridge; iterate to the fixed point
            let mut b = 1;
            for _ in 0..8 {
                b = 3 * log2_ceil((2 * self.size + b - 1) as usize).max(1);
            }
            b
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PseudoLocalRow {
    pub size: u32,
    pub bridge: u32,
    pub c: usize,
    pub trials: usize,
    pub mean_runtime: f64,
    pub max_local_a: f64,
    pub max_local_b: f64,
    pub median_max_local_b: f64,
    pub max_c_u_b: usize,
}

pub struct PseudoLocalResult {
    pub rows: Vec<PseudoLocalRow>,
    pub trials: Vec<(usize, Vec<Trial>)>,
}

pub fn pseudo_local(cfg: &ClusterConfig, seeds: &[u64]) -> Result<PseudoLocalResult, ExperimentError> {
    check_seeds(seeds)?;
    let bridge = cfg.bridge_len();
    let size = cfg.size;
    let kind = GraphKind::Clusters { size, p: cfg.p, bridge };
    let in_a = |v: NodeId| v.0 < size;
    let in_b = |v: NodeId| (size..2 * size).contains(&v.0);
    let all = sweep(&cfg.changes, seeds, |&c, seed| {
        let g = gen_graph(&kind, seed)?;
        let sk = ScheduleKind::RandomMix {
            count: c,
            spacing: cfg.spacing,
            start: cfg.start,
            ops: cfg.ops.clone(),
            restrict: Some((0..size).map(NodeId).collect::<BTreeSet<_>>()),
        };
        let s = gen_schedule(&sk, seed, &g)?;
        Trial::new(&g, &s, seed)
    })?;
    let rows = cfg
        .changes
        .iter()
        .zip(&all)
        .map(|(&c, trials)| {
            let b: Vec<f64> = trials.iter().map(|t| t.max_local(in_b) as f64).collect();
            let a: Vec<f64> = trials.iter().map(|t| t.max_local(in_a) as f64).collect();
            PseudoLocalRow {
                size,
                bridge,
                c,
                trials: trials.len(),
                mean_runtime: mean(&runtimes(trials)),
                max_local_a: max(&a),
                max_local_b: max(&b),
                median_max_local_b: median(&b),
                max_c_u_b: trials
                    .iter()
                    .flat_map(|t| t.report.local_changes.iter().filter(|(v, _)| in_b(**v)).map(|(_, &k)| k))
                    .max()
                    .unwrap_or(0),
            }
        })
        .collect();
    Ok(PseudoLocalResult { rows, trials: cfg.changes.iter().copied().zip(all).collect() })
}

// ------------------------------------------------------- clique symmetry

pub const SYMMETRY_SCHEMA: &str = "# stoneage-clique-symmetry/1";

#[derive(Clone, Debug, Serialize)]
pub struct SymmetryRow {
    pub n: u32,
    pub node: u32,
    pub trials: usize,
    pub joins: usize,
    pub frequency: f64,
}

pub fn clique_symmetry(n: u32, seeds: &[u64]) -> Result<Vec<SymmetryRow>, ExperimentError> {
    check_seeds(seeds)?;
    let g = gen_graph(&GraphKind::Clique { n }, 0)?;
    let trials = sweep(&[()], seeds, |_, seed| Trial::new(&g, &Schedule::new(), seed))?.remove(0);
    Ok((0..n)
        .map(|v| {
            let joins = trials.iter().filter(|t| t.report.mis.contains(&NodeId(v))).count();
            SymmetryRow { n, node: v, trials: trials.len(), joins, frequency: joins as f64 / trials.len() as f64 }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_statistics() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(mean(&[1.0, 2.0, 6.0]), 3.0);
        assert_eq!(max(&[1.0, 7.0, 2.0]), 7.0);
        assert!(median(&[]).is_nan());
        assert_eq!(log2_sq(1), 1.0);
        assert_eq!(log2_sq(1024), 100.0);
        assert_eq!(Density::Degree(4.0).at(64), 0.0625);
    }

    #[test]
    fn static_rows_are_ordered_and_reproducible() {
        let seeds: Vec<u64> = (0..6).collect();
        let a = static_scaling(&[16, 8], Density::P(0.5), &seeds).unwrap();
        let b = static_scaling(&[16, 8], Density::P(0.5), &seeds).unwrap();
        assert_eq!(a.iter().map(|r| r.n).collect::<Vec<_>>(), vec![16, 8]);
        let ta = to_table(STATIC_SCHEMA, &a).unwrap().render();
        assert_eq!(ta, to_table(STATIC_SCHEMA, &b).unwrap().render());
        let mut lines = ta.lines();
        assert_eq!(lines.next(), Some(STATIC_SCHEMA));
        assert!(lines.next().unwrap().starts_with("n,density,trials,mean_runtime,median_runtime"));
        assert!(a.iter().all(|r| r.failures == 0 && r.budget_hits == 0));
    }

    #[test]
    fn lower_bound_counts_changes() {
        let rows = lower_bound(&[2, 4], &[1, 2, 3]).unwrap();
        assert_eq!(rows[0].c, 2);
        assert_eq!(rows[1].c, 4);
        assert!(rows.iter().all(|r| r.min_non_silent >= 1.0));
    }

    #[test]
    fn dynamic_pairs_cover_every_node() {
        let cfg = DynamicConfig {
            n: 20,
            density: Density::Degree(3.0),
            changes: vec![0, 2],
            spacing: 3,
            start: 1,
            ops: ChangeOp::ALL.to_vec(),
        };
        let r = dynamic_amortized(&cfg, &[5, 6]).unwrap();
        assert_eq!(r.rows.len(), 2);
        assert_eq!(r.rows[0].c, 0);
        assert_eq!(r.rows[0].mean_affected, 0.0);
        assert!(r.rows.iter().all(|row| row.observation1_failures == 0));
        let pairs = r.pairs();
        assert!(pairs.iter().filter(|p| p.c == 0).all(|p| p.c_u == 0));
        assert!(pairs.iter().filter(|p| p.c == 0).count() >= 40);
    }

    #[test]
    fn symmetry_rows_per_node() {
        let rows = clique_symmetry(3, &(0..30).collect::<Vec<_>>()).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows.iter().map(|r| r.joins).sum::<usize>(), 30);
    }

    #[test]
    fn bridge_default_tracks_size() {
        let cfg = ClusterConfig {
            size: 64,
            p: 0.5,
            bridge: None,
            changes: vec![0],
            spacing: 0,
            start: 1,
            ops: ChangeOp::ALL.to_vec(),
        };
        // n = 128 + b - 1 with b = 3·⌈log₂ n⌉ = 24
        assert_eq!(cfg.bridge_len(), 24);
    }

    #[test]
    fn empty_seed_list_is_infeasible() {
        assert!(matches!(static_scaling(&[4], Density::P(0.5), &[]), Err(ExperimentError::Infeasible(_))));
    }
}
