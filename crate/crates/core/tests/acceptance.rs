//! Acceptance suite. Every test prints one `PASS`/`FAIL` line for its
//! criterion before asserting, so `cargo test --test acceptance -- --nocapture`
//! reads as a checklist.

use std::sync::OnceLock;

use stoneage::engine::{run, Machine, SeededCoins, StopPolicy, WorldState};
use stoneage::experiment::{
    clique_symmetry, dynamic_amortized, lower_bound, mean, pseudo_local, static_scaling, sweep, ClusterConfig,
    DynamicConfig, DynamicResult, Density, Trial,
};
use stoneage::io::{export_protocol, import_protocol, write_trace};
use stoneage::mis;
use stoneage::topology::{gen_graph, gen_schedule, log2_ceil, ChangeOp, Graph, GraphKind, Schedule, ScheduleKind};
use stoneage::verifier::{enumerate_small, Dyadic};

fn verdict(id: u32, ok: bool, detail: String) {
    println!("{} criterion {id}: {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "criterion {id}: {detail}");
}

fn seeds(k: u64) -> Vec<u64> {
    (0..k).collect()
}

fn lg(n: u32) -> f64 {
    f64::from(log2_ceil(n as usize).max(1))
}

#[test]
fn c01_static_correctness() {
    let kinds: Vec<GraphKind> = (0..1000u32)
        .map(|i| {
            let n = 4 + (i * 37) % 61;
            match i % 5 {
                0 => GraphKind::Gnp { n, p: 0.1 },
                1 => GraphKind::Gnp { n, p: 0.5 },
                2 => GraphKind::Gnp { n, p: 0.9 },
                3 => GraphKind::Clique { n },
                _ => GraphKind::Path { n },
            }
        })
        .collect();
    let trials = sweep(&kinds, &[0], |kind, _| {
        let seed = kind_seed(kind);
        let g = gen_graph(kind, seed)?;
        Trial::new(&g, &Schedule::new(), seed)
    })
    .unwrap();
    let bad: Vec<String> = trials
        .iter()
        .flatten()
        .zip(&kinds)
        .filter(|(t, _)| !(t.silent() && t.safe && t.stable))
        .map(|(t, k)| format!("{k} seed {}", t.seed))
        .collect();
    verdict(1, bad.is_empty(), format!("{} runs, {} failures {:?}", kinds.len(), bad.len(), bad));
}

fn kind_seed(kind: &GraphKind) -> u64 {
    kind.to_string().bytes().fold(17u64, |h, b| h.wrapping_mul(31).wrapping_add(u64::from(b)))
}

fn all_graphs(n: u32) -> Vec<Graph> {
    let pairs: Vec<(u32, u32)> = (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).collect();
    (0..1u32 << pairs.len())
        .map(|mask| {
            let edges: Vec<(u32, u32)> =
                pairs.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, &e)| e).collect();
            Graph::from_edges(n, &edges).unwrap()
        })
        .collect()
}

#[test]
fn c02_exhaustive_small_models() {
    let mut graphs: Vec<(String, Graph)> = Vec::new();
    for n in 1..=3 {
        for (i, g) in all_graphs(n).into_iter().enumerate() {
            graphs.push((format!("n={n}#{i}"), g));
        }
    }
    graphs.push(("path4".into(), Graph::from_edges(4, &[(0, 1), (1, 2), (2, 3)]).unwrap()));
    graphs.push(("star4".into(), Graph::from_edges(4, &[(0, 1), (0, 2), (0, 3)]).unwrap()));
    graphs.push(("K4".into(), gen_graph(&GraphKind::Clique { n: 4 }, 0).unwrap()));

    let mut problems = Vec::new();
    for (name, g) in &graphs {
        let r = enumerate_small(g, &Schedule::new(), 8).unwrap();
        if !r.passed() {
            problems.push(format!("{name}: {:?}", r.violations));
        }
        if r.terminal_mass() + r.running != Dyadic::ONE {
            problems.push(format!("{name}: mass {} + {}", r.terminal_mass(), r.running));
        }
    }

    let k2 = enumerate_small(&gen_graph(&GraphKind::Clique { n: 2 }, 0).unwrap(), &Schedule::new(), 8).unwrap();
    let k2_set: Vec<Vec<&str>> = k2.terminals.iter().map(|t| t.config.iter().map(|(_, s)| s.as_str()).collect()).collect();
    if k2_set != [vec!["L", "W"], vec!["W", "L"]] {
        problems.push(format!("K2 terminals {k2_set:?}"));
    }

    let k3 = enumerate_small(&gen_graph(&GraphKind::Clique { n: 3 }, 0).unwrap(), &Schedule::new(), 8).unwrap();
    let single_w = k3.terminals.iter().all(|t| t.config.iter().filter(|(_, s)| s == "W").count() == 1);
    let equal = k3.terminals.len() == 3 && k3.terminals.windows(2).all(|w| w[0].probability == w[1].probability);
    if !single_w || !equal {
        problems.push(format!("K3 terminals {:?}", k3.terminals));
    }

    verdict(
        2,
        problems.is_empty(),
        format!(
            "{} graphs; K2 terminal mass {} (running {}); K3 each {} {:?}",
            graphs.len(),
            k2.terminal_mass(),
            k2.running,
            k3.terminals.first().map_or(Dyadic::ZERO, |t| t.probability),
            problems
        ),
    );
}

#[test]
fn c03_static_runtime_scaling() {
    let sizes = [32, 64, 128, 256, 512, 1024];
    let mut ok = true;
    let mut detail = Vec::new();
    for density in [Density::P(0.5), Density::Degree(4.0)] {
        let rows = static_scaling(&sizes, density, &seeds(200)).unwrap();
        let ratios: Vec<f64> = rows.iter().map(|r| r.median_ratio).collect();
        let (lo, hi) = ratios.iter().fold((f64::MAX, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
        let failures: usize = rows.iter().map(|r| r.failures + r.budget_hits).sum();
        ok &= hi <= 2.0 * lo && failures == 0;
        let shown: Vec<String> = ratios.iter().map(|r| format!("{r:.3}")).collect();
        detail.push(format!("{}: ratios [{}] spread {:.2}x", density.label(), shown.join(", "), hi / lo));
    }
    verdict(3, ok, detail.join("; "));
}

fn dynamic_sweep() -> &'static DynamicResult {
    static CELL: OnceLock<DynamicResult> = OnceLock::new();
    CELL.get_or_init(|| {
        let cfg = DynamicConfig {
            n: 256,
            density: Density::Degree(4.0),
            changes: vec![0, 1, 4, 16, 64],
            spacing: 4,
            start: 1,
            ops: ChangeOp::ALL.to_vec(),
        };
        dynamic_amortized(&cfg, &seeds(100)).unwrap()
    })
}

#[test]
fn c04_confinement() {
    let rows = &dynamic_sweep().rows;
    let base = rows[0].median_non_affected_max;
    let mut ok = rows.iter().all(|r| r.observation1_failures == 0 && r.budget_hits == 0);
    let mut shown = Vec::new();
    for r in rows {
        ok &= r.median_non_affected_max <= 1.5 * base;
        shown.push(format!("C={} median {} max {}", r.c, r.median_non_affected_max, r.max_non_affected_max));
    }
    let first = rows[1].median_non_affected_max;
    let last = rows[rows.len() - 1].median_non_affected_max;
    ok &= last <= 1.5 * first;
    verdict(
        4,
        ok,
        format!("non-affected max local runtime vs static {base}: {}; observation 1 holds on every trace", shown.join(", ")),
    );
}

#[test]
fn c05_amortized_runtime() {
    let rows = &dynamic_sweep().rows;
    let c1 = rows.iter().find(|r| r.c == 1).unwrap().normalized;
    let c64 = rows.iter().find(|r| r.c == 64).unwrap().normalized;
    let ok = rows.iter().filter(|r| r.c >= 1).all(|r| r.normalized <= 2.0 * c1) && c64 <= 2.0 * c1;
    let shown: Vec<String> = rows.iter().map(|r| format!("C={} {:.4}", r.c, r.normalized)).collect();
    verdict(5, ok, format!("mean runtime/(C+1)/log2^2 n: {}; calibrated c={c1:.4}", shown.join(", ")));
}

#[test]
fn c06_lower_bound() {
    let rows = lower_bound(&[8, 32, 128], &seeds(200)).unwrap();
    let mut ok = true;
    let mut shown = Vec::new();
    for r in &rows {
        ok &= r.mean_non_silent >= r.mean_floor;
        shown.push(format!("C={} mean {:.2} floor {:.2} min {}", r.c, r.mean_non_silent, r.mean_floor, r.min_non_silent));
    }
    let last = rows.last().unwrap();
    ok &= last.min_non_silent >= last.c as f64 / 6.0;
    verdict(6, ok, shown.join(", "));
}

#[test]
fn c07_clique_symmetry() {
    let rows = clique_symmetry(3, &seeds(3000)).unwrap();
    let ok = rows.iter().all(|r| (0.30..=0.366).contains(&r.frequency));
    let shown: Vec<String> = rows.iter().map(|r| format!("node {} {:.4}", r.node, r.frequency)).collect();
    verdict(7, ok, format!("MIS frequencies on a triangle over 3000 seeds: {}", shown.join(", ")));
}

fn clique_trials(sizes: &[u32], k: u64) -> Vec<Vec<Trial>> {
    sweep(sizes, &seeds(k), |&n, seed| {
        let g = gen_graph(&GraphKind::Clique { n }, 0)?;
        Trial::new(&g, &Schedule::new(), seed)
    })
    .unwrap()
}

#[test]
fn c08_tournament_counts() {
    let sizes = [64, 256, 1024];
    let mut ok = true;
    let mut shown = Vec::new();
    for (&n, trials) in sizes.iter().zip(clique_trials(&sizes, 100)) {
        let per_node = trials.iter().flat_map(|t| t.report.tournaments.values().map(Vec::len)).max().unwrap_or(0);
        let u_turns = trials
            .iter()
            .flat_map(|t| t.report.tournaments.values().flatten().map(|x| x.u_turns))
            .max()
            .unwrap_or(0);
        ok &= per_node as f64 <= 4.0 * lg(n) && u_turns as f64 <= 3.0 * lg(n);
        shown.push(format!("n={n} tournaments {per_node} (≤ {}) u-turns {u_turns} (≤ {})", 4.0 * lg(n), 3.0 * lg(n)));
    }
    verdict(8, ok, shown.join(", "));
}

#[test]
fn c09_quality() {
    let sizes = [16, 64, 256];
    let mut ok = true;
    let mut shown = Vec::new();
    for (&n, trials) in sizes.iter().zip(clique_trials(&sizes, 200)) {
        let winners: Vec<f64> = trials
            .iter()
            .map(|t| mean(&t.report.mis.iter().map(|v| t.report.quality[v] as f64).collect::<Vec<_>>()))
            .collect();
        let per_node: Vec<f64> = trials.iter().flat_map(|t| t.report.quality.values().map(|&q| q as f64)).collect();
        let q = mean(&winners);
        ok &= q <= 2.0 * lg(n);
        shown.push(format!("n={n} winners {q:.2} (≤ {})", 2.0 * lg(n)));
        println!("INFO criterion 9: n={n} mean q(v) over all nodes {:.3}", mean(&per_node));
    }
    verdict(9, ok, format!("mean quality over winners: {}", shown.join(", ")));
}

#[test]
fn c10_pseudo_locality() {
    let cfg = ClusterConfig {
        size: 64,
        p: 0.5,
        bridge: None,
        changes: vec![0, 16],
        spacing: 4,
        start: 1,
        ops: ChangeOp::ALL.to_vec(),
    };
    let r = pseudo_local(&cfg, &seeds(100)).unwrap();
    let (base, dynamic) = (&r.rows[0], &r.rows[1]);
    let ok = dynamic.max_local_b <= 1.5 * base.max_local_b
        && r.trials.iter().all(|(_, ts)| ts.iter().all(|t| t.silent() && t.observation1));
    verdict(
        10,
        ok,
        format!(
            "bridge {}: cluster B max local {} vs static {} (A reached {}, static A {})",
            base.bridge, dynamic.max_local_b, base.max_local_b, dynamic.max_local_a, base.max_local_a
        ),
    );
}

#[test]
fn c11_determinism_and_round_trip() {
    let spec = mis::build();
    let back = import_protocol(&export_protocol(&spec)).unwrap();
    let mut mismatches = Vec::new();
    for seed in 0..20u64 {
        let g = gen_graph(&GraphKind::Gnp { n: 40, p: 0.15 }, seed).unwrap();
        let kind = ScheduleKind::RandomMix { count: 6, spacing: 3, start: 1, ops: ChangeOp::ALL.to_vec(), restrict: None };
        let s = gen_schedule(&kind, seed, &g).unwrap();
        let go = |spec| {
            let m = Machine::new(spec).unwrap();
            let w = WorldState::new(&g, m.spec()).unwrap();
            write_trace(&run(&w, &s, &m, StopPolicy::default(), &mut SeededCoins::new(seed), Some(seed)).unwrap())
        };
        let (a, b, c) = (go(spec.clone()), go(spec.clone()), go(back.clone()));
        if a != b || a != c {
            mismatches.push(seed);
        }
    }
    let ok = back == spec && mismatches.is_empty();
    verdict(11, ok, format!("20 seeded dynamic runs byte-identical, protocol round trip exact; mismatches {mismatches:?}"));
}
