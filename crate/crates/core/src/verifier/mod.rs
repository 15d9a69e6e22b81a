//! Trace checks for the correctness contract (safety, stability, liveness),
//! the structural properties of the MIS protocol, and an exhaustive
//! small-instance explorer over all coin outcomes.

mod enumerate;
mod invariants;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use enumerate::{enumerate_small, Dyadic, EnumerationError, EnumerationLimits, EnumerationReport, Terminal};
pub use invariants::{
    check_component_separation, check_conformance, check_defensive_rules, check_l_justification, check_no_adjacent_w_entry,
    check_one_way_flow, check_staggering, check_truthful_ports,
};

use crate::engine::{Termination, Trace};
use crate::metrics::{classify_rounds, correct_on, Timeline};
use crate::mis::MisState;
use crate::topology::{sequence_affected, NodeId, Round};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail { round: Round, detail: String },
    Inconclusive { detail: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckReport {
    pub check: String,
    #[serde(flatten)]
    pub verdict: Verdict,
}

impl CheckReport {
    fn new(check: &str, verdict: Verdict) -> Self {
        CheckReport { check: check.to_string(), verdict }
    }

    pub(crate) fn from_first(check: &str, first: Option<(Round, String)>) -> Self {
        let verdict = match first {
            None => Verdict::Pass,
            Some((round, detail)) => Verdict::Fail { round, detail },
        };
        Self::new(check, verdict)
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    pub fn failed(&self) -> bool {
        matches!(self.verdict, Verdict::Fail { .. })
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.verdict {
            Verdict::Pass => write!(f, "{}: pass", self.check),
            Verdict::Fail { round, detail } => write!(f, "{}: FAIL at round {round}: {detail}", self.check),
            Verdict::Inconclusive { detail } => write!(f, "{}: inconclusive: {detail}", self.check),
        }
    }
}

/// Output configurations are correct.
pub fn check_safety(trace: &Trace) -> CheckReport {
    let seq = trace.graph_sequence();
    let spec = &trace.protocol;
    let first = trace.records.iter().find_map(|rec| {
        let g = seq.at(rec.round);
        let state = |v: NodeId| rec.step(v).map(|s| s.before);
        let output = g.nodes().all(|v| state(v).is_some_and(|s| spec.is_output(s)));
        (output && !correct_on(g, spec, state)).then(|| (rec.round, "output configuration is not an MIS".to_string()))
    });
    CheckReport::from_first("safety", first)
}

/// An output configuration in a round without changes is left unchanged.
pub fn check_stability(trace: &Trace) -> CheckReport {
    let spec = &trace.protocol;
    let first = trace.records.iter().find_map(|rec| {
        if !rec.changes.is_empty() || !rec.steps.iter().all(|s| spec.is_output(s.before)) {
            return None;
        }
        rec.steps.iter().find(|s| s.after != Some(s.before)).map(|s| {
            (
                rec.round,
                format!("node {} left output state {}", s.node, spec.state_name(s.before)),
            )
        })
    });
    CheckReport::from_first("stability", first)
}

/// Reached an output configuration after the last change. Budget
/// terminations without one are inconclusive.
pub fn check_liveness(trace: &Trace) -> CheckReport {
    let last = trace.schedule.last_round().unwrap_or(0);
    let classes = classify_rounds(trace);
    let reached = classes.silent.iter().enumerate().any(|(i, &s)| s && i as Round + 1 > last);
    // the engine stops as soon as every node is gone; that end is vacuously correct
    let emptied = trace.termination == Termination::Silence
        && trace.graph_sequence().at(trace.records.len() as Round + 1).is_empty();
    let verdict = if reached || emptied {
        Verdict::Pass
    } else if trace.termination == Termination::Budget {
        Verdict::Inconclusive { detail: format!("budget of {} rounds exhausted", trace.records.len()) }
    } else {
        Verdict::Fail {
            round: trace.records.len() as Round,
            detail: "run stopped without reaching an output configuration".into(),
        }
    };
    CheckReport::new("liveness", verdict)
}

/// Nodes outside the affected set never reside in D' or U'.
pub fn check_observation1(trace: &Trace, affected: &BTreeSet<NodeId>) -> CheckReport {
    let tl = Timeline::new(trace);
    let greedy = |q: Option<MisState>| matches!(q, Some(MisState::DPrime | MisState::UPrime));
    let mut first: Option<(Round, String)> = None;
    for (v, line) in tl.lines().filter(|(v, _)| !affected.contains(v)) {
        let hit = line
            .rounds()
            .find(|&(_, s)| greedy(tl.mis(s)))
            .map(|(r, _)| r)
            .or_else(|| greedy(line.last_after.and_then(|s| tl.mis(s))).then_some(tl.rounds + 1));
        if let Some(r) = hit {
            if first.as_ref().is_none_or(|(fr, _)| r < *fr) {
                first = Some((r, format!("non-affected node {v} is in a greedy state")));
            }
        }
    }
    CheckReport::from_first("observation1", first)
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub checks: Vec<CheckReport>,
}

impl VerificationReport {
    /// No check failed (inconclusive ones do not count as failures).
    pub fn passed(&self) -> bool {
        !self.checks.iter().any(CheckReport::failed)
    }
}

impl fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{c}")?;
        }
        Ok(())
    }
}

/// Every trace check. The MIS-specific ones only apply when the trace's
/// protocol uses the MIS state names.
pub fn verify_trace(trace: &Trace) -> VerificationReport {
    let mut checks = vec![check_conformance(trace), check_safety(trace), check_stability(trace), check_liveness(trace)];
    let seq = trace.graph_sequence();
    let affected = sequence_affected(&seq, &trace.applied_schedule());
    checks.push(check_observation1(trace, &affected));
    checks.push(check_no_adjacent_w_entry(trace));
    checks.push(check_component_separation(trace));
    checks.push(check_one_way_flow(trace));
    checks.push(check_l_justification(trace));
    checks.push(check_staggering(trace));
    checks.push(check_truthful_ports(trace));
    if trace.applied_schedule().is_empty() {
        checks.push(check_defensive_rules(trace));
    }
    VerificationReport { checks }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{run, Machine, SeededCoins, StopPolicy, WorldState};
    use crate::mis;
    use crate::topology::{gen_graph, Graph, GraphKind, Schedule, TopologyChange};

    fn exec(g: &Graph, s: &Schedule, seed: u64, stop: StopPolicy) -> Trace {
        let m = Machine::new(mis::build()).unwrap();
        let w = WorldState::new(g, m.spec()).unwrap();
        run(&w, s, &m, stop, &mut SeededCoins::new(seed), Some(seed)).unwrap()
    }

    fn gnp(n: u32, seed: u64) -> Graph {
        gen_graph(&GraphKind::Gnp { n, p: 0.3 }, seed).unwrap()
    }

    #[test]
    fn honest_runs_pass_every_check() {
        for seed in 0..20 {
            let g = gnp(24, seed);
            let t = exec(&g, &Schedule::new(), seed, StopPolicy::default());
            let r = verify_trace(&t);
            assert!(r.checks.iter().all(CheckReport::passed), "seed {seed}\n{r}");
        }
    }

    #[test]
    fn dynamic_runs_pass() {
        let g = gnp(16, 3);
        let s = Schedule::new()
            .with(5, TopologyChange::NodeInsert { v: NodeId(16) })
            .with(5, TopologyChange::EdgeInsert { u: NodeId(16), v: NodeId(0) })
            .with(9, TopologyChange::NodeDelete { v: NodeId(4) });
        for seed in 0..20 {
            let t = exec(&g, &s, seed, StopPolicy::default());
            let r = verify_trace(&t);
            assert!(r.passed(), "seed {seed}\n{r}");
            assert!(!r.checks.iter().any(|c| c.check == "no W-detection from D1 or U"));
        }
    }

    #[test]
    fn safety_catches_adjacent_winners() {
        let g = Graph::from_edges(2, &[(0, 1)]).unwrap();
        let mut t = exec(&g, &Schedule::new(), 1, StopPolicy::default());
        let last = t.records.last_mut().unwrap();
        let w = MisState::W.id();
        for s in &mut last.steps {
            s.before = w;
            s.after = Some(w);
        }
        let r = check_safety(&t);
        assert_eq!(r.verdict, Verdict::Fail { round: last_round(&t), detail: "output configuration is not an MIS".into() });
    }

    #[test]
    fn stability_catches_moving_output() {
        let g = Graph::from_edges(2, &[(0, 1)]).unwrap();
        let mut t = exec(&g, &Schedule::new(), 1, StopPolicy::default());
        t.records.last_mut().unwrap().steps[0].after = Some(MisState::S.id());
        assert!(check_stability(&t).failed());
    }

    #[test]
    fn observation1_catches_greedy_non_affected() {
        let g = Graph::from_edges(2, &[(0, 1)]).unwrap();
        let mut t = exec(&g, &Schedule::new(), 2, StopPolicy::default());
        assert!(check_observation1(&t, &BTreeSet::new()).passed());
        t.records[3].steps[1].before = MisState::DPrime.id();
        let r = check_observation1(&t, &BTreeSet::new());
        assert_eq!(r.verdict, Verdict::Fail { round: 4, detail: "non-affected node 1 is in a greedy state".into() });
        assert!(check_observation1(&t, &BTreeSet::from([NodeId(1)])).passed());
    }

    #[test]
    fn liveness_under_budget_is_inconclusive() {
        let t = exec(&gnp(10, 0), &Schedule::new(), 0, StopPolicy::with_budget(1));
        let r = check_liveness(&t);
        assert!(matches!(r.verdict, Verdict::Inconclusive { .. }));
        assert!(verify_trace(&t).passed());
    }

    #[test]
    fn deleting_every_node_is_live() {
        let s = Schedule::new()
            .with(1, TopologyChange::NodeDelete { v: NodeId(0) })
            .with(2, TopologyChange::NodeDelete { v: NodeId(1) });
        let t = exec(&Graph::with_nodes(2), &s, 0, StopPolicy::default());
        assert_eq!(t.records.len(), 2);
        assert!(check_liveness(&t).passed());
        let mut cut = t.clone();
        cut.records.pop();
        cut.records[0].changes.clear();
        cut.schedule = Schedule::new().with(2, TopologyChange::NodeDelete { v: NodeId(1) });
        assert!(check_liveness(&cut).failed());
    }

    #[test]
    fn one_way_flow_catches_return() {
        let mut t = exec(&Graph::with_nodes(1), &Schedule::new(), 0, StopPolicy::default());
        t.records[3].steps[0].after = Some(MisState::D1.id());
        assert!(check_one_way_flow(&t).failed());
    }

    #[test]
    fn conformance_catches_forged_outcome() {
        let g = Graph::from_edges(2, &[(0, 1)]).unwrap();
        let mut t = exec(&g, &Schedule::new(), 4, StopPolicy::default());
        assert!(check_conformance(&t).passed());
        // round 1: S moves to D1 deterministically; claim it went to D2
        t.records[0].steps[0].after = Some(MisState::D2.id());
        t.records[0].steps[0].emission = Some(MisState::D2.letter());
        assert!(check_conformance(&t).failed());
    }

    #[test]
    fn verdict_serializes_with_status_tag() {
        let r = CheckReport::from_first("safety", Some((3, "x".into())));
        let js = serde_json::to_value(&r).unwrap();
        assert_eq!(js["status"], "fail");
        assert_eq!(js["round"], 3);
        assert_eq!(r.to_string(), "safety: FAIL at round 3: x");
    }

    fn last_round(t: &Trace) -> Round {
        t.records.last().unwrap().round
    }
}
