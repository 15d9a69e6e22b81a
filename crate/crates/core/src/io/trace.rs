use serde::{Deserialize, Serialize};

use super::{parse_err, schedule_from_records, schedule_records, ChangeRecord, IoError, ProtocolFile};
use crate::engine::{replay, LetterId, NodeStep, ProtocolSpec, RoundRecord, StateId, Termination, Trace, WorldState};
use crate::topology::{Graph, NodeId, Round};

pub const TRACE_FORMAT: &str = "stoneage-trace/1";

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Line {
    Header {
        format: String,
        seed: Option<u64>,
        protocol: ProtocolFile,
        initial: WorldFile,
        schedule: Vec<ChangeRecord>,
    },
    Round {
        round: Round,
        changes: Vec<ChangeRecord>,
        steps: Vec<StepFile>,
    },
    End {
        rounds: usize,
        termination: Termination,
    },
}

#[derive(Serialize, Deserialize)]
struct WorldFile {
    round: Round,
    nodes: Vec<NodeFile>,
}

#[derive(Serialize, Deserialize)]
struct NodeFile {
    id: u32,
    state: String,
    /// `(neighbor, letter)` per port.
    ports: Vec<(u32, String)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pending: Option<String>,
}

/// `next` is absent for a node deleted this round, `emit` for ε, and
/// `outcome` for a deterministic transition.
#[derive(Serialize, Deserialize)]
struct StepFile {
    node: u32,
    state: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    next: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    emit: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    outcome: Option<u8>,
}

fn world_file(w: &WorldState, spec: &ProtocolSpec) -> WorldFile {
    WorldFile {
        round: w.round(),
        nodes: w
            .nodes()
            .map(|n| NodeFile {
                id: n.id.0,
                state: spec.state_name(n.state).into(),
                ports: n.ports().iter().map(|p| (p.neighbor.0, spec.letter_name(p.letter).into())).collect(),
                pending: w.pending().get(&n.id).map(|&l| spec.letter_name(l).into()),
            })
            .collect(),
    }
}

struct Names<'a>(&'a ProtocolSpec);

impl Names<'_> {
    fn state(&self, line: usize, s: &str) -> Result<StateId, IoError> {
        self.0.state_id(s).ok_or_else(|| parse_err(line, format!("unknown state '{s}'")))
    }

    fn letter(&self, line: usize, s: &str) -> Result<LetterId, IoError> {
        self.0.letter_id(s).ok_or_else(|| parse_err(line, format!("unknown letter '{s}'")))
    }
}

fn world_from_file(f: &WorldFile, spec: &ProtocolSpec, line: usize) -> Result<WorldState, IoError> {
    let names = Names(spec);
    let mut g = Graph::new();
    for n in &f.nodes {
        g.add_node(NodeId(n.id)).map_err(|e| parse_err(line, e.to_string()))?;
    }
    for n in &f.nodes {
        for &(v, _) in &n.ports {
            if n.id < v {
                g.add_edge(NodeId(n.id), NodeId(v)).map_err(|e| parse_err(line, e.to_string()))?;
            }
        }
    }
    let mut w = WorldState::new(&g, spec)?;
    for n in &f.nodes {
        let u = NodeId(n.id);
        if g.degree(u) != n.ports.len() {
            return Err(parse_err(line, format!("ports of node {u} are not symmetric")));
        }
        w.set_state(u, names.state(line, &n.state)?)?;
        for (v, l) in &n.ports {
            w.set_port(u, NodeId(*v), names.letter(line, l)?)?;
        }
        w.set_pending(u, n.pending.as_deref().map(|l| names.letter(line, l)).transpose()?);
    }
    w.set_round(f.round);
    Ok(w)
}

/// One header line, one line per round, one trailer line.
pub fn write_trace(trace: &Trace) -> String {
    let spec = &trace.protocol;
    let lt = |l: LetterId| spec.letter_name(l).to_string();
    let mut lines = vec![Line::Header {
        format: TRACE_FORMAT.into(),
        seed: trace.seed,
        protocol: ProtocolFile::from_spec(spec),
        initial: world_file(&trace.initial, spec),
        schedule: schedule_records(&trace.schedule),
    }];
    lines.extend(trace.records.iter().map(|rec| Line::Round {
        round: rec.round,
        changes: rec.changes.iter().map(|c| ChangeRecord::new(rec.round, c)).collect(),
        steps: rec
            .steps
            .iter()
            .map(|s| StepFile {
                node: s.node.0,
                state: spec.state_name(s.before).into(),
                next: s.after.map(|a| spec.state_name(a).into()),
                emit: s.emission.map(lt),
                outcome: s.outcome,
            })
            .collect(),
    }));
    lines.push(Line::End { rounds: trace.records.len(), termination: trace.termination });
    let mut out = String::new();
    for l in &lines {
        out.push_str(&serde_json::to_string(l).expect("trace line serializes"));
        out.push('\n');
    }
    out
}

/// Parses a trace file and replays it to confirm it is self-consistent.
pub fn read_trace(text: &str) -> Result<Trace, IoError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l)).filter(|(_, l)| !l.trim().is_empty());
    let parse = |line: usize, l: &str| serde_json::from_str::<Line>(l).map_err(|e| parse_err(line, e.to_string()));
    let (line, first) = lines.next().ok_or_else(|| parse_err(1, "empty trace file"))?;
    let Line::Header { format, seed, protocol, initial, schedule } = parse(line, first)? else {
        return Err(parse_err(line, "expected header"));
    };
    if format != TRACE_FORMAT {
        return Err(parse_err(line, format!("unsupported trace format '{format}'")));
    }
    let spec = protocol.to_spec().map_err(|e| parse_err(line, e.to_string()))?;
    let initial = world_from_file(&initial, &spec, line)?;
    let schedule = schedule_from_records(&schedule).map_err(|m| parse_err(line, m))?;
    let names = Names(&spec);
    let mut records = Vec::new();
    let mut end = None;
    for (line, l) in lines {
        if end.is_some() {
            return Err(parse_err(line, "content after trailer"));
        }
        match parse(line, l)? {
            Line::Header { .. } => return Err(parse_err(line, "duplicate header")),
            Line::Round { round, changes, steps } => {
                let changes = changes
                    .iter()
                    .map(|c| c.change().map_err(|m| parse_err(line, m)))
                    .collect::<Result<_, _>>()?;
                let steps = steps
                    .iter()
                    .map(|s| {
                        Ok(NodeStep {
                            node: NodeId(s.node),
                            before: names.state(line, &s.state)?,
                            after: s.next.as_deref().map(|n| names.state(line, n)).transpose()?,
                            emission: s.emit.as_deref().map(|e| names.letter(line, e)).transpose()?,
                            outcome: s.outcome,
                        })
                    })
                    .collect::<Result<_, IoError>>()?;
                records.push(RoundRecord { round, changes, steps });
            }
            Line::End { rounds, termination } => {
                if rounds != records.len() {
                    return Err(parse_err(line, format!("trailer says {rounds} rounds, found {}", records.len())));
                }
                end = Some(termination);
            }
        }
    }
    let termination = end.ok_or_else(|| parse_err(text.lines().count(), "missing trailer"))?;
    let trace = Trace { protocol: spec, seed, initial, schedule, records, termination };
    replay(&trace, |_, _| {})?;
    Ok(trace)
}
