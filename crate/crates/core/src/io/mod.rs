//! File formats: graph edge lists, JSON-lines schedules, protocol files,
//! JSON-lines traces, JSON run reports and per-round CSV tables.

mod protocol;
mod trace;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use protocol::{export_protocol, import_protocol, ProtocolFile, RuleFile, PROTOCOL_FORMAT};
pub use trace::{read_trace, write_trace, TRACE_FORMAT};

use crate::engine::{EngineError, Trace};
use crate::metrics::{classify_rounds, RunReport};
use crate::topology::{Graph, NodeId, Round, Schedule, TopologyChange, TopologyError};

/// Schema line heading the per-round CSV.
pub const ROUNDS_SCHEMA: &str = "# stoneage-rounds/1";

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{}", path.display())]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("{0}")]
    Format(String),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn parse_err(line: usize, msg: impl Into<String>) -> IoError {
    IoError::Parse { line, msg: msg.into() }
}

pub fn read_file(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|source| IoError::File { path: path.to_path_buf(), source })
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), IoError> {
    fs::write(path, contents).map_err(|source| IoError::File { path: path.to_path_buf(), source })
}

/// Parses `n <count>` followed by one `u v` edge per line. Blank lines and
/// `#` comments are skipped.
pub fn parse_graph(text: &str) -> Result<Graph, IoError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());
    let (first, head) = lines.next().ok_or_else(|| parse_err(1, "empty graph file"))?;
    let n = match head.split_whitespace().collect::<Vec<_>>()[..] {
        ["n", count] => count.parse::<u32>().map_err(|_| parse_err(first, format!("bad node count '{count}'")))?,
        _ => return Err(parse_err(first, format!("expected 'n <count>', got '{head}'"))),
    };
    let mut g = Graph::with_nodes(n);
    for (line, l) in lines {
        let ids: Vec<&str> = l.split_whitespace().collect();
        let [u, v] = ids[..] else {
            return Err(parse_err(line, format!("expected 'u v', got '{l}'")));
        };
        let id = |s: &str| {
            s.parse::<u32>()
                .ok()
                .filter(|&x| x < n)
                .map(NodeId)
                .ok_or_else(|| parse_err(line, format!("bad node id '{s}' (n = {n})")))
        };
        g.add_edge(id(u)?, id(v)?).map_err(|e| parse_err(line, e.to_string()))?;
    }
    Ok(g)
}

/// Inverse of [`parse_graph`]; node ids must be `0..n`.
pub fn format_graph(g: &Graph) -> Result<String, IoError> {
    let n = g.node_count();
    if g.max_id().is_some_and(|m| m.index() + 1 != n) {
        return Err(IoError::Format("graph node ids are not contiguous from 0".into()));
    }
    let mut out = format!("n {n}\n");
    for (u, v) in g.edges() {
        writeln!(out, "{u} {v}").expect("string write");
    }
    Ok(out)
}

/// One schedule line: `{"round":3,"op":"edge_del","u":1,"v":2}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangeRecord {
    pub round: Round,
    pub op: String,
    pub u: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v: Option<u32>,
}

impl ChangeRecord {
    pub fn new(round: Round, change: &TopologyChange) -> Self {
        let (u, v) = match *change {
            TopologyChange::EdgeDelete { u, v } | TopologyChange::EdgeInsert { u, v } => (u.0, Some(v.0)),
            TopologyChange::NodeDelete { v } | TopologyChange::NodeInsert { v } => (v.0, None),
        };
        ChangeRecord { round, op: change.op_name().to_string(), u, v }
    }

    pub fn change(&self) -> Result<TopologyChange, String> {
        let (u, v) = (NodeId(self.u), self.v.map(NodeId));
        let edge = |v: Option<NodeId>| v.ok_or_else(|| format!("{} needs both u and v", self.op));
        let node = |v: Option<NodeId>| match v {
            None => Ok(()),
            Some(_) => Err(format!("{} takes only u", self.op)),
        };
        Ok(match self.op.as_str() {
            "edge_del" => TopologyChange::EdgeDelete { u, v: edge(v)? },
            "edge_ins" => TopologyChange::EdgeInsert { u, v: edge(v)? },
            "node_del" => node(v).map(|_| TopologyChange::NodeDelete { v: u })?,
            "node_ins" => node(v).map(|_| TopologyChange::NodeInsert { v: u })?,
            op => return Err(format!("unknown op '{op}'")),
        })
    }
}

pub(crate) fn schedule_records(s: &Schedule) -> Vec<ChangeRecord> {
    s.iter().map(|(r, c)| ChangeRecord::new(r, c)).collect()
}

pub(crate) fn schedule_from_records(records: &[ChangeRecord]) -> Result<Schedule, String> {
    let mut s = Schedule::new();
    let mut last = 0;
    for rec in records {
        if rec.round < last {
            return Err(format!("round {} after round {last}", rec.round));
        }
        last = rec.round;
        s.push(rec.round, rec.change()?).map_err(|e| e.to_string())?;
    }
    Ok(s)
}

/// One JSON record per line, rounds nondecreasing.
pub fn parse_schedule(text: &str) -> Result<Schedule, IoError> {
    let mut s = Schedule::new();
    let mut last = 0;
    for (i, l) in text.lines().enumerate() {
        let line = i + 1;
        if l.trim().is_empty() {
            continue;
        }
        let rec: ChangeRecord = serde_json::from_str(l).map_err(|e| parse_err(line, e.to_string()))?;
        if rec.round < last {
            return Err(parse_err(line, format!("round {} after round {last}", rec.round)));
        }
        last = rec.round;
        let change = rec.change().map_err(|m| parse_err(line, m))?;
        s.push(rec.round, change).map_err(|e| parse_err(line, e.to_string()))?;
    }
    Ok(s)
}

pub fn format_schedule(s: &Schedule) -> String {
    let mut out = String::new();
    for rec in schedule_records(s) {
        out.push_str(&serde_json::to_string(&rec).expect("plain record"));
        out.push('\n');
    }
    out
}

pub fn format_report(report: &RunReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

pub fn parse_report(text: &str) -> Result<RunReport, IoError> {
    Ok(serde_json::from_str(text)?)
}

/// Per-round table: schema line, header, then one row per round with the
/// configuration the round resides in. Active counts non-output nodes; W
/// and L count the yes and no states.
pub fn rounds_csv(trace: &Trace) -> String {
    let spec = &trace.protocol;
    let silent = classify_rounds(trace).silent;
    let mut out = format!("{ROUNDS_SCHEMA}\nround,silent,active,w,l,changes\n");
    for (rec, quiet) in trace.records.iter().zip(silent) {
        let states = rec.steps.iter().map(|s| s.before);
        let (mut active, mut yes, mut no) = (0, 0, 0);
        for s in states {
            match s {
                s if s == spec.yes => yes += 1,
                s if s == spec.no => no += 1,
                _ => active += 1,
            }
        }
        writeln!(out, "{},{},{active},{yes},{no},{}", rec.round, u8::from(quiet), rec.changes.len()).expect("string write");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn graph_round_trip() {
        let g = Graph::from_edges(4, &[(0, 1), (1, 2), (0, 3)]).unwrap();
        let text = format_graph(&g).unwrap();
        assert_eq!(text, "n 4\n0 1\n0 3\n1 2\n");
        assert_eq!(parse_graph(&text).unwrap(), g);
    }

    #[test]
    fn graph_errors_carry_line_numbers() {
        let err = parse_graph("n 3\n0 1\n\n1 7\n").unwrap_err();
        assert!(matches!(err, IoError::Parse { line: 4, .. }), "{err}");
        let err = parse_graph("# comment\nnodes 3\n").unwrap_err();
        assert!(matches!(err, IoError::Parse { line: 2, .. }), "{err}");
        assert!(matches!(parse_graph("n 2\n0 1\n1 0\n"), Err(IoError::Parse { line: 3, .. })));
        assert!(matches!(parse_graph("n 2\n1 1\n"), Err(IoError::Parse { line: 2, .. })));
        assert!(parse_graph("").is_err());
    }

    #[test]
    fn gapped_graph_is_rejected() {
        let mut g = Graph::with_nodes(3);
        g.remove_node(NodeId(1)).unwrap();
        assert!(format_graph(&g).is_err());
    }

    #[test]
    fn schedule_round_trip() {
        let s = Schedule::new()
            .with(2, TopologyChange::EdgeDelete { u: NodeId(0), v: NodeId(1) })
            .with(2, TopologyChange::NodeInsert { v: NodeId(5) })
            .with(4, TopologyChange::NodeDelete { v: NodeId(2) });
        let text = format_schedule(&s);
        assert_eq!(text.lines().next().unwrap(), r#"{"round":2,"op":"edge_del","u":0,"v":1}"#);
        assert_eq!(parse_schedule(&text).unwrap(), s);
    }

    #[test]
    fn schedule_errors() {
        let bad = "{\"round\":3,\"op\":\"node_del\",\"u\":1}\n{\"round\":2,\"op\":\"node_del\",\"u\":2}\n";
        assert!(matches!(parse_schedule(bad), Err(IoError::Parse { line: 2, .. })));
        assert!(matches!(parse_schedule("{\"round\":1,\"op\":\"edge_ins\",\"u\":1}"), Err(IoError::Parse { line: 1, .. })));
        assert!(matches!(parse_schedule("{\"round\":0,\"op\":\"node_ins\",\"u\":1}"), Err(IoError::Parse { line: 1, .. })));
        assert!(matches!(parse_schedule("\n{\"round\":1,\"op\":\"flip\",\"u\":1}"), Err(IoError::Parse { line: 2, .. })));
        assert!(matches!(parse_schedule("{round:1}"), Err(IoError::Parse { line: 1, .. })));
        assert_eq!(parse_schedule("").unwrap(), Schedule::new());
    }

    #[test]
    fn missing_file_names_the_path() {
        let err = read_file(Path::new("/nonexistent/graph.txt")).unwrap_err();
        assert_eq!(err.to_string(), "/nonexistent/graph.txt");
        assert!(std::error::Error::source(&err).is_some());
    }
}
