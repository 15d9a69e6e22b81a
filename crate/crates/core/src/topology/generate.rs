use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{apply_change_in_place, Graph, NodeId, Round, Schedule, TopologyChange, TopologyError};

/// Graph families. Textual form: `kind:key=value,...`, e.g. `gnp:n=64,p=0.5`.
#[derive(Clone, Debug, PartialEq)]
pub enum GraphKind {
    Gnp { n: u32, p: f64 },
    Clique { n: u32 },
    Path { n: u32 },
    Ring { n: u32 },
    DisjointCliques { count: u32, size: u32 },
    /// Two G(size, p) clusters `A = 0..size` and `B = size..2·size`, joined
    /// by a path of `bridge` edges from node 0 to node `size`.
    Clusters { size: u32, p: f64, bridge: u32 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum ChangeOp {
    EdgeDelete,
    EdgeInsert,
    NodeDelete,
    NodeInsert,
}

impl ChangeOp {
    pub const ALL: [ChangeOp; 4] = [ChangeOp::EdgeDelete, ChangeOp::EdgeInsert, ChangeOp::NodeDelete, ChangeOp::NodeInsert];

    fn parse(s: &str) -> Result<Self, TopologyError> {
        match s {
            "edge_del" => Ok(ChangeOp::EdgeDelete),
            "edge_ins" => Ok(ChangeOp::EdgeInsert),
            "node_del" => Ok(ChangeOp::NodeDelete),
            "node_ins" => Ok(ChangeOp::NodeInsert),
            _ => Err(TopologyError::InvalidParam(format!("unknown change op '{s}'"))),
        }
    }

    fn name(self) -> &'static str {
        match self {
            ChangeOp::EdgeDelete => "edge_del",
            ChangeOp::EdgeInsert => "edge_ins",
            ChangeOp::NodeDelete => "node_del",
            ChangeOp::NodeInsert => "node_ins",
        }
    }
}

/// Schedule families. `none`, `random_mix:c=4,spacing=0,start=1,ops=edge_del+node_ins`,
/// `burst:c=2,round=5`.
#[derive(Clone, Debug, PartialEq)]
pub enum ScheduleKind {
    None,
    /// `count` changes, one per round starting at `start`, `spacing` idle
    /// rounds between consecutive changes.
    RandomMix {
        count: usize,
        spacing: u64,
        start: Round,
        ops: Vec<ChangeOp>,
        restrict: Option<BTreeSet<NodeId>>,
    },
    /// `count` changes all listed in `round`.
    Burst { count: usize, round: Round, ops: Vec<ChangeOp> },
}

struct Params<'a> {
    kind: &'a str,
    pairs: Vec<(&'a str, &'a str)>,
}

impl<'a> Params<'a> {
    fn parse(s: &'a str) -> Result<Self, TopologyError> {
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        let mut pairs = Vec::new();
        for item in rest.split(',').filter(|x| !x.trim().is_empty()) {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| TopologyError::InvalidParam(format!("expected key=value, got '{item}'")))?;
            pairs.push((k.trim(), v.trim()));
        }
        Ok(Params { kind: kind.trim(), pairs })
    }

    fn raw(&self, key: &str) -> Option<&'a str> {
        self.pairs.iter().find(|(k, _)| *k == key).map(|(_, v)| *v)
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, TopologyError> {
        self.raw(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|_| TopologyError::InvalidParam(format!("{}: bad value '{v}' for '{key}'", self.kind)))
            })
            .transpose()
    }

    fn req<T: FromStr>(&self, key: &str) -> Result<T, TopologyError> {
        self.get(key)?
            .ok_or_else(|| TopologyError::InvalidParam(format!("{}: missing parameter '{key}'", self.kind)))
    }

    fn ops(&self) -> Result<Vec<ChangeOp>, TopologyError> {
        match self.raw("ops") {
            None => Ok(ChangeOp::ALL.to_vec()),
            Some(v) => v.split('+').map(ChangeOp::parse).collect(),
        }
    }
}

impl FromStr for GraphKind {
    type Err = TopologyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let p = Params::parse(s)?;
        let kind = match p.kind {
            "gnp" => GraphKind::Gnp { n: p.req("n")?, p: p.req("p")? },
            "clique" => GraphKind::Clique { n: p.req("n")? },
            "path" => GraphKind::Path { n: p.req("n")? },
            "ring" => GraphKind::Ring { n: p.req("n")? },
            "disjoint_cliques" => GraphKind::DisjointCliques { count: p.req("k")?, size: p.req("size")? },
            "clusters" => GraphKind::Clusters { size: p.req("size")?, p: p.req("p")?, bridge: p.req("bridge")? },
            other => return Err(TopologyError::InvalidParam(format!("unknown graph kind '{other}'"))),
        };
        Ok(kind)
    }
}

impl fmt::Display for GraphKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphKind::Gnp { n, p } => write!(f, "gnp:n={n},p={p}"),
            GraphKind::Clique { n } => write!(f, "clique:n={n}"),
            GraphKind::Path { n } => write!(f, "path:n={n}"),
            GraphKind::Ring { n } => write!(f, "ring:n={n}"),
            GraphKind::DisjointCliques { count, size } => write!(f, "disjoint_cliques:k={count},size={size}"),
            GraphKind::Clusters { size, p, bridge } => write!(f, "clusters:size={size},p={p},bridge={bridge}"),
        }
    }
}

impl FromStr for ScheduleKind {
    type Err = TopologyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let p = Params::parse(s)?;
        let kind = match p.kind {
            "none" => ScheduleKind::None,
            "random_mix" => ScheduleKind::RandomMix {
                count: p.req("c")?,
                spacing: p.get("spacing")?.unwrap_or(0),
                start: p.get("start")?.unwrap_or(1),
                ops: p.ops()?,
                restrict: None,
            },
            "burst" => ScheduleKind::Burst { count: p.req("c")?, round: p.req("round")?, ops: p.ops()? },
            other => return Err(TopologyError::InvalidParam(format!("unknown schedule kind '{other}'"))),
        };
        Ok(kind)
    }
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ops = |ops: &[ChangeOp]| ops.iter().map(|o| o.name()).collect::<Vec<_>>().join("+");
        match self {
            ScheduleKind::None => write!(f, "none"),
            ScheduleKind::RandomMix { count, spacing, start, ops: o, .. } => {
                write!(f, "random_mix:c={count},spacing={spacing},start={start},ops={}", ops(o))
            }
            ScheduleKind::Burst { count, round, ops: o } => write!(f, "burst:c={count},round={round},ops={}", ops(o)),
        }
    }
}

fn check_p(p: f64) -> Result<(), TopologyError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(TopologyError::InvalidParam(format!("edge probability {p} outside [0, 1]")))
    }
}

fn add_gnp(g: &mut Graph, ids: &[u32], p: f64, rng: &mut ChaCha8Rng) {
    for (i, &u) in ids.iter().enumerate() {
        for &v in &ids[i + 1..] {
            if rng.gen_bool(p) {
                g.add_edge(NodeId(u), NodeId(v)).expect("fresh pair");
            }
        }
    }
}

fn add_clique(g: &mut Graph, ids: impl Iterator<Item = u32> + Clone) {
    for u in ids.clone() {
        for v in ids.clone().filter(|&v| v > u) {
            g.add_edge(NodeId(u), NodeId(v)).expect("fresh pair");
        }
    }
}

/// Deterministic for fixed `(kind, seed)`.
pub fn gen_graph(kind: &GraphKind, seed: u64) -> Result<Graph, TopologyError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = match *kind {
        GraphKind::Gnp { n, p } => {
            check_p(p)?;
            let mut g = Graph::with_nodes(n);
            add_gnp(&mut g, &(0..n).collect::<Vec<_>>(), p, &mut rng);
            g
        }
        GraphKind::Clique { n } => {
            let mut g = Graph::with_nodes(n);
            add_clique(&mut g, 0..n);
            g
        }
        GraphKind::Path { n } => {
            let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
            Graph::from_edges(n, &edges)?
        }
        GraphKind::Ring { n } => {
            if n < 3 {
                return Err(TopologyError::InvalidParam(format!("ring needs n >= 3, got {n}")));
            }
            let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
            Graph::from_edges(n, &edges)?
        }
        GraphKind::DisjointCliques { count, size } => {
            let mut g = Graph::with_nodes(count * size);
            for c in 0..count {
                add_clique(&mut g, c * size..(c + 1) * size);
            }
            g
        }
        GraphKind::Clusters { size, p, bridge } => {
            check_p(p)?;
            if size == 0 || bridge == 0 {
                return Err(TopologyError::InvalidParam("clusters need size >= 1 and bridge >= 1".into()));
            }
            let total = 2 * size + bridge - 1;
            let mut g = Graph::with_nodes(total);
            add_gnp(&mut g, &(0..size).collect::<Vec<_>>(), p, &mut rng);
            add_gnp(&mut g, &(size..2 * size).collect::<Vec<_>>(), p, &mut rng);
            let mut chain = vec![0];
            chain.extend(2 * size..total);
            chain.push(size);
            for w in chain.windows(2) {
                g.add_edge(NodeId(w[0]), NodeId(w[1]))?;
            }
            g
        }
    };
    Ok(g)
}

/// `ℓ` disjoint triangles `B_i = {3(i-1), 3(i-1)+1, 3(i-1)+2}`; node
/// `u_i = 3(i-1)` is deleted in round `2i - 1`.
pub fn gen_lower_bound(l: u32) -> Result<(Graph, Schedule), TopologyError> {
    if l < 1 {
        return Err(TopologyError::InvalidParam("lower bound instance needs l >= 1".into()));
    }
    let g = gen_graph(&GraphKind::DisjointCliques { count: l, size: 3 }, 0)?;
    let mut s = Schedule::new();
    for i in 1..=l {
        s.push(2 * i as Round - 1, TopologyChange::NodeDelete { v: NodeId(3 * (i - 1)) })?;
    }
    Ok((g, s))
}

struct Placer {
    graph: Graph,
    allowed: Option<BTreeSet<NodeId>>,
    next_fresh: u32,
    rng: ChaCha8Rng,
}

impl Placer {
    fn candidates(&self) -> Vec<NodeId> {
        match &self.allowed {
            Some(a) => a.iter().copied().filter(|v| self.graph.contains_node(*v)).collect(),
            None => self.graph.nodes().collect(),
        }
    }

    fn pick(&mut self, op: ChangeOp) -> Option<TopologyChange> {
        match op {
            ChangeOp::NodeInsert => {
                let v = NodeId(self.next_fresh);
                Some(TopologyChange::NodeInsert { v })
            }
            ChangeOp::NodeDelete => {
                let c = self.candidates();
                c.choose(&mut self.rng).map(|&v| TopologyChange::NodeDelete { v })
            }
            ChangeOp::EdgeDelete => {
                let allowed = &self.allowed;
                let edges: Vec<_> = self
                    .graph
                    .edges()
                    .filter(|(u, v)| allowed.as_ref().is_none_or(|a| a.contains(u) && a.contains(v)))
                    .collect();
                edges.choose(&mut self.rng).map(|&(u, v)| TopologyChange::EdgeDelete { u, v })
            }
            ChangeOp::EdgeInsert => {
                let c = self.candidates();
                if c.len() < 2 {
                    return None;
                }
                for _ in 0..64 {
                    let u = c[self.rng.gen_range(0..c.len())];
                    let v = c[self.rng.gen_range(0..c.len())];
                    if u != v && !self.graph.has_edge(u, v) {
                        return Some(TopologyChange::EdgeInsert { u: u.min(v), v: u.max(v) });
                    }
                }
                let mut free = Vec::new();
                for (i, &u) in c.iter().enumerate() {
                    for &v in &c[i + 1..] {
                        if !self.graph.has_edge(u, v) {
                            free.push((u, v));
                        }
                    }
                }
                free.choose(&mut self.rng).map(|&(u, v)| TopologyChange::EdgeInsert { u, v })
            }
        }
    }

    fn place(&mut self, ops: &[ChangeOp]) -> Option<TopologyChange> {
        let mut order = ops.to_vec();
        order.sort();
        order.dedup();
        order.shuffle(&mut self.rng);
        for op in order {
            if let Some(change) = self.pick(op) {
                apply_change_in_place(&mut self.graph, &change).expect("placer only emits applicable changes");
                if let TopologyChange::NodeInsert { v } = change {
                    self.next_fresh = v.0 + 1;
                    if let Some(a) = &mut self.allowed {
                        a.insert(v);
                    }
                }
                return Some(change);
            }
        }
        None
    }
}

/// Generates an applicable schedule with exactly the requested number of
/// changes; deterministic for fixed inputs.
pub fn gen_schedule(kind: &ScheduleKind, seed: u64, g1: &Graph) -> Result<Schedule, TopologyError> {
    let mut placer = Placer {
        graph: g1.clone(),
        allowed: None,
        next_fresh: g1.max_id().map_or(0, |v| v.0 + 1),
        rng: ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_5C4E_D01E),
    };
    let mut schedule = Schedule::new();
    let (count, ops, rounds): (usize, &[ChangeOp], Box<dyn Fn(usize) -> Round>) = match kind {
        ScheduleKind::None => return Ok(schedule),
        ScheduleKind::RandomMix { count, spacing, start, ops, restrict } => {
            if *start == 0 {
                return Err(TopologyError::RoundZero);
            }
            placer.allowed = restrict.clone();
            let (start, step) = (*start, spacing + 1);
            (*count, ops, Box::new(move |k| start + k as Round * step))
        }
        ScheduleKind::Burst { count, round, ops } => {
            if *round == 0 {
                return Err(TopologyError::RoundZero);
            }
            let round = *round;
            (*count, ops, Box::new(move |_| round))
        }
    };
    if ops.is_empty() {
        return Err(TopologyError::InvalidParam("empty change-op set".into()));
    }
    for k in 0..count {
        let change = placer.place(ops).ok_or_else(|| TopologyError::Unplaceable {
            placed: k,
            wanted: count,
            what: ops.iter().map(|o| o.name()).collect::<Vec<_>>().join("/"),
        })?;
        schedule.push(rounds(k), change)?;
    }
    Ok(schedule)
}
