//! Transmission graphs of a primary schedule.
//!
//! One operation node per (frame, hop) of a hypercycle, a source and a sink.
//! Conjunctive edges chain the hops of a frame, disjunctive edges order the
//! operations of a port (stored compactly as per-port sequences) and FIFO
//! edges keep same-queue frames from overtaking each other upstream.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FrameRef, LinkId, Network, PrimarySchedule, Stream};
use crate::time::{Dur, Instant};

pub type NodeId = usize;

pub const SOURCE: NodeId = 0;
pub const SINK: NodeId = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpNode {
    pub frame: FrameRef,
    pub hop: usize,
    pub port: LinkId,
    pub pcp: u8,
    /// Transmission start in the input schedule.
    pub start: Instant,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Node {
    Source,
    Sink,
    Op(OpNode),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeKind {
    Conjunctive,
    Disjunctive,
    Fifo,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TgEdge {
    pub from: NodeId,
    pub to: NodeId,
    pub kind: EdgeKind,
    pub weight: Dur,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TransmissionGraph {
    pub nodes: Vec<Node>,
    /// Conjunctive and FIFO edges.
    pub edges: Vec<TgEdge>,
    /// Operations of each port in transmission order.
    pub port_seq: BTreeMap<LinkId, Vec<NodeId>>,
    /// Occupancy of each operation on its port (weight of its outgoing
    /// disjunctive edges).
    pub occupancy: Vec<Dur>,
    #[serde(skip)]
    succ: Vec<Vec<TgEdge>>,
    #[serde(skip)]
    index: HashMap<(FrameRef, usize), NodeId>,
}

impl TransmissionGraph {
    pub fn op(&self, id: NodeId) -> Option<&OpNode> {
        match &self.nodes[id] {
            Node::Op(o) => Some(o),
            _ => None,
        }
    }

    pub fn node_of(&self, frame: FrameRef, hop: usize) -> Option<NodeId> {
        self.index.get(&(frame, hop)).copied()
    }

    pub fn op_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.nodes.len()).filter(|&i| self.op(i).is_some())
    }

    /// Successors of a node, including the adjacent disjunctive edge.
    pub fn out_edges(&self, id: NodeId) -> &[TgEdge] {
        &self.succ[id]
    }

    /// Disjunctive edges between consecutive operations of each port.
    pub fn disjunctive_edges(&self) -> Vec<TgEdge> {
        self.port_seq
            .values()
            .flat_map(|seq| {
                seq.windows(2).map(|w| TgEdge {
                    from: w[0],
                    to: w[1],
                    kind: EdgeKind::Disjunctive,
                    weight: self.occupancy[w[0]],
                })
            })
            .collect()
    }

    /// Every ordered pair of operations sharing a port.
    pub fn disjunctive_closure(&self) -> Vec<TgEdge> {
        let mut out = vec![];
        for seq in self.port_seq.values() {
            for (i, &a) in seq.iter().enumerate() {
                for &b in &seq[i + 1..] {
                    out.push(TgEdge {
                        from: a,
                        to: b,
                        kind: EdgeKind::Disjunctive,
                        weight: self.occupancy[a],
                    });
                }
            }
        }
        out
    }

    pub fn all_edges(&self) -> impl Iterator<Item = &TgEdge> {
        self.succ.iter().flatten()
    }

    fn rebuild_succ(&mut self) {
        let mut succ = vec![vec![]; self.nodes.len()];
        for e in &self.edges {
            succ[e.from].push(*e);
        }
        for e in self.disjunctive_edges() {
            succ[e.from].push(e);
        }
        self.succ = succ;
        self.index = self
            .op_ids()
            .map(|i| {
                let o = self.op(i).unwrap();
                ((o.frame, o.hop), i)
            })
            .collect();
    }

    /// Edge list in Graphviz DOT.
    pub fn to_dot(&self, streams: &[Stream]) -> String {
        let mut s = String::from("digraph transmission {\n");
        for (i, n) in self.nodes.iter().enumerate() {
            let label = match n {
                Node::Source => "source".to_string(),
                Node::Sink => "sink".to_string(),
                Node::Op(o) => format!("{}#{} hop {}", streams[o.frame.stream].name, o.frame.index, o.hop),
            };
            let _ = writeln!(s, "  n{i} [label=\"{label}\"];");
        }
        for e in self.all_edges() {
            let style = match e.kind {
                EdgeKind::Conjunctive => "solid",
                EdgeKind::Disjunctive => "bold",
                EdgeKind::Fifo => "dashed",
            };
            let _ = writeln!(
                s,
                "  n{} -> n{} [label=\"{}\", style={style}];",
                e.from, e.to, e.weight
            );
        }
        s.push_str("}\n");
        s
    }
}

pub(crate) fn order_key(o: &OpNode) -> (Instant, std::cmp::Reverse<u8>, usize, i64) {
    (o.start, std::cmp::Reverse(o.pcp), o.frame.stream, o.frame.index)
}

pub fn build_graph(
    network: &Network,
    streams: &[Stream],
    primary: &PrimarySchedule,
) -> Result<TransmissionGraph> {
    primary.validate(network, streams)?;
    let mut nodes = vec![Node::Source, Node::Sink];
    let mut occupancy = vec![0, 0];
    let mut slots = primary.slots.clone();
    slots.sort_by_key(|s| (s.frame, s.hop));
    let mut index = HashMap::new();
    for s in &slots {
        let st = &streams[s.frame.stream];
        index.insert((s.frame, s.hop), nodes.len());
        nodes.push(Node::Op(OpNode {
            frame: s.frame,
            hop: s.hop,
            port: s.port,
            pcp: st.pcp,
            start: s.start,
        }));
        occupancy.push(network.links[s.port].occupancy(st.size));
    }

    let mut edges = vec![];
    for s in &slots {
        let st = &streams[s.frame.stream];
        let id = index[&(s.frame, s.hop)];
        if s.hop == 0 {
            edges.push(TgEdge {
                from: SOURCE,
                to: id,
                kind: EdgeKind::Conjunctive,
                weight: st.release(s.frame.index),
            });
        }
        let d_max = network.links[s.port].d_max(st.size);
        let to = if s.hop + 1 == st.hops() {
            SINK
        } else {
            index[&(s.frame, s.hop + 1)]
        };
        edges.push(TgEdge {
            from: id,
            to,
            kind: EdgeKind::Conjunctive,
            weight: d_max,
        });
    }

    let op = |id: NodeId| match &nodes[id] {
        Node::Op(o) => *o,
        _ => unreachable!(),
    };
    let mut port_seq: BTreeMap<LinkId, Vec<NodeId>> = BTreeMap::new();
    for id in 2..nodes.len() {
        port_seq.entry(op(id).port).or_default().push(id);
    }
    let mut position = vec![0usize; nodes.len()];
    for seq in port_seq.values_mut() {
        seq.sort_by_key(|&id| order_key(&op(id)));
        for (p, &id) in seq.iter().enumerate() {
            position[id] = p;
        }
    }

    let name = |o: &OpNode| format!("{}#{}", streams[o.frame.stream].name, o.frame.index);
    for (&port, seq) in &port_seq {
        let mut last_in_class: [Option<NodeId>; 8] = [None; 8];
        for &b in seq {
            let ob = op(b);
            let Some(a) = last_in_class[ob.pcp as usize].replace(b) else {
                continue;
            };
            let oa = op(a);
            let violation = || Error::FifoViolation {
                first: name(&oa),
                second: name(&ob),
                port: network.link_name(port),
            };
            let (sa, sb) = (&streams[oa.frame.stream], &streams[ob.frame.stream]);
            match (oa.hop, ob.hop) {
                (0, 0) => {
                    let ka = (sa.release(oa.frame.index), oa.frame.stream, oa.frame.index);
                    let kb = (sb.release(ob.frame.index), ob.frame.stream, ob.frame.index);
                    if ka >= kb {
                        return Err(violation());
                    }
                }
                (0, j) => {
                    let prev_b = index[&(ob.frame, j - 1)];
                    let lb = &network.links[sb.links[j - 1]];
                    edges.push(TgEdge {
                        from: SOURCE,
                        to: prev_b,
                        kind: EdgeKind::Fifo,
                        weight: sa.release(oa.frame.index) - lb.d_min(sb.size) + 1,
                    });
                }
                (_, 0) => return Err(violation()),
                (i, j) => {
                    let prev_a = index[&(oa.frame, i - 1)];
                    let prev_b = index[&(ob.frame, j - 1)];
                    let (la_id, lb_id) = (sa.links[i - 1], sb.links[j - 1]);
                    let (la, lb) = (&network.links[la_id], &network.links[lb_id]);
                    if la_id == lb_id {
                        if position[prev_a] >= position[prev_b] {
                            return Err(violation());
                        }
                        if !reorder_free(la) {
                            edges.push(fifo_edge(prev_a, prev_b, la.d_max(sa.size) - lb.d_min(sb.size)));
                        }
                    } else {
                        edges.push(fifo_edge(prev_a, prev_b, la.d_max(sa.size) - lb.d_min(sb.size)));
                    }
                }
            }
        }
    }

    let mut g = TransmissionGraph {
        nodes,
        edges,
        port_seq,
        occupancy,
        succ: vec![],
        index: HashMap::new(),
    };
    g.rebuild_succ();
    topo_sort(&g)?;
    Ok(g)
}

/// The `+1` makes the follower arrive strictly after the leader even when
/// both hit their delay bounds.
fn fifo_edge(from: NodeId, to: NodeId, slack: Dur) -> TgEdge {
    TgEdge {
        from,
        to,
        kind: EdgeKind::Fifo,
        weight: slack + 1,
    }
}

/// Links whose delivery order always equals their transmission order.
fn reorder_free(link: &crate::model::Link) -> bool {
    link.hold_and_forward || (link.kind == crate::model::LinkKind::Wired && link.proc_jitter == 0)
}

/// Reverse DFS postorder; `Err(Cycle)` on a back edge.
pub fn topo_sort(g: &TransmissionGraph) -> Result<Vec<NodeId>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Active,
        Done,
    }
    let n = g.nodes.len();
    let mut mark = vec![Mark::New; n];
    let mut post = Vec::with_capacity(n);
    for root in 0..n {
        if mark[root] != Mark::New {
            continue;
        }
        let mut stack: Vec<(NodeId, usize)> = vec![(root, 0)];
        mark[root] = Mark::Active;
        while let Some((v, next)) = stack.last_mut() {
            let v = *v;
            if let Some(e) = g.succ[v].get(*next) {
                *next += 1;
                match mark[e.to] {
                    Mark::New => {
                        mark[e.to] = Mark::Active;
                        stack.push((e.to, 0));
                    }
                    Mark::Active => return Err(Error::Cycle),
                    Mark::Done => {}
                }
            } else {
                mark[v] = Mark::Done;
                post.push(v);
                stack.pop();
            }
        }
    }
    post.reverse();
    Ok(post)
}

/// Longest-path cost from the source for every node; `None` if unreachable.
pub fn critical_costs(g: &TransmissionGraph) -> Result<Vec<Option<Dur>>> {
    let order = topo_sort(g)?;
    let mut cost: Vec<Option<Dur>> = vec![None; g.nodes.len()];
    cost[SOURCE] = Some(0);
    for v in order {
        let Some(c) = cost[v] else { continue };
        for e in g.out_edges(v) {
            let cand = c + e.weight;
            if cost[e.to].map_or(true, |x| cand > x) {
                cost[e.to] = Some(cand);
            }
        }
    }
    Ok(cost)
}

pub fn critical_path_cost(g: &TransmissionGraph, node: NodeId) -> Result<Dur> {
    critical_costs(g)?[node].ok_or(Error::Unreachable(node))
}
