//! Multi-hop augmentation over a transmission graph and latency verification.
//!
//! Operations are visited in topological order. Each keeps its critical cost
//! `C` (earliest start after deferment) and reads the per-port prolongation
//! variable `theta` (latest start under elevated interference). The single
//! port procedure in [`crate::augment_port`] is the special case of one port.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::augment_port::{burst_time, carry_over, elevate_window, forward_window};
use crate::error::{Error, Result};
use crate::model::{
    GclEntry, LinkId, Network, PsfpAction, PsfpEntry, Schedule, Stream, Window,
};
use crate::tgraph::{topo_sort, EdgeKind, Node, NodeId, TransmissionGraph};
use crate::time::{self, Dur, Instant};
use crate::token_bucket::{mu_hypercycle, TokenBucket};
use crate::weakly_hard::eligible;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Augmentation {
    pub schedule: Schedule,
    /// Critical cost per graph node (deferred earliest start).
    pub cost: Vec<Instant>,
    /// Worst-case transmission start per graph node.
    pub theta: Vec<Instant>,
    /// Entries of one hypercycle before normalization.
    pub gcl: Vec<GclEntry>,
    pub psfp: Vec<PsfpEntry>,
}

fn bucket<'a>(buckets: &'a BTreeMap<LinkId, TokenBucket>, port: LinkId, zero: &'a TokenBucket) -> &'a TokenBucket {
    buckets.get(&port).unwrap_or(zero)
}

pub fn augment_multihop(
    network: &Network,
    graph: &TransmissionGraph,
    buckets: &BTreeMap<LinkId, TokenBucket>,
    streams: &[Stream],
    hypercycle: Dur,
) -> Result<Augmentation> {
    for (&port, tb) in buckets {
        let rate = network.links[port].rate;
        if tb.r >= time::BitRate::from_integer(rate as i128) {
            return Err(Error::Saturated {
                link: network.link_name(port),
                rate_bps: time::rate_to_f64(&tb.r),
                link_rate: rate,
            });
        }
    }
    let order = topo_sort(graph)?;
    let n = graph.nodes.len();
    let mut cost: Vec<Instant> = graph
        .nodes
        .iter()
        .map(|node| match node {
            Node::Op(o) => o.start,
            _ => 0,
        })
        .collect();
    let mut theta_at = vec![0; n];
    let mut done = vec![false; n];
    let mut theta: BTreeMap<LinkId, Instant> = BTreeMap::new();
    let mut position = vec![0usize; n];
    for seq in graph.port_seq.values() {
        for (p, &id) in seq.iter().enumerate() {
            position[id] = p;
        }
    }
    let mut gcl = vec![];
    let mut psfp = vec![];
    // elevate windows of every frame, eligible in this hypercycle or not
    let mut elevate_all: Vec<PsfpEntry> = vec![];
    let raise = |cost: &mut Vec<Instant>, done: &[bool], to: NodeId, v: Instant| {
        debug_assert!(!done[to] || cost[to] >= v, "cost of a finished node changed");
        if v > cost[to] {
            cost[to] = v;
        }
    };

    for v in order {
        done[v] = true;
        let op = match &graph.nodes[v] {
            Node::Op(o) => *o,
            Node::Source => {
                for e in graph.out_edges(v) {
                    raise(&mut cost, &done, e.to, e.weight);
                }
                continue;
            }
            Node::Sink => continue,
        };
        let link = &network.links[op.port];
        let zero = TokenBucket::zero(op.port);
        let tb = bucket(buckets, op.port, &zero);
        let s = &streams[op.frame.stream];
        let occ = link.occupancy(s.size);
        let c = cost[v];

        // 1) prolongation
        let th = theta.entry(op.port).or_insert(Instant::MIN);
        *th = (*th).max(c + burst_time(tb, link.rate));
        let th_now = *th;
        theta_at[v] = th_now;

        // 2) entries
        gcl.push(GclEntry {
            port: op.port,
            queue: op.pcp,
            window: Window::new(c, th_now + occ),
            frame: Some(op.frame),
            origin: c,
        });
        if network.vertices[link.dst].filters() {
            let (d_min, d_max) = (link.d_min(s.size), link.d_max(s.size));
            let fw = forward_window(c, th_now, d_min, d_max);
            psfp.push(PsfpEntry {
                bridge: link.dst,
                stream: op.frame.stream,
                window: fw,
                action: PsfpAction::Forward,
                slot: op.frame.index,
                origin: fw.start,
            });
            if let Some(w) = elevate_window(s.release(op.frame.index), s.latency, th_now, d_max) {
                let e = PsfpEntry {
                    bridge: link.dst,
                    stream: op.frame.stream,
                    window: w,
                    action: PsfpAction::Elevate,
                    slot: op.frame.index,
                    origin: w.start,
                };
                if eligible(&s.mu, op.frame.index) {
                    psfp.push(e.clone());
                }
                elevate_all.push(e);
            }
        }

        // 3) deferment
        for e in graph.out_edges(v) {
            if e.kind != EdgeKind::Disjunctive {
                raise(&mut cost, &done, e.to, th_now + e.weight);
            }
        }
        let seq = &graph.port_seq[&op.port];
        let later = &seq[position[v] + 1..];
        for &w in later {
            let other = graph.op(w).expect("port sequences hold operations");
            let bound = if other.pcp <= op.pcp { c + occ } else { th_now + occ };
            raise(&mut cost, &done, w, bound);
        }
        if !later.is_empty() {
            *theta.get_mut(&op.port).unwrap() += carry_over(occ, tb, link.rate);
        }
    }

    // filters repeat once the elevation patterns do as well
    let cycle = time::lcm(hypercycle, mu_hypercycle(streams)?).ok_or(Error::HypercycleOverflow)?;
    let mut schedule = Schedule::with_psfp_cycle(hypercycle, cycle);
    for g in &gcl {
        schedule.add_gcl(g.port, g.queue, g.window, g.frame);
    }
    for q in 0..cycle / hypercycle {
        let shift = q * hypercycle;
        let forward = psfp.iter().filter(|p| p.action == PsfpAction::Forward);
        for p in forward.chain(&elevate_all) {
            let s = &streams[p.stream];
            let slot = p.slot + q * s.frames_per_hypercycle(hypercycle);
            if p.action == PsfpAction::Elevate && !eligible(&s.mu, slot) {
                continue;
            }
            let w = Window::new(p.window.start + shift, p.window.end + shift);
            schedule.add_psfp(p.bridge, p.stream, w, p.action, slot);
        }
    }
    Ok(Augmentation {
        schedule,
        cost,
        theta: theta_at,
        gcl,
        psfp,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamLatency {
    pub stream: String,
    /// max over frames of (worst arrival - release)
    #[serde(with = "time::serde_dur")]
    pub worst_latency: Dur,
    /// Same quantity for the unaugmented schedule.
    #[serde(with = "time::serde_dur")]
    pub primary_latency: Dur,
    #[serde(with = "time::serde_dur")]
    pub latency_bound: Dur,
    /// `latency_bound - worst_latency`; negative on failure.
    #[serde(with = "time::serde_dur")]
    pub slack: Dur,
    pub pass: bool,
    /// Spread of possible arrival offsets at the listener.
    #[serde(with = "time::serde_dur")]
    pub jitter_bound: Dur,
    /// max over frames of (worst-case start - primary start) at the last hop.
    #[serde(with = "time::serde_dur")]
    pub prolongation: Dur,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub streams: Vec<StreamLatency>,
}

impl LatencyReport {
    pub fn all_pass(&self) -> bool {
        self.streams.iter().all(|s| s.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &StreamLatency> {
        self.streams.iter().filter(|s| !s.pass)
    }
}

/// Worst-case end-to-end latency per stream: last-hop `theta + d_max`.
pub fn verify_latency(
    network: &Network,
    graph: &TransmissionGraph,
    aug: &Augmentation,
    streams: &[Stream],
) -> LatencyReport {
    #[derive(Default)]
    struct Acc {
        worst: Option<Dur>,
        primary: Option<Dur>,
        earliest: Option<Dur>,
        prolong: Dur,
    }
    let mut acc: Vec<Acc> = streams.iter().map(|_| Acc::default()).collect();
    for id in graph.op_ids() {
        let op = graph.op(id).unwrap();
        let s = &streams[op.frame.stream];
        if op.hop + 1 != s.hops() {
            continue;
        }
        let link = &network.links[op.port];
        let rel = s.release(op.frame.index);
        let a = &mut acc[op.frame.stream];
        let worst = aug.theta[id] + link.d_max(s.size) - rel;
        let primary = op.start + link.d_max(s.size) - rel;
        let early = aug.cost[id] + link.d_min(s.size) - rel;
        a.worst = Some(a.worst.map_or(worst, |x| x.max(worst)));
        a.primary = Some(a.primary.map_or(primary, |x| x.max(primary)));
        a.earliest = Some(a.earliest.map_or(early, |x| x.min(early)));
        a.prolong = a.prolong.max(aug.theta[id] - op.start);
    }
    let streams = streams
        .iter()
        .zip(acc)
        .map(|(s, a)| {
            let worst = a.worst.unwrap_or(0);
            StreamLatency {
                stream: s.name.clone(),
                worst_latency: worst,
                primary_latency: a.primary.unwrap_or(0),
                latency_bound: s.latency,
                slack: s.latency - worst,
                pass: worst < s.latency,
                jitter_bound: worst - a.earliest.unwrap_or(worst),
                prolongation: a.prolong,
            }
        })
        .collect();
    LatencyReport { streams }
}
