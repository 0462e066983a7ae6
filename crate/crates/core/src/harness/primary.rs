//! Greedy ASAP list scheduler producing primary schedules.
//!
//! Operations are placed in order of their worst-case ready time (then
//! priority, release, stream, frame), each at the earliest instant where the
//! port is free modulo the hypercycle. The placement is then run through the
//! zero-bucket augmentation until start times equal the critical costs of the
//! transmission graph.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap};

use crate::augment::{augment_multihop, verify_latency};
use crate::error::{Error, Result};
use crate::model::{hypercycle, FrameRef, LinkId, Network, PrimarySchedule, Slot, Stream};
use crate::tgraph::build_graph;
use crate::time::{format_duration, Dur, Instant};

/// Busy intervals of one port, normalized into `[0, h)` and tagged with the
/// priority of the reserving operation.
#[derive(Default)]
struct PortBusy {
    spans: Vec<(Instant, Instant, u8)>,
}

impl PortBusy {
    /// `guard` extends the candidate interval, but only against spans of a
    /// higher priority than `pcp`.
    fn conflict_end(&self, h: Dur, s: Instant, occ: Dur, pcp: u8, guard: Dur) -> Option<Instant> {
        let x = s.rem_euclid(h);
        let base = s - x;
        let mut end: Option<Instant> = None;
        for &(a, b, p) in &self.spans {
            let reach = if p > pcp { occ + guard } else { occ };
            for shift in [0, h] {
                let (a, b) = (a + shift, b + shift);
                if a < x + reach && x < b {
                    end = Some(end.map_or(b, |e: Instant| e.max(b)));
                }
            }
        }
        end.map(|e| base + e)
    }

    /// Earliest `s >= lb` such that `[s, s + occ)` is free modulo `h`.
    fn earliest(&self, h: Dur, lb: Instant, occ: Dur, pcp: u8, guard: Dur) -> Option<Instant> {
        let mut s = lb;
        while s - lb <= h {
            match self.conflict_end(h, s, occ, pcp, guard) {
                None => return Some(s),
                Some(e) => s = e,
            }
        }
        None
    }

    fn reserve(&mut self, h: Dur, s: Instant, occ: Dur, pcp: u8) {
        let x = s.rem_euclid(h);
        if x + occ <= h {
            self.spans.push((x, x + occ, pcp));
        } else {
            self.spans.push((x, h, pcp));
            self.spans.push((0, x + occ - h, pcp));
        }
    }
}

fn infeasible(s: &Stream, detail: String) -> Error {
    Error::Infeasible {
        stream: s.name.clone(),
        detail,
    }
}

/// Schedules every frame of one hypercycle; see the module docs.
pub fn schedule_primary(network: &Network, streams: &[Stream]) -> Result<PrimarySchedule> {
    schedule_primary_guarded(network, streams, &BTreeMap::new())
}

/// Like [`schedule_primary`], but priority classes are placed from the
/// highest down, and a lower-priority operation keeps the accumulated
/// `bursts` of its route so far clear of every higher-priority reservation
/// that follows it. Falls back to no guard where none fits.
pub fn schedule_primary_guarded(
    network: &Network,
    streams: &[Stream],
    bursts: &BTreeMap<LinkId, Dur>,
) -> Result<PrimarySchedule> {
    let h = hypercycle(streams)?;
    let mut classes: BTreeMap<Reverse<u8>, BinaryHeap<_>> = BTreeMap::new();
    for f in PrimarySchedule::frames(streams, h) {
        let s = &streams[f.stream];
        let rel = s.release(f.index);
        classes
            .entry(Reverse(s.pcp))
            .or_default()
            .push(Reverse((rel, rel, f.stream, f.index, 0usize)));
    }
    let mut busy: HashMap<LinkId, PortBusy> = HashMap::new();
    let mut last_in_class: HashMap<(LinkId, u8), Instant> = HashMap::new();
    let mut slots = vec![];
    for (_, mut heap) in classes {
        while let Some(Reverse((ready, rel, sid, index, hop))) = heap.pop() {
            let s = &streams[sid];
            let port = s.links[hop];
            let link = &network.links[port];
            let occ = link.occupancy(s.size);
            if occ > h {
                return Err(infeasible(s, format!("occupancy exceeds the hypercycle on {}", network.link_name(port))));
            }
            let guard: Dur = s.links[..=hop].iter().map(|l| bursts.get(l).copied().unwrap_or(0)).sum();
            let lb = last_in_class.get(&(port, s.pcp)).map_or(ready, |&l| ready.max(l + 1));
            let pb = busy.entry(port).or_default();
            let start = pb
                .earliest(h, lb, occ, s.pcp, guard)
                .filter(|&t| t - rel + link.d_max(s.size) < s.latency || guard == 0)
                .or_else(|| pb.earliest(h, lb, occ, s.pcp, 0))
                .ok_or_else(|| infeasible(s, format!("port {} is full", network.link_name(port))))?;
            pb.reserve(h, start, occ, s.pcp);
            last_in_class.insert((port, s.pcp), start);
            slots.push(Slot {
                frame: FrameRef { stream: sid, index },
                hop,
                port,
                start,
            });
            let arrive = start + link.d_max(s.size);
            if hop + 1 < s.hops() {
                heap.push(Reverse((arrive, rel, sid, index, hop + 1)));
            } else if arrive - rel >= s.latency {
                return Err(infeasible(
                    s,
                    format!(
                        "frame {index} arrives after {} (bound {})",
                        format_duration(arrive - rel),
                        format_duration(s.latency)
                    ),
                ));
            }
        }
    }
    let mut primary = PrimarySchedule { hypercycle: h, slots };
    settle(network, streams, &mut primary)?;
    Ok(primary)
}

/// Moves every start to its zero-bucket critical cost and re-checks ports
/// and deadlines.
fn settle(network: &Network, streams: &[Stream], primary: &mut PrimarySchedule) -> Result<()> {
    let h = primary.hypercycle;
    for _ in 0..16 {
        let g = build_graph(network, streams, primary)?;
        let aug = augment_multihop(network, &g, &BTreeMap::new(), streams, h)?;
        let mut changed = false;
        for id in g.op_ids() {
            let op = g.op(id).unwrap();
            if aug.cost[id] != op.start {
                changed = true;
                let slot = primary
                    .slots
                    .iter_mut()
                    .find(|s| s.frame == op.frame && s.hop == op.hop)
                    .expect("graph nodes come from slots");
                slot.start = aug.cost[id];
            }
        }
        if !changed {
            check_ports(network, streams, primary)?;
            let rep = verify_latency(network, &g, &aug, streams);
            if let Some(f) = rep.failures().next() {
                let s = streams.iter().find(|s| s.name == f.stream).unwrap();
                return Err(infeasible(
                    s,
                    format!(
                        "worst-case latency {} (bound {})",
                        format_duration(f.worst_latency),
                        format_duration(f.latency_bound)
                    ),
                ));
            }
            primary.slots.sort_by_key(|s| (s.frame, s.hop));
            return Ok(());
        }
    }
    Err(Error::Infeasible {
        stream: "*".into(),
        detail: "start times did not settle".into(),
    })
}

/// Port occupancies must not overlap modulo the hypercycle.
pub fn check_ports(network: &Network, streams: &[Stream], primary: &PrimarySchedule) -> Result<()> {
    let h = primary.hypercycle;
    let mut per_port: BTreeMap<LinkId, Vec<(Instant, Instant, &Slot)>> = BTreeMap::new();
    for slot in &primary.slots {
        let s = &streams[slot.frame.stream];
        let occ = network.links[slot.port].occupancy(s.size);
        let x = slot.start.rem_euclid(h);
        let v = per_port.entry(slot.port).or_default();
        v.push((x, x + occ, slot));
        v.push((x - h, x + occ - h, slot));
    }
    for (port, mut v) in per_port {
        v.sort_by_key(|e| (e.0, e.1));
        let mut end = Instant::MIN;
        for e in &v {
            if e.0 < end {
                let s = &streams[e.2.frame.stream];
                return Err(infeasible(
                    s,
                    format!("overlapping transmissions on {}", network.link_name(port)),
                ));
            }
            end = end.max(e.1);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{MuPattern, VertexKind};
    use crate::time::{MS, US};

    fn two_talkers() -> (Network, Vec<usize>) {
        let mut n = Network::new();
        let a = n.add_vertex("a", VertexKind::EndDevice);
        let c = n.add_vertex("c", VertexKind::EndDevice);
        let b = n.add_vertex("b", VertexKind::Bridge);
        let y = n.add_vertex("y", VertexKind::EndDevice);
        n.add_duplex(a, b, 100_000_000);
        n.add_duplex(c, b, 100_000_000);
        n.add_duplex(b, y, 100_000_000);
        (n, vec![a, c, b, y])
    }

    #[test]
    fn single_stream_starts_at_release() {
        let (n, v) = two_talkers();
        let s = Stream::new(&n, "s", vec![v[0], v[2]], 5, MS, 30 * US, 800, MS, MuPattern::never()).unwrap();
        let p = schedule_primary(&n, &[s]).unwrap();
        assert_eq!(p.slots.len(), 1);
        assert_eq!(p.slots[0].start, 30 * US);
    }

    #[test]
    fn colliding_streams_are_serialized() {
        let (n, v) = two_talkers();
        let mk = |name: &str, t| {
            Stream::new(&n, name, vec![t, v[2], v[3]], 5, MS, 0, 800, MS, MuPattern::never()).unwrap()
        };
        let streams = vec![mk("s0", v[0]), mk("s1", v[1])];
        let p = schedule_primary(&n, &streams).unwrap();
        let at = |sid, hop| p.start_of(FrameRef { stream: sid, index: 0 }, hop).unwrap();
        assert_eq!(at(0, 0), 0);
        // one nanosecond later so both arrivals at b are strictly ordered
        assert_eq!(at(1, 0), 1);
        let dmax = n.links[streams[0].links[1]].d_max(800);
        assert_eq!(at(0, 1), 8 * US);
        // the second frame waits for the first one's d_max on the shared port
        assert_eq!(at(1, 1), at(0, 1) + dmax);
    }

    #[test]
    fn infeasible_latency_is_reported() {
        let (n, v) = two_talkers();
        let s = Stream::new(&n, "tight", vec![v[0], v[2], v[3]], 5, MS, 0, 800, 10 * US, MuPattern::never()).unwrap();
        match schedule_primary(&n, &[s]) {
            Err(Error::Infeasible { stream, .. }) => assert_eq!(stream, "tight"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn periodic_reservations_wrap() {
        let mut b = PortBusy::default();
        b.reserve(100, 90, 20, 5);
        assert_eq!(b.spans, vec![(90, 100, 5), (0, 10, 5)]);
        assert_eq!(b.earliest(100, 0, 5, 5, 0), Some(10));
        assert_eq!(b.earliest(100, 85, 5, 5, 0), Some(85));
        assert_eq!(b.earliest(100, 88, 5, 5, 0), Some(110));
        assert_eq!(b.earliest(100, 85, 95, 5, 0), None);
    }

    #[test]
    fn guard_applies_to_higher_priority_only() {
        let mut b = PortBusy::default();
        b.reserve(100, 50, 10, 6);
        assert_eq!(b.earliest(100, 30, 5, 6, 20), Some(30));
        assert_eq!(b.earliest(100, 30, 5, 5, 20), Some(60));
        assert_eq!(b.earliest(100, 20, 5, 5, 20), Some(20));
    }
}
