//! Event-driven data plane: talkers, PSFP, gated strict-priority ports.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adversary::TokenBucketSource;
use super::delay::{sample_delay, DelayModel, EpochState};
use crate::error::{Error, Result};
use crate::model::{
    LinkId, LinkKind, Network, PsfpAction, PsfpEntry, Schedule, Stream, StreamId, VertexId,
    Window, ELEVATED_PCP,
};
use crate::time::{self, Dur, Instant};
use crate::token_bucket::{SporadicSpec, TokenBucket};
use crate::weakly_hard::eligible;

/// Elevated cross traffic injected straight into one port's PCP-7 queue.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AdversarySpec {
    pub bucket: TokenBucket,
    /// Upper bound of random idle gaps between emissions.
    #[serde(with = "time::serde_dur")]
    pub max_pause: Dur,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct SimConfig {
    pub hypercycles: u64,
    pub seed: u64,
    /// Per-link delay model; wired links without one use `d_min` plus a
    /// uniform processing jitter.
    #[serde(default)]
    pub delay_models: BTreeMap<LinkId, DelayModel>,
    /// Per (link, stream) override of the link model.
    #[serde(default)]
    pub delay_overrides: Vec<(LinkId, StreamId, DelayModel)>,
    /// Constant clock offset per device (local = global + skew).
    #[serde(default)]
    pub clock_skew: BTreeMap<VertexId, Dur>,
    #[serde(default)]
    pub adversaries: Vec<AdversarySpec>,
    /// Sporadic PCP-7 sources released at least `min_inter_event` apart.
    #[serde(default)]
    pub sporadics: Vec<SporadicSpec>,
    #[serde(default)]
    pub record_events: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiscardReason {
    OutsideWindow,
    BudgetExhausted,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Discard {
    pub vertex: VertexId,
    pub reason: DiscardReason,
    pub time: Instant,
    /// Frame index that consumed the gate budget first.
    pub displaced_by: Option<i64>,
}

/// Fate of one released frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub stream: StreamId,
    pub index: i64,
    pub release: Instant,
    pub arrival: Option<Instant>,
    pub discard: Option<Discard>,
    /// Vertex whose PSFP elevated the frame.
    pub elevated_at: Option<VertexId>,
    /// Sampled delay of the first wireless hop.
    pub wireless_delay: Option<Dur>,
}

impl FrameRecord {
    pub fn latency(&self) -> Option<Dur> {
        self.arrival.map(|a| a - self.release)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SporadicRecord {
    pub source: usize,
    pub release: Instant,
    pub arrival: Option<Instant>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    Release,
    Ingress,
    Forward,
    Elevate,
    Discard,
    Enqueue,
    TxStart,
    TxEnd,
    Arrival,
}

impl EventKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EventKind::Release => "release",
            EventKind::Ingress => "ingress",
            EventKind::Forward => "forward",
            EventKind::Elevate => "elevate",
            EventKind::Discard => "discard",
            EventKind::Enqueue => "enqueue",
            EventKind::TxStart => "tx_start",
            EventKind::TxEnd => "tx_end",
            EventKind::Arrival => "arrival",
        }
    }
}

/// Recorded event; `stream` is `None` for adversary and sporadic traffic.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimEvent {
    pub time: Instant,
    pub kind: EventKind,
    pub stream: Option<StreamId>,
    pub frame_index: i64,
    pub node: VertexId,
    pub pcp: u8,
    pub detail: String,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct SimTrace {
    #[serde(with = "time::serde_dur")]
    pub hypercycle: Dur,
    pub hypercycles: u64,
    /// Sorted by (stream, index).
    pub frames: Vec<FrameRecord>,
    pub sporadic: Vec<SporadicRecord>,
    pub events: Vec<SimEvent>,
    /// Frames still queued when the run stopped.
    pub stranded: usize,
    pub adversary_frames: u64,
}

#[derive(Clone, Copy, Debug)]
enum Origin {
    Frame(usize),
    Adversary,
    Sporadic(usize),
}

#[derive(Clone, Debug)]
struct Packet {
    origin: Origin,
    stream: Option<StreamId>,
    index: i64,
    size: u64,
    pcp: u8,
    /// index into the route links
    hop: usize,
    /// Frame whose windows this packet uses; a late frame admitted under a
    /// later frame's filter slot takes over that frame's windows.
    sched: i64,
    /// Scheduled frames wait here until their own window opens.
    hold: Instant,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Ev {
    TxEnd { port: LinkId, packet: usize },
    Release { stream: StreamId, index: i64 },
    Arrive { packet: usize, vertex: VertexId },
    Inject { adversary: usize },
    Sporadic { source: usize },
    Kick { port: LinkId },
}

impl Ev {
    /// Simultaneous releases enqueue in stream order; kicks go by port.
    fn tie(&self) -> u64 {
        match self {
            Ev::Release { stream, .. } => *stream as u64,
            Ev::Kick { port } | Ev::TxEnd { port, .. } => *port as u64,
            _ => 0,
        }
    }

    fn class(&self) -> u8 {
        match self {
            Ev::TxEnd { .. } => 0,
            Ev::Kick { .. } => 2,
            _ => 1,
        }
    }
}

#[derive(PartialEq, Eq)]
struct Queued {
    time: Instant,
    class: u8,
    tie: u64,
    seq: u64,
    ev: Ev,
}

impl Ord for Queued {
    fn cmp(&self, other: &Self) -> Ordering {
        (other.time, other.class, other.tie, other.seq).cmp(&(self.time, self.class, self.tie, self.seq))
    }
}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct Port {
    queues: [VecDeque<usize>; 8],
    busy: bool,
    kick_at: Option<Instant>,
    /// Merged open intervals per queue over `[0, 2H)`; `None` = always open.
    gates: Option<Vec<Vec<Window>>>,
}

fn merged_gates(h: Dur, windows: &[Window]) -> Vec<Window> {
    let mut w: Vec<Window> = windows
        .iter()
        .flat_map(|x| [*x, Window::new(x.start + h, x.end + h)])
        .collect();
    w.sort();
    let mut out: Vec<Window> = vec![];
    for x in w {
        match out.last_mut() {
            Some(last) if x.start <= last.end => last.end = last.end.max(x.end),
            _ => out.push(x),
        }
    }
    out
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent stream of randomness for one (purpose, a, b) triple.
pub(crate) fn sub_rng(seed: u64, tag: u64, a: u64, b: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(mix(mix(seed ^ mix(tag)) ^ a) ^ b))
}

const TAG_DELAY: u64 = 1;
const TAG_ADV: u64 = 2;
const TAG_SPORADIC: u64 = 3;

struct Engine<'a> {
    net: &'a Network,
    streams: &'a [Stream],
    cfg: &'a SimConfig,
    h: Dur,
    psfp_cycle: Dur,
    stop: Instant,
    heap: BinaryHeap<Queued>,
    seq: u64,
    ports: Vec<Port>,
    /// per (bridge, stream): entries sorted by window start
    psfp: HashMap<(VertexId, StreamId), Vec<PsfpEntry>>,
    /// (port, stream, slot) -> start of that frame's own window
    own_window: HashMap<(LinkId, StreamId, i64), Instant>,
    /// (bridge, stream, slot) -> (cycle, consumer index)
    budget: HashMap<(VertexId, StreamId, i64), (i64, i64)>,
    packets: Vec<Packet>,
    free: Vec<usize>,
    frames: Vec<FrameRecord>,
    sporadic: Vec<SporadicRecord>,
    events: Vec<SimEvent>,
    link_rngs: HashMap<(LinkId, u64), (ChaCha8Rng, EpochState)>,
    overrides: HashMap<(LinkId, StreamId), &'a DelayModel>,
    adversaries: Vec<(TokenBucketSource, ChaCha8Rng, LinkId, Option<u64>)>,
    sporadic_rngs: Vec<ChaCha8Rng>,
    adversary_frames: u64,
}

impl<'a> Engine<'a> {
    fn push(&mut self, time: Instant, ev: Ev) {
        self.seq += 1;
        self.heap.push(Queued {
            time,
            class: ev.class(),
            tie: ev.tie(),
            seq: self.seq,
            ev,
        });
    }

    fn skew(&self, v: VertexId) -> Dur {
        self.cfg.clock_skew.get(&v).copied().unwrap_or(0)
    }

    fn record(&mut self, time: Instant, kind: EventKind, packet: usize, node: VertexId, detail: String) {
        if !self.cfg.record_events {
            return;
        }
        let p = &self.packets[packet];
        self.events.push(SimEvent {
            time,
            kind,
            stream: p.stream,
            frame_index: p.index,
            node,
            pcp: p.pcp,
            detail,
        });
    }

    fn alloc(&mut self, p: Packet) -> usize {
        if let Some(i) = self.free.pop() {
            self.packets[i] = p;
            i
        } else {
            self.packets.push(p);
            self.packets.len() - 1
        }
    }

    fn route_link(&self, p: &Packet) -> Option<LinkId> {
        match p.origin {
            Origin::Frame(_) => self.streams[p.stream.unwrap()].links.get(p.hop).copied(),
            Origin::Sporadic(i) => self.cfg.sporadics[i].links.get(p.hop).copied(),
            Origin::Adversary => None,
        }
    }

    /// Global instant at which a scheduled frame's own window opens at `port`.
    fn hold_until(&self, packet: usize, port: LinkId) -> Instant {
        let p = &self.packets[packet];
        let (Origin::Frame(_), Some(sid)) = (p.origin, p.stream) else {
            return Instant::MIN;
        };
        if p.pcp == ELEVATED_PCP {
            return Instant::MIN;
        }
        let per = self.streams[sid].frames_per_hypercycle(self.h);
        let (q, slot) = (p.sched.div_euclid(per), p.sched.rem_euclid(per));
        match self.own_window.get(&(port, sid, slot)) {
            Some(&o) => o + q * self.h - self.skew(self.net.links[port].src),
            None => Instant::MIN,
        }
    }

    fn enqueue(&mut self, now: Instant, packet: usize, port: LinkId) {
        self.packets[packet].hold = self.hold_until(packet, port);
        let pcp = self.packets[packet].pcp as usize;
        self.ports[port].queues[pcp].push_back(packet);
        let src = self.net.links[port].src;
        self.record(now, EventKind::Enqueue, packet, src, format!("port={port} queue={pcp}"));
        if !self.ports[port].busy {
            self.kick(port, now);
        }
    }

    fn kick(&mut self, port: LinkId, at: Instant) {
        let p = &mut self.ports[port];
        if p.kick_at.map_or(true, |k| at < k) {
            p.kick_at = Some(at);
            self.push(at, Ev::Kick { port });
        }
    }

    /// Whether queue `q` may start a transmission of length `ser` at `now`.
    fn gate_allows(&self, port: LinkId, q: usize, now: Instant, ser: Dur) -> bool {
        if q == ELEVATED_PCP as usize {
            return true;
        }
        let Some(gates) = &self.ports[port].gates else {
            return true;
        };
        let x = (now + self.skew(self.net.links[port].src)).rem_euclid(self.h);
        let w = &gates[q];
        let i = w.partition_point(|g| g.start <= x);
        i > 0 && x < w[i - 1].end && x + ser <= w[i - 1].end
    }

    /// Earliest instant after `now` at which queue `q` could start `ser`.
    fn next_opening(&self, port: LinkId, q: usize, now: Instant, ser: Dur) -> Option<Instant> {
        let gates = self.ports[port].gates.as_ref()?;
        let x = (now + self.skew(self.net.links[port].src)).rem_euclid(self.h);
        gates[q]
            .iter()
            .filter(|g| g.end > x)
            .map(|g| (g.start.max(x), g.end))
            .find(|(s, e)| e - s >= ser && *s > x)
            .map(|(s, _)| now + (s - x))
    }

    /// Queue position and packet served next: the earliest hold, FIFO among
    /// equal holds. Without holds this is the plain FIFO head.
    fn head(&self, port: LinkId, q: usize) -> Option<(usize, usize)> {
        self.ports[port].queues[q]
            .iter()
            .enumerate()
            .min_by_key(|&(i, &pk)| (self.packets[pk].hold, i))
            .map(|(i, &pk)| (i, pk))
    }

    fn select(&mut self, port: LinkId, now: Instant) {
        if self.ports[port].busy {
            return;
        }
        let rate = self.net.links[port].rate;
        for q in (0..8).rev() {
            let Some((pos, head)) = self.head(port, q) else {
                continue;
            };
            let ser = time::serialization(self.packets[head].size, rate);
            if self.packets[head].hold <= now && self.gate_allows(port, q, now, ser) {
                self.ports[port].queues[q].remove(pos);
                self.transmit(port, head, now, ser);
                return;
            }
        }
        let mut next: Option<Instant> = None;
        for q in 0..8 {
            if let Some((_, head)) = self.head(port, q) {
                let ser = time::serialization(self.packets[head].size, rate);
                let from = self.packets[head].hold.max(now);
                let t = if self.gate_allows(port, q, from, ser) {
                    Some(from)
                } else {
                    self.next_opening(port, q, from, ser)
                };
                if let Some(t) = t.filter(|&t| t > now) {
                    next = Some(next.map_or(t, |n: Instant| n.min(t)));
                }
            }
        }
        if let Some(t) = next {
            self.kick(port, t);
        }
    }

    fn delay(&mut self, port: LinkId, packet: usize, now: Instant) -> Dur {
        let link = &self.net.links[port];
        let p = &self.packets[packet];
        let key = match p.origin {
            Origin::Frame(_) => p.stream.unwrap() as u64,
            Origin::Sporadic(i) => u64::MAX - i as u64,
            Origin::Adversary => u64::MAX / 2,
        };
        let ser = link.serialization(p.size);
        let d_min = link.d_min(p.size);
        let model = p
            .stream
            .and_then(|s| self.overrides.get(&(port, s)).copied())
            .or_else(|| self.cfg.delay_models.get(&port));
        let seed = self.cfg.seed;
        let (rng, state) = self
            .link_rngs
            .entry((port, key))
            .or_insert_with(|| (sub_rng(seed, TAG_DELAY, port as u64, key), EpochState::default()));
        let held = if link.hold_and_forward { link.d_max(p.size) } else { d_min };
        match (model, link.kind) {
            (Some(m), _) => sample_delay(m, rng, state, now).max(held).max(ser),
            (None, LinkKind::Wireless) => link.d_max(p.size),
            (None, LinkKind::Wired) => {
                if link.proc_jitter > 0 {
                    d_min + rng.gen_range(0..=link.proc_jitter)
                } else {
                    d_min
                }
            }
        }
    }

    fn transmit(&mut self, port: LinkId, packet: usize, now: Instant, ser: Dur) {
        self.ports[port].busy = true;
        let link = &self.net.links[port];
        let (src, dst, kind) = (link.src, link.dst, link.kind);
        self.record(now, EventKind::TxStart, packet, src, format!("port={port}"));
        self.push(now + ser, Ev::TxEnd { port, packet });
        if let Origin::Adversary = self.packets[packet].origin {
            return;
        }
        let d = self.delay(port, packet, now);
        if kind == LinkKind::Wireless {
            if let Origin::Frame(rec) = self.packets[packet].origin {
                self.frames[rec].wireless_delay.get_or_insert(d);
            }
        }
        self.packets[packet].hop += 1;
        self.push(now + d, Ev::Arrive { packet, vertex: dst });
    }

    fn release_frame(&mut self, now: Instant, stream: StreamId, index: i64) {
        let s = &self.streams[stream];
        let rec = self.frames.len();
        self.frames.push(FrameRecord {
            stream,
            index,
            release: s.release(index),
            arrival: None,
            discard: None,
            elevated_at: None,
            wireless_delay: None,
        });
        let pk = self.alloc(Packet {
            origin: Origin::Frame(rec),
            stream: Some(stream),
            index,
            size: s.size,
            pcp: s.pcp,
            hop: 0,
            sched: index,
            hold: Instant::MIN,
        });
        self.record(now, EventKind::Release, pk, s.talker(), String::new());
        let first = s.links[0];
        self.enqueue(now, pk, first);
        let next = index + 1;
        let t = s.release(next) - self.skew(s.talker());
        if s.release(next) < self.stop_release() {
            self.push(t, Ev::Release { stream, index: next });
        }
    }

    fn stop_release(&self) -> Instant {
        self.h * self.cfg.hypercycles as i64
    }

    fn psfp_verdict(&mut self, now: Instant, packet: usize, v: VertexId) -> Option<PsfpAction> {
        let Some(stream) = self.packets[packet].stream else {
            return Some(PsfpAction::Forward);
        };
        let Some(entries) = self.psfp.get(&(v, stream)) else {
            return Some(PsfpAction::Forward);
        };
        let local = now + self.skew(v);
        if self.packets[packet].pcp == ELEVATED_PCP {
            return self.elevated_verdict(now, local, packet, v, stream);
        }
        let c = self.psfp_cycle;
        let x = local.rem_euclid(c);
        let i = entries.partition_point(|e| e.window.start <= x);
        let hit = (i > 0 && x < entries[i - 1].window.end).then(|| entries[i - 1].clone());
        let Some(e) = hit else {
            self.discard(now, packet, v, DiscardReason::OutsideWindow, None);
            return None;
        };
        let n = local.div_euclid(c);
        let p = e.window.start;
        let occ_start = n * c + p - (p - e.origin.rem_euclid(c)).rem_euclid(c);
        let cycle = (occ_start - e.origin).div_euclid(c);
        let key = (v, stream, e.slot);
        let index = self.packets[packet].index;
        match self.budget.get(&key) {
            Some(&(c, by)) if c == cycle => {
                self.discard(now, packet, v, DiscardReason::BudgetExhausted, Some(by));
                None
            }
            _ => {
                self.budget.insert(key, (cycle, index));
                self.packets[packet].sched = cycle * (c / self.streams[stream].period) + e.slot;
                Some(e.action)
            }
        }
    }

    /// Frames elevated upstream keep PCP 7 and may run ahead of their
    /// schedule; they pass while some eligible frame of their stream is
    /// within `[release, release + L)`, sharing that frame's budget.
    fn elevated_verdict(
        &mut self,
        now: Instant,
        local: Instant,
        packet: usize,
        v: VertexId,
        stream: StreamId,
    ) -> Option<PsfpAction> {
        let s = &self.streams[stream];
        let i = (local - s.phase).div_euclid(s.period);
        if local >= s.release(i) + s.latency || !eligible(&s.mu, i) {
            self.discard(now, packet, v, DiscardReason::OutsideWindow, None);
            return None;
        }
        let per = self.psfp_cycle / s.period;
        let key = (v, stream, i.rem_euclid(per));
        let cycle = i.div_euclid(per);
        match self.budget.get(&key) {
            Some(&(c, by)) if c == cycle => {
                self.discard(now, packet, v, DiscardReason::BudgetExhausted, Some(by));
                None
            }
            _ => {
                let index = self.packets[packet].index;
                self.budget.insert(key, (cycle, index));
                Some(PsfpAction::Elevate)
            }
        }
    }

    fn discard(&mut self, now: Instant, packet: usize, v: VertexId, reason: DiscardReason, by: Option<i64>) {
        self.record(now, EventKind::Discard, packet, v, format!("{reason:?}"));
        if let Origin::Frame(rec) = self.packets[packet].origin {
            self.frames[rec].discard = Some(Discard {
                vertex: v,
                reason,
                time: now,
                displaced_by: by,
            });
        }
        self.free.push(packet);
    }

    fn arrive(&mut self, now: Instant, packet: usize, v: VertexId) {
        self.record(now, EventKind::Ingress, packet, v, String::new());
        let Some(next) = self.route_link(&self.packets[packet]) else {
            self.record(now, EventKind::Arrival, packet, v, String::new());
            match self.packets[packet].origin {
                Origin::Frame(rec) => self.frames[rec].arrival = Some(now),
                Origin::Sporadic(i) => {
                    // the oldest undelivered release of this source
                    if let Some(r) = self
                        .sporadic
                        .iter_mut()
                        .find(|r| r.source == i && r.release == self.packets[packet].index && r.arrival.is_none())
                    {
                        r.arrival = Some(now);
                    }
                }
                Origin::Adversary => {}
            }
            self.free.push(packet);
            return;
        };
        if self.net.vertices[v].filters() {
            match self.psfp_verdict(now, packet, v) {
                None => return,
                Some(PsfpAction::Elevate) => {
                    self.packets[packet].pcp = ELEVATED_PCP;
                    if let Origin::Frame(rec) = self.packets[packet].origin {
                        self.frames[rec].elevated_at.get_or_insert(v);
                    }
                    self.record(now, EventKind::Elevate, packet, v, String::new());
                }
                Some(PsfpAction::Forward) => {
                    self.record(now, EventKind::Forward, packet, v, String::new());
                }
            }
        }
        self.enqueue(now, packet, next);
    }

    fn inject(&mut self, now: Instant, a: usize) {
        let (src, rng, port, pending) = &mut self.adversaries[a];
        let port = *port;
        let size = pending.take().expect("scheduled injection has a size");
        if let Some((t, next)) = src.next(now, rng) {
            *pending = Some(next);
            if t < self.stop_release() {
                self.push(t, Ev::Inject { adversary: a });
            }
        }
        self.adversary_frames += 1;
        let pk = self.alloc(Packet {
            origin: Origin::Adversary,
            stream: None,
            index: self.adversary_frames as i64,
            size,
            pcp: ELEVATED_PCP,
            hop: 0,
            sched: 0,
            hold: Instant::MIN,
        });
        self.enqueue(now, pk, port);
    }

    fn sporadic_release(&mut self, now: Instant, i: usize) {
        let spec = &self.cfg.sporadics[i];
        let size = spec.size;
        let gap = spec.min_inter_event;
        self.sporadic.push(SporadicRecord {
            source: i,
            release: now,
            arrival: None,
        });
        let pk = self.alloc(Packet {
            origin: Origin::Sporadic(i),
            stream: None,
            index: now,
            size,
            pcp: ELEVATED_PCP,
            hop: 0,
            sched: 0,
            hold: Instant::MIN,
        });
        let first = spec.links[0];
        self.enqueue(now, pk, first);
        let extra = self.sporadic_rngs[i].gen_range(0..=gap);
        let t = now + gap + extra;
        if t < self.stop_release() {
            self.push(t, Ev::Sporadic { source: i });
        }
    }

    fn run(&mut self) {
        while let Some(q) = self.heap.pop() {
            if q.time > self.stop {
                break;
            }
            let now = q.time;
            match q.ev {
                Ev::TxEnd { port, packet } => {
                    self.ports[port].busy = false;
                    let src = self.net.links[port].src;
                    self.record(now, EventKind::TxEnd, packet, src, format!("port={port}"));
                    if let Origin::Adversary = self.packets[packet].origin {
                        self.free.push(packet);
                    }
                    self.kick(port, now);
                }
                Ev::Release { stream, index } => self.release_frame(now, stream, index),
                Ev::Arrive { packet, vertex } => self.arrive(now, packet, vertex),
                Ev::Inject { adversary } => self.inject(now, adversary),
                Ev::Sporadic { source } => self.sporadic_release(now, source),
                Ev::Kick { port } => {
                    if self.ports[port].kick_at == Some(now) {
                        self.ports[port].kick_at = None;
                    }
                    self.select(port, now);
                }
            }
        }
    }
}

/// Runs `cfg.hypercycles` hypercycles of releases and drains the network.
pub fn run(network: &Network, schedule: &Schedule, streams: &[Stream], cfg: &SimConfig) -> Result<SimTrace> {
    schedule.validate()?;
    for m in cfg.delay_models.values().chain(cfg.delay_overrides.iter().map(|o| &o.2)) {
        m.validate()?;
    }
    let h = schedule.hypercycle;
    for s in &cfg.sporadics {
        if s.min_inter_event <= 0 || s.links.is_empty() {
            return Err(Error::Config(format!("invalid sporadic source {}", s.name)));
        }
    }

    let mut ports: Vec<Port> = (0..network.links.len())
        .map(|_| Port {
            queues: Default::default(),
            busy: false,
            kick_at: None,
            gates: None,
        })
        .collect();
    let mut own_window = HashMap::new();
    for (&port, entries) in &schedule.gcl {
        let mut per_q: Vec<Vec<Window>> = vec![vec![]; 8];
        for e in entries {
            per_q[e.queue as usize].push(e.window);
            if let Some(f) = e.frame {
                own_window.insert((port, f.stream, f.index), e.origin);
            }
        }
        ports[port].gates = Some(per_q.iter().map(|w| merged_gates(h, w)).collect());
    }
    let mut psfp: HashMap<(VertexId, StreamId), Vec<PsfpEntry>> = HashMap::new();
    for e in schedule.psfp_entries() {
        psfp.entry((e.bridge, e.stream)).or_default().push(e.clone());
    }
    for v in psfp.values_mut() {
        v.sort_by_key(|e| e.window);
    }

    let max_latency = streams.iter().map(|s| s.latency).max().unwrap_or(0);
    let horizon = h * cfg.hypercycles as i64;
    let mut eng = Engine {
        net: network,
        streams,
        cfg,
        h,
        psfp_cycle: schedule.psfp_period(),
        own_window,
        stop: horizon + 2 * h + 2 * max_latency,
        heap: BinaryHeap::new(),
        seq: 0,
        ports,
        psfp,
        budget: HashMap::new(),
        packets: vec![],
        free: vec![],
        frames: vec![],
        sporadic: vec![],
        events: vec![],
        link_rngs: HashMap::new(),
        overrides: cfg.delay_overrides.iter().map(|(l, s, m)| ((*l, *s), m)).collect(),
        adversaries: cfg
            .adversaries
            .iter()
            .enumerate()
            .map(|(i, a)| {
                (
                    TokenBucketSource::new(a.bucket.b, &a.bucket.r, 0, a.max_pause),
                    sub_rng(cfg.seed, TAG_ADV, i as u64, a.bucket.link as u64),
                    a.bucket.link,
                    None,
                )
            })
            .collect(),
        sporadic_rngs: (0..cfg.sporadics.len())
            .map(|i| sub_rng(cfg.seed, TAG_SPORADIC, i as u64, 0))
            .collect(),
        adversary_frames: 0,
    };
    if cfg.hypercycles > 0 {
        for (sid, s) in streams.iter().enumerate() {
            eng.push(s.release(0) - eng.skew(s.talker()), Ev::Release { stream: sid, index: 0 });
        }
        for a in 0..eng.adversaries.len() {
            let (src, rng, _, pending) = &mut eng.adversaries[a];
            if let Some((t, size)) = src.next(0, rng) {
                *pending = Some(size);
                eng.push(t, Ev::Inject { adversary: a });
            }
        }
        for i in 0..cfg.sporadics.len() {
            let gap = cfg.sporadics[i].min_inter_event;
            let t = eng.sporadic_rngs[i].gen_range(0..gap);
            eng.push(t, Ev::Sporadic { source: i });
        }
    }
    eng.run();

    let stranded = eng.frames.iter().filter(|f| f.arrival.is_none() && f.discard.is_none()).count();
    let mut frames = eng.frames;
    frames.sort_by_key(|f| (f.stream, f.index));
    Ok(SimTrace {
        hypercycle: h,
        hypercycles: cfg.hypercycles,
        frames,
        sporadic: eng.sporadic,
        events: eng.events,
        stranded,
        adversary_frames: eng.adversary_frames,
    })
}
