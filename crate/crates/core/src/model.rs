//! Shared domain types: network graph, streams, frames, windows, schedules.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::time::{self, serde_dur, Dur, Instant};

pub type VertexId = usize;
pub type LinkId = usize;
pub type StreamId = usize;

/// Highest PCP; elevated frames are rewritten to it.
pub const ELEVATED_PCP: u8 = 7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VertexKind {
    Bridge,
    EndDevice,
    DsTt,
    NwTt,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vertex {
    pub name: String,
    pub kind: VertexKind,
}

impl Vertex {
    /// Bridges and TSN translators run PSFP; end devices do not.
    pub fn filters(&self) -> bool {
        self.kind != VertexKind::EndDevice
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinkKind {
    Wired,
    Wireless,
}

/// Directed link `(src, dst)`; the egress port lives at `src`.
///
/// Only the non-serialization parts of the delay are stored. For wired links
/// the per-frame bounds are `ser + prop + proc` and `ser + prop + proc +
/// proc_jitter`. Wireless links carry configured percentile bounds for the
/// whole logical-bridge hop.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Link {
    pub src: VertexId,
    pub dst: VertexId,
    pub kind: LinkKind,
    /// bits per second
    pub rate: u64,
    #[serde(with = "serde_dur", default)]
    pub prop_delay: Dur,
    #[serde(with = "serde_dur", default)]
    pub proc_delay: Dur,
    #[serde(with = "serde_dur", default)]
    pub proc_jitter: Dur,
    #[serde(with = "serde_dur", default)]
    pub wireless_d_min: Dur,
    #[serde(with = "serde_dur", default)]
    pub wireless_d_max: Dur,
    /// The receiving side buffers every frame until `d_max` after its
    /// transmission started, so stable delays are exactly `d_max`.
    #[serde(default)]
    pub hold_and_forward: bool,
}

impl Link {
    pub fn wired(src: VertexId, dst: VertexId, rate: u64) -> Self {
        Link {
            src,
            dst,
            kind: LinkKind::Wired,
            rate,
            prop_delay: 0,
            proc_delay: 0,
            proc_jitter: 0,
            wireless_d_min: 0,
            wireless_d_max: 0,
            hold_and_forward: false,
        }
    }

    pub fn wireless(src: VertexId, dst: VertexId, rate: u64, d_min: Dur, d_max: Dur) -> Self {
        Link {
            kind: LinkKind::Wireless,
            wireless_d_min: d_min,
            wireless_d_max: d_max,
            ..Link::wired(src, dst, rate)
        }
    }

    pub fn serialization(&self, size: u64) -> Dur {
        time::serialization(size, self.rate)
    }

    /// Lower bound on transmission start to arrival at `dst`.
    pub fn d_min(&self, size: u64) -> Dur {
        let ser = self.serialization(size);
        match self.kind {
            LinkKind::Wired => ser + self.prop_delay + self.proc_delay,
            LinkKind::Wireless => self.wireless_d_min.max(ser),
        }
    }

    /// Upper bound on transmission start to arrival at `dst` under stable conditions.
    pub fn d_max(&self, size: u64) -> Dur {
        let ser = self.serialization(size);
        match self.kind {
            LinkKind::Wired => ser + self.prop_delay + self.proc_delay + self.proc_jitter,
            LinkKind::Wireless => self.wireless_d_max.max(ser),
        }
    }

    /// How long one frame keeps the egress port busy for ordering purposes.
    ///
    /// Wired: `d_max`. Wireless: serialization only, since the logical 5G
    /// bridge buffers frames internally and delays them independently.
    pub fn occupancy(&self, size: u64) -> Dur {
        match self.kind {
            LinkKind::Wired => self.d_max(size),
            LinkKind::Wireless => self.serialization(size),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Network {
    pub vertices: Vec<Vertex>,
    pub links: Vec<Link>,
}

impl Network {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_vertex(&mut self, name: impl Into<String>, kind: VertexKind) -> VertexId {
        self.vertices.push(Vertex {
            name: name.into(),
            kind,
        });
        self.vertices.len() - 1
    }

    pub fn add_link(&mut self, link: Link) -> LinkId {
        self.links.push(link);
        self.links.len() - 1
    }

    /// Adds both directions of a full-duplex wired link.
    pub fn add_duplex(&mut self, a: VertexId, b: VertexId, rate: u64) -> (LinkId, LinkId) {
        (
            self.add_link(Link::wired(a, b, rate)),
            self.add_link(Link::wired(b, a, rate)),
        )
    }

    pub fn vertex_id(&self, name: &str) -> Option<VertexId> {
        self.vertices.iter().position(|v| v.name == name)
    }

    pub fn find_link(&self, src: VertexId, dst: VertexId) -> Option<LinkId> {
        self.links.iter().position(|l| l.src == src && l.dst == dst)
    }

    pub fn link_name(&self, id: LinkId) -> String {
        let l = &self.links[id];
        format!(
            "({},{})",
            self.vertices[l.src].name, self.vertices[l.dst].name
        )
    }

    pub fn out_links(&self, v: VertexId) -> impl Iterator<Item = LinkId> + '_ {
        self.links
            .iter()
            .enumerate()
            .filter(move |(_, l)| l.src == v)
            .map(|(i, _)| i)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, l) in self.links.iter().enumerate() {
            if l.src >= self.vertices.len() || l.dst >= self.vertices.len() {
                return Err(Error::Network(format!("link {i} references a missing vertex")));
            }
            if l.src == l.dst {
                return Err(Error::Network(format!("link {i} is a self-loop")));
            }
            if l.rate == 0 {
                return Err(Error::Network(format!("link {i} has zero rate")));
            }
            if l.prop_delay < 0 || l.proc_delay < 0 || l.proc_jitter < 0 {
                return Err(Error::Network(format!("link {i} has a negative delay")));
            }
            if l.kind == LinkKind::Wireless
                && (l.wireless_d_min < 0 || l.wireless_d_min > l.wireless_d_max)
            {
                return Err(Error::Network(format!(
                    "link {i} needs 0 <= d_min <= d_max"
                )));
            }
        }
        for (i, a) in self.links.iter().enumerate() {
            for b in &self.links[i + 1..] {
                if a.src == b.src && a.dst == b.dst {
                    return Err(Error::Network(format!(
                        "duplicate link {}",
                        self.link_name(i)
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Which frame indices (mod k) may be elevated.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct MuPattern {
    bits: Vec<bool>,
}

impl MuPattern {
    pub fn parse(s: &str) -> Result<Self> {
        if s.is_empty() {
            return Err(Error::MuPattern(s.to_string()));
        }
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => Err(Error::MuPattern(s.to_string())),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(MuPattern { bits })
    }

    /// `"0"`: never elevate.
    pub fn never() -> Self {
        MuPattern { bits: vec![false] }
    }

    /// `"1"`: every frame eligible.
    pub fn always() -> Self {
        MuPattern { bits: vec![true] }
    }

    pub fn k(&self) -> usize {
        self.bits.len()
    }

    pub fn m(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn bit(&self, pos: usize) -> bool {
        self.bits[pos]
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn is_never(&self) -> bool {
        self.m() == 0
    }
}

impl fmt::Display for MuPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.bits {
            f.write_str(if *b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for MuPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "mu={self}")
    }
}

impl TryFrom<String> for MuPattern {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        MuPattern::parse(&s)
    }
}

impl From<MuPattern> for String {
    fn from(m: MuPattern) -> String {
        m.to_string()
    }
}

/// A time-triggered stream. `links` is derived from `route`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stream {
    pub name: String,
    pub route: Vec<VertexId>,
    pub links: Vec<LinkId>,
    pub pcp: u8,
    #[serde(with = "serde_dur")]
    pub period: Dur,
    #[serde(with = "serde_dur")]
    pub phase: Dur,
    /// bits
    pub size: u64,
    #[serde(with = "serde_dur")]
    pub latency: Dur,
    pub mu: MuPattern,
}

impl Stream {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        network: &Network,
        name: impl Into<String>,
        route: Vec<VertexId>,
        pcp: u8,
        period: Dur,
        phase: Dur,
        size: u64,
        latency: Dur,
        mu: MuPattern,
    ) -> Result<Self> {
        let name = name.into();
        let err = |reason: String| Error::Stream {
            stream: name.clone(),
            reason,
        };
        if route.len() < 2 {
            return Err(err("route needs a talker and a listener".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for v in &route {
            if *v >= network.vertices.len() {
                return Err(err(format!("unknown vertex {v}")));
            }
            if !seen.insert(*v) {
                return Err(err("route is not a simple path".into()));
            }
        }
        let links = route
            .windows(2)
            .map(|w| {
                network.find_link(w[0], w[1]).ok_or_else(|| {
                    err(format!(
                        "no link {} -> {}",
                        network.vertices[w[0]].name, network.vertices[w[1]].name
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let s = Stream {
            name: name.clone(),
            route,
            links,
            pcp,
            period,
            phase,
            size,
            latency,
            mu,
        };
        s.check()?;
        Ok(s)
    }

    fn check(&self) -> Result<()> {
        let err = |reason: &str| Error::Stream {
            stream: self.name.clone(),
            reason: reason.into(),
        };
        if self.period <= 0 {
            return Err(err("period must be positive"));
        }
        if self.phase < 0 || self.phase >= self.period {
            return Err(err("phase must lie in [0, period)"));
        }
        if self.latency <= 0 || self.latency > self.period {
            return Err(err("latency must lie in (0, period]"));
        }
        if self.pcp >= ELEVATED_PCP {
            return Err(err("PCP 7 is reserved for elevated traffic"));
        }
        if self.size == 0 {
            return Err(err("frame size must be positive"));
        }
        Ok(())
    }

    /// Re-derives and validates `links` against a network (after loading from disk).
    pub fn revalidate(&self, network: &Network) -> Result<Stream> {
        Stream::new(
            network,
            self.name.clone(),
            self.route.clone(),
            self.pcp,
            self.period,
            self.phase,
            self.size,
            self.latency,
            self.mu.clone(),
        )
    }

    pub fn talker(&self) -> VertexId {
        self.route[0]
    }

    pub fn listener(&self) -> VertexId {
        *self.route.last().unwrap()
    }

    pub fn hops(&self) -> usize {
        self.links.len()
    }

    pub fn release(&self, i: i64) -> Instant {
        frame_release(self, i)
    }

    pub fn deadline(&self, i: i64) -> Instant {
        self.release(i) + self.latency
    }

    pub fn frames_per_hypercycle(&self, hypercycle: Dur) -> i64 {
        hypercycle / self.period
    }
}

/// `phase + i * period`, with 0-based frame indices.
pub fn frame_release(stream: &Stream, i: i64) -> Instant {
    stream.phase + i * stream.period
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FrameRef {
    pub stream: StreamId,
    pub index: i64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameInstance {
    pub frame: FrameRef,
    pub release: Instant,
}

impl FrameInstance {
    pub fn of(streams: &[Stream], frame: FrameRef) -> Self {
        FrameInstance {
            frame,
            release: streams[frame.stream].release(frame.index),
        }
    }
}

/// Strictly before `release + latency`.
pub fn meets_deadline(frame: &FrameInstance, arrival: Instant, latency: Dur) -> bool {
    arrival < frame.release + latency
}

pub fn hypercycle(streams: &[Stream]) -> Result<Dur> {
    hypercycle_of(streams.iter().map(|s| s.period))
}

pub fn hypercycle_of(periods: impl IntoIterator<Item = Dur>) -> Result<Dur> {
    let mut h: Option<Dur> = None;
    for p in periods {
        if p <= 0 {
            return Err(Error::Config("periods must be positive".into()));
        }
        h = Some(match h {
            None => p,
            Some(h) => time::lcm(h, p).ok_or(Error::HypercycleOverflow)?,
        });
    }
    h.ok_or_else(|| Error::Config("hypercycle of an empty stream set".into()))
}

/// Half-open `[start, end)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Window {
    pub start: Instant,
    pub end: Instant,
}

impl Window {
    pub fn new(start: Instant, end: Instant) -> Self {
        Window { start, end }
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn len(&self) -> Dur {
        (self.end - self.start).max(0)
    }

    pub fn contains(&self, t: Instant) -> bool {
        self.start <= t && t < self.end
    }

    pub fn overlaps(&self, other: &Window) -> bool {
        self.start < other.end && other.start < self.end
    }

    /// Maps an absolute window onto `[0, h)`, splitting at the wrap point.
    /// Windows of length >= h cover the whole cycle.
    pub fn normalize(&self, h: Dur) -> Vec<Window> {
        if self.is_empty() {
            return vec![];
        }
        if self.len() >= h {
            return vec![Window::new(0, h)];
        }
        let s = self.start.rem_euclid(h);
        let e = s + self.len();
        if e <= h {
            vec![Window::new(s, e)]
        } else {
            vec![Window::new(s, h), Window::new(0, e - h)]
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GclEntry {
    pub port: LinkId,
    pub queue: u8,
    pub window: Window,
    pub frame: Option<FrameRef>,
    /// Absolute start of the un-normalized window.
    #[serde(default)]
    pub origin: Instant,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PsfpAction {
    Forward,
    Elevate,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PsfpEntry {
    pub bridge: VertexId,
    pub stream: StreamId,
    pub window: Window,
    pub action: PsfpAction,
    /// Frame index within the PSFP cycle the window was emitted for.
    pub slot: i64,
    /// Absolute start of the un-normalized window; identifies the occurrence
    /// of a split window so a gate admits one frame per occurrence.
    pub origin: Instant,
}

/// Augmented (or primary) configuration. Gates repeat every `hypercycle`,
/// stream filters every `psfp_cycle` (a multiple of it, long enough for the
/// elevation patterns to repeat too; 0 means `hypercycle`).
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    #[serde(with = "serde_dur")]
    pub hypercycle: Dur,
    #[serde(default, with = "serde_dur")]
    pub psfp_cycle: Dur,
    pub gcl: BTreeMap<LinkId, Vec<GclEntry>>,
    pub psfp: BTreeMap<VertexId, Vec<PsfpEntry>>,
}

impl Schedule {
    pub fn new(hypercycle: Dur) -> Self {
        Schedule {
            hypercycle,
            psfp_cycle: hypercycle,
            ..Default::default()
        }
    }

    pub fn with_psfp_cycle(hypercycle: Dur, psfp_cycle: Dur) -> Self {
        Schedule {
            hypercycle,
            psfp_cycle,
            ..Default::default()
        }
    }

    pub fn psfp_period(&self) -> Dur {
        if self.psfp_cycle > 0 {
            self.psfp_cycle
        } else {
            self.hypercycle
        }
    }

    pub fn add_gcl(&mut self, port: LinkId, queue: u8, window: Window, frame: Option<FrameRef>) {
        for w in window.normalize(self.hypercycle) {
            self.gcl.entry(port).or_default().push(GclEntry {
                port,
                queue,
                window: w,
                frame,
                origin: window.start,
            });
        }
    }

    pub fn add_psfp(
        &mut self,
        bridge: VertexId,
        stream: StreamId,
        window: Window,
        action: PsfpAction,
        slot: i64,
    ) {
        for w in window.normalize(self.psfp_period()) {
            self.psfp.entry(bridge).or_default().push(PsfpEntry {
                bridge,
                stream,
                window: w,
                action,
                slot,
                origin: window.start,
            });
        }
    }

    pub fn gcl_entries(&self) -> impl Iterator<Item = &GclEntry> {
        self.gcl.values().flatten()
    }

    pub fn psfp_entries(&self) -> impl Iterator<Item = &PsfpEntry> {
        self.psfp.values().flatten()
    }

    /// PSFP windows of one (bridge, stream) must be pairwise disjoint.
    pub fn validate(&self) -> Result<()> {
        let h = self.hypercycle;
        if h <= 0 {
            return Err(Error::MalformedSchedule("hypercycle must be positive".into()));
        }
        for e in self.gcl_entries() {
            if e.window.is_empty() || e.window.start < 0 || e.window.end > h {
                return Err(Error::MalformedSchedule(format!(
                    "GCL window {:?} outside [0, {h})",
                    e.window
                )));
            }
            if e.queue > 7 {
                return Err(Error::MalformedSchedule(format!("queue {} > 7", e.queue)));
            }
        }
        let c = self.psfp_period();
        if c % h != 0 {
            return Err(Error::MalformedSchedule(format!(
                "PSFP cycle {c} is not a multiple of the hypercycle {h}"
            )));
        }
        for (bridge, entries) in &self.psfp {
            let mut by_stream: BTreeMap<StreamId, Vec<&PsfpEntry>> = BTreeMap::new();
            for e in entries {
                if e.window.is_empty() || e.window.start < 0 || e.window.end > c {
                    return Err(Error::MalformedSchedule(format!(
                        "PSFP window {:?} outside [0, {c})",
                        e.window
                    )));
                }
                by_stream.entry(e.stream).or_default().push(e);
            }
            for (stream, mut list) in by_stream {
                list.sort_by_key(|e| e.window);
                for pair in list.windows(2) {
                    if pair[0].window.overlaps(&pair[1].window) {
                        return Err(Error::MalformedSchedule(format!(
                            "overlapping PSFP windows {:?} and {:?} for stream {stream} at bridge {bridge}",
                            pair[0].window, pair[1].window
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// One frame-hop of a primary schedule: transmission starts at `start`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slot {
    pub frame: FrameRef,
    pub hop: usize,
    pub port: LinkId,
    pub start: Instant,
}

/// Time-driven input schedule: a transmission start for every frame-hop of
/// one hypercycle.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrimarySchedule {
    #[serde(with = "serde_dur")]
    pub hypercycle: Dur,
    pub slots: Vec<Slot>,
}

impl PrimarySchedule {
    pub fn start_of(&self, frame: FrameRef, hop: usize) -> Option<Instant> {
        self.slots
            .iter()
            .find(|s| s.frame == frame && s.hop == hop)
            .map(|s| s.start)
    }

    /// Every frame of every stream within one hypercycle, in (stream, index) order.
    pub fn frames(streams: &[Stream], hypercycle: Dur) -> Vec<FrameRef> {
        streams
            .iter()
            .enumerate()
            .flat_map(|(sid, s)| {
                (0..s.frames_per_hypercycle(hypercycle)).map(move |i| FrameRef {
                    stream: sid,
                    index: i,
                })
            })
            .collect()
    }

    /// Checks completeness and that every hop is consistent with its stream.
    pub fn validate(&self, network: &Network, streams: &[Stream]) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for s in &self.slots {
            let st = streams
                .get(s.frame.stream)
                .ok_or_else(|| Error::MalformedSchedule(format!("unknown stream {}", s.frame.stream)))?;
            if s.hop >= st.hops() || st.links[s.hop] != s.port {
                return Err(Error::MalformedSchedule(format!(
                    "slot {:?} does not match the route of {}",
                    s, st.name
                )));
            }
            if s.port >= network.links.len() {
                return Err(Error::MalformedSchedule(format!("unknown port {}", s.port)));
            }
            if !seen.insert((s.frame, s.hop)) {
                return Err(Error::MalformedSchedule(format!("duplicate slot {:?}", s)));
            }
        }
        for f in Self::frames(streams, self.hypercycle) {
            for hop in 0..streams[f.stream].hops() {
                if !seen.contains(&(f, hop)) {
                    return Err(Error::MalformedSchedule(format!(
                        "missing slot for {}#{} hop {hop}",
                        streams[f.stream].name, f.index
                    )));
                }
            }
        }
        Ok(())
    }
}
