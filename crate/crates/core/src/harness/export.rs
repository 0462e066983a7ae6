//! Schedule text format and tabular writers.
//!
//! The schedule format is line oriented. `#` starts a comment, fields are
//! `key=value` pairs separated by blanks, and ids are authoritative (names are
//! informational and ignored when reading):
//!
//! ```text
//! schedule hypercycle=1000000 psfp-cycle=3000000
//! gcl port=3 link=(A0,A1) queue=5 window=1200..9200 origin=1200 frame=0:0
//! psfp bridge=4 name=A1 stream=0 stream-name=iso0 action=forward window=9200..17200 slot=0 origin=9200
//! ```
//!
//! Windows are half-open `[start, end)` in nanoseconds; GCL windows lie in
//! `[0, hypercycle)`, PSFP windows in `[0, psfp-cycle)`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use super::five_g::FiveGRow;
use super::study::{csv_field, SchedulabilityRow};
use crate::augment::StreamLatency;
use crate::error::{Error, Result};
use crate::model::{FrameRef, GclEntry, Network, PrimarySchedule, PsfpAction, PsfpEntry, Schedule, Stream, Window};
use crate::sim::{SimEvent, StreamStats};
use crate::time::Dur;
use crate::token_bucket::TokenBucket;
use crate::weakly_hard::Verdict;

pub fn schedule_text(schedule: &Schedule, network: &Network, streams: &[Stream]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "schedule hypercycle={} psfp-cycle={}",
        schedule.hypercycle,
        schedule.psfp_period()
    );
    for e in schedule.gcl_entries() {
        let frame = e.frame.map_or("-".to_string(), |f| format!("{}:{}", f.stream, f.index));
        let _ = writeln!(
            out,
            "gcl port={} link={} queue={} window={}..{} origin={} frame={}",
            e.port,
            network.link_name(e.port),
            e.queue,
            e.window.start,
            e.window.end,
            e.origin,
            frame
        );
    }
    for e in schedule.psfp_entries() {
        let action = match e.action {
            PsfpAction::Forward => "forward",
            PsfpAction::Elevate => "elevate",
        };
        let _ = writeln!(
            out,
            "psfp bridge={} name={} stream={} stream-name={} action={} window={}..{} slot={} origin={}",
            e.bridge,
            network.vertices.get(e.bridge).map_or("?", |v| v.name.as_str()),
            e.stream,
            streams.get(e.stream).map_or("?", |s| s.name.as_str()),
            action,
            e.window.start,
            e.window.end,
            e.slot,
            e.origin
        );
    }
    out
}

fn malformed(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::MalformedSchedule(format!("line {line}: {msg}"))
}

struct Fields<'a> {
    line: usize,
    map: BTreeMap<&'a str, &'a str>,
}

impl<'a> Fields<'a> {
    fn parse(line: usize, words: impl Iterator<Item = &'a str>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for w in words {
            let (k, v) = w.split_once('=').ok_or_else(|| malformed(line, format!("expected key=value, got `{w}`")))?;
            map.insert(k, v);
        }
        Ok(Fields { line, map })
    }

    fn raw(&self, key: &str) -> Result<&'a str> {
        self.map
            .get(key)
            .copied()
            .ok_or_else(|| malformed(self.line, format!("missing `{key}`")))
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<T> {
        let v = self.raw(key)?;
        v.parse()
            .map_err(|_| malformed(self.line, format!("bad value `{v}` for `{key}`")))
    }

    fn window(&self) -> Result<Window> {
        let v = self.raw("window")?;
        let (a, b) = v
            .split_once("..")
            .ok_or_else(|| malformed(self.line, format!("bad window `{v}`")))?;
        let parse = |x: &str| x.parse::<i64>().map_err(|_| malformed(self.line, format!("bad window `{v}`")));
        Ok(Window::new(parse(a)?, parse(b)?))
    }
}

/// Reads the text format back; the result is validated.
pub fn parse_schedule_text(text: &str) -> Result<Schedule> {
    let mut schedule: Option<Schedule> = None;
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        let mut words = content.split_whitespace();
        let Some(kind) = words.next() else { continue };
        let f = Fields::parse(line, words)?;
        if kind == "schedule" {
            if schedule.is_some() {
                return Err(malformed(line, "duplicate header"));
            }
            let h: Dur = f.get("hypercycle")?;
            let c: Dur = if f.map.contains_key("psfp-cycle") { f.get("psfp-cycle")? } else { h };
            schedule = Some(Schedule::with_psfp_cycle(h, c));
            continue;
        }
        let s = schedule.as_mut().ok_or_else(|| malformed(line, "entries before the `schedule` header"))?;
        match kind {
            "gcl" => {
                let frame = match f.raw("frame")? {
                    "-" => None,
                    v => {
                        let (a, b) = v.split_once(':').ok_or_else(|| malformed(line, format!("bad frame `{v}`")))?;
                        Some(FrameRef {
                            stream: a.parse().map_err(|_| malformed(line, format!("bad frame `{v}`")))?,
                            index: b.parse().map_err(|_| malformed(line, format!("bad frame `{v}`")))?,
                        })
                    }
                };
                let port = f.get("port")?;
                let window = f.window()?;
                s.gcl.entry(port).or_default().push(GclEntry {
                    port,
                    queue: f.get("queue")?,
                    window,
                    frame,
                    origin: if f.map.contains_key("origin") { f.get("origin")? } else { window.start },
                });
            }
            "psfp" => {
                let action = match f.raw("action")? {
                    "forward" => PsfpAction::Forward,
                    "elevate" => PsfpAction::Elevate,
                    other => return Err(malformed(line, format!("unknown action `{other}`"))),
                };
                let bridge = f.get("bridge")?;
                let window = f.window()?;
                s.psfp.entry(bridge).or_default().push(PsfpEntry {
                    bridge,
                    stream: f.get("stream")?,
                    window,
                    action,
                    slot: f.get("slot")?,
                    origin: if f.map.contains_key("origin") { f.get("origin")? } else { window.start },
                });
            }
            other => return Err(malformed(line, format!("unknown record `{other}`"))),
        }
    }
    let s = schedule.ok_or_else(|| Error::MalformedSchedule("missing `schedule` header".into()))?;
    s.validate()?;
    Ok(s)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    JsonLines,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::JsonLines => "jsonl",
        }
    }
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json-lines" | "jsonl" => Ok(Format::JsonLines),
            _ => Err(Error::Config(format!("unknown format `{s}` (csv or json-lines)"))),
        }
    }
}

/// A record that can be written as one CSV line or one JSON object.
pub trait Row: Serialize {
    fn header() -> &'static str;
    fn csv(&self) -> String;
}

pub fn render<R: Row>(rows: &[R], format: Format) -> Result<String> {
    let mut out = String::new();
    match format {
        Format::Csv => {
            out.push_str(R::header());
            out.push('\n');
            for r in rows {
                out.push_str(&r.csv());
                out.push('\n');
            }
        }
        Format::JsonLines => {
            for r in rows {
                out.push_str(&serde_json::to_string(r)?);
                out.push('\n');
            }
        }
    }
    Ok(out)
}

pub fn write_rows<R: Row>(path: &Path, rows: &[R], format: Format) -> Result<()> {
    std::fs::write(path, render(rows, format)?)?;
    Ok(())
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl Row for SchedulabilityRow {
    fn header() -> &'static str {
        Self::CSV_HEADER
    }
    fn csv(&self) -> String {
        self.to_csv()
    }
}

impl Row for FiveGRow {
    fn header() -> &'static str {
        Self::CSV_HEADER
    }
    fn csv(&self) -> String {
        self.to_csv()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SlotRow {
    pub stream: String,
    pub index: i64,
    pub hop: usize,
    pub link: String,
    pub start_ns: i64,
}

pub fn slot_rows(primary: &PrimarySchedule, network: &Network, streams: &[Stream]) -> Vec<SlotRow> {
    primary
        .slots
        .iter()
        .map(|s| SlotRow {
            stream: streams[s.frame.stream].name.clone(),
            index: s.frame.index,
            hop: s.hop,
            link: network.link_name(s.port),
            start_ns: s.start,
        })
        .collect()
}

impl Row for SlotRow {
    fn header() -> &'static str {
        "stream,index,hop,link,start_ns"
    }
    fn csv(&self) -> String {
        format!(
            "{},{},{},{},{}",
            csv_field(&self.stream),
            self.index,
            self.hop,
            csv_field(&self.link),
            self.start_ns
        )
    }
}

/// Token bucket of one port; the rate is exact as `rate_num / rate_den`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BucketRow {
    pub link: String,
    pub size_bits: u64,
    pub rate_num: i128,
    pub rate_den: i128,
    pub rate_bps: u64,
}

pub fn bucket_rows<'a>(buckets: impl IntoIterator<Item = &'a TokenBucket>, network: &Network) -> Vec<BucketRow> {
    buckets
        .into_iter()
        .map(|tb| BucketRow {
            link: network.link_name(tb.link),
            size_bits: tb.b,
            rate_num: *tb.r.numer(),
            rate_den: *tb.r.denom(),
            rate_bps: tb.r.ceil().to_integer() as u64,
        })
        .collect()
}

impl Row for BucketRow {
    fn header() -> &'static str {
        "link,size_bits,rate_num,rate_den,rate_bps"
    }
    fn csv(&self) -> String {
        format!(
            "{},{},{},{},{}",
            csv_field(&self.link),
            self.size_bits,
            self.rate_num,
            self.rate_den,
            self.rate_bps
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LatencyRow {
    pub stream: String,
    pub worst_latency_ns: Dur,
    pub primary_latency_ns: Dur,
    pub latency_bound_ns: Dur,
    pub slack_ns: Dur,
    pub prolongation_ns: Dur,
    pub jitter_bound_ns: Dur,
    pub pass: bool,
}

impl From<&StreamLatency> for LatencyRow {
    fn from(s: &StreamLatency) -> Self {
        LatencyRow {
            stream: s.stream.clone(),
            worst_latency_ns: s.worst_latency,
            primary_latency_ns: s.primary_latency,
            latency_bound_ns: s.latency_bound,
            slack_ns: s.slack,
            prolongation_ns: s.prolongation,
            jitter_bound_ns: s.jitter_bound,
            pass: s.pass,
        }
    }
}

impl Row for LatencyRow {
    fn header() -> &'static str {
        "stream,worst_latency_ns,primary_latency_ns,latency_bound_ns,slack_ns,prolongation_ns,jitter_bound_ns,pass"
    }
    fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            csv_field(&self.stream),
            self.worst_latency_ns,
            self.primary_latency_ns,
            self.latency_bound_ns,
            self.slack_ns,
            self.prolongation_ns,
            self.jitter_bound_ns,
            self.pass
        )
    }
}

/// Per-stream simulation summary. `verdict` is `pass`, `fail@<frame>` or
/// empty for streams without an (m,k) requirement.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct StatsRow {
    pub stream: String,
    pub frames: usize,
    pub delivered: usize,
    pub met: usize,
    pub missed: usize,
    pub discarded: usize,
    pub elevated: usize,
    pub masquerades: usize,
    pub max_latency_ns: Option<Dur>,
    pub min_latency_ns: Option<Dur>,
    pub jitter_ns: Option<Dur>,
    pub requirement: String,
    pub verdict: String,
}

impl From<&StreamStats> for StatsRow {
    fn from(s: &StreamStats) -> Self {
        StatsRow {
            stream: s.name.clone(),
            frames: s.frames,
            delivered: s.delivered,
            met: s.met,
            missed: s.missed,
            discarded: s.discarded,
            elevated: s.elevated,
            masquerades: s.masquerades,
            max_latency_ns: s.max_latency,
            min_latency_ns: s.min_latency,
            jitter_ns: s.jitter,
            requirement: s.requirement.map(|r| format!("{}/{}", r.m, r.k)).unwrap_or_default(),
            verdict: match s.verdict {
                Some(Verdict::Pass) => "pass".into(),
                Some(Verdict::Fail(i)) => format!("fail@{i}"),
                None => String::new(),
            },
        }
    }
}

impl Row for StatsRow {
    fn header() -> &'static str {
        "stream,frames,delivered,met,missed,discarded,elevated,masquerades,max_latency_ns,min_latency_ns,jitter_ns,requirement,verdict"
    }
    fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            csv_field(&self.stream),
            self.frames,
            self.delivered,
            self.met,
            self.missed,
            self.discarded,
            self.elevated,
            self.masquerades,
            opt(self.max_latency_ns),
            opt(self.min_latency_ns),
            opt(self.jitter_ns),
            self.requirement,
            self.verdict
        )
    }
}

impl Row for SimEvent {
    fn header() -> &'static str {
        "time_ns,event,stream,frame_index,node,pcp,detail"
    }
    fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.time,
            self.kind.as_str(),
            opt(self.stream),
            self.frame_index,
            self.node,
            self.pcp,
            csv_field(&self.detail)
        )
    }
}
