//! Per-stream statistics and (m,k) verdicts over a simulation trace.

use serde::{Deserialize, Serialize};

use super::engine::{DiscardReason, FrameRecord, SimTrace};
use crate::model::{Stream, StreamId};
use crate::time::Dur;
use crate::weakly_hard::{check_mk, DeliveryTrace, MkRequirement, Outcome, Verdict};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamStats {
    pub stream: StreamId,
    pub name: String,
    pub frames: usize,
    pub delivered: usize,
    pub met: usize,
    pub missed: usize,
    pub discarded: usize,
    pub elevated: usize,
    /// On-time frames dropped because a late predecessor used their gate budget.
    pub masquerades: usize,
    pub max_latency: Option<Dur>,
    pub min_latency: Option<Dur>,
    /// Spread of latency over delivered frames.
    pub jitter: Option<Dur>,
    /// `None` for streams that may never be elevated.
    pub requirement: Option<MkRequirement>,
    pub verdict: Option<Verdict>,
}

impl StreamStats {
    pub fn miss_ratio(&self) -> f64 {
        if self.frames == 0 {
            0.0
        } else {
            self.missed as f64 / self.frames as f64
        }
    }
}

pub fn outcomes(stream: &Stream, frames: &[FrameRecord]) -> Vec<Outcome> {
    frames
        .iter()
        .map(|f| match f.latency() {
            Some(l) if l < stream.latency => Outcome::Met,
            _ => Outcome::Missed,
        })
        .collect()
}

/// Requirement guaranteed by a mu-pattern: `popcount(mu)` out of `len(mu)`.
pub fn requirement_of(stream: &Stream) -> Option<MkRequirement> {
    let m = stream.mu.m();
    (m > 0).then(|| MkRequirement::new(m, stream.mu.k()).expect("1 <= m <= k"))
}

pub fn analyze(trace: &SimTrace, streams: &[Stream]) -> Vec<StreamStats> {
    streams
        .iter()
        .enumerate()
        .map(|(sid, s)| {
            let lo = trace.frames.partition_point(|f| f.stream < sid);
            let hi = trace.frames.partition_point(|f| f.stream <= sid);
            let frames = &trace.frames[lo..hi];
            let outs = outcomes(s, frames);
            let lat: Vec<Dur> = frames.iter().filter_map(|f| f.latency()).collect();
            let (max_latency, min_latency) = (lat.iter().max().copied(), lat.iter().min().copied());
            let masquerades = frames
                .iter()
                .filter(|f| {
                    let Some(d) = f.discard else { return false };
                    d.reason == DiscardReason::BudgetExhausted
                        && d.displaced_by.is_some_and(|by| {
                            by < f.index
                                && frames
                                    .get((by - frames[0].index) as usize)
                                    .and_then(|p| p.wireless_delay)
                                    .is_some_and(|w| w > s.period)
                        })
                })
                .count();
            let requirement = requirement_of(s);
            let verdict = requirement.map(|req| {
                check_mk(
                    &DeliveryTrace {
                        stream: sid,
                        outcomes: outs.clone(),
                    },
                    req,
                )
            });
            StreamStats {
                stream: sid,
                name: s.name.clone(),
                frames: frames.len(),
                delivered: lat.len(),
                met: outs.iter().filter(|o| **o == Outcome::Met).count(),
                missed: outs.iter().filter(|o| **o == Outcome::Missed).count(),
                discarded: frames.iter().filter(|f| f.discard.is_some()).count(),
                elevated: frames.iter().filter(|f| f.elevated_at.is_some()).count(),
                masquerades,
                max_latency,
                min_latency,
                jitter: max_latency.zip(min_latency).map(|(a, b)| a - b),
                requirement,
                verdict,
            }
        })
        .collect()
}

/// Frames of one stream, in index order.
pub fn frames_of(trace: &SimTrace, stream: StreamId) -> &[FrameRecord] {
    let lo = trace.frames.partition_point(|f| f.stream < stream);
    let hi = trace.frames.partition_point(|f| f.stream <= stream);
    &trace.frames[lo..hi]
}

/// Event log as CSV.
pub fn events_csv(trace: &SimTrace) -> String {
    let mut out = String::from("time_ns,event,stream,frame_index,node,pcp,detail\n");
    for e in &trace.events {
        let stream = e.stream.map(|s| s.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            e.time,
            e.kind.as_str(),
            stream,
            e.frame_index,
            e.node,
            e.pcp,
            e.detail
        ));
    }
    out
}
