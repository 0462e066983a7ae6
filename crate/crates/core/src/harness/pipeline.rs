//! Primary schedule, buckets, augmentation and verification in one call.

use std::collections::BTreeMap;

use super::primary::schedule_primary_guarded;
use super::scenario::Scenario;
use crate::augment::{augment_multihop, verify_latency, Augmentation, LatencyReport};
use crate::augment_port::burst_time;
use crate::error::Result;
use crate::model::{LinkId, Network, PrimarySchedule, Stream};
use crate::tgraph::{build_graph, TransmissionGraph};
use crate::time::{format_duration, Instant};
use crate::token_bucket::{compute_buckets, SporadicSpec, TokenBucket};

#[derive(Clone, Debug)]
pub struct Pipeline {
    pub primary: PrimarySchedule,
    pub graph: TransmissionGraph,
    pub buckets: BTreeMap<LinkId, TokenBucket>,
    pub augmentation: Augmentation,
    pub report: LatencyReport,
    /// Ports whose augmented windows of one hypercycle do not fit in one
    /// hypercycle (plus the time to drain a burst).
    pub wrap_violations: Vec<String>,
}

impl Pipeline {
    pub fn feasible(&self) -> bool {
        self.report.all_pass() && self.wrap_violations.is_empty()
    }
}

/// Augments a given primary schedule.
pub fn augment_primary(
    network: &Network,
    streams: &[Stream],
    sporadics: &[SporadicSpec],
    primary: PrimarySchedule,
) -> Result<Pipeline> {
    let buckets = compute_buckets(network, streams, sporadics)?;
    let graph = build_graph(network, streams, &primary)?;
    let augmentation = augment_multihop(network, &graph, &buckets, streams, primary.hypercycle)?;
    let report = verify_latency(network, &graph, &augmentation, streams);
    let wrap_violations = wrap_violations(network, &graph, &augmentation, &buckets, primary.hypercycle);
    Ok(Pipeline {
        primary,
        graph,
        buckets,
        augmentation,
        report,
        wrap_violations,
    })
}

/// Schedules the isochronous streams around the expected bursts, then
/// augments.
pub fn run_pipeline(sc: &Scenario) -> Result<Pipeline> {
    let buckets = compute_buckets(&sc.network, &sc.streams, &sc.sporadics)?;
    let bursts = buckets
        .iter()
        .map(|(&l, tb)| (l, burst_time(tb, sc.network.links[l].rate)))
        .collect();
    let primary = schedule_primary_guarded(&sc.network, &sc.streams, &bursts)?;
    augment_primary(&sc.network, &sc.streams, &sc.sporadics, primary)
}

/// Per port: `max(theta + occ) + burst <= min(cost) + H`, so elevated
/// backlog drains before the next hypercycle's first window opens.
pub fn wrap_violations(
    network: &Network,
    graph: &TransmissionGraph,
    aug: &Augmentation,
    buckets: &BTreeMap<LinkId, TokenBucket>,
    h: crate::time::Dur,
) -> Vec<String> {
    let mut out = vec![];
    for (&port, seq) in &graph.port_seq {
        let link = &network.links[port];
        let first: Instant = seq.iter().map(|&id| aug.cost[id]).min().unwrap_or(0);
        let last: Instant = seq
            .iter()
            .map(|&id| aug.theta[id] + graph.occupancy[id])
            .max()
            .unwrap_or(0);
        let burst = buckets.get(&port).map_or(0, |tb| burst_time(tb, link.rate));
        if last + burst > first + h {
            out.push(format!(
                "{}: windows span {} of a {} hypercycle",
                network.link_name(port),
                format_duration(last + burst - first),
                format_duration(h)
            ));
        }
    }
    out
}
