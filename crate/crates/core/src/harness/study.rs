//! Simulation setup shared by the commands, and the schedulability sweep.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ScenarioConfig, SporadicClass};
use super::pipeline::{run_pipeline, Pipeline};
use super::scenario::{generate_scenario, Scenario};
use crate::augment_port::burst_time;
use crate::error::{Error, Result};
use crate::sim::{AdversarySpec, SimConfig};
use crate::time::Dur;

/// Simulation settings for a scheduled scenario.
///
/// With adversaries enabled every port with a bucket gets one that uses the
/// whole bucket, and the sporadic sources are left out so the elevated
/// traffic stays conformant.
pub fn sim_config(config: &ScenarioConfig, sc: &Scenario, p: &Pipeline, seed: u64, hypercycles: u64) -> SimConfig {
    let spec = &config.simulation;
    let mut cfg = SimConfig {
        hypercycles,
        seed,
        ..SimConfig::default()
    };
    if spec.adversaries {
        cfg.adversaries = p
            .buckets
            .values()
            .filter(|tb| !tb.is_zero())
            .map(|tb| AdversarySpec {
                bucket: tb.clone(),
                max_pause: spec.adversary_max_pause,
            })
            .collect();
    } else if spec.sporadics {
        cfg.sporadics = sc.sporadics.clone();
    }
    if let Some(max) = spec.clock_skew_max.filter(|&m| m > 0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_c10c);
        for v in 0..sc.network.vertices.len() {
            cfg.clock_skew.insert(v, rng.gen_range(-max..=max));
        }
    }
    cfg
}

/// Bound on the latency of one sporadic frame: per hop, the elevated
/// backlog, one blocking transmission and the link delay.
pub fn sporadic_latency_bound(sc: &Scenario, p: &Pipeline) -> Option<Dur> {
    let n = &sc.network;
    let max_size = sc
        .streams
        .iter()
        .map(|s| s.size)
        .chain(sc.sporadics.iter().map(|s| s.size))
        .max()?;
    sc.sporadics
        .iter()
        .map(|sp| {
            sp.links
                .iter()
                .map(|&l| {
                    let link = &n.links[l];
                    let burst = p.buckets.get(&l).map_or(0, |tb| burst_time(tb, link.rate));
                    burst + link.serialization(max_size) + link.d_max(sp.size)
                })
                .sum()
        })
        .max()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchedulabilityRow {
    pub sporadic_count: usize,
    pub instance: usize,
    pub seed: u64,
    /// A primary schedule was found.
    pub scheduled: bool,
    /// The augmented schedule meets every latency bound without wrapping.
    pub feasible: bool,
    pub min_slack_ns: Option<Dur>,
    pub max_prolongation_ns: Option<Dur>,
    pub max_jitter_bound_ns: Option<Dur>,
    pub sporadic_latency_bound_ns: Option<Dur>,
    pub detail: String,
}

impl SchedulabilityRow {
    pub const CSV_HEADER: &'static str = "sporadic_count,instance,seed,scheduled,feasible,min_slack_ns,max_prolongation_ns,max_jitter_bound_ns,sporadic_latency_bound_ns,detail";

    pub fn to_csv(&self) -> String {
        let o = |v: Option<Dur>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.sporadic_count,
            self.instance,
            self.seed,
            self.scheduled,
            self.feasible,
            o(self.min_slack_ns),
            o(self.max_prolongation_ns),
            o(self.max_jitter_bound_ns),
            o(self.sporadic_latency_bound_ns),
            csv_field(&self.detail)
        )
    }
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Instance seed: independent of the sweep position so that adding counts
/// leaves existing rows unchanged.
pub fn instance_seed(base: u64, count: usize, instance: usize) -> u64 {
    base.wrapping_mul(1_000_003)
        .wrapping_add((count as u64) << 32)
        .wrapping_add(instance as u64)
}

fn study_instance(config: &ScenarioConfig, count: usize, instance: usize, base: u64, min_ie: Dur) -> SchedulabilityRow {
    let seed = instance_seed(base, count, instance);
    let mut cfg = config.clone();
    let size = cfg.sporadic.first().map_or(100, |c| c.size_bytes);
    cfg.sporadic = vec![SporadicClass {
        prefix: "spo".into(),
        count,
        min_inter_events: vec![min_ie],
        size_bytes: size,
    }];
    let mut row = SchedulabilityRow {
        sporadic_count: count,
        instance,
        seed,
        scheduled: false,
        feasible: false,
        min_slack_ns: None,
        max_prolongation_ns: None,
        max_jitter_bound_ns: None,
        sporadic_latency_bound_ns: None,
        detail: String::new(),
    };
    let sc = match generate_scenario(&cfg, seed) {
        Ok(sc) => sc,
        Err(e) => {
            row.detail = e.to_string();
            return row;
        }
    };
    match run_pipeline(&sc) {
        Ok(p) => {
            row.scheduled = true;
            row.feasible = p.feasible();
            let r = &p.report.streams;
            row.min_slack_ns = r.iter().map(|s| s.slack).min();
            row.max_prolongation_ns = r.iter().map(|s| s.prolongation).max();
            row.max_jitter_bound_ns = r.iter().map(|s| s.jitter_bound).max();
            row.sporadic_latency_bound_ns = sporadic_latency_bound(&sc, &p);
            row.detail = p
                .report
                .failures()
                .next()
                .map(|f| format!("{} misses its bound", f.stream))
                .or_else(|| p.wrap_violations.first().cloned())
                .unwrap_or_default();
        }
        Err(e) => row.detail = e.to_string(),
    }
    row
}

/// Sweeps the sporadic source count; rows come back in sweep order no
/// matter how the work was spread over threads.
pub fn run_schedulability_study(config: &ScenarioConfig, seed: u64) -> Result<Vec<SchedulabilityRow>> {
    config.validate()?;
    let spec = config
        .schedulability
        .as_ref()
        .ok_or_else(|| Error::Config("missing [schedulability] section".into()))?;
    let jobs: Vec<(usize, usize)> = spec
        .sporadic_counts
        .iter()
        .flat_map(|&c| (0..spec.instances).map(move |i| (c, i)))
        .collect();
    Ok(jobs
        .par_iter()
        .map(|&(c, i)| study_instance(config, c, i, seed, spec.sporadic_min_inter_event))
        .collect())
}

/// Per sporadic count: (count, instances, scheduled, feasible).
pub fn summarize(rows: &[SchedulabilityRow]) -> Vec<(usize, usize, usize, usize)> {
    let mut out: Vec<(usize, usize, usize, usize)> = vec![];
    for r in rows {
        if out.last().map_or(true, |l| l.0 != r.sporadic_count) {
            out.push((r.sporadic_count, 0, 0, 0));
        }
        let l = out.last_mut().unwrap();
        l.1 += 1;
        l.2 += r.scheduled as usize;
        l.3 += r.feasible as usize;
    }
    out
}
