//! 5G delay injection: bounded and unbounded degradations of the wireless
//! hop, with per-frame (delay, latency, verdict) rows.

use serde::{Deserialize, Serialize};

use super::config::{FiveGStudySpec, ScenarioConfig};
use super::pipeline::{run_pipeline, Pipeline};
use super::scenario::{generate_scenario, Scenario};
use super::study::{csv_field, sim_config};
use crate::augment_port::burst_time;
use crate::error::{Error, Result};
use crate::model::{LinkId, LinkKind, StreamId};
use crate::sim::{analyze, frames_of, run, DelayModel, EpochSchedule, Histogram, SimConfig, StreamStats};
use crate::time::{Dur, MS, US};
use crate::weakly_hard::eligible;

/// 90 % of the samples at or below this delay.
pub const P90: Dur = 7_710 * US;
pub const UPLINK_P99: Dur = 9_980 * US;
pub const DOWNLINK_P99: Dur = 11_037 * US;
pub const UPLINK_TAIL: Dur = 13_890 * US;

/// Long-tail delay distribution with the 90 % quantile at 7.71 ms, the 99 %
/// quantile at `p99` and the tail ending `p99 + 3.91 ms` (13.89 ms uplink).
pub fn synthetic_histogram(p99: Dur) -> Histogram {
    assert!(p99 > P90);
    Histogram::new(
        vec![(6 * MS, 0.30), (7 * MS, 0.60), (P90, 0.09), (p99, 0.01)],
        p99 + (UPLINK_TAIL - UPLINK_P99),
    )
    .expect("valid literal histogram")
}

/// Delay range given to one stream on one wireless link.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DelayPlan {
    pub stream: StreamId,
    pub link: LinkId,
    /// Worst-case start of the wireless transmission after release.
    pub offset: Dur,
    /// Sum over the remaining hops of `d_max`, burst and one blocking frame.
    pub residual: Dur,
    /// Sum over the remaining hops of `d_max` only.
    pub residual_d_max: Dur,
    pub lo: Dur,
    pub hi: Dur,
}

/// Bounded degradations: every unstable delay still lets an elevated frame
/// reach the listener before its deadline.
pub fn bounded_plans(sc: &Scenario, p: &Pipeline) -> Vec<DelayPlan> {
    let n = &sc.network;
    let max_size = sc.streams.iter().map(|s| s.size).chain(sc.sporadics.iter().map(|s| s.size)).max().unwrap_or(0);
    let mut plans = vec![];
    for (sid, s) in sc.streams.iter().enumerate() {
        for (hop, &l) in s.links.iter().enumerate() {
            let link = &n.links[l];
            if link.kind != LinkKind::Wireless {
                continue;
            }
            let offset = p
                .graph
                .op_ids()
                .filter_map(|id| {
                    let op = p.graph.op(id)?;
                    (op.frame.stream == sid && op.hop == hop).then(|| p.augmentation.theta[id] - s.release(op.frame.index))
                })
                .max()
                .unwrap_or(0);
            let rest = &s.links[hop + 1..];
            let residual_d_max: Dur = rest.iter().map(|&r| n.links[r].d_max(s.size)).sum();
            let residual: Dur = residual_d_max
                + rest
                    .iter()
                    .map(|&r| {
                        let rl = &n.links[r];
                        p.buckets.get(&r).map_or(0, |tb| burst_time(tb, rl.rate)) + rl.serialization(max_size)
                    })
                    .sum::<Dur>();
            let lo = link.d_max(s.size);
            let hi = (s.latency - offset - residual - 1).max(lo);
            plans.push(DelayPlan {
                stream: sid,
                link: l,
                offset,
                residual,
                residual_d_max,
                lo,
                hi,
            });
        }
    }
    plans
}

fn stable_model(spec: &FiveGStudySpec, sc: &Scenario, link: LinkId) -> Result<Histogram> {
    match &spec.histogram {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("histogram {path}: {e}")))?;
            Histogram::from_csv(&text, 100 * US)
        }
        None => {
            let d = sc.network.links[link].d_max(0);
            Ok(synthetic_histogram(d.max(P90 + 1)))
        }
    }
}

fn apply_plans(cfg: &mut SimConfig, spec: &FiveGStudySpec, sc: &Scenario, plans: &[DelayPlan]) -> Result<()> {
    for l in sc.wireless_links() {
        cfg.delay_models.insert(l, DelayModel::Histogram(stable_model(spec, sc, l)?));
    }
    for pl in plans {
        let epochs = EpochSchedule {
            stable_bound: sc.network.links[pl.link].d_max(sc.streams[pl.stream].size),
            unstable_interval: spec.unstable_interval,
            burst_len: spec.burst_len,
            unstable_lo: pl.lo,
            unstable_hi: pl.hi,
        };
        cfg.delay_overrides.push((
            pl.link,
            pl.stream,
            DelayModel::Epochal {
                stable: stable_model(spec, sc, pl.link)?,
                epochs,
            },
        ));
    }
    Ok(())
}

/// Stream given unbounded delays: the configured one, else the first
/// stream with a non-zero pattern whose wireless hop is fast enough for a
/// delayed frame to land in the next frame's window.
pub fn affected_stream(spec: &FiveGStudySpec, sc: &Scenario, plans: &[DelayPlan]) -> Result<StreamId> {
    if let Some(name) = &spec.unbounded_stream {
        return sc
            .streams
            .iter()
            .position(|s| &s.name == name)
            .filter(|&sid| plans.iter().any(|p| p.stream == sid))
            .ok_or_else(|| Error::Config(format!("unbounded_stream {name} does not cross a wireless link")));
    }
    plans
        .iter()
        .filter(|p| !sc.streams[p.stream].mu.is_never())
        .min_by_key(|p| (p.lo, p.stream))
        .map(|p| p.stream)
        .ok_or_else(|| Error::Config("no wireless stream with a non-zero pattern".into()))
}

/// Unbounded degradation for one stream: delays in
/// `[lo, max(lo, unbounded_hi)]`, `lo` defaulting to the link's `d_max`.
pub fn unbounded_plans(spec: &FiveGStudySpec, bounded: &[DelayPlan], affected: StreamId) -> Vec<DelayPlan> {
    bounded
        .iter()
        .map(|p| {
            if p.stream != affected {
                return p.clone();
            }
            let lo = spec.unbounded_lo.unwrap_or(p.lo);
            DelayPlan {
                lo,
                hi: spec.unbounded_hi.max(lo),
                ..p.clone()
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FrameVerdict {
    Met,
    ElevatedMet,
    Missed,
    Discarded,
}

impl FrameVerdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            FrameVerdict::Met => "met",
            FrameVerdict::ElevatedMet => "elevated+met",
            FrameVerdict::Missed => "missed",
            FrameVerdict::Discarded => "discarded",
        }
    }
}

/// One frame that crossed a wireless link.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FiveGRow {
    pub run: String,
    pub stream: String,
    pub index: i64,
    pub eligible: bool,
    pub delay_ns: Dur,
    pub latency_ns: Option<Dur>,
    pub verdict: FrameVerdict,
}

impl FiveGRow {
    pub const CSV_HEADER: &'static str = "run,stream,index,eligible,delay_ns,latency_ns,verdict";

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.run,
            csv_field(&self.stream),
            self.index,
            self.eligible,
            self.delay_ns,
            self.latency_ns.map(|l| l.to_string()).unwrap_or_default(),
            self.verdict.as_str()
        )
    }
}

#[derive(Clone, Debug)]
pub struct FiveGRun {
    pub plans: Vec<DelayPlan>,
    pub stats: Vec<StreamStats>,
    pub rows: Vec<FiveGRow>,
}

#[derive(Clone, Debug)]
pub struct FiveGStudy {
    pub scenario: Scenario,
    pub pipeline: Pipeline,
    pub affected: StreamId,
    pub bounded: FiveGRun,
    pub unbounded: FiveGRun,
}

/// Simulation settings with the stable 5G model on every wireless link and
/// the epochal model of each plan.
pub fn plan_sim_config(
    config: &ScenarioConfig,
    sc: &Scenario,
    p: &Pipeline,
    plans: &[DelayPlan],
    seed: u64,
    hypercycles: u64,
) -> Result<SimConfig> {
    let spec = config.five_g.clone().unwrap_or_default();
    let mut cfg = sim_config(config, sc, p, seed, hypercycles);
    apply_plans(&mut cfg, &spec, sc, plans)?;
    Ok(cfg)
}

fn simulate(
    label: &str,
    config: &ScenarioConfig,
    sc: &Scenario,
    p: &Pipeline,
    plans: Vec<DelayPlan>,
    seed: u64,
    hypercycles: u64,
) -> Result<FiveGRun> {
    let cfg = plan_sim_config(config, sc, p, &plans, seed, hypercycles)?;
    let trace = run(&sc.network, &p.augmentation.schedule, &sc.streams, &cfg)?;
    let stats = analyze(&trace, &sc.streams);
    let mut rows = vec![];
    for (sid, s) in sc.streams.iter().enumerate() {
        for f in frames_of(&trace, sid) {
            let Some(delay) = f.wireless_delay else { continue };
            let latency = f.latency();
            let verdict = match (f.discard, latency) {
                (Some(_), _) | (None, None) => FrameVerdict::Discarded,
                (None, Some(l)) if l >= s.latency => FrameVerdict::Missed,
                _ if f.elevated_at.is_some() => FrameVerdict::ElevatedMet,
                _ => FrameVerdict::Met,
            };
            rows.push(FiveGRow {
                run: label.into(),
                stream: s.name.clone(),
                index: f.index,
                eligible: eligible(&s.mu, f.index),
                delay_ns: delay,
                latency_ns: latency,
                verdict,
            });
        }
    }
    Ok(FiveGRun { plans, stats, rows })
}

/// Schedules the scenario for `seed` and simulates it twice with the same
/// seed: bounded degradations for every wireless stream, then unbounded
/// ones for a single stream.
pub fn run_5g_study(config: &ScenarioConfig, seed: u64, hypercycles: u64) -> Result<FiveGStudy> {
    config.validate()?;
    let spec = config
        .five_g
        .clone()
        .ok_or_else(|| Error::Config("missing [five_g] section".into()))?;
    let sc = generate_scenario(config, seed)?;
    if sc.wireless_links().is_empty() {
        return Err(Error::Config("the 5G study needs a topology with wireless links".into()));
    }
    let p = run_pipeline(&sc)?;
    if let Some(f) = p.report.failures().next() {
        return Err(Error::Infeasible {
            stream: f.stream.clone(),
            detail: "augmented worst-case latency exceeds the bound".into(),
        });
    }
    let bounded = bounded_plans(&sc, &p);
    let affected = affected_stream(&spec, &sc, &bounded)?;
    let unbounded = unbounded_plans(&spec, &bounded, affected);
    let b = simulate("bounded", config, &sc, &p, bounded, seed, hypercycles)?;
    let u = simulate("unbounded", config, &sc, &p, unbounded, seed, hypercycles)?;
    Ok(FiveGStudy {
        scenario: sc,
        pipeline: p,
        affected,
        bounded: b,
        unbounded: u,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::five_g_default;

    #[test]
    fn histogram_landmarks() {
        for p99 in [UPLINK_P99, DOWNLINK_P99] {
            let h = synthetic_histogram(p99);
            assert!((h.cdf(P90) - 0.90).abs() < 1e-12);
            assert!((h.cdf(p99) - 0.99).abs() < 1e-12);
            assert_eq!(h.quantile(0.90), P90);
            assert_eq!(h.quantile(0.99), p99);
        }
        assert_eq!(synthetic_histogram(UPLINK_P99).upper, UPLINK_TAIL);
    }

    #[test]
    fn bounded_plans_stay_below_the_deadline() {
        let sc = generate_scenario(&five_g_default(), 0).unwrap();
        let p = run_pipeline(&sc).unwrap();
        let plans = bounded_plans(&sc, &p);
        assert_eq!(plans.len(), 80);
        for pl in &plans {
            let s = &sc.streams[pl.stream];
            assert!(pl.lo <= pl.hi);
            assert!(pl.offset + pl.hi + pl.residual < s.latency);
            assert!(pl.residual >= pl.residual_d_max);
        }
    }

    #[test]
    fn unbounded_plan_touches_one_stream() {
        let cfg = five_g_default();
        let spec = cfg.five_g.clone().unwrap();
        let sc = generate_scenario(&cfg, 0).unwrap();
        let p = run_pipeline(&sc).unwrap();
        let b = bounded_plans(&sc, &p);
        let a = affected_stream(&spec, &sc, &b).unwrap();
        assert!(!sc.streams[a].mu.is_never());
        let u = unbounded_plans(&spec, &b, a);
        let changed: Vec<_> = b.iter().zip(&u).filter(|(x, y)| x != y).map(|(x, _)| x.stream).collect();
        assert_eq!(changed, vec![a]);
        let pa = u.iter().find(|p| p.stream == a).unwrap();
        assert_eq!(pa.lo, UPLINK_P99);
        assert_eq!(pa.hi, 30 * MS);
    }

    #[test]
    fn short_study_runs() {
        let mut cfg = five_g_default();
        cfg.five_g.as_mut().unwrap().unstable_interval = 200 * MS;
        let st = run_5g_study(&cfg, 0, 50).unwrap();
        assert!(!st.bounded.rows.is_empty());
        assert_eq!(st.bounded.rows.len(), st.unbounded.rows.len());
        assert!(st.bounded.rows.iter().any(|r| r.verdict == FrameVerdict::ElevatedMet));
        for r in st.bounded.rows.iter().filter(|r| r.eligible) {
            assert_ne!(r.verdict, FrameVerdict::Missed, "{r:?}");
            assert_ne!(r.verdict, FrameVerdict::Discarded, "{r:?}");
        }
    }
}
